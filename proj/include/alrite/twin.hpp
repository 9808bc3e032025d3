#pragma once

#include "alrite/common.hpp"

#include <span>

namespace alrite {

/// Mirror twins: for each sample, its nearest latent neighbour in the other arm.
struct TwinMap {
  IndexList twin_index;
  Vector twin_distance;  // Euclidean latent distance to the twin
  IndexList weight;      // votes received: number of samples whose twin this is
};

/// Exact nearest opposite-arm neighbour, ties to the smallest index.
/// Throws StructuralError when an arm is empty.
TwinMap mirror_twins(const Matrix& latent, std::span<const int> t);

/// Cross-pipeline votes: a control sample j counts treated samples whose twin
/// under latent1 is j; a treated sample j counts control samples whose twin
/// under latent0 is j. twin_index/twin_distance of sample i are taken under
/// the embedding of its own arm.
TwinMap cross_pipeline_weights(const Matrix& latent0, const Matrix& latent1,
                               std::span<const int> t);

struct ArmDistanceStats {
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
};

struct CounterfactualizabilitySummary {
  ArmDistanceStats control;
  ArmDistanceStats treated;
};

CounterfactualizabilitySummary counterfactualizability_summary(const TwinMap& twins,
                                                               std::span<const int> t);

}  // namespace alrite
