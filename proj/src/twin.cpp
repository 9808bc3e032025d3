#include "alrite/twin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace alrite {

namespace {

void check_inputs(const Matrix& latent, std::span<const int> t) {
  if (latent.rows() != static_cast<Index>(t.size()))
    throw ShapeError("twins: latent rows and treatment flags differ in length");
  if (!latent.allFinite()) throw NumericError("twins: non-finite latent coordinates");
}

// Nearest opposite-arm neighbour of every sample in `queries` (all of whose
// flags equal 1 - arm of `pool`).
void nearest(const Matrix& latent, const IndexList& queries, const IndexList& pool,
             TwinMap& out) {
  for (Index i : queries) {
    double best = std::numeric_limits<double>::infinity();
    Index best_j = -1;
    for (Index j : pool) {
      const double dist = (latent.row(i) - latent.row(j)).squaredNorm();
      if (dist < best) {
        best = dist;
        best_j = j;
      }
    }
    out.twin_index[static_cast<std::size_t>(i)] = best_j;
    out.twin_distance(i) = std::sqrt(best);
  }
}

std::pair<IndexList, IndexList> arms(std::span<const int> t) {
  IndexList control, treated;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == 1) treated.push_back(static_cast<Index>(i));
    else if (t[i] == 0) control.push_back(static_cast<Index>(i));
    else throw PreconditionError("twins: treatment flags must be 0 or 1");
  }
  if (control.empty() || treated.empty()) throw StructuralError("twins: a treatment arm is empty");
  return {std::move(control), std::move(treated)};
}

void check_invariants(const TwinMap& map, std::span<const int> t, Index n0, Index n1) {
  Index total = 0, to_treated = 0, to_control = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Index j = map.twin_index[i];
    if (t[static_cast<std::size_t>(j)] != 1 - t[i]) throw Error("twins: twin in the same arm");
    total += map.weight[i];
    (t[i] == 1 ? to_treated : to_control) += map.weight[i];
  }
  const Index n = static_cast<Index>(t.size());
  if (total != n || to_treated != n0 || to_control != n1)
    throw Error("twins: weight conservation violated");
}

}  // namespace

TwinMap mirror_twins(const Matrix& latent, std::span<const int> t) {
  check_inputs(latent, t);
  const auto [control, treated] = arms(t);
  const Index n = latent.rows();
  TwinMap map{IndexList(static_cast<std::size_t>(n), -1), Vector::Zero(n),
              IndexList(static_cast<std::size_t>(n), 0)};
  nearest(latent, control, treated, map);
  nearest(latent, treated, control, map);
  for (Index j : map.twin_index) ++map.weight[static_cast<std::size_t>(j)];
  check_invariants(map, t, static_cast<Index>(control.size()), static_cast<Index>(treated.size()));
  return map;
}

TwinMap cross_pipeline_weights(const Matrix& latent0, const Matrix& latent1,
                               std::span<const int> t) {
  check_inputs(latent0, t);
  check_inputs(latent1, t);
  const auto [control, treated] = arms(t);
  const Index n = latent0.rows();
  TwinMap map{IndexList(static_cast<std::size_t>(n), -1), Vector::Zero(n),
              IndexList(static_cast<std::size_t>(n), 0)};
  nearest(latent0, control, treated, map);
  nearest(latent1, treated, control, map);
  for (Index j : map.twin_index) ++map.weight[static_cast<std::size_t>(j)];
  check_invariants(map, t, static_cast<Index>(control.size()), static_cast<Index>(treated.size()));
  return map;
}

namespace {

ArmDistanceStats stats(std::vector<double> values) {
  ArmDistanceStats s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  const std::size_t m = values.size();
  s.median = m % 2 == 1 ? values[m / 2] : 0.5 * (values[m / 2 - 1] + values[m / 2]);
  s.max = values.back();
  return s;
}

}  // namespace

CounterfactualizabilitySummary counterfactualizability_summary(const TwinMap& twins,
                                                               std::span<const int> t) {
  if (twins.twin_distance.size() != static_cast<Index>(t.size()))
    throw ShapeError("twins: summary length mismatch");
  std::vector<double> control, treated;
  for (std::size_t i = 0; i < t.size(); ++i)
    (t[i] == 1 ? treated : control).push_back(twins.twin_distance(static_cast<Index>(i)));
  return {stats(std::move(control)), stats(std::move(treated))};
}

}  // namespace alrite
