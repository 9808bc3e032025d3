#pragma once

#include "alrite/data.hpp"
#include "alrite/learner.hpp"
#include "alrite/pipeline.hpp"
#include "alrite/propensity.hpp"
#include "alrite/selection.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace alrite {

/// Candidate values per hyper-parameter; each sweep member draws one value
/// uniformly from every list.
struct SearchSpace {
  std::vector<double> alpha = {0.0, 0.01, 0.1, 1.0, 10.0};
  std::vector<double> beta = {0.0, 0.01, 0.1, 1.0};
  std::vector<double> gamma = {1e-4};
  std::vector<int> embed_layers = {1, 2, 3};
  std::vector<int> head_layers = {1, 2, 3};
  std::vector<int> embed_width = {20, 50, 100};
  std::vector<int> head_width = {20, 50, 100};
  std::vector<Index> batch_size = {50, 100, 200};
  std::vector<double> base_lr = {1e-3};
  int epochs = 100;
};

struct DatasetSection {
  std::string kind = "ihdp_like";  // ihdp_like | acic_like | toy | csv
  std::optional<std::uint64_t> seed;
  IhdpConfig ihdp;
  Index n = 747;                // acic_like and toy
  Index n_continuous = 3;       // acic_like
  Index n_count = 0;
  Index n_binary = 0;
  std::filesystem::path path;   // csv
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetSection dataset;
  double test_fraction = 0.1;
  double val_fraction = 0.3;
  SearchSpace search_space;
  int l0 = 6;
  int l1 = 6;
  std::vector<PropensitySpec> propensity_grid = default_propensity_grid();
  int propensity_folds = 5;
  double clip = kDefaultEtaClip;
  ProxyKind proxy = ProxyKind::mu_risk;
  EnsembleMode ensemble_mode = EnsembleMode::top_k;
  std::vector<double> lambdas = default_lambda_grid();
  PipelineHyperparams hp0;
  PipelineHyperparams hp1;
  std::filesystem::path output_dir = "run";
};

/// Throws ConfigError naming the first invalid field.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& config);

/// Membership tests for the documented hyper-parameter domains.
bool alpha_in_domain(double alpha);
bool beta_in_domain(double beta);
bool width_in_domain(int width);
bool batch_in_domain(Index batch);

struct DatasetBundle {
  Dataset data;
  std::optional<GroundTruth> truth;
  std::optional<Vector> propensity;
  nlohmann::json manifest;
};

DatasetBundle make_dataset(const ExperimentConfig& config);

/// Runs task(i) for i in [0, count) on up to `workers` threads. Results must
/// be written by index; the first exception is rethrown after all tasks end.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& task);

std::vector<PipelineHyperparams> sample_settings(const SearchSpace& space, int count, Role role,
                                                 std::uint64_t seed);

struct MemberResult {
  Role role = Role::control_driven;
  PipelineHyperparams hp;
  std::optional<Pipeline> pipeline;
  double validation_risk = std::numeric_limits<double>::infinity();
  int retained_epoch = -1;
  std::string error;  // empty on success
};

struct SweepResult {
  std::vector<MemberResult> members0;
  std::vector<MemberResult> members1;
  PropensityModel eta;
};

/// Trains every sampled member; a failing member is recorded, not fatal,
/// unless a whole arm fails.
SweepResult run_sweep(const Dataset& data, const SplitIndices& split, const ExperimentConfig& config,
                      int workers);

/// Successful members of one arm with their validation risks.
std::pair<std::vector<Pipeline>, Vector> successful(const std::vector<MemberResult>& members,
                                                    std::vector<std::size_t>* ids = nullptr);

/// Candidate (i, j) pairs control-driven member i with treatment-driven member j.
struct CandidateTable {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // member ids
  std::vector<CandidatePredictions> predictions;
};

CandidateTable candidate_predictions(const SweepResult& sweep, const Dataset& rows, const Vector& eta);

// Run-directory commands. Each returns normally or throws alrite::Error.
void cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_sweep(const ExperimentConfig& config, const std::filesystem::path& out, int workers);
void cmd_fit(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_evaluate(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_select(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_ensemble(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_bounds(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_report(const ExperimentConfig& config, const std::filesystem::path& out);

}  // namespace alrite
