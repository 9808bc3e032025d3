#include "alrite/experiment.hpp"

#include "alrite/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace alrite {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Domains

namespace {

bool near_power_grid(double value, int k_lo, int k_hi) {
  if (value == 0.0) return true;
  for (int k = k_lo; k <= k_hi; ++k) {
    const double target = std::pow(10.0, k / 2.0);
    if (std::abs(value - target) <= 1e-9 * target) return true;
  }
  return false;
}

}  // namespace

bool alpha_in_domain(double alpha) { return near_power_grid(alpha, -4, 4); }
bool beta_in_domain(double beta) { return near_power_grid(beta, -4, 2); }
bool width_in_domain(int width) { return width == 20 || width == 50 || width == 100 || width == 200; }
bool batch_in_domain(Index batch) { return batch == 50 || batch == 100 || batch == 200 || batch == 500; }

// ---------------------------------------------------------------------------
// Config parsing

namespace {

template <typename T>
void read(const nlohmann::json& doc, const char* key, const std::string& path, T& target) {
  if (!doc.contains(key)) return;
  try {
    doc.at(key).get_to(target);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + key, "has the wrong type");
  }
}

const nlohmann::json& section(const nlohmann::json& doc, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!doc.contains(key)) return empty;
  if (!doc.at(key).is_object()) throw ConfigError(key, "must be an object");
  return doc.at(key);
}

PipelineHyperparams read_hp(const nlohmann::json& doc, const std::string& field) {
  try {
    return hyperparams_from_json(doc);
  } catch (const ConfigError& e) {
    throw ConfigError(field + "." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
  }
}

PropensitySpec read_propensity_spec(const nlohmann::json& doc, std::size_t index) {
  const std::string field = "propensity.grid[" + std::to_string(index) + "]";
  if (!doc.is_object() || !doc.contains("kind")) throw ConfigError(field, "needs a 'kind'");
  PropensitySpec spec;
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "logistic_regression") {
    spec.kind = PropensityKind::logistic_regression;
    read(doc, "l2", field + ".", spec.l2);
    if (!(spec.l2 >= 0.0)) throw ConfigError(field + ".l2", "must be >= 0");
  } else if (kind == "knn") {
    spec.kind = PropensityKind::knn;
    read(doc, "k", field + ".", spec.k);
    if (spec.k < 1) throw ConfigError(field + ".k", "must be >= 1");
  } else if (kind == "tree") {
    spec.kind = PropensityKind::tree;
    read(doc, "max_depth", field + ".", spec.max_depth);
    if (spec.max_depth < 1) throw ConfigError(field + ".max_depth", "must be >= 1");
  } else {
    throw ConfigError(field + ".kind", "unknown model '" + kind + "'");
  }
  return spec;
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config", "must be a JSON object");
  ExperimentConfig c;
  read(doc, "seed", "", c.seed);
  read(doc, "output_dir", "", c.output_dir);

  const auto& ds = section(doc, "dataset");
  read(ds, "kind", "dataset.", c.dataset.kind);
  if (ds.contains("seed")) {
    std::uint64_t s = 0;
    read(ds, "seed", "dataset.", s);
    c.dataset.seed = s;
  }
  read(ds, "n", "dataset.", c.dataset.n);
  c.dataset.ihdp.n = c.dataset.n;
  read(ds, "d", "dataset.", c.dataset.ihdp.d);
  read(ds, "n_continuous", "dataset.", c.dataset.n_continuous);
  if (c.dataset.kind == "ihdp_like") {
    c.dataset.ihdp.n_continuous = std::min<Index>(6, c.dataset.ihdp.d);
    read(ds, "n_continuous", "dataset.", c.dataset.ihdp.n_continuous);
  }
  read(ds, "n_count", "dataset.", c.dataset.n_count);
  read(ds, "n_binary", "dataset.", c.dataset.n_binary);
  read(ds, "p_treat", "dataset.", c.dataset.ihdp.p_treat);
  read(ds, "confounded", "dataset.", c.dataset.ihdp.confounded);
  read(ds, "confounding_strength", "dataset.", c.dataset.ihdp.confounding_strength);
  read(ds, "noise_sd", "dataset.", c.dataset.ihdp.noise_sd);
  std::string path;
  read(ds, "path", "dataset.", path);
  c.dataset.path = path;

  const auto& split = section(doc, "split");
  read(split, "test_fraction", "split.", c.test_fraction);
  read(split, "val_fraction", "split.", c.val_fraction);

  const auto& space = section(doc, "search_space");
  SearchSpace& s = c.search_space;
  read(space, "alpha", "search_space.", s.alpha);
  read(space, "beta", "search_space.", s.beta);
  read(space, "gamma", "search_space.", s.gamma);
  read(space, "embed_layers", "search_space.", s.embed_layers);
  read(space, "head_layers", "search_space.", s.head_layers);
  read(space, "embed_width", "search_space.", s.embed_width);
  read(space, "head_width", "search_space.", s.head_width);
  read(space, "batch_size", "search_space.", s.batch_size);
  read(space, "base_lr", "search_space.", s.base_lr);
  read(space, "epochs", "search_space.", s.epochs);

  const auto& sweep = section(doc, "sweep");
  read(sweep, "l0", "sweep.", c.l0);
  read(sweep, "l1", "sweep.", c.l1);

  const auto& prop = section(doc, "propensity");
  if (prop.contains("grid")) {
    if (!prop.at("grid").is_array()) throw ConfigError("propensity.grid", "must be an array");
    c.propensity_grid.clear();
    for (std::size_t i = 0; i < prop.at("grid").size(); ++i)
      c.propensity_grid.push_back(read_propensity_spec(prop.at("grid")[i], i));
  }
  read(prop, "folds", "propensity.", c.propensity_folds);
  read(prop, "clip", "propensity.", c.clip);

  const auto& sel = section(doc, "selection");
  if (sel.contains("proxy")) {
    std::string name;
    read(sel, "proxy", "selection.", name);
    c.proxy = parse_proxy(name);
  }

  const auto& ens = section(doc, "ensemble");
  if (ens.contains("mode")) {
    std::string mode;
    read(ens, "mode", "ensemble.", mode);
    if (mode == "top_k") c.ensemble_mode = EnsembleMode::top_k;
    else if (mode == "softmax") c.ensemble_mode = EnsembleMode::softmax;
    else throw ConfigError("ensemble.mode", "must be 'top_k' or 'softmax'");
  }
  read(ens, "lambdas", "ensemble.", c.lambdas);

  const auto& fit = section(doc, "fit");
  if (fit.contains("hp0")) c.hp0 = read_hp(fit.at("hp0"), "fit.hp0");
  if (fit.contains("hp1")) c.hp1 = read_hp(fit.at("hp1"), "fit.hp1");

  validate(c);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream file(path);
  if (!file) throw ConfigError("--config", "cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(file);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

namespace {

void check_hp_domain(const PipelineHyperparams& hp, const std::string& field) {
  if (!alpha_in_domain(hp.alpha)) throw ConfigError(field + ".alpha", "outside {0} U {10^(k/2)}, k=-4..4");
  if (!beta_in_domain(hp.beta)) throw ConfigError(field + ".beta", "outside {0} U {10^(k/2)}, k=-4..2");
  if (!width_in_domain(hp.embed_width)) throw ConfigError(field + ".embed_width", "must be one of 20, 50, 100, 200");
  if (!width_in_domain(hp.head_width)) throw ConfigError(field + ".head_width", "must be one of 20, 50, 100, 200");
  if (!batch_in_domain(hp.batch_size)) throw ConfigError(field + ".batch_size", "must be one of 50, 100, 200, 500");
}

template <typename T, typename Pred>
void check_list(const std::vector<T>& values, const char* field, Pred ok, const char* message) {
  if (values.empty()) throw ConfigError(std::string("search_space.") + field, "must not be empty");
  for (const T& v : values)
    if (!ok(v)) throw ConfigError(std::string("search_space.") + field, message);
}

}  // namespace

void validate(const ExperimentConfig& c) {
  const auto& kind = c.dataset.kind;
  if (kind != "ihdp_like" && kind != "acic_like" && kind != "toy" && kind != "csv")
    throw ConfigError("dataset.kind", "must be one of ihdp_like, acic_like, toy, csv");
  if (kind == "csv" && c.dataset.path.empty()) throw ConfigError("dataset.path", "required for csv datasets");
  if (kind != "csv" && c.dataset.n < 40) throw ConfigError("dataset.n", "must be at least 40");
  if (kind == "ihdp_like") {
    if (c.dataset.ihdp.d < 1) throw ConfigError("dataset.d", "must be positive");
    if (!(c.dataset.ihdp.p_treat > 0.0 && c.dataset.ihdp.p_treat < 1.0))
      throw ConfigError("dataset.p_treat", "must lie in (0, 1)");
    if (c.dataset.ihdp.n_continuous < 0 || c.dataset.ihdp.n_continuous > c.dataset.ihdp.d)
      throw ConfigError("dataset.n_continuous", "must lie in [0, d]");
    if (!(c.dataset.ihdp.noise_sd >= 0.0)) throw ConfigError("dataset.noise_sd", "must be >= 0");
  }
  if (kind == "acic_like") {
    if (c.dataset.n_continuous < 1) throw ConfigError("dataset.n_continuous", "must be >= 1");
    if (c.dataset.n_count < 0) throw ConfigError("dataset.n_count", "must be >= 0");
    if (c.dataset.n_binary < 0) throw ConfigError("dataset.n_binary", "must be >= 0");
  }
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw ConfigError("split.test_fraction", "must lie in (0, 1)");
  if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) throw ConfigError("split.val_fraction", "must lie in (0, 1)");

  const SearchSpace& s = c.search_space;
  check_list(s.alpha, "alpha", alpha_in_domain, "values must lie in {0} U {10^(k/2)}, k=-4..4");
  check_list(s.beta, "beta", beta_in_domain, "values must lie in {0} U {10^(k/2)}, k=-4..2");
  check_list(s.gamma, "gamma", [](double g) { return g >= 0.0 && std::isfinite(g); }, "values must be >= 0");
  check_list(s.embed_layers, "embed_layers", [](int l) { return l >= 1 && l <= 5; }, "values must lie in [1, 5]");
  check_list(s.head_layers, "head_layers", [](int l) { return l >= 1 && l <= 5; }, "values must lie in [1, 5]");
  check_list(s.embed_width, "embed_width", width_in_domain, "values must be one of 20, 50, 100, 200");
  check_list(s.head_width, "head_width", width_in_domain, "values must be one of 20, 50, 100, 200");
  check_list(s.batch_size, "batch_size", batch_in_domain, "values must be one of 50, 100, 200, 500");
  check_list(s.base_lr, "base_lr", [](double lr) { return lr > 0.0 && std::isfinite(lr); }, "values must be positive");
  if (s.epochs < 0) throw ConfigError("search_space.epochs", "must be >= 0");
  if (c.l0 < 1) throw ConfigError("sweep.l0", "must be >= 1");
  if (c.l1 < 1) throw ConfigError("sweep.l1", "must be >= 1");
  if (c.propensity_grid.empty()) throw ConfigError("propensity.grid", "must not be empty");
  if (c.propensity_folds < 2) throw ConfigError("propensity.folds", "must be >= 2");
  if (!(c.clip >= 0.0 && c.clip < 0.5)) throw ConfigError("propensity.clip", "must lie in [0, 0.5)");
  if (c.lambdas.empty()) throw ConfigError("ensemble.lambdas", "must not be empty");
  for (double l : c.lambdas)
    if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("ensemble.lambdas", "values must be positive");
  c.hp0.validate();
  c.hp1.validate();
  check_hp_domain(c.hp0, "fit.hp0");
  check_hp_domain(c.hp1, "fit.hp1");
}

// ---------------------------------------------------------------------------
// Datasets

DatasetBundle make_dataset(const ExperimentConfig& config) {
  const DatasetSection& ds = config.dataset;
  const std::uint64_t seed = ds.seed.value_or(derive_seed(config.seed, 0xda7aULL));
  DatasetBundle out;
  out.manifest["kind"] = ds.kind;
  out.manifest["seed"] = seed;
  if (ds.kind == "ihdp_like") {
    Synthetic s = generate_ihdp_like(seed, ds.ihdp);
    out.data = std::move(s.data);
    out.truth = std::move(s.truth);
    out.propensity = std::move(s.propensity);
    out.manifest["n"] = ds.ihdp.n;
    out.manifest["d"] = ds.ihdp.d;
    out.manifest["n_continuous"] = ds.ihdp.n_continuous;
    out.manifest["p_treat"] = ds.ihdp.p_treat;
    out.manifest["confounded"] = ds.ihdp.confounded;
    out.manifest["confounding_strength"] = ds.ihdp.confounding_strength;
    out.manifest["noise_sd"] = ds.ihdp.noise_sd;
    out.manifest["target_att"] = ds.ihdp.target_att;
  } else if (ds.kind == "acic_like") {
    const AcicProtocol protocol = random_acic_protocol(derive_seed(seed, 0x9a07ULL), ds.n_continuous, ds.n_count, ds.n_binary);
    Synthetic s = generate_acic_like(seed, ds.n, protocol);
    out.data = std::move(s.data);
    out.truth = std::move(s.truth);
    out.propensity = std::move(s.propensity);
    out.manifest["n"] = ds.n;
    out.manifest["n_continuous"] = ds.n_continuous;
    out.manifest["n_count"] = ds.n_count;
    out.manifest["n_binary"] = ds.n_binary;
  } else if (ds.kind == "toy") {
    Synthetic s = generate_two_cluster_toy(seed, ds.n);
    out.data = std::move(s.data);
    out.truth = std::move(s.truth);
    out.propensity = std::move(s.propensity);
    out.manifest["n"] = ds.n;
  } else {
    CsvContents csv = load_csv(ds.path);
    out.data = std::move(csv.data);
    out.truth = std::move(csv.truth);
    out.manifest["path"] = ds.path.string();
    out.manifest["n"] = out.data.size();
  }
  out.data.require_both_arms();
  return out;
}

// ---------------------------------------------------------------------------
// Worker pool

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& task) {
  const std::size_t threads = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), count));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<PipelineHyperparams> sample_settings(const SearchSpace& space, int count, Role role,
                                                 std::uint64_t seed) {
  std::vector<PipelineHyperparams> out;
  const std::uint64_t stream = role == Role::control_driven ? 0x5e770ULL : 0x5e771ULL;
  for (int k = 0; k < count; ++k) {
    Rng rng(derive_seed(seed, stream, static_cast<std::uint64_t>(k)));
    const auto pick = [&](const auto& list) {
      std::uniform_int_distribution<std::size_t> d(0, list.size() - 1);
      return list[d(rng)];
    };
    PipelineHyperparams hp;
    hp.alpha = pick(space.alpha);
    hp.beta = pick(space.beta);
    hp.gamma = pick(space.gamma);
    hp.embed_layers = pick(space.embed_layers);
    hp.head_layers = pick(space.head_layers);
    hp.embed_width = pick(space.embed_width);
    hp.head_width = pick(space.head_width);
    hp.batch_size = pick(space.batch_size);
    hp.base_lr = pick(space.base_lr);
    hp.epochs = space.epochs;
    out.push_back(hp);
  }
  return out;
}

SweepResult run_sweep(const Dataset& data, const SplitIndices& split, const ExperimentConfig& config,
                      int workers) {
  SweepResult out;
  const auto hp0 = sample_settings(config.search_space, config.l0, Role::control_driven, config.seed);
  const auto hp1 = sample_settings(config.search_space, config.l1, Role::treatment_driven, config.seed);
  out.members0.resize(hp0.size());
  out.members1.resize(hp1.size());
  const std::size_t total = hp0.size() + hp1.size();
  parallel_for(total, workers, [&](std::size_t task) {
    const bool first = task < hp0.size();
    const std::size_t k = first ? task : task - hp0.size();
    MemberResult& m = first ? out.members0[k] : out.members1[k];
    m.role = first ? Role::control_driven : Role::treatment_driven;
    m.hp = first ? hp0[k] : hp1[k];
    try {
      auto [pipeline, report] = train_pipeline(data, split, m.role, m.hp,
                                               derive_seed(config.seed, first ? 0x3e3b0ULL : 0x3e3b1ULL, k));
      m.validation_risk = report.retained_validation_mse;
      m.retained_epoch = report.retained_epoch;
      m.pipeline = std::move(pipeline);
    } catch (const std::exception& e) {
      m.error = e.what();
    }
  });
  for (const auto* arm : {&out.members0, &out.members1}) {
    const bool any = std::any_of(arm->begin(), arm->end(), [](const MemberResult& m) { return m.pipeline.has_value(); });
    if (!any) throw Error("sweep: every member of an arm failed; first error: " + arm->front().error);
  }
  out.eta = select_propensity(data, split.train, config.propensity_grid, config.propensity_folds,
                              derive_seed(config.seed, 0xe7aULL), config.clip)
                .model;
  return out;
}

std::pair<std::vector<Pipeline>, Vector> successful(const std::vector<MemberResult>& members,
                                                    std::vector<std::size_t>* ids) {
  std::vector<Pipeline> pipes;
  std::vector<double> risks;
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (!members[k].pipeline) continue;
    pipes.push_back(*members[k].pipeline);
    risks.push_back(members[k].validation_risk);
    if (ids) ids->push_back(k);
  }
  return {std::move(pipes), Eigen::Map<const Vector>(risks.data(), static_cast<Index>(risks.size()))};
}

CandidateTable candidate_predictions(const SweepResult& sweep, const Dataset& rows, const Vector& eta) {
  struct Outputs {
    Vector mu0, mu1;
  };
  const auto outputs = [&](const std::vector<MemberResult>& members) {
    std::vector<std::optional<Outputs>> out(members.size());
    for (std::size_t k = 0; k < members.size(); ++k)
      if (members[k].pipeline)
        out[k] = Outputs{predict_mu(*members[k].pipeline, rows.x, 0), predict_mu(*members[k].pipeline, rows.x, 1)};
    return out;
  };
  const auto out0 = outputs(sweep.members0);
  const auto out1 = outputs(sweep.members1);
  CandidateTable table;
  for (std::size_t i = 0; i < out0.size(); ++i) {
    for (std::size_t j = 0; j < out1.size(); ++j) {
      table.pairs.emplace_back(i, j);
      if (!out0[i] || !out1[j]) {
        table.predictions.push_back({});
        continue;
      }
      const Outputs& a = *out0[i];
      const Outputs& b = *out1[j];
      CandidatePredictions c;
      c.tau = aggregate_tau(eta, a.mu1 - a.mu0, b.mu1 - b.mu0);
      Vector factual(rows.size());
      for (Index r = 0; r < rows.size(); ++r) {
        const bool treated = rows.t[static_cast<std::size_t>(r)] == 1;
        factual(r) = (1.0 - eta(r)) * (treated ? a.mu1(r) : a.mu0(r)) + eta(r) * (treated ? b.mu1(r) : b.mu0(r));
      }
      c.factual = std::move(factual);
      table.predictions.push_back(std::move(c));
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Run-directory helpers

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error("cannot open '" + path.string() + "' for writing");
  file << text;
  if (!file) throw Error("failed writing '" + path.string() + "'");
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream file(path);
  if (!file) throw Error("missing artifact '" + path.string() + "'; run the producing command first");
  return nlohmann::json::parse(file);
}

std::string fmt(double v) { return format_double(v); }
std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

struct RunData {
  Dataset data;
  std::optional<GroundTruth> truth;
  SplitIndices split;
};

// Loads the run dataset and split, creating and saving them on first use.
RunData run_data(const ExperimentConfig& config, const fs::path& out) {
  RunData r;
  const fs::path csv = out / "dataset.csv";
  if (fs::exists(csv)) {
    CsvContents contents = load_csv(csv);
    r.data = std::move(contents.data);
    r.truth = std::move(contents.truth);
  } else {
    DatasetBundle bundle = make_dataset(config);
    fs::create_directories(out);
    save_csv(csv, bundle.data, bundle.truth ? &*bundle.truth : nullptr);
    write_text(out / "manifest.json", bundle.manifest.dump(2) + "\n");
    r.data = std::move(bundle.data);
    r.truth = std::move(bundle.truth);
  }
  const fs::path split_path = out / "split.json";
  if (fs::exists(split_path)) {
    r.split = split_from_json(read_json(split_path));
  } else {
    r.split = split(r.data, config.test_fraction, config.val_fraction, derive_seed(config.seed, 0x5b1ULL));
    write_text(split_path, to_json(r.split).dump() + "\n");
  }
  return r;
}

fs::path member_path(const fs::path& out, int arm, std::size_t k) {
  return out / "members" / ("p" + std::to_string(arm) + "_" + std::to_string(k) + ".json");
}

SweepResult load_sweep(const fs::path& out) {
  const nlohmann::json index = read_json(out / "members" / "index.json");
  SweepResult sweep;
  for (int arm : {0, 1}) {
    auto& members = arm == 0 ? sweep.members0 : sweep.members1;
    const std::size_t count = index.at(arm == 0 ? "l0" : "l1").get<std::size_t>();
    for (std::size_t k = 0; k < count; ++k) {
      const nlohmann::json doc = read_json(member_path(out, arm, k));
      MemberResult m;
      m.role = arm == 0 ? Role::control_driven : Role::treatment_driven;
      m.hp = hyperparams_from_json(doc.at("hyperparams"));
      m.error = doc.value("error", std::string());
      if (m.error.empty()) {
        m.pipeline = pipeline_from_json(doc.at("pipeline"));
        m.validation_risk = doc.at("validation_risk").get<double>();
        m.retained_epoch = doc.at("retained_epoch").get<int>();
      }
      members.push_back(std::move(m));
    }
  }
  sweep.eta = propensity_from_json(read_json(out / "eta.json"));
  return sweep;
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path) {
  std::ifstream file(path);
  if (!file) throw Error("missing artifact '" + path.string() + "'; run the producing command first");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(file, line)) {
    std::vector<std::string> fields;
    std::stringstream stream(line);
    std::string field;
    while (std::getline(stream, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    rows.push_back(std::move(fields));
  }
  return rows;
}

Vector tau_at(const Vector& tau, std::span<const Index> indices) {
  Vector out(static_cast<Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) out(static_cast<Index>(k)) = tau(indices[k]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

void cmd_generate(const ExperimentConfig& config, const fs::path& out) {
  DatasetBundle bundle = make_dataset(config);
  fs::create_directories(out);
  save_csv(out / "dataset.csv", bundle.data, bundle.truth ? &*bundle.truth : nullptr);
  write_text(out / "manifest.json", bundle.manifest.dump(2) + "\n");
}

void cmd_sweep(const ExperimentConfig& config, const fs::path& out, int workers) {
  const RunData run = run_data(config, out);
  const SweepResult sweep = run_sweep(run.data, run.split, config, workers);

  std::string members_csv = "arm,member,status,validation_risk,retained_epoch,alpha,beta,gamma,embed_layers,embed_width,head_layers,head_width,batch_size,base_lr,epochs\n";
  for (int arm : {0, 1}) {
    const auto& members = arm == 0 ? sweep.members0 : sweep.members1;
    for (std::size_t k = 0; k < members.size(); ++k) {
      const MemberResult& m = members[k];
      nlohmann::json doc = {{"hyperparams", to_json(m.hp)}};
      if (m.pipeline) {
        doc["pipeline"] = to_json(*m.pipeline);
        doc["validation_risk"] = m.validation_risk;
        doc["retained_epoch"] = m.retained_epoch;
      } else {
        doc["error"] = m.error;
      }
      write_text(member_path(out, arm, k), doc.dump() + "\n");
      members_csv += std::to_string(arm) + "," + std::to_string(k) + "," + (m.pipeline ? "ok" : "failed") + "," +
                     (m.pipeline ? fmt(m.validation_risk) : "") + "," + std::to_string(m.retained_epoch) + "," +
                     fmt(m.hp.alpha) + "," + fmt(m.hp.beta) + "," + fmt(m.hp.gamma) + "," +
                     std::to_string(m.hp.embed_layers) + "," + std::to_string(m.hp.embed_width) + "," +
                     std::to_string(m.hp.head_layers) + "," + std::to_string(m.hp.head_width) + "," +
                     std::to_string(m.hp.batch_size) + "," + fmt(m.hp.base_lr) + "," + std::to_string(m.hp.epochs) + "\n";
    }
  }
  write_text(out / "members" / "index.json",
             nlohmann::json{{"l0", sweep.members0.size()}, {"l1", sweep.members1.size()}}.dump() + "\n");
  write_text(out / "members.csv", members_csv);
  write_text(out / "eta.json", to_json(sweep.eta).dump() + "\n");

  // Proxy scores of every candidate on the validation rows.
  const Dataset val = run.data.subset(run.split.validation);
  const Vector eta = predict_eta(sweep.eta, val.x, config.clip);
  const CandidateTable table = candidate_predictions(sweep, val, eta);
  const Auxiliaries aux = fit_auxiliaries(run.data, run.split.train, derive_seed(config.seed, 0xa0aULL),
                                          config.propensity_grid, config.clip);
  const AuxiliaryPredictions aux_val = predict_auxiliaries(aux, val);
  std::optional<Vector> val_tau;
  if (run.truth) val_tau = tau_at(run.truth->tau, run.split.validation);

  std::string candidates_csv = "candidate_id,member0,member1,status\n";
  std::string scores = "candidate_id,kind,score,pehe_if_known\n";
  for (std::size_t c = 0; c < table.pairs.size(); ++c) {
    const bool ok = table.predictions[c].tau.has_value();
    candidates_csv += std::to_string(c) + "," + std::to_string(table.pairs[c].first) + "," +
                      std::to_string(table.pairs[c].second) + "," + (ok ? "ok" : "failed") + "\n";
    if (!ok) continue;
    const std::string pehe_text = val_tau ? fmt(pehe(*table.predictions[c].tau, *val_tau)) : "";
    for (ProxyKind kind : all_proxy_kinds())
      scores += std::to_string(c) + "," + to_string(kind) + "," +
                fmt(proxy_score(kind, table.predictions[c], val, aux_val)) + "," + pehe_text + "\n";
  }
  write_text(out / "candidates.csv", candidates_csv);
  write_text(out / "scores.csv", scores);
}

void cmd_fit(const ExperimentConfig& config, const fs::path& out) {
  const RunData run = run_data(config, out);
  AlriteFitOptions options;
  options.hp0 = config.hp0;
  options.hp1 = config.hp1;
  options.propensity_grid = config.propensity_grid;
  options.propensity_folds = config.propensity_folds;
  options.clip = config.clip;
  const AlriteModel model = alrite_fit(run.data, run.split, options, derive_seed(config.seed, 0xf17ULL));
  nlohmann::json doc = to_json(model);
  doc["hp0"] = to_json(config.hp0);
  doc["hp1"] = to_json(config.hp1);
  write_text(out / "model.json", doc.dump() + "\n");

  const Vector tau_hat = alrite_predict(model, run.data.x);
  std::vector<std::string> set_of(static_cast<std::size_t>(run.data.size()));
  for (Index i : run.split.train) set_of[static_cast<std::size_t>(i)] = "train";
  for (Index i : run.split.validation) set_of[static_cast<std::size_t>(i)] = "validation";
  for (Index i : run.split.test) set_of[static_cast<std::size_t>(i)] = "test";
  std::string csv = run.truth ? "index,set,t,tau_hat,tau\n" : "index,set,t,tau_hat\n";
  for (Index i = 0; i < run.data.size(); ++i) {
    csv += std::to_string(i) + "," + set_of[static_cast<std::size_t>(i)] + "," +
           std::to_string(run.data.t[static_cast<std::size_t>(i)]) + "," + fmt(tau_hat(i));
    if (run.truth) csv += "," + fmt(run.truth->tau(i));
    csv += "\n";
  }
  write_text(out / "predictions.csv", csv);
}

void cmd_evaluate(const ExperimentConfig& config, const fs::path& out) {
  const RunData run = run_data(config, out);
  const AlriteModel model = alrite_from_json(read_json(out / "model.json"));
  const OlsTLearner ols = fit_ols_t_learner(run.data, run.split.train);
  std::string csv = "model,set,n,sqrt_pehe,eps_ate,rpol,orpol,policy_empty_cell\n";
  const std::pair<const char*, const IndexList*> sets[] = {
      {"within", &run.split.train}, {"validation", &run.split.validation}, {"test", &run.split.test}};
  for (const char* name : {"alrite", "ols_t_learner"}) {
    const bool alrite = std::string(name) == "alrite";
    for (const auto& [set, indices] : sets) {
      const Dataset part = run.data.subset(*indices);
      const Vector tau_hat = alrite ? alrite_predict(model, part.x) : predict_tau(ols, part.x);
      std::optional<GroundTruth> truth;
      if (run.truth) truth = run.truth->subset(*indices);
      const PolicyRisks risks = policy_risks(tau_hat, part, truth ? &*truth : nullptr);
      csv += std::string(name) + "," + set + "," + std::to_string(part.size()) + "," +
             (truth ? fmt(std::sqrt(pehe(tau_hat, truth->tau))) : "") + "," +
             (truth ? fmt(eps_ate(tau_hat, truth->tau)) : "") + "," + fmt_opt(risks.rpol) + "," +
             fmt(risks.orpol) + "," + (risks.empty_cell ? "1" : "0") + "\n";
    }
  }
  write_text(out / "evaluation.csv", csv);
}

void cmd_select(const ExperimentConfig& config, const fs::path& out) {
  const RunData run = run_data(config, out);
  const auto rows = read_csv_rows(out / "scores.csv");
  const auto candidates = read_csv_rows(out / "candidates.csv");
  const SweepResult sweep = load_sweep(out);

  struct Best {
    std::size_t id = 0;
    double score = std::numeric_limits<double>::infinity();
    std::string pehe;
    bool any = false;
  };
  std::map<std::string, Best> best;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < 4) throw ParseError(r + 1, "scores.csv: expected 4 fields");
    const std::size_t id = std::stoul(rows[r][0]);
    const double score = std::stod(rows[r][2]);
    Best& b = best[rows[r][1]];
    if (!b.any || score < b.score || (score == b.score && id < b.id)) {
      b = Best{id, score, rows[r][3], true};
    }
  }
  const Dataset test = run.data.subset(run.split.test);
  const Vector eta_test = predict_eta(sweep.eta, test.x, config.clip);
  std::string csv = "kind,candidate_id,member0,member1,score,validation_pehe,test_sqrt_pehe\n";
  for (ProxyKind kind : all_proxy_kinds()) {
    const auto it = best.find(to_string(kind));
    if (it == best.end()) continue;
    const Best& b = it->second;
    const std::size_t m0 = std::stoul(candidates.at(b.id + 1).at(1));
    const std::size_t m1 = std::stoul(candidates.at(b.id + 1).at(2));
    std::string test_text;
    if (run.truth) {
      const Vector tau_hat = aggregate_tau(eta_test, predict_tau(*sweep.members0.at(m0).pipeline, test.x),
                                           predict_tau(*sweep.members1.at(m1).pipeline, test.x));
      test_text = fmt(std::sqrt(pehe(tau_hat, tau_at(run.truth->tau, run.split.test))));
    }
    csv += to_string(kind) + "," + std::to_string(b.id) + "," + std::to_string(m0) + "," + std::to_string(m1) +
           "," + fmt(b.score) + "," + b.pehe + "," + test_text + "\n";
  }
  write_text(out / "selection.csv", csv);
}

void cmd_ensemble(const ExperimentConfig& config, const fs::path& out) {
  const RunData run = run_data(config, out);
  const SweepResult sweep = load_sweep(out);
  const auto [pipes0, risk0] = successful(sweep.members0);
  const auto [pipes1, risk1] = successful(sweep.members1);

  const Dataset val = run.data.subset(run.split.validation);
  const Vector eta_val = predict_eta(sweep.eta, val.x, config.clip);
  const ArmBank v0 = make_arm_bank(pipes0, risk0, val.x), v1 = make_arm_bank(pipes1, risk1, val.x);

  struct Eval {
    Dataset rows;
    Vector eta;
    ArmBank b0, b1;
    Vector tau;
  };
  std::vector<Eval> evals;
  if (run.truth) {
    for (const IndexList* idx : {&run.split.train, &run.split.test}) {
      Eval e;
      e.rows = run.data.subset(*idx);
      e.eta = predict_eta(sweep.eta, e.rows.x, config.clip);
      e.b0 = make_arm_bank(pipes0, risk0, e.rows.x);
      e.b1 = make_arm_bank(pipes1, risk1, e.rows.x);
      e.tau = tau_at(run.truth->tau, *idx);
      evals.push_back(std::move(e));
    }
  }
  const auto curve_csv = [&](const char* param, EnsembleChoice& choice, bool topk) {
    std::string csv = std::string(param) + ",validation_risk,within_sqrt_pehe,test_sqrt_pehe\n";
    for (CurvePoint& point : choice.curve) {
      csv += fmt(point.param) + "," + fmt(point.validation_risk);
      for (Eval& e : evals) {
        const Vector w0 = topk ? topk_weights(e.b0.risk.size(), static_cast<Index>(point.param)) : softmax_weights(e.b0.risk, point.param);
        const Vector w1 = topk ? topk_weights(e.b1.risk.size(), static_cast<Index>(point.param)) : softmax_weights(e.b1.risk, point.param);
        const double value = std::sqrt(pehe(combine(e.b0, w0, e.b1, w1, e.eta, e.rows.t).tau, e.tau));
        csv += "," + fmt(value);
      }
      if (evals.empty()) csv += ",,";
      csv += "\n";
    }
    return csv;
  };
  EnsembleChoice topk = select_topk(v0, v1, eta_val, val.t, val.y);
  EnsembleChoice soft = select_softmax(v0, v1, eta_val, val.t, val.y, config.lambdas);
  write_text(out / "ensemble_topk.csv", curve_csv("k", topk, true));
  write_text(out / "ensemble_softmax.csv", curve_csv("lambda", soft, false));
  const nlohmann::json summary = {{"mode", to_string(config.ensemble_mode)},
                                  {"k", static_cast<Index>(topk.param)},
                                  {"lambda", soft.param}};
  write_text(out / "ensemble.json", summary.dump(2) + "\n");
}

void cmd_bounds(const ExperimentConfig& config, const fs::path& out) {
  const RunData run = run_data(config, out);
  if (!run.truth) throw PreconditionError("bounds: the dataset has no ground-truth columns");
  const nlohmann::json doc = read_json(out / "model.json");
  const AlriteModel model = alrite_from_json(doc);
  const Dataset train = run.data.subset(run.split.train);
  const GroundTruth truth = run.truth->subset(run.split.train);
  const double gamma0 = doc.contains("hp0") ? doc.at("hp0").at("gamma").get<double>() : config.hp0.gamma;
  const double gamma1 = doc.contains("hp1") ? doc.at("hp1").at("gamma").get<double>() : config.hp1.gamma;
  // Trained networks have no known target Lipschitz constant: report only.
  const std::pair<std::string, BoundReport> reports[] = {
      {"p0", bound_m1(model.p0, train, truth, std::nullopt)},
      {"p1", bound_m1(model.p1, train, truth, std::nullopt)},
      {"p0+p1", bound_m2(model.p0, model.p1, train, truth, std::nullopt)},
      {"p0+p1", bound_m3(model.p0, model.p1, train, truth, std::nullopt, gamma0, gamma1)}};
  std::string csv = "theorem,pipelines,bound,pehe,slack,certified\n";
  for (const auto& [who, r] : reports)
    csv += r.theorem + "," + who + "," + fmt(r.bound) + "," + fmt(r.pehe) + "," + fmt(r.slack) + "," +
           (r.certified ? "1" : "0") + "\n";
  write_text(out / "bounds.csv", csv);
}

void cmd_report(const ExperimentConfig&, const fs::path& out) {
  std::ostringstream digest;
  digest << "run directory: " << out.string() << "\n";
  std::vector<std::string> gaps;

  if (fs::exists(out / "scores.csv")) {
    const auto rows = read_csv_rows(out / "scores.csv");
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_kind;
    bool truth = true;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() < 4 || rows[r][3].empty()) {
        truth = false;
        continue;
      }
      by_kind[rows[r][1]].first.push_back(std::stod(rows[r][3]));
      by_kind[rows[r][1]].second.push_back(std::stod(rows[r][2]));
    }
    std::map<std::size_t, std::map<std::string, std::string>> table;
    std::map<std::size_t, std::string> pehe_of;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() < 3) continue;
      const std::size_t id = std::stoul(rows[r][0]);
      table[id][rows[r][1]] = rows[r][2];
      pehe_of[id] = rows[r].size() > 3 ? rows[r][3] : "";
    }
    std::string summary = "candidate_id";
    for (ProxyKind kind : all_proxy_kinds()) summary += "," + to_string(kind);
    summary += ",pehe\n";
    for (const auto& [id, scores] : table) {
      summary += std::to_string(id);
      for (ProxyKind kind : all_proxy_kinds()) {
        const auto it = scores.find(to_string(kind));
        summary += "," + (it == scores.end() ? std::string() : it->second);
      }
      summary += "," + pehe_of[id] + "\n";
    }
    write_text(out / "candidate_summary.csv", summary);

    if (truth && !by_kind.empty()) {
      std::string csv = "kind,spearman,kendall,dcg\n";
      digest << "rank agreement with validation PEHE (spearman, kendall, dcg):\n";
      for (ProxyKind kind : all_proxy_kinds()) {
        const auto it = by_kind.find(to_string(kind));
        if (it == by_kind.end() || it->second.first.size() < 2) continue;
        const auto& [u, v] = it->second;
        const RankAgreement ra = rank_agreement(Eigen::Map<const Vector>(u.data(), static_cast<Index>(u.size())),
                                                Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
        csv += to_string(kind) + "," + fmt(ra.spearman) + "," + fmt(ra.kendall) + "," + fmt(ra.dcg) + "\n";
        digest << "  " << to_string(kind) << ": " << fmt(ra.spearman) << ", " << fmt(ra.kendall) << ", "
               << fmt(ra.dcg) << "\n";
      }
      write_text(out / "rank_agreement.csv", csv);
    } else {
      gaps.push_back("rank agreement (no ground truth in scores.csv)");
    }
  } else {
    gaps.push_back("scores.csv (run sweep)");
  }

  const auto echo = [&](const char* file, const char* title, const char* producer) {
    if (!fs::exists(out / file)) {
      gaps.push_back(std::string(file) + " (run " + producer + ")");
      return;
    }
    digest << title << ":\n";
    for (const auto& row : read_csv_rows(out / file)) {
      digest << "  ";
      for (std::size_t k = 0; k < row.size(); ++k) digest << (k ? ", " : "") << row[k];
      digest << "\n";
    }
  };
  echo("selection.csv", "selection per proxy", "select");
  echo("evaluation.csv", "within-sample and out-of-sample evaluation", "fit and evaluate");
  echo("ensemble_topk.csv", "top-K ensemble curve", "ensemble");
  echo("ensemble_softmax.csv", "softmax ensemble curve", "ensemble");
  echo("bounds.csv", "bound reports", "fit and bounds");
  if (fs::exists(out / "members.csv")) {
    const auto rows = read_csv_rows(out / "members.csv");
    std::size_t failed = 0;
    for (std::size_t r = 1; r < rows.size(); ++r)
      if (rows[r].size() > 2 && rows[r][2] == "failed") ++failed;
    digest << "sweep members: " << rows.size() - 1 << " (" << failed << " failed)\n";
  }
  for (const auto& gap : gaps) digest << "missing: " << gap << "\n";
  write_text(out / "digest.txt", digest.str());
}

}  // namespace alrite
