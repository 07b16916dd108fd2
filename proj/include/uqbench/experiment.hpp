#ifndef UQBENCH_EXPERIMENT_HPP
#define UQBENCH_EXPERIMENT_HPP

// Experiment plumbing behind the command-line tool: config parsing, the
// generate/train/evaluate/convergence/run/inspect commands and the manifest.

#include <Eigen/Dense>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uqbench/container.hpp"
#include "uqbench/dataset.hpp"
#include "uqbench/errors.hpp"
#include "uqbench/metrics.hpp"
#include "uqbench/uq.hpp"

namespace uqbench::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitBlowUp = 3;
inline constexpr int kExitTraining = 4;
inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kOutputRootEnv = "UQBENCH_OUTPUT_ROOT";

/// Maps an exception to the process exit code.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const BlowUpBudgetExceeded*>(&e)) return kExitBlowUp;
  if (dynamic_cast<const DivergedLoss*>(&e) || dynamic_cast<const ZeroUncertainty*>(&e) ||
      dynamic_cast<const CholeskyFailure*>(&e) || dynamic_cast<const AllStartsFailed*>(&e))
    return kExitTraining;
  if (dynamic_cast<const InvalidArgument*>(&e) || dynamic_cast<const CorruptFile*>(&e) ||
      dynamic_cast<const FormatVersionMismatch*>(&e) || dynamic_cast<const NoEpistemicUQ*>(&e))
    return kExitUsage;
  return kExitFailure;
}

/// Relative output paths are placed under $UQBENCH_OUTPUT_ROOT when it is set.
inline fs::path resolve_output(const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') return fs::path(root) / p;
  return p;
}

struct ModelEntry {
  std::string name;
  uq::SurrogateConfig config;
};

struct DatasetSection {
  std::optional<fs::path> file;  // reuse an existing dataset instead of generating
  data::GenerationMeta meta;
  std::size_t n = 1000;
  std::size_t n_train = 25;
  std::uint64_t split_seed = 0;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 0;
  fs::path output_dir = "runs/experiment";
  std::size_t threads = 1;
  std::uint64_t prediction_seed = 0;
  bool keep_going = false;
  DatasetSection dataset;
  std::vector<ModelEntry> models;

  void validate() const {
    if (schema_version != kConfigSchemaVersion)
      throw InvalidArgument("config schema_version " + std::to_string(schema_version) + " unsupported (expected " +
                            std::to_string(kConfigSchemaVersion) + ")");
    if (models.empty()) throw InvalidArgument("config: models list is empty");
    if (threads < 1) throw InvalidArgument("config: threads must be >= 1");
    dataset.meta.validate();
    if (!dataset.file) {
      if (dataset.n < 2) throw InvalidArgument("config: dataset.n must be >= 2");
      if (dataset.n_train < 1 || dataset.n_train >= dataset.n)
        throw InvalidArgument("config: need 1 <= dataset.n_train < dataset.n");
    }
    std::set<std::string> names;
    for (const auto& m : models) {
      if (!names.insert(m.name).second) throw InvalidArgument("config: duplicate model name '" + m.name + "'");
      m.config.validate();
    }
  }
};

namespace detail {
inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* key : keys) ok = ok || k == key;
    if (!ok) throw InvalidArgument(where + ": unknown key '" + k + "'");
  }
}
}  // namespace detail

/// Relative dataset.file paths are taken relative to `base_dir` (the config's directory).
inline ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir = {}) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  ExperimentConfig c;
  try {
    detail::reject_unknown(j, {"schema_version", "seed", "output_dir", "threads", "prediction_seed", "keep_going", "dataset",
                               "models", "description"},
                           "config");
    c.schema_version = j.value("schema_version", 0);
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir.string());
    c.threads = j.value("threads", c.threads);
    c.prediction_seed = j.value("prediction_seed", c.prediction_seed);
    c.keep_going = j.value("keep_going", c.keep_going);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      detail::reject_unknown(d, {"file", "n", "n_train", "split_seed", "m", "seed", "z_star", "kernel", "mmt"}, "dataset");
      c.dataset.meta = data::generation_meta_from_json(d);
      c.dataset.n = d.value("n", c.dataset.n);
      c.dataset.n_train = d.value("n_train", c.dataset.n_train);
      c.dataset.split_seed = d.value("split_seed", c.seed);
      if (d.contains("file") && !d.at("file").is_null()) {
        fs::path f = d.at("file").get<std::string>();
        c.dataset.file = f.is_absolute() || base_dir.empty() ? f : base_dir / f;
      }
    } else {
      c.dataset.split_seed = c.seed;
    }
    if (j.contains("models")) {
      std::map<std::string, int> seen;
      for (json m : j.at("models")) {
        std::string name;
        if (m.contains("name")) {
          name = m.at("name").get<std::string>();
          m.erase("name");
        }
        uq::SurrogateConfig base;
        base.seed = c.seed;
        auto cfg = uq::surrogate_config_from_json(m, base);
        cfg.threads = c.threads;
        if (name.empty()) {
          name = std::string(uq::to_string(cfg.kind));
          if (const int k = seen[name]++; k > 0) name += "_" + std::to_string(k);
        }
        c.models.push_back({name, cfg});
      }
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(is, nullptr, true, true);
  } catch (const json::exception& e) {
    throw InvalidArgument("config '" + path.string() + "': " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

/// Canonical form of a config, recorded in manifests.
inline json to_json(const ExperimentConfig& c) {
  json models = json::array();
  for (const auto& m : c.models) {
    auto mj = uq::to_json(m.config);
    mj["name"] = m.name;
    models.push_back(mj);
  }
  json d = data::to_json(c.dataset.meta);
  d.erase("created");
  d.erase("generator_version");
  d["n"] = c.dataset.n;
  d["n_train"] = c.dataset.n_train;
  d["split_seed"] = c.dataset.split_seed;
  if (c.dataset.file) d["file"] = c.dataset.file->filename().string();
  return {{"schema_version", c.schema_version}, {"seed", c.seed},         {"prediction_seed", c.prediction_seed},
          {"dataset", d},                       {"models", models}};
}

struct Artifact {
  std::string path;  // relative to the run directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

inline Artifact describe(const fs::path& root, const fs::path& file) {
  return {fs::relative(file, root).generic_string(), io::sha256_file(file), fs::file_size(file)};
}

inline void write_json(const fs::path& p, const json& j) { metrics::write_text(p, j.dump(2) + "\n"); }

inline json split_json(const data::Split& s, std::size_t n_train, std::uint64_t seed) {
  return {{"n_train", n_train}, {"seed", seed}, {"train", s.train}, {"validation", s.val}};
}

/// Evaluates trained models on the validation rows and writes the report
/// bundle into `dir`.
inline std::vector<fs::path> evaluate_models(const std::vector<std::pair<std::string, const uq::SurrogateModel*>>& models,
                                             const data::Dataset& ds, const data::Split& split,
                                             std::uint64_t prediction_seed, const fs::path& dir) {
  std::vector<metrics::NamedPredictions> entries;
  const Eigen::VectorXd yv = ds.targets(split.val);
  for (const auto& [name, m] : models) {
    const Eigen::MatrixXd Q = ds.features(split.val, m->config().functional);
    entries.push_back({name, m->capabilities(), m->predict(Q, {std::nullopt, prediction_seed})});
  }
  const auto bundle =
      metrics::report(entries, std::span<const double>(yv.data(), static_cast<std::size_t>(yv.size())));
  auto files = metrics::write_bundle(bundle, dir);
  for (const auto& m : bundle.models) {
    if (!m.nr) continue;
    std::ostringstream os;
    os << "y,mu,sigma,z\n";
    for (std::size_t i = 0; i < m.nr->z_values.size(); ++i)
      os << metrics::fmt(yv[static_cast<Eigen::Index>(i)]) << ',' << metrics::fmt(m.predictions[i].mu) << ','
         << metrics::fmt(m.predictions[i].total_sigma()) << ',' << metrics::fmt(m.nr->z_values[i]) << "\n";
    files.push_back(dir / (m.name + "_residuals.csv"));
    metrics::write_text(files.back(), os.str());
  }
  return files;
}

struct RunResult {
  fs::path run_dir;
  fs::path manifest;
  std::string manifest_digest;
  json manifest_json;
};

/// generate -> split -> train every model -> evaluate -> report, with a
/// manifest listing every artifact and its digest.
inline RunResult cmd_run(const ExperimentConfig& cfg, std::optional<fs::path> out_override = std::nullopt,
                         std::ostream* log = nullptr) {
  cfg.validate();
  const fs::path dir = resolve_output(out_override.value_or(cfg.output_dir));
  fs::create_directories(dir);
  std::vector<fs::path> files;
  auto say = [&](const std::string& s) {
    if (log) *log << s << std::endl;
  };

  data::Dataset ds;
  if (cfg.dataset.file) {
    say("loading dataset " + cfg.dataset.file->string());
    ds = data::load(*cfg.dataset.file);
  } else {
    say("generating " + std::to_string(cfg.dataset.n) + " samples");
    data::GenerateOptions go;
    go.threads = cfg.threads;
    ds = data::generate(cfg.dataset.meta, cfg.dataset.n, go);
  }
  if (cfg.dataset.n_train >= ds.size()) throw InsufficientRows("dataset has " + std::to_string(ds.size()) + " rows, n_train is " + std::to_string(cfg.dataset.n_train));
  files.push_back(dir / "dataset.uqb");
  data::save(ds, files.back());
  const auto sp = data::split(ds, cfg.dataset.n_train, cfg.dataset.split_seed);
  files.push_back(dir / "split.json");
  write_json(files.back(), split_json(sp, cfg.dataset.n_train, cfg.dataset.split_seed));

  std::vector<uq::SurrogateModel> trained;
  std::vector<std::string> names;
  json failures = json::array();
  for (const auto& m : cfg.models) {
    say("training " + m.name);
    try {
      trained.push_back(uq::train_surrogate(ds, sp.train, m.config));
      names.push_back(m.name);
      files.push_back(dir / "models" / (m.name + ".uqb"));
      trained.back().save(files.back());
    } catch (const std::exception& e) {
      if (!cfg.keep_going) throw;
      failures.push_back({{"model", m.name}, {"error", e.what()}});
    }
  }
  std::vector<std::pair<std::string, const uq::SurrogateModel*>> refs;
  for (std::size_t i = 0; i < trained.size(); ++i) refs.emplace_back(names[i], &trained[i]);
  say("evaluating");
  auto report_files = evaluate_models(refs, ds, sp, cfg.prediction_seed, dir / "report");
  files.insert(files.end(), report_files.begin(), report_files.end());

  json artifacts = json::array();
  for (const auto& f : files) {
    const auto a = describe(dir, f);
    artifacts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
  }
  json manifest = {{"generator_version", data::kGeneratorVersion},
                   {"config", to_json(cfg)},
                   {"artifacts", artifacts},
                   {"failures", failures}};
  RunResult r;
  r.run_dir = dir;
  r.manifest = dir / "manifest.json";
  write_json(r.manifest, manifest);
  r.manifest_digest = io::sha256_file(r.manifest);
  r.manifest_json = std::move(manifest);
  return r;
}

struct GenerateArgs {
  std::size_t m = 1;
  std::size_t n = 1000;
  double z_star = 6.0;
  std::uint64_t seed = 1;
  fs::path out;
  std::size_t threads = 1;
  bool save_fields = false;
  std::optional<fs::path> defaults;  // JSON with kernel/mmt overrides
};

inline data::Dataset cmd_generate(const GenerateArgs& a, std::ostream* log = nullptr) {
  if (a.out.empty()) throw InvalidArgument("generate: --out is required");
  data::GenerationMeta meta;
  if (a.defaults) {
    std::ifstream is(*a.defaults);
    if (!is) throw InvalidArgument("cannot open '" + a.defaults->string() + "'");
    meta = data::generation_meta_from_json(json::parse(is, nullptr, true, true).value("dataset", json::object()));
  }
  meta.m = a.m;
  meta.z_star = a.z_star;
  meta.seed = a.seed;
  data::GenerateOptions go;
  go.threads = a.threads;
  go.keep_final_fields = a.save_fields;
  if (log) {
    go.progress = [log](std::size_t done, std::size_t total) {
      if (done == total || done % 100 == 0) *log << "  " << done << "/" << total << std::endl;
    };
  }
  auto ds = data::generate(meta, a.n, go);
  data::save(ds, resolve_output(a.out));
  if (log && !ds.quarantine.empty()) *log << ds.quarantine.size() << " rows quarantined after blow-up" << std::endl;
  return ds;
}

struct TrainArgs {
  uq::SurrogateConfig config;
  fs::path data;
  fs::path out;
  std::size_t n_train = 25;
  std::uint64_t split_seed = 0;
};

inline uq::SurrogateModel cmd_train(const TrainArgs& a) {
  if (a.data.empty() || a.out.empty()) throw InvalidArgument("train: --data and --out are required");
  const auto ds = data::load(a.data);
  const auto sp = data::split(ds, a.n_train, a.split_seed);
  auto model = uq::train_surrogate(ds, sp.train, a.config);
  auto c = model.to_container();
  c.meta()["split"] = {{"n_train", a.n_train}, {"seed", a.split_seed}};
  c.meta()["dataset_sha256"] = io::sha256_file(a.data);
  c.save(resolve_output(a.out));
  return model;
}

struct EvaluateArgs {
  fs::path model;
  fs::path data;
  fs::path out;  // directory
  std::optional<std::size_t> n_train;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::size_t> n_e;
  std::uint64_t prediction_seed = 0;
};

/// Scores one model on the validation rows of its training split. Refuses
/// models without any uncertainty (ZeroUncertainty) and width mismatches.
inline metrics::NRReport cmd_evaluate(const EvaluateArgs& a) {
  if (a.model.empty() || a.data.empty() || a.out.empty()) throw InvalidArgument("evaluate: --model, --data and --out are required");
  const auto c = io::Container::load(a.model);
  const auto model = uq::SurrogateModel::from_container(c);
  const auto ds = data::load(a.data);
  const auto split_meta = c.meta().value("split", json::object());
  const auto n_train = a.n_train.value_or(split_meta.value("n_train", std::size_t{25}));
  const auto seed = a.split_seed.value_or(split_meta.value("seed", std::uint64_t{0}));
  const auto sp = data::split(ds, n_train, seed);
  const bool functional = model.config().functional;
  if (functional && !ds.functional_inputs) throw InvalidArgument("dataset has no functional inputs");
  const Eigen::MatrixXd Q = ds.features(sp.val, functional);
  if (static_cast<std::size_t>(Q.cols()) != model.input_dim())
    throw DimensionMismatch("evaluate: model input width vs dataset", model.input_dim(), static_cast<std::size_t>(Q.cols()));
  const Eigen::VectorXd y = ds.targets(sp.val);
  const auto pred = model.predict(Q, {a.n_e, a.prediction_seed});
  const auto name = std::string(uq::to_string(model.kind()));
  const fs::path dir = resolve_output(a.out);
  auto nr = metrics::normalized_residuals(pred, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
  std::vector<std::pair<std::string, const uq::SurrogateModel*>> refs = {{name, &model}};
  evaluate_models(refs, ds, sp, a.prediction_seed, dir);
  json nrj = {{"model", name},
              {"mean", nr.mean},
              {"variance", nr.variance},
              {"count", nr.z_values.size()},
              {"z", nr.z_values}};
  write_json(dir / (name + "_nr.json"), nrj);
  return nr;
}

struct ConvergenceArgs {
  fs::path model;
  fs::path data;
  fs::path out;  // directory
  std::vector<std::size_t> grid = {2, 3, 5, 10, 25, 50};
  std::size_t reference = 100;
  std::optional<std::size_t> n_train;
  std::optional<std::uint64_t> split_seed;
  std::uint64_t prediction_seed = 0;
};

inline uq::ConvergenceCurve cmd_convergence(const ConvergenceArgs& a) {
  if (a.model.empty() || a.data.empty() || a.out.empty()) throw InvalidArgument("convergence: --model, --data and --out are required");
  const auto c = io::Container::load(a.model);
  const auto model = uq::SurrogateModel::from_container(c);
  const auto ds = data::load(a.data);
  const auto split_meta = c.meta().value("split", json::object());
  const auto sp = data::split(ds, a.n_train.value_or(split_meta.value("n_train", std::size_t{25})),
                              a.split_seed.value_or(split_meta.value("seed", std::uint64_t{0})));
  const Eigen::MatrixXd Q = ds.features(sp.val, model.config().functional);
  const auto curve = uq::convergence_study(model, Q, a.grid, a.reference, a.prediction_seed);
  const fs::path dir = resolve_output(a.out);
  std::ostringstream lp, msd;
  lp << "n_e,log_pdf_difference\n";
  msd << "n_e,mean_squared_difference\n";
  for (const auto& p : curve.points) {
    lp << p.n_e << ',' << metrics::fmt(p.log_pdf_difference) << "\n";
    msd << p.n_e << ',' << metrics::fmt(p.mean_squared_difference) << "\n";
  }
  const auto name = std::string(uq::to_string(model.kind()));
  metrics::write_text(dir / (name + "_log_pdf_difference.csv"), lp.str());
  metrics::write_text(dir / (name + "_msd.csv"), msd.str());
  return curve;
}

/// Summary of any container file.
inline json cmd_inspect(const fs::path& file) {
  const auto c = io::Container::load(file);
  json sections = json::array();
  for (const auto& s : c.sections()) sections.push_back({{"name", s.name}, {"shape", {s.rows, s.cols}}});
  return {{"kind", c.kind()}, {"meta", c.meta()}, {"sections", sections}, {"sha256", io::sha256_file(file)}};
}

}  // namespace uqbench::cli

#endif  // UQBENCH_EXPERIMENT_HPP
