// uqbench: generate MMT datasets, train surrogates, score their uncertainty.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "uqbench/experiment.hpp"

namespace {

using namespace uqbench;

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto comma = s.find(',', pos);
    const auto tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      const auto v = std::stoull(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw InvalidArgument("expected a comma-separated list of integers, got '" + s + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw InvalidArgument("empty integer list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-quantification benchmark for MMT surrogates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(data::kGeneratorVersion));

  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out;

  // generate
  auto* gen = app.add_subcommand("generate", "Sample and simulate an MMT dataset");
  cli::GenerateArgs ga;
  std::size_t dim = 0;
  std::string defaults;
  gen->add_option("--m", ga.m, "Complex KL modes (input dimension is 2m)");
  gen->add_option("--dim", dim, "Input dimension (even; overrides --m)");
  gen->add_option("--n", ga.n, "Number of samples");
  gen->add_option("--z-star", ga.z_star, "Coefficient range [-z*, z*]");
  gen->add_option("--seed", ga.seed, "Sampling seed");
  gen->add_option("--threads", ga.threads, "Worker threads");
  gen->add_option("--out", out, "Output dataset file")->required();
  gen->add_option("--defaults", defaults, "JSON file with kernel/solver parameters");
  gen->add_flag("--save-fields", ga.save_fields, "Also store the final fields");

  // train
  auto* tr = app.add_subcommand("train", "Train one surrogate on a dataset split");
  cli::TrainArgs ta;
  std::string model_name = "enn", data_file, hidden;
  double rd = -1.0;
  std::size_t ne = 0, epochs = 0;
  tr->add_option("--model", model_name, "gp, nn, gnn, enn, egnn, bnn, dnn or dgnn");
  tr->add_option("--data", data_file, "Dataset file")->required();
  tr->add_option("--out", out, "Output model file")->required();
  tr->add_option("--rd", rd, "Dropout rate (dnn, dgnn)");
  tr->add_option("--ne", ne, "Ensemble members or inference passes");
  tr->add_option("--epochs", epochs, "Training epochs");
  tr->add_option("--hidden", hidden, "Hidden widths, e.g. 64,64,64,64");
  tr->add_option("--n-train", ta.n_train, "Training rows");
  tr->add_option("--split-seed", ta.split_seed, "Split seed");
  tr->add_option("--seed", seed, "Training seed");
  tr->add_option("--threads", threads, "Worker threads");
  tr->add_flag("--functional", ta.config.functional, "Train on the full input field instead of KL coefficients");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Normalized residuals and uncertainty histograms");
  cli::EvaluateArgs ea;
  std::string model_file;
  std::size_t eval_ne = 0;
  ev->add_option("--model", model_file, "Model file")->required();
  ev->add_option("--data", data_file, "Dataset file")->required();
  ev->add_option("--out", out, "Output directory")->required();
  ev->add_option("--ne", eval_ne, "Override the ensemble size");
  ev->add_option("--seed", ea.prediction_seed, "Prediction seed");

  // convergence
  auto* cv = app.add_subcommand("convergence", "Convergence of sigma_eps with ensemble size");
  cli::ConvergenceArgs ca;
  std::string grid;
  cv->add_option("--model", model_file, "Model file")->required();
  cv->add_option("--data", data_file, "Dataset file")->required();
  cv->add_option("--out", out, "Output directory")->required();
  cv->add_option("--grid", grid, "Ensemble sizes, e.g. 2,3,5,10,25,50");
  cv->add_option("--reference", ca.reference, "Reference ensemble size");
  cv->add_option("--seed", ca.prediction_seed, "Prediction seed");

  // run
  auto* rn = app.add_subcommand("run", "Full experiment from a config file");
  std::string config_file;
  bool keep_going = false;
  rn->add_option("config", config_file, "Experiment config (JSON)")->required();
  rn->add_option("--out", out, "Run directory (overrides output_dir)");
  rn->add_option("--threads", threads, "Worker threads");
  rn->add_option("--seed", seed, "Global seed (overrides the config)");
  rn->add_flag("--keep-going", keep_going, "Continue after a model fails");

  // inspect
  auto* in = app.add_subcommand("inspect", "Print the header of a dataset or model file");
  std::string inspect_file;
  in->add_option("file", inspect_file, "Container file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  try {
    if (gen->parsed()) {
      if (dim != 0) {
        if (dim % 2 != 0) throw InvalidArgument("--dim must be even (real and imaginary parts of m modes)");
        ga.m = dim / 2;
      }
      ga.out = out;
      if (!defaults.empty()) ga.defaults = defaults;
      const auto ds = cli::cmd_generate(ga, &std::cerr);
      std::cout << ds.size() << " rows written to " << cli::resolve_output(ga.out).string() << "\n";
    } else if (tr->parsed()) {
      auto& c = ta.config;
      c.kind = uq::parse_kind(model_name);
      if (rd >= 0.0) c.dropout_rate = rd;
      if (ne != 0) c.n_e = ne;
      if (epochs != 0) c.epochs = epochs;
      if (!hidden.empty()) c.hidden = parse_list(hidden);
      c.seed = seed;
      c.threads = threads;
      ta.data = data_file;
      ta.out = out;
      cli::cmd_train(ta);
      std::cout << "model written to " << cli::resolve_output(ta.out).string() << "\n";
    } else if (ev->parsed()) {
      ea.model = model_file;
      ea.data = data_file;
      ea.out = out;
      if (eval_ne != 0) ea.n_e = eval_ne;
      const auto nr = cli::cmd_evaluate(ea);
      std::cout << "NR mean " << nr.mean << ", variance " << nr.variance << " over " << nr.z_values.size() << " rows\n";
    } else if (cv->parsed()) {
      ca.model = model_file;
      ca.data = data_file;
      ca.out = out;
      if (!grid.empty()) ca.grid = parse_list(grid);
      const auto curve = cli::cmd_convergence(ca);
      for (const auto& p : curve.points)
        std::cout << "n_e=" << p.n_e << "  log-pdf diff " << p.log_pdf_difference << "  msd " << p.mean_squared_difference << "\n";
    } else if (rn->parsed()) {
      auto cfg = cli::load_experiment_config(config_file);
      if (rn->count("--seed") > 0) {
        cfg.seed = seed;
        for (auto& m : cfg.models) m.config.seed = seed;
      }
      if (rn->count("--threads") > 0) {
        cfg.threads = threads;
        for (auto& m : cfg.models) m.config.threads = threads;
      }
      cfg.keep_going = cfg.keep_going || keep_going;
      std::optional<std::filesystem::path> o;
      if (!out.empty()) o = out;
      const auto r = cli::cmd_run(cfg, o, &std::cerr);
      std::cout << r.manifest.string() << "  sha256 " << r.manifest_digest << "\n";
    } else if (in->parsed()) {
      std::cout << cli::cmd_inspect(inspect_file).dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "uqbench: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
  return cli::kExitOk;
}
