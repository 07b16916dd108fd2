#ifndef UQBENCH_DATASET_HPP
#define UQBENCH_DATASET_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uqbench/container.hpp"
#include "uqbench/kl.hpp"
#include "uqbench/mmt.hpp"
#include "uqbench/parallel.hpp"
#include "uqbench/random.hpp"

namespace uqbench::data {

using io::json;

inline constexpr const char* kGeneratorVersion = "uqbench-1.0.0";

/// Timestamp recorded in generated files. Honors SOURCE_DATE_EPOCH so that
/// repeated runs stay byte-identical; defaults to the Unix epoch.
inline std::string reproducible_timestamp() {
  std::time_t t = 0;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env != nullptr) t = static_cast<std::time_t>(std::atoll(env));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct GenerationMeta {
  std::uint64_t seed = 1;
  double z_star = 6.0;
  kl::KernelSpec kernel;
  mmt::MMTParams mmt;
  std::size_t m = 1;
  std::string created = reproducible_timestamp();
  std::string generator_version = kGeneratorVersion;

  void validate() const {
    kernel.validate();
    mmt.validate();
    if (!(z_star > 0.0)) throw InvalidArgument("GenerationMeta: z_star must be > 0");
    if (m < 1 || m > kernel.grid_size) throw InvalidArgument("GenerationMeta: need 1 <= m <= grid_size");
    if (kernel.grid_size != mmt.grid_size)
      throw InvalidArgument("GenerationMeta: kernel and solver grid sizes differ");
  }

  std::size_t input_dim() const noexcept { return 2 * m; }
};

inline json to_json(const GenerationMeta& g) {
  const auto& d = g.mmt.dissipation;
  return {{"seed", g.seed},
          {"z_star", g.z_star},
          {"m", g.m},
          {"created", g.created},
          {"generator_version", g.generator_version},
          {"kernel", {{"sigma_u_sq", g.kernel.sigma_u_sq}, {"l_u", g.kernel.l_u}, {"grid_size", g.kernel.grid_size}}},
          {"mmt",
           {{"lambda", g.mmt.lambda},
            {"alpha_m", g.mmt.alpha_m},
            {"beta", g.mmt.beta},
            {"grid_size", g.mmt.grid_size},
            {"t_end", g.mmt.t_end},
            {"dt", g.mmt.dt},
            {"dissipation",
             {{"cutoff_fraction", d.cutoff_fraction}, {"strength", d.strength}, {"exponent", d.exponent}}}}}};
}

/// Missing keys fall back to the defaults above.
inline GenerationMeta generation_meta_from_json(const json& j) {
  GenerationMeta g;
  g.seed = j.value("seed", g.seed);
  g.z_star = j.value("z_star", g.z_star);
  g.m = j.value("m", g.m);
  g.created = j.value("created", g.created);
  g.generator_version = j.value("generator_version", g.generator_version);
  if (j.contains("kernel")) {
    const auto& k = j.at("kernel");
    g.kernel.sigma_u_sq = k.value("sigma_u_sq", g.kernel.sigma_u_sq);
    g.kernel.l_u = k.value("l_u", g.kernel.l_u);
    g.kernel.grid_size = k.value("grid_size", g.kernel.grid_size);
  }
  if (j.contains("mmt")) {
    const auto& p = j.at("mmt");
    g.mmt.lambda = p.value("lambda", g.mmt.lambda);
    g.mmt.alpha_m = p.value("alpha_m", g.mmt.alpha_m);
    g.mmt.beta = p.value("beta", g.mmt.beta);
    g.mmt.grid_size = p.value("grid_size", g.kernel.grid_size);
    g.mmt.t_end = p.value("t_end", g.mmt.t_end);
    g.mmt.dt = p.value("dt", g.mmt.dt);
    if (p.contains("dissipation")) {
      const auto& d = p.at("dissipation");
      g.mmt.dissipation.cutoff_fraction = d.value("cutoff_fraction", g.mmt.dissipation.cutoff_fraction);
      g.mmt.dissipation.strength = d.value("strength", g.mmt.dissipation.strength);
      g.mmt.dissipation.exponent = d.value("exponent", g.mmt.dissipation.exponent);
    }
  } else {
    g.mmt.grid_size = g.kernel.grid_size;
  }
  return g;
}

/// A row excluded from a generated batch because the solver blew up.
struct QuarantinedRow {
  std::size_t index = 0;  // position in the requested LHS batch
  Eigen::VectorXd alpha;
  double time = 0.0;
};

struct Dataset {
  Eigen::MatrixXd inputs;                           // n x 2m
  std::optional<Eigen::MatrixXd> functional_inputs;  // n x 2*grid (real parts, then imaginary parts)
  Eigen::VectorXd outputs;                          // n
  GenerationMeta meta;
  std::size_t requested = 0;
  std::vector<QuarantinedRow> quarantine;
  std::optional<Eigen::MatrixXd> final_fields;  // debug export, same layout as functional_inputs

  std::size_t size() const noexcept { return static_cast<std::size_t>(outputs.size()); }
  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(inputs.cols()); }

  void validate() const {
    const auto n = outputs.size();
    if (inputs.rows() != n) throw InvalidArgument("Dataset: input/output row counts differ");
    if (functional_inputs && functional_inputs->rows() != n)
      throw InvalidArgument("Dataset: functional/output row counts differ");
    if (!inputs.allFinite() || !outputs.allFinite() || (functional_inputs && !functional_inputs->allFinite()))
      throw InvalidArgument("Dataset: non-finite entries");
    if (!(meta.z_star > 0.0)) throw InvalidArgument("Dataset: z_star must be > 0");
  }

  /// Rows `idx` of the chosen input representation.
  Eigen::MatrixXd features(std::span<const std::size_t> idx, bool functional) const {
    const Eigen::MatrixXd& src = functional ? functional_inputs.value() : inputs;
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), src.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = src.row(static_cast<Eigen::Index>(idx[r]));
    return out;
  }

  Eigen::VectorXd targets(std::span<const std::size_t> idx) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) out[static_cast<Eigen::Index>(r)] = outputs[static_cast<Eigen::Index>(idx[r])];
    return out;
  }
};

inline Eigen::VectorXd functional_trace(const Eigen::VectorXcd& u) {
  const auto n = u.size();
  Eigen::VectorXd t(2 * n);
  t.head(n) = u.real();
  t.tail(n) = u.imag();
  return t;
}

struct GenerateOptions {
  std::size_t threads = 1;
  bool keep_final_fields = false;
  /// Fraction of rows allowed to blow up before the batch is rejected.
  double blowup_budget = 0.01;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// LHS-samples n coefficient vectors in [-z*, z*]^{2m}, simulates each and
/// records y. Rows whose simulation blows up are quarantined.
inline Dataset generate(const GenerationMeta& meta, std::size_t n, const GenerateOptions& opt = {}) {
  meta.validate();
  Dataset ds;
  ds.meta = meta;
  ds.requested = n;
  const auto dim = meta.input_dim();
  const auto grid = meta.kernel.grid_size;
  if (n == 0) {
    ds.inputs.resize(0, static_cast<Eigen::Index>(dim));
    ds.functional_inputs = Eigen::MatrixXd(0, static_cast<Eigen::Index>(2 * grid));
    ds.outputs.resize(0);
    if (opt.keep_final_fields) ds.final_fields = Eigen::MatrixXd(0, static_cast<Eigen::Index>(2 * grid));
    return ds;
  }
  const auto basis = kl::eigendecompose(meta.kernel, meta.m);
  const Eigen::MatrixXd alphas = kl::sample_lhs(basis, n, meta.z_star, meta.seed);

  struct Slot {
    double y = 0.0;
    Eigen::VectorXd trace, final_trace;
    std::optional<double> blowup_time;
  };
  std::vector<Slot> slots(n);
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  parallel_for(n, opt.threads, [&](std::size_t i) {
    const Eigen::VectorXd a = alphas.row(static_cast<Eigen::Index>(i)).transpose();
    Slot& s = slots[i];
    const auto u0 = kl::synthesize_field(basis, a);
    s.trace = functional_trace(u0);
    try {
      const auto final_field = mmt::integrate(mmt::ComplexField{u0, 0.0}, meta.mmt);
      s.y = mmt::extreme_real_amplitude(final_field.values);
      if (opt.keep_final_fields) s.final_trace = functional_trace(final_field.values);
    } catch (const BlowUp& e) {
      s.blowup_time = e.time();
    }
    const auto d = done.fetch_add(1) + 1;
    if (opt.progress) {
      std::lock_guard<std::mutex> lock(progress_mutex);
      opt.progress(d, n);
    }
  });

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i].blowup_time) {
      ds.quarantine.push_back({i, alphas.row(static_cast<Eigen::Index>(i)).transpose(), *slots[i].blowup_time});
    } else {
      kept.push_back(i);
    }
  }
  if (static_cast<double>(ds.quarantine.size()) > opt.blowup_budget * static_cast<double>(n))
    throw BlowUpBudgetExceeded(std::to_string(ds.quarantine.size()) + " of " + std::to_string(n) +
                               " simulations blew up (budget " + std::to_string(opt.blowup_budget * 100.0) + "%)");

  const auto kn = static_cast<Eigen::Index>(kept.size());
  ds.inputs.resize(kn, static_cast<Eigen::Index>(dim));
  ds.outputs.resize(kn);
  Eigen::MatrixXd traces(kn, static_cast<Eigen::Index>(2 * grid));
  Eigen::MatrixXd finals;
  if (opt.keep_final_fields) finals.resize(kn, static_cast<Eigen::Index>(2 * grid));
  for (Eigen::Index r = 0; r < kn; ++r) {
    const auto i = kept[static_cast<std::size_t>(r)];
    ds.inputs.row(r) = alphas.row(static_cast<Eigen::Index>(i));
    ds.outputs[r] = slots[i].y;
    traces.row(r) = slots[i].trace.transpose();
    if (opt.keep_final_fields) finals.row(r) = slots[i].final_trace.transpose();
  }
  ds.functional_inputs = std::move(traces);
  if (opt.keep_final_fields) ds.final_fields = std::move(finals);
  return ds;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Uniformly random train/validation partition of [0, n).
inline Split split(std::size_t n, std::size_t n_train, std::uint64_t seed) {
  if (n_train >= n)
    throw InsufficientRows("split: n_train (" + std::to_string(n_train) + ") must be < n (" + std::to_string(n) + ")");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0x5917);
  std::shuffle(idx.begin(), idx.end(), rng);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

inline Split split(const Dataset& ds, std::size_t n_train, std::uint64_t seed) { return split(ds.size(), n_train, seed); }

inline void add_basis(io::Container& c, const kl::KLBasis& basis) {
  const auto m = basis.m();
  const auto n = basis.grid_size();
  Eigen::VectorXd ev = Eigen::Map<const Eigen::VectorXd>(basis.eigenvalues().data(), static_cast<Eigen::Index>(m));
  Eigen::MatrixXd modes(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(2 * n));
  json ids = json::array();
  for (std::size_t j = 0; j < m; ++j) {
    const auto& phi = basis.mode(j);
    for (std::size_t x = 0; x < n; ++x) {
      modes(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(2 * x)) = phi[static_cast<Eigen::Index>(x)].real();
      modes(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(2 * x + 1)) = phi[static_cast<Eigen::Index>(x)].imag();
    }
    const auto& id = basis.mode_ids()[j];
    ids.push_back({{"wavenumber", id.wavenumber}, {"type", id.type == kl::ModeType::cosine ? "cos" : "sin"}});
  }
  c.add_vector("kl_eigenvalues", ev);
  c.add("kl_modes", modes);
  c.meta()["kl_modes"] = ids;
}

inline io::Container to_container(const Dataset& ds) {
  io::Container c("dataset");
  c.meta()["generation"] = to_json(ds.meta);
  c.meta()["requested"] = ds.requested;
  c.meta()["rows"] = ds.size();
  c.add("inputs", ds.inputs);
  c.add_vector("outputs", ds.outputs);
  if (ds.functional_inputs) c.add("functional_inputs", *ds.functional_inputs);
  if (ds.final_fields) c.add("final_fields", *ds.final_fields);
  Eigen::MatrixXd q(static_cast<Eigen::Index>(ds.quarantine.size()), static_cast<Eigen::Index>(ds.inputs.cols() + 2));
  for (std::size_t r = 0; r < ds.quarantine.size(); ++r) {
    const auto rr = static_cast<Eigen::Index>(r);
    q(rr, 0) = static_cast<double>(ds.quarantine[r].index);
    q.row(rr).segment(1, ds.inputs.cols()) = ds.quarantine[r].alpha.transpose();
    q(rr, q.cols() - 1) = ds.quarantine[r].time;
  }
  c.add("quarantine", q);
  if (ds.meta.m >= 1 && ds.meta.m <= ds.meta.kernel.grid_size) add_basis(c, kl::eigendecompose(ds.meta.kernel, ds.meta.m));
  return c;
}

inline Dataset from_container(const io::Container& c) {
  if (c.kind() != "dataset") throw CorruptFile("expected a dataset container, found '" + c.kind() + "'");
  Dataset ds;
  try {
    ds.meta = generation_meta_from_json(c.meta().at("generation"));
    ds.requested = c.meta().at("requested").get<std::size_t>();
  } catch (const json::exception& e) {
    throw CorruptFile(std::string("dataset: malformed metadata: ") + e.what());
  }
  ds.inputs = c.matrix("inputs");
  ds.outputs = c.vector("outputs");
  if (c.has("functional_inputs")) ds.functional_inputs = c.matrix("functional_inputs");
  if (c.has("final_fields")) ds.final_fields = c.matrix("final_fields");
  if (c.has("quarantine")) {
    const auto q = c.matrix("quarantine");
    for (Eigen::Index r = 0; r < q.rows(); ++r)
      ds.quarantine.push_back({static_cast<std::size_t>(q(r, 0)), q.row(r).segment(1, q.cols() - 2).transpose(), q(r, q.cols() - 1)});
  }
  ds.validate();
  return ds;
}

inline void save(const Dataset& ds, const std::filesystem::path& path) { to_container(ds).save(path); }

inline Dataset load(const std::filesystem::path& path) { return from_container(io::Container::load(path)); }

}  // namespace uqbench::data

#endif  // UQBENCH_DATASET_HPP
