#pragma once
// Experiment commands behind the `gibbslab` executable.  Each command reads
// its config through a Reader, writes results plus resolved_config.json into
// the output directory, and is deterministic given the resolved config.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gibbslab/config.hpp"
#include "gibbslab/dynamics.hpp"
#include "gibbslab/empirical_fields.hpp"
#include "gibbslab/entropy_gap.hpp"
#include "gibbslab/estimators.hpp"
#include "gibbslab/observables.hpp"
#include "gibbslab/phase_scan.hpp"

namespace gibbslab::cli {

namespace fs = std::filesystem;

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"sample", "mgf-check", "dv-bound", "decay", "phase-scan", "gnz-check"};
  return names;
}

/// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<unsigned> threads;
};

struct RunContext {
  std::string command;
  fs::path out;
  std::uint64_t seed = 1;
  std::size_t replicas = 1;
  unsigned threads = 1;
  std::ostream* log = nullptr;
};

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << s;
}

inline void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Samplers

/// {"interaction": {...}, "intensity": z}; the intensity is a Poisson
/// parameter and must be 1 for interacting models (reference process fixed).
struct ModelSpec {
  Interaction interaction;
  double intensity = 1.0;
  bool poisson() const { return interaction.is_free(); }
};

inline ModelSpec model_from_config(Reader r, int dim) {
  ModelSpec m;
  m.interaction = interaction_from_config(r.child_or_empty("interaction"), dim);
  m.intensity = positive(r, "intensity", opt<double>(r, "intensity", 1.0));
  if (!m.poisson() && m.intensity != 1.0)
    r.fail("intensity", "interacting models use the intensity-one reference; intensity must be 1");
  r.finish();
  return m;
}

struct SamplerSettings {
  std::size_t burn_in = 100000;
  std::size_t gap = 1000;
};

inline SamplerSettings sampler_from_config(Reader r) {
  SamplerSettings s;
  s.burn_in = opt<std::size_t>(r, "burn_in", s.burn_in);
  s.gap = opt<std::size_t>(r, "gap", s.gap);
  if (s.gap == 0) r.fail("gap", "must be >= 1");
  r.finish();
  return s;
}

using SamplerFn = std::function<PointConfiguration(Rng&)>;

/// Exact Poisson draws for the free model, else a periodic-window MH chain.
inline SamplerFn make_sampler(const ModelSpec& m, const Window& w, const SamplerSettings& s,
                              const BoundaryCondition* boundary = nullptr) {
  if (m.poisson() && (!boundary || boundary->is_periodic() || boundary->points().empty())) {
    const double z = m.intensity;
    return [w, z](Rng& rng) { return sample_poisson(w, z, rng); };
  }
  auto chain = std::make_shared<GibbsSampler>(w, m.interaction, boundary ? *boundary : BoundaryCondition::periodic(),
                                              s.burn_in, s.gap);
  return [chain](Rng& rng) { return (*chain)(rng); };
}

/// n values of `fn` over samples, split over replicas with stream
/// `stream0 + r`; concatenated in replica order, independent of `threads`.
template <class Fn>
std::vector<double> replicated_values(const ModelSpec& m, const Window& w, const SamplerSettings& s, std::size_t n,
                                      const RunContext& ctx, std::uint64_t stream0, Fn&& fn) {
  const std::size_t reps = std::max<std::size_t>(1, std::min(ctx.replicas, n));
  std::vector<std::vector<double>> parts(reps);
  parallel_for(reps, ctx.threads, [&](std::size_t r) {
    Rng rng = make_rng({ctx.seed, stream0 + r});
    SamplerFn sampler = make_sampler(m, w, s);
    const std::size_t count = n / reps + (r < n % reps ? 1 : 0);
    for (std::size_t i = 0; i < count; ++i) parts[r].push_back(fn(sampler(rng), rng));
  });
  std::vector<double> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// ---------------------------------------------------------------------------
// sample

inline std::vector<Point> points_from_config(Reader& r, const std::string& key, int dim) {
  json raw = r.get<json>(key);
  if (!raw.is_array()) r.fail(key, "expected an array of coordinate arrays");
  std::vector<Point> out;
  for (const auto& p : raw) {
    if (!p.is_array() || static_cast<int>(p.size()) != dim) r.fail(key, "each point needs exactly dim coordinates");
    Point q{0.0, 0.0, 0.0};
    for (int k = 0; k < dim; ++k) {
      if (!p[k].is_number()) r.fail(key, "coordinates must be numbers");
      q[k] = p[k].get<double>();
    }
    out.push_back(q);
  }
  return out;
}

/// Close pairs observed at distance <= range versus the Poisson expectation
/// at the same density; < 1 signals repulsion.
inline double close_pair_ratio(const std::vector<PointConfiguration>& snaps, double range) {
  double pairs = 0.0, expected = 0.0;
  for (const auto& c : snaps) {
    for (std::size_t i = 0; i < c.size(); ++i)
      c.for_each_within(c[i], range, [&](std::size_t j, const Point&, double) { pairs += j > i; });
    const double n = static_cast<double>(c.size());
    const double ball = c.dim() == 1 ? 2.0 * range : (c.dim() == 2 ? kPi * range * range : 4.0 / 3.0 * kPi * std::pow(range, 3));
    expected += 0.5 * n * (n - 1.0) * ball / c.window().volume();
  }
  return expected > 0.0 ? pairs / expected : std::numeric_limits<double>::quiet_NaN();
}

inline json cmd_sample(Reader& r, RunContext& ctx) {
  const Window w = window_from_config(r.child("window"));
  const ModelSpec m = model_from_config(r.child_or_empty("model"), w.dim());
  const auto method = opt<std::string>(r, "method", "mh");
  if (method != "mh" && method != "ctmc") r.fail("method", "must be \"mh\" or \"ctmc\"");
  const std::size_t n_snapshots = opt<std::size_t>(r, "n_snapshots", 10);
  if (n_snapshots < 1) r.fail("n_snapshots", "must be >= 1");
  const SamplerSettings s = sampler_from_config(r.child_or_empty("sampler"));
  std::optional<BoundaryCondition> boundary;
  if (!w.periodic()) {
    if (!r.has("boundary_points")) r.fail("boundary_points", "required for a free window (may be an empty list)");
    boundary = BoundaryCondition::fixed(points_from_config(r, "boundary_points", w.dim()));
    if (method == "ctmc") r.fail("method", "ctmc sampling supports periodic windows only");
  }
  double t_burn = 10.0, t_gap = 5.0;
  if (method == "ctmc") {
    t_burn = opt<double>(r, "t_burn_in", t_burn);
    t_gap = positive(r, "t_gap", opt<double>(r, "t_gap", t_gap));
    if (!(t_burn >= 0.0)) r.fail("t_burn_in", "must be >= 0");
  }
  r.finish();
  m.interaction.check_window(w);

  const std::size_t reps = std::max<std::size_t>(1, std::min(ctx.replicas, n_snapshots));
  std::vector<std::vector<PointConfiguration>> snaps(reps);
  std::vector<std::string> trajectories(reps);
  parallel_for(reps, ctx.threads, [&](std::size_t rep) {
    Rng rng = make_rng({ctx.seed, rep});
    const std::size_t count = n_snapshots / reps + (rep < n_snapshots % reps ? 1 : 0);
    if (method == "ctmc") {
      const double t_end = t_burn + t_gap * static_cast<double>(count);
      const Trajectory traj = run_ctmc(PointConfiguration(w, cell_size_for(m.interaction)), m.interaction, t_end, rng);
      for (std::size_t i = 1; i <= count; ++i) snaps[rep].push_back(traj.state_at(t_burn + t_gap * static_cast<double>(i)));
      std::ostringstream os;
      traj.write_jsonl(os);
      trajectories[rep] = os.str();
    } else {
      SamplerFn sampler = make_sampler(m, w, s, boundary ? &*boundary : nullptr);
      for (std::size_t i = 0; i < count; ++i) snaps[rep].push_back(sampler(rng));
    }
  });

  json files = json::array();
  std::vector<PointConfiguration> all;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    for (std::size_t i = 0; i < snaps[rep].size(); ++i) {
      std::ostringstream name;
      name << "snapshot_r" << std::setw(3) << std::setfill('0') << rep << "_" << std::setw(5) << i << ".txt";
      std::ofstream f(ctx.out / name.str());
      write_snapshot(f, snaps[rep][i]);
      files.push_back({{"file", name.str()}, {"replica", rep}, {"index", i}, {"n_points", snaps[rep][i].size()}});
      all.push_back(snaps[rep][i]);
    }
    if (method == "ctmc") {
      std::ostringstream name;
      name << "trajectory_r" << std::setw(3) << std::setfill('0') << rep << ".jsonl";
      write_text(ctx.out / name.str(), trajectories[rep]);
    }
  }
  json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["seed"] = ctx.seed;
  manifest["method"] = method;
  manifest["snapshots"] = files;
  double total = 0.0;
  for (const auto& c : all) total += static_cast<double>(c.size());
  manifest["mean_density"] = total / (static_cast<double>(all.size()) * w.volume());
  if (m.interaction.range() > 0.0) manifest["close_pair_ratio"] = finite_or_null(close_pair_ratio(all, m.interaction.range()));
  write_json(ctx.out / "manifest.json", manifest);
  return manifest;
}

// ---------------------------------------------------------------------------
// mgf-check

inline SpaceAverageSpec averaging_from_config(Reader& r, const Kernel& k) {
  const double n = positive(r, "n", opt<double>(r, "n", 2.0));
  const double delta = opt<double>(r, "quad_spacing", k.support_radius() / 16.0);
  if (!(delta > 0.0)) r.fail("quad_spacing", "must be positive");
  try {
    return SpaceAverageSpec(k, n, delta);
  } catch (const std::invalid_argument& e) {
    r.fail("n", e.what());
  }
}

inline json cmd_mgf_check(Reader& r, RunContext& ctx) {
  const Window w = window_from_config(r.child("window"));
  const ModelSpec m = model_from_config(r.child_or_empty("model"), w.dim());
  const Kernel k = kernel_from_config(r.child("kernel"), w.dim());
  const SpaceAverageSpec spec = averaging_from_config(r, k);
  const auto grid = lambda_grid_from_config(r);
  const double c_nu = positive(r, "c_nu", opt<double>(r, "c_nu", 1.0));
  const std::size_t n_samples = opt<std::size_t>(r, "n_samples", 2000);
  if (n_samples < 2) r.fail("n_samples", "must be >= 2");
  const SamplerSettings s = sampler_from_config(r.child_or_empty("sampler"));
  r.finish();
  m.interaction.check_window(w);
  try {
    check_space_average_window(spec, PointConfiguration(w));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config.window: ") + e.what());
  }

  const auto values = replicated_values(m, w, s, n_samples, ctx, 0,
                                        [&](const PointConfiguration& c, Rng&) { return space_average(spec, c); });
  Rng boot = make_rng({ctx.seed, 1u << 20});
  const MgfEstimate e = log_mgf_from_values(values, grid, boot);
  const GradientConstants gc = gradient_constants(k, spec.n);

  std::ofstream f(ctx.out / "mgf_check.csv");
  EstimatorCsv csv(f, ctx.seed);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto mean = mean_estimate(values);
  csv.row("mean_F", nan, mean.mean, mean.std_error, n_samples);
  csv.row("beta", nan, gc.beta, 0.0, n_samples);
  csv.row("alpha_sq", nan, gc.alpha_sq_n, 0.0, n_samples);
  std::size_t violations = 0, overflows = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double bound = herbst_bound(c_nu, gc.alpha_sq_n, gc.beta, grid[i]);
    csv.row("empirical_log_mgf", grid[i], e.centered_log_mgf[i], e.std_errors[i], n_samples);
    csv.row("herbst_bound", grid[i], bound, 0.0, n_samples);
    if (e.overflow[i]) {
      ++overflows;
      csv.row("overflow", grid[i], 1.0, 0.0, n_samples);
      continue;
    }
    const double margin = bound - e.centered_log_mgf[i];
    csv.row("margin", grid[i], margin, e.std_errors[i], n_samples);
    if (margin < -3.0 * e.std_errors[i]) ++violations;
  }
  return {{"violations_beyond_3se", violations}, {"overflow_count", overflows}, {"beta", gc.beta}, {"alpha_sq", gc.alpha_sq_n}};
}

// ---------------------------------------------------------------------------
// dv-bound

inline std::vector<Kernel> default_kernel_family(int dim) {
  std::vector<Kernel> out;
  for (double a : {0.25, 0.5, 1.0, 2.0}) out.push_back(Kernel::tent(a, 1.0, 1, dim));
  return out;
}

inline json cmd_dv_bound(Reader& r, RunContext& ctx) {
  const Window w = window_from_config(r.child("window"));
  const ModelSpec mu = model_from_config(r.child("mu"), w.dim());
  const ModelSpec nu = model_from_config(r.child("nu"), w.dim());
  std::vector<Kernel> family;
  if (r.has("kernels")) {
    r.for_each_object("kernels", [&](Reader& kr) {
      // Echo each member through the kernel reader (validates and records defaults).
      family.push_back(kernel_from_config(kr, w.dim()));
    });
  } else {
    family = default_kernel_family(w.dim());
    json echo = json::array();
    for (double a : {0.25, 0.5, 1.0, 2.0}) echo.push_back({{"family", "tent"}, {"amplitude", a}, {"radius", 1.0}, {"sign", 1}});
    r.get<json>("kernels", echo);
  }
  const auto modes = opt<std::vector<std::string>>(r, "modes", {"analytic", "empirical"});
  bool analytic = false, empirical = false;
  for (const auto& md : modes) {
    if (md == "analytic") analytic = true;
    else if (md == "empirical") empirical = true;
    else r.fail("modes", "entries must be \"analytic\" or \"empirical\"");
  }
  if (modes.empty()) r.fail("modes", "must be nonempty");
  double c_nu = 0.0;
  if (analytic) {
    if (!r.has("c_nu")) r.fail("c_nu", "required when \"analytic\" is among the modes");
    c_nu = positive(r, "c_nu", req<double>(r, "c_nu"));
  } else if (r.has("c_nu")) {
    c_nu = positive(r, "c_nu", req<double>(r, "c_nu"));
  }
  const double n = positive(r, "n", opt<double>(r, "n", 2.0));
  const double delta_in = opt<double>(r, "quad_spacing", 0.0);
  if (delta_in < 0.0) r.fail("quad_spacing", "must be >= 0 (0 selects radius / 16)");
  const auto grid = lambda_grid_from_config(r);
  const std::size_t n_samples = opt<std::size_t>(r, "n_samples", 2000);
  if (n_samples < 2) r.fail("n_samples", "must be >= 2");
  const SamplerSettings s = sampler_from_config(r.child_or_empty("sampler"));
  r.finish();
  mu.interaction.check_window(w);
  nu.interaction.check_window(w);
  for (const auto& k : family) {
    try {
      check_space_average_window(SpaceAverageSpec(k, n, delta_in), PointConfiguration(w));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }

  // Separation: every kernel's f (sign +1) on the same mu and nu draws.
  const std::size_t fam = family.size();
  auto collect = [&](const ModelSpec& m, std::uint64_t stream0) {
    const std::size_t reps = std::max<std::size_t>(1, std::min(ctx.replicas, n_samples));
    std::vector<std::vector<std::vector<double>>> parts(reps, std::vector<std::vector<double>>(fam));
    parallel_for(reps, ctx.threads, [&](std::size_t rep) {
      Rng rng = make_rng({ctx.seed, stream0 + rep});
      SamplerFn sampler = make_sampler(m, w, s);
      const std::size_t count = n_samples / reps + (rep < n_samples % reps ? 1 : 0);
      for (std::size_t i = 0; i < count; ++i) {
        const PointConfiguration c = sampler(rng);
        for (std::size_t k = 0; k < fam; ++k) parts[rep][k].push_back(eval_f(family[k].with_sign(1), c));
      }
    });
    std::vector<std::vector<double>> dst(fam);
    for (auto& p : parts)
      for (std::size_t k = 0; k < fam; ++k) dst[k].insert(dst[k].end(), p[k].begin(), p[k].end());
    return dst;
  };
  const SeparationResult sep = separation_from_values(family, collect(mu, 0), collect(nu, 1u << 16));

  json out;
  out["schema_version"] = kSchemaVersion;
  out["seed"] = ctx.seed;
  out["n_samples"] = n_samples;
  out["separation"] = {{"separated", sep.separated},
                       {"kernel_index", sep.kernel_index},
                       {"kernel_id", sep.kernel->id()},
                       {"sign", sep.kernel->sign()},
                       {"rho", sep.rho},
                       {"rho_std_error", sep.std_error},
                       {"mu_mean_f", sep.mu_mean},
                       {"nu_mean_f", sep.nu_mean},
                       {"score", finite_or_null(sep.score)}};
  out["analytic"] = nullptr;
  out["empirical"] = nullptr;
  if (mu.poisson() && nu.poisson()) {
    const double a = mu.intensity, b = nu.intensity;
    out["reference_specific_entropy"] = a * std::log(a / b) - a + b;
  }
  out["notes"] = {"Lower bounds on the specific relative entropy, normalised by |L_n|; the bounded entropy lives on L_{n+r}.",
                  "A finite kernel family can only certify separation, never its absence."};
  if (sep.separated) {
    const SpaceAverageSpec spec(*sep.kernel, n, delta_in);
    if (analytic) {
      const double beta = beta_constant(spec.kernel);
      DvBoundReport rep = dv_report_analytic(sep.rho, beta, c_nu, spec);
      rep.rho_std_error = sep.std_error;
      rep.n_samples = n_samples;
      out["analytic"] = to_json(rep);
    }
    if (empirical) {
      auto fn = [&](const PointConfiguration& c, Rng&) { return space_average(spec, c); };
      const auto mv = replicated_values(mu, w, s, n_samples, ctx, 2u << 16, fn);
      const auto nv = replicated_values(nu, w, s, n_samples, ctx, 3u << 16, fn);
      Rng boot = make_rng({ctx.seed, 4u << 16});
      DvBoundReport rep = dv_bound_from_values(mv, nv, spec, grid, boot);
      out["empirical"] = to_json(rep);
    }
  }
  write_json(ctx.out / "dv_bound.json", out);
  return out;
}

// ---------------------------------------------------------------------------
// decay

inline json cmd_decay(Reader& r, RunContext& ctx) {
  const Window w = window_from_config(r.child("window"));
  if (!w.periodic()) r.fail("window", "decay runs on a periodic window");
  const double a0 = positive(r, "a0", opt<double>(r, "a0", 2.0));
  const auto t_grid = opt<std::vector<double>>(r, "t_grid", {0.0, 0.5, 1.0, 2.0});
  if (t_grid.empty()) r.fail("t_grid", "must be nonempty");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (!(t_grid[i] >= 0.0)) r.fail("t_grid", "times must be >= 0");
    if (i > 0 && !(t_grid[i] > t_grid[i - 1])) r.fail("t_grid", "must be sorted strictly increasing");
  }
  r.finish();
  if (ctx.replicas < 2) throw ConfigError("config.replicas: decay needs at least 2 replicas");
  const auto rows = ou_decay_empirical(a0, w, t_grid, ctx.replicas, {ctx.seed, 0}, ctx.threads);
  std::ofstream f(ctx.out / "decay.csv");
  f << "schema_version,t,density,density_se,rate_hat,rate_se,rate_analytic,envelope,within_3se,below_envelope,n_replicas,"
       "seed\n";
  std::size_t misses = 0;
  for (const auto& row : rows) {
    const bool within = std::abs(row.rate_hat - row.rate_analytic) <= 3.0 * row.rate_se || row.rate_hat == row.rate_analytic;
    const bool below = row.rate_hat <= row.envelope + 3.0 * row.rate_se;
    misses += !within || !below;
    f << kSchemaVersion << ',' << EstimatorCsv::num(row.t) << ',' << EstimatorCsv::num(row.density) << ','
      << EstimatorCsv::num(row.density_se) << ',' << EstimatorCsv::num(row.rate_hat) << ','
      << EstimatorCsv::num(row.rate_se) << ',' << EstimatorCsv::num(row.rate_analytic) << ','
      << EstimatorCsv::num(row.envelope) << ',' << within << ',' << below << ',' << ctx.replicas << ',' << ctx.seed
      << '\n';
  }
  return {{"rows", rows.size()}, {"misses", misses}};
}

// ---------------------------------------------------------------------------
// phase-scan

inline json cmd_phase_scan(Reader& r, RunContext& ctx) {
  PhaseScanSpec spec;
  {
    Reader wr = r.child("window");
    spec.half_side = positive(wr, "half_side", req<double>(wr, "half_side"));
    const int d = opt<int>(wr, "dim", 2);
    if (d != 2) wr.fail("dim", "phase-scan requires dim = 2");
    const auto b = opt<std::string>(wr, "boundary", "free");
    if (b != "free") wr.fail("boundary", "phase-scan conditions on boundary points; boundary must be \"free\"");
    wr.finish();
  }
  if (!r.has("boundary_points")) r.fail("boundary_points", "a free window needs a boundary specification");
  {
    Reader br = r.child("boundary_points");
    const auto kind = opt<std::string>(br, "kind", "dense_shell");
    if (kind != "dense_shell") br.fail("kind", "only \"dense_shell\" is supported");
    spec.shell_spacing = positive(br, "spacing", opt<double>(br, "spacing", spec.shell_spacing));
    br.finish();
  }
  {
    Reader ir = r.child_or_empty("interaction");
    const auto kind = opt<std::string>(ir, "kind", "area");
    if (kind != "area") ir.fail("kind", "phase-scan sweeps the area interaction");
    spec.radius = positive(ir, "radius", opt<double>(ir, "radius", spec.radius));
    spec.quad_resolution = opt<int>(ir, "quad_resolution", spec.quad_resolution);
    if (spec.quad_resolution < 1) ir.fail("quad_resolution", "must be >= 1");
    ir.finish();
  }
  spec.gammas = opt<std::vector<double>>(r, "gammas", spec.gammas);
  spec.core_margin = opt<double>(r, "core_margin", 2.0 * spec.radius);
  spec.samples_per_replica = opt<std::size_t>(r, "samples_per_replica", spec.samples_per_replica);
  const SamplerSettings s = sampler_from_config(r.child_or_empty("sampler"));
  r.finish();
  spec.burn_in = s.burn_in;
  spec.gap = s.gap;
  spec.replicas = ctx.replicas;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  const auto rows = phase_scan(spec, {ctx.seed, 0}, ctx.threads);
  {
    std::ofstream f(ctx.out / "phase_scan.csv");
    f << "schema_version,gamma,boundary,replica,density,seed,stream\n";
    for (const auto& row : rows)
      f << kSchemaVersion << ',' << EstimatorCsv::num(row.gamma) << ',' << row.boundary << ',' << row.replica << ','
        << EstimatorCsv::num(row.density) << ',' << ctx.seed << ',' << row.stream << '\n';
  }
  const auto summary = summarize_phase_scan(rows);
  json flagged = json::array();
  {
    std::ofstream f(ctx.out / "phase_scan_summary.csv");
    f << "schema_version,gamma,empty_mean,empty_se,dense_mean,dense_se,gap,gap_se,separated,replicas,seed\n";
    for (const auto& x : summary) {
      f << kSchemaVersion << ',' << EstimatorCsv::num(x.gamma) << ',' << EstimatorCsv::num(x.empty.mean) << ','
        << EstimatorCsv::num(x.empty.std_error) << ',' << EstimatorCsv::num(x.dense.mean) << ','
        << EstimatorCsv::num(x.dense.std_error) << ',' << EstimatorCsv::num(x.gap) << ',' << EstimatorCsv::num(x.gap_se)
        << ',' << x.separated << ',' << spec.replicas << ',' << ctx.seed << '\n';
      if (x.separated) flagged.push_back(x.gamma);
    }
  }
  return {{"separated_gammas", flagged}};
}

// ---------------------------------------------------------------------------
// gnz-check

inline json cmd_gnz_check(Reader& r, RunContext& ctx) {
  const Window w = window_from_config(r.child("window"));
  if (!w.periodic()) r.fail("window", "gnz-check samples on a periodic window");
  const ModelSpec m = model_from_config(r.child_or_empty("model"), w.dim());
  std::string tkind;
  Box region;
  {
    Reader tr = r.child_or_empty("test_function");
    tkind = opt<std::string>(tr, "kind", "indicator");
    if (tkind != "indicator" && tkind != "zero" && tkind != "birth_rate_weighted")
      tr.fail("kind", "must be \"indicator\", \"zero\" or \"birth_rate_weighted\"");
    std::vector<double> lo(w.dim(), 0.0), hi(w.dim(), 1.0);
    lo = opt<std::vector<double>>(tr, "lower", lo);
    hi = opt<std::vector<double>>(tr, "upper", hi);
    if (static_cast<int>(lo.size()) != w.dim() || static_cast<int>(hi.size()) != w.dim())
      tr.fail("lower", "lower/upper need dim coordinates");
    for (int k = 0; k < w.dim(); ++k) {
      if (!(lo[k] < hi[k])) tr.fail("upper", "upper must exceed lower in every coordinate");
      if (lo[k] < -w.half_side() || hi[k] > w.half_side()) tr.fail("upper", "region must lie inside the window");
      region.lower[k] = lo[k];
      region.upper[k] = hi[k];
    }
    tr.finish();
  }
  const std::size_t n_samples = opt<std::size_t>(r, "n_samples", 10000);
  if (n_samples < 2) r.fail("n_samples", "must be >= 2");
  const std::size_t mc_points = opt<std::size_t>(r, "mc_points", 64);
  if (mc_points < 1) r.fail("mc_points", "must be >= 1");
  const SamplerSettings s = sampler_from_config(r.child_or_empty("sampler"));
  r.finish();
  m.interaction.check_window(w);

  const Interaction& inter = m.interaction;
  GnzTestFunction u;
  u.support = region;
  if (tkind == "zero")
    u.u = [](const Point&, const PointConfiguration&, std::size_t) { return 0.0; };
  else if (tkind == "indicator")
    u.u = [](const Point&, const PointConfiguration&, std::size_t) { return 1.0; };
  else
    u.u = [&inter](const Point& x, const PointConfiguration& eta, std::size_t skip) {
      return inter.birth_rate(x, eta, nullptr, skip);
    };
  const auto values = replicated_values(m, w, s, n_samples, ctx, 0, [&](const PointConfiguration& c, Rng& rng) {
    return gnz_sample_residual(u, c, inter, mc_points, rng, nullptr, m.intensity);
  });
  const auto e = mean_estimate(values);
  const bool pass = std::abs(e.mean) <= 3.0 * e.std_error || e.mean == 0.0;
  std::ofstream f(ctx.out / "gnz_check.csv");
  EstimatorCsv csv(f, ctx.seed);
  csv.row("gnz_residual", std::numeric_limits<double>::quiet_NaN(), e.mean, e.std_error, n_samples);
  return {{"residual", e.mean}, {"std_error", e.std_error}, {"within_3se", pass}};
}

// ---------------------------------------------------------------------------
// dispatch

inline std::size_t default_replicas(const std::string& command) {
  if (command == "decay") return 200;
  if (command == "phase-scan") return 10;
  if (command == "sample") return 1;
  return 8;
}

/// Runs `command` on `config` (flags in `ov` replace config values first) and
/// writes outputs plus resolved_config.json to `out`.  Throws ConfigError on
/// invalid configs; other exceptions are runtime failures.
inline json run_command(const std::string& command, json config, const Overrides& ov, const fs::path& out,
                        unsigned threads = 1) {
  if (std::find(command_names().begin(), command_names().end(), command) == command_names().end())
    throw ConfigError("unknown command '" + command + "'");
  if (!config.is_object()) throw ConfigError("config: expected an object");
  if (ov.seed) config["seed"] = *ov.seed;
  if (ov.replicas) config["replicas"] = *ov.replicas;

  json resolved = json::object();
  Reader r(config, resolved, "config");
  const auto experiment = opt<std::string>(r, "experiment", command);
  if (experiment != command) r.fail("experiment", "config is for '" + experiment + "', not '" + command + "'");
  opt<int>(r, "schema_version", kSchemaVersion);
  RunContext ctx;
  ctx.command = command;
  ctx.out = out;
  ctx.seed = opt<std::uint64_t>(r, "seed", 1);
  ctx.replicas = opt<std::size_t>(r, "replicas", default_replicas(command));
  if (ctx.replicas < 1) r.fail("replicas", "must be >= 1");
  ctx.threads = std::max(1u, threads);

  fs::create_directories(out);
  json summary;
  try {
    try {
      if (command == "sample") summary = cmd_sample(r, ctx);
      else if (command == "mgf-check") summary = cmd_mgf_check(r, ctx);
      else if (command == "dv-bound") summary = cmd_dv_bound(r, ctx);
      else if (command == "decay") summary = cmd_decay(r, ctx);
      else if (command == "phase-scan") summary = cmd_phase_scan(r, ctx);
      else summary = cmd_gnz_check(r, ctx);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      // Library-side validation of an otherwise well-formed config.
      throw ConfigError(std::string("config: ") + e.what());
    }
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    write_json(out / "resolved_config.json", resolved);
    throw;
  }
  write_json(out / "resolved_config.json", resolved);
  return summary;
}

}  // namespace gibbslab::cli
