#pragma once

// Benchmark driver pieces: truth synthesis, certified sweeps over a test set,
// and the outer (derivative-free) parameter estimation.

#include "rb4dvar/certification.hpp"
#include "rb4dvar/fem.hpp"
#include "rb4dvar/greedy.hpp"
#include "rb4dvar/optimizer.hpp"
#include "rb4dvar/reduced_basis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rb4dvar {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kNoiseAlgorithm = "std::mt19937_64 + std::normal_distribution";

struct TruthData {
  Trajectory state;
  std::vector<Vec> clean;         // C y^k, k = 1..K at [k-1]
  std::vector<Vec> observations;  // clean + noise
  std::vector<Vec> noise;
  std::uint64_t seed = 0;
  std::string rng_algorithm = kNoiseAlgorithm;
};

/// Full-order simulation at mu_true from y0_true, observed with i.i.d.
/// Gaussian noise drawn step by step, output by output.
inline TruthData synthesize_observations(const FullOrderModel& fom, double mu_true, const Vec& y0_true,
                                         double noise_std, std::uint64_t seed) {
  if (!(noise_std >= 0.0)) throw ConfigurationError("noise_std must be >= 0");
  if (!fom.domain.contains(mu_true)) throw ConfigurationError("mu_true outside the parameter domain");
  const auto& m = fom.model;
  AssimilationData d;
  d.variant = Variant::strong;
  d.observations.assign(static_cast<std::size_t>(m.num_steps), Vec::Zero(m.n_outputs()));
  d.initial_prior = Vec::Zero(fom.n());
  Control u = Control::zeros(Variant::strong, m);
  u.initial = y0_true;

  TruthData t;
  t.seed = seed;
  t.state = solve_state(m, mu_true, u, d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 1; k <= m.num_steps; ++k) {
    Vec eta(m.n_outputs());
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = noise_std * normal(rng);
    t.clean.push_back(m.observation * t.state[k]);
    t.observations.push_back(t.clean.back() + eta);
    // The perturbation actually applied after rounding, so z - Cy = eta exactly.
    t.noise.push_back(t.observations.back() - t.clean.back());
  }
  return t;
}

/// Priors for the desk experiments: the initial-condition prior equals the
/// true initial condition ("optimal" prior) or zero; the forcing prior is
/// zero; the weak variant knows y0_true.
inline ObservationData make_observation_data(const TruthData& truth, const Vec& y0_true,
                                             bool optimal_prior) {
  ObservationData obs;
  obs.observations = truth.observations;
  obs.background = optimal_prior ? y0_true : Vec::Zero(y0_true.size());
  obs.initial_state = y0_true;
  return obs;
}

inline std::vector<double> equidistant(const ParameterDomain& d, int count) {
  if (count < 1) throw ConfigurationError("grid size must be >= 1");
  if (count == 1) return {0.5 * (d.lo + d.hi)};
  std::vector<double> g(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = d.lo + (d.hi - d.lo) * i / (count - 1);
  return g;
}

inline std::vector<double> random_parameters(const ParameterDomain& d, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(d.lo, d.hi);
  std::vector<double> out(static_cast<std::size_t>(std::max(count, 0)));
  for (auto& mu : out) mu = uni(rng);
  return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  BenchmarkSettings benchmark;
  double mu_true = 30.0;
  Point center{-0.1, 0.8};
  double sigma = 0.1;
  double amplitude = 1.0;
  double noise_std = 0.05;
  std::uint64_t seed = 20240917;
  bool optimal_prior = true;
  std::vector<Variant> variants{Variant::strong, Variant::weak, Variant::combined};
  int training_size = 10;
  double mu_start = 10.0;
  std::map<Variant, int> n_max{{Variant::strong, 20}, {Variant::weak, 20}, {Variant::combined, 20}};
  double greedy_tol = 1e-12;
  double dependence_tol = 1e-8;
  SolveOptions fom_options{};
  SolveOptions rom_options{};
  int test_size = 5;
  std::uint64_t test_seed = 4242;
  std::vector<int> sweep_n{1, 2, 5, 10, 20};
  std::vector<int> estimate_n{1, 2, 5, 10, 15, 20};
  double estimate_tol = 1e-6;
  int threads = 1;

  void validate() const {
    auto positive = [](double x, const char* what) {
      if (!(x > 0.0) || !std::isfinite(x)) throw ConfigurationError(std::string(what) + " must be positive");
    };
    positive(benchmark.h, "mesh.h");
    positive(benchmark.tau, "time.tau");
    positive(benchmark.mu_ref, "parameter.mu_ref");
    positive(benchmark.observation_weight, "observation.weight");
    positive(sigma, "truth.sigma");
    positive(estimate_tol, "estimate.tol");
    if (benchmark.num_steps < 1) throw ConfigurationError("time.steps must be >= 1");
    if (!(benchmark.domain.lo > 0.0 && benchmark.domain.lo < benchmark.domain.hi)) {
      throw ConfigurationError("parameter.domain must satisfy 0 < lo < hi");
    }
    if (!(noise_std >= 0.0)) throw ConfigurationError("truth.noise_std must be >= 0");
    if (!benchmark.domain.contains(mu_true)) throw ConfigurationError("truth.mu_true outside the domain");
    if (training_size < 1 || test_size < 1) throw ConfigurationError("sample sizes must be >= 1");
    if (threads < 1) throw ConfigurationError("threads must be >= 1");
    if (variants.empty()) throw ConfigurationError("variants must not be empty");
    for (Variant v : variants) greedy_config(v).validate(benchmark.domain);
    for (int n : sweep_n) if (n < 1) throw ConfigurationError("sweep.N entries must be >= 1");
    for (int n : estimate_n) if (n < 1) throw ConfigurationError("estimate.N entries must be >= 1");
  }

  GreedyConfig greedy_config(Variant v) const {
    GreedyConfig g;
    g.variant = v;
    g.training = equidistant(benchmark.domain, training_size);
    g.mu_start = mu_start;
    g.n_max = n_max.at(v);
    g.tol = greedy_tol;
    g.dependence_tol = dependence_tol;
    g.fom_options = fom_options;
    g.rom_options = rom_options;
    g.threads = threads;
    return g;
  }

  std::vector<double> test_set() const { return random_parameters(benchmark.domain, test_size, test_seed); }
};

/// The larger setting: h = tau = 0.04, K = 200, 40 training parameters.
inline void apply_paper_scale(ExperimentConfig& c) {
  c.benchmark.h = 0.04;
  c.benchmark.tau = 0.04;
  c.benchmark.num_steps = 200;
  c.training_size = 40;
  c.n_max = {{Variant::strong, 80}, {Variant::weak, 100}, {Variant::combined, 100}};
  c.test_size = 20;
  c.sweep_n = {1, 10, 20, 40, 60, 80};
  c.estimate_n = {10, 20, 30, 40, 50, 60, 70, 80};
}

/// Full-order model, truth and observation data shared by all variants.
struct Benchmark {
  FullOrderModel fom;
  Vec y0_true;
  TruthData truth;
  ObservationData obs;
  Constants constants;
};

inline Benchmark setup_benchmark(const ExperimentConfig& cfg) {
  cfg.validate();
  Benchmark b;
  b.fom = assemble_operators(cfg.benchmark);
  b.y0_true = gaussian_initial_condition(b.fom, cfg.center, cfg.sigma, cfg.amplitude);
  b.truth = synthesize_observations(b.fom, cfg.mu_true, b.y0_true, cfg.noise_std, cfg.seed);
  b.obs = make_observation_data(b.truth, b.y0_true, cfg.optimal_prior);
  b.constants = compute_constants(b.fom);
  return b;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  Variant variant = Variant::strong;
  double mu = 0.0;
  int N = 0;
  BasisDims dims;
  double error = 0.0;       // ||u* - u_N*|| in the variant's norm
  double bound = 0.0;
  double effectivity = 0.0;
  double reference_norm = 0.0;  // ||u*||
  double reduced_norm = 0.0;    // ||u_N*||
  int cg_iterations = 0;
  double t_solve_ms = 0.0;
  double t_bound_ms = 0.0;
  CertificateReport certificate;
  bool failed = false;
  std::string failure;

  double relative_error() const { return reference_norm > 0 ? error / reference_norm : error; }
  double relative_bound() const { return reference_norm > 0 ? bound / reference_norm : bound; }
};

struct SweepAggregate {
  int N = 0;
  double max_relative_error = 0.0;
  double max_relative_bound = 0.0;
  double mean_effectivity = 0.0;
  double min_effectivity = std::numeric_limits<double>::infinity();
  int max_cg_iterations = 0;
  int rows = 0;
};

struct SweepReport {
  Variant variant = Variant::strong;
  std::vector<SweepRow> rows;

  std::vector<SweepAggregate> aggregates() const {
    std::map<int, SweepAggregate> by_n;
    std::map<int, int> eff_count;
    for (const auto& r : rows) {
      if (r.failed) continue;
      auto& a = by_n[r.N];
      a.N = r.N;
      ++a.rows;
      a.max_relative_error = std::max(a.max_relative_error, r.relative_error());
      a.max_relative_bound = std::max(a.max_relative_bound, r.relative_bound());
      a.max_cg_iterations = std::max(a.max_cg_iterations, r.cg_iterations);
      if (r.error > 0.0) {
        a.mean_effectivity += r.effectivity;
        a.min_effectivity = std::min(a.min_effectivity, r.effectivity);
        ++eff_count[r.N];
      }
    }
    std::vector<SweepAggregate> out;
    for (auto& [n, a] : by_n) {
      if (eff_count[n] > 0) a.mean_effectivity /= eff_count[n];
      out.push_back(a);
    }
    return out;
  }
};

/// Full-order reference solutions, computed once per parameter.
class ReferenceCache {
 public:
  ReferenceCache(const FullOrderModel& fom, const ObservationData& obs, Variant v, SolveOptions opts)
      : fom_(&fom), data_(restrict_data(fom, obs, v)), variant_(v), opts_(opts) {}

  const AssimilationResult& get(double mu) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(mu);
    if (it == cache_.end()) it = cache_.emplace(mu, solve_4dvar(fom_->model, mu, data_, variant_, opts_)).first;
    return it->second;
  }

  /// Solves all parameters up front (optionally in parallel).
  void prefetch(const std::vector<double>& mus, int threads) {
    std::vector<AssimilationResult> results(mus.size());
    detail::parallel_for(mus.size(), threads, [&](std::size_t i) {
      results[i] = solve_4dvar(fom_->model, mus[i], data_, variant_, opts_);
    });
    std::lock_guard<std::mutex> lock(mutex_);
    for (std::size_t i = 0; i < mus.size(); ++i) cache_.emplace(mus[i], std::move(results[i]));
  }

  const AssimilationData& data() const { return data_; }

 private:
  const FullOrderModel* fom_;
  AssimilationData data_;
  Variant variant_;
  SolveOptions opts_;
  std::map<double, AssimilationResult> cache_;
  std::mutex mutex_;
};

struct SweepOptions {
  SolveOptions fom_options{};
  SolveOptions rom_options{};
  int threads = 1;
};

/// Error, bound and effectivity for every (mu, N). Rows are ordered by N,
/// then by test-set position; a failing row is marked rather than aborting.
inline SweepReport run_sweep(const FullOrderModel& fom, const ReducedBasis& basis, const ObservationData& obs,
                             const Constants& constants, const std::vector<double>& test_set,
                             const std::vector<int>& n_list, const SweepOptions& opts,
                             ReferenceCache* cache = nullptr,
                             const std::function<void(const SweepRow&)>& on_row = {}) {
  const Variant v = basis.variant;
  ReferenceCache local(fom, obs, v, opts.fom_options);
  ReferenceCache& refs = cache ? *cache : local;
  refs.prefetch(test_set, opts.threads);
  const ControlSpace<SpMat> space(fom.model);

  SweepReport report;
  report.variant = v;
  for (int n : n_list) {
    if (n < 1 || n > basis.iterations()) {
      throw ConfigurationError("sweep: N = " + std::to_string(n) + " exceeds the trained basis (" +
                               std::to_string(basis.iterations()) + " iterations)");
    }
    const ReducedModel rom = build_reduced_model(fom, basis.truncated(n), obs, constants);
    std::vector<SweepRow> rows(test_set.size());
    detail::parallel_for(test_set.size(), opts.threads, [&](std::size_t i) {
      SweepRow& row = rows[i];
      row.variant = v;
      row.mu = test_set[i];
      row.N = n;
      row.dims = rom.basis.current();
      try {
        const AssimilationResult& ref = refs.get(row.mu);
        const OnlineResult on = solve_online(rom, row.mu, opts.rom_options);
        Control e = lift_control(rom.basis, on.solution.control);
        e.axpy(-1.0, ref.control);
        row.error = space.norm(e);
        row.reference_norm = space.norm(ref.control);
        row.reduced_norm = on.reduced_norm;
        row.bound = on.certificate.delta;
        row.certificate = on.certificate;
        row.certificate.attach_error(row.error);
        row.effectivity = row.error > 0.0 ? row.bound / row.error : std::numeric_limits<double>::infinity();
        row.cg_iterations = on.solution.cg_iterations;
        row.t_solve_ms = 1e3 * on.solve_time;
        row.t_bound_ms = 1e3 * on.bound_time;
      } catch (const std::exception& ex) {
        row.failed = true;
        row.failure = ex.what();
      }
    });
    for (auto& row : rows) {
      if (on_row) on_row(row);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Outer parameter estimation

/// Bounded scalar minimization by golden-section search with parabolic
/// interpolation (Brent). Terminates when the bracket around the iterate is
/// within about 3 * (sqrt(eps) |x| + tol / 3).
inline double estimate_parameter(const std::function<double(double)>& cost_oracle,
                                 const ParameterDomain& domain, double tol = 1e-6, int max_iter = 500) {
  if (!(tol > 0.0)) throw ConfigurationError("estimate_parameter: tolerance must be positive");
  const double golden = 0.5 * (3.0 - std::sqrt(5.0));
  const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  auto f = [&](double x) {
    const double v = cost_oracle(x);
    if (!std::isfinite(v)) {
      throw NumericalError("cost is not finite at mu = " + std::to_string(x));
    }
    return v;
  };
  double a = domain.lo, b = domain.hi;
  double v = a + golden * (b - a);
  double w = v, x = v;
  double e = 0.0, d = 0.0;
  double fx = f(x);
  double fv = fx, fw = fx;
  for (int it = 0; it < max_iter; ++it) {
    const double xm = 0.5 * (a + b);
    const double tol1 = sqrt_eps * std::abs(x) + tol / 3.0;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;
    bool golden_step = true;
    if (std::abs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double e_prev = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = xm >= x ? tol1 : -tol1;
        golden_step = false;
      }
    }
    if (golden_step) {
      e = (x >= xm ? a : b) - x;
      d = golden * e;
    }
    const double u = std::abs(d) >= tol1 ? x + d : x + (d > 0 ? tol1 : -tol1);
    const double fu = f(u);
    if (fu <= fx) {
      if (u >= x) a = x; else b = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  return x;
}

/// Optimal 4D-Var cost J*(mu) on the full-order model.
inline std::function<double(double)> full_cost_oracle(const FullOrderModel& fom, const AssimilationData& data,
                                                      Variant v, SolveOptions opts) {
  return [&fom, &data, v, opts](double mu) { return solve_4dvar(fom.model, mu, data, v, opts).cost; };
}

inline std::function<double(double)> reduced_cost_oracle(const ReducedModel& rom, SolveOptions opts) {
  return [&rom, opts](double mu) {
    return solve_4dvar(rom.model, mu, rom.data, rom.basis.variant, opts).cost;
  };
}

struct OuterEstimationRow {
  int N = 0;
  double mu_reduced = 0.0;
  double e_mu = 0.0;     // |mu* - mu_N*| / |mu*|
  double e_J_max = 0.0;  // max over the grid of |J* - J_N*| / |J*|
};

struct OuterEstimationReport {
  Variant variant = Variant::strong;
  double mu_full = 0.0;
  std::vector<double> grid;
  std::vector<double> full_costs;
  std::vector<OuterEstimationRow> rows;
};

struct OuterOptions {
  SolveOptions fom_options{};
  SolveOptions rom_options{};
  double tol = 1e-6;
  int threads = 1;
};

/// e_mu,N and the maximal relative cost error over `grid` for each N.
inline OuterEstimationReport outer_error_table(const FullOrderModel& fom, const ReducedBasis& basis,
                                               const ObservationData& obs, const Constants& constants,
                                               const std::vector<double>& grid, const std::vector<int>& n_list,
                                               const OuterOptions& opts,
                                               const std::function<void(const OuterEstimationRow&)>& on_row = {}) {
  const Variant v = basis.variant;
  const AssimilationData data = restrict_data(fom, obs, v);
  OuterEstimationReport rep;
  rep.variant = v;
  rep.grid = grid;
  rep.mu_full = estimate_parameter(full_cost_oracle(fom, data, v, opts.fom_options), fom.domain, opts.tol);
  rep.full_costs.resize(grid.size());
  detail::parallel_for(grid.size(), opts.threads, [&](std::size_t i) {
    rep.full_costs[i] = solve_4dvar(fom.model, grid[i], data, v, opts.fom_options).cost;
  });
  for (int n : n_list) {
    if (n < 1 || n > basis.iterations()) {
      throw ConfigurationError("estimate: N = " + std::to_string(n) + " exceeds the trained basis");
    }
    const ReducedModel rom = build_reduced_model(fom, basis.truncated(n), obs, constants);
    OuterEstimationRow row;
    row.N = n;
    row.mu_reduced = estimate_parameter(reduced_cost_oracle(rom, opts.rom_options), fom.domain, opts.tol);
    row.e_mu = std::abs(rep.mu_full - row.mu_reduced) / std::abs(rep.mu_full);
    std::vector<double> errs(grid.size());
    detail::parallel_for(grid.size(), opts.threads, [&](std::size_t i) {
      const double jn = solve_4dvar(rom.model, grid[i], rom.data, v, opts.rom_options).cost;
      errs[i] = std::abs(rep.full_costs[i] - jn) / std::abs(rep.full_costs[i]);
    });
    row.e_J_max = *std::max_element(errs.begin(), errs.end());
    rep.rows.push_back(row);
    if (on_row) on_row(row);
  }
  return rep;
}

}  // namespace rb4dvar
