#pragma once

// POD-greedy construction of the reduced state, adjoint and control spaces,
// driven by the a-posteriori bound of the variant being trained.

#include "rb4dvar/certification.hpp"
#include "rb4dvar/fem.hpp"
#include "rb4dvar/optimizer.hpp"
#include "rb4dvar/reduced_basis.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace rb4dvar {

struct GreedyConfig {
  Variant variant = Variant::strong;
  std::vector<double> training;
  double mu_start = 10.0;
  int n_max = 20;
  double tol = 1e-8;
  double dependence_tol = 1e-8;
  SolveOptions fom_options{};
  SolveOptions rom_options{};
  int threads = 1;

  void validate(const ParameterDomain& domain) const {
    if (training.empty()) throw ConfigurationError("greedy: empty training set");
    for (double mu : training) {
      if (!domain.contains(mu)) throw ConfigurationError("greedy: training parameter outside domain");
    }
    if (!domain.contains(mu_start)) throw ConfigurationError("greedy: mu_start outside domain");
    if (n_max < 1) throw ConfigurationError("greedy: n_max must be >= 1");
    if (!(tol > 0.0)) throw ConfigurationError("greedy: tolerance must be positive");
    if (threads < 1) throw ConfigurationError("greedy: threads must be >= 1");
    fom_options.validate();
    rom_options.validate();
  }
};

struct GreedyStep {
  int N = 0;
  double mu = 0.0;             // parameter whose snapshots were added
  BasisDims dims;
  double max_rel_bound = 0.0;  // over the training set, after enrichment
  double next_mu = 0.0;        // arg max of the relative bound
  bool initial_snapshot_added = false;
  double wall_time = 0.0;
};

struct GreedyTrace {
  std::vector<GreedyStep> steps;
};

struct GreedyResult {
  ReducedBasis basis;
  GreedyTrace trace;
};

/// A reduced model with everything needed to solve and certify online.
struct ReducedModel {
  ReducedBasis basis;
  DiscreteModel<Mat> model;
  AssimilationData data;
  ResidualOfflineData offline;
  Constants constants;
};

inline ReducedModel build_reduced_model(const FullOrderModel& fom, const ReducedBasis& basis,
                                        const ObservationData& obs, const Constants& constants) {
  ReducedModel r;
  r.basis = basis;
  r.model = project_model(fom, basis);
  r.data = project_data(fom, basis, obs, basis.variant);
  r.offline = build_offline_residual_data(fom, basis, obs);
  r.constants = constants;
  return r;
}

/// Reduced solve plus bound at one parameter.
struct OnlineResult {
  AssimilationResult solution;
  DualNorms residuals;
  CertificateReport certificate;
  double reduced_norm = 0.0;  // ||u_N|| in the variant's metric
  double solve_time = 0.0;    // seconds
  double bound_time = 0.0;
};

inline OnlineResult solve_online(const ReducedModel& rom, double mu, const SolveOptions& opts = {}) {
  OnlineResult out;
  out.solution = solve_4dvar(rom.model, mu, rom.data, rom.basis.variant, opts);
  out.solve_time = out.solution.wall_time;
  const auto t0 = std::chrono::steady_clock::now();
  out.residuals = dual_norms(rom.offline, out.solution, mu, rom.data);
  out.certificate = certify(out.residuals, rom.basis.variant, rom.constants.alpha_lb(mu), rom.constants);
  out.certificate.mu = mu;
  out.certificate.N = rom.basis.iterations();
  out.bound_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.reduced_norm = ControlSpace<Mat>(rom.model).norm(out.solution.control);
  return out;
}

/// Relative bound Delta / ||u_N||, falling back to Delta when u_N = 0.
inline double relative_bound(const OnlineResult& r) {
  return r.reduced_norm > 0.0 ? r.certificate.delta / r.reduced_norm : r.certificate.delta;
}

namespace detail {

// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
// written to disjoint slots; the first exception is rethrown.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::vector<Vec> trajectory_steps(const Trajectory& t, int first, int last) {
  std::vector<Vec> out;
  for (int k = first; k <= last; ++k) out.push_back(t[k]);
  return out;
}

inline GreedyResult run_greedy(const FullOrderModel& fom, const ObservationData& obs,
                               const GreedyConfig& cfg,
                               const std::function<void(const GreedyStep&)>& on_step) {
  cfg.validate(fom.domain);
  const Variant v = cfg.variant;
  const auto& m = fom.model;
  const int K = m.num_steps;
  const Constants constants = compute_constants(fom);
  const AssimilationData full_data = restrict_data(fom, obs, v);

  GreedyResult result;
  ReducedBasis& basis = result.basis;
  basis = ReducedBasis::empty(v, fom.n());
  if (v == Variant::weak) {
    if (!append_orthonormal(basis.state, obs.initial_state, fom.state_metric, 0.0)) {
      throw ContractError("weak greedy: the known initial state is zero");
    }
  }
  basis.dims.push_back(basis.current());

  std::map<double, AssimilationResult> cache;
  double mu_star = cfg.mu_start;
  double rel = std::numeric_limits<double>::infinity();
  int N = 0;
  while (rel > cfg.tol && N < cfg.n_max) {
    const auto t0 = std::chrono::steady_clock::now();
    ++N;
    auto it = cache.find(mu_star);
    if (it == cache.end()) {
      it = cache.emplace(mu_star, solve_4dvar(m, mu_star, full_data, v, cfg.fom_options)).first;
    }
    const AssimilationResult& truth = it->second;

    // State modes against Y_{N-1}, then adjoint modes against the enlarged space.
    const auto ys = project_error_trajectory(trajectory_steps(truth.state, 1, K), basis.state,
                                             fom.state_metric);
    if (auto z = pod_largest_mode(ys, fom.state_metric)) {
      append_orthonormal(basis.state, *z, fom.state_metric, cfg.dependence_tol);
    }
    const auto ps = project_error_trajectory(trajectory_steps(truth.adjoint, 1, K), basis.state,
                                             fom.state_metric);
    if (auto z = pod_largest_mode(ps, fom.state_metric)) {
      append_orthonormal(basis.state, *z, fom.state_metric, cfg.dependence_tol);
    }

    GreedyStep step;
    step.N = N;
    step.mu = mu_star;
    if (has_initial_control(v)) {
      step.initial_snapshot_added =
          append_orthonormal(basis.initial, truth.control.initial, m.initial_metric, cfg.dependence_tol);
    }
    if (has_forcing_control(v)) {
      const auto us = project_error_trajectory(truth.control.forcing, basis.forcing, m.control_metric);
      if (auto z = pod_largest_mode(us, m.control_metric)) {
        append_orthonormal(basis.forcing, *z, m.control_metric, cfg.dependence_tol);
      }
    }
    basis.dims.push_back(basis.current());
    step.dims = basis.current();

    const ReducedModel rom = build_reduced_model(fom, basis, obs, constants);
    std::vector<double> rels(cfg.training.size());
    parallel_for(cfg.training.size(), cfg.threads, [&](std::size_t i) {
      rels[i] = relative_bound(solve_online(rom, cfg.training[i], cfg.rom_options));
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < rels.size(); ++i) {
      if (rels[i] > rels[best]) best = i;
    }
    rel = rels[best];
    mu_star = cfg.training[best];
    step.max_rel_bound = rel;
    step.next_mu = mu_star;
    step.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.trace.steps.push_back(step);
    if (on_step) on_step(step);
  }
  return result;
}

inline void require_variant(const GreedyConfig& cfg, Variant v) {
  if (cfg.variant != v) {
    throw ContractError("greedy: config variant '" + std::string(to_string(cfg.variant)) +
                        "' does not match '" + std::string(to_string(v)) + "'");
  }
}

}  // namespace detail

/// Y_N gains one state and one adjoint POD mode per iteration; U_N^0 gains
/// the optimal initial condition unless it is already contained.
inline GreedyResult greedy_strong(const FullOrderModel& fom, const ObservationData& obs,
                                  const GreedyConfig& cfg,
                                  const std::function<void(const GreedyStep&)>& on_step = {}) {
  detail::require_variant(cfg, Variant::strong);
  return detail::run_greedy(fom, obs, cfg, on_step);
}

/// Y_N starts from the known initial state; U_N gains the largest POD mode
/// of the forcing projection error.
inline GreedyResult greedy_weak(const FullOrderModel& fom, const ObservationData& obs,
                                const GreedyConfig& cfg,
                                const std::function<void(const GreedyStep&)>& on_step = {}) {
  detail::require_variant(cfg, Variant::weak);
  return detail::run_greedy(fom, obs, cfg, on_step);
}

inline GreedyResult greedy_combined(const FullOrderModel& fom, const ObservationData& obs,
                                    const GreedyConfig& cfg,
                                    const std::function<void(const GreedyStep&)>& on_step = {}) {
  detail::require_variant(cfg, Variant::combined);
  return detail::run_greedy(fom, obs, cfg, on_step);
}

inline GreedyResult train(const FullOrderModel& fom, const ObservationData& obs, const GreedyConfig& cfg,
                          const std::function<void(const GreedyStep&)>& on_step = {}) {
  return detail::run_greedy(fom, obs, cfg, on_step);
}

}  // namespace rb4dvar
