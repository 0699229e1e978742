#pragma once

#include "rb4dvar/time_integration.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace rb4dvar {

struct SolveOptions {
  double cg_rel_tol = 1e-10;
  int cg_max_iter = 5000;
  bool record_iterations = false;

  void validate() const {
    if (!(cg_rel_tol > 0.0 && cg_rel_tol < 1.0)) {
      throw ContractError("cg_rel_tol must lie in (0, 1)");
    }
    if (cg_max_iter < 1) throw ContractError("cg_max_iter must be positive");
  }
};

/// One CG iteration record: preconditioned residual norm and the value of the
/// quadratic model q(x) = 1/2 <Hx,x> - <b,x> at the iterate.
struct CgIterate {
  int iteration = 0;
  double residual = 0.0;
  double model_value = 0.0;
};

class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), residual_history(std::move(history)) {}
  std::vector<double> residual_history;
};

struct AssimilationResult {
  Control control;
  Trajectory state;
  Trajectory adjoint;
  double cost = 0.0;
  int cg_iterations = 0;
  double wall_time = 0.0;  // seconds
  double initial_gradient_norm = 0.0;
  double final_gradient_norm = 0.0;
  std::vector<CgIterate> iterations;  // filled when record_iterations is set
};

/// State, adjoint and cost at a given control, packaged like a solve result.
template <class MatrixT>
AssimilationResult evaluate_at(const TimeStepper<MatrixT>& stepper, const Control& ctrl,
                               const AssimilationData& data) {
  AssimilationResult r;
  r.control = ctrl;
  r.state = solve_state(stepper, ctrl, data);
  r.adjoint = solve_adjoint(stepper, r.state, data);
  r.cost = prior_cost(stepper.model(), ctrl, data) + misfit_cost(stepper.model(), r.state, data);
  return r;
}

/// Minimizes j(u) = J(y(u), u; mu). j is quadratic, so one Newton step from
/// u = 0 solves it: H u = -grad j(0), by CG in the control metric (the
/// control mass matrix acts as the preconditioner).
template <class MatrixT>
AssimilationResult solve_4dvar(const TimeStepper<MatrixT>& stepper, const AssimilationData& data,
                               Variant variant, const SolveOptions& opts = {}) {
  opts.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto& m = stepper.model();
  const ControlSpace<MatrixT> space(m);

  Control x = Control::zeros(variant, m);
  Control r = gradient(stepper, x, data);
  r.scale(-1.0);
  const Control b = r;
  Control p = r;
  double rr = space.dot(r, r);
  const double r0 = std::sqrt(std::max(0.0, rr));

  AssimilationResult result;
  result.initial_gradient_norm = r0;
  std::vector<double> history{r0};
  int it = 0;
  if (opts.record_iterations) result.iterations.push_back({0, r0, 0.0});
  while (std::sqrt(std::max(0.0, rr)) > opts.cg_rel_tol * r0) {
    if (it >= opts.cg_max_iter) {
      throw NonConvergenceError("CG did not converge in " + std::to_string(opts.cg_max_iter) +
                                    " iterations (relative residual " +
                                    std::to_string(std::sqrt(rr) / r0) + ")",
                                std::move(history));
    }
    const Control hp = hessian_apply(stepper, p);
    const double php = space.dot(p, hp);
    if (!(php > 0.0) || !std::isfinite(php)) {
      throw NonConvergenceError("CG breakdown: Hessian not positive definite", std::move(history));
    }
    const double alpha = rr / php;
    x.axpy(alpha, p);
    r.axpy(-alpha, hp);
    const double rr_new = space.dot(r, r);
    ++it;
    history.push_back(std::sqrt(std::max(0.0, rr_new)));
    if (opts.record_iterations) {
      // q(x) = -1/2 (<b,x> + <r,x>) with r = b - Hx.
      const double q = -0.5 * (space.dot(b, x) + space.dot(r, x));
      result.iterations.push_back({it, history.back(), q});
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    p.scale(beta).axpy(1.0, r);
  }

  auto eval = evaluate_at(stepper, x, data);
  result.control = std::move(eval.control);
  result.state = std::move(eval.state);
  result.adjoint = std::move(eval.adjoint);
  result.cost = eval.cost;
  result.cg_iterations = it;
  result.final_gradient_norm = std::sqrt(std::max(0.0, rr));
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

template <class MatrixT>
AssimilationResult solve_4dvar(const DiscreteModel<MatrixT>& model, double mu,
                               const AssimilationData& data, Variant variant,
                               const SolveOptions& opts = {}) {
  return solve_4dvar(TimeStepper<MatrixT>(model, mu), data, variant, opts);
}

/// Largest residual over the discrete optimality system at `result`: the
/// Euclidean norms of the state and adjoint step equations and the dual norm
/// of the control equation (the metric norm of the gradient).
template <class MatrixT>
double optimality_residual(const DiscreteModel<MatrixT>& m, double mu, const AssimilationData& data,
                           const AssimilationResult& result) {
  const auto a = m.stiffness.evaluate(mu);
  const auto& y = result.state;
  const auto& p = result.adjoint;
  const auto& u = result.control;
  check_consistent(m, u, data);

  double worst = 0.0;
  Vec rhs0 = Vec::Zero(m.n_state());
  if (has_initial_control(u.variant)) rhs0 += m.initial_coupling * u.initial;
  if (u.variant == Variant::weak) rhs0 += data.initial_state;
  worst = std::max(worst, (m.mass * y[0] - rhs0).norm());
  for (int k = 1; k <= m.num_steps; ++k) {
    Vec res = m.mass * (y[k] - y[k - 1]) + m.tau * (a * y[k]) - m.tau * m.load;
    if (has_forcing_control(u.variant)) {
      res -= m.tau * (m.control_to_state * u.forcing[static_cast<std::size_t>(k - 1)]);
    }
    worst = std::max(worst, res.norm());
  }
  for (int k = m.num_steps; k >= 1; --k) {
    const Vec next = k == m.num_steps ? Vec(Vec::Zero(m.n_state())) : Vec(p[k + 1]);
    const Vec misfit = data.observations[static_cast<std::size_t>(k - 1)] - m.observation * y[k];
    Vec res = m.mass * (p[k] - next) + m.tau * (a.transpose() * p[k]) -
              m.tau * (m.observation.transpose() * (m.observation_weight * misfit));
    worst = std::max(worst, res.norm());
  }
  const Control g = gradient_from_adjoint(m, u, data, p);
  worst = std::max(worst, ControlSpace<MatrixT>(m).norm(g));
  return worst;
}

}  // namespace rb4dvar
