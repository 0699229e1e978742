#pragma once

// Backward-Euler state and adjoint sweeps for the three 4D-Var variants and
// the derivatives of the reduced cost j(u) = J(y(u), u; mu). Everything here
// is generic over the operator set (sparse full-order, dense reduced-order).

#include "rb4dvar/linalg.hpp"
#include "rb4dvar/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rb4dvar {

/// Factorization of M + tau*A(mu), reused for all K forward steps and, via
/// transpose solves, all K backward steps.
template <class MatrixT>
class TimeStepper {
 public:
  TimeStepper(const DiscreteModel<MatrixT>& model, double mu) : model_(&model), mu_(mu) {
    if (!std::isfinite(mu) || mu <= 0.0) {
      throw ContractError("parameter must be a positive finite number");
    }
    MatrixT system = model.mass;
    system += model.tau * model.stiffness.evaluate(mu);
    lu_.compute(system);
  }

  const DiscreteModel<MatrixT>& model() const { return *model_; }
  double mu() const { return mu_; }

  Vec forward(const Vec& rhs) const { return lu_.solve(rhs); }
  Vec backward(const Vec& rhs) const { return lu_.solve_transposed(rhs); }

 private:
  const DiscreteModel<MatrixT>* model_;
  double mu_;
  LuSolver<MatrixT> lu_;
};

/// The block metric of the control space: ||u^0||_U^2 + tau sum_k ||u^k||_U^2.
/// Gradients and Hessian actions are returned as Riesz representatives in
/// this metric.
template <class MatrixT>
class ControlSpace {
 public:
  explicit ControlSpace(const DiscreteModel<MatrixT>& model) : model_(&model) {}

  double dot(const Control& a, const Control& b) const {
    if (a.variant != b.variant) throw ContractError("control variant mismatch");
    const auto& m = *model_;
    double s = 0.0;
    if (has_initial_control(a.variant)) s += a.initial.dot(m.initial_metric * b.initial);
    double f = 0.0;
    for (std::size_t k = 0; k < a.forcing.size(); ++k) {
      f += a.forcing[k].dot(m.control_metric * b.forcing[k]);
    }
    return s + m.tau * f;
  }

  double norm(const Control& a) const { return std::sqrt(std::max(0.0, dot(a, a))); }

  /// Maps a dual vector (the gradient as a linear functional on coordinates)
  /// to its representative in the block metric.
  Control riesz(Control dual) const {
    const auto& m = *model_;
    const auto& f = m.factorized();
    if (has_initial_control(dual.variant)) dual.initial = f.initial_metric.solve(dual.initial);
    for (auto& v : dual.forcing) v = f.control_metric.solve(v) / m.tau;
    return dual;
  }

 private:
  const DiscreteModel<MatrixT>* model_;
};

namespace detail {

// Forward sweep. `data` supplies the known initial state (weak) and enables
// the load term; a null pointer gives the homogeneous linearized sweep.
template <class MatrixT>
Trajectory propagate(const TimeStepper<MatrixT>& stepper, const Control& ctrl,
                     const AssimilationData* data) {
  const auto& m = stepper.model();
  const auto& f = m.factorized();
  Trajectory y;
  y.offset = 0;
  y.values.reserve(static_cast<std::size_t>(m.num_steps) + 1);
  Vec rhs0 = Vec::Zero(m.n_state());
  if (has_initial_control(ctrl.variant)) rhs0 += m.initial_coupling * ctrl.initial;
  if (ctrl.variant == Variant::weak && data) rhs0 += data->initial_state;
  y.values.push_back(f.mass.solve(rhs0));
  for (int k = 1; k <= m.num_steps; ++k) {
    Vec rhs = m.mass * y[k - 1];
    if (data) rhs += m.tau * m.load;
    if (has_forcing_control(ctrl.variant)) {
      rhs += m.tau * (m.control_to_state * ctrl.forcing[static_cast<std::size_t>(k - 1)]);
    }
    y.values.push_back(stepper.forward(rhs));
  }
  return y;
}

// Backward sweep (M + tau A^T) p^k = M p^{k+1} + tau C^T D (z^k - C y^k).
// A null `observations` pointer means z = 0.
template <class MatrixT>
Trajectory adjoint_sweep(const TimeStepper<MatrixT>& stepper, const Trajectory& y,
                         const std::vector<Vec>* observations) {
  const auto& m = stepper.model();
  const int K = m.num_steps;
  Trajectory p;
  p.offset = 1;
  p.values.assign(static_cast<std::size_t>(K) + 1, Vec::Zero(m.n_state()));
  for (int k = K; k >= 1; --k) {
    Vec misfit = -(m.observation * y[k]);
    if (observations) misfit += (*observations)[static_cast<std::size_t>(k - 1)];
    Vec rhs = m.mass * p[k + 1];
    rhs += m.tau * (m.observation.transpose() * (m.observation_weight * misfit));
    p[k] = stepper.backward(rhs);
  }
  return p;
}

// Dual gradient blocks from an adjoint trajectory, without the prior terms.
template <class MatrixT>
Control adjoint_coupling(const DiscreteModel<MatrixT>& m, Variant variant, const Trajectory& p) {
  Control g = Control::zeros(variant, m);
  if (has_initial_control(variant)) g.initial = -(m.initial_coupling.transpose() * p[1]);
  if (has_forcing_control(variant)) {
    for (int k = 1; k <= m.num_steps; ++k) {
      g.forcing[static_cast<std::size_t>(k - 1)] = -m.tau * (m.control_to_state.transpose() * p[k]);
    }
  }
  return g;
}

}  // namespace detail

template <class MatrixT>
Trajectory solve_state(const TimeStepper<MatrixT>& stepper, const Control& ctrl,
                       const AssimilationData& data) {
  check_consistent(stepper.model(), ctrl, data);
  return detail::propagate(stepper, ctrl, &data);
}

template <class MatrixT>
Trajectory solve_state(const DiscreteModel<MatrixT>& model, double mu, const Control& ctrl,
                       const AssimilationData& data) {
  return solve_state(TimeStepper<MatrixT>(model, mu), ctrl, data);
}

template <class MatrixT>
Trajectory solve_adjoint(const TimeStepper<MatrixT>& stepper, const Trajectory& y,
                         const AssimilationData& data) {
  const auto& m = stepper.model();
  if (static_cast<int>(y.values.size()) != m.num_steps + 1 || y[0].size() != m.n_state()) {
    throw ContractError("state trajectory does not match the model");
  }
  return detail::adjoint_sweep(stepper, y, &data.observations);
}

template <class MatrixT>
Trajectory solve_adjoint(const DiscreteModel<MatrixT>& model, double mu, const Trajectory& y,
                         const AssimilationData& data) {
  return solve_adjoint(TimeStepper<MatrixT>(model, mu), y, data);
}

/// Prior (regularization) part of the cost.
template <class MatrixT>
double prior_cost(const DiscreteModel<MatrixT>& m, const Control& ctrl,
                  const AssimilationData& data) {
  double j = 0.0;
  if (has_initial_control(ctrl.variant)) {
    const double q = ctrl.initial.dot(m.initial_metric * ctrl.initial) -
                     2.0 * ctrl.initial.dot(data.initial_prior) + data.initial_prior_norm_sq;
    j += 0.5 * std::max(0.0, q);
  }
  if (has_forcing_control(ctrl.variant)) {
    for (int k = 0; k < m.num_steps; ++k) {
      const auto& u = ctrl.forcing[static_cast<std::size_t>(k)];
      const double q = u.dot(m.control_metric * u) - 2.0 * u.dot(data.forcing_prior[k]) +
                       data.forcing_prior_norm_sq[k];
      j += 0.5 * m.tau * std::max(0.0, q);
    }
  }
  return j;
}

/// Observation misfit (tau/2) sum_k ||C y^k - z^k||_D^2.
template <class MatrixT>
double misfit_cost(const DiscreteModel<MatrixT>& m, const Trajectory& y,
                   const AssimilationData& data) {
  double s = 0.0;
  for (int k = 1; k <= m.num_steps; ++k) {
    const Vec r = m.observation * y[k] - data.observations[static_cast<std::size_t>(k - 1)];
    s += r.dot(m.observation_weight * r);
  }
  return 0.5 * m.tau * s;
}

template <class MatrixT>
double cost(const TimeStepper<MatrixT>& stepper, const Control& ctrl, const AssimilationData& data) {
  const auto y = solve_state(stepper, ctrl, data);
  return prior_cost(stepper.model(), ctrl, data) + misfit_cost(stepper.model(), y, data);
}

template <class MatrixT>
double cost(const DiscreteModel<MatrixT>& model, double mu, const Control& ctrl,
            const AssimilationData& data) {
  return cost(TimeStepper<MatrixT>(model, mu), ctrl, data);
}

/// Gradient of j from a known adjoint trajectory (Riesz representative).
template <class MatrixT>
Control gradient_from_adjoint(const DiscreteModel<MatrixT>& m, const Control& ctrl,
                              const AssimilationData& data, const Trajectory& p) {
  Control g = detail::adjoint_coupling(m, ctrl.variant, p);
  if (has_initial_control(ctrl.variant)) {
    g.initial += m.initial_metric * ctrl.initial - data.initial_prior;
  }
  if (has_forcing_control(ctrl.variant)) {
    for (int k = 0; k < m.num_steps; ++k) {
      const auto& u = ctrl.forcing[static_cast<std::size_t>(k)];
      g.forcing[static_cast<std::size_t>(k)] += m.tau * (m.control_metric * u - data.forcing_prior[k]);
    }
  }
  return ControlSpace<MatrixT>(m).riesz(std::move(g));
}

template <class MatrixT>
Control gradient(const TimeStepper<MatrixT>& stepper, const Control& ctrl,
                 const AssimilationData& data) {
  const auto y = solve_state(stepper, ctrl, data);
  const auto p = solve_adjoint(stepper, y, data);
  return gradient_from_adjoint(stepper.model(), ctrl, data, p);
}

template <class MatrixT>
Control gradient(const DiscreteModel<MatrixT>& model, double mu, const Control& ctrl,
                 const AssimilationData& data) {
  return gradient(TimeStepper<MatrixT>(model, mu), ctrl, data);
}

/// Hessian action on a control direction (Riesz representative). The cost is
/// quadratic, so this is independent of the linearization point and data.
template <class MatrixT>
Control hessian_apply(const TimeStepper<MatrixT>& stepper, const Control& direction) {
  const auto& m = stepper.model();
  const auto dy = detail::propagate(stepper, direction, nullptr);
  const auto dp = detail::adjoint_sweep(stepper, dy, nullptr);
  Control h = detail::adjoint_coupling(m, direction.variant, dp);
  if (has_initial_control(direction.variant)) h.initial += m.initial_metric * direction.initial;
  for (std::size_t k = 0; k < h.forcing.size(); ++k) {
    h.forcing[k] += m.tau * (m.control_metric * direction.forcing[k]);
  }
  return ControlSpace<MatrixT>(m).riesz(std::move(h));
}

template <class MatrixT>
Control hessian_apply(const DiscreteModel<MatrixT>& model, double mu, const Control& direction) {
  return hessian_apply(TimeStepper<MatrixT>(model, mu), direction);
}

/// Observation part of the Hessian quadratic form evaluated directly from two
/// linearized forward sweeps: tau sum_k (C dy_v^k, C dy_w^k)_D.
template <class MatrixT>
double observation_form(const TimeStepper<MatrixT>& stepper, const Control& v, const Control& w) {
  const auto& m = stepper.model();
  const auto yv = detail::propagate(stepper, v, nullptr);
  const auto yw = detail::propagate(stepper, w, nullptr);
  double s = 0.0;
  for (int k = 1; k <= m.num_steps; ++k) {
    s += (m.observation * yv[k]).dot(m.observation_weight * (m.observation * yw[k]));
  }
  return m.tau * s;
}

/// Outputs C y^k for k = 0..K.
template <class MatrixT>
std::vector<Vec> outputs(const DiscreteModel<MatrixT>& m, const Trajectory& y) {
  std::vector<Vec> out;
  out.reserve(y.values.size());
  for (const auto& v : y.values) out.push_back(m.observation * v);
  return out;
}

}  // namespace rb4dvar
