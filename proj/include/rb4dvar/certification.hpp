#pragma once

// Constants, residual dual norms and the a-posteriori bounds on the optimal
// control error of the reduced 4D-Var problems.

#include "rb4dvar/fem.hpp"
#include "rb4dvar/linalg.hpp"
#include "rb4dvar/model.hpp"
#include "rb4dvar/optimizer.hpp"
#include "rb4dvar/reduced_basis.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rb4dvar {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Min-theta lower bound for the coercivity constant of A(mu) in the X_Y
/// metric, X_Y = diffusion / mu_ref. The convection part is skew, so this is
/// the exact coercivity constant.
inline double coercivity_lower_bound(double mu, double mu_ref = 30.0, ParameterDomain domain = {}) {
  if (!std::isfinite(mu) || !domain.contains(mu)) {
    throw DomainError("parameter " + std::to_string(mu) + " outside [" + std::to_string(domain.lo) +
                      ", " + std::to_string(domain.hi) + "]");
  }
  return mu_ref / mu;
}

/// sqrt of the largest eigenvalue of C^T D C v = lambda X_Y v. The nonzero
/// spectrum coincides with that of D^{1/2} C X_Y^{-1} C^T D^{1/2} (l x l).
inline double compute_gamma_c(const SpMat& observation, const Mat& weight, const SpMat& state_metric) {
  if (observation.rows() == 0 || observation.nonZeros() == 0) return 0.0;
  SpdSolver<SpMat> xy;
  xy.compute(state_metric);
  const Mat ct = Mat(observation.transpose());
  const Mat s = observation * xy.solve(ct);
  Eigen::LLT<Mat> ld(weight);
  if (ld.info() != Eigen::Success) throw ContractError("observation weight must be SPD");
  const Mat l = ld.matrixL();
  Mat t = l.transpose() * s * l;
  t = 0.5 * (t + t.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(t, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw SingularSystemError("gamma_c eigenproblem failed");
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

/// sqrt of the largest eigenvalue of B^T X_Y^{-1} B w = lambda X_U w, by
/// Lanczos in the X_U inner product with full reorthogonalization.
inline double compute_gamma_b(const SpMat& control_to_state, const SpMat& state_metric,
                              const SpMat& control_metric, double rel_tol = 1e-13,
                              int max_iter = 300) {
  const Eigen::Index n = control_to_state.cols();
  if (n == 0 || control_to_state.nonZeros() == 0) return 0.0;
  SpdSolver<SpMat> xy, xu;
  xy.compute(state_metric);
  xu.compute(control_metric);
  auto apply = [&](const Vec& w) -> Vec {
    return xu.solve(Vec(control_to_state.transpose() * xy.solve(Vec(control_to_state * w))));
  };
  auto xdot = [&](const Vec& a, const Vec& b) { return a.dot(control_metric * b); };

  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uni(0.5, 1.5);
  Vec q(n);
  for (Eigen::Index i = 0; i < n; ++i) q[i] = uni(rng);
  q /= std::sqrt(xdot(q, q));

  const int steps = static_cast<int>(std::min<Eigen::Index>(n, max_iter));
  Mat basis(n, steps);
  std::vector<double> alpha, beta;
  double theta = 0.0;
  for (int j = 0; j < steps; ++j) {
    basis.col(j) = q;
    Vec w = apply(q);
    alpha.push_back(xdot(q, w));
    for (int pass = 0; pass < 2; ++pass) {
      const Mat qj = basis.leftCols(j + 1);
      w -= qj * (qj.transpose() * (control_metric * w));
    }
    const double b = std::sqrt(std::max(0.0, xdot(w, w)));

    const int m = j + 1;
    Mat tri = Mat::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      tri(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < m) tri(i, i + 1) = tri(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(tri);
    theta = eig.eigenvalues()[m - 1];
    const double ritz_residual = b * std::abs(eig.eigenvectors()(m - 1, m - 1));
    if (ritz_residual <= rel_tol * std::max(std::abs(theta), 1e-300) || b == 0.0) break;
    beta.push_back(b);
    q = w / b;
  }
  return std::sqrt(std::max(0.0, theta));
}

struct Constants {
  double gamma_b = 0.0;
  double gamma_c = 0.0;
  double mu_ref = 30.0;
  ParameterDomain domain;

  double alpha_lb(double mu) const { return coercivity_lower_bound(mu, mu_ref, domain); }
};

inline Constants compute_constants(const FullOrderModel& fom) {
  const auto& m = fom.model;
  Constants c;
  c.gamma_c = compute_gamma_c(m.observation, m.observation_weight, fom.state_metric);
  c.gamma_b = compute_gamma_b(m.control_to_state, fom.state_metric, m.control_metric);
  c.mu_ref = fom.mu_ref;
  c.domain = fom.domain;
  return c;
}

// ---------------------------------------------------------------------------
// Residual dual norms

/// Time-aggregated dual norms of the reduced optimality system residuals.
/// `initial` is ||r_u||_{U'} of the initial-condition equation (strong,
/// combined); `forcing` is the aggregated norm of the forcing equation
/// (weak, combined).
struct DualNorms {
  double state = 0.0;    // R_y
  double adjoint = 0.0;  // R_p
  double initial = 0.0;
  double forcing = 0.0;
  std::vector<double> state_steps, adjoint_steps, forcing_steps;  // per k, unsquared
};

namespace detail {

inline double aggregate(const std::vector<double>& per_step, double tau) {
  double s = 0.0;
  for (double v : per_step) s += v * v;
  return std::sqrt(tau * s);
}

// Column layout of the Y' ingredient set.
struct StateLayout {
  Eigen::Index load = 0, forcing = 0, stiffness = 0, adjoint_stiffness = 0, mass = 0, initial = 0,
               known_state = 0, sensors = 0, total = 0;
  Eigen::Index n_y = 0, n_u = 0, n_u0 = 0, n_q = 0, n_known = 0, n_out = 0;

  StateLayout(const BasisDims& d, std::size_t q, Variant v, Eigen::Index outputs)
      : n_y(d.state), n_u(d.forcing), n_u0(d.initial), n_q(static_cast<Eigen::Index>(q)),
        n_known(v == Variant::weak ? 1 : 0), n_out(outputs) {
    forcing = load + 1;
    stiffness = forcing + n_u;
    adjoint_stiffness = stiffness + n_q * n_y;
    mass = adjoint_stiffness + n_q * n_y;
    initial = mass + n_y;
    known_state = initial + n_u0;
    sensors = known_state + n_known;
    total = sensors + n_out;
  }
};

inline Mat gram_in_dual_metric(const SpdSolver<SpMat>& metric, const Mat& ingredients) {
  if (ingredients.cols() == 0) return Mat(0, 0);
  const Mat riesz = metric.solve(ingredients);
  Mat g = ingredients.transpose() * riesz;
  return 0.5 * (g + g.transpose());
}

// Column-wise c_j^T G c_j, clamped at zero.
inline std::vector<double> quadratic_forms(const Mat& gram, const Mat& coeffs) {
  std::vector<double> out(static_cast<std::size_t>(coeffs.cols()), 0.0);
  if (coeffs.cols() == 0 || gram.rows() == 0) return out;
  const Mat gc = gram * coeffs;
  for (Eigen::Index j = 0; j < coeffs.cols(); ++j) {
    out[static_cast<std::size_t>(j)] = std::sqrt(std::max(0.0, coeffs.col(j).dot(gc.col(j))));
  }
  return out;
}

}  // namespace detail

/// Parameter-independent data for evaluating residual dual norms online.
/// The Y' ingredients are, in order: F | B V_u | A^q V_y (each q) |
/// A^q^T V_y (each q) | M V_y | M_u V_u0 | M y0 (weak) | C^T D e_i. The
/// initial-condition U' ingredients are M_u^T V_y | X_U V_u0 | X_U u_d0, the
/// forcing ones B^T V_y | X_U V_u | X_U u_d^k (only for a nonzero prior).
struct ResidualOfflineData {
  Variant variant = Variant::strong;
  BasisDims dims;
  std::vector<Coefficient> coefficients;
  Eigen::Index n_outputs = 0;
  double tau = 0.0;
  int num_steps = 0;
  Mat observation;  // C V_y
  Mat gram_state;
  Mat gram_initial;
  Mat gram_forcing;
  bool forcing_prior_columns = false;
};

inline ResidualOfflineData build_offline_residual_data(const FullOrderModel& fom,
                                                       const ReducedBasis& basis,
                                                       const ObservationData& obs) {
  const auto& m = fom.model;
  const Variant v = basis.variant;
  const BasisDims d = basis.current();
  const Eigen::Index n = fom.n();
  const detail::StateLayout lay(d, m.stiffness.size(), v, m.n_outputs());

  ResidualOfflineData off;
  off.variant = v;
  off.dims = d;
  off.coefficients = m.stiffness.coefficients;
  off.n_outputs = m.n_outputs();
  off.tau = m.tau;
  off.num_steps = m.num_steps;
  off.observation = m.observation * basis.state;

  const Mat& vy = basis.state;
  Mat xi(n, lay.total);
  xi.col(lay.load) = m.load;
  if (lay.n_u) xi.middleCols(lay.forcing, lay.n_u) = m.control_to_state * basis.forcing;
  for (Eigen::Index q = 0; q < lay.n_q; ++q) {
    const SpMat& aq = m.stiffness.terms[static_cast<std::size_t>(q)];
    if (lay.n_y) {
      xi.middleCols(lay.stiffness + q * lay.n_y, lay.n_y) = aq * vy;
      xi.middleCols(lay.adjoint_stiffness + q * lay.n_y, lay.n_y) = aq.transpose() * vy;
    }
  }
  if (lay.n_y) xi.middleCols(lay.mass, lay.n_y) = m.mass * vy;
  if (lay.n_u0) xi.middleCols(lay.initial, lay.n_u0) = m.initial_coupling * basis.initial;
  if (lay.n_known) {
    if (obs.initial_state.size() != n) throw ContractError("weak variant requires y_0");
    xi.col(lay.known_state) = m.mass * obs.initial_state;
  }
  const Mat cd = Mat(m.observation.transpose()) * m.observation_weight;
  xi.middleCols(lay.sensors, lay.n_out) = cd;

  SpdSolver<SpMat> xy;
  xy.compute(fom.state_metric);
  off.gram_state = detail::gram_in_dual_metric(xy, xi);

  const auto& xu_f = m.factorized();
  if (has_initial_control(v)) {
    const Vec ud0 = obs.background.size() ? obs.background : Vec::Zero(n);
    Mat xi0(n, d.state + d.initial + 1);
    if (d.state) xi0.leftCols(d.state) = m.initial_coupling.transpose() * vy;
    if (d.initial) xi0.middleCols(d.state, d.initial) = m.initial_metric * basis.initial;
    xi0.col(d.state + d.initial) = m.initial_metric * ud0;
    off.gram_initial = detail::gram_in_dual_metric(xu_f.initial_metric, xi0);
  }
  if (has_forcing_control(v)) {
    off.forcing_prior_columns = false;
    for (const auto& u : obs.forcing_prior) {
      if (u.size() && u.squaredNorm() > 0.0) off.forcing_prior_columns = true;
    }
    const Eigen::Index n_prior = off.forcing_prior_columns ? m.num_steps : 0;
    Mat xif(n, d.state + d.forcing + n_prior);
    if (d.state) xif.leftCols(d.state) = m.control_to_state.transpose() * vy;
    if (d.forcing) xif.middleCols(d.state, d.forcing) = m.control_metric * basis.forcing;
    for (Eigen::Index k = 0; k < n_prior; ++k) {
      xif.col(d.state + d.forcing + k) = m.control_metric * obs.forcing_prior[static_cast<std::size_t>(k)];
    }
    off.gram_forcing = detail::gram_in_dual_metric(xu_f.control_metric, xif);
  }
  return off;
}

/// Online residual dual norms of a reduced solution (control, state,
/// adjoint in reduced coordinates). Cost is independent of the FE dimension.
inline DualNorms dual_norms(const ResidualOfflineData& off, const AssimilationResult& rom, double mu,
                            const AssimilationData& data) {
  const Variant v = off.variant;
  const BasisDims d = off.dims;
  const int K = off.num_steps;
  const double tau = off.tau;
  const detail::StateLayout lay(d, off.coefficients.size(), v, off.n_outputs);
  const auto& y = rom.state;
  const auto& p = rom.adjoint;
  const auto& u = rom.control;
  if (static_cast<int>(y.values.size()) != K + 1 || y[0].size() != d.state) {
    throw ContractError("dual_norms: reduced solution does not match the offline data");
  }

  Mat cy = Mat::Zero(lay.total, K);
  Mat cp = Mat::Zero(lay.total, K);
  for (int k = 1; k <= K; ++k) {
    auto col = cy.col(k - 1);
    col[lay.load] = 1.0;
    if (lay.n_u) col.segment(lay.forcing, lay.n_u) = u.forcing[static_cast<std::size_t>(k - 1)];
    for (Eigen::Index q = 0; q < lay.n_q; ++q) {
      const double th = evaluate(off.coefficients[static_cast<std::size_t>(q)], mu);
      col.segment(lay.stiffness + q * lay.n_y, lay.n_y) = -th * y[k];
    }
    if (k == 1) {
      // The initial term is u_N itself (or y_0), not its projection on Y_N.
      col.segment(lay.mass, lay.n_y) = -y[1] / tau;
      if (lay.n_u0) col.segment(lay.initial, lay.n_u0) = u.initial / tau;
      if (lay.n_known) col[lay.known_state] = 1.0 / tau;
    } else {
      col.segment(lay.mass, lay.n_y) = -(y[k] - y[k - 1]) / tau;
    }

    auto adj = cp.col(k - 1);
    adj.segment(lay.sensors, lay.n_out) =
        data.observations[static_cast<std::size_t>(k - 1)] - off.observation * y[k];
    for (Eigen::Index q = 0; q < lay.n_q; ++q) {
      const double th = evaluate(off.coefficients[static_cast<std::size_t>(q)], mu);
      adj.segment(lay.adjoint_stiffness + q * lay.n_y, lay.n_y) = -th * p[k];
    }
    adj.segment(lay.mass, lay.n_y) = -(p[k] - p[k + 1]) / tau;
  }

  DualNorms out;
  out.state_steps = detail::quadratic_forms(off.gram_state, cy);
  out.adjoint_steps = detail::quadratic_forms(off.gram_state, cp);
  out.state = detail::aggregate(out.state_steps, tau);
  out.adjoint = detail::aggregate(out.adjoint_steps, tau);

  if (has_initial_control(v)) {
    Vec c(d.state + d.initial + 1);
    c.head(d.state) = p[1];
    c.segment(d.state, d.initial) = -u.initial;
    c[d.state + d.initial] = 1.0;
    out.initial = detail::quadratic_forms(off.gram_initial, c)[0];
  }
  if (has_forcing_control(v)) {
    const Eigen::Index n_prior = off.forcing_prior_columns ? K : 0;
    Mat c = Mat::Zero(d.state + d.forcing + n_prior, K);
    for (int k = 1; k <= K; ++k) {
      c.col(k - 1).head(d.state) = p[k];
      c.col(k - 1).segment(d.state, d.forcing) = -u.forcing[static_cast<std::size_t>(k - 1)];
      if (n_prior) c(d.state + d.forcing + k - 1, k - 1) = 1.0;
    }
    out.forcing_steps = detail::quadratic_forms(off.gram_forcing, c);
    out.forcing = detail::aggregate(out.forcing_steps, tau);
  }
  return out;
}

/// The same dual norms evaluated directly from full-order residual vectors
/// (one Riesz solve per residual). Used to cross-check the offline data.
inline DualNorms dual_norms_direct(const FullOrderModel& fom, const ReducedBasis& basis,
                                   const AssimilationResult& rom, double mu,
                                   const ObservationData& obs) {
  const auto& m = fom.model;
  const Variant v = basis.variant;
  const int K = m.num_steps;
  const double tau = m.tau;
  const SpMat a = m.stiffness.evaluate(mu);
  SpdSolver<SpMat> xy;
  xy.compute(fom.state_metric);
  const auto& f = m.factorized();
  auto ynorm = [&](const Vec& r) { return std::sqrt(std::max(0.0, r.dot(xy.solve(r)))); };

  const Trajectory y = lift_trajectory(basis, rom.state);
  const Trajectory p = lift_trajectory(basis, rom.adjoint);
  const Control u = lift_control(basis, rom.control);

  DualNorms out;
  for (int k = 1; k <= K; ++k) {
    Vec r = m.load - a * y[k] - (m.mass * y[k]) / tau;
    if (k == 1) {
      if (v == Variant::weak) {
        r += (m.mass * obs.initial_state) / tau;
      } else {
        r += (m.initial_coupling * u.initial) / tau;
      }
    } else {
      r += (m.mass * y[k - 1]) / tau;
    }
    if (has_forcing_control(v)) r += m.control_to_state * u.forcing[static_cast<std::size_t>(k - 1)];
    out.state_steps.push_back(ynorm(r));

    const Vec misfit = obs.observations[static_cast<std::size_t>(k - 1)] - m.observation * y[k];
    Vec rp = Mat(m.observation.transpose()) * (m.observation_weight * misfit) - a.transpose() * p[k] -
             (m.mass * (p[k] - p[k + 1])) / tau;
    out.adjoint_steps.push_back(ynorm(rp));
  }
  out.state = detail::aggregate(out.state_steps, tau);
  out.adjoint = detail::aggregate(out.adjoint_steps, tau);

  if (has_initial_control(v)) {
    const Vec ud0 = obs.background.size() ? obs.background : Vec::Zero(fom.n());
    const Vec r = m.initial_coupling.transpose() * p[1] - m.initial_metric * (u.initial - ud0);
    out.initial = std::sqrt(std::max(0.0, r.dot(f.initial_metric.solve(r))));
  }
  if (has_forcing_control(v)) {
    for (int k = 1; k <= K; ++k) {
      Vec diff = u.forcing[static_cast<std::size_t>(k - 1)];
      if (!obs.forcing_prior.empty()) diff -= obs.forcing_prior[static_cast<std::size_t>(k - 1)];
      const Vec r = m.control_to_state.transpose() * p[k] - m.control_metric * diff;
      out.forcing_steps.push_back(std::sqrt(std::max(0.0, r.dot(f.control_metric.solve(r)))));
    }
    out.forcing = detail::aggregate(out.forcing_steps, tau);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bounds

struct CertificateReport {
  Variant variant = Variant::strong;
  double mu = 0.0;
  int N = 0;
  double R_y = 0.0;
  double R_p = 0.0;
  double R_u = 0.0;   // ||r_u||_{U'} (strong) or the aggregated forcing residual (weak, combined)
  double R_u0 = 0.0;  // ||r_u^0||_{U'} (combined)
  double alpha_lb = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double delta = 0.0;
  std::optional<double> error;
  std::optional<double> effectivity;

  void attach_error(double e) {
    error = e;
    effectivity = e > 0.0 ? std::optional<double>(delta / e) : std::nullopt;
  }
};

namespace detail {

inline void require_nonnegative(std::initializer_list<double> values, double alpha) {
  for (double x : values) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ContractError("bound inputs must be finite and >= 0");
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ContractError("alpha_lb must be positive");
}

inline double positive_root(double c1, double c2) { return c1 + std::sqrt(c1 * c1 + c2); }

}  // namespace detail

inline CertificateReport bound_strong(double R_y, double R_p, double r_u, double alpha_lb,
                                      double gamma_c) {
  detail::require_nonnegative({R_y, R_p, r_u, gamma_c}, alpha_lb);
  CertificateReport c;
  c.variant = Variant::strong;
  c.R_y = R_y;
  c.R_p = R_p;
  c.R_u = r_u;
  c.alpha_lb = alpha_lb;
  c.c1 = 0.5 * (r_u + R_p / std::sqrt(alpha_lb));
  c.c2 = (std::sqrt(2.0) + 1.0) / alpha_lb * R_y * R_p +
         gamma_c * gamma_c / (2.0 * alpha_lb * alpha_lb) * R_y * R_y;
  c.delta = detail::positive_root(c.c1, c.c2);
  return c;
}

inline CertificateReport bound_weak(double R_y, double R_p, double R_u, double alpha_lb,
                                    double gamma_b, double gamma_c) {
  detail::require_nonnegative({R_y, R_p, R_u, gamma_b, gamma_c}, alpha_lb);
  CertificateReport c;
  c.variant = Variant::weak;
  c.R_y = R_y;
  c.R_p = R_p;
  c.R_u = R_u;
  c.alpha_lb = alpha_lb;
  c.c1 = 0.5 * (R_u + std::sqrt(2.0) * gamma_b / alpha_lb * R_p);
  c.c2 = 2.0 * std::sqrt(2.0) / alpha_lb * R_y * R_p +
         gamma_c * gamma_c / (2.0 * alpha_lb * alpha_lb) * R_y * R_y;
  c.delta = detail::positive_root(c.c1, c.c2);
  return c;
}

inline CertificateReport bound_combined(double R_y, double R_p, double R_u0, double R_u,
                                        double alpha_lb, double gamma_b, double gamma_c) {
  detail::require_nonnegative({R_y, R_p, R_u0, R_u, gamma_b, gamma_c}, alpha_lb);
  CertificateReport c;
  c.variant = Variant::combined;
  c.R_y = R_y;
  c.R_p = R_p;
  c.R_u = R_u;
  c.R_u0 = R_u0;
  c.alpha_lb = alpha_lb;
  c.c1 = 0.5 * (std::sqrt(R_u0 * R_u0 + R_u * R_u) +
                std::sqrt(2.0 * gamma_b * gamma_b / (alpha_lb * alpha_lb) + 1.0 / alpha_lb) * R_p);
  c.c2 = 2.0 * std::sqrt(2.0) / alpha_lb * R_y * R_p +
         gamma_c * gamma_c / (2.0 * alpha_lb * alpha_lb) * R_y * R_y;
  c.delta = detail::positive_root(c.c1, c.c2);
  return c;
}

/// Right-hand side of the energy estimate tau sum_k ||e_y^k||_Y^2 <=
/// R_y^2 / alpha^2 + ||e_u||^2 / alpha.
inline double state_energy_bound(double R_y, double alpha_lb, double e_u_norm) {
  detail::require_nonnegative({R_y, e_u_norm}, alpha_lb);
  return R_y * R_y / (alpha_lb * alpha_lb) + e_u_norm * e_u_norm / alpha_lb;
}

/// Bound for the variant of the dual norms.
inline CertificateReport certify(const DualNorms& r, Variant v, double alpha_lb, const Constants& k) {
  switch (v) {
    case Variant::strong: return bound_strong(r.state, r.adjoint, r.initial, alpha_lb, k.gamma_c);
    case Variant::weak: return bound_weak(r.state, r.adjoint, r.forcing, alpha_lb, k.gamma_b, k.gamma_c);
    case Variant::combined:
      return bound_combined(r.state, r.adjoint, r.initial, r.forcing, alpha_lb, k.gamma_b, k.gamma_c);
  }
  throw ContractError("unknown variant");
}

}  // namespace rb4dvar
