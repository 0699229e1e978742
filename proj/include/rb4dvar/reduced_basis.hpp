#pragma once

#include "rb4dvar/fem.hpp"
#include "rb4dvar/linalg.hpp"
#include "rb4dvar/model.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <vector>

namespace rb4dvar {

struct BasisDims {
  int state = 0;
  int initial = 0;
  int forcing = 0;

  friend bool operator==(const BasisDims&, const BasisDims&) = default;
};

/// Reduced spaces as columns in full-order coordinates: `state` spans Y_N
/// (X_Y-orthonormal), `initial` spans U_N^0 and `forcing` spans U_N (both
/// X_U-orthonormal). dims[n] records the dimensions after greedy iteration n
/// (dims[0] is the initialization), so the basis of iteration n is made of
/// the leading columns.
struct ReducedBasis {
  Variant variant = Variant::strong;
  Mat state;
  Mat initial;
  Mat forcing;
  std::vector<BasisDims> dims;

  int iterations() const { return dims.empty() ? 0 : static_cast<int>(dims.size()) - 1; }

  BasisDims current() const {
    return {static_cast<int>(state.cols()), static_cast<int>(initial.cols()),
            static_cast<int>(forcing.cols())};
  }

  /// The basis after greedy iteration n.
  ReducedBasis truncated(int n) const {
    if (n < 0 || n > iterations()) throw ContractError("truncation beyond trained iterations");
    const BasisDims d = dims[static_cast<std::size_t>(n)];
    ReducedBasis out;
    out.variant = variant;
    out.state = state.leftCols(d.state);
    out.initial = initial.leftCols(d.initial);
    out.forcing = forcing.leftCols(d.forcing);
    out.dims.assign(dims.begin(), dims.begin() + n + 1);
    return out;
  }

  static ReducedBasis empty(Variant v, Eigen::Index n) {
    ReducedBasis b;
    b.variant = v;
    b.state.resize(n, 0);
    b.initial.resize(n, 0);
    b.forcing.resize(n, 0);
    return b;
  }
};

/// Largest POD mode of a snapshot set in the metric X, by the method of
/// snapshots. Normalized to unit X-norm with its largest-magnitude entry
/// positive. Returns nothing when all snapshots vanish.
inline std::optional<Vec> pod_largest_mode(const std::vector<Vec>& snapshots, const SpMat& metric) {
  if (snapshots.empty()) return std::nullopt;
  const Eigen::Index n = snapshots.front().size();
  Mat s(n, static_cast<Eigen::Index>(snapshots.size()));
  for (std::size_t j = 0; j < snapshots.size(); ++j) s.col(static_cast<Eigen::Index>(j)) = snapshots[j];
  const Mat xs = metric * s;
  Mat gram = s.transpose() * xs;
  gram = 0.5 * (gram + gram.transpose());
  if (!(gram.diagonal().maxCoeff() > 0.0)) return std::nullopt;
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram);
  const Eigen::Index top = gram.rows() - 1;
  if (!(eig.eigenvalues()[top] > 0.0)) return std::nullopt;
  Vec mode = s * eig.eigenvectors().col(top);
  const double norm = std::sqrt(mode.dot(metric * mode));
  if (!(norm > 0.0) || !std::isfinite(norm)) return std::nullopt;
  mode /= norm;
  Eigen::Index imax = 0;
  mode.cwiseAbs().maxCoeff(&imax);
  if (mode[imax] < 0.0) mode = -mode;
  return mode;
}

/// v - V V^T X v for each snapshot (the X-orthogonal projection error).
/// With an empty basis the snapshots are returned unchanged.
inline std::vector<Vec> project_error_trajectory(const std::vector<Vec>& snapshots, const Mat& basis,
                                                 const SpMat& metric) {
  std::vector<Vec> out;
  out.reserve(snapshots.size());
  for (const auto& v : snapshots) {
    if (basis.cols() == 0) {
      out.push_back(v);
    } else {
      out.push_back(v - basis * (basis.transpose() * (metric * v)));
    }
  }
  return out;
}

/// Appends v to an X-orthonormal basis by two passes of Gram-Schmidt.
/// Returns false (and leaves the basis untouched) if the X-orthogonal
/// complement of v has norm <= rel_tol * ||v||_X.
inline bool append_orthonormal(Mat& basis, const Vec& v, const SpMat& metric, double rel_tol) {
  const double norm0 = std::sqrt(std::max(0.0, v.dot(metric * v)));
  if (!(norm0 > 0.0)) return false;
  Vec w = v;
  for (int pass = 0; pass < 2 && basis.cols() > 0; ++pass) {
    w -= basis * (basis.transpose() * (metric * w));
  }
  const double norm = std::sqrt(std::max(0.0, w.dot(metric * w)));
  if (norm <= rel_tol * norm0) return false;
  basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
  basis.col(basis.cols() - 1) = w / norm;
  return true;
}

/// Galerkin projection of the full-order operators onto the reduced spaces.
inline DiscreteModel<Mat> project_model(const FullOrderModel& fom, const ReducedBasis& basis) {
  const auto& f = fom.model;
  const Mat& vy = basis.state;
  if (vy.cols() == 0) throw ContractError("project_model: state basis is empty");
  DiscreteModel<Mat> r;
  r.mass = congruence(vy, f.mass, vy);
  r.stiffness.coefficients = f.stiffness.coefficients;
  for (const auto& t : f.stiffness.terms) r.stiffness.terms.push_back(congruence(vy, t, vy));
  r.control_to_state = congruence(vy, f.control_to_state, basis.forcing);
  r.initial_coupling = congruence(vy, f.initial_coupling, basis.initial);
  r.load = vy.transpose() * f.load;
  r.observation = f.observation * vy;
  r.observation_weight = f.observation_weight;
  r.control_metric = congruence(basis.forcing, f.control_metric, basis.forcing);
  r.initial_metric = congruence(basis.initial, f.initial_metric, basis.initial);
  r.tau = f.tau;
  r.num_steps = f.num_steps;
  r.reduced = true;
  r.prepare();
  return r;
}

/// FE-level data in reduced coordinates. Priors outside the reduced control
/// span keep their full norms so reduced costs remain comparable.
inline AssimilationData project_data(const FullOrderModel& fom, const ReducedBasis& basis,
                                     const ObservationData& obs, Variant variant) {
  const AssimilationData full = restrict_data(fom, obs, variant);
  AssimilationData d;
  d.variant = variant;
  d.observations = full.observations;
  if (has_initial_control(variant)) {
    d.initial_prior = basis.initial.transpose() * full.initial_prior;
    d.initial_prior_norm_sq = full.initial_prior_norm_sq;
  }
  if (has_forcing_control(variant)) {
    d.forcing_prior.reserve(full.forcing_prior.size());
    for (const auto& p : full.forcing_prior) d.forcing_prior.push_back(basis.forcing.transpose() * p);
    d.forcing_prior_norm_sq = full.forcing_prior_norm_sq;
  }
  if (variant == Variant::weak) d.initial_state = basis.state.transpose() * full.initial_state;
  return d;
}

/// Reduced control expressed in full-order coordinates.
inline Control lift_control(const ReducedBasis& basis, const Control& reduced) {
  Control c;
  c.variant = reduced.variant;
  if (has_initial_control(c.variant)) c.initial = basis.initial * reduced.initial;
  c.forcing.reserve(reduced.forcing.size());
  for (const auto& f : reduced.forcing) c.forcing.push_back(basis.forcing * f);
  return c;
}

inline Trajectory lift_trajectory(const ReducedBasis& basis, const Trajectory& reduced) {
  Trajectory t;
  t.offset = reduced.offset;
  t.values.reserve(reduced.values.size());
  for (const auto& v : reduced.values) t.values.push_back(basis.state * v);
  return t;
}

}  // namespace rb4dvar
