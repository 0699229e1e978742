#pragma once

#include "rb4dvar/linalg.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rb4dvar {

/// Which unknowns the assimilation estimates.
enum class Variant {
  strong,    ///< initial condition only
  weak,      ///< model-error forcing only, initial state known
  combined,  ///< initial condition and forcing
};

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::strong: return "strong";
    case Variant::weak: return "weak";
    case Variant::combined: return "combined";
  }
  return "unknown";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "strong") return Variant::strong;
  if (s == "weak") return Variant::weak;
  if (s == "combined") return Variant::combined;
  return std::nullopt;
}

inline bool has_initial_control(Variant v) { return v != Variant::weak; }
inline bool has_forcing_control(Variant v) { return v != Variant::strong; }

/// Parameter-dependent coefficient functions of the affine expansion.
enum class Coefficient { one, inverse_mu };

inline double evaluate(Coefficient c, double mu) {
  return c == Coefficient::inverse_mu ? 1.0 / mu : 1.0;
}

/// A(mu) = sum_q theta_q(mu) A_q.
template <class MatrixT>
struct AffineOperator {
  std::vector<Coefficient> coefficients;
  std::vector<MatrixT> terms;

  std::size_t size() const { return terms.size(); }

  MatrixT evaluate(double mu) const {
    MatrixT out = rb4dvar::evaluate(coefficients.at(0), mu) * terms.at(0);
    for (std::size_t q = 1; q < terms.size(); ++q) {
      out += rb4dvar::evaluate(coefficients[q], mu) * terms[q];
    }
    return out;
  }
};

/// Closed parameter interval.
struct ParameterDomain {
  double lo = 10.0;
  double hi = 50.0;
  bool contains(double mu) const { return mu >= lo && mu <= hi; }
};

/// Operator set of one discretization (full-order sparse or reduced dense).
/// Controls live in their own coordinate spaces: the initial condition in an
/// n_initial-dimensional space, each forcing step in an n_control space.
template <class MatrixT>
struct DiscreteModel {
  MatrixT mass;                  // n_y x n_y
  AffineOperator<MatrixT> stiffness;
  MatrixT control_to_state;      // B: n_y x n_control
  MatrixT initial_coupling;      // M_u: n_y x n_initial
  Vec load;                      // F
  MatrixT observation;           // C: l x n_y
  Mat observation_weight;        // D_w: l x l
  MatrixT control_metric;        // X_U on forcing coordinates
  MatrixT initial_metric;        // X_U on initial-condition coordinates
  double tau = 0.0;
  int num_steps = 0;
  bool reduced = false;

  struct Factors {
    SpdSolver<MatrixT> mass;
    SpdSolver<MatrixT> control_metric;
    SpdSolver<MatrixT> initial_metric;
  };
  std::shared_ptr<const Factors> factors;

  Eigen::Index n_state() const { return mass.rows(); }
  Eigen::Index n_control() const { return control_to_state.cols(); }
  Eigen::Index n_initial() const { return initial_coupling.cols(); }
  Eigen::Index n_outputs() const { return observation.rows(); }

  /// Factorizes the parameter-independent SPD matrices. Must be called once
  /// after the operators are set; the model is immutable afterwards.
  void prepare() {
    if (mass.rows() != mass.cols() || stiffness.terms.empty() ||
        control_to_state.rows() != mass.rows() || initial_coupling.rows() != mass.rows() ||
        load.size() != mass.rows() || observation.cols() != mass.rows() ||
        observation_weight.rows() != observation.rows() ||
        control_metric.rows() != control_to_state.cols() ||
        initial_metric.rows() != initial_coupling.cols() || !(tau > 0.0) || num_steps < 1) {
      throw ContractError("discrete model: inconsistent operator dimensions");
    }
    for (const auto& t : stiffness.terms) {
      if (t.rows() != mass.rows() || t.cols() != mass.cols()) {
        throw ContractError("discrete model: stiffness term has wrong shape");
      }
    }
    auto f = std::make_shared<Factors>();
    f->mass.compute(mass);
    f->control_metric.compute(control_metric);
    f->initial_metric.compute(initial_metric);
    factors = std::move(f);
  }

  const Factors& factorized() const {
    if (!factors) throw ContractError("discrete model used before prepare()");
    return *factors;
  }
};

/// The unknown of the assimilation. `initial` is empty for the weak variant
/// and `forcing` (indexed k = 1..K at position k-1) is empty for the strong
/// variant.
struct Control {
  Variant variant = Variant::strong;
  Vec initial;
  std::vector<Vec> forcing;

  static Control zeros(Variant v, Eigen::Index n_initial, Eigen::Index n_control, int steps) {
    Control c;
    c.variant = v;
    if (has_initial_control(v)) c.initial = Vec::Zero(n_initial);
    if (has_forcing_control(v)) c.forcing.assign(steps, Vec::Zero(n_control));
    return c;
  }

  template <class MatrixT>
  static Control zeros(Variant v, const DiscreteModel<MatrixT>& m) {
    return zeros(v, m.n_initial(), m.n_control(), m.num_steps);
  }

  Control& axpy(double a, const Control& x) {
    if (x.variant != variant) throw ContractError("control variant mismatch");
    if (has_initial_control(variant)) initial += a * x.initial;
    for (std::size_t k = 0; k < forcing.size(); ++k) forcing[k] += a * x.forcing[k];
    return *this;
  }

  Control& scale(double a) {
    initial *= a;
    for (auto& f : forcing) f *= a;
    return *this;
  }

  /// Euclidean size of the coordinate vector (all blocks stacked).
  Eigen::Index total_size() const {
    Eigen::Index n = initial.size();
    for (const auto& f : forcing) n += f.size();
    return n;
  }
};

/// States y^0..y^K (offset 0) or adjoints p^1..p^{K+1} (offset 1).
struct Trajectory {
  int offset = 0;
  std::vector<Vec> values;

  const Vec& operator[](int k) const { return values.at(static_cast<std::size_t>(k - offset)); }
  Vec& operator[](int k) { return values.at(static_cast<std::size_t>(k - offset)); }
  int first() const { return offset; }
  int last() const { return offset + static_cast<int>(values.size()) - 1; }
};

/// Observations and priors expressed in the coordinates of one discrete
/// model. Priors are stored as dual vectors (X_U u_d) plus their squared
/// norms so that a reduced model can carry a prior outside its span.
struct AssimilationData {
  Variant variant = Variant::strong;
  std::vector<Vec> observations;            // z_d^k, k = 1..K at [k-1]
  Vec initial_prior;                        // X_U u_d^0 (strong, combined)
  double initial_prior_norm_sq = 0.0;
  std::vector<Vec> forcing_prior;           // X_U u_d^k (weak, combined)
  std::vector<double> forcing_prior_norm_sq;
  Vec initial_state;                        // M y_0 (weak)
};

template <class MatrixT>
void check_consistent(const DiscreteModel<MatrixT>& m, const Control& c,
                      const AssimilationData& d) {
  if (c.variant != d.variant) {
    throw ContractError("control variant '" + std::string(to_string(c.variant)) +
                        "' does not match data variant '" + std::string(to_string(d.variant)) + "'");
  }
  if (static_cast<int>(d.observations.size()) != m.num_steps) {
    throw ContractError("data must hold exactly K observation vectors");
  }
  if (has_initial_control(c.variant) &&
      (c.initial.size() != m.n_initial() || d.initial_prior.size() != m.n_initial())) {
    throw ContractError("initial-condition control has wrong dimension");
  }
  if (has_forcing_control(c.variant)) {
    if (static_cast<int>(c.forcing.size()) != m.num_steps ||
        static_cast<int>(d.forcing_prior.size()) != m.num_steps) {
      throw ContractError("forcing control must carry exactly K vectors");
    }
  }
  if (c.variant == Variant::weak && d.initial_state.size() != m.n_state()) {
    throw ContractError("weak variant requires the known initial state");
  }
}

}  // namespace rb4dvar
