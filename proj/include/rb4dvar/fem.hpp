#pragma once

// P1 finite elements on the structured mesh: mass, diffusion and
// convection matrices, box-average observation functionals, and the
// Taylor-Green transport benchmark.

#include "rb4dvar/linalg.hpp"
#include "rb4dvar/mesh.hpp"
#include "rb4dvar/model.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace rb4dvar {

using VelocityField = std::function<Point(const Point&)>;

/// beta(x) = (sin(pi x1) cos(pi x2), -cos(pi x1) sin(pi x2)).
inline Point taylor_green_velocity(const Point& x) {
  constexpr double pi = std::numbers::pi;
  return {std::sin(pi * x.x()) * std::cos(pi * x.y()),
          -std::cos(pi * x.x()) * std::sin(pi * x.y())};
}

namespace detail {

struct ElementGeometry {
  std::array<Point, 3> vertices;
  double area = 0.0;
  std::array<Point, 3> gradients;  // of the three barycentric basis functions
};

inline ElementGeometry element_geometry(const Mesh& mesh, const std::array<int, 3>& tri) {
  ElementGeometry g;
  for (int i = 0; i < 3; ++i) g.vertices[i] = mesh.nodes[tri[i]];
  g.area = signed_area(g.vertices[0], g.vertices[1], g.vertices[2]);
  if (!(g.area > 0.0)) {
    throw SingularSystemError("assembly: degenerate or inverted triangle");
  }
  for (int i = 0; i < 3; ++i) {
    const Point& b = g.vertices[(i + 1) % 3];
    const Point& c = g.vertices[(i + 2) % 3];
    g.gradients[i] = Point(b.y() - c.y(), c.x() - b.x()) / (2.0 * g.area);
  }
  return g;
}

// Symmetric 3-point rule, degree 2.
inline constexpr std::array<std::array<double, 3>, 3> kQuadBary{{
    {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0},
    {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0},
    {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0},
}};
inline constexpr double kQuadWeight = 1.0 / 3.0;

using Local = Eigen::Matrix3d;

inline Local local_mass(const ElementGeometry& g) {
  Local m;
  m << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  return m * (g.area / 12.0);
}

inline Local local_diffusion(const ElementGeometry& g) {
  Local k;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) k(i, j) = g.area * g.gradients[i].dot(g.gradients[j]);
  return k;
}

// Skew-symmetric convection form 1/2 int (beta.grad w) v - (beta.grad v) w.
inline Local local_convection(const ElementGeometry& g, const VelocityField& beta) {
  Local raw = Local::Zero();
  for (const auto& bary : kQuadBary) {
    Point x = Point::Zero();
    for (int a = 0; a < 3; ++a) x += bary[a] * g.vertices[a];
    const Point b = beta(x);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        raw(i, j) += kQuadWeight * g.area * b.dot(g.gradients[j]) * bary[i];
      }
    }
  }
  return 0.5 * (raw - raw.transpose());
}

inline void scatter(std::vector<Triplet>& t, const std::array<int, 3>& tri, const Local& local) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t.emplace_back(tri[i], tri[j], local(i, j));
}

inline SpMat from_triplets(int n, const std::vector<Triplet>& t) {
  SpMat m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

}  // namespace detail

/// Operators on all mesh nodes, before Dirichlet elimination.
struct NodalOperators {
  SpMat mass;
  SpMat diffusion;
  SpMat convection;
};

inline NodalOperators assemble_nodal_operators(const Mesh& mesh,
                                               const VelocityField& beta = taylor_green_velocity) {
  std::vector<Triplet> tm, tk, tn;
  const std::size_t nnz = 9 * mesh.triangles.size();
  tm.reserve(nnz);
  tk.reserve(nnz);
  tn.reserve(nnz);
  for (const auto& tri : mesh.triangles) {
    const auto g = detail::element_geometry(mesh, tri);
    detail::scatter(tm, tri, detail::local_mass(g));
    detail::scatter(tk, tri, detail::local_diffusion(g));
    detail::scatter(tn, tri, detail::local_convection(g, beta));
  }
  return {detail::from_triplets(mesh.num_nodes(), tm), detail::from_triplets(mesh.num_nodes(), tk),
          detail::from_triplets(mesh.num_nodes(), tn)};
}

/// Direct element-by-element assembly of a(.,.;mu) on all nodes, without the
/// affine split. Used to cross-check the affine evaluation.
inline SpMat assemble_bilinear_form(const Mesh& mesh, double mu,
                                    const VelocityField& beta = taylor_green_velocity) {
  std::vector<Triplet> t;
  t.reserve(9 * mesh.triangles.size());
  for (const auto& tri : mesh.triangles) {
    const auto g = detail::element_geometry(mesh, tri);
    const detail::Local local = detail::local_diffusion(g) / mu + detail::local_convection(g, beta);
    detail::scatter(t, tri, local);
  }
  return detail::from_triplets(mesh.num_nodes(), t);
}

/// Axis-aligned square sensor region.
struct SensorBox {
  Point center;
  double side = 0.1;
  double area() const { return side * side; }
};

inline std::vector<SensorBox> benchmark_sensors() {
  return {{{-0.6, 0.6}, 0.1}, {{0.6, 0.6}, 0.1}, {{0.6, -0.6}, 0.1},
          {{-0.6, -0.6}, 0.1}, {{0.0, 0.0}, 0.1}};
}

namespace detail {

using Polygon = std::vector<Point>;

// Sutherland-Hodgman against the half-plane {x : n.x <= c}.
inline Polygon clip(const Polygon& poly, const Point& n, double c) {
  Polygon out;
  const std::size_t m = poly.size();
  for (std::size_t i = 0; i < m; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % m];
    const double dp = n.dot(p) - c;
    const double dq = n.dot(q) - c;
    if (dp <= 0.0) out.push_back(p);
    if ((dp < 0.0 && dq > 0.0) || (dp > 0.0 && dq < 0.0)) {
      const double s = dp / (dp - dq);
      out.push_back(p + s * (q - p));
    }
  }
  return out;
}

inline std::array<double, 3> barycentric(const ElementGeometry& g, const Point& x) {
  std::array<double, 3> l{};
  for (int i = 0; i < 3; ++i) {
    const Point& b = g.vertices[(i + 1) % 3];
    const Point& c = g.vertices[(i + 2) % 3];
    l[i] = signed_area(x, b, c) / g.area;
  }
  return l;
}

}  // namespace detail

/// Rows h_i(phi_j) = |box_i|^{-1} int_{box_i} phi_j on all mesh nodes. The
/// box is intersected exactly with every element; the linear integrand is
/// integrated exactly on the fan triangulation of the intersection.
inline SpMat assemble_nodal_observation(const Mesh& mesh, const std::vector<SensorBox>& sensors) {
  std::vector<Triplet> t;
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    const auto& box = sensors[s];
    const double r = 0.5 * box.side;
    const double x0 = box.center.x() - r, x1 = box.center.x() + r;
    const double y0 = box.center.y() - r, y1 = box.center.y() + r;
    if (x0 < -1.0 || x1 > 1.0 || y0 < -1.0 || y1 > 1.0) {
      throw ConfigurationError("sensor box lies outside the domain");
    }
    for (const auto& tri : mesh.triangles) {
      const auto g = detail::element_geometry(mesh, tri);
      const Point lo = g.vertices[0].cwiseMin(g.vertices[1]).cwiseMin(g.vertices[2]);
      const Point hi = g.vertices[0].cwiseMax(g.vertices[1]).cwiseMax(g.vertices[2]);
      if (hi.x() <= x0 || lo.x() >= x1 || hi.y() <= y0 || lo.y() >= y1) continue;
      detail::Polygon poly(g.vertices.begin(), g.vertices.end());
      poly = detail::clip(poly, Point(1, 0), x1);
      poly = detail::clip(poly, Point(-1, 0), -x0);
      poly = detail::clip(poly, Point(0, 1), y1);
      poly = detail::clip(poly, Point(0, -1), -y0);
      if (poly.size() < 3) continue;
      std::array<double, 3> integral{};
      for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
        const double a = signed_area(poly[0], poly[i], poly[i + 1]);
        if (a <= 0.0) continue;
        const Point centroid = (poly[0] + poly[i] + poly[i + 1]) / 3.0;
        const auto l = detail::barycentric(g, centroid);
        for (int v = 0; v < 3; ++v) integral[v] += a * l[v];
      }
      for (int v = 0; v < 3; ++v) {
        if (integral[v] != 0.0) {
          t.emplace_back(static_cast<int>(s), tri[v], integral[v] / box.area());
        }
      }
    }
  }
  SpMat c(static_cast<Eigen::Index>(sensors.size()), mesh.num_nodes());
  c.setFromTriplets(t.begin(), t.end());
  c.makeCompressed();
  return c;
}

/// Nodal interpolant of amplitude * exp(-|x - center|^2 / (2 sigma^2)) over all
/// nodes, with the Dirichlet nodes set to zero.
inline Vec gaussian_nodal(const Mesh& mesh, const Point& center, double sigma, double amplitude) {
  if (!(sigma > 0.0)) throw ConfigurationError("gaussian: sigma must be positive");
  Vec v(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    v[i] = amplitude * std::exp(-(mesh.nodes[i] - center).squaredNorm() / (2.0 * sigma * sigma));
  }
  for (int d : mesh.dirichlet_nodes) v[d] = 0.0;
  return v;
}

/// Discretization settings of one benchmark instance.
struct BenchmarkSettings {
  double h = 0.08;
  double tau = 0.08;
  int num_steps = 100;
  double mu_ref = 30.0;
  ParameterDomain domain{10.0, 50.0};
  double observation_weight = 10.0;
  std::vector<SensorBox> sensors = benchmark_sensors();
};

/// Everything assembled for one benchmark instance. All matrices act on the
/// free (non-Dirichlet) nodes; U and Y share the P1 space, so B = M_u = M and
/// X_U = M.
struct FullOrderModel {
  Mesh mesh;
  std::vector<int> dofs;              // free node indices
  DiscreteModel<SpMat> model;
  SpMat diffusion;                    // stiffness of int grad w . grad v
  SpMat convection;                   // skew-symmetric convection
  SpMat state_metric;                 // X_Y = diffusion / mu_ref
  double mu_ref = 30.0;
  ParameterDomain domain;

  Eigen::Index n() const { return static_cast<Eigen::Index>(dofs.size()); }
  const SpMat& mass() const { return model.mass; }
  const SpMat& control_metric() const { return model.control_metric; }

  /// Restriction of a nodal vector to the free nodes.
  Vec restrict_nodal(const Vec& nodal) const {
    Vec out(n());
    for (Eigen::Index i = 0; i < n(); ++i) out[i] = nodal[dofs[i]];
    return out;
  }

  /// Extension by zero to all mesh nodes.
  Vec extend(const Vec& v) const {
    Vec out = Vec::Zero(mesh.num_nodes());
    for (Eigen::Index i = 0; i < n(); ++i) out[dofs[i]] = v[i];
    return out;
  }
};

inline FullOrderModel assemble_operators(const BenchmarkSettings& s,
                                         const VelocityField& beta = taylor_green_velocity) {
  if (!(s.tau > 0.0) || s.num_steps < 1) {
    throw ConfigurationError("time grid: tau must be positive and K >= 1");
  }
  if (!(s.mu_ref > 0.0) || !(s.domain.lo > 0.0) || s.domain.hi < s.domain.lo) {
    throw ConfigurationError("parameter domain must be a positive interval");
  }
  FullOrderModel fom;
  fom.mesh = build_mesh(s.h);
  fom.dofs = free_nodes(fom.mesh);
  fom.mu_ref = s.mu_ref;
  fom.domain = s.domain;

  const auto nodal = assemble_nodal_operators(fom.mesh, beta);
  const auto& d = fom.dofs;
  const SpMat mass = restrict_to(nodal.mass, d, d);
  fom.diffusion = restrict_to(nodal.diffusion, d, d);
  fom.convection = restrict_to(nodal.convection, d, d);
  fom.state_metric = fom.diffusion / s.mu_ref;

  std::vector<int> all_outputs(s.sensors.size());
  for (std::size_t i = 0; i < all_outputs.size(); ++i) all_outputs[i] = static_cast<int>(i);
  const SpMat c_nodal = assemble_nodal_observation(fom.mesh, s.sensors);

  auto& m = fom.model;
  m.mass = mass;
  m.stiffness.coefficients = {Coefficient::inverse_mu, Coefficient::one};
  m.stiffness.terms = {fom.diffusion, fom.convection};
  m.control_to_state = mass;
  m.initial_coupling = mass;
  m.load = Vec::Zero(fom.n());
  m.observation = restrict_to(c_nodal, all_outputs, d);
  m.observation_weight =
      s.observation_weight * Mat::Identity(static_cast<Eigen::Index>(s.sensors.size()),
                                           static_cast<Eigen::Index>(s.sensors.size()));
  m.control_metric = mass;
  m.initial_metric = mass;
  m.tau = s.tau;
  m.num_steps = s.num_steps;
  m.reduced = false;
  m.prepare();
  return fom;
}

/// Benchmark observation operator on all mesh nodes and its weight D_w = 10 I.
struct Observation {
  SpMat operator_nodal;
  Mat weight;
};

inline Observation assemble_observation(const Mesh& mesh, double weight = 10.0,
                                        const std::vector<SensorBox>& sensors = benchmark_sensors()) {
  const auto l = static_cast<Eigen::Index>(sensors.size());
  return {assemble_nodal_observation(mesh, sensors), weight * Mat::Identity(l, l)};
}

/// Gaussian initial condition restricted to the free nodes.
inline Vec gaussian_initial_condition(const FullOrderModel& fom, const Point& center, double sigma,
                                      double amplitude = 1.0) {
  return fom.restrict_nodal(gaussian_nodal(fom.mesh, center, sigma, amplitude));
}

/// Observations and priors on the FE spaces (free-node coordinates).
struct ObservationData {
  std::vector<Vec> observations;   // z_d^k in R^l, k = 1..K at [k-1]
  Vec background;                  // u_d^0
  std::vector<Vec> forcing_prior;  // u_d^k; empty means zero
  Vec initial_state;               // known y_0 for the weak variant
};

/// Expresses FE-level data in the full-order model's coordinates.
inline AssimilationData restrict_data(const FullOrderModel& fom, const ObservationData& obs,
                                      Variant variant) {
  const auto& m = fom.model;
  if (static_cast<int>(obs.observations.size()) != m.num_steps) {
    throw ContractError("observation data must hold exactly K vectors");
  }
  AssimilationData d;
  d.variant = variant;
  d.observations = obs.observations;
  if (has_initial_control(variant)) {
    const Vec u = obs.background.size() ? obs.background : Vec::Zero(fom.n());
    d.initial_prior = m.initial_metric * u;
    d.initial_prior_norm_sq = u.dot(d.initial_prior);
  }
  if (has_forcing_control(variant)) {
    d.forcing_prior.assign(m.num_steps, Vec::Zero(fom.n()));
    d.forcing_prior_norm_sq.assign(m.num_steps, 0.0);
    if (!obs.forcing_prior.empty()) {
      for (int k = 0; k < m.num_steps; ++k) {
        d.forcing_prior[k] = m.control_metric * obs.forcing_prior[k];
        d.forcing_prior_norm_sq[k] = obs.forcing_prior[k].dot(d.forcing_prior[k]);
      }
    }
  }
  if (variant == Variant::weak) {
    if (obs.initial_state.size() != fom.n()) {
      throw ContractError("weak variant requires the known initial state y_0");
    }
    d.initial_state = m.mass * obs.initial_state;
  }
  return d;
}

}  // namespace rb4dvar
