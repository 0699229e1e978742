#include "rb4dvar/certification.hpp"

#include "toy_models.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

using namespace rb4dvar;

namespace {

const Variant kVariants[] = {Variant::strong, Variant::weak, Variant::combined};

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

SpMat scalar_sparse(double x) {
  SpMat s(1, 1);
  s.insert(0, 0) = x;
  return s;
}

double dense_gen_max(const Mat& a, const Mat& b) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> eig(a, b, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

ReducedBasis random_basis(const FullOrderModel& fom, Variant v, BasisDims d, std::mt19937_64& rng) {
  ReducedBasis b = ReducedBasis::empty(v, fom.n());
  for (int i = 0; i < d.state; ++i) {
    append_orthonormal(b.state, toy::random_vector(fom.n(), rng), fom.state_metric, 1e-8);
  }
  for (int i = 0; i < d.initial && has_initial_control(v); ++i) {
    append_orthonormal(b.initial, toy::random_vector(fom.n(), rng), fom.mass(), 1e-8);
  }
  for (int i = 0; i < d.forcing && has_forcing_control(v); ++i) {
    append_orthonormal(b.forcing, toy::random_vector(fom.n(), rng), fom.mass(), 1e-8);
  }
  b.dims.push_back(b.current());
  return b;
}

// Random reduced coordinates for the control, state and adjoint (not an
// optimum: the residual formulas hold for any trajectories).
AssimilationResult random_reduced_solution(const ReducedBasis& b, int K, std::mt19937_64& rng) {
  AssimilationResult r;
  r.control = Control::zeros(b.variant, b.initial.cols(), b.forcing.cols(), K);
  if (has_initial_control(b.variant)) r.control.initial = toy::random_vector(b.initial.cols(), rng);
  for (auto& f : r.control.forcing) f = toy::random_vector(b.forcing.cols(), rng);
  r.state.offset = 0;
  for (int k = 0; k <= K; ++k) r.state.values.push_back(toy::random_vector(b.state.cols(), rng));
  r.adjoint.offset = 1;
  for (int k = 1; k <= K; ++k) r.adjoint.values.push_back(toy::random_vector(b.state.cols(), rng));
  r.adjoint.values.push_back(Vec::Zero(b.state.cols()));
  return r;
}

// Dense oracle for the residual dual norms: every operator is densified and
// each residual is mapped by a full-pivoting LU of the metric.
DualNorms dense_oracle(const FullOrderModel& fom, const ReducedBasis& b, const AssimilationResult& r,
                       double mu, const ObservationData& obs) {
  const auto& m = fom.model;
  const Mat mass = Mat(m.mass), a = Mat(m.stiffness.terms[0]) / mu + Mat(m.stiffness.terms[1]);
  const Mat bb = Mat(m.control_to_state), mu0 = Mat(m.initial_coupling), c = Mat(m.observation);
  const Mat xu = Mat(m.control_metric), xu0 = Mat(m.initial_metric);
  const Eigen::FullPivLU<Mat> xy(Mat(fom.state_metric)), lu_u(xu), lu_u0(xu0);
  const double tau = m.tau;
  const int K = m.num_steps;
  const Variant v = b.variant;
  auto y = [&](int k) -> Vec { return b.state * r.state[k]; };
  auto p = [&](int k) -> Vec { return b.state * r.adjoint[k]; };
  DualNorms out;
  double sy = 0, sp = 0, su = 0;
  for (int k = 1; k <= K; ++k) {
    Vec prev;
    if (k > 1) {
      prev = mass * y(k - 1);
    } else if (v == Variant::weak) {
      prev = mass * obs.initial_state;
    } else {
      prev = mu0 * (b.initial * r.control.initial);
    }
    Vec ry = m.load - a * y(k) - (mass * y(k) - prev) / tau;
    if (has_forcing_control(v)) ry += bb * (b.forcing * r.control.forcing[k - 1]);
    sy += ry.dot(xy.solve(ry));
    const Vec rp = c.transpose() * (m.observation_weight * (obs.observations[k - 1] - c * y(k))) -
                   a.transpose() * p(k) - mass * (p(k) - b.state * r.adjoint[k + 1]) / tau;
    sp += rp.dot(xy.solve(rp));
    if (has_forcing_control(v)) {
      Vec du = b.forcing * r.control.forcing[k - 1];
      if (!obs.forcing_prior.empty()) du -= obs.forcing_prior[k - 1];
      const Vec ru = bb.transpose() * p(k) - xu * du;
      su += ru.dot(lu_u.solve(ru));
    }
  }
  out.state = std::sqrt(tau * sy);
  out.adjoint = std::sqrt(tau * sp);
  out.forcing = std::sqrt(tau * su);
  if (has_initial_control(v)) {
    const Vec ru = mu0.transpose() * p(1) - xu0 * (b.initial * r.control.initial - obs.background);
    out.initial = std::sqrt(ru.dot(lu_u0.solve(ru)));
  }
  return out;
}

class CertificationOnBenchmark : public ::testing::Test {
 protected:
  void SetUp() override {
    fom = assemble_operators(toy::small_benchmark(0.25, 8, 0.25));
    obs = toy::benchmark_data(fom, 30.0);
    obs.background *= 0.6;
    std::mt19937_64 rng(77);
    for (auto& z : obs.observations) z += 0.05 * toy::random_vector(z.size(), rng);
  }
  FullOrderModel fom;
  ObservationData obs;
};

}  // namespace

TEST(Coercivity, MinThetaValues) {
  EXPECT_DOUBLE_EQ(coercivity_lower_bound(30.0), 1.0);
  EXPECT_DOUBLE_EQ(coercivity_lower_bound(10.0), 3.0);
  EXPECT_DOUBLE_EQ(coercivity_lower_bound(50.0), 0.6);
  EXPECT_THROW(coercivity_lower_bound(9.99), DomainError);
  EXPECT_THROW(coercivity_lower_bound(50.01), DomainError);
  EXPECT_THROW(coercivity_lower_bound(std::nan("")), DomainError);
}

TEST(Constants, ScalarClosedForms) {
  const double c = -1.7, d = 3.0, xy = 0.4, b = 2.5, xu = 1.6;
  Mat dm(1, 1);
  dm << d;
  EXPECT_NEAR(compute_gamma_c(scalar_sparse(c), dm, scalar_sparse(xy)), std::abs(c) * std::sqrt(d / xy), 1e-14);
  EXPECT_NEAR(compute_gamma_b(scalar_sparse(b), scalar_sparse(xy), scalar_sparse(xu)),
              std::abs(b) / std::sqrt(xu * xy), 1e-14);
  SpMat zero(1, 1);
  EXPECT_EQ(compute_gamma_c(zero, dm, scalar_sparse(xy)), 0.0);
  EXPECT_EQ(compute_gamma_b(zero, scalar_sparse(xy), scalar_sparse(xu)), 0.0);
}

TEST(Constants, DeskValuesMatchDenseGeneralizedEigenproblems) {
  const FullOrderModel fom = assemble_operators(toy::small_benchmark(0.08, 2, 0.08));
  const auto& m = fom.model;
  const Mat xy = Mat(fom.state_metric), xu = Mat(m.control_metric), c = Mat(m.observation);
  const Mat bm = Mat(m.control_to_state);
  const double gc = std::sqrt(dense_gen_max(c.transpose() * m.observation_weight * c, xy));
  const Mat btxb = bm.transpose() * Eigen::LLT<Mat>(xy).solve(bm);
  const double gb = std::sqrt(dense_gen_max(0.5 * (btxb + btxb.transpose()), xu));
  const Constants k = compute_constants(fom);
  EXPECT_LE(rel_err(k.gamma_c, gc), 1e-8);
  EXPECT_LE(rel_err(k.gamma_b, gb), 1e-8);
  EXPECT_GT(k.gamma_b, 0.0);
  EXPECT_GT(k.gamma_c, 0.0);
}

TEST(Bounds, StrongArithmetic) {
  EXPECT_EQ(bound_strong(0, 0, 0, 1.0, 3.0).delta, 0.0);
  // c1 = 1, c2 = 0: r_u = 2.
  auto b = bound_strong(0, 0, 2.0, 1.0, 3.0);
  EXPECT_DOUBLE_EQ(b.c1, 1.0);
  EXPECT_DOUBLE_EQ(b.c2, 0.0);
  EXPECT_DOUBLE_EQ(b.delta, 2.0);
  // c1 = 0, c2 = 4: gamma_c^2 R_y^2 / (2 alpha^2) = 4 with R_p = 0.
  b = bound_strong(2.0, 0.0, 0.0, 1.0, std::sqrt(2.0));
  EXPECT_NEAR(b.c2, 4.0, 1e-15);
  EXPECT_NEAR(b.delta, 2.0, 1e-15);
  // General case against the formula.
  const double ry = 0.3, rp = 0.2, ru = 0.1, al = 0.6, gc = 5.0;
  b = bound_strong(ry, rp, ru, al, gc);
  const double c1 = 0.5 * (ru + rp / std::sqrt(al));
  const double c2 = (std::sqrt(2.0) + 1) / al * ry * rp + gc * gc / (2 * al * al) * ry * ry;
  EXPECT_DOUBLE_EQ(b.delta, c1 + std::sqrt(c1 * c1 + c2));
  EXPECT_NEAR(b.delta * b.delta - 2 * b.c1 * b.delta - b.c2, 0.0, 1e-13);
}

TEST(Bounds, WeakAndCombinedArithmetic) {
  EXPECT_EQ(bound_weak(0, 0, 0, 1.0, 2.0, 3.0).delta, 0.0);
  const double rp = 0.4, ru = 0.3, al = 0.6, gb = 1.5;
  EXPECT_NEAR(bound_weak(0.0, rp, ru, al, gb, 3.0).delta, ru + std::sqrt(2.0) * gb * rp / al, 1e-15);
  EXPECT_EQ(bound_combined(0, 0, 0, 0, 1.0, 2.0, 3.0).delta, 0.0);
  EXPECT_NEAR(bound_combined(0, 0, 0.7, 0, 0.5, 2.0, 3.0).delta, 0.7, 1e-15);
  const auto c = bound_combined(0.1, 0.2, 0.3, 0.4, 0.8, 1.2, 2.0);
  const double c1 = 0.5 * (0.5 + std::sqrt(2 * 1.44 / 0.64 + 1 / 0.8) * 0.2);
  EXPECT_NEAR(c.c1, c1, 1e-15);
  EXPECT_NEAR(c.c2, 2 * std::sqrt(2.0) / 0.8 * 0.02 + 4.0 / (2 * 0.64) * 0.01, 1e-15);
}

TEST(Bounds, RejectNegativeInputs) {
  EXPECT_THROW(bound_strong(-1, 0, 0, 1, 1), ContractError);
  EXPECT_THROW(bound_strong(0, 0, 0, 0, 1), ContractError);
  EXPECT_THROW(bound_weak(0, 0, -1e-20, 1, 1, 1), ContractError);
  EXPECT_THROW(bound_combined(0, 0, 0, 0, 1, -1, 1), ContractError);
  EXPECT_THROW(state_energy_bound(0, -1, 0), ContractError);
}

TEST(Bounds, StateEnergy) {
  EXPECT_EQ(state_energy_bound(0, 1, 0), 0.0);
  EXPECT_EQ(state_energy_bound(1, 1, 0), 1.0);
  EXPECT_DOUBLE_EQ(state_energy_bound(2, 0.5, 3), 16.0 + 18.0);
}

// The keystone check: online Gram quadratic forms against a dense Riesz
// computation on random reduced solutions.
TEST_F(CertificationOnBenchmark, OnlineDualNormsMatchDenseOracle) {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> mu_dist(10.0, 50.0);
  for (Variant v : kVariants) {
    ObservationData o = obs;
    if (v != Variant::strong) {
      o.forcing_prior.assign(static_cast<std::size_t>(fom.model.num_steps), Vec::Zero(fom.n()));
      for (auto& f : o.forcing_prior) f = 0.1 * toy::random_vector(fom.n(), rng);
    }
    const ReducedBasis b = random_basis(fom, v, {5, 3, 3}, rng);
    const ResidualOfflineData off = build_offline_residual_data(fom, b, o);
    const AssimilationData rd = project_data(fom, b, o, v);
    for (Eigen::Index i = 0; i < off.gram_state.rows(); ++i) EXPECT_GE(off.gram_state(i, i), 0.0);
    for (int trial = 0; trial < 20; ++trial) {
      const double mu = mu_dist(rng);
      const auto r = random_reduced_solution(b, fom.model.num_steps, rng);
      const DualNorms online = dual_norms(off, r, mu, rd);
      const DualNorms oracle = dense_oracle(fom, b, r, mu, o);
      const DualNorms direct = dual_norms_direct(fom, b, r, mu, o);
      EXPECT_LE(rel_err(online.state, oracle.state), 1e-8) << to_string(v);
      EXPECT_LE(rel_err(online.adjoint, oracle.adjoint), 1e-8) << to_string(v);
      EXPECT_LE(rel_err(direct.state, oracle.state), 1e-10);
      EXPECT_LE(rel_err(direct.adjoint, oracle.adjoint), 1e-10);
      if (has_initial_control(v)) {
        EXPECT_LE(rel_err(online.initial, oracle.initial), 1e-8) << to_string(v);
        EXPECT_LE(rel_err(direct.initial, oracle.initial), 1e-10);
      }
      if (has_forcing_control(v)) {
        EXPECT_LE(rel_err(online.forcing, oracle.forcing), 1e-8) << to_string(v);
        EXPECT_LE(rel_err(direct.forcing, oracle.forcing), 1e-10);
      }
    }
  }
}

TEST_F(CertificationOnBenchmark, ZeroSolutionWithZeroDataHasZeroResiduals) {
  ObservationData o = obs;
  for (auto& z : o.observations) z.setZero();
  o.background.setZero();
  std::mt19937_64 rng(5);
  const ReducedBasis b = random_basis(fom, Variant::strong, {3, 2, 0}, rng);
  const auto off = build_offline_residual_data(fom, b, o);
  auto r = random_reduced_solution(b, fom.model.num_steps, rng);
  r.control.initial.setZero();
  for (auto& v : r.state.values) v.setZero();
  for (auto& v : r.adjoint.values) v.setZero();
  const auto n = dual_norms(off, r, 20.0, project_data(fom, b, o, Variant::strong));
  EXPECT_EQ(n.state, 0.0);
  EXPECT_EQ(n.adjoint, 0.0);
  EXPECT_EQ(n.initial, 0.0);
}

TEST_F(CertificationOnBenchmark, EmptyControlBasisReducesToLoadTerm) {
  std::mt19937_64 rng(6);
  ReducedBasis b = random_basis(fom, Variant::strong, {2, 0, 0}, rng);
  const auto off = build_offline_residual_data(fom, b, obs);
  // Ingredients: F, 2 A^q blocks, 2 A^q^T blocks, M, C^T D.
  EXPECT_EQ(off.gram_state.rows(), 1 + 2 * 2 + 2 * 2 + 2 + fom.model.n_outputs());
  EXPECT_EQ(off.gram_initial.rows(), 2 + 0 + 1);
}

TEST_F(CertificationOnBenchmark, IdentityBasisHasVanishingResiduals) {
  for (Variant v : kVariants) {
    ReducedBasis b = ReducedBasis::empty(v, fom.n());
    for (Eigen::Index i = 0; i < fom.n(); ++i) {
      append_orthonormal(b.state, Vec::Unit(fom.n(), i), fom.state_metric, 1e-12);
      if (has_initial_control(v)) append_orthonormal(b.initial, Vec::Unit(fom.n(), i), fom.mass(), 1e-12);
      if (has_forcing_control(v)) append_orthonormal(b.forcing, Vec::Unit(fom.n(), i), fom.mass(), 1e-12);
    }
    b.dims.push_back(b.current());
    const auto rm = project_model(fom, b);
    const auto rd = project_data(fom, b, obs, v);
    const auto r = solve_4dvar(rm, 27.0, rd, v, {1e-13, 5000, false});
    const DualNorms d = dual_norms_direct(fom, b, r, 27.0, obs);
    double scale = 0.0;
    for (const auto& z : obs.observations) scale = std::max(scale, z.norm());
    EXPECT_LE(d.state, 1e-10 * scale) << to_string(v);
    EXPECT_LE(d.adjoint, 1e-10 * scale) << to_string(v);
    EXPECT_LE(d.initial + d.forcing, 1e-10 * scale) << to_string(v);
  }
}

// Rigor on arbitrary (non-greedy) reduced spaces: the bound covers the true
// error in the norm of each variant.
TEST_F(CertificationOnBenchmark, BoundsAreRigorousOnRandomSpaces) {
  std::mt19937_64 rng(99);
  const Constants k = compute_constants(fom);
  for (Variant v : kVariants) {
    const AssimilationData fd = restrict_data(fom, obs, v);
    for (int trial = 0; trial < 3; ++trial) {
      const ReducedBasis b = random_basis(fom, v, {6 + 4 * trial, 2 + trial, 2 + trial}, rng);
      const auto rm = project_model(fom, b);
      const auto rd = project_data(fom, b, obs, v);
      const auto off = build_offline_residual_data(fom, b, obs);
      for (double mu : {10.0, 31.0, 50.0}) {
        const SolveOptions opts{1e-12, 5000, false};
        const auto full = solve_4dvar(fom.model, mu, fd, v, opts);
        const auto red = solve_4dvar(rm, mu, rd, v, opts);
        Control e = lift_control(b, red.control);
        e.axpy(-1.0, full.control);
        const double err = ControlSpace<SpMat>(fom.model).norm(e);
        const auto cert = certify(dual_norms(off, red, mu, rd), v, k.alpha_lb(mu), k);
        EXPECT_GE(cert.delta / err, 1.0 - 1e-6) << to_string(v) << " mu=" << mu;
      }
    }
  }
}
