#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <sstream>

#include "oseen/forms.hpp"

namespace {

using oseen::FeSpace;
using oseen::Mesh;
using oseen::SpMat;
using oseen::Vec2;

double max_abs(const SpMat& M) {
  double m = 0.0;
  for (int c = 0; c < M.outerSize(); ++c)
    for (SpMat::InnerIterator it(M, c); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

oseen::OseenCoefficients constant_advection(double nu, const Vec2& b, double c) {
  oseen::OseenCoefficients co;
  co.nu = nu;
  co.b = [b](const Vec2&) { return b; };
  co.grad_b = [](const Vec2&) { return oseen::Mat2::Zero().eval(); };
  co.c = [c](const Vec2&) { return c; };
  co.grad_c = [](const Vec2&) { return Vec2::Zero().eval(); };
  co.r0 = 1.0;
  return co;
}

TEST(Forms, PenaltyAndStabilizationWeights) {
  EXPECT_NEAR(oseen::sigma_auto(2), 36.0, 1e-14);
  EXPECT_NEAR(oseen::sigma_auto(3), 60.0, 1e-14);

  // tau = min(1, |b| h / nu) h^3 / |b|
  EXPECT_NEAR(oseen::compute_tau(0.1, 2.0, 1e-6), 5e-4, 1e-18);
  EXPECT_NEAR(oseen::compute_tau(0.1, 2.0, 1.0), 1e-4, 1e-18);
  EXPECT_THROW(oseen::compute_tau(0.1, 0.0, 1.0), std::invalid_argument);
}

TEST(Forms, StabWeightsUseOneGlobalAdvectionBound) {
  Mesh mesh = oseen::build_structured_mesh(3, 0.2, 21);
  FeSpace V = oseen::build_velocity_space(mesh, 2);
  auto b = [](const Vec2& x) { return Vec2(1.0 + x.x(), 0.0); };
  oseen::StabWeights sw = oseen::compute_stab_weights(V, b, 1e-3, 8);
  EXPECT_GT(sw.b_inf, 1.9);
  EXPECT_LE(sw.b_inf, 2.0);
  ASSERT_EQ(sw.tau.size(), mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t)
    EXPECT_NEAR(sw.tau(t), oseen::compute_tau(mesh.diameter(t), sw.b_inf, 1e-3), 1e-18);
}

TEST(Forms, GradientGramKillsConstantsDiffusionIsSymmetric) {
  Mesh mesh = oseen::build_structured_mesh(2, 0.2, 13);
  FeSpace V = oseen::build_velocity_space(mesh, 2, false);
  Eigen::VectorXd ones =
      oseen::interpolate_velocity(V, [](const Vec2&) { return Vec2(1.0, -2.0); });

  SpMat G = oseen::assemble_gradient_gram(V);
  EXPECT_LE((G * ones).cwiseAbs().maxCoeff(), 1e-12);

  oseen::OperatorWithData D = oseen::assemble_diffusion(V, 36.0);
  SpMat asym = D.M - SpMat(D.M.transpose());
  EXPECT_LE(max_abs(asym), 1e-11 * max_abs(D.M));
}

TEST(Forms, JumpPenaltyOfContinuousFieldIsItsBoundaryTrace) {
  Mesh mesh = oseen::build_structured_mesh(2, 0.2, 17);
  FeSpace V = oseen::build_velocity_space(mesh, 2, false);
  auto u = [](const Vec2& x) { return Vec2(x.x() * x.y(), x.y() * x.y() - 0.5); };
  Eigen::VectorXd v = oseen::interpolate_velocity(V, u);
  SpMat J = oseen::assemble_jump_penalty(V);

  // interior jumps of a global polynomial vanish, so only the boundary
  // facets contribute: sum over them of h^-1 int |u|^2
  double expected = 0.0;
  oseen::QuadRule er = oseen::edge_rule(8);
  for (const oseen::Facet& f : mesh.facets) {
    if (!f.boundary) continue;
    for (int q = 0; q < er.weights.size(); ++q) {
      Vec2 x = (1.0 - er.points(q, 0)) * mesh.vertices[f.v0] +
               er.points(q, 0) * mesh.vertices[f.v1];
      expected += er.weights(q) * u(x).squaredNorm();  // h^-1 * |e| cancels
    }
  }
  EXPECT_NEAR(v.dot(J * v), expected, 1e-12 * std::abs(expected));
}

TEST(Forms, ConvectionPlusTransposeIsTheBnJumpForm) {
  // for div b = 0 the upwind form satisfies C + C^T = sum |b.n| [u].[v]
  Mesh mesh = oseen::build_structured_mesh(3, 0.2, 29);
  FeSpace V = oseen::build_velocity_space(mesh, 2, false);
  auto b = [](const Vec2& x) {
    return Vec2(x.y() * x.y() - 0.3, x.x() * x.x() + 0.1);
  };
  SpMat C = oseen::assemble_convection(V, b, oseen::ConvectionFlux::upwind).M;
  SpMat J = oseen::assemble_bn_jump(V, b);
  SpMat defect = C + SpMat(C.transpose()) - J;
  EXPECT_LE(max_abs(defect), 1e-12 * std::max(1.0, max_abs(J)));
}

TEST(Forms, VorticityTermOnOneElement) {
  // v = (0, x^2), b = (1,0), c = 0: L v = (0, 2x - 2 nu), curl L v = 2,
  // no interior facets, so v' S v = delta0 tau 4 |K|
  std::stringstream ms("3 3 1\n0 0 1\n1 0 1\n0 1 1\n0 1 2\n");
  Mesh mesh = oseen::read_mesh_text(ms);
  FeSpace V = oseen::build_velocity_space(mesh, 2, false);
  oseen::OseenCoefficients co = constant_advection(1.0, Vec2(1.0, 0.0), 0.0);
  oseen::StabWeights sw = oseen::compute_stab_weights(V, co.b, co.nu, 8);
  EXPECT_NEAR(sw.b_inf, 1.0, 1e-15);

  Eigen::VectorXd v =
      oseen::interpolate_velocity(V, [](const Vec2& x) { return Vec2(0.0, x.x() * x.x()); });
  const double delta0 = 1e-5;
  SpMat S = oseen::assemble_vorticity_stab(V, co, delta0, sw);
  double tau = oseen::compute_tau(std::sqrt(2.0), 1.0, 1.0);
  double expected = delta0 * tau * 4.0 * 0.5;
  EXPECT_NEAR(v.dot(S * v), expected, 1e-12);
}

TEST(Forms, VorticityTermIsPositiveSemidefinite) {
  Mesh mesh = oseen::build_structured_mesh(2, 0.2, 31);
  FeSpace V = oseen::build_velocity_space(mesh, 2, false);
  oseen::OseenCoefficients co = constant_advection(1e-4, Vec2(1.0, 0.5), 1.0);
  oseen::StabWeights sw = oseen::compute_stab_weights(V, co.b, co.nu, 8);
  SpMat S = oseen::assemble_vorticity_stab(V, co, 1e-5, sw);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd v(V.n_dofs);
    for (int i = 0; i < V.n_dofs; ++i) v(i) = dist(rng);
    EXPECT_GE(v.dot(S * v), -1e-12 * v.squaredNorm());
  }
}

TEST(Forms, DivergencePairingAgainstConstantPressure) {
  Mesh mesh = oseen::build_structured_mesh(2, 0.15, 37);
  FeSpace V = oseen::build_velocity_space(mesh, 2);
  FeSpace Q = oseen::build_pressure_space(mesh, 2);
  SpMat B = oseen::assemble_divergence(V, Q);

  // for v = (x, 0): -(div v, q_0)_K = -|K|^{1/2} on every element
  Eigen::VectorXd v =
      oseen::interpolate_velocity(V, [](const Vec2& x) { return Vec2(x.x(), 0.0); });
  Eigen::VectorXd Bv = B * v;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    int q0 = Q.conn[size_t(t) * Q.n_local];
    EXPECT_NEAR(Bv(q0), -std::sqrt(mesh.area(t)), 1e-13);
  }

  // constants lie in the cokernel over interior dofs: row m' B vanishes on
  // every velocity dof with zero boundary flux
  Eigen::VectorXd m = oseen::pressure_means(Q);
  Eigen::VectorXd mB = B.transpose() * m;
  for (int i = 0; i < V.n_free; ++i)
    EXPECT_LE(std::abs(mB(V.global_of_free[i])), 1e-13);
}

TEST(Forms, CurlFieldsAreDivergenceFree) {
  Mesh mesh = oseen::build_structured_mesh(2, 0.2, 41);
  FeSpace V = oseen::build_velocity_space(mesh, 2, false);
  FeSpace Q = oseen::build_pressure_space(mesh, 2);
  FeSpace Z = oseen::build_potential_space(mesh, 2, false);
  SpMat B = oseen::assemble_divergence(V, Q);
  SpMat Curl = oseen::curl_matrix(Z, V);
  EXPECT_LE(max_abs(SpMat(B * Curl)), 1e-10);
}

TEST(Forms, FusedSchemeMatchesStandaloneParts) {
  Mesh mesh = oseen::build_structured_mesh(2, 0.2, 43);
  oseen::OseenProblem prob = oseen::make_benchmark_problem(1e-2);
  FeSpace V = oseen::build_velocity_space(mesh, 2);
  FeSpace Q = oseen::build_pressure_space(mesh, 2);
  oseen::set_velocity_dirichlet(V, prob.dirichlet);

  oseen::DiscretizationParams par;
  oseen::SchemeSystem sys = oseen::assemble_scheme(V, Q, prob, par);

  const double nu = prob.coef.nu;
  oseen::StabWeights sw = oseen::compute_stab_weights(V, prob.coef.b, nu, 8);
  oseen::OperatorWithData D = oseen::assemble_diffusion(V, par.sigma, prob.dirichlet);
  oseen::OperatorWithData C =
      oseen::assemble_convection(V, prob.coef.b, par.flux, prob.dirichlet);
  SpMat R = oseen::assemble_mass(V, 0, prob.coef.c);
  SpMat S = oseen::assemble_vorticity_stab(V, prob.coef, par.delta0, sw);
  Eigen::VectorXd load = oseen::assemble_load(V, prob, par, sw);

  SpMat A_parts = nu * D.M + C.M + R + S;
  Eigen::VectorXd rhs_parts = load + nu * D.rhs + C.rhs;

  double scale = max_abs(sys.A);
  EXPECT_LE(max_abs(SpMat(sys.A - A_parts)), 1e-11 * scale);
  EXPECT_LE((sys.rhs - rhs_parts).cwiseAbs().maxCoeff(),
            1e-11 * rhs_parts.cwiseAbs().maxCoeff());
  EXPECT_LE(max_abs(SpMat(sys.B - oseen::assemble_divergence(V, Q))), 1e-12);
  EXPECT_LE((sys.m - oseen::pressure_means(Q)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(sys.stab.b_inf, sw.b_inf, 1e-15);
}

TEST(Forms, AssemblyIsDeterministic) {
  Mesh mesh = oseen::build_structured_mesh(2, 0.2, 47);
  oseen::OseenProblem prob = oseen::make_benchmark_problem(1e-6);
  FeSpace V = oseen::build_velocity_space(mesh, 2);
  FeSpace Q = oseen::build_pressure_space(mesh, 2);
  oseen::set_velocity_dirichlet(V, prob.dirichlet);
  oseen::DiscretizationParams par;

  oseen::SchemeSystem a = oseen::assemble_scheme(V, Q, prob, par);
  oseen::SchemeSystem b = oseen::assemble_scheme(V, Q, prob, par);
  ASSERT_EQ(a.A.nonZeros(), b.A.nonZeros());
  EXPECT_EQ(Eigen::Map<const Eigen::VectorXd>(a.A.valuePtr(), a.A.nonZeros()),
            Eigen::Map<const Eigen::VectorXd>(b.A.valuePtr(), b.A.nonZeros()));
  EXPECT_EQ(a.rhs, b.rhs);
}

TEST(Forms, VorticityStabilizationRequiresCurlF) {
  Mesh mesh = oseen::build_structured_mesh(1);
  oseen::OseenProblem prob = oseen::make_benchmark_problem(1.0);
  prob.curl_f = nullptr;
  FeSpace V = oseen::build_velocity_space(mesh, 2);
  FeSpace Q = oseen::build_pressure_space(mesh, 2);
  oseen::DiscretizationParams par;  // vorticity on by default
  EXPECT_THROW(oseen::assemble_scheme(V, Q, prob, par), std::invalid_argument);
  par.vorticity = false;
  EXPECT_NO_THROW(oseen::assemble_scheme(V, Q, prob, par));
}

TEST(Forms, SchemeNormGramIsSymmetricPositive) {
  Mesh mesh = oseen::build_structured_mesh(2, 0.1, 53);
  oseen::OseenProblem prob = oseen::make_benchmark_problem(1e-3);
  FeSpace V = oseen::build_velocity_space(mesh, 2);
  oseen::DiscretizationParams par;
  oseen::StabWeights sw = oseen::compute_stab_weights(V, prob.coef.b, prob.coef.nu, 8);
  SpMat N = oseen::scheme_norm_gram(V, prob, par, sw);
  EXPECT_LE(max_abs(SpMat(N - SpMat(N.transpose()))), 1e-11 * max_abs(N));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd v(V.n_dofs);
    for (int i = 0; i < V.n_dofs; ++i) v(i) = dist(rng);
    EXPECT_GT(v.dot(N * v), 0.0);
  }
}

} // namespace
