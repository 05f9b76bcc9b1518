#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>

#include "oseen/analysis.hpp"
#include "oseen/solver.hpp"

namespace {

using oseen::FeSpace;
using oseen::Mesh;
using oseen::Vec2;

// divergence-free quadratic velocity with linear pressure; the scheme must
// reproduce it to solver precision on any mesh
oseen::OseenProblem polynomial_problem(double nu) {
  oseen::OseenProblem prob;
  prob.coef.nu = nu;
  prob.coef.b = [](const Vec2&) { return Vec2(1.0, 0.5); };
  prob.coef.grad_b = [](const Vec2&) { return oseen::Mat2::Zero().eval(); };
  prob.coef.c = [](const Vec2&) { return 1.0; };
  prob.coef.grad_c = [](const Vec2&) { return Vec2::Zero().eval(); };
  prob.coef.r0 = 1.0;

  oseen::ManufacturedSolution ms;
  // u = curl(x^2 y) = (x^2, -2xy), p = x - y + const fixed by zero mean
  ms.u_deriv = [](int i, int j, const Vec2& x) {
    if (i == 0 && j == 0) return Vec2(x.x() * x.x(), -2.0 * x.x() * x.y());
    if (i == 1 && j == 0) return Vec2(2.0 * x.x(), -2.0 * x.y());
    if (i == 0 && j == 1) return Vec2(0.0, -2.0 * x.x());
    if (i == 2 && j == 0) return Vec2(2.0, 0.0);
    if (i == 1 && j == 1) return Vec2(0.0, -2.0);
    return Vec2(0.0, 0.0);
  };
  ms.p = [](const Vec2& x) { return x.x() - x.y(); };
  ms.grad_p = [](const Vec2&) { return Vec2(1.0, -1.0); };
  prob.exact = ms;
  oseen::attach_manufactured_data(prob);
  return prob;
}

struct Solved {
  FeSpace V, Q;
  oseen::SchemeSystem sys;
  oseen::DiscreteSolution sol;
};

Solved solve_on(const Mesh& mesh, const oseen::OseenProblem& prob, int k,
                const oseen::DiscretizationParams& par, int dense_threshold = 3000) {
  Solved s;
  s.V = oseen::build_velocity_space(mesh, k);
  s.Q = oseen::build_pressure_space(mesh, k);
  oseen::set_velocity_dirichlet(s.V, prob.dirichlet);
  s.sys = oseen::assemble_scheme(s.V, s.Q, prob, par);
  s.sol = oseen::solve_oseen(s.V, s.Q, s.sys, dense_threshold);
  return s;
}

TEST(Solver, ReproducesPolynomialSolution) {
  Mesh mesh = oseen::build_structured_mesh(3, 0.2, 15);
  oseen::OseenProblem prob = polynomial_problem(0.7);
  oseen::DiscretizationParams par;
  Solved s = solve_on(mesh, prob, 2, par);

  oseen::ErrorReport err =
      oseen::compute_errors(s.V, s.Q, prob, par, s.sys.stab, s.sol.u, s.sol.p);
  EXPECT_LE(err.l2_u, 1e-9);
  EXPECT_LE(err.energy, 1e-9);
  EXPECT_LE(err.div_u, 1e-9);
  EXPECT_LE(err.l2_p, 1e-9);
  EXPECT_LE(s.sol.report.residual, 1e-12);
}

TEST(Solver, PressureHasZeroMean) {
  Mesh mesh = oseen::build_structured_mesh(3, 0.2, 19);
  oseen::OseenProblem prob = oseen::make_benchmark_problem(1e-3);
  oseen::DiscretizationParams par;
  Solved s = solve_on(mesh, prob, 2, par);
  Eigen::VectorXd m = oseen::pressure_means(s.Q);
  EXPECT_LE(std::abs(m.dot(s.sol.p)), 1e-10);
}

TEST(Solver, DenseAndSparsePathsAgree) {
  Mesh mesh = oseen::build_structured_mesh(2, 0.2, 23);
  oseen::OseenProblem prob = oseen::make_benchmark_problem(1e-2);
  oseen::DiscretizationParams par;
  // system size ~ 400: force one dense and one sparse-grounded solve
  Solved dense = solve_on(mesh, prob, 2, par, 1 << 20);
  Solved sparse = solve_on(mesh, prob, 2, par, 1);
  ASSERT_TRUE(dense.sol.report.dense);
  ASSERT_FALSE(sparse.sol.report.dense);
  EXPECT_LE((dense.sol.u - sparse.sol.u).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE((dense.sol.p - sparse.sol.p).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(dense.sol.multiplier, sparse.sol.multiplier, 1e-9);
  EXPECT_LE(dense.sol.report.residual, 1e-12);
  EXPECT_LE(sparse.sol.report.residual, 1e-12);
}

TEST(Solver, DeterministicAcrossRuns) {
  Mesh mesh = oseen::build_structured_mesh(2, 0.2, 27);
  oseen::OseenProblem prob = oseen::make_benchmark_problem(1e-6);
  oseen::DiscretizationParams par;
  Solved a = solve_on(mesh, prob, 2, par);
  Solved b = solve_on(mesh, prob, 2, par);
  EXPECT_EQ(a.sol.u, b.sol.u);
  EXPECT_EQ(a.sol.p, b.sol.p);
  EXPECT_EQ(a.sol.multiplier, b.sol.multiplier);
}

TEST(Solver, ReportsSystemShape) {
  Mesh mesh = oseen::build_structured_mesh(2, 0.0, 0);
  oseen::OseenProblem prob = oseen::make_benchmark_problem(1.0);
  oseen::DiscretizationParams par;
  Solved s = solve_on(mesh, prob, 2, par);
  EXPECT_EQ(s.sol.report.n_velocity_free, s.V.n_free);
  EXPECT_EQ(s.sol.report.n_pressure, s.Q.n_dofs);
  EXPECT_EQ(s.sol.report.n_system, s.V.n_free + s.Q.n_dofs + 1);
  EXPECT_EQ(s.sol.u.size(), s.V.n_dofs);
  EXPECT_GT(s.sol.report.nnz, 0);
}

TEST(Solver, InfSupEstimateIsStableUnderRefinement) {
  // beta on the first two audit meshes; positivity and a bounded ratio are
  // the quantitative form of the stability assumption
  oseen::InfSupReport rep[2];
  Mesh mesh = oseen::build_structured_mesh(4, 0.2, 42);
  for (int pass = 0; pass < 2; ++pass) {
    FeSpace V = oseen::build_velocity_space(mesh, 2);
    FeSpace Q = oseen::build_pressure_space(mesh, 2);
    rep[pass] = oseen::estimate_infsup(V, Q);
    EXPECT_EQ(rep[pass].n_velocity_free, V.n_free);
    if (pass == 0) mesh = oseen::refine_uniform(mesh);
  }
  EXPECT_GT(rep[0].beta, 0.05);
  EXPECT_GT(rep[1].beta, 0.05);
  double ratio = std::max(rep[0].beta, rep[1].beta) / std::min(rep[0].beta, rep[1].beta);
  EXPECT_LT(ratio, 2.0);
}

TEST(Solver, InfSupRespectsSizeCap) {
  Mesh mesh = oseen::build_structured_mesh(4, 0.2, 42);
  FeSpace V = oseen::build_velocity_space(mesh, 2);
  FeSpace Q = oseen::build_pressure_space(mesh, 2);
  EXPECT_THROW(oseen::estimate_infsup(V, Q, 10), std::runtime_error);
}

} // namespace
