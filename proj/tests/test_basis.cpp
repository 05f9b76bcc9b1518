#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "dof_check.hpp"
#include "oseen/element_basis.hpp"

namespace {

using oseen::ElementBasis;
using oseen::TriangleGeom;
using oseen::Vec2;

TEST(Basis, DofCounts) {
  TriangleGeom g = oseen::make_triangle_geom(Vec2(0, 0), Vec2(1, 0), Vec2(0.3, 0.8));
  EXPECT_EQ(oseen::stenberg_basis(g, 2).n_dofs, 12);
  EXPECT_EQ(oseen::stenberg_basis(g, 3).n_dofs, 20);
  EXPECT_EQ(oseen::hermite_basis(g, 3).n_dofs, 10);
  EXPECT_EQ(oseen::hermite_basis(g, 4).n_dofs, 15);
  EXPECT_EQ(oseen::dg_basis(g, 1).n_dofs, 3);
  EXPECT_EQ(oseen::dg_basis(g, 2).n_dofs, 6);
}

TEST(Basis, DualDeltaPropertyOnRandomTriangles) {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    TriangleGeom g = dof_check::random_triangle(rng);
    worst = std::max(worst, dof_check::delta_defect(g, oseen::stenberg_basis(g, 2)));
    worst = std::max(worst, dof_check::delta_defect(g, oseen::stenberg_basis(g, 3)));
    worst = std::max(worst, dof_check::delta_defect(g, oseen::hermite_basis(g, 3)));
    worst = std::max(worst, dof_check::delta_defect(g, oseen::hermite_basis(g, 4)));
    worst = std::max(worst, dof_check::delta_defect(g, oseen::dg_basis(g, 1)));
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(Basis, NedelecMomentSpace) {
  // N_r = P_r^2 + homogeneous_r * (-y, x); dim (r+1)(r+3)
  Eigen::MatrixXd n0 = oseen::nedelec_coefficients(0);
  EXPECT_EQ(n0.cols(), 3);
  Eigen::MatrixXd n1 = oseen::nedelec_coefficients(1);
  EXPECT_EQ(n1.cols(), 8);

  // r = 0 spans (1,0), (0,1), (-y, x) in the scaled coordinates; stacked
  // monomial order is 1, x, y per component
  ASSERT_EQ(n0.rows(), 6);
  Eigen::MatrixXd targets(6, 3);
  targets << 1, 0, 0,
             0, 0, 0,
             0, 0, -1,
             0, 1, 0,
             0, 0, 1,
             0, 0, 0;
  Eigen::MatrixXd joint(6, 6);
  joint << n0, targets;
  EXPECT_EQ(Eigen::FullPivLU<Eigen::MatrixXd>(n0).rank(), 3);
  EXPECT_EQ(Eigen::FullPivLU<Eigen::MatrixXd>(joint).rank(), 3);

  EXPECT_EQ(Eigen::FullPivLU<Eigen::MatrixXd>(n1).rank(), 8);
}

TEST(Basis, StenbergReproducesPolynomials) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  for (int k : {2, 3}) {
    for (int trial = 0; trial < 10; ++trial) {
      TriangleGeom g = dof_check::random_triangle(rng);
      ElementBasis eb = oseen::stenberg_basis(g, k);
      // random vector polynomial of total degree k
      Eigen::MatrixXd c(2, (k + 1) * (k + 2) / 2);
      for (int i = 0; i < c.size(); ++i) c(i) = coef(rng);
      auto f = [&](Vec2 x) {
        Eigen::Vector2d v = Eigen::Vector2d::Zero();
        int m = 0;
        for (int d = 0; d <= k; ++d)
          for (int a = d; a >= 0; --a, ++m)
            v += c.col(m) * std::pow(x.x(), a) * std::pow(x.y(), d - a);
        return v;
      };
      Eigen::VectorXd dofs = dof_check::vector_dofs(g, eb, f);
      for (int pt = 0; pt < 5; ++pt) {
        double l0 = coef(rng) * 0.5 + 0.5, l1 = (1.0 - l0) * (coef(rng) * 0.5 + 0.5);
        Vec2 x = g.v[0] + l0 * (g.v[1] - g.v[0]) + l1 * (g.v[2] - g.v[0]);
        Eigen::MatrixXd val = eb.deriv(x);
        Eigen::Vector2d uh(val.col(0).dot(dofs), val.col(1).dot(dofs));
        EXPECT_LE((uh - f(x)).norm(), 1e-10) << "k = " << k;
      }
    }
  }
}

TEST(Basis, ConstantFieldEdgeMoments) {
  // for v = (1,0), the j-th normal moment of edge e is n_x delta_j0
  std::mt19937_64 rng(11);
  TriangleGeom g = dof_check::random_triangle(rng);
  ElementBasis eb = oseen::stenberg_basis(g, 3);
  Eigen::VectorXd d =
      dof_check::vector_dofs(g, eb, [](Vec2) { return Eigen::Vector2d(1.0, 0.0); });
  for (int i = 0; i < eb.n_dofs; ++i) {
    const oseen::DofSpec& s = eb.dofs[i];
    if (s.kind != oseen::DofSpec::Kind::edge_moment) continue;
    double expect = s.index == 0 ? g.edge[s.entity].normal.x() : 0.0;
    EXPECT_NEAR(d(i), expect, 1e-13);
  }
}

TEST(Basis, InterpolatedIdentityFieldHasDivergenceTwo) {
  std::mt19937_64 rng(13);
  TriangleGeom g = dof_check::random_triangle(rng);
  ElementBasis eb = oseen::stenberg_basis(g, 2);
  Eigen::VectorXd d = dof_check::vector_dofs(
      g, eb, [](Vec2 x) { return Eigen::Vector2d(x.x(), x.y()); });
  Vec2 x = g.bbox_center;
  double div = eb.deriv(x, 1, 0).col(0).dot(d) + eb.deriv(x, 0, 1).col(1).dot(d);
  EXPECT_NEAR(div, 2.0, 1e-11);
}

TEST(Basis, HermiteReproducesCubic) {
  std::mt19937_64 rng(17);
  TriangleGeom g = dof_check::random_triangle(rng);
  ElementBasis eb = oseen::hermite_basis(g, 3);
  auto f = [](Vec2 x) { return x.x() * x.x() * x.x(); };
  auto grad = [](Vec2 x) { return Eigen::Vector2d(3.0 * x.x() * x.x(), 0.0); };
  Eigen::VectorXd d = dof_check::scalar_dofs(g, eb, f, grad);
  for (int pt = 0; pt < 5; ++pt) {
    std::uniform_real_distribution<double> u(0.1, 0.4);
    double l0 = u(rng), l1 = u(rng);
    Vec2 x = g.v[0] + l0 * (g.v[1] - g.v[0]) + l1 * (g.v[2] - g.v[0]);
    EXPECT_NEAR(eb.deriv(x).col(0).dot(d), f(x), 1e-12);
    EXPECT_NEAR(eb.deriv(x, 1, 0).col(0).dot(d), grad(x).x(), 1e-11);
  }
}

TEST(Basis, DerivativesMatchCentralDifferences) {
  std::mt19937_64 rng(19);
  TriangleGeom g = dof_check::random_triangle(rng);
  const double h = 1e-5;
  for (const ElementBasis& eb : {oseen::stenberg_basis(g, 2), oseen::hermite_basis(g, 4)}) {
    Vec2 x = g.bbox_center + Vec2(0.01, -0.02);
    Eigen::MatrixXd dx = (eb.deriv(x + Vec2(h, 0)) - eb.deriv(x - Vec2(h, 0))) / (2 * h);
    Eigen::MatrixXd dy = (eb.deriv(x + Vec2(0, h)) - eb.deriv(x - Vec2(0, h))) / (2 * h);
    EXPECT_LE((eb.deriv(x, 1, 0) - dx).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE((eb.deriv(x, 0, 1) - dy).cwiseAbs().maxCoeff(), 1e-6);
    Eigen::MatrixXd dxy =
        (eb.deriv(x + Vec2(0, h), 1, 0) - eb.deriv(x - Vec2(0, h), 1, 0)) / (2 * h);
    EXPECT_LE((eb.deriv(x, 1, 1) - dxy).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Basis, DgBasisIsOrthonormal) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    TriangleGeom g = dof_check::random_triangle(rng);
    for (int deg : {0, 1, 2}) {
      ElementBasis eb = oseen::dg_basis(g, deg);
      std::vector<Vec2> pts;
      Eigen::VectorXd w;
      oseen::detail::physical_rule(g, oseen::triangle_rule(std::max(1, 2 * deg + 2)), pts, w);
      Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(eb.n_dofs, eb.n_dofs);
      for (int q = 0; q < w.size(); ++q) {
        Eigen::VectorXd v = eb.deriv(pts[q]).col(0);
        gram += w(q) * v * v.transpose();
      }
      EXPECT_LE((gram - Eigen::MatrixXd::Identity(eb.n_dofs, eb.n_dofs)).cwiseAbs().maxCoeff(),
                1e-12);
      // first member is the normalized constant
      EXPECT_NEAR(eb.deriv(g.v[0])(0, 0), 1.0 / std::sqrt(g.area), 1e-12);
      EXPECT_NEAR(eb.deriv(g.bbox_center)(0, 0), 1.0 / std::sqrt(g.area), 1e-12);
    }
  }
}

TEST(Basis, RejectsInvalidOrders) {
  TriangleGeom g = oseen::make_triangle_geom(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1));
  EXPECT_THROW(oseen::stenberg_basis(g, 1), std::invalid_argument);
  EXPECT_THROW(oseen::hermite_basis(g, 2), std::invalid_argument);
  EXPECT_THROW(oseen::dg_basis(g, -1), std::invalid_argument);
  EXPECT_THROW(oseen::make_triangle_geom(Vec2(0, 0), Vec2(1, 0), Vec2(2, 0)),
               std::invalid_argument);
}

} // namespace
