#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace oseen {

// Rule on the reference triangle {x,y >= 0, x+y <= 1} (weights sum to 1/2)
// or on the reference edge [0,1] (weights sum to 1).
struct QuadRule {
  Eigen::Matrix<double, Eigen::Dynamic, 2> points;
  Eigen::VectorXd weights;
  int exactness = 0;
};

namespace detail {

// Golub-Welsch: nodes/weights of the Gauss rule for a weight function given
// by its three-term recurrence (alpha_i diagonal, beta_i squared off-diagonal,
// mu0 total mass).  Symmetric tridiagonal eigensolve, fully deterministic.
inline void golub_welsch(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                         double mu0, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  const int m = static_cast<int>(alpha.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    J(i, i) = alpha(i);
    if (i + 1 < m) J(i, i + 1) = J(i + 1, i) = std::sqrt(beta(i + 1));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes = es.eigenvalues();
  weights.resize(m);
  for (int i = 0; i < m; ++i) {
    double v0 = es.eigenvectors()(0, i);
    weights(i) = mu0 * v0 * v0;
  }
}

// Gauss-Legendre on [0,1] with m points (exact through degree 2m-1).
inline void gauss_legendre_01(int m, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(m), beta = Eigen::VectorXd::Zero(m);
  for (int i = 1; i < m; ++i) beta(i) = double(i) * i / (4.0 * i * i - 1.0);
  golub_welsch(alpha, beta, 2.0, nodes, weights);
  nodes = (nodes.array() + 1.0) / 2.0;
  weights /= 2.0;
}

// Gauss-Jacobi for weight (1-t) on [0,1] with m points.
inline void gauss_jacobi10_01(int m, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  Eigen::VectorXd alpha(m), beta = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < m; ++i) alpha(i) = -1.0 / ((2.0 * i + 1.0) * (2.0 * i + 3.0));
  for (int i = 1; i < m; ++i)
    beta(i) = double(i) * (i + 1.0) / ((2.0 * i + 1.0) * (2.0 * i + 1.0));
  golub_welsch(alpha, beta, 2.0, nodes, weights);
  nodes = (nodes.array() + 1.0) / 2.0;
  weights /= 4.0; // includes the 1/2 Jacobian and the (1-t)/2 weight rescaling
}

} // namespace detail

// Gauss-Legendre rule on [0,1], exact for polynomials of the given degree.
inline QuadRule edge_rule(int degree) {
  if (degree < 0) throw std::invalid_argument("edge_rule: degree must be >= 0");
  const int m = degree / 2 + 1;
  Eigen::VectorXd nodes, weights;
  detail::gauss_legendre_01(m, nodes, weights);
  QuadRule rule;
  rule.points.resize(m, 2);
  rule.points.col(0) = nodes;
  rule.points.col(1).setZero();
  rule.weights = weights;
  rule.exactness = 2 * m - 1;
  return rule;
}

// Rule on the reference triangle, exact for polynomials of the given total
// degree.  Degrees 1-5 are classical symmetric rules with closed-form data;
// degrees 6-20 collapse a Gauss-Legendre x Gauss-Jacobi(1,0) product through
// the Duffy map x = u(1-v), y = v.
inline QuadRule triangle_rule(int degree) {
  if (degree < 1 || degree > 20)
    throw std::invalid_argument("triangle_rule: supported degrees are 1..20");

  QuadRule rule;
  auto set = [&rule](std::vector<std::array<double, 3>> pw, int exactness) {
    rule.points.resize(pw.size(), 2);
    rule.weights.resize(pw.size());
    for (size_t i = 0; i < pw.size(); ++i) {
      rule.points(i, 0) = pw[i][0];
      rule.points(i, 1) = pw[i][1];
      rule.weights(i) = pw[i][2];
    }
    rule.exactness = exactness;
  };

  switch (degree) {
    case 1:
      set({{1.0 / 3.0, 1.0 / 3.0, 0.5}}, 1);
      return rule;
    case 2:
      set({{1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0},
           {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0},
           {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0}},
          2);
      return rule;
    case 3:
      set({{1.0 / 3.0, 1.0 / 3.0, -27.0 / 96.0},
           {1.0 / 5.0, 1.0 / 5.0, 25.0 / 96.0},
           {3.0 / 5.0, 1.0 / 5.0, 25.0 / 96.0},
           {1.0 / 5.0, 3.0 / 5.0, 25.0 / 96.0}},
          3);
      return rule;
    case 4:
    case 5: {
      const double s = std::sqrt(15.0);
      const double a1 = (6.0 - s) / 21.0, w1 = (155.0 - s) / 2400.0;
      const double a2 = (6.0 + s) / 21.0, w2 = (155.0 + s) / 2400.0;
      set({{1.0 / 3.0, 1.0 / 3.0, 9.0 / 80.0},
           {a1, a1, w1},
           {1.0 - 2.0 * a1, a1, w1},
           {a1, 1.0 - 2.0 * a1, w1},
           {a2, a2, w2},
           {1.0 - 2.0 * a2, a2, w2},
           {a2, 1.0 - 2.0 * a2, w2}},
          5);
      return rule;
    }
    default: {
      const int m = (degree + 2) / 2; // 2m-1 >= degree in each product direction
      Eigen::VectorXd un, uw, vn, vw;
      detail::gauss_legendre_01(m, un, uw);
      detail::gauss_jacobi10_01(m, vn, vw);
      rule.points.resize(m * m, 2);
      rule.weights.resize(m * m);
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) {
          int idx = j * m + i;
          rule.points(idx, 0) = un(i) * (1.0 - vn(j));
          rule.points(idx, 1) = vn(j);
          rule.weights(idx) = uw(i) * vw(j);
        }
      rule.exactness = degree;
      return rule;
    }
  }
}

// Default quadrature degree for assembly at velocity order k: covers products
// of element traces with margin for the coefficient variation.
inline int default_quad_degree(int k) { return 2 * (k + 1) + 2; }

} // namespace oseen
