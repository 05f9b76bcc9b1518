#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace oseen {

// Dense bivariate polynomial sum c(a,b) x^a y^b, used for manufactured
// solutions and for symbolic-expansion oracles in tests.  Coefficients live
// in a square matrix indexed by the two exponents.
class Poly2 {
 public:
  Poly2() : c_(Eigen::MatrixXd::Zero(1, 1)) {}
  explicit Poly2(int max_degree) : c_(Eigen::MatrixXd::Zero(max_degree + 1, max_degree + 1)) {}

  static Poly2 monomial(int a, int b, double coeff = 1.0) {
    Poly2 p(a + b);
    p.c_(a, b) = coeff;
    return p;
  }

  double& at(int a, int b) {
    grow(std::max(a, b));
    return c_(a, b);
  }
  double coeff(int a, int b) const {
    if (a >= c_.rows() || b >= c_.cols()) return 0.0;
    return c_(a, b);
  }

  double operator()(double x, double y) const {
    // Horner in x of Horner-in-y rows
    double acc = 0.0;
    for (int a = static_cast<int>(c_.rows()) - 1; a >= 0; --a) {
      double row = 0.0;
      for (int b = static_cast<int>(c_.cols()) - 1; b >= 0; --b) row = row * y + c_(a, b);
      acc = acc * x + row;
    }
    return acc;
  }

  Poly2 dx() const {
    Poly2 out(size() - 1);
    for (int a = 1; a < c_.rows(); ++a)
      for (int b = 0; b < c_.cols(); ++b) out.at(a - 1, b) += a * c_(a, b);
    return out;
  }

  Poly2 dy() const {
    Poly2 out(size() - 1);
    for (int a = 0; a < c_.rows(); ++a)
      for (int b = 1; b < c_.cols(); ++b) out.at(a, b - 1) += b * c_(a, b);
    return out;
  }

  Poly2 deriv(int i, int j) const {
    Poly2 out = *this;
    for (int n = 0; n < i; ++n) out = out.dx();
    for (int n = 0; n < j; ++n) out = out.dy();
    return out;
  }

  // total degree, ignoring coefficients below tol * max|coeff|
  int degree(double rel_tol = 1e-12) const {
    double scale = c_.cwiseAbs().maxCoeff();
    if (scale == 0.0) return -1;
    int deg = -1;
    for (int a = 0; a < c_.rows(); ++a)
      for (int b = 0; b < c_.cols(); ++b)
        if (std::abs(c_(a, b)) > rel_tol * scale) deg = std::max(deg, a + b);
    return deg;
  }

  double integral_unit_square() const {
    double s = 0.0;
    for (int a = 0; a < c_.rows(); ++a)
      for (int b = 0; b < c_.cols(); ++b) s += c_(a, b) / ((a + 1.0) * (b + 1.0));
    return s;
  }

  Poly2 operator+(const Poly2& o) const {
    Poly2 out(std::max(size(), o.size()) - 1);
    out.accumulate(*this, 1.0);
    out.accumulate(o, 1.0);
    return out;
  }
  Poly2 operator-(const Poly2& o) const {
    Poly2 out(std::max(size(), o.size()) - 1);
    out.accumulate(*this, 1.0);
    out.accumulate(o, -1.0);
    return out;
  }
  Poly2 operator*(double s) const {
    Poly2 out = *this;
    out.c_ *= s;
    return out;
  }
  Poly2 operator*(const Poly2& o) const {
    Poly2 out(size() + o.size() - 2);
    for (int a = 0; a < c_.rows(); ++a)
      for (int b = 0; b < c_.cols(); ++b) {
        if (c_(a, b) == 0.0) continue;
        for (int p = 0; p < o.c_.rows(); ++p)
          for (int q = 0; q < o.c_.cols(); ++q)
            out.c_(a + p, b + q) += c_(a, b) * o.c_(p, q);
      }
    return out;
  }

 private:
  int size() const { return static_cast<int>(c_.rows()); }
  void grow(int max_exp) {
    if (max_exp < c_.rows()) return;
    Eigen::MatrixXd bigger = Eigen::MatrixXd::Zero(max_exp + 1, max_exp + 1);
    bigger.topLeftCorner(c_.rows(), c_.cols()) = c_;
    c_ = std::move(bigger);
  }
  void accumulate(const Poly2& o, double s) {
    grow(o.size() - 1);
    c_.topLeftCorner(o.c_.rows(), o.c_.cols()) += s * o.c_;
  }

  Eigen::MatrixXd c_;
};

} // namespace oseen
