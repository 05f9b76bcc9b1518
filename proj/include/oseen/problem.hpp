#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>

#include "oseen/mesh.hpp"
#include "oseen/poly2.hpp"

namespace oseen {

using Mat2 = Eigen::Matrix2d;

// Variable coefficients of L u = -nu Lap u + (b.grad) u + c u.  The gradients
// of b and c feed the vorticity stabilization; r0 is a positive lower bound
// for c - div(b)/2.
struct OseenCoefficients {
  double nu = 1.0;
  std::function<Vec2(const Vec2&)> b;
  std::function<Mat2(const Vec2&)> grad_b;   // (i,j) = d b_i / d x_j
  std::function<double(const Vec2&)> c;
  std::function<Vec2(const Vec2&)> grad_c;
  double r0 = 1.0;
};

// Exact solution with velocity derivatives through third order,
// u_deriv(i, j, x) = d^{i+j} u / dx^i dy^j.
struct ManufacturedSolution {
  std::function<Vec2(int, int, const Vec2&)> u_deriv;
  std::function<double(const Vec2&)> p;
  std::function<Vec2(const Vec2&)> grad_p;

  Vec2 u(const Vec2& x) const { return u_deriv(0, 0, x); }
};

struct OseenProblem {
  OseenCoefficients coef;
  std::function<Vec2(const Vec2&)> f;
  std::function<double(const Vec2&)> curl_f;
  std::function<Vec2(const Vec2&)> dirichlet;  // null means homogeneous
  std::optional<ManufacturedSolution> exact;
};

// L u at a point, from the derivative table of a manufactured velocity.
inline Vec2 apply_oseen_operator(const OseenCoefficients& co,
                                 const ManufacturedSolution& ms, const Vec2& x) {
  Vec2 lap = ms.u_deriv(2, 0, x) + ms.u_deriv(0, 2, x);
  Vec2 ux = ms.u_deriv(1, 0, x), uy = ms.u_deriv(0, 1, x);
  Vec2 bv = co.b(x);
  return -co.nu * lap + bv.x() * ux + bv.y() * uy + co.c(x) * ms.u(x);
}

// curl(L u) at a point; this is also curl(f) when f = L u + grad p.
inline double curl_oseen_operator(const OseenCoefficients& co,
                                  const ManufacturedSolution& ms, const Vec2& x) {
  Vec2 uxx = ms.u_deriv(2, 0, x), uxy = ms.u_deriv(1, 1, x), uyy = ms.u_deriv(0, 2, x);
  Vec2 uxxx = ms.u_deriv(3, 0, x), uxxy = ms.u_deriv(2, 1, x);
  Vec2 uxyy = ms.u_deriv(1, 2, x), uyyy = ms.u_deriv(0, 3, x);
  Vec2 ux = ms.u_deriv(1, 0, x), uy = ms.u_deriv(0, 1, x);
  Vec2 uv = ms.u(x), bv = co.b(x);
  Mat2 gb = co.grad_b(x);
  Vec2 gc = co.grad_c(x);

  // curl(Lap u) = d_x(Lap u_2) - d_y(Lap u_1)
  double curl_lap = (uxxx.y() + uxyy.y()) - (uxxy.x() + uyyy.x());
  // curl((b.grad) u)
  double curl_conv = gb(0, 0) * ux.y() + gb(1, 0) * uy.y() + bv.x() * uxx.y() + bv.y() * uxy.y()
                   - gb(0, 1) * ux.x() - gb(1, 1) * uy.x() - bv.x() * uxy.x() - bv.y() * uyy.x();
  // curl(c u)
  double curl_react = gc.x() * uv.y() - gc.y() * uv.x() + co.c(x) * (ux.y() - uy.x());
  return -co.nu * curl_lap + curl_conv + curl_react;
}

// Fills f = L u + grad p, curl f and the Dirichlet datum from the attached
// manufactured solution.
inline void attach_manufactured_data(OseenProblem& prob) {
  if (!prob.exact) throw std::invalid_argument("attach_manufactured_data: no exact solution");
  const ManufacturedSolution ms = *prob.exact;
  const OseenCoefficients co = prob.coef;
  prob.f = [co, ms](const Vec2& x) { return apply_oseen_operator(co, ms, x) + ms.grad_p(x); };
  prob.curl_f = [co, ms](const Vec2& x) { return curl_oseen_operator(co, ms, x); };
  prob.dirichlet = [ms](const Vec2& x) { return ms.u(x); };
}

// Convection-dominated reference problem: divergence-free trigonometric
// velocity, b = u + (0,1), c = 1, so c - div(b)/2 = 1 everywhere.
inline OseenProblem make_benchmark_problem(double nu) {
  if (!(nu > 0.0)) throw std::invalid_argument("make_benchmark_problem: nu must be positive");
  const double a = 2.0 * M_PI;

  ManufacturedSolution ms;
  ms.u_deriv = [a](int i, int j, const Vec2& x) {
    const double amp = std::pow(a, i + j);
    const double hx = 0.5 * M_PI * i, hy = 0.5 * M_PI * j;
    return Vec2(amp * std::sin(a * x.x() + hx) * std::sin(a * x.y() + hy),
                amp * std::cos(a * x.x() + hx) * std::cos(a * x.y() + hy));
  };
  ms.p = [a](const Vec2& x) {
    return 0.25 * (std::cos(2.0 * a * x.x()) - std::cos(2.0 * a * x.y()));
  };
  ms.grad_p = [a](const Vec2& x) {
    return Vec2(-0.5 * a * std::sin(2.0 * a * x.x()), 0.5 * a * std::sin(2.0 * a * x.y()));
  };

  OseenProblem prob;
  prob.coef.nu = nu;
  prob.coef.b = [ms](const Vec2& x) { return (ms.u(x) + Vec2(0.0, 1.0)).eval(); };
  prob.coef.grad_b = [ms](const Vec2& x) {
    Vec2 ux = ms.u_deriv(1, 0, x), uy = ms.u_deriv(0, 1, x);
    Mat2 g;
    g << ux.x(), uy.x(), ux.y(), uy.y();
    return g;
  };
  prob.coef.c = [](const Vec2&) { return 1.0; };
  prob.coef.grad_c = [](const Vec2&) { return Vec2::Zero().eval(); };
  prob.coef.r0 = 1.0;
  prob.exact = ms;
  attach_manufactured_data(prob);
  return prob;
}

namespace detail {

// derivative table (i, j) -> Poly2 of all derivatives through third order
using PolyDerivs = std::array<std::array<Poly2, 4>, 4>;

inline PolyDerivs tabulate_derivs(const Poly2& p) {
  PolyDerivs t;
  t[0][0] = p;
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; j <= 3 - i; ++j) {
      if (i > 0) t[i][j] = t[i - 1][j].dx();
      else if (j > 0) t[i][j] = t[i][j - 1].dy();
    }
  return t;
}

} // namespace detail

// Divergence-free polynomial solution of degree exactly k (the curl of a
// degree-(k+1) stream function) with a mean-zero pressure of degree k-1 and
// polynomial coefficients; used for consistency and recovery checks.
inline OseenProblem make_polynomial_problem(double nu, int k) {
  if (!(nu > 0.0) || k < 2)
    throw std::invalid_argument("make_polynomial_problem: need nu > 0 and k >= 2");

  Poly2 z;
  if (k == 2) {
    // z in P_3 with every kind of term populated
    z.at(3, 0) = 1.0;  z.at(2, 1) = -2.0; z.at(1, 2) = 1.0;  z.at(0, 3) = 2.0;
    z.at(2, 0) = 1.0;  z.at(1, 1) = -1.0; z.at(0, 2) = 1.0;
    z.at(1, 0) = 1.0;  z.at(0, 1) = 1.0;
  } else {
    z.at(std::min(k + 1, 4), 0) = 1.0;
    z.at(2, std::min(k - 1, 2)) = 2.0;
    z.at(1, std::min(k, 3)) = -1.0;
    z.at(0, std::min(k + 1, 4)) = 1.0;
    z.at(2, 1) = -2.0;
    z.at(1, 1) = 1.0;
    z.at(1, 0) = 1.0;
  }

  Poly2 p_poly;
  if (k == 2) {
    p_poly.at(1, 0) = 2.0;
    p_poly.at(0, 1) = -1.0;
  } else {
    p_poly.at(2, 0) = 1.0;
    p_poly.at(1, 1) = 1.0;
    p_poly.at(0, 2) = -1.0;
  }
  p_poly.at(0, 0) = -p_poly.integral_unit_square();

  auto u1 = detail::tabulate_derivs(z.dy());
  auto u2 = detail::tabulate_derivs(z.dx() * (-1.0));
  auto u1p = std::make_shared<detail::PolyDerivs>(u1);
  auto u2p = std::make_shared<detail::PolyDerivs>(u2);

  ManufacturedSolution ms;
  ms.u_deriv = [u1p, u2p](int i, int j, const Vec2& x) {
    return Vec2((*u1p)[i][j](x.x(), x.y()), (*u2p)[i][j](x.x(), x.y()));
  };
  Poly2 px = p_poly.dx(), py = p_poly.dy();
  ms.p = [p_poly](const Vec2& x) { return p_poly(x.x(), x.y()); };
  ms.grad_p = [px, py](const Vec2& x) { return Vec2(px(x.x(), x.y()), py(x.x(), x.y())); };

  OseenProblem prob;
  prob.coef.nu = nu;
  prob.coef.b = [](const Vec2& x) { return Vec2(1.0 + x.y(), 2.0 + x.x()); };
  prob.coef.grad_b = [](const Vec2&) {
    Mat2 g;
    g << 0.0, 1.0, 1.0, 0.0;
    return g;
  };
  prob.coef.c = [](const Vec2& x) { return 2.0 + x.x(); };
  prob.coef.grad_c = [](const Vec2&) { return Vec2(1.0, 0.0).eval(); };
  prob.coef.r0 = 2.0; // c - div(b)/2 = 2 + x >= 2 on the unit square
  prob.exact = ms;
  attach_manufactured_data(prob);
  return prob;
}

} // namespace oseen
