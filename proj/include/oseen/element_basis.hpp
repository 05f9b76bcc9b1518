#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "oseen/mesh.hpp"
#include "oseen/quadrature.hpp"

namespace oseen {

// Scaled monomials ((x-cx)/s)^a ((y-cy)/s)^b, a+b <= degree, in a fixed
// order.  All element bases are expressed in these, which keeps the
// degree-of-freedom matrices well conditioned on small elements.
struct MonomialBasis {
  Vec2 center = Vec2::Zero();
  double scale = 1.0;
  int degree = 0;
  std::vector<std::pair<int, int>> exps;

  MonomialBasis() = default;
  MonomialBasis(const Vec2& c, double s, int deg) : center(c), scale(s), degree(deg) {
    for (int d = 0; d <= deg; ++d)
      for (int a = d; a >= 0; --a) exps.emplace_back(a, d - a);
  }

  int size() const { return static_cast<int>(exps.size()); }

  // values of d^(dx+dy)/dx^dx dy^dy of every monomial at x
  Eigen::VectorXd eval(const Vec2& x, int dx = 0, int dy = 0) const {
    const double X = (x.x() - center.x()) / scale;
    const double Y = (x.y() - center.y()) / scale;
    std::vector<double> px(degree + 1), py(degree + 1);
    px[0] = py[0] = 1.0;
    for (int i = 1; i <= degree; ++i) {
      px[i] = px[i - 1] * X;
      py[i] = py[i - 1] * Y;
    }
    const double dscale = std::pow(scale, -(dx + dy));
    Eigen::VectorXd out(size());
    for (int i = 0; i < size(); ++i) {
      auto [a, b] = exps[i];
      if (a < dx || b < dy) {
        out(i) = 0.0;
        continue;
      }
      double f = 1.0;
      for (int n = 0; n < dx; ++n) f *= a - n;
      for (int n = 0; n < dy; ++n) f *= b - n;
      out(i) = f * px[a - dx] * py[b - dy] * dscale;
    }
    return out;
  }
};

// Geometry of one triangle together with the globally oriented edge data the
// degree-of-freedom functionals are defined against.  edge[i] is opposite
// vertex i; (a, b) is the global parametrization order of its endpoints.
struct EdgeGeom {
  Vec2 a, b;
  Vec2 normal;
  double length;
};

struct TriangleGeom {
  std::array<Vec2, 3> v;
  std::array<EdgeGeom, 3> edge;
  double area;
  double diameter;
  Vec2 bbox_center;
  double bbox_scale;
};

namespace detail {

inline void set_bbox(TriangleGeom& g) {
  Vec2 lo = g.v[0].cwiseMin(g.v[1]).cwiseMin(g.v[2]);
  Vec2 hi = g.v[0].cwiseMax(g.v[1]).cwiseMax(g.v[2]);
  g.bbox_center = 0.5 * (lo + hi);
  // isotropic scale: an anisotropic one would break the rotational part of
  // the Nedelec moment space
  g.bbox_scale = 0.5 * (hi - lo).maxCoeff();
}

} // namespace detail

inline TriangleGeom triangle_geom(const Mesh& mesh, int t) {
  TriangleGeom g;
  const auto& tri = mesh.triangles[t];
  for (int i = 0; i < 3; ++i) g.v[i] = mesh.vertices[tri[i]];
  Vec2 d1 = g.v[1] - g.v[0], d2 = g.v[2] - g.v[0];
  g.area = 0.5 * (d1.x() * d2.y() - d1.y() * d2.x());
  g.diameter = mesh.diameter(t);
  for (int i = 0; i < 3; ++i) {
    const Facet& f = mesh.facets[mesh.tri_facets[t][i]];
    g.edge[i] = EdgeGeom{mesh.vertices[f.v0], mesh.vertices[f.v1], f.normal, f.length};
  }
  detail::set_bbox(g);
  return g;
}

// Standalone triangle for tests and single-element use.  Mimics the mesh
// conventions with local indices as global ones: edge endpoints ordered by
// vertex index, normals outward (boundary convention).
inline TriangleGeom make_triangle_geom(const Vec2& p0, const Vec2& p1, const Vec2& p2) {
  TriangleGeom g;
  g.v = {p0, p1, p2};
  Vec2 d1 = p1 - p0, d2 = p2 - p0;
  g.area = 0.5 * (d1.x() * d2.y() - d1.y() * d2.x());
  if (g.area <= 0.0) throw std::invalid_argument("make_triangle_geom: vertices not CCW");
  g.diameter = std::max({(p1 - p0).norm(), (p2 - p1).norm(), (p0 - p2).norm()});
  Vec2 centroid = (p0 + p1 + p2) / 3.0;
  for (int i = 0; i < 3; ++i) {
    // std::minmax on the two prvalues would return dangling references
    int p = (i + 1) % 3, q = (i + 2) % 3;
    int lo = std::min(p, q), hi = std::max(p, q);
    EdgeGeom e;
    e.a = g.v[lo];
    e.b = g.v[hi];
    Vec2 t = e.b - e.a;
    e.length = t.norm();
    Vec2 n(t.y() / e.length, -t.x() / e.length);
    if (n.dot(0.5 * (e.a + e.b) - centroid) < 0.0) n = -n;
    e.normal = n;
    g.edge[i] = e;
  }
  detail::set_bbox(g);
  return g;
}

// Shifted Legendre values L_0..L_jmax at s in [0,1]; L_j(1) = 1.
inline Eigen::VectorXd legendre01(int jmax, double s) {
  Eigen::VectorXd L(jmax + 1);
  L(0) = 1.0;
  if (jmax >= 1) L(1) = 2.0 * s - 1.0;
  for (int j = 1; j < jmax; ++j)
    L(j + 1) = ((2.0 * j + 1.0) * (2.0 * s - 1.0) * L(j) - j * L(j - 1)) / (j + 1.0);
  return L;
}

// Nedelec moment space N_r = P_r^2 + {homogeneous b of degree r} * (-Y, X)
// in the scaled element coordinates, expressed as stacked coefficients over
// the scaled monomials of degree r+1 (component 0 block first).  The space
// is translation- and isotropic-scaling-invariant, so this represents
// N_r(K) for the element the scaling belongs to.  dim = (r+1)(r+3).
inline Eigen::MatrixXd nedelec_coefficients(int r) {
  if (r < 0) throw std::invalid_argument("nedelec_coefficients: r must be >= 0");
  MonomialBasis mono(Vec2::Zero(), 1.0, r + 1);
  const int nm = mono.size();
  const int dim = (r + 1) * (r + 3);
  auto idx = [&mono](int a, int b) {
    for (int i = 0; i < mono.size(); ++i)
      if (mono.exps[i] == std::make_pair(a, b)) return i;
    throw std::logic_error("nedelec_coefficients: exponent lookup failed");
  };
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(2 * nm, dim);
  int col = 0;
  for (int d = 0; d <= r; ++d)
    for (int a = d; a >= 0; --a) {
      C(idx(a, d - a), col++) = 1.0;          // (X^a Y^b, 0)
      C(nm + idx(a, d - a), col++) = 1.0;     // (0, X^a Y^b)
    }
  for (int a = r; a >= 0; --a) {              // X^a Y^(r-a) * (-Y, X)
    C(idx(a, r - a + 1), col) = -1.0;
    C(nm + idx(a + 1, r - a), col) = 1.0;
    ++col;
  }
  if (col != dim) throw std::logic_error("nedelec_coefficients: dimension mismatch");
  return C;
}

// Which functional a local degree of freedom applies; 'entity' is a local
// vertex or edge index, 'comp' a vector component, 'index' a moment number.
struct DofSpec {
  enum class Kind { vertex_value, vertex_deriv_x, vertex_deriv_y, edge_moment, interior_moment };
  Kind kind;
  int entity = 0;
  int comp = 0;
  int index = 0;
};

// Basis of one element, dual to its DofSpec list: coeff column j holds the
// stacked monomial coefficients of the basis function with DOF_i = delta_ij.
struct ElementBasis {
  int n_dofs = 0;
  int n_comp = 1;
  int degree = 0;
  MonomialBasis mono;
  Eigen::MatrixXd coeff;       // (n_comp * mono.size()) x n_dofs
  std::vector<DofSpec> dofs;
  double cond_estimate = 1.0;

  // values (or derivatives) of every basis function at x: n_dofs x n_comp
  Eigen::MatrixXd deriv(const Vec2& x, int dx = 0, int dy = 0) const {
    Eigen::VectorXd m = mono.eval(x, dx, dy);
    const int nm = mono.size();
    Eigen::MatrixXd out(n_dofs, n_comp);
    for (int c = 0; c < n_comp; ++c)
      out.col(c) = coeff.middleRows(c * nm, nm).transpose() * m;
    return out;
  }
};

namespace detail {

// Inverts the DOF-functional matrix to get the dual basis; keeps the ratio
// of extreme LU pivots as a cheap conditioning estimate.
inline void invert_dof_matrix(const Eigen::MatrixXd& A, ElementBasis& basis,
                              const char* what) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  Eigen::VectorXd diag = lu.matrixLU().diagonal().cwiseAbs();
  double dmax = diag.maxCoeff(), dmin = diag.minCoeff();
  if (!(dmin > 1e-13 * dmax))
    throw std::runtime_error(std::string(what) +
                             ": degenerate element, DOF matrix is numerically singular");
  basis.coeff = lu.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
  basis.cond_estimate = dmax / dmin;
  if (!basis.coeff.allFinite())
    throw std::runtime_error(std::string(what) + ": DOF matrix inversion failed");
}

// maps a reference-triangle rule to physical points and weights on geom
inline void physical_rule(const TriangleGeom& g, const QuadRule& rule,
                          std::vector<Vec2>& pts, Eigen::VectorXd& w) {
  const int nq = static_cast<int>(rule.weights.size());
  pts.resize(nq);
  w = rule.weights * 2.0 * g.area;
  for (int q = 0; q < nq; ++q)
    pts[q] = g.v[0] + rule.points(q, 0) * (g.v[1] - g.v[0]) + rule.points(q, 1) * (g.v[2] - g.v[0]);
}

} // namespace detail

// Velocity element of order k >= 2: vector P_k with vertex values, Legendre
// moments of the normal trace on each edge (in the global edge
// parametrization), and moments against N_{k-2} inside.  (k+1)(k+2) DOFs.
inline ElementBasis stenberg_basis(const TriangleGeom& g, int k) {
  if (k < 2) throw std::invalid_argument("stenberg_basis: k must be >= 2");
  ElementBasis basis;
  basis.n_comp = 2;
  basis.degree = k;
  basis.mono = MonomialBasis(g.bbox_center, g.bbox_scale, k);
  const int nm = basis.mono.size();
  basis.n_dofs = 2 * nm;

  const int n_edge = k - 1;
  const Eigen::MatrixXd ned = nedelec_coefficients(k - 2);
  MonomialBasis ned_mono(g.bbox_center, g.bbox_scale, k - 1);
  const int n_int = static_cast<int>(ned.cols());
  if (6 + 3 * n_edge + n_int != basis.n_dofs)
    throw std::logic_error("stenberg_basis: DOF count mismatch");

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(basis.n_dofs, basis.n_dofs);
  auto col = [nm](int c, int i) { return c * nm + i; };

  int row = 0;
  for (int lv = 0; lv < 3; ++lv) {
    Eigen::VectorXd m = basis.mono.eval(g.v[lv]);
    for (int c = 0; c < 2; ++c, ++row) {
      A.row(row).segment(col(c, 0), nm) = m.transpose();
      basis.dofs.push_back({DofSpec::Kind::vertex_value, lv, c, 0});
    }
  }

  QuadRule erule = edge_rule(2 * k);
  for (int le = 0; le < 3; ++le) {
    const EdgeGeom& e = g.edge[le];
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n_edge, basis.n_dofs);
    for (int q = 0; q < erule.weights.size(); ++q) {
      double s = erule.points(q, 0), w = erule.weights(q);
      Vec2 x = (1.0 - s) * e.a + s * e.b;
      Eigen::VectorXd m = basis.mono.eval(x);
      Eigen::VectorXd L = legendre01(n_edge - 1, s);
      // (1/|e|) integral of (phi . n) L_j ds; ds = |e| dsbar cancels the 1/|e|
      for (int j = 0; j < n_edge; ++j)
        for (int c = 0; c < 2; ++c)
          acc.row(j).segment(col(c, 0), nm) += (w * L(j) * e.normal(c)) * m.transpose();
    }
    for (int j = 0; j < n_edge; ++j, ++row) {
      A.row(row) = acc.row(j);
      basis.dofs.push_back({DofSpec::Kind::edge_moment, le, 0, j});
    }
  }

  std::vector<Vec2> vpts;
  Eigen::VectorXd vw;
  detail::physical_rule(g, triangle_rule(2 * k), vpts, vw);
  const int nnm = ned_mono.size();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n_int, basis.n_dofs);
  for (int q = 0; q < vw.size(); ++q) {
    Eigen::VectorXd m = basis.mono.eval(vpts[q]);
    Eigen::VectorXd mn = ned_mono.eval(vpts[q]);
    Eigen::VectorXd psi0 = ned.topRows(nnm).transpose() * mn;   // component 0 of each member
    Eigen::VectorXd psi1 = ned.bottomRows(nnm).transpose() * mn;
    double w = vw(q) / g.area;
    for (int jm = 0; jm < n_int; ++jm) {
      acc.row(jm).segment(col(0, 0), nm) += (w * psi0(jm)) * m.transpose();
      acc.row(jm).segment(col(1, 0), nm) += (w * psi1(jm)) * m.transpose();
    }
  }
  for (int jm = 0; jm < n_int; ++jm, ++row) {
    A.row(row) = acc.row(jm);
    basis.dofs.push_back({DofSpec::Kind::interior_moment, 0, 0, jm});
  }

  detail::invert_dof_matrix(A, basis, "stenberg_basis");
  return basis;
}

// Scalar Hermite element of degree p = k+1 >= 3: value and both first
// derivatives at vertices, Legendre edge moments against P_{p-4}, interior
// moments against P_{p-3}.  dim P_p DOFs.
inline ElementBasis hermite_basis(const TriangleGeom& g, int p) {
  if (p < 3) throw std::invalid_argument("hermite_basis: degree must be >= 3");
  ElementBasis basis;
  basis.n_comp = 1;
  basis.degree = p;
  basis.mono = MonomialBasis(g.bbox_center, g.bbox_scale, p);
  basis.n_dofs = basis.mono.size();

  const int n_edge = p - 3;                       // dim P_{p-4} on an edge
  const int n_int = (p - 2) * (p - 1) / 2;        // dim P_{p-3}
  if (9 + 3 * n_edge + n_int != basis.n_dofs)
    throw std::logic_error("hermite_basis: DOF count mismatch");

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(basis.n_dofs, basis.n_dofs);
  int row = 0;
  for (int lv = 0; lv < 3; ++lv) {
    A.row(row) = basis.mono.eval(g.v[lv]).transpose();
    basis.dofs.push_back({DofSpec::Kind::vertex_value, lv, 0, 0});
    A.row(row + 1) = basis.mono.eval(g.v[lv], 1, 0).transpose();
    basis.dofs.push_back({DofSpec::Kind::vertex_deriv_x, lv, 0, 0});
    A.row(row + 2) = basis.mono.eval(g.v[lv], 0, 1).transpose();
    basis.dofs.push_back({DofSpec::Kind::vertex_deriv_y, lv, 0, 0});
    row += 3;
  }

  if (n_edge > 0) {
    QuadRule erule = edge_rule(2 * p);
    for (int le = 0; le < 3; ++le) {
      const EdgeGeom& e = g.edge[le];
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n_edge, basis.n_dofs);
      for (int q = 0; q < erule.weights.size(); ++q) {
        double s = erule.points(q, 0), w = erule.weights(q);
        Vec2 x = (1.0 - s) * e.a + s * e.b;
        Eigen::VectorXd m = basis.mono.eval(x);
        Eigen::VectorXd L = legendre01(n_edge - 1, s);
        for (int j = 0; j < n_edge; ++j) acc.row(j) += (w * L(j)) * m.transpose();
      }
      for (int j = 0; j < n_edge; ++j, ++row) {
        A.row(row) = acc.row(j);
        basis.dofs.push_back({DofSpec::Kind::edge_moment, le, 0, j});
      }
    }
  }

  MonomialBasis int_mono(g.bbox_center, g.bbox_scale, p - 3);
  std::vector<Vec2> vpts;
  Eigen::VectorXd vw;
  detail::physical_rule(g, triangle_rule(2 * p), vpts, vw);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n_int, basis.n_dofs);
  for (int q = 0; q < vw.size(); ++q) {
    Eigen::VectorXd m = basis.mono.eval(vpts[q]);
    Eigen::VectorXd mi = int_mono.eval(vpts[q]);
    acc += (vw(q) / g.area) * mi * m.transpose();
  }
  for (int jm = 0; jm < n_int; ++jm, ++row) {
    A.row(row) = acc.row(jm);
    basis.dofs.push_back({DofSpec::Kind::interior_moment, 0, 0, jm});
  }

  detail::invert_dof_matrix(A, basis, "hermite_basis");
  return basis;
}

// Discontinuous pressure element: L2-orthonormal basis of P_deg on the
// element, built by Cholesky of the monomial Gram matrix.  Basis function 0
// is the normalized constant |K|^{-1/2}.
inline ElementBasis dg_basis(const TriangleGeom& g, int deg) {
  if (deg < 0) throw std::invalid_argument("dg_basis: degree must be >= 0");
  ElementBasis basis;
  basis.n_comp = 1;
  basis.degree = deg;
  basis.mono = MonomialBasis(g.bbox_center, g.bbox_scale, deg);
  basis.n_dofs = basis.mono.size();

  std::vector<Vec2> vpts;
  Eigen::VectorXd vw;
  detail::physical_rule(g, triangle_rule(std::max(1, 2 * deg)), vpts, vw);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(basis.n_dofs, basis.n_dofs);
  for (int q = 0; q < vw.size(); ++q) {
    Eigen::VectorXd m = basis.mono.eval(vpts[q]);
    gram += vw(q) * m * m.transpose();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("dg_basis: Gram matrix not positive definite");
  // q = m L^{-T} has Gram L^{-1} G L^{-T} = I
  basis.coeff = llt.matrixL()
                    .transpose()
                    .solve(Eigen::MatrixXd::Identity(basis.n_dofs, basis.n_dofs));
  basis.cond_estimate = 1.0;
  for (int i = 0; i < basis.n_dofs; ++i)
    basis.dofs.push_back({DofSpec::Kind::interior_moment, 0, 0, i});
  return basis;
}

} // namespace oseen
