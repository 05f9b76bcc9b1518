#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "oseen/fe_space.hpp"
#include "oseen/problem.hpp"
#include "oseen/quadrature.hpp"

namespace oseen {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

enum class ConvectionFlux { upwind, central, none };

// default SIP penalty 6 (k+1)(k+d)/d with d = 2
inline double sigma_auto(int k) { return 3.0 * (k + 1) * (k + 2); }

struct DiscretizationParams {
  double sigma = 36.0;
  double delta0 = 1e-5;
  bool vorticity = true;
  ConvectionFlux flux = ConvectionFlux::upwind;
  int quad_deg_volume = 0;  // 0 means default_quad_degree(k)
  int quad_deg_facet = 0;
};

// Element weight of the vorticity stabilization.
inline double compute_tau(double h, double b_inf, double nu) {
  if (!(b_inf > 0.0)) throw std::invalid_argument("compute_tau: b_inf must be positive");
  if (!(nu > 0.0) || !(h > 0.0)) throw std::invalid_argument("compute_tau: need nu, h > 0");
  return std::min(1.0, b_inf * h / nu) * h * h * h / b_inf;
}

struct StabWeights {
  double b_inf = 0.0;
  Eigen::VectorXd tau;  // per element; empty when the stabilization is off
};

inline StabWeights compute_stab_weights(const FeSpace& V,
                                        const std::function<Vec2(const Vec2&)>& b, double nu,
                                        int vol_deg) {
  const Mesh& mesh = *V.mesh;
  StabWeights w;
  QuadRule rule = triangle_rule(vol_deg);
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    TriangleGeom g = triangle_geom(mesh, t);
    std::vector<Vec2> pts;
    Eigen::VectorXd wq;
    detail::physical_rule(g, rule, pts, wq);
    for (const Vec2& x : pts) w.b_inf = std::max(w.b_inf, b(x).norm());
  }
  w.tau.resize(mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t)
    w.tau(t) = compute_tau(mesh.diameter(t), w.b_inf, nu);
  return w;
}

namespace detail {

inline int sgn(double x) { return (x > 0.0) - (x < 0.0); }

// boundary upwind weight (1 - sgn(b.n))/2; 1/2 on interior facets
inline double conv_penalty_weight(bool boundary, double bn) {
  return boundary ? 0.5 * (1.0 - sgn(bn)) : 0.5;
}

// curl(L phi_j) for every basis function of one element at one point.
// Needs derivatives through third order plus the coefficient gradients.
inline Eigen::VectorXd curl_L_basis(const ElementBasis& eb, const OseenCoefficients& co,
                                    const Vec2& x) {
  Eigen::MatrixXd v = eb.deriv(x), vx = eb.deriv(x, 1, 0), vy = eb.deriv(x, 0, 1);
  Eigen::MatrixXd vxx = eb.deriv(x, 2, 0), vxy = eb.deriv(x, 1, 1), vyy = eb.deriv(x, 0, 2);
  Eigen::MatrixXd vxxx = eb.deriv(x, 3, 0), vxxy = eb.deriv(x, 2, 1);
  Eigen::MatrixXd vxyy = eb.deriv(x, 1, 2), vyyy = eb.deriv(x, 0, 3);
  Vec2 bv = co.b(x);
  Mat2 gb = co.grad_b(x);
  Vec2 gc = co.grad_c(x);
  double cv = co.c(x);

  Eigen::VectorXd curl_lap = (vxxx.col(1) + vxyy.col(1)) - (vxxy.col(0) + vyyy.col(0));
  Eigen::VectorXd curl_conv =
      gb(0, 0) * vx.col(1) + gb(1, 0) * vy.col(1) + bv.x() * vxx.col(1) + bv.y() * vxy.col(1) -
      gb(0, 1) * vx.col(0) - gb(1, 1) * vy.col(0) - bv.x() * vxy.col(0) - bv.y() * vyy.col(0);
  Eigen::VectorXd curl_react = gc.x() * v.col(1) - gc.y() * v.col(0) + cv * (vx.col(1) - vy.col(0));
  return -co.nu * curl_lap + curl_conv + curl_react;
}

// (b.grad)phi_j x n for every basis function at one point (scalar per dof)
inline Eigen::VectorXd conv_cross_n(const ElementBasis& eb, const Vec2& b, const Vec2& n,
                                    const Vec2& x) {
  Eigen::MatrixXd vx = eb.deriv(x, 1, 0), vy = eb.deriv(x, 0, 1);
  Eigen::VectorXd c1 = b.x() * vx.col(0) + b.y() * vy.col(0);
  Eigen::VectorXd c2 = b.x() * vx.col(1) + b.y() * vy.col(1);
  return c1 * n.y() - c2 * n.x();
}

// ({grad phi_j} n)_c rows for one side: (ndofs x 2)
inline Eigen::MatrixXd grad_n(const Eigen::MatrixXd& gx, const Eigen::MatrixXd& gy,
                              const Vec2& n) {
  return gx * n.x() + gy * n.y();
}

inline void scatter_block(const Eigen::MatrixXd& local, const int* rows, const int* cols,
                          std::vector<Triplet>& out) {
  for (int i = 0; i < local.rows(); ++i)
    for (int j = 0; j < local.cols(); ++j)
      if (local(i, j) != 0.0) out.emplace_back(rows[i], cols[j], local(i, j));
}

// quadrature points on a facet in its global parametrization
inline void facet_points(const Mesh& mesh, const Facet& f, const QuadRule& rule,
                         std::vector<Vec2>& pts, Eigen::VectorXd& w,
                         Eigen::VectorXd* s_out = nullptr) {
  const Vec2 a = mesh.vertices[f.v0], b = mesh.vertices[f.v1];
  const int nq = static_cast<int>(rule.weights.size());
  pts.resize(nq);
  w = rule.weights * f.length;
  if (s_out) s_out->resize(nq);
  for (int q = 0; q < nq; ++q) {
    double s = rule.points(q, 0);
    pts[q] = (1.0 - s) * a + s * b;
    if (s_out) (*s_out)(q) = s;
  }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Stand-alone bilinear-form pieces.  These are written for clarity; they are
// used on their own for norms, audits and tests, and as a cross-check of the
// fused scheme assembly below.

inline SpMat assemble_gradient_gram(const FeSpace& V, int vol_deg = 0) {
  const Mesh& mesh = *V.mesh;
  if (vol_deg == 0) vol_deg = default_quad_degree(V.k);
  QuadRule rule = triangle_rule(vol_deg);
  std::vector<Triplet> trips;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementBasis& eb = V.basis[t];
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::physical_rule(triangle_geom(mesh, t), rule, pts, w);
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(eb.n_dofs, eb.n_dofs);
    for (int q = 0; q < w.size(); ++q) {
      Eigen::MatrixXd gx = eb.deriv(pts[q], 1, 0), gy = eb.deriv(pts[q], 0, 1);
      local += w(q) * (gx * gx.transpose() + gy * gy.transpose());
    }
    detail::scatter_block(local, &V.conn[size_t(t) * V.n_local], &V.conn[size_t(t) * V.n_local],
                          trips);
  }
  SpMat M(V.n_dofs, V.n_dofs);
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

inline SpMat assemble_mass(const FeSpace& V, int vol_deg = 0,
                           const std::function<double(const Vec2&)>& weight = nullptr) {
  const Mesh& mesh = *V.mesh;
  if (vol_deg == 0) vol_deg = default_quad_degree(V.k);
  QuadRule rule = triangle_rule(vol_deg);
  std::vector<Triplet> trips;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementBasis& eb = V.basis[t];
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::physical_rule(triangle_geom(mesh, t), rule, pts, w);
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(eb.n_dofs, eb.n_dofs);
    for (int q = 0; q < w.size(); ++q) {
      Eigen::MatrixXd v = eb.deriv(pts[q]);
      double cw = weight ? weight(pts[q]) : 1.0;
      local += (w(q) * cw) * (v * v.transpose());
    }
    detail::scatter_block(local, &V.conn[size_t(t) * V.n_local], &V.conn[size_t(t) * V.n_local],
                          trips);
  }
  SpMat M(V.n_dofs, V.n_dofs);
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

namespace detail {

// Generic facet assembler: 'kernel' receives the facet data and the stacked
// per-side dof ids and must add its local block (n_side_dofs x n_side_dofs).
template <class Kernel>
inline SpMat assemble_over_facets(const FeSpace& V, int facet_deg, Kernel&& kernel) {
  const Mesh& mesh = *V.mesh;
  QuadRule rule = edge_rule(facet_deg);
  std::vector<Triplet> trips;
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const Facet& fc = mesh.facets[f];
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::facet_points(mesh, fc, rule, pts, w);
    const bool bdry = fc.boundary;
    const int n_lo = V.n_local, n_hi = bdry ? 0 : V.n_local;
    std::vector<int> dofs(n_lo + n_hi);
    std::copy_n(&V.conn[size_t(fc.tri_lo) * V.n_local], n_lo, dofs.data());
    if (!bdry) std::copy_n(&V.conn[size_t(fc.tri_hi) * V.n_local], n_hi, dofs.data() + n_lo);
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(n_lo + n_hi, n_lo + n_hi);
    kernel(fc, pts, w, local);
    detail::scatter_block(local, dofs.data(), dofs.data(), trips);
  }
  SpMat M(V.n_dofs, V.n_dofs);
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

// stacked jump rows [v] = v_lo - v_hi (just v on the boundary): (nl+nh) x 2
inline Eigen::MatrixXd jump_rows(const FeSpace& V, const Facet& fc, const Vec2& x) {
  const ElementBasis& lo = V.basis[fc.tri_lo];
  if (fc.boundary) return lo.deriv(x);
  const ElementBasis& hi = V.basis[fc.tri_hi];
  Eigen::MatrixXd J(2 * V.n_local, 2);
  J.topRows(V.n_local) = lo.deriv(x);
  J.bottomRows(V.n_local) = -hi.deriv(x);
  return J;
}

} // namespace detail

// sum over all facets of h_F^{-1} <[u],[v]>
inline SpMat assemble_jump_penalty(const FeSpace& V, int facet_deg = 0) {
  if (facet_deg == 0) facet_deg = default_quad_degree(V.k);
  return detail::assemble_over_facets(
      V, facet_deg,
      [&V](const Facet& fc, const std::vector<Vec2>& pts, const Eigen::VectorXd& w,
           Eigen::MatrixXd& local) {
        for (int q = 0; q < w.size(); ++q) {
          Eigen::MatrixXd J = detail::jump_rows(V, fc, pts[q]);
          local += (w(q) / fc.length) * (J * J.transpose());
        }
      });
}

// sum over all facets of <|b.n| [u], [v]>
inline SpMat assemble_bn_jump(const FeSpace& V, const std::function<Vec2(const Vec2&)>& b,
                              int facet_deg = 0) {
  if (facet_deg == 0) facet_deg = default_quad_degree(V.k);
  return detail::assemble_over_facets(
      V, facet_deg,
      [&](const Facet& fc, const std::vector<Vec2>& pts, const Eigen::VectorXd& w,
          Eigen::MatrixXd& local) {
        for (int q = 0; q < w.size(); ++q) {
          Eigen::MatrixXd J = detail::jump_rows(V, fc, pts[q]);
          local += (w(q) * std::abs(b(pts[q]).dot(fc.normal))) * (J * J.transpose());
        }
      });
}

// sum over all facets of <{grad w} n, [v]>; rows = v, cols = w
inline SpMat assemble_sip_consistency(const FeSpace& V, int facet_deg = 0) {
  if (facet_deg == 0) facet_deg = default_quad_degree(V.k);
  return detail::assemble_over_facets(
      V, facet_deg,
      [&V](const Facet& fc, const std::vector<Vec2>& pts, const Eigen::VectorXd& w,
           Eigen::MatrixXd& local) {
        const ElementBasis& lo = V.basis[fc.tri_lo];
        for (int q = 0; q < w.size(); ++q) {
          Eigen::MatrixXd J = detail::jump_rows(V, fc, pts[q]);
          Eigen::MatrixXd T;
          if (fc.boundary) {
            T = detail::grad_n(lo.deriv(pts[q], 1, 0), lo.deriv(pts[q], 0, 1), fc.normal);
          } else {
            const ElementBasis& hi = V.basis[fc.tri_hi];
            T.resize(2 * V.n_local, 2);
            T.topRows(V.n_local) =
                0.5 * detail::grad_n(lo.deriv(pts[q], 1, 0), lo.deriv(pts[q], 0, 1), fc.normal);
            T.bottomRows(V.n_local) =
                0.5 * detail::grad_n(hi.deriv(pts[q], 1, 0), hi.deriv(pts[q], 0, 1), fc.normal);
          }
          local += w(q) * (J * T.transpose());
        }
      });
}

// Interior-penalty diffusion D_h (unscaled by nu) plus the boundary-data
// functional it induces on the right-hand side.
struct OperatorWithData {
  SpMat M;
  Eigen::VectorXd rhs;
};

inline OperatorWithData assemble_diffusion(const FeSpace& V, double sigma,
                                           const std::function<Vec2(const Vec2&)>& g = nullptr,
                                           int vol_deg = 0, int facet_deg = 0) {
  if (facet_deg == 0) facet_deg = default_quad_degree(V.k);
  SpMat grad = assemble_gradient_gram(V, vol_deg);
  SpMat cons = assemble_sip_consistency(V, facet_deg);
  SpMat jump = assemble_jump_penalty(V, facet_deg);
  OperatorWithData out;
  out.M = grad - SpMat(cons.transpose()) - cons + sigma * jump;
  out.rhs = Eigen::VectorXd::Zero(V.n_dofs);
  if (!g) return out;

  const Mesh& mesh = *V.mesh;
  QuadRule rule = edge_rule(facet_deg);
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const Facet& fc = mesh.facets[f];
    if (!fc.boundary) continue;
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::facet_points(mesh, fc, rule, pts, w);
    const ElementBasis& lo = V.basis[fc.tri_lo];
    const int* dofs = &V.conn[size_t(fc.tri_lo) * V.n_local];
    for (int q = 0; q < w.size(); ++q) {
      Vec2 gv = g(pts[q]);
      Eigen::MatrixXd val = lo.deriv(pts[q]);
      Eigen::MatrixXd T = detail::grad_n(lo.deriv(pts[q], 1, 0), lo.deriv(pts[q], 0, 1), fc.normal);
      Eigen::VectorXd r = w(q) * (-(T * gv) + (sigma / fc.length) * (val * gv));
      for (int i = 0; i < V.n_local; ++i) out.rhs(dofs[i]) += r(i);
    }
  }
  return out;
}

// Convection form: volume part, central interior flux, and the flux-variant
// jump penalties, plus the inflow boundary data functional.
inline OperatorWithData assemble_convection(const FeSpace& V,
                                            const std::function<Vec2(const Vec2&)>& b,
                                            ConvectionFlux flux,
                                            const std::function<Vec2(const Vec2&)>& g = nullptr,
                                            int vol_deg = 0, int facet_deg = 0) {
  const Mesh& mesh = *V.mesh;
  if (vol_deg == 0) vol_deg = default_quad_degree(V.k);
  if (facet_deg == 0) facet_deg = default_quad_degree(V.k);

  std::vector<Triplet> trips;
  QuadRule vrule = triangle_rule(vol_deg);
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementBasis& eb = V.basis[t];
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::physical_rule(triangle_geom(mesh, t), vrule, pts, w);
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(eb.n_dofs, eb.n_dofs);
    for (int q = 0; q < w.size(); ++q) {
      Vec2 bv = b(pts[q]);
      Eigen::MatrixXd val = eb.deriv(pts[q]);
      Eigen::MatrixXd adv =
          bv.x() * eb.deriv(pts[q], 1, 0) + bv.y() * eb.deriv(pts[q], 0, 1);
      local += w(q) * (val * adv.transpose()); // rows = test v, cols = trial u
    }
    detail::scatter_block(local, &V.conn[size_t(t) * V.n_local], &V.conn[size_t(t) * V.n_local],
                          trips);
  }

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(V.n_dofs);
  QuadRule erule = edge_rule(facet_deg);
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const Facet& fc = mesh.facets[f];
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::facet_points(mesh, fc, erule, pts, w);
    const bool bdry = fc.boundary;
    const int n_side = bdry ? V.n_local : 2 * V.n_local;
    std::vector<int> dofs(n_side);
    std::copy_n(&V.conn[size_t(fc.tri_lo) * V.n_local], V.n_local, dofs.data());
    if (!bdry)
      std::copy_n(&V.conn[size_t(fc.tri_hi) * V.n_local], V.n_local, dofs.data() + V.n_local);
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(n_side, n_side);
    for (int q = 0; q < w.size(); ++q) {
      double bn = b(pts[q]).dot(fc.normal);
      Eigen::MatrixXd J = detail::jump_rows(V, fc, pts[q]);
      if (!bdry && flux != ConvectionFlux::none) {
        // central flux - <(b.n)[u], {v}>
        Eigen::MatrixXd avg(2 * V.n_local, 2);
        avg.topRows(V.n_local) = 0.5 * V.basis[fc.tri_lo].deriv(pts[q]);
        avg.bottomRows(V.n_local) = 0.5 * V.basis[fc.tri_hi].deriv(pts[q]);
        local -= (w(q) * bn) * (avg * J.transpose());
      }
      const bool penalize = (flux == ConvectionFlux::upwind) ||
                            (flux == ConvectionFlux::central && bdry);
      if (penalize) {
        double gamma = detail::conv_penalty_weight(bdry, bn);
        local += (w(q) * gamma * std::abs(bn)) * (J * J.transpose());
        if (bdry && g) {
          Eigen::VectorXd r = (w(q) * gamma * std::abs(bn)) * (J * g(pts[q]));
          for (int i = 0; i < n_side; ++i) rhs(dofs[i]) += r(i);
        }
      }
    }
    detail::scatter_block(local, dofs.data(), dofs.data(), trips);
  }

  OperatorWithData out;
  out.M.resize(V.n_dofs, V.n_dofs);
  out.M.setFromTriplets(trips.begin(), trips.end());
  out.rhs = std::move(rhs);
  return out;
}

// Vorticity stabilization S: element term delta0 tau_K (curl L u, curl L v)
// and the interior-facet penalty delta0 h_F^2 <[(b.grad)u x n], [(b.grad)v x n]>.
// Boundary facets are excluded: a one-sided boundary term would break the
// consistency of the scheme for smooth solutions.
inline SpMat assemble_vorticity_stab(const FeSpace& V, const OseenCoefficients& co,
                                     double delta0, const StabWeights& sw, int vol_deg = 0,
                                     int facet_deg = 0) {
  const Mesh& mesh = *V.mesh;
  if (vol_deg == 0) vol_deg = default_quad_degree(V.k);
  if (facet_deg == 0) facet_deg = default_quad_degree(V.k);

  std::vector<Triplet> trips;
  QuadRule vrule = triangle_rule(vol_deg);
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementBasis& eb = V.basis[t];
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::physical_rule(triangle_geom(mesh, t), vrule, pts, w);
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(eb.n_dofs, eb.n_dofs);
    for (int q = 0; q < w.size(); ++q) {
      Eigen::VectorXd r = detail::curl_L_basis(eb, co, pts[q]);
      local += (delta0 * sw.tau(t) * w(q)) * (r * r.transpose());
    }
    detail::scatter_block(local, &V.conn[size_t(t) * V.n_local], &V.conn[size_t(t) * V.n_local],
                          trips);
  }

  QuadRule erule = edge_rule(facet_deg);
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const Facet& fc = mesh.facets[f];
    if (fc.boundary) continue;
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::facet_points(mesh, fc, erule, pts, w);
    std::vector<int> dofs(2 * V.n_local);
    std::copy_n(&V.conn[size_t(fc.tri_lo) * V.n_local], V.n_local, dofs.data());
    std::copy_n(&V.conn[size_t(fc.tri_hi) * V.n_local], V.n_local, dofs.data() + V.n_local);
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(2 * V.n_local, 2 * V.n_local);
    const double h2 = fc.length * fc.length;
    for (int q = 0; q < w.size(); ++q) {
      Vec2 bv = co.b(pts[q]);
      Eigen::VectorXd jump(2 * V.n_local);
      jump.head(V.n_local) = detail::conv_cross_n(V.basis[fc.tri_lo], bv, fc.normal, pts[q]);
      jump.tail(V.n_local) = -detail::conv_cross_n(V.basis[fc.tri_hi], bv, fc.normal, pts[q]);
      local += (delta0 * h2 * w(q)) * (jump * jump.transpose());
    }
    detail::scatter_block(local, dofs.data(), dofs.data(), trips);
  }

  SpMat M(V.n_dofs, V.n_dofs);
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

// B(q, v) = -(div v, q); rows = pressure dofs, cols = velocity dofs
inline SpMat assemble_divergence(const FeSpace& V, const FeSpace& Q, int vol_deg = 0) {
  const Mesh& mesh = *V.mesh;
  if (vol_deg == 0) vol_deg = default_quad_degree(V.k);
  QuadRule rule = triangle_rule(vol_deg);
  std::vector<Triplet> trips;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementBasis& vb = V.basis[t];
    const ElementBasis& qb = Q.basis[t];
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::physical_rule(triangle_geom(mesh, t), rule, pts, w);
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(qb.n_dofs, vb.n_dofs);
    for (int q = 0; q < w.size(); ++q) {
      Eigen::VectorXd div =
          vb.deriv(pts[q], 1, 0).col(0) + vb.deriv(pts[q], 0, 1).col(1);
      local -= w(q) * (qb.deriv(pts[q]).col(0) * div.transpose());
    }
    detail::scatter_block(local, &Q.conn[size_t(t) * Q.n_local], &V.conn[size_t(t) * V.n_local],
                          trips);
  }
  SpMat B(Q.n_dofs, V.n_dofs);
  B.setFromTriplets(trips.begin(), trips.end());
  return B;
}

// integrals (q_j, 1) used by the zero-mean multiplier
inline Eigen::VectorXd pressure_means(const FeSpace& Q) {
  const Mesh& mesh = *Q.mesh;
  QuadRule rule = triangle_rule(std::max(1, 2 * (Q.k - 1)));
  Eigen::VectorXd m = Eigen::VectorXd::Zero(Q.n_dofs);
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::physical_rule(triangle_geom(mesh, t), rule, pts, w);
    for (int q = 0; q < w.size(); ++q) {
      Eigen::VectorXd v = Q.basis[t].deriv(pts[q]).col(0);
      for (int i = 0; i < Q.n_local; ++i) m(Q.conn[size_t(t) * Q.n_local + i]) += w(q) * v(i);
    }
  }
  return m;
}

// load functional G(v) = (f, v) + delta0 (tau curl f, curl L v)
inline Eigen::VectorXd assemble_load(const FeSpace& V, const OseenProblem& prob,
                                     const DiscretizationParams& par, const StabWeights& sw,
                                     int vol_deg = 0) {
  const Mesh& mesh = *V.mesh;
  if (vol_deg == 0) vol_deg = default_quad_degree(V.k);
  QuadRule rule = triangle_rule(vol_deg);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(V.n_dofs);
  const bool stab = par.vorticity;
  if (stab && !prob.curl_f)
    throw std::invalid_argument("assemble_load: vorticity stabilization needs curl f");
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementBasis& eb = V.basis[t];
    const int* dofs = &V.conn[size_t(t) * V.n_local];
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::physical_rule(triangle_geom(mesh, t), rule, pts, w);
    for (int q = 0; q < w.size(); ++q) {
      Eigen::VectorXd r = eb.deriv(pts[q]) * prob.f(pts[q]);
      if (stab)
        r += (par.delta0 * sw.tau(t) * prob.curl_f(pts[q])) *
             detail::curl_L_basis(eb, prob.coef, pts[q]);
      for (int i = 0; i < V.n_local; ++i) rhs(dofs[i]) += w(q) * r(i);
    }
  }
  return rhs;
}

// Curl from the potential space into the velocity space: column j holds the
// velocity DOF values of curl psi_j.  Exact because curl Z_h is a subspace
// of V_h; shared dofs agree from both sides up to roundoff.
inline SpMat curl_matrix(const FeSpace& Z, const FeSpace& V) {
  const Mesh& mesh = *V.mesh;
  const int k = V.k;
  QuadRule erule = edge_rule(2 * k + 2);
  QuadRule vrule = triangle_rule(2 * k + 2);
  const Eigen::MatrixXd ned = nedelec_coefficients(k - 2);
  std::vector<Triplet> trips;

  for (int t = 0; t < mesh.n_triangles(); ++t) {
    TriangleGeom g = triangle_geom(mesh, t);
    const ElementBasis& zb = Z.basis[t];
    const int* vdofs = &V.conn[size_t(t) * V.n_local];
    const int* zdofs = &Z.conn[size_t(t) * Z.n_local];
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(V.n_local, Z.n_local);
    // curl psi = (d_y psi, -d_x psi) per potential basis function
    auto curl_rows = [&zb](const Vec2& x) {
      Eigen::MatrixXd out(zb.n_dofs, 2);
      out.col(0) = zb.deriv(x, 0, 1);
      out.col(1) = -zb.deriv(x, 1, 0);
      return out;
    };
    int row = 0;
    for (int lv = 0; lv < 3; ++lv) {
      Eigen::MatrixXd cr = curl_rows(g.v[lv]);
      local.row(row++) = cr.col(0).transpose();
      local.row(row++) = cr.col(1).transpose();
    }
    for (int le = 0; le < 3; ++le) {
      const EdgeGeom& e = g.edge[le];
      for (int q = 0; q < erule.weights.size(); ++q) {
        double s = erule.points(q, 0), w = erule.weights(q);
        Vec2 x = (1.0 - s) * e.a + s * e.b;
        Eigen::MatrixXd cr = curl_rows(x);
        Eigen::VectorXd L = legendre01(k - 2, s);
        Eigen::VectorXd cn = cr * e.normal;
        for (int j = 0; j < k - 1; ++j)
          local.row(row + j) += (w * L(j)) * cn.transpose();
      }
      row += k - 1;
    }
    MonomialBasis ned_mono(g.bbox_center, g.bbox_scale, k - 1);
    const int nnm = ned_mono.size();
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::physical_rule(g, vrule, pts, w);
    for (int q = 0; q < w.size(); ++q) {
      Eigen::VectorXd mn = ned_mono.eval(pts[q]);
      Eigen::VectorXd psi0 = ned.topRows(nnm).transpose() * mn;
      Eigen::VectorXd psi1 = ned.bottomRows(nnm).transpose() * mn;
      Eigen::MatrixXd cr = curl_rows(pts[q]);
      local.middleRows(row, psi0.size()) +=
          (w(q) / g.area) * (psi0 * cr.col(0).transpose() + psi1 * cr.col(1).transpose());
    }
    for (int i = 0; i < V.n_local; ++i)
      for (int j = 0; j < Z.n_local; ++j)
        trips.emplace_back(vdofs[i], zdofs[j], local(i, j));
  }
  SpMat C(V.n_dofs, Z.n_dofs);
  // duplicates agree up to roundoff; keep the later one
  C.setFromTriplets(trips.begin(), trips.end(),
                    [](const double&, const double& b) { return b; });
  return C;
}

// ---------------------------------------------------------------------------
// Reduction to free dofs.

struct ReducedSquare {
  SpMat M;                // free x free
  Eigen::VectorXd data;   // M_fc * prescribed, on free rows
};

inline ReducedSquare reduce_square(const SpMat& M, const FeSpace& S) {
  ReducedSquare out;
  out.data = Eigen::VectorXd::Zero(S.n_free);
  std::vector<Triplet> trips;
  for (int col = 0; col < M.outerSize(); ++col)
    for (SpMat::InnerIterator it(M, col); it; ++it) {
      int fr = S.free_of_global[it.row()], fcol = S.free_of_global[it.col()];
      if (fr < 0) continue;
      if (fcol >= 0)
        trips.emplace_back(fr, fcol, it.value());
      else
        out.data(fr) += it.value() * S.prescribed[it.col()];
    }
  out.M.resize(S.n_free, S.n_free);
  out.M.setFromTriplets(trips.begin(), trips.end());
  return out;
}

struct ReducedCols {
  SpMat M;                // rows unchanged, free cols
  Eigen::VectorXd data;   // M_c * prescribed per row
};

inline ReducedCols reduce_cols(const SpMat& M, const FeSpace& S) {
  ReducedCols out;
  out.data = Eigen::VectorXd::Zero(M.rows());
  std::vector<Triplet> trips;
  for (int col = 0; col < M.outerSize(); ++col)
    for (SpMat::InnerIterator it(M, col); it; ++it) {
      int fcol = S.free_of_global[it.col()];
      if (fcol >= 0)
        trips.emplace_back(it.row(), fcol, it.value());
      else
        out.data(it.row()) += it.value() * S.prescribed[it.col()];
    }
  out.M.resize(M.rows(), S.n_free);
  out.M.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline Eigen::VectorXd reduce_vector(const Eigen::VectorXd& v, const FeSpace& S) {
  Eigen::VectorXd out(S.n_free);
  for (int i = 0; i < S.n_free; ++i) out(i) = v(S.global_of_free[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Full scheme assembly, fused over one volume and one facet sweep.  Produces
// the operator A = nu D + C + R + S on all dofs, the load with every
// boundary-data contribution folded in, the divergence coupling and the
// pressure means.

struct SchemeSystem {
  SpMat A;                 // velocity operator, full dofs
  Eigen::VectorXd rhs;     // G plus weak boundary-data terms, full dofs
  SpMat B;                 // pressure x velocity, full dofs
  Eigen::VectorXd m;       // pressure means
  StabWeights stab;
  double sigma = 0.0;
};

inline SchemeSystem assemble_scheme(const FeSpace& V, const FeSpace& Q,
                                    const OseenProblem& prob, const DiscretizationParams& par) {
  const Mesh& mesh = *V.mesh;
  const int k = V.k;
  const int vol_deg = par.quad_deg_volume ? par.quad_deg_volume : default_quad_degree(k);
  const int facet_deg = par.quad_deg_facet ? par.quad_deg_facet : default_quad_degree(k);
  const OseenCoefficients& co = prob.coef;
  const double nu = co.nu;

  SchemeSystem sys;
  sys.sigma = par.sigma;
  if (par.vorticity) {
    sys.stab = compute_stab_weights(V, co.b, nu, vol_deg);
    if (!prob.curl_f)
      throw std::invalid_argument("assemble_scheme: vorticity stabilization needs curl f");
  }

  std::vector<Triplet> atrips, btrips;
  atrips.reserve(size_t(mesh.n_triangles()) * V.n_local * V.n_local +
                 size_t(mesh.n_facets()) * 4 * V.n_local * V.n_local);
  btrips.reserve(size_t(mesh.n_triangles()) * Q.n_local * V.n_local);
  sys.rhs = Eigen::VectorXd::Zero(V.n_dofs);
  sys.m = Eigen::VectorXd::Zero(Q.n_dofs);

  QuadRule vrule = triangle_rule(vol_deg);
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementBasis& eb = V.basis[t];
    const ElementBasis& qb = Q.basis[t];
    const int* vdofs = &V.conn[size_t(t) * V.n_local];
    const int* qdofs = &Q.conn[size_t(t) * Q.n_local];
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::physical_rule(triangle_geom(mesh, t), vrule, pts, w);

    Eigen::MatrixXd a_loc = Eigen::MatrixXd::Zero(V.n_local, V.n_local);
    Eigen::MatrixXd b_loc = Eigen::MatrixXd::Zero(Q.n_local, V.n_local);
    for (int q = 0; q < w.size(); ++q) {
      const Vec2& x = pts[q];
      Eigen::MatrixXd val = eb.deriv(x), gx = eb.deriv(x, 1, 0), gy = eb.deriv(x, 0, 1);
      Vec2 bv = co.b(x);
      Eigen::MatrixXd adv = bv.x() * gx + bv.y() * gy;
      a_loc += (nu * w(q)) * (gx * gx.transpose() + gy * gy.transpose());
      a_loc += w(q) * (val * adv.transpose());
      a_loc += (w(q) * co.c(x)) * (val * val.transpose());
      Eigen::VectorXd fv = val * prob.f(x);
      if (par.vorticity) {
        Eigen::VectorXd r = detail::curl_L_basis(eb, co, x);
        a_loc += (par.delta0 * sys.stab.tau(t) * w(q)) * (r * r.transpose());
        fv += (par.delta0 * sys.stab.tau(t) * prob.curl_f(x)) * r;
      }
      for (int i = 0; i < V.n_local; ++i) sys.rhs(vdofs[i]) += w(q) * fv(i);

      Eigen::VectorXd qv = qb.deriv(x).col(0);
      Eigen::VectorXd div = gx.col(0) + gy.col(1);
      b_loc -= w(q) * (qv * div.transpose());
      for (int i = 0; i < Q.n_local; ++i) sys.m(qdofs[i]) += w(q) * qv(i);
    }
    detail::scatter_block(a_loc, vdofs, vdofs, atrips);
    detail::scatter_block(b_loc, qdofs, vdofs, btrips);
  }

  QuadRule erule = edge_rule(facet_deg);
  const auto& g = prob.dirichlet;
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const Facet& fc = mesh.facets[f];
    const bool bdry = fc.boundary;
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::facet_points(mesh, fc, erule, pts, w);
    const int n_side = bdry ? V.n_local : 2 * V.n_local;
    std::vector<int> dofs(n_side);
    std::copy_n(&V.conn[size_t(fc.tri_lo) * V.n_local], V.n_local, dofs.data());
    if (!bdry)
      std::copy_n(&V.conn[size_t(fc.tri_hi) * V.n_local], V.n_local, dofs.data() + V.n_local);

    const ElementBasis& lo = V.basis[fc.tri_lo];
    const ElementBasis* hi = bdry ? nullptr : &V.basis[fc.tri_hi];
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(n_side, n_side);
    const double h2 = fc.length * fc.length;

    for (int q = 0; q < w.size(); ++q) {
      const Vec2& x = pts[q];
      Vec2 bv = co.b(x);
      double bn = bv.dot(fc.normal);

      Eigen::MatrixXd J(n_side, 2), T(n_side, 2), avg(n_side, 2);
      J.topRows(V.n_local) = lo.deriv(x);
      T.topRows(V.n_local) =
          detail::grad_n(lo.deriv(x, 1, 0), lo.deriv(x, 0, 1), fc.normal);
      avg.topRows(V.n_local) = J.topRows(V.n_local);
      if (!bdry) {
        Eigen::MatrixXd vhi = hi->deriv(x);
        J.bottomRows(V.n_local) = -vhi;
        T.topRows(V.n_local) *= 0.5;
        T.bottomRows(V.n_local) =
            0.5 * detail::grad_n(hi->deriv(x, 1, 0), hi->deriv(x, 0, 1), fc.normal);
        avg.topRows(V.n_local) *= 0.5;
        avg.bottomRows(V.n_local) = 0.5 * vhi;
      }

      // SIP terms of nu D_h
      local -= (nu * w(q)) * (T * J.transpose() + J * T.transpose());
      local += (nu * w(q) * par.sigma / fc.length) * (J * J.transpose());

      // convection flux and penalties
      if (!bdry && par.flux != ConvectionFlux::none)
        local -= (w(q) * bn) * (avg * J.transpose());
      const bool penalize = (par.flux == ConvectionFlux::upwind) ||
                            (par.flux == ConvectionFlux::central && bdry);
      double gamma = penalize ? detail::conv_penalty_weight(bdry, bn) : 0.0;
      if (penalize) local += (w(q) * gamma * std::abs(bn)) * (J * J.transpose());

      // vorticity facet penalty, interior facets only
      if (par.vorticity && !bdry) {
        Eigen::VectorXd jump(2 * V.n_local);
        jump.head(V.n_local) = detail::conv_cross_n(lo, bv, fc.normal, x);
        jump.tail(V.n_local) = -detail::conv_cross_n(*hi, bv, fc.normal, x);
        local += (par.delta0 * h2 * w(q)) * (jump * jump.transpose());
      }

      // weak boundary data
      if (bdry && g) {
        Vec2 gv = g(x);
        Eigen::VectorXd r = (nu * w(q)) * (-(T * gv) + (par.sigma / fc.length) * (J * gv));
        if (penalize) r += (w(q) * gamma * std::abs(bn)) * (J * gv);
        for (int i = 0; i < n_side; ++i) sys.rhs(dofs[i]) += r(i);
      }
    }
    detail::scatter_block(local, dofs.data(), dofs.data(), atrips);
  }

  sys.A.resize(V.n_dofs, V.n_dofs);
  sys.A.setFromTriplets(atrips.begin(), atrips.end());
  std::vector<Triplet>().swap(atrips);
  sys.B.resize(Q.n_dofs, V.n_dofs);
  sys.B.setFromTriplets(btrips.begin(), btrips.end());
  return sys;
}

// Gram matrix of the velocity norm the coercivity statement is made in:
// nu (grad + sigma jump) + |b.n| jumps + S + r0 mass, on all dofs.
inline SpMat scheme_norm_gram(const FeSpace& V, const OseenProblem& prob,
                              const DiscretizationParams& par, const StabWeights& sw) {
  const double nu = prob.coef.nu;
  SpMat N = nu * assemble_gradient_gram(V, par.quad_deg_volume);
  N = N + (nu * par.sigma) * assemble_jump_penalty(V, par.quad_deg_facet);
  N = N + assemble_bn_jump(V, prob.coef.b, par.quad_deg_facet);
  if (par.vorticity)
    N = N + assemble_vorticity_stab(V, prob.coef, par.delta0, sw, par.quad_deg_volume,
                                    par.quad_deg_facet);
  N = N + prob.coef.r0 * assemble_mass(V, par.quad_deg_volume);
  return N;
}

// Gram matrix of the broken H1 norm grad + h^-1 jumps (all facets), used by
// the inf-sup eigenproblem.
inline SpMat h1h_gram(const FeSpace& V, int vol_deg = 0, int facet_deg = 0) {
  return SpMat(assemble_gradient_gram(V, vol_deg) + assemble_jump_penalty(V, facet_deg));
}

} // namespace oseen
