#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <vector>

#include "oseen/element_basis.hpp"
#include "oseen/mesh.hpp"
#include "oseen/quadrature.hpp"

namespace oseen {

enum class SpaceKind { velocity, pressure, potential };

// Global space: per-element dual bases plus a global numbering in entity
// blocks (vertices, then edges, then element interiors).  Edge moments are
// defined against globally fixed edge data, so the two elements sharing a
// facet see the same functional and no orientation signs appear in conn.
struct FeSpace {
  SpaceKind kind = SpaceKind::velocity;
  int k = 2;                 // scheme order; element degrees are k, k-1, k+1
  const Mesh* mesh = nullptr;

  int dofs_per_vertex = 0, dofs_per_edge = 0, dofs_per_interior = 0, n_local = 0;
  std::vector<ElementBasis> basis;    // one per element
  std::vector<int> conn;              // nt x n_local global ids, DofSpec order
  int n_dofs = 0, n_free = 0;
  std::vector<int> free_of_global;    // -1 on constrained dofs
  std::vector<int> global_of_free;
  std::vector<double> prescribed;     // boundary values on constrained dofs

  int global_dof(int t, int local) const { return conn[t * n_local + local]; }
  bool is_constrained(int g) const { return free_of_global[g] < 0; }

  // scatter a free-dof vector into a full coefficient vector with the
  // prescribed boundary values filled in
  Eigen::VectorXd full_vector(const Eigen::VectorXd& free) const {
    if (free.size() != n_free) throw std::invalid_argument("full_vector: size mismatch");
    Eigen::VectorXd out = Eigen::Map<const Eigen::VectorXd>(prescribed.data(), n_dofs);
    for (int i = 0; i < n_free; ++i) out(global_of_free[i]) = free(i);
    return out;
  }

  Eigen::VectorXd restrict_free(const Eigen::VectorXd& full) const {
    Eigen::VectorXd out(n_free);
    for (int i = 0; i < n_free; ++i) out(i) = full(global_of_free[i]);
    return out;
  }
};

// raw dof counts per space and mesh size
inline int velocity_dof_count(int nv, int ne, int nt, int k) {
  return 2 * nv + (k - 1) * ne + (k - 1) * (k + 1) * nt;
}
inline int bdm_dof_count(int /*nv*/, int ne, int nt, int k) {
  return (k + 1) * ne + (k - 1) * (k + 1) * nt;
}
inline int pressure_dof_count(int nt, int k) { return nt * k * (k + 1) / 2; }
inline int potential_dof_count(int nv, int ne, int nt, int k) {
  return 3 * nv + (k - 2) * ne + k * (k - 1) / 2 * nt;
}

namespace detail {

inline void index_free_dofs(FeSpace& s, const std::vector<char>& constrained) {
  s.free_of_global.assign(s.n_dofs, -1);
  s.global_of_free.clear();
  for (int g = 0; g < s.n_dofs; ++g)
    if (!constrained[g]) {
      s.free_of_global[g] = static_cast<int>(s.global_of_free.size());
      s.global_of_free.push_back(g);
    }
  s.n_free = static_cast<int>(s.global_of_free.size());
  s.prescribed.assign(s.n_dofs, 0.0);
}

} // namespace detail

// H(div)-conforming velocity space of order k >= 2.  Strong boundary
// conditions pin both components at boundary vertices and all normal-trace
// moments on boundary edges, which forces u.n = 0 identically on the
// boundary; the tangential part is handled weakly by the forms.
inline FeSpace build_velocity_space(const Mesh& mesh, int k, bool constrain_boundary = true) {
  if (k < 2) throw std::invalid_argument("build_velocity_space: k must be >= 2");
  FeSpace s;
  s.kind = SpaceKind::velocity;
  s.k = k;
  s.mesh = &mesh;
  s.dofs_per_vertex = 2;
  s.dofs_per_edge = k - 1;
  s.dofs_per_interior = (k - 1) * (k + 1);
  s.n_local = 3 * s.dofs_per_vertex + 3 * s.dofs_per_edge + s.dofs_per_interior;
  const int nv = mesh.n_vertices(), ne = mesh.n_facets(), nt = mesh.n_triangles();
  s.n_dofs = velocity_dof_count(nv, ne, nt, k);

  s.basis.reserve(nt);
  s.conn.resize(size_t(nt) * s.n_local);
  const int edge_base = 2 * nv, int_base = 2 * nv + (k - 1) * ne;
  for (int t = 0; t < nt; ++t) {
    s.basis.push_back(stenberg_basis(triangle_geom(mesh, t), k));
    int* c = &s.conn[size_t(t) * s.n_local];
    int idx = 0;
    for (int lv = 0; lv < 3; ++lv)
      for (int comp = 0; comp < 2; ++comp) c[idx++] = 2 * mesh.triangles[t][lv] + comp;
    for (int le = 0; le < 3; ++le)
      for (int j = 0; j < k - 1; ++j)
        c[idx++] = edge_base + mesh.tri_facets[t][le] * (k - 1) + j;
    for (int jm = 0; jm < s.dofs_per_interior; ++jm)
      c[idx++] = int_base + t * s.dofs_per_interior + jm;
  }

  std::vector<char> constrained(s.n_dofs, 0);
  if (constrain_boundary) {
    for (int v = 0; v < nv; ++v)
      if (mesh.vertex_on_boundary[v]) constrained[2 * v] = constrained[2 * v + 1] = 1;
    for (int f = 0; f < ne; ++f)
      if (mesh.facets[f].boundary)
        for (int j = 0; j < k - 1; ++j) constrained[edge_base + f * (k - 1) + j] = 1;
  }
  detail::index_free_dofs(s, constrained);
  return s;
}

// Discontinuous pressure space, elementwise orthonormal P_{k-1}.  The zero
// mean constraint is not baked into the space; the solver enforces it with a
// multiplier.
inline FeSpace build_pressure_space(const Mesh& mesh, int k) {
  if (k < 2) throw std::invalid_argument("build_pressure_space: k must be >= 2");
  FeSpace s;
  s.kind = SpaceKind::pressure;
  s.k = k;
  s.mesh = &mesh;
  s.dofs_per_interior = k * (k + 1) / 2;
  s.n_local = s.dofs_per_interior;
  const int nt = mesh.n_triangles();
  s.n_dofs = pressure_dof_count(nt, k);
  s.basis.reserve(nt);
  s.conn.resize(size_t(nt) * s.n_local);
  for (int t = 0; t < nt; ++t) {
    s.basis.push_back(dg_basis(triangle_geom(mesh, t), k - 1));
    for (int i = 0; i < s.n_local; ++i) s.conn[size_t(t) * s.n_local + i] = t * s.n_local + i;
  }
  detail::index_free_dofs(s, std::vector<char>(s.n_dofs, 0));
  return s;
}

// Hermite potential space of degree k+1.  Boundary constraints zero the
// value and both first derivatives at boundary vertices and the trace
// moments on boundary edges; that makes the curl of any constrained-zero
// potential land in the constrained velocity space.
inline FeSpace build_potential_space(const Mesh& mesh, int k, bool constrain_boundary = true) {
  if (k < 2) throw std::invalid_argument("build_potential_space: k must be >= 2");
  const int p = k + 1;
  FeSpace s;
  s.kind = SpaceKind::potential;
  s.k = k;
  s.mesh = &mesh;
  s.dofs_per_vertex = 3;
  s.dofs_per_edge = p - 3;
  s.dofs_per_interior = (p - 2) * (p - 1) / 2;
  s.n_local = 9 + 3 * s.dofs_per_edge + s.dofs_per_interior;
  const int nv = mesh.n_vertices(), ne = mesh.n_facets(), nt = mesh.n_triangles();
  s.n_dofs = potential_dof_count(nv, ne, nt, k);

  s.basis.reserve(nt);
  s.conn.resize(size_t(nt) * s.n_local);
  const int edge_base = 3 * nv, int_base = 3 * nv + s.dofs_per_edge * ne;
  for (int t = 0; t < nt; ++t) {
    s.basis.push_back(hermite_basis(triangle_geom(mesh, t), p));
    int* c = &s.conn[size_t(t) * s.n_local];
    int idx = 0;
    for (int lv = 0; lv < 3; ++lv)
      for (int d = 0; d < 3; ++d) c[idx++] = 3 * mesh.triangles[t][lv] + d;
    for (int le = 0; le < 3; ++le)
      for (int j = 0; j < s.dofs_per_edge; ++j)
        c[idx++] = edge_base + mesh.tri_facets[t][le] * s.dofs_per_edge + j;
    for (int jm = 0; jm < s.dofs_per_interior; ++jm)
      c[idx++] = int_base + t * s.dofs_per_interior + jm;
  }

  std::vector<char> constrained(s.n_dofs, 0);
  if (constrain_boundary) {
    for (int v = 0; v < nv; ++v)
      if (mesh.vertex_on_boundary[v])
        constrained[3 * v] = constrained[3 * v + 1] = constrained[3 * v + 2] = 1;
    for (int f = 0; f < ne; ++f)
      if (mesh.facets[f].boundary)
        for (int j = 0; j < s.dofs_per_edge; ++j)
          constrained[edge_base + f * s.dofs_per_edge + j] = 1;
  }
  detail::index_free_dofs(s, constrained);
  return s;
}

// Applies the velocity DOF functionals to a smooth field.  Quadrature is
// generous enough to reproduce any field of element degree exactly.
inline Eigen::VectorXd interpolate_velocity(const FeSpace& s,
                                            const std::function<Vec2(const Vec2&)>& u) {
  if (s.kind != SpaceKind::velocity)
    throw std::invalid_argument("interpolate_velocity: wrong space kind");
  const Mesh& mesh = *s.mesh;
  const int k = s.k;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(s.n_dofs);

  QuadRule erule = edge_rule(std::max(2 * k, 16));
  QuadRule vrule = triangle_rule(std::min(20, std::max(2 * k, 14)));
  const Eigen::MatrixXd ned = nedelec_coefficients(k - 2);

  for (int t = 0; t < mesh.n_triangles(); ++t) {
    TriangleGeom g = triangle_geom(mesh, t);
    const int* c = &s.conn[size_t(t) * s.n_local];
    int idx = 0;
    for (int lv = 0; lv < 3; ++lv) {
      Vec2 val = u(g.v[lv]);
      out(c[idx++]) = val.x();
      out(c[idx++]) = val.y();
    }
    for (int le = 0; le < 3; ++le) {
      const EdgeGeom& e = g.edge[le];
      Eigen::VectorXd mom = Eigen::VectorXd::Zero(k - 1);
      for (int q = 0; q < erule.weights.size(); ++q) {
        double sq = erule.points(q, 0), w = erule.weights(q);
        Vec2 x = (1.0 - sq) * e.a + sq * e.b;
        mom += (w * u(x).dot(e.normal)) * legendre01(k - 2, sq);
      }
      for (int j = 0; j < k - 1; ++j) out(c[idx++]) = mom(j);
    }
    MonomialBasis ned_mono(g.bbox_center, g.bbox_scale, k - 1);
    const int nnm = ned_mono.size();
    std::vector<Vec2> vpts;
    Eigen::VectorXd vw;
    detail::physical_rule(g, vrule, vpts, vw);
    Eigen::VectorXd mom = Eigen::VectorXd::Zero(s.dofs_per_interior);
    for (int q = 0; q < vw.size(); ++q) {
      Eigen::VectorXd mn = ned_mono.eval(vpts[q]);
      Vec2 val = u(vpts[q]);
      mom += (vw(q) / g.area) *
             (ned.topRows(nnm).transpose() * mn * val.x() +
              ned.bottomRows(nnm).transpose() * mn * val.y());
    }
    for (int jm = 0; jm < s.dofs_per_interior; ++jm) out(c[idx++]) = mom(jm);
  }
  return out;
}

// Potential interpolation needs the gradient for the vertex derivative dofs.
inline Eigen::VectorXd interpolate_potential(const FeSpace& s,
                                             const std::function<double(const Vec2&)>& z,
                                             const std::function<Vec2(const Vec2&)>& grad_z) {
  if (s.kind != SpaceKind::potential)
    throw std::invalid_argument("interpolate_potential: wrong space kind");
  const Mesh& mesh = *s.mesh;
  const int p = s.k + 1;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(s.n_dofs);

  QuadRule erule = edge_rule(std::max(2 * p, 16));
  QuadRule vrule = triangle_rule(std::min(20, std::max(2 * p, 14)));

  for (int t = 0; t < mesh.n_triangles(); ++t) {
    TriangleGeom g = triangle_geom(mesh, t);
    const int* c = &s.conn[size_t(t) * s.n_local];
    int idx = 0;
    for (int lv = 0; lv < 3; ++lv) {
      out(c[idx++]) = z(g.v[lv]);
      Vec2 gr = grad_z(g.v[lv]);
      out(c[idx++]) = gr.x();
      out(c[idx++]) = gr.y();
    }
    for (int le = 0; le < 3; ++le) {
      const EdgeGeom& e = g.edge[le];
      Eigen::VectorXd mom = Eigen::VectorXd::Zero(std::max(s.dofs_per_edge, 1));
      for (int q = 0; q < erule.weights.size() && s.dofs_per_edge > 0; ++q) {
        double sq = erule.points(q, 0), w = erule.weights(q);
        Vec2 x = (1.0 - sq) * e.a + sq * e.b;
        mom += (w * z(x)) * legendre01(s.dofs_per_edge - 1, sq);
      }
      for (int j = 0; j < s.dofs_per_edge; ++j) out(c[idx++]) = mom(j);
    }
    MonomialBasis int_mono(g.bbox_center, g.bbox_scale, p - 3);
    std::vector<Vec2> vpts;
    Eigen::VectorXd vw;
    detail::physical_rule(g, vrule, vpts, vw);
    Eigen::VectorXd mom = Eigen::VectorXd::Zero(s.dofs_per_interior);
    for (int q = 0; q < vw.size(); ++q)
      mom += (vw(q) / g.area * z(vpts[q])) * int_mono.eval(vpts[q]);
    for (int jm = 0; jm < s.dofs_per_interior; ++jm) out(c[idx++]) = mom(jm);
  }
  return out;
}

// Elementwise L2 projection; exact thanks to the orthonormal basis.
inline Eigen::VectorXd project_pressure(const FeSpace& s,
                                        const std::function<double(const Vec2&)>& p) {
  if (s.kind != SpaceKind::pressure)
    throw std::invalid_argument("project_pressure: wrong space kind");
  const Mesh& mesh = *s.mesh;
  QuadRule vrule = triangle_rule(std::min(20, std::max(2 * s.k, 14)));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(s.n_dofs);
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    TriangleGeom g = triangle_geom(mesh, t);
    std::vector<Vec2> vpts;
    Eigen::VectorXd vw;
    detail::physical_rule(g, vrule, vpts, vw);
    Eigen::VectorXd mom = Eigen::VectorXd::Zero(s.n_local);
    for (int q = 0; q < vw.size(); ++q)
      mom += (vw(q) * p(vpts[q])) * s.basis[t].deriv(vpts[q]).col(0);
    for (int i = 0; i < s.n_local; ++i) out(s.conn[size_t(t) * s.n_local + i]) = mom(i);
  }
  return out;
}

// Fills the prescribed values of the constrained velocity dofs from a
// Dirichlet datum: vertex values and normal-trace moments on the boundary.
inline void set_velocity_dirichlet(FeSpace& s, const std::function<Vec2(const Vec2&)>& g) {
  if (s.kind != SpaceKind::velocity)
    throw std::invalid_argument("set_velocity_dirichlet: wrong space kind");
  const Mesh& mesh = *s.mesh;
  std::fill(s.prescribed.begin(), s.prescribed.end(), 0.0);
  if (!g) return;
  const int k = s.k, nv = mesh.n_vertices();
  QuadRule erule = edge_rule(std::max(2 * k, 16));
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const Facet& fc = mesh.facets[f];
    if (!fc.boundary) continue;
    for (int v : {fc.v0, fc.v1}) {
      Vec2 val = g(mesh.vertices[v]);
      s.prescribed[2 * v] = val.x();
      s.prescribed[2 * v + 1] = val.y();
    }
    Vec2 a = mesh.vertices[fc.v0], b = mesh.vertices[fc.v1];
    Eigen::VectorXd mom = Eigen::VectorXd::Zero(k - 1);
    for (int q = 0; q < erule.weights.size(); ++q) {
      double sq = erule.points(q, 0), w = erule.weights(q);
      Vec2 x = (1.0 - sq) * a + sq * b;
      mom += (w * g(x).dot(fc.normal)) * legendre01(k - 2, sq);
    }
    for (int j = 0; j < k - 1; ++j) s.prescribed[2 * nv + f * (k - 1) + j] = mom(j);
  }
}

} // namespace oseen
