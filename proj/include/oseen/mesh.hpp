#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace oseen {

using Vec2 = Eigen::Vector2d;

// A facet is an undirected mesh edge with a globally fixed orientation:
// endpoints are stored with v0 < v1, and the unit normal points from the
// lower-indexed adjacent triangle into the higher-indexed one (outward on
// the boundary, where tri_hi == -1).  Every quantity that two elements must
// agree on (edge moments, jumps, upwind directions) is defined against this
// fixed data, so no per-element sign bookkeeping is needed anywhere else.
struct Facet {
  int v0 = -1, v1 = -1;
  int tri_lo = -1, tri_hi = -1;
  Vec2 normal = Vec2::Zero();
  double length = 0.0;
  bool boundary = false;
};

struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;  // CCW vertex triples
  std::vector<Facet> facets;
  // facet index of the edge opposite local vertex i, per triangle
  std::vector<std::array<int, 3>> tri_facets;
  std::vector<char> vertex_on_boundary;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }
  int n_facets() const { return static_cast<int>(facets.size()); }

  double area(int t) const {
    const auto& tri = triangles[t];
    Vec2 d1 = vertices[tri[1]] - vertices[tri[0]];
    Vec2 d2 = vertices[tri[2]] - vertices[tri[0]];
    return 0.5 * (d1.x() * d2.y() - d1.y() * d2.x());
  }

  Vec2 centroid(int t) const {
    const auto& tri = triangles[t];
    return (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
  }

  double diameter(int t) const {
    const auto& tri = triangles[t];
    double h = 0.0;
    for (int i = 0; i < 3; ++i)
      h = std::max(h, (vertices[tri[i]] - vertices[tri[(i + 1) % 3]]).norm());
    return h;
  }
};

struct MeshMetrics {
  double h = 0.0;               // max element diameter
  double min_angle = 0.0;       // radians
  double max_shape_ratio = 0.0; // max over elements of diameter / inradius
};

namespace detail {

// Derives facets, adjacency, normals and boundary flags from the triangle
// list.  Throws if the triangulation is not edge-manifold or not CCW.
inline void finalize_connectivity(Mesh& mesh) {
  const int nt = mesh.n_triangles();
  for (int t = 0; t < nt; ++t) {
    if (mesh.area(t) <= 0.0)
      throw std::invalid_argument("mesh: triangle " + std::to_string(t) +
                                  " is degenerate or not CCW");
  }

  std::map<std::pair<int, int>, int> facet_of_edge;
  mesh.facets.clear();
  mesh.tri_facets.assign(nt, {-1, -1, -1});
  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i) {
      int a = tri[(i + 1) % 3], b = tri[(i + 2) % 3];
      auto key = std::minmax(a, b);
      auto [it, inserted] = facet_of_edge.try_emplace(key, mesh.n_facets());
      if (inserted) {
        Facet f;
        f.v0 = key.first;
        f.v1 = key.second;
        f.tri_lo = t;
        mesh.facets.push_back(f);
      } else {
        Facet& f = mesh.facets[it->second];
        if (f.tri_hi != -1)
          throw std::invalid_argument("mesh: edge shared by more than two triangles");
        // triangles are visited in index order, so tri_lo < tri_hi holds
        f.tri_hi = t;
      }
      mesh.tri_facets[t][i] = it->second;
    }
  }

  mesh.vertex_on_boundary.assign(mesh.n_vertices(), 0);
  for (Facet& f : mesh.facets) {
    f.boundary = (f.tri_hi == -1);
    Vec2 tangent = mesh.vertices[f.v1] - mesh.vertices[f.v0];
    f.length = tangent.norm();
    if (f.length <= 0.0) throw std::invalid_argument("mesh: zero-length edge");
    Vec2 n(tangent.y() / f.length, -tangent.x() / f.length);
    // orient: lo -> hi across interior facets, outward on the boundary
    Vec2 ref;
    if (f.boundary)
      ref = 0.5 * (mesh.vertices[f.v0] + mesh.vertices[f.v1]) - mesh.centroid(f.tri_lo);
    else
      ref = mesh.centroid(f.tri_hi) - mesh.centroid(f.tri_lo);
    if (n.dot(ref) < 0.0) n = -n;
    f.normal = n;
    if (f.boundary) {
      mesh.vertex_on_boundary[f.v0] = 1;
      mesh.vertex_on_boundary[f.v1] = 1;
    }
  }

  // Euler relation for a simply connected planar triangulation
  if (mesh.n_vertices() - mesh.n_facets() + mesh.n_triangles() != 1)
    throw std::invalid_argument("mesh: Euler check failed (not simply connected?)");
}

} // namespace detail

// Structured diagonal-split mesh of the unit square with 2n^2 triangles.
// Interior vertices are shifted by at most perturb/n in each coordinate,
// deterministically in (n, perturb, seed); boundary vertices stay put.
inline Mesh build_structured_mesh(int n, double perturb = 0.0, unsigned seed = 0) {
  if (n < 1) throw std::invalid_argument("build_structured_mesh: n must be >= 1");
  if (perturb < 0.0 || perturb > 0.3)
    throw std::invalid_argument("build_structured_mesh: perturb must be in [0, 0.3]");

  Mesh mesh;
  const int m = n + 1;
  mesh.vertices.resize(m * m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i)
      mesh.vertices[j * m + i] = Vec2(double(i) / n, double(j) / n);

  if (perturb > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> shift(-perturb / n, perturb / n);
    for (int j = 1; j < n; ++j)
      for (int i = 1; i < n; ++i) {
        double dx = shift(rng);
        double dy = shift(rng);
        mesh.vertices[j * m + i] += Vec2(dx, dy);
      }
  }

  // Alternate the split diagonal per cell so no edge direction dominates
  // globally; a fixed diagonal biases convective transport along it.
  mesh.triangles.reserve(2 * n * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      int a = j * m + i, b = j * m + i + 1, c = (j + 1) * m + i + 1, d = (j + 1) * m + i;
      if ((i + j) % 2 == 0) {
        mesh.triangles.push_back({a, b, c});
        mesh.triangles.push_back({a, c, d});
      } else {
        mesh.triangles.push_back({a, b, d});
        mesh.triangles.push_back({b, c, d});
      }
    }

  detail::finalize_connectivity(mesh);
  return mesh;
}

// Red refinement: each triangle is split into four by its edge midpoints.
// All four children are similar to the parent, so the minimum angle is
// preserved exactly.  New vertex numbering is parent vertices first, then
// one midpoint per parent facet in facet order.
inline Mesh refine_uniform(const Mesh& parent) {
  Mesh mesh;
  mesh.vertices = parent.vertices;
  mesh.vertices.reserve(parent.n_vertices() + parent.n_facets());
  for (const Facet& f : parent.facets)
    mesh.vertices.push_back(0.5 * (parent.vertices[f.v0] + parent.vertices[f.v1]));

  const int nv = parent.n_vertices();
  mesh.triangles.reserve(4 * parent.n_triangles());
  for (int t = 0; t < parent.n_triangles(); ++t) {
    const auto& tri = parent.triangles[t];
    // midpoint of the edge opposite local vertex i
    std::array<int, 3> mid;
    for (int i = 0; i < 3; ++i) mid[i] = nv + parent.tri_facets[t][i];
    mesh.triangles.push_back({tri[0], mid[2], mid[1]});
    mesh.triangles.push_back({tri[1], mid[0], mid[2]});
    mesh.triangles.push_back({tri[2], mid[1], mid[0]});
    mesh.triangles.push_back({mid[0], mid[1], mid[2]});
  }

  detail::finalize_connectivity(mesh);
  return mesh;
}

inline MeshMetrics mesh_metrics(const Mesh& mesh) {
  MeshMetrics out;
  out.min_angle = std::numeric_limits<double>::max();
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    double hK = mesh.diameter(t);
    double per = 0.0;
    for (int i = 0; i < 3; ++i)
      per += (mesh.vertices[tri[i]] - mesh.vertices[tri[(i + 1) % 3]]).norm();
    double inradius = 2.0 * mesh.area(t) / per;
    out.h = std::max(out.h, hK);
    out.max_shape_ratio = std::max(out.max_shape_ratio, hK / inradius);
    for (int i = 0; i < 3; ++i) {
      Vec2 e1 = mesh.vertices[tri[(i + 1) % 3]] - mesh.vertices[tri[i]];
      Vec2 e2 = mesh.vertices[tri[(i + 2) % 3]] - mesh.vertices[tri[i]];
      double ang = std::acos(std::clamp(e1.dot(e2) / (e1.norm() * e2.norm()), -1.0, 1.0));
      out.min_angle = std::min(out.min_angle, ang);
    }
  }
  return out;
}

// Text format: "nv ne nt" header, nv lines "x y boundary_flag", nt lines
// "v0 v1 v2".  The edge count and the per-vertex boundary flags are
// redundant; facets and flags are always rederived from the triangles, and
// the stored flags are cross-checked against the derived ones.
inline Mesh read_mesh_text(std::istream& in) {
  Mesh mesh;
  int nv = 0, ne = 0, nt = 0;
  if (!(in >> nv >> ne >> nt) || nv < 3 || nt < 1)
    throw std::invalid_argument("read_mesh_text: malformed header");
  mesh.vertices.resize(nv);
  std::vector<char> stored_flags(nv);
  for (int v = 0; v < nv; ++v) {
    int flag;
    if (!(in >> mesh.vertices[v].x() >> mesh.vertices[v].y() >> flag))
      throw std::invalid_argument("read_mesh_text: malformed vertex line " + std::to_string(v));
    stored_flags[v] = static_cast<char>(flag != 0);
  }
  mesh.triangles.resize(nt);
  for (int t = 0; t < nt; ++t) {
    auto& tri = mesh.triangles[t];
    if (!(in >> tri[0] >> tri[1] >> tri[2]))
      throw std::invalid_argument("read_mesh_text: malformed triangle line " + std::to_string(t));
    for (int i = 0; i < 3; ++i)
      if (tri[i] < 0 || tri[i] >= nv)
        throw std::invalid_argument("read_mesh_text: vertex index out of range");
  }
  detail::finalize_connectivity(mesh);
  for (int v = 0; v < nv; ++v)
    if (stored_flags[v] != mesh.vertex_on_boundary[v])
      throw std::invalid_argument("read_mesh_text: boundary flag of vertex " +
                                  std::to_string(v) + " contradicts connectivity");
  return mesh;
}

inline Mesh read_mesh_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("read_mesh_text: cannot open " + path);
  return read_mesh_text(in);
}

inline void write_mesh_text(const Mesh& mesh, std::ostream& out) {
  out.precision(17);
  out << mesh.n_vertices() << " " << mesh.n_facets() << " " << mesh.n_triangles() << "\n";
  for (int v = 0; v < mesh.n_vertices(); ++v)
    out << mesh.vertices[v].x() << " " << mesh.vertices[v].y() << " "
        << int(mesh.vertex_on_boundary[v]) << "\n";
  for (const auto& tri : mesh.triangles)
    out << tri[0] << " " << tri[1] << " " << tri[2] << "\n";
}

} // namespace oseen
