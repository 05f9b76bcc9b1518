#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "oseen/solver.hpp"

namespace oseen {

namespace detail {

inline Eigen::VectorXd gather_local(const FeSpace& S, int t, const Eigen::VectorXd& coeffs) {
  Eigen::VectorXd loc(S.n_local);
  for (int i = 0; i < S.n_local; ++i) loc(i) = coeffs(S.conn[size_t(t) * S.n_local + i]);
  return loc;
}

} // namespace detail

struct ErrorReport {
  double h = 0.0;
  double energy = 0.0;   // scheme energy norm of u - u_h
  double l2_u = 0.0;
  double div_u = 0.0;    // L2 norm of div u_h itself
  double linf_u = 0.0;   // max over volume quadrature points and components
  double l2_p = 0.0;
  double l2_p_proj = 0.0;  // distance of p_h to the L2 projection of p
};

inline ErrorReport compute_errors(const FeSpace& V, const FeSpace& Q, const OseenProblem& prob,
                                  const DiscretizationParams& par, const StabWeights& sw_in,
                                  const Eigen::VectorXd& u, const Eigen::VectorXd& p) {
  if (!prob.exact) throw std::invalid_argument("compute_errors: problem has no exact solution");
  const Mesh& mesh = *V.mesh;
  const ManufacturedSolution& ms = *prob.exact;
  const OseenCoefficients& co = prob.coef;
  const int vol_deg = (par.quad_deg_volume ? par.quad_deg_volume : default_quad_degree(V.k)) + 2;
  const int facet_deg = (par.quad_deg_facet ? par.quad_deg_facet : default_quad_degree(V.k)) + 2;

  StabWeights sw = sw_in;
  if (par.vorticity && sw.tau.size() == 0)
    sw = compute_stab_weights(V, co.b, co.nu, vol_deg);

  ErrorReport rep;
  rep.h = mesh_metrics(mesh).h;

  double grad_sq = 0, l2_sq = 0, div_sq = 0, p_sq = 0, stab_sq = 0, jump_sq = 0, bn_sq = 0;

  QuadRule vrule = triangle_rule(vol_deg);
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const ElementBasis& eb = V.basis[t];
    Eigen::VectorXd uloc = detail::gather_local(V, t, u);
    Eigen::VectorXd ploc = detail::gather_local(Q, t, p);
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::physical_rule(triangle_geom(mesh, t), vrule, pts, w);
    for (int q = 0; q < w.size(); ++q) {
      const Vec2& x = pts[q];
      Eigen::MatrixXd val = eb.deriv(x), gx = eb.deriv(x, 1, 0), gy = eb.deriv(x, 0, 1);
      Vec2 uh = val.transpose() * uloc;
      Vec2 uhx = gx.transpose() * uloc;
      Vec2 uhy = gy.transpose() * uloc;
      Vec2 e = uh - ms.u_deriv(0, 0, x);
      Vec2 ex = uhx - ms.u_deriv(1, 0, x);
      Vec2 ey = uhy - ms.u_deriv(0, 1, x);
      l2_sq += w(q) * e.squaredNorm();
      grad_sq += w(q) * (ex.squaredNorm() + ey.squaredNorm());
      div_sq += w(q) * (uhx.x() + uhy.y()) * (uhx.x() + uhy.y());
      rep.linf_u = std::max(rep.linf_u, e.cwiseAbs().maxCoeff());
      double pe = Q.basis[t].deriv(x).col(0).dot(ploc) - ms.p(x);
      p_sq += w(q) * pe * pe;
      if (par.vorticity) {
        double ce = detail::curl_L_basis(eb, co, x).dot(uloc) - curl_oseen_operator(co, ms, x);
        stab_sq += par.delta0 * sw.tau(t) * w(q) * ce * ce;
      }
    }
  }

  QuadRule erule = edge_rule(facet_deg);
  const auto& g = prob.dirichlet;
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const Facet& fc = mesh.facets[f];
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::facet_points(mesh, fc, erule, pts, w);
    Eigen::VectorXd ulo = detail::gather_local(V, fc.tri_lo, u);
    Eigen::VectorXd uhi;
    if (!fc.boundary) uhi = detail::gather_local(V, fc.tri_hi, u);
    for (int q = 0; q < w.size(); ++q) {
      const Vec2& x = pts[q];
      Vec2 jump;
      if (fc.boundary) {
        Vec2 uh = V.basis[fc.tri_lo].deriv(x).transpose() * ulo;
        jump = uh - (g ? g(x) : Vec2(Vec2::Zero()));
      } else {
        jump = V.basis[fc.tri_lo].deriv(x).transpose() * ulo -
               V.basis[fc.tri_hi].deriv(x).transpose() * uhi;
      }
      double bn = std::abs(co.b(x).dot(fc.normal));
      jump_sq += (w(q) / fc.length) * jump.squaredNorm();
      bn_sq += w(q) * bn * jump.squaredNorm();
      if (par.vorticity && !fc.boundary) {
        Vec2 bv = co.b(x);
        double cj = detail::conv_cross_n(V.basis[fc.tri_lo], bv, fc.normal, x).dot(ulo) -
                    detail::conv_cross_n(V.basis[fc.tri_hi], bv, fc.normal, x).dot(uhi);
        stab_sq += par.delta0 * fc.length * fc.length * w(q) * cj * cj;
      }
    }
  }

  rep.l2_u = std::sqrt(l2_sq);
  rep.div_u = std::sqrt(div_sq);
  rep.l2_p = std::sqrt(p_sq);
  rep.energy = std::sqrt(co.nu * grad_sq + co.nu * par.sigma * jump_sq + bn_sq + stab_sq +
                         co.r0 * l2_sq);
  rep.l2_p_proj = (project_pressure(Q, ms.p) - p).norm();
  return rep;
}

// L2 distance between two velocity fields given by coefficient vectors on
// the same space.
inline double velocity_l2_diff(const FeSpace& V, const Eigen::VectorXd& a,
                               const Eigen::VectorXd& b) {
  const Mesh& mesh = *V.mesh;
  QuadRule rule = triangle_rule(default_quad_degree(V.k));
  Eigen::VectorXd d = a - b;
  double acc = 0;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    Eigen::VectorXd loc = detail::gather_local(V, t, d);
    std::vector<Vec2> pts;
    Eigen::VectorXd w;
    detail::physical_rule(triangle_geom(mesh, t), rule, pts, w);
    for (int q = 0; q < w.size(); ++q) {
      Vec2 e = V.basis[t].deriv(pts[q]).transpose() * loc;
      acc += w(q) * e.squaredNorm();
    }
  }
  return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Mesh-refinement study.

struct StudyConfig {
  int k = 2;
  int n0 = 12;
  double perturb = 0.2;
  unsigned long seed = 42;
  int levels = 4;
  DiscretizationParams disc;
};

struct LevelResult {
  int level = 0;
  int n_velocity = 0, n_velocity_free = 0, n_pressure = 0;
  ErrorReport err;
  SolveReport solve;
};

inline std::vector<LevelResult> run_study(const OseenProblem& prob, const StudyConfig& cfg,
                                          std::ostream* log = nullptr) {
  std::vector<LevelResult> out;
  Mesh mesh = build_structured_mesh(cfg.n0, cfg.perturb, cfg.seed);
  for (int level = 1; level <= cfg.levels; ++level) {
    FeSpace V = build_velocity_space(mesh, cfg.k);
    FeSpace Q = build_pressure_space(mesh, cfg.k);
    set_velocity_dirichlet(V, prob.dirichlet);
    SchemeSystem sys = assemble_scheme(V, Q, prob, cfg.disc);
    DiscreteSolution sol = solve_oseen(V, Q, sys);
    LevelResult lr;
    lr.level = level;
    lr.n_velocity = V.n_dofs;
    lr.n_velocity_free = V.n_free;
    lr.n_pressure = Q.n_dofs;
    lr.err = compute_errors(V, Q, prob, cfg.disc, sys.stab, sol.u, sol.p);
    lr.solve = sol.report;
    out.push_back(lr);
    if (log)
      *log << "level " << level << ": h = " << lr.err.h << ", dofs = " << V.n_dofs + Q.n_dofs
           << ", energy = " << lr.err.energy << ", residual = " << sol.report.residual << "\n";
    if (level < cfg.levels) mesh = refine_uniform(mesh);
  }
  return out;
}

inline double convergence_rate(double e_coarse, double e_fine, double h_coarse, double h_fine) {
  return std::log(e_coarse / e_fine) / std::log(h_coarse / h_fine);
}

// CSV with one row per level; the rate columns on row i describe the
// transition from level i to level i+1 and stay empty on the last row.
inline void write_study_csv(std::ostream& os, const std::vector<LevelResult>& res,
                            const std::vector<std::string>& header_comments) {
  for (const std::string& line : header_comments) os << "# " << line << "\n";
  os << "level,h,energy,energy_rate,l2u,l2u_rate,divu,divu_rate,"
        "linfu,linfu_rate,l2p,l2p_rate,l2p_proj,l2p_proj_rate\n";
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.6e", v);
    return std::string(buf);
  };
  auto rate = [&buf, &res](double (*pick)(const ErrorReport&), size_t i) {
    if (i + 1 >= res.size()) return std::string();
    double r = convergence_rate(pick(res[i].err), pick(res[i + 1].err), res[i].err.h,
                                res[i + 1].err.h);
    std::snprintf(buf, sizeof buf, "%.3f", r);
    return std::string(buf);
  };
  for (size_t i = 0; i < res.size(); ++i) {
    const ErrorReport& e = res[i].err;
    os << res[i].level << ',' << num(e.h);
    os << ',' << num(e.energy) << ',' << rate([](const ErrorReport& r) { return r.energy; }, i);
    os << ',' << num(e.l2_u) << ',' << rate([](const ErrorReport& r) { return r.l2_u; }, i);
    os << ',' << num(e.div_u) << ',' << rate([](const ErrorReport& r) { return r.div_u; }, i);
    os << ',' << num(e.linf_u) << ',' << rate([](const ErrorReport& r) { return r.linf_u; }, i);
    os << ',' << num(e.l2_p) << ',' << rate([](const ErrorReport& r) { return r.l2_p; }, i);
    os << ',' << num(e.l2_p_proj) << ','
       << rate([](const ErrorReport& r) { return r.l2_p_proj; }, i) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Discrete-complex audit: dimension count, divergence rank, and the identity
// div(curl z) = 0 realized at the matrix level.

struct ExactnessReport {
  int n_velocity_free = 0;
  int n_potential_free = 0;
  int n_pressure = 0;
  int expected_rank = 0;       // n_pressure - 1
  int rank_B = 0;
  double max_commutator = 0.0;       // max |B_f (curl)_f|
  double max_constrained_curl = 0.0; // curl of free potentials on constrained velocity rows
  int rank_B_no_interior = 0;        // velocity interior moments removed
};

inline ExactnessReport check_exactness(const Mesh& mesh, int k) {
  FeSpace V = build_velocity_space(mesh, k);
  FeSpace Q = build_pressure_space(mesh, k);
  FeSpace Z = build_potential_space(mesh, k);

  ExactnessReport rep;
  rep.n_velocity_free = V.n_free;
  rep.n_potential_free = Z.n_free;
  rep.n_pressure = Q.n_dofs;
  rep.expected_rank = Q.n_dofs - 1;

  SpMat B = assemble_divergence(V, Q);
  Eigen::MatrixXd Bf(reduce_cols(B, V).M);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Bf);
  qr.setThreshold(1e-9);
  rep.rank_B = int(qr.rank());

  SpMat C = curl_matrix(Z, V);
  Eigen::MatrixXd Cd(C);
  Eigen::MatrixXd Cf(V.n_free, Z.n_free);
  for (int i = 0; i < V.n_dofs; ++i)
    for (int j = 0; j < Z.n_dofs; ++j) {
      int fi = V.free_of_global[i], fj = Z.free_of_global[j];
      if (fj < 0) continue;
      if (fi >= 0)
        Cf(fi, fj) = Cd(i, j);
      else
        rep.max_constrained_curl = std::max(rep.max_constrained_curl, std::abs(Cd(i, j)));
    }
  rep.max_commutator = (Bf * Cf).cwiseAbs().maxCoeff();

  // negative control: without the interior moments the divergence image
  // cannot cover the zero-mean pressures
  const int interior_base = 2 * mesh.n_vertices() + (k - 1) * mesh.n_facets();
  std::vector<int> keep;
  for (int j = 0; j < V.n_free; ++j)
    if (V.global_of_free[j] < interior_base) keep.push_back(j);
  Eigen::MatrixXd Bsub(Bf.rows(), keep.size());
  for (size_t j = 0; j < keep.size(); ++j) Bsub.col(j) = Bf.col(keep[j]);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr2(Bsub);
  qr2.setThreshold(1e-9);
  rep.rank_B_no_interior = int(qr2.rank());
  return rep;
}

// ---------------------------------------------------------------------------
// Pressure-robustness probe: shifting the load by a gradient field must leave
// the velocity untouched and shift the pressure by the projected potential.

struct RobustnessReport {
  double velocity_change_l2 = 0.0;
  double pressure_shift_error = 0.0;  // coefficient norm against the predicted shift
};

inline RobustnessReport check_pressure_robustness(
    const Mesh& mesh, int k, const OseenProblem& base, const DiscretizationParams& par,
    const std::function<double(const Vec2&)>& phi,
    const std::function<Vec2(const Vec2&)>& grad_phi) {
  FeSpace V = build_velocity_space(mesh, k);
  FeSpace Q = build_pressure_space(mesh, k);
  set_velocity_dirichlet(V, base.dirichlet);

  OseenProblem shifted = base;
  auto f0 = base.f;
  shifted.f = [f0, grad_phi](const Vec2& x) { return Vec2(f0(x) + grad_phi(x)); };
  // curl grad phi = 0, so curl f is unchanged

  SchemeSystem s1 = assemble_scheme(V, Q, base, par);
  DiscreteSolution d1 = solve_oseen(V, Q, s1);
  SchemeSystem s2 = assemble_scheme(V, Q, shifted, par);
  DiscreteSolution d2 = solve_oseen(V, Q, s2);

  RobustnessReport rep;
  rep.velocity_change_l2 = velocity_l2_diff(V, d1.u, d2.u);

  Eigen::VectorXd proj_phi = project_pressure(Q, phi);
  Eigen::VectorXd m = pressure_means(Q);
  double mean_phi = m.dot(proj_phi);  // |Omega| = 1
  Eigen::VectorXd predicted = proj_phi - mean_phi * m;
  rep.pressure_shift_error = ((d2.p - d1.p) - predicted).norm();
  return rep;
}

// ---------------------------------------------------------------------------
// Degree-of-freedom comparison against the unreduced H(div) element of the
// same order.

struct DofComparison {
  int nv = 0, ne = 0, nt = 0, k = 0;
  long velocity = 0;       // reduced element used here
  long velocity_bdm = 0;   // full BDM_k element
  long pressure = 0;
  long potential = 0;
  long system = 0;         // velocity + pressure
  long system_bdm = 0;
};

inline DofComparison compare_dof_counts(int nv, int ne, int nt, int k) {
  DofComparison d;
  d.nv = nv;
  d.ne = ne;
  d.nt = nt;
  d.k = k;
  d.velocity = velocity_dof_count(nv, ne, nt, k);
  d.velocity_bdm = bdm_dof_count(nv, ne, nt, k);
  d.pressure = pressure_dof_count(nt, k);
  d.potential = potential_dof_count(nv, ne, nt, k);
  d.system = d.velocity + d.pressure;
  d.system_bdm = d.velocity_bdm + d.pressure;
  return d;
}

inline DofComparison compare_dof_counts(const Mesh& mesh, int k) {
  return compare_dof_counts(mesh.n_vertices(), mesh.n_facets(), mesh.n_triangles(), k);
}

} // namespace oseen
