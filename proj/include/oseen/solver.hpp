#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <chrono>
#include <stdexcept>
#include <vector>

#include "oseen/forms.hpp"

namespace oseen {

struct SolveReport {
  int n_velocity_free = 0;
  int n_pressure = 0;
  int n_system = 0;
  long nnz = 0;
  double residual = 0.0;  // ||K x - r|| / max(1, ||r||), recomputed after the solve
  double solve_seconds = 0.0;
  bool dense = false;
};

struct DiscreteSolution {
  Eigen::VectorXd u;   // all velocity dofs, prescribed values filled in
  Eigen::VectorXd p;   // pressure dofs
  double multiplier = 0.0;
  SolveReport report;
};

// Direct solve of the bordered saddle system
//   [ A_ff  B_f^T  0 ] [u_f]   [rhs_f]
//   [ B_f   0      m ] [p  ] = [rhs_p]
//   [ 0     m^T    0 ] [mu ]   [0    ]
// where the border enforces the zero-mean pressure condition.
//
// Small systems take the bordered matrix to a dense LU directly.  For large
// ones the dense border column makes sparse LU fill explode, so the same
// solution is recovered from a grounded reformulation: the left null space
// of B is spanned by m (the constant pressure), so dropping the first
// element-constant pressure row and column yields a nonsingular sparse
// system with the identical velocity; the zero-mean pressure and the
// multiplier mu = m^T (rhs_p - B u) are restored afterwards.  The residual
// is always measured against the full bordered matrix.
inline DiscreteSolution solve_oseen(const FeSpace& V, const FeSpace& Q, const SchemeSystem& sys,
                                    int dense_threshold = 3000) {
  ReducedSquare ar = reduce_square(sys.A, V);
  ReducedCols br = reduce_cols(sys.B, V);
  Eigen::VectorXd rhs_u = reduce_vector(sys.rhs, V) - ar.data;
  Eigen::VectorXd rhs_p = -br.data;

  const int nf = V.n_free, np = Q.n_dofs, n = nf + np + 1;
  DiscreteSolution sol;
  sol.report.n_velocity_free = nf;
  sol.report.n_pressure = np;
  sol.report.n_system = n;

  auto t0 = std::chrono::steady_clock::now();
  Eigen::VectorXd uf(nf), p(np);
  if (n <= dense_threshold) {
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    K.topLeftCorner(nf, nf) = Eigen::MatrixXd(ar.M);
    Eigen::MatrixXd Bd(br.M);
    K.block(nf, 0, np, nf) = Bd;
    K.block(0, nf, nf, np) = Bd.transpose();
    K.block(nf, nf + np, np, 1) = sys.m;
    K.block(nf + np, nf, 1, np) = sys.m.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs.head(nf) = rhs_u;
    rhs.segment(nf, np) = rhs_p;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
    Eigen::VectorXd x = lu.solve(rhs);
    uf = x.head(nf);
    p = x.segment(nf, np);
    sol.multiplier = x(n - 1);
    sol.report.dense = true;
  } else {
    const int ng = nf + np - 1;
    std::vector<Triplet> trips;
    trips.reserve(size_t(ar.M.nonZeros()) + 2 * size_t(br.M.nonZeros()));
    for (int c = 0; c < ar.M.outerSize(); ++c)
      for (SpMat::InnerIterator it(ar.M, c); it; ++it)
        trips.emplace_back(int(it.row()), int(it.col()), it.value());
    for (int c = 0; c < br.M.outerSize(); ++c)
      for (SpMat::InnerIterator it(br.M, c); it; ++it) {
        if (it.row() == 0) continue;
        trips.emplace_back(nf + int(it.row()) - 1, int(it.col()), it.value());
        trips.emplace_back(int(it.col()), nf + int(it.row()) - 1, it.value());
      }
    SpMat K(ng, ng);
    K.setFromTriplets(trips.begin(), trips.end());
    std::vector<Triplet>().swap(trips);
    Eigen::VectorXd rhs(ng);
    rhs.head(nf) = rhs_u;
    rhs.tail(np - 1) = rhs_p.tail(np - 1);
    Eigen::SparseLU<SpMat> lu;
    lu.compute(K);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error("solve_oseen: sparse factorization failed");
    Eigen::VectorXd x = lu.solve(rhs);
    uf = x.head(nf);
    p(0) = 0.0;
    p.tail(np - 1) = x.tail(np - 1);
    sol.multiplier = sys.m.dot(rhs_p - br.M * uf);
    p -= sys.m.dot(p) * sys.m;
  }
  sol.report.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  // recompute the residual against the bordered system
  Eigen::VectorXd ru = ar.M * uf + br.M.transpose() * p - rhs_u;
  Eigen::VectorXd rp = br.M * uf + sys.m * sol.multiplier - rhs_p;
  double rm = sys.m.dot(p);
  double rr = std::sqrt(ru.squaredNorm() + rp.squaredNorm() + rm * rm);
  double rhs_norm = std::sqrt(rhs_u.squaredNorm() + rhs_p.squaredNorm());
  sol.report.residual = rr / std::max(1.0, rhs_norm);
  sol.report.nnz = long(ar.M.nonZeros()) + 2 * long(br.M.nonZeros()) + 2 * np;

  sol.u = V.full_vector(uf);
  sol.p = p;
  return sol;
}

struct InfSupReport {
  double beta = 0.0;       // sqrt of the smallest eigenvalue on the zero-mean subspace
  int n_velocity_free = 0;
  int n_pressure = 0;
};

// Smallest singular value of the divergence coupling measured in the broken
// H1 norm on velocities and the L2 norm on zero-mean pressures:
//   beta^2 = min eig of W^T (B M1^{-1} B^T) W
// with W an orthonormal basis of the complement of the constant pressure.
// Dense linear algebra throughout, guarded by a size cap.
inline InfSupReport estimate_infsup(const FeSpace& V, const FeSpace& Q, int size_cap = 5000) {
  if (V.n_free > size_cap)
    throw std::runtime_error("estimate_infsup: velocity space exceeds the dense solver cap");

  SpMat M1 = h1h_gram(V);
  Eigen::MatrixXd M1f(reduce_square(M1, V).M);
  SpMat B = assemble_divergence(V, Q);
  Eigen::MatrixXd Bf(reduce_cols(B, V).M);
  Eigen::VectorXd m = pressure_means(Q);

  Eigen::LLT<Eigen::MatrixXd> llt(M1f);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("estimate_infsup: H1 gram is not positive definite");
  // S = B M1^{-1} B^T = X^T X with X = L^{-1} B^T
  Eigen::MatrixXd X = llt.matrixL().solve(Bf.transpose());
  Eigen::MatrixXd S = X.transpose() * X;

  const int np = Q.n_dofs;
  Eigen::VectorXd mhat = m / m.norm();
  // reflector taking e_0 to mhat; its remaining columns span the zero-mean subspace
  Eigen::VectorXd wv = mhat;
  wv(0) -= 1.0;
  Eigen::MatrixXd W;
  if (wv.norm() < 1e-14) {
    W = Eigen::MatrixXd::Identity(np, np).rightCols(np - 1);
  } else {
    wv.normalize();
    W = Eigen::MatrixXd::Identity(np, np).rightCols(np - 1) -
        2.0 * wv * wv.tail(np - 1).transpose();
  }
  Eigen::MatrixXd Sdefl = W.transpose() * S * W;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sdefl);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("estimate_infsup: eigensolver failed");

  InfSupReport rep;
  rep.beta = std::sqrt(std::max(0.0, es.eigenvalues()(0)));
  rep.n_velocity_free = V.n_free;
  rep.n_pressure = np;
  return rep;
}

} // namespace oseen
