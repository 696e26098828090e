#pragma once

// Functional principal components of spline-presmoothed curves, and the
// varying-smoother fit that smooths the component scores in t.

#include "vsm/basis.hpp"
#include "vsm/common.hpp"
#include "vsm/crossval.hpp"
#include "vsm/linalg.hpp"
#include "vsm/smoothcore.hpp"
#include "vsm/tensorfit.hpp"

#include <optional>
#include <string>

namespace vsm {

/// Y B_s (B_s^T B_s)^{-1} B_s^T.
inline Matrix presmooth_project(const Matrix& Y, const EvaluatedBasis& bs) {
  if (Y.cols() != bs.design.rows()) throw DimensionError("presmooth: Y columns do not match the s grid");
  const Matrix& B = bs.design;
  const auto llt = cholesky_or_throw(B.transpose() * B, "presmooth");
  return (Y * B) * llt.solve(B.transpose());
}

struct FpcaModel {
  Vector mu;             ///< presmoothed mean curve on the s grid
  Vector mu_coef;        ///< its spline coefficients
  Matrix V;              ///< K_s x A eigenfunction coefficients, phi_a = B_s v_a
  Matrix scores;         ///< n x A
  Vector eigenvalues;    ///< leading A, descending
  Vector all_eigenvalues;
  Index rank = 0;        ///< number of positive eigenvalues
  double total_variance = 0.0;
};

/// Leading A components by decreasing eigenvalue. Asking for more components than
/// there are positive eigenvalues raises SpecError.
inline FpcaModel fpca_decompose(const Matrix& Y, const EvaluatedBasis& bs, Index A) {
  const Index n = Y.rows(), ks = bs.size();
  if (Y.cols() != bs.design.rows()) throw DimensionError("fpca: Y columns do not match the s grid");
  if (n < 2) throw InsufficientSampleError("fpca: need at least two curves");
  if (A < 0) throw SpecError("fpca: number of components must be non-negative");
  const Matrix& B = bs.design;
  const auto llt = cholesky_or_throw(B.transpose() * B, "fpca");
  const Matrix coef = llt.solve(B.transpose() * Y.transpose()).transpose();  // n x K_s
  FpcaModel m;
  m.mu_coef = coef.colwise().mean().transpose();
  m.mu = B * m.mu_coef;
  const Matrix cc = coef.rowwise() - m.mu_coef.transpose();
  const Matrix qh = sym_sqrt(bs.gram);
  const Matrix qih = sym_inv_sqrt(bs.gram);
  Matrix cov = qh * (cc.transpose() * cc) * qh / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cov + cov.transpose()));
  const Vector ev = es.eigenvalues().reverse();
  const Matrix U = es.eigenvectors().rowwise().reverse();
  m.all_eigenvalues = ev;
  m.total_variance = cov.trace();
  const double top = std::max(ev(0), 0.0);
  m.rank = 0;
  while (m.rank < ks && ev(m.rank) > 1e-10 * top && top > 0.0) ++m.rank;
  if (A > m.rank)
    throw SpecError("fpca: requested " + std::to_string(A) + " components but only " + std::to_string(m.rank) +
                    " eigenvalues are positive");
  m.eigenvalues = ev.head(A);
  m.V = qih * U.leftCols(A);
  const Matrix phi = B * m.V;
  for (Index a = 0; a < A; ++a) {
    Index imax;
    phi.col(a).cwiseAbs().maxCoeff(&imax);
    if (phi(imax, a) < 0.0) m.V.col(a) *= -1.0;
  }
  m.scores = cc * bs.gram * m.V;
  return m;
}

/// Smallest A whose leading eigenvalues explain at least the given share of variance.
inline Index components_for_variance(const FpcaModel& m, double share) {
  const Vector& ev = m.all_eigenvalues;
  double total = 0.0;
  for (Index a = 0; a < m.rank; ++a) total += ev(a);
  double acc = 0.0;
  for (Index a = 0; a < m.rank; ++a) {
    acc += ev(a);
    if (acc >= share * total) return a + 1;
  }
  return m.rank;
}

struct FpcScoresFit : VsFit {
  FpcaModel fpca;
  ColumnSmoothResult score_smooth;  ///< REML smoothing of the score columns in t
  Matrix G;                         ///< n x A smoothed scores
  Index components = 0;
  std::optional<CvResult> cv;
};

/// fitted = J Y B_s (B_s^T B_s)^{-1} B_s^T + G V^T B_s^T, with the scores smoothed by REML
/// unless score_lambdas are given.
inline FpcScoresFit fit_fpc_scores_with(const Matrix& Y, const EvaluatedBasis& bt, const EvaluatedBasis& bs,
                                        const DrDecomposition& dr, Index A,
                                        const std::optional<Vector>& score_lambdas = std::nullopt) {
  FpcScoresFit fit;
  fit.method = Method::fpc_scores;
  fit.basis_t = bt;
  fit.basis_s = bs;
  fit.components = A;
  fit.fpca = fpca_decompose(Y, bs, A);
  const Index n = Y.rows();
  const Matrix mean_part = Vector::Ones(n) * fit.fpca.mu.transpose();
  Matrix theta = Vector::Ones(bt.size()) * fit.fpca.mu_coef.transpose();
  if (A > 0) {
    fit.score_smooth = smooth_columns(dr, fit.fpca.scores, score_lambdas);
    fit.G = fit.score_smooth.fitted;
    theta += fit.score_smooth.coef * fit.fpca.V.transpose();
  } else {
    fit.G = Matrix::Zero(n, 0);
    fit.score_smooth.dr = dr;
  }
  fit.theta = theta;
  fit.fitted = mean_part + fit.G * (bs.design * fit.fpca.V).transpose();
  return fit;
}

}  // namespace vsm
