#pragma once

// Penalized spline smoothing of many response columns sharing one design,
// through the Demmler-Reinsch basis, with REML selection of the smoothing
// parameter per column.

#include "vsm/basis.hpp"
#include "vsm/common.hpp"
#include "vsm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace vsm {

inline constexpr double kLambdaClampLo = 1e-12;
inline constexpr double kLambdaClampHi = 1e12;
inline constexpr double kLambdaSearchLo = 1e-8;
inline constexpr double kLambdaSearchHi = 1e8;

/// B R^{-1} U = A with R^T R = B^T B and R^{-T} P R^{-1} = U diag(tau) U^T.
struct DrDecomposition {
  Matrix A;
  Matrix R;
  Matrix U;
  Vector tau;
  Index null_dim = 0;
  double tau_tol = 0.0;

  Index rows() const { return A.rows(); }
  Index dim() const { return A.cols(); }

  /// Shrinkage factors 1 / (1 + lambda tau).
  Vector shrink(double lambda) const { return (1.0 + lambda * tau.array()).inverse().matrix(); }

  /// R^{-1} U, mapping Demmler-Reinsch coordinates to spline coefficients.
  Matrix coef_map() const { return R.triangularView<Eigen::Upper>().solve(U); }
};

inline DrDecomposition demmler_reinsch(const Matrix& design, const Matrix& penalty) {
  const Index k = design.cols();
  if (penalty.rows() != k || penalty.cols() != k) throw DimensionError("demmler_reinsch: penalty size mismatch");
  if (design.rows() < k)
    throw ConditioningError("demmler_reinsch: " + std::to_string(design.rows()) + " rows for " + std::to_string(k) +
                            " basis functions");
  const Index rank = design_rank(design);
  if (rank < k)
    throw ConditioningError("demmler_reinsch: design has column rank " + std::to_string(rank) + " < " +
                            std::to_string(k));
  const Eigen::LLT<Matrix> llt = cholesky_or_throw(design.transpose() * design, "demmler_reinsch");
  DrDecomposition dr;
  dr.R = llt.matrixU();
  // W = R^{-T} P R^{-1}
  Matrix w = dr.R.transpose().triangularView<Eigen::Lower>().solve(penalty);
  w = dr.R.transpose().triangularView<Eigen::Lower>().solve(Matrix(w.transpose()));
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (w + w.transpose()));
  dr.U = es.eigenvectors();
  dr.tau = es.eigenvalues().cwiseMax(0.0);
  const double top = dr.tau.maxCoeff();
  dr.tau_tol = 1e-8 * top;
  dr.null_dim = 0;
  // rounding leaves null-space eigenvalues near 1e-6 * top; a huge lambda would still act on them
  for (Index j = 0; j < k; ++j)
    if (!(dr.tau(j) > dr.tau_tol)) {
      dr.tau(j) = 0.0;
      ++dr.null_dim;
    }
  dr.A = dr.R.transpose().triangularView<Eigen::Lower>().solve(design.transpose()).transpose() * dr.U;
  return dr;
}

inline DrDecomposition demmler_reinsch(const EvaluatedBasis& basis) {
  return demmler_reinsch(basis.design, basis.penalty);
}

namespace detail {

/// Per-column sufficient statistics for the REML score: z = A^T y and the
/// squared residual from projecting y onto span(A).
struct RemlColumn {
  Vector z;
  double rss_perp = 0.0;
  double yty = 0.0;
};

inline RemlColumn reml_column(const DrDecomposition& dr, const Vector& y) {
  RemlColumn c;
  c.z = dr.A.transpose() * y;
  c.rss_perp = (y - dr.A * c.z).squaredNorm();
  c.yty = y.squaredNorm();
  return c;
}

inline double reml_score_stats(const DrDecomposition& dr, const RemlColumn& c, double log_lambda) {
  const double lambda = std::clamp(std::exp(log_lambda), kLambdaClampLo, kLambdaClampHi);
  const Index n = dr.rows(), k = dr.dim(), q = dr.null_dim;
  double prss = c.rss_perp, logdet = 0.0;
  for (Index j = 0; j < k; ++j) {
    const double lt = lambda * dr.tau(j);
    prss += lt / (1.0 + lt) * c.z(j) * c.z(j);
    if (dr.tau(j) > dr.tau_tol) logdet += std::log1p(lt);
  }
  prss = std::max(prss, std::max(1e-12 * c.yty, 1e-300));
  return static_cast<double>(n - q) * std::log(prss) + logdet - static_cast<double>(k - q) * std::log(lambda);
}

inline double select_lambda_stats(const DrDecomposition& dr, const RemlColumn& c) {
  if (dr.null_dim == dr.dim()) return kLambdaSearchHi;
  const int grid = 25;
  const double lo = std::log(kLambdaSearchLo), hi = std::log(kLambdaSearchHi);
  const double step = (hi - lo) / (grid - 1);
  int best = 0;
  double best_score = 0.0;
  for (int i = 0; i < grid; ++i) {
    const double s = reml_score_stats(dr, c, lo + step * i);
    if (i == 0 || s < best_score) {
      best = i;
      best_score = s;
    }
  }
  const double a = lo + step * std::max(best - 1, 0);
  const double b = lo + step * std::min(best + 1, grid - 1);
  const double x = golden_section([&](double v) { return reml_score_stats(dr, c, v); }, a, b, 1e-4);
  const double x_best = reml_score_stats(dr, c, x) <= best_score ? x : lo + step * best;
  return std::exp(x_best);
}

}  // namespace detail

/// Restricted log-likelihood criterion (up to constants) for one response column.
inline double reml_score(const DrDecomposition& dr, const Vector& y, double log_lambda) {
  if (y.size() != dr.rows()) throw DimensionError("reml_score: response length mismatch");
  return detail::reml_score_stats(dr, detail::reml_column(dr, y), log_lambda);
}

/// REML-optimal lambda: a 25-point log grid over [1e-8, 1e8] refined by golden section.
inline double select_lambda_reml(const DrDecomposition& dr, const Vector& y) {
  if (y.size() != dr.rows()) throw DimensionError("select_lambda_reml: response length mismatch");
  return detail::select_lambda_stats(dr, detail::reml_column(dr, y));
}

struct ColumnSmoothResult {
  DrDecomposition dr;
  Matrix fitted;   ///< n x L
  Vector lambdas;  ///< one per column
  Matrix shrink;   ///< K x L, entries 1 / (1 + lambda_l tau_k)
  Matrix coef;     ///< K x L spline coefficients, fitted = B coef
};

/// Smooths every column of Y. Lambdas are selected by REML unless given.
/// Constant columns skip selection and are returned unchanged.
inline ColumnSmoothResult smooth_columns(const DrDecomposition& dr, const Matrix& Y,
                                         const std::optional<Vector>& lambdas = std::nullopt) {
  if (Y.rows() != dr.rows()) throw DimensionError("smooth_columns: Y has wrong number of rows");
  if (lambdas && lambdas->size() != Y.cols()) throw DimensionError("smooth_columns: one lambda per column required");
  const Index L = Y.cols(), K = dr.dim();
  if (!Y.allFinite()) throw DomainError("smooth_columns: non-finite response");
  ColumnSmoothResult res;
  res.dr = dr;
  res.lambdas.resize(L);
  res.shrink.resize(K, L);
  const Matrix Z = dr.A.transpose() * Y;
  Matrix mz(K, L);
  std::vector<bool> constant(L, false);
  for (Index l = 0; l < L; ++l) {
    const auto col = Y.col(l);
    const double scale = std::max(col.cwiseAbs().maxCoeff(), 1e-300);
    constant[l] = (col.maxCoeff() - col.minCoeff()) <= 1e-14 * scale;
    double lam;
    if (lambdas) {
      lam = (*lambdas)(l);
      if (!(lam >= 0.0) || !std::isfinite(lam)) throw SpecError("smooth_columns: lambda must be finite and >= 0");
    } else if (constant[l]) {
      lam = kLambdaSearchHi;
    } else {
      detail::RemlColumn c;
      c.z = Z.col(l);
      c.rss_perp = (col - dr.A * c.z).squaredNorm();
      c.yty = col.squaredNorm();
      lam = detail::select_lambda_stats(dr, c);
    }
    res.lambdas(l) = lam;
    res.shrink.col(l) = dr.shrink(lam);
    mz.col(l) = res.shrink.col(l).cwiseProduct(Z.col(l));
  }
  res.fitted = dr.A * mz;
  for (Index l = 0; l < L; ++l)
    if (constant[l]) res.fitted.col(l) = Y.col(l);
  res.coef = dr.coef_map() * mz;
  return res;
}

/// argmin ||y - X beta||_W^2 + beta^T P beta by Cholesky of X^T W X + P.
inline Vector penalized_lstsq(const Matrix& X, const Matrix& P, const Vector& y, const Matrix* W = nullptr) {
  if (X.rows() != y.size()) throw DimensionError("penalized_lstsq: X and y disagree");
  if (P.rows() != X.cols() || P.cols() != X.cols()) throw DimensionError("penalized_lstsq: P size mismatch");
  Matrix lhs;
  Vector rhs;
  if (W) {
    lhs = X.transpose() * (*W) * X + P;
    rhs = X.transpose() * (*W) * y;
  } else {
    lhs = X.transpose() * X + P;
    rhs = X.transpose() * y;
  }
  return cholesky_or_throw(0.5 * (lhs + lhs.transpose()), "penalized_lstsq").solve(rhs);
}

}  // namespace vsm
