#pragma once

// Banded modified-Cholesky precision estimates for the within-curve error
// covariance, and bandwidth choice by the Ledoit-Wolf sphericity statistic
// of the whitened residuals.

#include "vsm/common.hpp"
#include "vsm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace vsm {

struct PrecisionEstimate {
  Matrix prec;       ///< T^T D T
  Matrix prec_sqrt;  ///< symmetric square root of prec
  Matrix T;          ///< unit lower triangular, bandwidth k
  Vector D;          ///< innovation precisions
  int k = 0;
  double lw_stat = std::numeric_limits<double>::quiet_NaN();
};

struct BandedOptions {
  double ridge_scale = 1e-8;  ///< ridge = ridge_scale * mean diagonal of the local Gram
  bool dof_correction = true; ///< residual variance divisor n - #regressors - 1 instead of n - 1
};

inline PrecisionEstimate banded_precision(const Matrix& residuals, int k, const BandedOptions& opt = {}) {
  const Index n = residuals.rows(), L = residuals.cols();
  if (k < 0) throw SpecError("banded_precision: bandwidth must be non-negative");
  if (k >= L) throw SpecError("banded_precision: bandwidth " + std::to_string(k) + " must be below L = " +
                              std::to_string(L));
  if (n <= k + 1) throw InsufficientSampleError("banded_precision: need more than k + 1 curves");
  if (!residuals.allFinite()) throw DomainError("banded_precision: non-finite residuals");
  const Matrix X = residuals.rowwise() - residuals.colwise().mean();
  PrecisionEstimate est;
  est.k = k;
  est.T = Matrix::Identity(L, L);
  est.D.resize(L);
  for (Index j = 0; j < L; ++j) {
    const Index lo = std::max<Index>(0, j - k), m = j - lo;
    Vector resid = X.col(j);
    if (m > 0) {
      const auto Z = X.middleCols(lo, m);
      Matrix G = Z.transpose() * Z;
      const double ridge = opt.ridge_scale * G.diagonal().mean();
      G.diagonal().array() += ridge;
      const Vector beta = G.ldlt().solve(Z.transpose() * X.col(j));
      resid -= Z * beta;
      est.T.block(j, lo, 1, m) = -beta.transpose();
    }
    const double divisor = static_cast<double>(opt.dof_correction ? n - m - 1 : n - 1);
    const double var = std::max(resid.squaredNorm() / divisor, 1e-12);
    est.D(j) = 1.0 / var;
  }
  est.prec = est.T.transpose() * est.D.asDiagonal() * est.T;
  est.prec = 0.5 * (est.prec + est.prec.transpose());
  est.prec_sqrt = sym_sqrt(est.prec, 1e-10);
  return est;
}

/// Sphericity statistic 0.5 [n p tr(S^2) / tr(S)^2 - n - p - 1], S the centered
/// sample covariance with divisor n.
inline double lw_statistic(const Matrix& X) {
  const Index n = X.rows(), p = X.cols();
  if (n < 2) throw InsufficientSampleError("lw_statistic: need at least two rows");
  const Matrix Xc = X.rowwise() - X.colwise().mean();
  const Matrix S = Xc.transpose() * Xc / static_cast<double>(n);
  const double tr = S.trace();
  if (!(tr > 0.0) || !std::isfinite(tr)) throw DegenerateInputError("lw_statistic: covariance has zero trace");
  const double tr2 = S.squaredNorm();
  const double dn = static_cast<double>(n), dp = static_cast<double>(p);
  return 0.5 * (dn * dp * tr2 / (tr * tr) - dn - dp - 1.0);
}

inline std::vector<int> default_k_range(Index n, Index L) {
  std::vector<int> ks;
  for (int k = 0; k <= 10; ++k)
    if (k < n - 2 && k < L) ks.push_back(k);
  return ks;
}

/// Bandwidth minimizing |lw_statistic| of R Sigma^{-1/2}; ties go to the smaller k.
/// Without a range, default_k_range is used.
inline PrecisionEstimate select_bandwidth(const Matrix& residuals,
                                          const std::optional<std::vector<int>>& k_range = std::nullopt,
                                          const BandedOptions& opt = {}) {
  const Index n = residuals.rows(), L = residuals.cols();
  if (k_range && k_range->empty()) throw SpecError("select_bandwidth: empty k range");
  const std::vector<int> ks = k_range ? *k_range : default_k_range(n, L);
  std::vector<int> valid;
  for (int k : ks)
    if (k >= 0 && k < n - 2 && k < L) valid.push_back(k);
  if (valid.empty()) throw InsufficientSampleError("select_bandwidth: no bandwidth k < n - 2 in range");
  std::sort(valid.begin(), valid.end());
  PrecisionEstimate best;
  double best_abs = std::numeric_limits<double>::infinity();
  for (int k : valid) {
    PrecisionEstimate est = banded_precision(residuals, k, opt);
    est.lw_stat = lw_statistic(residuals * est.prec_sqrt);
    if (std::abs(est.lw_stat) < best_abs) {
      best_abs = std::abs(est.lw_stat);
      best = std::move(est);
    }
  }
  return best;
}

}  // namespace vsm
