#pragma once

// Two-step fits: every grid column is smoothed in t on its own (step 1), then
// the smoothed surface is smoothed or projected across s (step 2).

#include "vsm/basis.hpp"
#include "vsm/common.hpp"
#include "vsm/crossval.hpp"
#include "vsm/fpca.hpp"
#include "vsm/linalg.hpp"
#include "vsm/smoothcore.hpp"
#include "vsm/tensorfit.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace vsm {

struct TwoStepConfig {
  BasisSpec t_spec{0.0, 1.0, 15, 3};
  BasisSpec s_spec{0.0, 1.0, 30, 3};
  PenaltySpec t_penalty;
  PenaltySpec s_penalty;
  std::optional<Vector> step1_lambdas;  ///< frozen per-column lambdas; REML when absent
  std::optional<double> lambda_s;       ///< frozen; cross-validated when absent
  std::optional<Index> components;      ///< frozen A; chosen by the method's rule when absent
  double variance_share = 0.99;         ///< default A rule for 2s-penfpc
  int max_components = 10;              ///< largest A tried by cross-validation
  int cv_folds = 5;
  int cv_repeats = 1;
  std::uint64_t seed = 1;
};

struct TwoStepFit : VsFit {
  ColumnSmoothResult step1;
  std::optional<double> lambda_s;
  std::optional<FpcaModel> fpca;
  Index components = 0;
  Matrix smoother_s;      ///< L x L map applied to step-1 fits across s
  std::optional<CvResult> cv;
};

inline ColumnSmoothResult step1(const Matrix& Y, const EvaluatedBasis& bt,
                                const std::optional<Vector>& lambdas = std::nullopt) {
  return smooth_columns(demmler_reinsch(bt), Y, lambdas);
}

namespace detail {

inline void check_lambda_s(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw SpecError("lambda_s must be finite and >= 0");
}

/// (X^T X + lambda S)^{-1} through the Demmler-Reinsch factors, which stays accurate when
/// lambda is large and S singular.
inline Matrix penalized_inverse(const DrDecomposition& dr, double lambda) {
  check_lambda_s(lambda);
  const Matrix m = dr.coef_map();
  return m * dr.shrink(lambda).asDiagonal() * m.transpose();
}

/// (B_s^T B_s + lambda P_s)^{-1}
inline Matrix penalized_inverse(const EvaluatedBasis& bs, double lambda) {
  check_lambda_s(lambda);
  return penalized_inverse(demmler_reinsch(bs.design, bs.penalty), lambda);
}

/// N^{-1} with N = V^T (B_s^T B_s + lambda P_s) V, or V^T B_s^T B_s V without lambda.
inline Matrix n_inverse(const EvaluatedBasis& bs, const Matrix& V, std::optional<double> lambda) {
  const Index a = V.cols();
  if (a == 0) return Matrix::Zero(0, 0);
  const Matrix W = bs.design * V;
  if (!lambda) return penalized_inverse(demmler_reinsch(W, Matrix::Zero(a, a)), 0.0);
  const Matrix pv = V.transpose() * bs.penalty * V;
  return penalized_inverse(demmler_reinsch(W, 0.5 * (pv + pv.transpose())), *lambda);
}

/// Theta for the projection variants: coef B_s V N^{-1} V^T + 1 ybar^T [(B^T B)^{-1} B^T - B_s V N^{-1} V^T].
inline Matrix projected_theta(const Matrix& coef, const Vector& ybar, const EvaluatedBasis& bs, const Matrix& V,
                              const Matrix& n_inv) {
  const Matrix& B = bs.design;
  const Index ks = bs.size();
  const Matrix proj_base = cholesky_or_throw(B.transpose() * B, "step 2").solve(B.transpose()).transpose();  // B (B^T B)^{-1}
  Matrix proj = Matrix::Zero(B.rows(), ks);
  if (V.cols() > 0) proj = B * V * n_inv * V.transpose();
  return coef * proj + Vector::Ones(coef.rows()) * (ybar.transpose() * (proj_base - proj));
}

/// B_s V N^{-1} V^T B_s^T
inline Matrix projection_smoother(const EvaluatedBasis& bs, const Matrix& V, const Matrix& n_inv) {
  if (V.cols() == 0) return Matrix::Zero(bs.design.rows(), bs.design.rows());
  const Matrix W = bs.design * V;
  return W * n_inv * W.transpose();
}

}  // namespace detail

/// H_s = B_s (B_s^T B_s + lambda P_s)^{-1} B_s^T applied across s.
inline TwoStepFit step2_penalized(const ColumnSmoothResult& s1, const EvaluatedBasis& bt, const EvaluatedBasis& bs,
                                  double lambda_s) {
  TwoStepFit fit;
  fit.method = Method::two_step_pen;
  fit.basis_t = bt;
  fit.basis_s = bs;
  fit.step1 = s1;
  fit.lambda_s = lambda_s;
  const Matrix hinv = detail::penalized_inverse(bs, lambda_s);
  fit.smoother_s = bs.design * hinv * bs.design.transpose();
  fit.theta = s1.coef * bs.design * hinv;
  fit.fitted = s1.fitted * fit.smoother_s.transpose();
  return fit;
}

/// Projection of the step-1 deviations onto span(B_s V); lambda_s set gives the penalized variant.
inline TwoStepFit step2_projected(const ColumnSmoothResult& s1, const Matrix& Y, const EvaluatedBasis& bt,
                                  const EvaluatedBasis& bs, const FpcaModel& fpca, std::optional<double> lambda_s) {
  TwoStepFit fit;
  fit.method = lambda_s ? Method::two_step_penfpc : Method::two_step_fpc;
  fit.basis_t = bt;
  fit.basis_s = bs;
  fit.step1 = s1;
  fit.lambda_s = lambda_s;
  fit.fpca = fpca;
  fit.components = fpca.V.cols();
  const Matrix n_inv = detail::n_inverse(bs, fpca.V, lambda_s);
  fit.smoother_s = detail::projection_smoother(bs, fpca.V, n_inv);
  const Vector ybar = Y.colwise().mean().transpose();
  const Matrix JY = Vector::Ones(Y.rows()) * ybar.transpose();
  fit.fitted = presmooth_project(JY, bs) + (s1.fitted - JY) * fit.smoother_s.transpose();
  fit.theta = detail::projected_theta(s1.coef, ybar, bs, fpca.V, n_inv);
  return fit;
}

inline TwoStepFit step2_fpc(const ColumnSmoothResult& s1, const Matrix& Y, const EvaluatedBasis& bt,
                            const EvaluatedBasis& bs, Index A) {
  return step2_projected(s1, Y, bt, bs, fpca_decompose(Y, bs, A), std::nullopt);
}

inline TwoStepFit step2_penfpc(const ColumnSmoothResult& s1, const Matrix& Y, const EvaluatedBasis& bt,
                               const EvaluatedBasis& bs, Index A, double lambda_s) {
  return step2_projected(s1, Y, bt, bs, fpca_decompose(Y, bs, A), lambda_s);
}

namespace detail {

inline std::vector<double> lambda_s_grid(double lo, double hi, int count) {
  // Descending: larger lambda is the smoother, less complex fit.
  const Vector g = log_grid(lo, hi, count);
  return std::vector<double>(g.data(), g.data() + g.size());
}

inline std::vector<double> descending(std::vector<double> g) {
  std::sort(g.begin(), g.end(), std::greater<>());
  return g;
}

/// Coarse 25-point search over [1e-6, 1e6] followed by one refined pass between the
/// neighbours of the coarse minimizer.
inline CvResult cv_lambda_s(const CvFitter& fitter, const Matrix& Y, const Vector& t, const TwoStepConfig& cfg) {
  const std::vector<double> coarse = descending(lambda_s_grid(1e-6, 1e6, 25));
  const CvResult c1 = cross_validate(fitter, Y, t, coarse, cfg.cv_folds, cfg.cv_repeats, cfg.seed);
  const std::size_t b = c1.best;
  const double hi = coarse[b == 0 ? 0 : b - 1];
  const double lo = coarse[std::min(b + 1, coarse.size() - 1)];
  if (!(hi > lo)) return c1;
  const std::vector<double> fine = descending(lambda_s_grid(lo, hi, 9));
  CvResult c2 = cross_validate(fitter, Y, t, fine, cfg.cv_folds, cfg.cv_repeats, cfg.seed);
  if (c1.errors[b] < c2.errors[c2.best]) return c1;
  return c2;
}

inline std::vector<double> component_grid(Index max_a) {
  std::vector<double> g;
  for (Index a = 1; a <= max_a; ++a) g.push_back(static_cast<double>(a));
  return g;
}

}  // namespace detail

inline TwoStepFit fit_two_step(Method variant, const Matrix& Y, const Vector& t, const Vector& s,
                               const TwoStepConfig& cfg) {
  detail::check_surface_data(Y, t, s);
  if (variant != Method::two_step_pen && variant != Method::two_step_fpc && variant != Method::two_step_penfpc)
    throw SpecError("fit_two_step: not a two-step method: " + method_tag(variant));
  const EvaluatedBasis bt = build_basis(cfg.t_spec, t, cfg.t_penalty);
  const EvaluatedBasis bs = build_basis(cfg.s_spec, s, cfg.s_penalty);
  const ColumnSmoothResult s1 = step1(Y, bt, cfg.step1_lambdas);
  const Matrix& Bs = bs.design;
  const DrDecomposition dr_s = demmler_reinsch(bs);

  auto train_step1 = [&](const Matrix& ytr, const Vector& ttr) {
    const Matrix design = basis_matrix(cfg.t_spec, ttr);
    return smooth_columns(demmler_reinsch(design, bt.penalty), ytr);
  };

  if (variant == Method::two_step_pen) {
    std::optional<CvResult> cv;
    double lambda_s;
    if (cfg.lambda_s) {
      lambda_s = *cfg.lambda_s;
    } else {
      CvFitter fitter = [&](const Matrix& ytr, const Vector& ttr, const Vector& tte, const std::vector<double>& grid) {
        const ColumnSmoothResult r = train_step1(ytr, ttr);
        const Matrix bte = basis_matrix(cfg.t_spec, tte);
        const Matrix left = bte * r.coef * Bs;
        std::vector<Matrix> out;
        for (double lam : grid) out.push_back(left * detail::penalized_inverse(dr_s, lam) * Bs.transpose());
        return out;
      };
      cv = detail::cv_lambda_s(fitter, Y, t, cfg);
      lambda_s = cv->best_value();
    }
    TwoStepFit fit = step2_penalized(s1, bt, bs, lambda_s);
    fit.cv = cv;
    return fit;
  }

  const FpcaModel full = fpca_decompose(Y, bs, 0);
  auto predict_projected = [&](const ColumnSmoothResult& r, const Matrix& ytr, const Matrix& bte, const Matrix& V,
                               std::optional<double> lam) {
    const Vector ybar = ytr.colwise().mean().transpose();
    const Matrix theta = detail::projected_theta(r.coef, ybar, bs, V, detail::n_inverse(bs, V, lam));
    return Matrix(bte * theta * Bs.transpose());
  };

  if (variant == Method::two_step_fpc) {
    std::optional<CvResult> cv;
    Index A;
    if (cfg.components) {
      A = *cfg.components;
    } else {
      const Index max_a = std::min<Index>(cfg.max_components, full.rank);
      if (max_a < 1) throw DegenerateInputError("2s-fpc: no positive eigenvalues");
      CvFitter fitter = [&](const Matrix& ytr, const Vector& ttr, const Vector& tte, const std::vector<double>& grid) {
        const ColumnSmoothResult r = train_step1(ytr, ttr);
        const Matrix bte = basis_matrix(cfg.t_spec, tte);
        const Index rank = fpca_decompose(ytr, bs, 0).rank;
        const Index amax = std::min<Index>(static_cast<Index>(grid.back()), rank);
        const FpcaModel m = fpca_decompose(ytr, bs, amax);
        std::vector<Matrix> out;
        for (double a : grid)
          out.push_back(predict_projected(r, ytr, bte, m.V.leftCols(std::min<Index>(static_cast<Index>(a), amax)),
                                          std::nullopt));
        return out;
      };
      cv = cross_validate(fitter, Y, t, detail::component_grid(max_a), cfg.cv_folds, cfg.cv_repeats, cfg.seed);
      A = static_cast<Index>(cv->best_value());
    }
    TwoStepFit fit = step2_projected(s1, Y, bt, bs, fpca_decompose(Y, bs, A), std::nullopt);
    fit.cv = cv;
    return fit;
  }

  const Index A = cfg.components ? *cfg.components : components_for_variance(full, cfg.variance_share);
  const FpcaModel model = fpca_decompose(Y, bs, A);
  std::optional<CvResult> cv;
  double lambda_s;
  if (cfg.lambda_s) {
    lambda_s = *cfg.lambda_s;
  } else {
    CvFitter fitter = [&](const Matrix& ytr, const Vector& ttr, const Vector& tte, const std::vector<double>& grid) {
      const ColumnSmoothResult r = train_step1(ytr, ttr);
      const Matrix bte = basis_matrix(cfg.t_spec, tte);
      const Index rank = fpca_decompose(ytr, bs, 0).rank;
      const FpcaModel m = fpca_decompose(ytr, bs, std::min(A, rank));
      std::vector<Matrix> out;
      for (double lam : grid) out.push_back(predict_projected(r, ytr, bte, m.V, lam));
      return out;
    };
    cv = detail::cv_lambda_s(fitter, Y, t, cfg);
    lambda_s = cv->best_value();
  }
  TwoStepFit fit = step2_projected(s1, Y, bt, bs, model, lambda_s);
  fit.cv = cv;
  return fit;
}

/// Varying-smoother fit on smoothed FPC scores; A chosen by cross-validation unless given.
inline FpcScoresFit fit_fpc_scores(const Matrix& Y, const Vector& t, const Vector& s, const TwoStepConfig& cfg) {
  detail::check_surface_data(Y, t, s);
  const EvaluatedBasis bt = build_basis(cfg.t_spec, t, cfg.t_penalty);
  const EvaluatedBasis bs = build_basis(cfg.s_spec, s, cfg.s_penalty);
  const DrDecomposition dr = demmler_reinsch(bt);
  Index A;
  std::optional<CvResult> cv;
  if (cfg.components) {
    A = *cfg.components;
  } else {
    const Index max_a = std::min<Index>(cfg.max_components, fpca_decompose(Y, bs, 0).rank);
    if (max_a < 1) throw DegenerateInputError("fpc-scores: no positive eigenvalues");
    CvFitter fitter = [&](const Matrix& ytr, const Vector& ttr, const Vector& tte, const std::vector<double>& grid) {
      const Index rank = fpca_decompose(ytr, bs, 0).rank;
      const Index amax = std::min<Index>(static_cast<Index>(grid.back()), rank);
      const FpcaModel m = fpca_decompose(ytr, bs, amax);
      const DrDecomposition dtr = demmler_reinsch(basis_matrix(cfg.t_spec, ttr), bt.penalty);
      const Matrix bte = basis_matrix(cfg.t_spec, tte);
      const Matrix gte = amax > 0 ? Matrix(bte * smooth_columns(dtr, m.scores).coef) : Matrix(tte.size(), 0);
      const Matrix phi = bs.design * m.V;
      std::vector<Matrix> out;
      for (double a : grid) {
        const Index k = std::min<Index>(static_cast<Index>(a), amax);
        out.push_back(Vector::Ones(tte.size()) * m.mu.transpose() + gte.leftCols(k) * phi.leftCols(k).transpose());
      }
      return out;
    };
    cv = cross_validate(fitter, Y, t, detail::component_grid(max_a), cfg.cv_folds, cfg.cv_repeats, cfg.seed);
    A = static_cast<Index>(cv->best_value());
  }
  FpcScoresFit fit = fit_fpc_scores_with(Y, bt, bs, dr, A, std::nullopt);
  fit.cv = cv;
  return fit;
}

/// The fitted-value map of a two-step fit with every tuning choice frozen, applied to new data.
inline Matrix two_step_apply(const TwoStepFit& fit, const Matrix& Y) {
  const ColumnSmoothResult r = smooth_columns(fit.step1.dr, Y, fit.step1.lambdas);
  if (fit.method == Method::step1_only) return r.fitted;
  if (fit.method == Method::two_step_pen) return r.fitted * fit.smoother_s.transpose();
  const Matrix JY = Vector::Ones(Y.rows()) * Y.colwise().mean();
  return presmooth_project(JY, fit.basis_s) + (r.fitted - JY) * fit.smoother_s.transpose();
}

/// The fitted-value map of an fpc-scores fit with V and the score lambdas frozen.
inline Matrix fpc_scores_apply(const FpcScoresFit& fit, const Matrix& Y) {
  const EvaluatedBasis& bs = fit.basis_s;
  const Matrix& B = bs.design;
  const auto llt = cholesky_or_throw(B.transpose() * B, "fpc-scores");
  const Matrix coef = llt.solve(B.transpose() * Y.transpose()).transpose();
  const Vector mu_coef = coef.colwise().mean().transpose();
  const Matrix cc = coef.rowwise() - mu_coef.transpose();
  Matrix out = Vector::Ones(Y.rows()) * (B * mu_coef).transpose();
  if (fit.components > 0) {
    const Matrix scores = cc * bs.gram * fit.fpca.V;
    const ColumnSmoothResult g = smooth_columns(fit.score_smooth.dr, scores, fit.score_smooth.lambdas);
    out += g.fitted * (B * fit.fpca.V).transpose();
  }
  return out;
}

}  // namespace vsm
