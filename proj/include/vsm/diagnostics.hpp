#pragma once

// Pointwise degrees of freedom and leverage, functional R^2, integrated squared
// error against a known surface, and pointwise variance bands for the
// penalized two-step fit.

#include "vsm/basis.hpp"
#include "vsm/common.hpp"
#include "vsm/fpca.hpp"
#include "vsm/linalg.hpp"
#include "vsm/smoothcore.hpp"
#include "vsm/tensorfit.hpp"
#include "vsm/twostep.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace vsm {

struct DfReport {
  Vector d;                       ///< pointwise df on the s grid
  std::optional<Vector> d_step1;  ///< step-1 df per column (two-step methods)
};

/// Y -> fitted values with every tuning choice frozen.
using LinearFitMap = std::function<Matrix(const Matrix&)>;

/// Tensor-product fits (OLS, GLS, adaptive): d = B_s w with
/// w_j = sum_{i,k} (B_t)_{ik} M_{i,(j,k)}, M = [(1^T W B_s) x B_t] (G + P)^{-1}.
inline DfReport pointwise_df_tp(const VsFit& fit) {
  if (!fit.penalty) throw SpecError("pointwise_df_tp: fit carries no tensor penalty");
  const Matrix& bt = fit.basis_t.design;
  const Matrix& bs = fit.basis_s.design;
  const Index kt = bt.cols(), ks = bs.cols(), L = bs.rows();
  const TpOperator op(fit);
  const Vector c = fit.precision ? Vector(bs.transpose() * (fit.precision->prec * Vector::Ones(L)))
                                 : Vector(bs.transpose() * Vector::Ones(L));
  const Matrix mt = op.llt().solve(kron(c, bt.transpose()));  // (K_s K_t) x n
  Vector w(ks);
  for (Index j = 0; j < ks; ++j) w(j) = (mt.middleRows(j * kt, kt).transpose().cwiseProduct(bt)).sum();
  return {bs * w, std::nullopt};
}

/// Smoothed FPC scores: d = 1 + [(B_s V) . (1 1^T Q_s^T V)] M*^T (A_t^T . A_t^{cT}) 1.
inline DfReport pointwise_df_fpc(const FpcScoresFit& fit) {
  const Matrix& bs = fit.basis_s.design;
  const Index L = bs.rows();
  Vector d = Vector::Ones(L);
  if (fit.components == 0) return {d, std::nullopt};
  const Matrix& V = fit.fpca.V;
  const Matrix& At = fit.score_smooth.dr.A;
  const Matrix atc = At.rowwise() - At.colwise().mean();
  const Vector w = At.cwiseProduct(atc).colwise().sum().transpose();
  const Eigen::RowVectorXd qv = Eigen::RowVectorXd::Ones(bs.cols()) * fit.basis_s.gram.transpose() * V;
  const Matrix left = (bs * V).array().rowwise() * qv.array();
  d += left * (fit.score_smooth.shrink.transpose() * w);
  return {d, std::nullopt};
}

/// Two-step fits: step-1 df d~ = M^T 1, then H_s d~ (penalized) or 1 + Pi (d~ - 1) (projections).
inline DfReport pointwise_df_twostep(const TwoStepFit& fit) {
  const Vector d1 = fit.step1.shrink.colwise().sum().transpose();
  DfReport r;
  r.d_step1 = d1;
  if (fit.method == Method::two_step_pen) {
    r.d = fit.smoother_s * d1;
  } else {
    const Vector one = Vector::Ones(d1.size());
    r.d = one + fit.smoother_s * (d1 - one);
  }
  return r;
}

/// Varying-coefficient model Y = X Theta B_s^T + E fitted by penalized GLS with penalty
/// P_s x diag(lambdas); df traced from the hat matrix without using its closed form.
inline DfReport pointwise_df_vc(const Matrix& X, const EvaluatedBasis& bs, const Vector& lambdas,
                                const Matrix& precision) {
  const Index p = X.cols(), ks = bs.size(), L = bs.design.rows();
  if (lambdas.size() != p) throw DimensionError("pointwise_df_vc: one lambda per covariate required");
  if (precision.rows() != L || precision.cols() != L) throw DimensionError("pointwise_df_vc: precision size");
  const Matrix& B = bs.design;
  Matrix lhs = kron(B.transpose() * precision * B, X.transpose() * X) + kron(bs.penalty, Matrix(lambdas.asDiagonal()));
  const auto llt = cholesky_or_throw(0.5 * (lhs + lhs.transpose()), "pointwise_df_vc");
  const Vector c = B.transpose() * (precision * Vector::Ones(L));
  const Matrix rm = llt.solve(kron(c, X.transpose()));  // (K_s p) x n
  Vector w(ks);
  for (Index j = 0; j < ks; ++j) w(j) = (X * rm.middleRows(j * p, p)).trace();
  return {B * w, std::nullopt};
}

inline DfReport pointwise_df(const VsFit& fit) {
  if (const auto* f = dynamic_cast<const FpcScoresFit*>(&fit)) return pointwise_df_fpc(*f);
  if (const auto* f = dynamic_cast<const TwoStepFit*>(&fit)) return pointwise_df_twostep(*f);
  return pointwise_df_tp(fit);
}

inline LinearFitMap frozen_map(const VsFit& fit) {
  if (const auto* f = dynamic_cast<const FpcScoresFit*>(&fit)) {
    const FpcScoresFit copy = *f;
    return [copy](const Matrix& Y) { return fpc_scores_apply(copy, Y); };
  }
  if (const auto* f = dynamic_cast<const TwoStepFit*>(&fit)) {
    const TwoStepFit copy = *f;
    return [copy](const Matrix& Y) { return two_step_apply(copy, Y); };
  }
  auto op = std::make_shared<TpOperator>(fit);
  return [op](const Matrix& Y) { return op->apply(Y); };
}

inline constexpr Index kMaxHatSize = 4000;
inline constexpr Index kMaxLeverageCells = 4'000'000;

/// Dense hat matrix H with vec(Yhat) = H vec(Y), assembled column by column.
inline Matrix assemble_hat(const LinearFitMap& map, Index n, Index L) {
  if (n * L > kMaxHatSize)
    throw SpecError("assemble_hat: nL = " + std::to_string(n * L) + " exceeds " + std::to_string(kMaxHatSize));
  Matrix H(n * L, n * L);
  for (Index l = 0; l < L; ++l)
    for (Index i = 0; i < n; ++i) {
      Matrix e = Matrix::Zero(n, L);
      e(i, l) = 1.0;
      H.col(l * n + i) = vec(map(e));
    }
  return H;
}

/// d_l = tr[(e_l^T x I_n) H (1_L x I_n)].
inline Vector df_from_hat(const Matrix& H, Index n, Index L) {
  if (H.rows() != n * L || H.cols() != n * L) throw DimensionError("df_from_hat: size mismatch");
  Vector d = Vector::Zero(L);
  for (Index l = 0; l < L; ++l)
    for (Index m = 0; m < L; ++m) d(l) += H.block(l * n, m * n, n, n).trace();
  return d;
}

/// Entry (i, l) is sum over l* of dYhat_{il} / dY_{il*}, the pointwise leverage.
inline Matrix pointwise_leverage(const LinearFitMap& map, Index n, Index L) {
  if (n * L > kMaxLeverageCells) throw SpecError("pointwise_leverage: n * L exceeds the desk-scale cap");
  Matrix lev(n, L);
  for (Index i = 0; i < n; ++i) {
    Matrix e = Matrix::Zero(n, L);
    e.row(i).setOnes();
    lev.row(i) = map(e).row(i);
  }
  return lev;
}

/// Trapezoid weights on a sorted grid.
inline Vector trapezoid_weights(const Vector& s) {
  const Index L = s.size();
  Vector w = Vector::Zero(L);
  for (Index l = 0; l + 1 < L; ++l) {
    const double h = s(l + 1) - s(l);
    w(l) += 0.5 * h;
    w(l + 1) += 0.5 * h;
  }
  return w;
}

/// 1 - sum_i int (y_i - f_i)^2 ds / sum_i int (y_i - ybar)^2 ds, trapezoid rule in s.
inline double functional_r2(const Matrix& Y, const Matrix& F, const Vector& s) {
  if (Y.rows() != F.rows() || Y.cols() != F.cols() || Y.cols() != s.size())
    throw DimensionError("functional_r2: shape mismatch");
  const Vector w = trapezoid_weights(s);
  const Matrix centered = Y.rowwise() - Y.colwise().mean();
  const double den = (centered.array().square().rowwise() * w.transpose().array()).sum();
  if (!(den > 0.0)) throw DegenerateInputError("functional_r2: responses have no variation");
  const double num = ((Y - F).array().square().rowwise() * w.transpose().array()).sum();
  return 1.0 - num / den;
}

/// A fitted surface f(t, s) = b_t(t)^T coef w(s), w(s) given per s point.
struct SurfaceModel {
  BasisSpec t_spec;
  Matrix coef;  ///< K_t x m
  std::function<Matrix(const Vector&)> s_weights;
};

inline SurfaceModel tensor_surface(const VsFit& fit) {
  if (!fit.theta) throw SpecError("tensor_surface: fit has no coefficient matrix");
  const BasisSpec s_spec = fit.basis_s.spec;
  return {fit.basis_t.spec, *fit.theta, [s_spec](const Vector& s) { return basis_matrix(s_spec, s); }};
}

/// Linear interpolation across the s grid of per-column spline coefficients.
inline SurfaceModel interpolated_surface(const BasisSpec& t_spec, const Matrix& coef, const Vector& grid) {
  return {t_spec, coef, [grid](const Vector& s) {
            Matrix w = Matrix::Zero(s.size(), grid.size());
            for (Index i = 0; i < s.size(); ++i) {
              const double x = std::clamp(s(i), grid(0), grid(grid.size() - 1));
              const auto it = std::upper_bound(grid.data(), grid.data() + grid.size(), x);
              Index hi = std::min<Index>(it - grid.data(), grid.size() - 1);
              const Index lo = std::max<Index>(hi - 1, 0);
              if (hi == lo) {
                w(i, lo) = 1.0;
                continue;
              }
              const double a = (x - grid(lo)) / (grid(hi) - grid(lo));
              w(i, lo) = 1.0 - a;
              w(i, hi) = a;
            }
            return w;
          }};
}

struct IseResult {
  double f = 0.0;
  double dfdt = 0.0;
};

using SurfaceFn = std::function<double(double, double)>;

/// Integrated squared errors of the surface and its t-derivative on [t] x [s], by
/// composite Gauss-Legendre with `panels` panels of `nodes` points per axis.
inline IseResult ise_metrics(const SurfaceModel& model, const SurfaceFn& truth, const SurfaceFn& truth_dt,
                             double s_lo, double s_hi, int panels = 20, int nodes = 8) {
  const Quadrature qt = composite_gauss(model.t_spec.domain_lo, model.t_spec.domain_hi, panels, nodes);
  const Quadrature qs = composite_gauss(s_lo, s_hi, panels, nodes);
  const Vector tn = Eigen::Map<const Vector>(qt.nodes.data(), qt.nodes.size());
  const Vector sn = Eigen::Map<const Vector>(qs.nodes.data(), qs.nodes.size());
  const Matrix ws = model.s_weights(sn);
  const Matrix est = basis_matrix(model.t_spec, tn) * model.coef * ws.transpose();
  const Matrix est_dt = basis_matrix(model.t_spec, tn, 1) * model.coef * ws.transpose();
  IseResult r;
  for (Index i = 0; i < tn.size(); ++i)
    for (Index j = 0; j < sn.size(); ++j) {
      const double w = qt.weights[i] * qs.weights[j];
      const double e0 = est(i, j) - truth(tn(i), sn(j));
      const double e1 = est_dt(i, j) - truth_dt(tn(i), sn(j));
      r.f += w * e0 * e0;
      r.dfdt += w * e1 * e1;
    }
  return r;
}

struct CiResult {
  Vector t;
  Vector s;
  Matrix fhat;   ///< |t| x |s|
  Matrix var;
  Matrix lower;
  Matrix upper;
};

/// Sample covariance of the step-1 residuals Y - Y~, shrunk toward its diagonal.
inline Matrix default_ci_covariance(const TwoStepFit& fit, const Matrix& Y, double shrink = 0.1) {
  const Matrix r = Y - fit.step1.fitted;
  const Matrix rc = r.rowwise() - r.colwise().mean();
  const Matrix S = rc.transpose() * rc / static_cast<double>(std::max<Index>(Y.rows() - 1, 1));
  Matrix out = (1.0 - shrink) * S;
  out.diagonal() += shrink * S.diagonal();
  return out;
}

/// T = (Sigma^{1/2} x I_{K_t}) D_M [B_s (B_s^T B_s + lambda_s P_s)^{-1} x U^T R^{-T}],
/// so that Var f^(t, s) = ||T (b_s(s) x b_t(t))||^2. D_M is indexed by (k, l) -> l K_t + k.
inline Matrix ci_transform_matrix(const TwoStepFit& fit, const Matrix& sigma) {
  if (fit.method != Method::two_step_pen || !fit.lambda_s)
    throw SpecError("confidence bands are available for 2s-pen fits only");
  const Matrix& M = fit.step1.shrink;
  const Index kt = M.rows();
  const Matrix right = kron(fit.basis_s.design * detail::penalized_inverse(fit.basis_s, *fit.lambda_s),
                            fit.step1.dr.coef_map().transpose());
  const Vector dm = vec(M);
  return kron(sym_sqrt(sigma), Matrix::Identity(kt, kt)) * (dm.asDiagonal() * right);
}

/// Pointwise variance and z-bands for a 2s-pen fit on the product grid t x s,
/// from column squared norms of T (B_s* x B_t*)^T, using its Kronecker structure.
inline CiResult ci_twostep(const TwoStepFit& fit, const Matrix& sigma, const Vector& t_eval, const Vector& s_eval,
                           double z = 2.0) {
  if (fit.method != Method::two_step_pen || !fit.lambda_s)
    throw SpecError("confidence bands are available for 2s-pen fits only");
  const Matrix& M = fit.step1.shrink;
  const Index kt = M.rows(), L = M.cols();
  if (sigma.rows() != L || sigma.cols() != L) throw DimensionError("ci: covariance must be L x L");
  {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sigma + sigma.transpose()), Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().minCoeff() < -1e-10 * top) throw ConditioningError("ci: covariance is not positive semi-definite");
  }
  const Matrix bt_star = basis_matrix(fit.basis_t.spec, t_eval);
  const Matrix bs_star = basis_matrix(fit.basis_s.spec, s_eval);
  const Matrix t1 = fit.step1.dr.coef_map().transpose() * bt_star.transpose();  // K_t x G
  const Matrix s1 = fit.basis_s.design * detail::penalized_inverse(fit.basis_s, *fit.lambda_s) * bs_star.transpose();
  Matrix zk(kt, s_eval.size());
  for (Index k = 0; k < kt; ++k) {
    const Matrix gk = M.row(k).transpose().asDiagonal() * s1;  // L x H
    zk.row(k) = (gk.cwiseProduct(sigma * gk)).colwise().sum();
  }
  CiResult r;
  r.t = t_eval;
  r.s = s_eval;
  r.var = t1.cwiseAbs2().transpose() * zk;
  r.fhat = bt_star * (*fit.theta) * bs_star.transpose();
  const Matrix half = z * r.var.cwiseMax(0.0).cwiseSqrt();
  r.lower = r.fhat - half;
  r.upper = r.fhat + half;
  return r;
}

}  // namespace vsm
