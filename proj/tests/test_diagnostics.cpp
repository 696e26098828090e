#include "hat_oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace vsm;

namespace {

struct Small {
  Vector t, s;
  Matrix Y;
};

Small small_data(std::uint64_t seed, Index n = 12, Index L = 8) {
  Rng rng(seed);
  Small d;
  d.t.resize(n);
  for (Index i = 0; i < n; ++i) d.t(i) = rng.uniform();
  std::sort(d.t.data(), d.t.data() + n);
  d.t(0) = 0.0;
  d.t(n - 1) = 1.0;
  d.s = Vector::LinSpaced(L, 0.0, 1.0);
  d.Y.resize(n, L);
  for (Index i = 0; i < n; ++i)
    for (Index l = 0; l < L; ++l) d.Y(i, l) = std::sin(3.0 * d.t(i) + d.s(l)) + 0.3 * rng.normal();
  return d;
}

TpConfig small_tp(bool adaptive, const Vector& lambdas) {
  TpConfig c;
  c.t_spec = {0.0, 1.0, 4, 3};
  c.s_spec = {0.0, 1.0, 4, 3};
  if (adaptive) c.coarse = BasisSpec{0.0, 1.0, 4, 3};
  c.lambdas = lambdas;
  return c;
}

Matrix combined_penalty(const TpPenalty& p) {
  Matrix s = Matrix::Zero(p.blocks[0].rows(), p.blocks[0].cols());
  for (std::size_t j = 0; j < p.blocks.size(); ++j) s += p.lambdas(static_cast<Index>(j)) * p.blocks[j];
  return s;
}

Matrix tp_oracle(const VsFit& fit) {
  const Matrix S = combined_penalty(*fit.penalty);
  if (fit.precision) return oracle::tp_hat(fit.basis_t.design, fit.basis_s.design, S, &fit.precision->prec);
  return oracle::tp_hat(fit.basis_t.design, fit.basis_s.design, S);
}

PrecisionEstimate identity_precision(Index L) {
  PrecisionEstimate p;
  p.prec = Matrix::Identity(L, L);
  p.prec_sqrt = Matrix::Identity(L, L);
  p.T = Matrix::Identity(L, L);
  p.D = Vector::Ones(L);
  return p;
}

TwoStepConfig small_two_step(const Small& d, double lambda_s, Index A) {
  TwoStepConfig c;
  c.t_spec = {0.0, 1.0, 4, 3};
  c.s_spec = {0.0, 1.0, 4, 3};
  Vector lam(d.s.size());
  for (Index l = 0; l < lam.size(); ++l) lam(l) = std::pow(10.0, -3.0 + 0.7 * static_cast<double>(l));
  c.step1_lambdas = lam;
  c.lambda_s = lambda_s;
  c.components = A;
  return c;
}

Matrix two_step_oracle(const TwoStepFit& fit) {
  const Matrix& Bt = fit.basis_t.design;
  const Matrix& Pt = fit.basis_t.penalty;
  const Vector& lam = fit.step1.lambdas;
  if (fit.method == Method::step1_only) {
    const Index L = lam.size();
    return oracle::two_step_hat(Bt, Pt, lam, Matrix::Identity(L, L));
  }
  if (fit.method == Method::two_step_pen)
    return oracle::two_step_hat(Bt, Pt, lam, oracle::s_smoother_pen(fit.basis_s, *fit.lambda_s));
  const Matrix& B = fit.basis_s.design;
  const Matrix Pb = B * oracle::solve(B.transpose() * B, B.transpose());
  const Matrix Sm = oracle::s_smoother_proj(fit.basis_s, fit.fpca->V, fit.lambda_s.value_or(0.0));
  return oracle::two_step_hat(Bt, Pt, lam, Sm, &Pb);
}

}  // namespace

TEST(DfTensor, AllBranchesMatchDenseOracle) {
  const Small d = small_data(1);
  const Index n = 12, L = 8;
  Rng rng(5);
  const PrecisionEstimate prec = banded_precision(oracle::random_matrix(rng, 30, L), 2);
  for (bool adaptive : {false, true})
    for (bool gls : {false, true}) {
      Vector lam(adaptive ? 5 : 2);
      for (Index j = 0; j < lam.size(); ++j) lam(j) = std::pow(10.0, -1.0 + 0.8 * static_cast<double>(j));
      const TpConfig cfg = small_tp(adaptive, lam);
      const VsFit fit = gls ? fit_tp_gls(d.Y, d.t, d.s, prec, cfg) : fit_tp_ols(d.Y, d.t, d.s, cfg);
      SCOPED_TRACE(method_tag(fit.method));
      const Matrix H = tp_oracle(fit);
      const Vector want = oracle::block_trace_df(H, n, L);
      const Vector got = pointwise_df_tp(fit).d;
      EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LT((assemble_hat(frozen_map(fit), n, L) - H).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LT((oracle::vec(fit.fitted) - H * oracle::vec(d.Y)).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(DfTensor, IdentityPrecisionMatchesOls) {
  const Small d = small_data(2);
  const TpConfig cfg = small_tp(false, (Vector(2) << 0.3, 2.0).finished());
  const VsFit ols = fit_tp_ols(d.Y, d.t, d.s, cfg);
  const VsFit gls = fit_tp_gls(d.Y, d.t, d.s, identity_precision(8), cfg);
  EXPECT_LT((pointwise_df_tp(ols).d - pointwise_df_tp(gls).d).cwiseAbs().maxCoeff(), 1e-10);
  VsFit bare = ols;
  bare.penalty.reset();
  EXPECT_THROW(pointwise_df_tp(bare), SpecError);
}

TEST(DfFpcScores, MatchesFrozenOracle) {
  const Small d = small_data(3, 10, 8);
  const EvaluatedBasis bt = build_basis({0.0, 1.0, 4, 3}, d.t);
  const EvaluatedBasis bs = build_basis({0.0, 1.0, 4, 3}, d.s);
  const DrDecomposition dr = demmler_reinsch(bt);
  const Vector score_lam = (Vector(2) << 0.05, 3.0).finished();
  const FpcScoresFit fit = fit_fpc_scores_with(d.Y, bt, bs, dr, 2, score_lam);
  const Matrix H = oracle::fpc_scores_hat(bt.design, bt.penalty, bs, fit.fpca.V, score_lam);
  EXPECT_LT((pointwise_df_fpc(fit).d - oracle::block_trace_df(H, 10, 8)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((assemble_hat(frozen_map(fit), 10, 8) - H).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((oracle::vec(fit.fitted) - H * oracle::vec(d.Y)).cwiseAbs().maxCoeff(), 1e-8);

  const FpcScoresFit none = fit_fpc_scores_with(d.Y, bt, bs, dr, 0);
  EXPECT_EQ(pointwise_df_fpc(none).d, Vector::Ones(8));
}

TEST(DfFpcScores, HeavyScoreSmoothingLimit) {
  // With lambda -> infinity each centered score smooth keeps only the centered linear
  // trend in t, which has trace 1, so d - 1 = sum_a (B_s v_a) (1^T Q_s v_a).
  const Small d = small_data(4, 10, 8);
  const EvaluatedBasis bt = build_basis({0.0, 1.0, 4, 3}, d.t);
  const EvaluatedBasis bs = build_basis({0.0, 1.0, 4, 3}, d.s);
  const Vector lam = Vector::Constant(2, 1e12);
  const FpcScoresFit fit = fit_fpc_scores_with(d.Y, bt, bs, demmler_reinsch(bt), 2, lam);
  const Vector got = pointwise_df_fpc(fit).d;
  const Matrix H = oracle::fpc_scores_hat(bt.design, bt.penalty, bs, fit.fpca.V, lam);
  EXPECT_LT((got - oracle::block_trace_df(H, 10, 8)).cwiseAbs().maxCoeff(), 1e-6);
  Vector limit = Vector::Ones(8);
  for (Index a = 0; a < 2; ++a) {
    const Matrix& V = fit.fpca.V;
    limit += (bs.design * V.col(a)) * (Vector::Ones(4).transpose() * bs.gram * V.col(a));
  }
  EXPECT_LT((got - limit).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DfTwoStep, AllVariantsMatchDenseOracle) {
  const Small d = small_data(5, 10, 8);
  for (Method m : {Method::two_step_pen, Method::two_step_fpc, Method::two_step_penfpc}) {
    SCOPED_TRACE(method_tag(m));
    const TwoStepFit fit = fit_two_step(m, d.Y, d.t, d.s, small_two_step(d, 0.7, 2));
    const Matrix H = two_step_oracle(fit);
    const DfReport r = pointwise_df_twostep(fit);
    EXPECT_LT((r.d - oracle::block_trace_df(H, 10, 8)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((assemble_hat(frozen_map(fit), 10, 8) - H).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((oracle::vec(fit.fitted) - H * oracle::vec(d.Y)).cwiseAbs().maxCoeff(), 1e-8);
    // step-1 df is the Demmler-Reinsch shrinkage sum per column
    for (Index l = 0; l < 8; ++l) {
      const double want = (1.0 + fit.step1.lambdas(l) * fit.step1.dr.tau.array()).inverse().sum();
      EXPECT_NEAR((*r.d_step1)(l), want, 1e-12);
      EXPECT_NEAR((*r.d_step1)(l), oracle::ridge_smoother(fit.basis_t.design, fit.basis_t.penalty,
                                                          fit.step1.lambdas(l)).trace(), 1e-8);
    }
  }
}

TEST(DfTwoStep, PenalizedVariantSmoothsStepOneDf) {
  const Small d = small_data(6, 10, 8);
  const TwoStepFit fit = fit_two_step(Method::two_step_pen, d.Y, d.t, d.s, small_two_step(d, 0.2, 2));
  const DfReport r = pointwise_df_twostep(fit);
  const Vector d1 = fit.step1.shrink.transpose() * Vector::Ones(4);
  EXPECT_LT((r.d - oracle::s_smoother_pen(fit.basis_s, 0.2) * d1).cwiseAbs().maxCoeff(), 1e-10);

  ModelConfig cfg;
  cfg.kt = 4;
  cfg.ks = 4;
  cfg.lambda_t = 0.4;
  const auto sep = fit_method(Method::step1_only, d.Y, d.t, d.s, cfg);
  const DfReport rs = pointwise_df(*sep);
  EXPECT_EQ(rs.d, *rs.d_step1);
  const Matrix H = two_step_oracle(dynamic_cast<const TwoStepFit&>(*sep));
  EXPECT_LT((rs.d - oracle::block_trace_df(H, 10, 8)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(DfTwoStep, ProjectionWithConstantInSpanReducesToSmootherForm) {
  const Small d = small_data(7, 10, 8);
  const EvaluatedBasis bt = build_basis({0.0, 1.0, 4, 3}, d.t);
  const EvaluatedBasis bs = build_basis({0.0, 1.0, 4, 3}, d.s);
  const ColumnSmoothResult s1 = step1(d.Y, bt, Vector::Constant(8, 0.3));
  FpcaModel model = fpca_decompose(d.Y, bs, 2);
  // first column spans the constant function (B-splines sum to one)
  model.V.col(0) = Vector::Ones(4);
  for (std::optional<double> lam : {std::optional<double>{}, std::optional<double>{0.5}}) {
    const TwoStepFit fit = step2_projected(s1, d.Y, bt, bs, model, lam);
    const Vector d1 = fit.step1.shrink.transpose() * Vector::Ones(4);
    const Matrix Hs = oracle::s_smoother_proj(bs, model.V, lam.value_or(0.0));
    const Vector one = Vector::Ones(8);
    if (!lam) {
      EXPECT_LT((Hs * one - one).cwiseAbs().maxCoeff(), 1e-9);
    }
    const Vector via_general = pointwise_df_twostep(fit).d;
    EXPECT_LT((via_general - (one + Hs * (d1 - one))).cwiseAbs().maxCoeff(), 1e-9);
    if (!lam) {
      EXPECT_LT((via_general - Hs * d1).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(DfVaryingCoefficient, EqualsNumberOfCovariates) {
  Rng rng(8);
  const Index n = 15, L = 9;
  const EvaluatedBasis bs = build_basis({0.0, 1.0, 5, 3}, Vector::LinSpaced(L, 0.0, 1.0));
  for (Index p : {1, 2, 4}) {
    for (int rep = 0; rep < 5; ++rep) {
      Matrix X = oracle::random_matrix(rng, n, p);
      X.col(0).setOnes();
      if (p == 2) X.col(1) = Vector::LinSpaced(n, 0.0, 1.0);
      Vector lam(p);
      for (Index j = 0; j < p; ++j) lam(j) = std::pow(10.0, -3.0 + 6.0 * rng.uniform());
      const Matrix prec = oracle::solve(oracle::random_spd(rng, L), Matrix::Identity(L, L));
      const Vector dvc = pointwise_df_vc(X, bs, lam, prec).d;
      EXPECT_LT((dvc.array() - static_cast<double>(p)).abs().maxCoeff(), 1e-7) << "p = " << p;
    }
  }
  EXPECT_THROW(pointwise_df_vc(Matrix::Ones(n, 2), bs, Vector::Ones(1), Matrix::Identity(L, L)), DimensionError);
}

TEST(Leverage, ColumnSumsSeparateSmoothsAndDuplicates) {
  const Small d = small_data(9, 10, 8);
  const TwoStepFit fit = fit_two_step(Method::two_step_pen, d.Y, d.t, d.s, small_two_step(d, 0.5, 2));
  const Matrix lev = pointwise_leverage(frozen_map(fit), 10, 8);
  EXPECT_LT((lev.colwise().sum().transpose() - pointwise_df(fit).d).cwiseAbs().maxCoeff(), 1e-8);

  ModelConfig cfg;
  cfg.kt = 4;
  cfg.ks = 4;
  cfg.lambda_t = 0.1;
  const auto sep = fit_method(Method::step1_only, d.Y, d.t, d.s, cfg);
  const Matrix lev_sep = pointwise_leverage(frozen_map(*sep), 10, 8);
  const Matrix Hl = oracle::ridge_smoother(sep->basis_t.design, sep->basis_t.penalty, 0.1);
  for (Index l = 0; l < 8; ++l) EXPECT_LT((lev_sep.col(l) - Hl.diagonal()).cwiseAbs().maxCoeff(), 1e-9);

  // duplicating a row shares its influence: leverage of the original drops everywhere
  const Small nine = small_data(10, 9, 8);
  Small ten = nine;
  ten.t.conservativeResize(10);
  ten.t(9) = nine.t(4);
  ten.Y.conservativeResize(10, 8);
  ten.Y.row(9) = nine.Y.row(4);
  auto lev_of = [](const Small& x) {
    TwoStepConfig c;
    c.t_spec = {0.0, 1.0, 4, 3};
    c.s_spec = {0.0, 1.0, 4, 3};
    c.step1_lambdas = Vector::Constant(8, 0.05);
    c.lambda_s = 0.5;
    const TwoStepFit f = fit_two_step(Method::two_step_pen, x.Y, x.t, x.s, c);
    return pointwise_leverage(frozen_map(f), x.Y.rows(), 8);
  };
  const Matrix l9 = lev_of(nine), l10 = lev_of(ten);
  for (Index l = 0; l < 8; ++l) EXPECT_LT(l10(4, l), l9(4, l));
}

TEST(FunctionalR2, Definition) {
  const Small d = small_data(11);
  EXPECT_DOUBLE_EQ(functional_r2(d.Y, d.Y, d.s), 1.0);
  const Matrix ybar = Vector::Ones(12) * d.Y.colwise().mean();
  EXPECT_NEAR(functional_r2(d.Y, ybar, d.s), 0.0, 1e-14);
  EXPECT_THROW(functional_r2(Matrix::Ones(4, 8), Matrix::Ones(4, 8), d.s), DegenerateInputError);
  EXPECT_THROW(functional_r2(d.Y, ybar.leftCols(7), d.s), DimensionError);
  // trapezoid weights on an even grid: ends get half weight
  const Vector w = trapezoid_weights(Vector::LinSpaced(5, 0.0, 1.0));
  EXPECT_NEAR(w(0), 0.125, 1e-15);
  EXPECT_NEAR(w(2), 0.25, 1e-15);
  EXPECT_NEAR(w.sum(), 1.0, 1e-15);
}

TEST(IseMetrics, TrivialCasesAndFineGridOracle) {
  Rng rng(12);
  const BasisSpec ts{0.0, 1.0, 6, 3}, ss{0.0, 1.0, 5, 3};
  const Matrix theta = oracle::random_matrix(rng, 6, 5);
  const SurfaceModel model{ts, theta, [ss](const Vector& s) { return basis_matrix(ss, s); }};
  auto fhat = [&](double t, double s) {
    return (basis_matrix(ts, Vector::Constant(1, t)) * theta * basis_matrix(ss, Vector::Constant(1, s)).transpose())(0, 0);
  };
  auto fhat_dt = [&](double t, double s) {
    return (basis_matrix(ts, Vector::Constant(1, t), 1) * theta * basis_matrix(ss, Vector::Constant(1, s)).transpose())(0, 0);
  };
  const IseResult self = ise_metrics(model, fhat, fhat_dt, 0.0, 1.0);
  EXPECT_LT(self.f, 1e-12);
  EXPECT_LT(self.dfdt, 1e-12);

  const SurfaceModel zero{ts, Matrix::Zero(6, 5), [ss](const Vector& s) { return basis_matrix(ss, s); }};
  const IseResult one = ise_metrics(zero, [](double, double) { return 1.0; }, [](double, double) { return 0.0; }, 0.0, 1.0);
  EXPECT_NEAR(one.f, 1.0, 1e-12);
  EXPECT_NEAR(one.dfdt, 0.0, 1e-15);

  auto truth = [](double t, double s) { return std::sin(3 * t) * std::cos(2 * s) + t * s; };
  auto truth_dt = [](double t, double s) { return 3 * std::cos(3 * t) * std::cos(2 * s) + s; };
  const IseResult got = ise_metrics(model, truth, truth_dt, 0.0, 1.0);
  // midpoint rule; at 200 x 200 the rule itself is only good to ~1e-4 here, so 2000 x 2000
  const int g = 2000;
  const Vector mid = (Vector::LinSpaced(g, 0.0, g - 1.0).array() + 0.5) / g;
  const Matrix est = basis_matrix(ts, mid) * theta * basis_matrix(ss, mid).transpose();
  const Matrix est_dt = basis_matrix(ts, mid, 1) * theta * basis_matrix(ss, mid).transpose();
  double ref_f = 0.0, ref_d = 0.0;
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      ref_f += std::pow(est(i, j) - truth(mid(i), mid(j)), 2);
      ref_d += std::pow(est_dt(i, j) - truth_dt(mid(i), mid(j)), 2);
    }
  ref_f /= g * g;
  ref_d /= g * g;
  EXPECT_NEAR(got.f, ref_f, 1e-5 * ref_f);
  EXPECT_NEAR(got.dfdt, ref_d, 1e-5 * ref_d);
}

TEST(ConfidenceBands, VectorizedMatchesPointwiseAndGuards) {
  const Small d = small_data(13, 12, 8);
  const TwoStepFit fit = fit_two_step(Method::two_step_pen, d.Y, d.t, d.s, small_two_step(d, 0.4, 2));
  Rng rng(14);
  const Matrix sigma = oracle::random_spd(rng, 8);
  const Vector te = Vector::LinSpaced(5, 0.05, 0.95), se = Vector::LinSpaced(6, 0.0, 1.0);
  const CiResult ci = ci_twostep(fit, sigma, te, se);
  const Matrix T = ci_transform_matrix(fit, sigma);
  const Matrix bt = basis_matrix(fit.basis_t.spec, te), bs = basis_matrix(fit.basis_s.spec, se);
  for (Index g = 0; g < te.size(); ++g)
    for (Index h = 0; h < se.size(); ++h) {
      const Vector b = oracle::kron(bs.row(h).transpose(), bt.row(g).transpose());
      const double v = (T * b).squaredNorm();
      EXPECT_NEAR(ci.var(g, h), v, 1e-10 * std::max(1.0, v));
      const double f = (bt.row(g) * (*fit.theta) * bs.row(h).transpose())(0, 0);
      EXPECT_NEAR(ci.fhat(g, h), f, 1e-10);
      EXPECT_NEAR(ci.upper(g, h) - ci.fhat(g, h), 2.0 * std::sqrt(v), 1e-8);
    }
  const Index L = 8;
  const CiResult zero = ci_twostep(fit, Matrix::Zero(L, L), te, se);
  EXPECT_EQ(zero.var.cwiseAbs().maxCoeff(), 0.0);
  Matrix bad = sigma;
  bad(0, 0) = -5.0;
  EXPECT_THROW(ci_twostep(fit, bad, te, se), ConditioningError);
  const TwoStepFit fpc = fit_two_step(Method::two_step_fpc, d.Y, d.t, d.s, small_two_step(d, 0.4, 2));
  EXPECT_THROW(ci_twostep(fpc, sigma, te, se), SpecError);
}

TEST(ConfidenceBands, VarianceMatchesFrozenLinearMap) {
  // f^(t, s) = sum_i sum_l c_{il} y_{il} with c from the frozen map; curves independent with
  // covariance Sigma gives Var = sum_i c_i^T Sigma c_i.
  const Small d = small_data(15, 12, 8);
  const TwoStepFit fit = fit_two_step(Method::two_step_pen, d.Y, d.t, d.s, small_two_step(d, 0.4, 2));
  Rng rng(16);
  const Matrix sigma = oracle::random_spd(rng, 8);
  const Vector te = (Vector(2) << 0.3, 0.8).finished(), se = (Vector(2) << 0.25, 0.6).finished();
  const CiResult ci = ci_twostep(fit, sigma, te, se);
  const Matrix bt = basis_matrix(fit.basis_t.spec, te), bs = basis_matrix(fit.basis_s.spec, se);
  const Matrix BsHinv = fit.basis_s.design * oracle::solve(
      fit.basis_s.design.transpose() * fit.basis_s.design + *fit.lambda_s * fit.basis_s.penalty, Matrix::Identity(4, 4));
  for (Index g = 0; g < 2; ++g)
    for (Index h = 0; h < 2; ++h) {
      Matrix c(12, 8);
      for (Index l = 0; l < 8; ++l) {
        const Matrix& Bt = fit.basis_t.design;
        const Matrix cm = oracle::solve(Bt.transpose() * Bt + fit.step1.lambdas(l) * fit.basis_t.penalty, Bt.transpose());
        const double ws = (BsHinv.row(l) * bs.row(h).transpose())(0, 0);
        c.col(l) = ws * (bt.row(g) * cm).transpose();
      }
      double v = 0.0;
      for (Index i = 0; i < 12; ++i) v += c.row(i) * sigma * c.row(i).transpose();
      EXPECT_NEAR(ci.var(g, h), v, 1e-8 * v);
    }
}

TEST(Lemmas, BlockTraceAndHadamardVec) {
  Rng rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix A = oracle::random_matrix(rng, 6, 6), B = oracle::random_matrix(rng, 5, 5);
    const Vector d = df_from_hat(kron(A, B), 5, 6);
    EXPECT_LT((d - B.trace() * A * Vector::Ones(6)).cwiseAbs().maxCoeff(), 1e-10);
    const Matrix Q = oracle::random_matrix(rng, 4, 3), R = oracle::random_matrix(rng, 4, 7),
                 S = oracle::random_matrix(rng, 7, 3);
    const Vector lhs = vec(Q.cwiseProduct(R * S));
    const Vector rhs = vec(Q).asDiagonal() * (kron(Matrix::Identity(3, 3), R) * vec(S));
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(HatAssembly, SizeGuards) {
  auto id = [](const Matrix& Y) { return Y; };
  EXPECT_THROW(assemble_hat(id, 100, 41), SpecError);
  EXPECT_THROW(df_from_hat(Matrix::Zero(4, 4), 2, 3), DimensionError);
  const Matrix H = assemble_hat(id, 3, 2);
  EXPECT_EQ(df_from_hat(H, 3, 2), Vector::Constant(2, 3.0));
}
