#pragma once

// Bivariate tensor-product spline fits of a response surface with separate
// roughness penalties in t and s, ordinary or generalized least squares, with
// smoothing parameters chosen by restricted maximum likelihood.

#include "vsm/basis.hpp"
#include "vsm/common.hpp"
#include "vsm/covest.hpp"
#include "vsm/linalg.hpp"
#include "vsm/smoothcore.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace vsm {

enum class Method {
  tp_ols,
  tp_gls,
  tp_ols_adapt,
  tp_gls_adapt,
  fpc_scores,
  two_step_pen,
  two_step_fpc,
  two_step_penfpc,
  step1_only,
};

inline std::string method_tag(Method m) {
  switch (m) {
    case Method::tp_ols: return "tp-ols";
    case Method::tp_gls: return "tp-gls";
    case Method::tp_ols_adapt: return "tp-ols-adapt";
    case Method::tp_gls_adapt: return "tp-gls-adapt";
    case Method::fpc_scores: return "fpc-scores";
    case Method::two_step_pen: return "2s-pen";
    case Method::two_step_fpc: return "2s-fpc";
    case Method::two_step_penfpc: return "2s-penfpc";
    case Method::step1_only: return "step1-only";
  }
  return "?";
}

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::tp_ols,       Method::tp_gls,       Method::tp_ols_adapt,
                                     Method::tp_gls_adapt, Method::fpc_scores,   Method::two_step_pen,
                                     Method::two_step_fpc, Method::two_step_penfpc, Method::step1_only};
  return m;
}

inline Method parse_method(const std::string& tag) {
  for (Method m : all_methods())
    if (method_tag(m) == tag) return m;
  throw SpecError("unknown method '" + tag + "'");
}

inline bool is_tensor_method(Method m) {
  return m == Method::tp_ols || m == Method::tp_gls || m == Method::tp_ols_adapt || m == Method::tp_gls_adapt;
}

inline bool is_gls_method(Method m) { return m == Method::tp_gls || m == Method::tp_gls_adapt; }

inline bool is_adaptive_method(Method m) { return m == Method::tp_ols_adapt || m == Method::tp_gls_adapt; }

/// Penalty blocks S_j on vec(Theta), Theta of size K_t x K_s, combined as sum lambda_j S_j.
/// Block order: lambda_s (P_s x Q_t) first, then one or more t blocks.
struct TpPenalty {
  std::vector<Matrix> blocks;
  Vector lambdas;

  Matrix combined(const Vector& lam) const {
    if (lam.size() != static_cast<Index>(blocks.size())) throw DimensionError("penalty: lambda count mismatch");
    Matrix s = Matrix::Zero(blocks[0].rows(), blocks[0].cols());
    for (std::size_t j = 0; j < blocks.size(); ++j) s += lam(j) * blocks[j];
    return s;
  }
  Matrix combined() const { return combined(lambdas); }
};

/// lambda_s (P_s x Q_t) + lambda_t (Q_s x P_t), or the adaptive variant with one
/// t block per function of the coarse basis in s.
inline TpPenalty assemble_penalty(const EvaluatedBasis& bt, const EvaluatedBasis& bs,
                                  const std::optional<BasisSpec>& coarse = std::nullopt, Index max_coef = 2000) {
  const Index kk = bt.size() * bs.size();
  if (kk > max_coef)
    throw SpecError("tensor penalty: K_t * K_s = " + std::to_string(kk) + " exceeds the cap of " +
                    std::to_string(max_coef));
  TpPenalty p;
  p.blocks.push_back(kron(bs.penalty, bt.gram));
  if (!coarse) {
    p.blocks.push_back(kron(bs.gram, bt.penalty));
  } else {
    for (int k = 0; k < coarse->dim; ++k) p.blocks.push_back(kron(weighted_gram(bs.spec, *coarse, k), bt.penalty));
  }
  p.lambdas = Vector::Ones(static_cast<Index>(p.blocks.size()));
  return p;
}

/// X^T W X, X^T W y and y^T W y for a penalized least squares problem in theta.
struct NormalSystem {
  Matrix gram;
  Vector rhs;
  double yty = 0.0;
  double n_obs = 0.0;
};

struct RemlOptions {
  int restarts = 5;
  std::uint64_t seed = 1;
  NelderMeadOptions nm{1.5, 1e-10, 1e-5, 3000};
};

struct LambdaSelection {
  Vector lambdas;
  double score = 0.0;
  bool floored = false;
  int evals = 0;
};

/// (n_obs - q0) log PRSS + log det(X^T W X + S) - log det+(S) as a function of log lambdas.
class MultiReml {
 public:
  MultiReml(const NormalSystem& sys, const std::vector<Matrix>& blocks) : sys_(sys), blocks_(blocks) {
    if (blocks.empty()) throw SpecError("multi-REML: no penalty blocks");
    Matrix sum = Matrix::Zero(sys.gram.rows(), sys.gram.cols());
    for (const Matrix& b : blocks) {
      if (b.rows() != sys.gram.rows() || b.cols() != sys.gram.cols())
        throw DimensionError("multi-REML: penalty block size mismatch");
      const double nrm = b.norm();
      if (nrm > 0.0) sum += b / nrm;
    }
    SymSplit split = split_null_range(sum, 1e-9);
    q0_ = split.null_basis.cols();
    range_ = std::move(split.range_basis);
    for (const Matrix& b : blocks) projected_.push_back(range_.transpose() * b * range_);
  }

  Index null_dim() const { return q0_; }

  double score(const Vector& log_lambda, bool* floored = nullptr) const {
    const Vector lam = log_lambda.array().max(std::log(kLambdaSearchLo)).min(std::log(kLambdaSearchHi)).exp();
    Matrix lhs = sys_.gram;
    for (std::size_t j = 0; j < blocks_.size(); ++j) lhs += lam(j) * blocks_[j];
    Eigen::LLT<Matrix> llt(lhs);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Vector theta = llt.solve(sys_.rhs);
    double prss = sys_.yty - theta.dot(sys_.rhs);
    const double floor = 1e-12 * sys_.yty;
    if (prss < floor) {
      prss = std::max(floor, 1e-300);
      if (floored) *floored = true;
    }
    double logdet_s = 0.0;
    if (range_.cols() > 0) {
      Matrix sr = Matrix::Zero(range_.cols(), range_.cols());
      for (std::size_t j = 0; j < projected_.size(); ++j) sr += lam(j) * projected_[j];
      logdet_s = logdet_sym(sr);
    }
    return (sys_.n_obs - static_cast<double>(q0_)) * std::log(prss) + logdet_llt(llt) - logdet_s;
  }

 private:
  const NormalSystem& sys_;
  const std::vector<Matrix>& blocks_;
  Matrix range_;
  std::vector<Matrix> projected_;
  Index q0_ = 0;
};

/// Nelder-Mead on log lambda with seeded restarts; the first restart starts at the
/// best common-lambda point of a coarse grid.
inline LambdaSelection select_lambdas(const NormalSystem& sys, const std::vector<Matrix>& blocks,
                                      const RemlOptions& opt = {}) {
  const MultiReml reml(sys, blocks);
  const Index m = static_cast<Index>(blocks.size());
  LambdaSelection out;
  auto f = [&](const Vector& x) {
    ++out.evals;
    return reml.score(x);
  };
  double best_diag = std::numeric_limits<double>::infinity();
  Vector start0 = Vector::Zero(m);
  for (int e = -4; e <= 4; ++e) {
    const Vector x = Vector::Constant(m, e * std::log(10.0));
    const double v = f(x);
    if (v < best_diag) {
      best_diag = v;
      start0 = x;
    }
  }
  Rng rng(derive_seed(opt.seed, 0x4e4d));
  Vector best_x;
  double best_f = std::numeric_limits<double>::infinity();
  const int restarts = std::max(1, opt.restarts);
  for (int r = 0; r < restarts; ++r) {
    Vector x0 = start0;
    if (r > 0)
      for (Index j = 0; j < m; ++j) x0(j) = std::log(1e-4) + rng.uniform() * (std::log(1e4) - std::log(1e-4));
    const NelderMeadResult nm = nelder_mead(f, x0, opt.nm);
    if (nm.f < best_f) {
      best_f = nm.f;
      best_x = nm.x;
    }
  }
  best_x = best_x.array().max(std::log(kLambdaSearchLo)).min(std::log(kLambdaSearchHi));
  out.lambdas = best_x.array().exp();
  out.score = reml.score(best_x, &out.floored);
  return out;
}

struct TpConfig {
  BasisSpec t_spec{0.0, 1.0, 15, 3};
  BasisSpec s_spec{0.0, 1.0, 25, 3};
  PenaltySpec t_penalty;
  PenaltySpec s_penalty;
  std::optional<BasisSpec> coarse;  ///< set for the adaptive penalty
  std::optional<Vector> lambdas;    ///< fixed smoothing parameters; REML when absent
  RemlOptions reml;
  Index max_coef = 2000;
};

/// Common result of every fitting method. fitted = B_t theta B_s^T whenever theta is set.
struct VsFit {
  VsFit() = default;
  VsFit(const VsFit&) = default;
  VsFit(VsFit&&) = default;
  VsFit& operator=(const VsFit&) = default;
  VsFit& operator=(VsFit&&) = default;
  virtual ~VsFit() = default;

  Method method = Method::tp_ols;
  std::optional<Matrix> theta;  ///< K_t x K_s
  Matrix fitted;                ///< n x L
  EvaluatedBasis basis_t;
  EvaluatedBasis basis_s;
  std::optional<TpPenalty> penalty;
  std::optional<PrecisionEstimate> precision;
  std::optional<LambdaSelection> reml;
  bool interpolation_warning = false;
};

namespace detail {

inline void check_surface_data(const Matrix& Y, const Vector& t, const Vector& s) {
  if (Y.rows() != t.size()) throw DimensionError("Y has " + std::to_string(Y.rows()) + " rows but t has " +
                                                 std::to_string(t.size()) + " entries");
  if (Y.cols() != s.size()) throw DimensionError("Y has " + std::to_string(Y.cols()) + " columns but the s grid has " +
                                                 std::to_string(s.size()) + " points");
  if (!Y.allFinite() || !t.allFinite() || !s.allFinite()) throw DomainError("non-finite values in data");
  for (Index l = 1; l < s.size(); ++l)
    if (!(s(l) > s(l - 1))) throw DomainError("s grid must be strictly increasing");
}

}  // namespace detail

/// The frozen linear map Y -> fitted values of a tensor-product fit.
class TpOperator {
 public:
  explicit TpOperator(const VsFit& fit)
      : bt_(fit.basis_t.design), bs_(fit.basis_s.design) {
    if (!fit.penalty) throw SpecError("TpOperator: fit carries no tensor penalty");
    if (fit.precision) w_ = fit.precision->prec;
    const Matrix gs = w_ ? Matrix(bs_.transpose() * (*w_) * bs_) : Matrix(bs_.transpose() * bs_);
    Matrix lhs = kron(gs, bt_.transpose() * bt_) + fit.penalty->combined();
    llt_ = cholesky_or_throw(0.5 * (lhs + lhs.transpose()), "tensor fit");
  }

  Matrix theta(const Matrix& Y) const {
    const Matrix rhs = w_ ? Matrix(bt_.transpose() * Y * (*w_) * bs_) : Matrix(bt_.transpose() * Y * bs_);
    return unvec(llt_.solve(vec(rhs)), bt_.cols(), bs_.cols());
  }

  Matrix apply(const Matrix& Y) const { return bt_ * theta(Y) * bs_.transpose(); }

  const Eigen::LLT<Matrix>& llt() const { return llt_; }

 private:
  Matrix bt_, bs_;
  std::optional<Matrix> w_;
  Eigen::LLT<Matrix> llt_;
};

/// Tensor-product fit; GLS when a precision estimate is given (rows prewhitened by
/// Sigma^{-1/2}, B_s replaced by Sigma^{-1/2} B_s).
inline VsFit fit_tp(const Matrix& Y, const Vector& t, const Vector& s, const TpConfig& cfg,
                    const PrecisionEstimate* precision = nullptr) {
  detail::check_surface_data(Y, t, s);
  VsFit fit;
  fit.basis_t = build_basis(cfg.t_spec, t, cfg.t_penalty);
  fit.basis_s = build_basis(cfg.s_spec, s, cfg.s_penalty);
  const Matrix& bt = fit.basis_t.design;
  const Index kt = bt.cols(), ks = fit.basis_s.size();
  if (kt * ks > cfg.max_coef)
    throw SpecError("tensor fit: K_t * K_s = " + std::to_string(kt * ks) + " exceeds the cap of " +
                    std::to_string(cfg.max_coef));
  if (design_rank(bt) < kt) throw ConditioningError("tensor fit: t design is rank deficient");
  if (design_rank(fit.basis_s.design) < ks) throw ConditioningError("tensor fit: s design is rank deficient");
  Matrix bs_w = fit.basis_s.design;
  Matrix y_w = Y;
  if (precision) {
    if (precision->prec.rows() != s.size()) throw DimensionError("tensor fit: precision size mismatch");
    Eigen::SelfAdjointEigenSolver<Matrix> es(precision->prec, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9 * es.eigenvalues().cwiseAbs().maxCoeff())
      throw DomainError("tensor fit: precision matrix is not positive semidefinite");
    bs_w = precision->prec_sqrt * fit.basis_s.design;
    y_w = Y * precision->prec_sqrt;
    fit.precision = *precision;
  }
  NormalSystem sys;
  sys.gram = kron(bs_w.transpose() * bs_w, bt.transpose() * bt);
  sys.rhs = vec(bt.transpose() * y_w * bs_w);
  sys.yty = y_w.squaredNorm();
  sys.n_obs = static_cast<double>(Y.size());
  TpPenalty pen = assemble_penalty(fit.basis_t, fit.basis_s, cfg.coarse, cfg.max_coef);
  if (cfg.lambdas) {
    if (cfg.lambdas->size() != static_cast<Index>(pen.blocks.size()))
      throw SpecError("tensor fit: expected " + std::to_string(pen.blocks.size()) + " smoothing parameters");
    pen.lambdas = *cfg.lambdas;
  } else {
    fit.reml = select_lambdas(sys, pen.blocks, cfg.reml);
    pen.lambdas = fit.reml->lambdas;
    fit.interpolation_warning = fit.reml->floored;
  }
  Matrix lhs = sys.gram + pen.combined();
  const Eigen::LLT<Matrix> llt = cholesky_or_throw(0.5 * (lhs + lhs.transpose()), "tensor fit");
  fit.theta = unvec(llt.solve(sys.rhs), kt, ks);
  fit.fitted = bt * (*fit.theta) * fit.basis_s.design.transpose();
  fit.penalty = std::move(pen);
  fit.method = precision ? (cfg.coarse ? Method::tp_gls_adapt : Method::tp_gls)
                         : (cfg.coarse ? Method::tp_ols_adapt : Method::tp_ols);
  return fit;
}

inline VsFit fit_tp_ols(const Matrix& Y, const Vector& t, const Vector& s, const TpConfig& cfg) {
  return fit_tp(Y, t, s, cfg, nullptr);
}

inline VsFit fit_tp_gls(const Matrix& Y, const Vector& t, const Vector& s, const PrecisionEstimate& precision,
                        const TpConfig& cfg) {
  return fit_tp(Y, t, s, cfg, &precision);
}

}  // namespace vsm
