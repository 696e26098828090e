#pragma once

// One entry point for every fitting method, driven by a single flat configuration.

#include "vsm/covest.hpp"
#include "vsm/diagnostics.hpp"
#include "vsm/fpca.hpp"
#include "vsm/tensorfit.hpp"
#include "vsm/twostep.hpp"

#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace vsm {

struct ModelConfig {
  int kt = 15;
  int ks = 30;      ///< s basis for fpc-scores and the two-step methods
  int ks_tp = 25;   ///< s basis for the tensor-product methods
  int ks_star = 5;  ///< coarse s basis of the adaptive penalty
  int degree = 3;
  int degree_star = 3;
  PenaltySpec penalty_t;
  PenaltySpec penalty_s;
  std::optional<std::pair<double, double>> t_domain;
  std::optional<std::pair<double, double>> s_domain;
  std::optional<Vector> tp_lambdas;
  std::optional<double> lambda_t;  ///< common frozen step-1 lambda
  std::optional<double> lambda_s;
  std::optional<Index> components;
  double variance_share = 0.99;
  int max_components = 10;
  int cv_folds = 5;
  int cv_repeats = 1;
  std::uint64_t seed = 1;
  std::optional<std::vector<int>> k_range;
  int reml_restarts = 5;
  Index max_coef = 2000;
};

struct DomainPair {
  double lo;
  double hi;
};

inline DomainPair t_domain_of(const ModelConfig& cfg, const Vector& t) {
  if (cfg.t_domain) return {cfg.t_domain->first, cfg.t_domain->second};
  return {t.minCoeff(), t.maxCoeff()};
}

inline DomainPair s_domain_of(const ModelConfig& cfg, const Vector& s) {
  if (cfg.s_domain) return {cfg.s_domain->first, cfg.s_domain->second};
  return {s(0), s(s.size() - 1)};
}

inline TpConfig tp_config(const ModelConfig& cfg, Method m, const Vector& t, const Vector& s) {
  const DomainPair dt = t_domain_of(cfg, t), ds = s_domain_of(cfg, s);
  TpConfig c;
  c.t_spec = {dt.lo, dt.hi, cfg.kt, cfg.degree};
  c.s_spec = {ds.lo, ds.hi, cfg.ks_tp, cfg.degree};
  c.t_penalty = cfg.penalty_t;
  c.s_penalty = cfg.penalty_s;
  if (is_adaptive_method(m)) c.coarse = BasisSpec{ds.lo, ds.hi, cfg.ks_star, cfg.degree_star};
  c.lambdas = cfg.tp_lambdas;
  c.reml.restarts = cfg.reml_restarts;
  c.reml.seed = derive_seed(cfg.seed, 0x7e);
  c.max_coef = cfg.max_coef;
  return c;
}

inline TwoStepConfig two_step_config(const ModelConfig& cfg, const Vector& t, const Vector& s) {
  const DomainPair dt = t_domain_of(cfg, t), ds = s_domain_of(cfg, s);
  TwoStepConfig c;
  c.t_spec = {dt.lo, dt.hi, cfg.kt, cfg.degree};
  c.s_spec = {ds.lo, ds.hi, cfg.ks, cfg.degree};
  c.t_penalty = cfg.penalty_t;
  c.s_penalty = cfg.penalty_s;
  if (cfg.lambda_t) c.step1_lambdas = Vector::Constant(s.size(), *cfg.lambda_t);
  c.lambda_s = cfg.lambda_s;
  c.components = cfg.components;
  c.variance_share = cfg.variance_share;
  c.max_components = cfg.max_components;
  c.cv_folds = cfg.cv_folds;
  c.cv_repeats = cfg.cv_repeats;
  c.seed = derive_seed(cfg.seed, 0xcf);
  return c;
}

/// Reused pieces when several methods are fitted to the same data.
struct FitCache {
  std::shared_ptr<VsFit> tp_ols;
  std::shared_ptr<VsFit> tp_ols_adapt;
  std::optional<PrecisionEstimate> precision;
};

/// Fits one method. GLS variants estimate the precision from the residuals of the
/// matching OLS fit, with the bandwidth chosen by select_bandwidth.
inline std::shared_ptr<VsFit> fit_method(Method m, const Matrix& Y, const Vector& t, const Vector& s,
                                         const ModelConfig& cfg, FitCache* cache = nullptr) {
  FitCache local;
  if (!cache) cache = &local;
  switch (m) {
    case Method::tp_ols:
    case Method::tp_ols_adapt: {
      auto& slot = m == Method::tp_ols ? cache->tp_ols : cache->tp_ols_adapt;
      if (!slot) slot = std::make_shared<VsFit>(fit_tp_ols(Y, t, s, tp_config(cfg, m, t, s)));
      return slot;
    }
    case Method::tp_gls:
    case Method::tp_gls_adapt: {
      if (!cache->precision) {
        if (!cache->tp_ols) cache->tp_ols = fit_method(Method::tp_ols, Y, t, s, cfg, cache);
        cache->precision = select_bandwidth(Y - cache->tp_ols->fitted, cfg.k_range);
      }
      return std::make_shared<VsFit>(fit_tp_gls(Y, t, s, *cache->precision, tp_config(cfg, m, t, s)));
    }
    case Method::fpc_scores:
      return std::make_shared<FpcScoresFit>(fit_fpc_scores(Y, t, s, two_step_config(cfg, t, s)));
    case Method::two_step_pen:
    case Method::two_step_fpc:
      return std::make_shared<TwoStepFit>(fit_two_step(m, Y, t, s, two_step_config(cfg, t, s)));
    case Method::two_step_penfpc: {
      TwoStepConfig c = two_step_config(cfg, t, s);
      if (c.components) {
        const DomainPair ds = s_domain_of(cfg, s);
        const EvaluatedBasis bs = build_basis({ds.lo, ds.hi, cfg.ks, cfg.degree}, s, cfg.penalty_s);
        c.components = std::min(*c.components, fpca_decompose(Y, bs, 0).rank);
      }
      return std::make_shared<TwoStepFit>(fit_two_step(m, Y, t, s, c));
    }
    case Method::step1_only: {
      detail::check_surface_data(Y, t, s);
      const TwoStepConfig c = two_step_config(cfg, t, s);
      auto fit = std::make_shared<TwoStepFit>();
      fit->method = Method::step1_only;
      fit->basis_t = build_basis(c.t_spec, t, c.t_penalty);
      fit->basis_s = build_basis(c.s_spec, s, c.s_penalty);
      fit->step1 = step1(Y, fit->basis_t, c.step1_lambdas);
      fit->fitted = fit->step1.fitted;
      fit->smoother_s = Matrix::Identity(s.size(), s.size());
      return fit;
    }
  }
  throw SpecError("unsupported method");
}

/// Surface for ISE and prediction: B_t theta B_s^T, or linear interpolation in s of the
/// step-1 column fits.
inline SurfaceModel surface_of(const VsFit& fit) {
  if (fit.method == Method::step1_only) {
    const auto& f = dynamic_cast<const TwoStepFit&>(fit);
    return interpolated_surface(f.basis_t.spec, f.step1.coef, f.basis_s.points);
  }
  return tensor_surface(fit);
}

}  // namespace vsm
