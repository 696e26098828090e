#pragma once

// Simulated surfaces with correlated within-curve errors, calibrated to a
// target functional R^2, and the replicated method comparison.

#include "vsm/common.hpp"
#include "vsm/diagnostics.hpp"
#include "vsm/linalg.hpp"
#include "vsm/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace vsm {

enum class TrueSurface { f1, f2 };

inline std::string surface_tag(TrueSurface f) { return f == TrueSurface::f1 ? "f1" : "f2"; }

inline TrueSurface parse_surface(const std::string& tag) {
  if (tag == "f1") return TrueSurface::f1;
  if (tag == "f2") return TrueSurface::f2;
  throw SpecError("unknown surface '" + tag + "' (expected f1 or f2)");
}

namespace detail {

inline double std_normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::acos(-1.0)); }

// f1: the peak of the hump in t moves with s through p_s.
inline void f1_parts(double t, double s, double& value, double& dt) {
  const double pi = std::acos(-1.0);
  const double p = (std::sin(2.0 * pi * s) + 8.0) / 16.0;
  const double den = 2.0 * p * (p - 1.0);
  const double arg = pi * t * (t * (1.0 - 2.0 * p) + 2.0 * p * p - 1.0) / den;
  const double darg = pi * (2.0 * t * (1.0 - 2.0 * p) + 2.0 * p * p - 1.0) / den;
  value = 8.0 * (s - 0.5) * (s - 0.5) + std::sin(arg);
  dt = std::cos(arg) * darg;
}

// f2: linear in t except near s = 0.7, where a quadratic term switches on.
inline void f2_parts(double t, double s, double& value, double& dt) {
  const double pi = std::acos(-1.0);
  const double c = 0.5 - 0.2 * (s - 0.5) * (s - 0.5);
  const double a = std_normal_pdf(20.0 * (s - 0.7)) / (c * c);
  value = std::sin(2.0 * pi * s) + 10.0 * t - a * (t - c) * (t - c);
  dt = 10.0 - 2.0 * a * (t - c);
}

}  // namespace detail

inline double true_surface(TrueSurface f, double t, double s) {
  double v, d;
  (f == TrueSurface::f1 ? detail::f1_parts : detail::f2_parts)(t, s, v, d);
  return v;
}

inline double true_surface_dt(TrueSurface f, double t, double s) {
  double v, d;
  (f == TrueSurface::f1 ? detail::f1_parts : detail::f2_parts)(t, s, v, d);
  return d;
}

inline Vector uniform_grid(Index L, double lo = 0.0, double hi = 1.0) {
  if (L < 2) throw SpecError("grid needs at least two points");
  return Vector::LinSpaced(L, lo, hi);
}

/// Errors eta + e with Cov(eta(s), eta(s')) = gamma sigma2 0.5^{200|s - s'|} and e white with
/// variance sigma2. eta is generated by its exact Markov recursion on any sorted grid.
inline Matrix gen_errors(Index n, const Vector& s, double gamma, double sigma2, std::uint64_t seed) {
  if (gamma < 0.0 || sigma2 < 0.0) throw DomainError("gen_errors: gamma and sigma2 must be non-negative");
  const Index L = s.size();
  Rng rng(seed);
  Matrix E(n, L);
  const double sd_eta = std::sqrt(gamma * sigma2), sd_e = std::sqrt(sigma2);
  for (Index i = 0; i < n; ++i) {
    double eta = 0.0;
    for (Index l = 0; l < L; ++l) {
      const double z = rng.normal();
      if (l == 0) {
        eta = z;
      } else {
        const double rho = std::pow(0.5, 200.0 * std::abs(s(l) - s(l - 1)));
        eta = rho * eta + std::sqrt(1.0 - rho * rho) * z;
      }
      E(i, l) = sd_eta * eta;
    }
    for (Index l = 0; l < L; ++l) E(i, l) += sd_e * rng.normal();
  }
  return E;
}

/// n - 2 uniform draws on (0, 1) plus the end points, sorted.
inline Vector draw_design_points(Index n, std::uint64_t seed) {
  if (n < 2) throw SpecError("need at least two curves");
  Rng rng(seed);
  Vector t(n);
  t(0) = 0.0;
  t(1) = 1.0;
  for (Index i = 2; i < n; ++i) t(i) = rng.uniform();
  std::sort(t.data(), t.data() + n);
  return t;
}

/// Scale kappa solving R^2 = 1 - k^2 A / (B + 2 k C + k^2 A).
inline double kappa_from_moments(double A, double B, double C, double r2) {
  if (!(r2 > 0.0 && r2 < 1.0)) throw DomainError("target R^2 must lie in (0, 1)");
  if (!(A > 0.0)) throw DegenerateInputError("kappa: error sum of squares is zero");
  const double u = 1.0 - r2;
  return (C * u + std::sqrt(C * C * u * u + A * B * r2 * u)) / (A * r2);
}

struct Scenario {
  TrueSurface surface = TrueSurface::f1;
  double r2 = 0.3;
  double gamma = 0.0;
  Index n = 100;
  Index L = 201;

  std::string label() const {
    std::ostringstream os;
    os << surface_tag(surface) << "_r2=" << r2 << "_gamma=" << gamma;
    return os.str();
  }
};

inline std::vector<Scenario> standard_scenarios(Index n = 100, Index L = 201) {
  std::vector<Scenario> out;
  for (TrueSurface f : {TrueSurface::f1, TrueSurface::f2})
    for (double r2 : {0.05, 0.3})
      for (double g : {0.25, 4.0}) out.push_back({f, r2, g, n, L});
  return out;
}

struct SimulatedDataset {
  Scenario scenario;
  Vector t;
  Vector s;
  Matrix F;  ///< true surface at (t_i, s_l)
  Matrix Y;
  double realized_r2 = 0.0;
  double sigma2_effective = 1.0;
  int iterations = 0;
  std::vector<double> r2_trajectory;
};

inline constexpr double kR2Tolerance = 1e-4;
inline constexpr int kR2MaxIterations = 50;

/// Draws t and errors at sigma2 = 1, then rescales the errors until the realized
/// functional R^2 is within 1e-4 of the target. sigma2_effective is the product of
/// the squared scale factors.
inline SimulatedDataset calibrate_r2(const Scenario& sc, std::uint64_t seed) {
  if (!(sc.r2 > 0.0 && sc.r2 < 1.0)) throw DomainError("target R^2 must lie in (0, 1)");
  if (sc.gamma < 0.0) throw DomainError("gamma must be non-negative");
  SimulatedDataset d;
  d.scenario = sc;
  d.s = uniform_grid(sc.L);
  d.t = draw_design_points(sc.n, derive_seed(seed, 1));
  d.F.resize(sc.n, sc.L);
  for (Index i = 0; i < sc.n; ++i)
    for (Index l = 0; l < sc.L; ++l) d.F(i, l) = true_surface(sc.surface, d.t(i), d.s(l));
  Matrix eps = gen_errors(sc.n, d.s, sc.gamma, 1.0, derive_seed(seed, 2));
  const Eigen::RowVectorXd w = trapezoid_weights(d.s).transpose();
  for (int it = 0;; ++it) {
    d.Y = d.F + eps;
    d.realized_r2 = functional_r2(d.Y, d.F, d.s);
    d.r2_trajectory.push_back(d.realized_r2);
    if (std::abs(d.realized_r2 - sc.r2) < kR2Tolerance) {
      d.iterations = it;
      return d;
    }
    if (it >= kR2MaxIterations)
      throw ConvergenceError("R^2 calibration did not converge in " + std::to_string(kR2MaxIterations) + " iterations",
                             d.r2_trajectory);
    const Eigen::RowVectorXd ybar = d.Y.colwise().mean();
    const Matrix dev = d.F.rowwise() - ybar;
    const double A = (eps.array().square().rowwise() * w.array()).sum();
    const double B = (dev.array().square().rowwise() * w.array()).sum();
    const double C = ((eps.array() * dev.array()).rowwise() * w.array()).sum();
    const double kappa = kappa_from_moments(A, B, C, sc.r2);
    eps *= kappa;
    d.sigma2_effective *= kappa * kappa;
  }
}

struct StudyConfig {
  int replications = 20;
  std::uint64_t seed = 1;
  std::vector<Method> methods;
  int threads = 0;
  bool timing = false;
  ModelConfig model;
};

struct StudyRecord {
  Scenario scenario;
  int replication = 0;
  Method method = Method::tp_ols;
  double ise_f = 0.0;
  double ise_dfdt = 0.0;
  double rel_ise_f = 0.0;
  double rel_ise_dfdt = 0.0;
  double seconds = std::numeric_limits<double>::quiet_NaN();
  Vector df;
  std::string error;  ///< set when the method failed on this replication

  bool ok() const { return error.empty(); }
};

inline ModelConfig study_model_defaults() {
  ModelConfig m;
  m.t_domain = std::make_pair(0.0, 1.0);
  m.s_domain = std::make_pair(0.0, 1.0);
  m.components = std::nullopt;
  return m;
}

/// One replication of one scenario: every requested method on the same data set.
/// The data seed depends only on (seed, replication).
inline std::vector<StudyRecord> run_cell(const Scenario& sc, int rep, const StudyConfig& cfg) {
  const SimulatedDataset data = calibrate_r2(sc, derive_seed(cfg.seed, static_cast<std::uint64_t>(rep)));
  ModelConfig model = cfg.model;
  model.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep), 7);
  FitCache cache;
  std::vector<StudyRecord> out;
  const SurfaceFn f = [&](double t, double s) { return true_surface(sc.surface, t, s); };
  const SurfaceFn fdt = [&](double t, double s) { return true_surface_dt(sc.surface, t, s); };
  for (Method m : cfg.methods) {
    ModelConfig mc = model;
    if (m == Method::two_step_penfpc && !mc.components) mc.components = 30;
    StudyRecord r;
    r.scenario = sc;
    r.replication = rep;
    r.method = m;
    try {
      const auto t0 = std::chrono::steady_clock::now();
      const std::shared_ptr<VsFit> fit = fit_method(m, data.Y, data.t, data.s, mc, &cache);
      const DfReport df = pointwise_df(*fit);
      const auto t1 = std::chrono::steady_clock::now();
      const IseResult ise = ise_metrics(surface_of(*fit), f, fdt, 0.0, 1.0);
      r.ise_f = ise.f;
      r.ise_dfdt = ise.dfdt;
      if (cfg.timing) r.seconds = std::chrono::duration<double>(t1 - t0).count();
      r.df = df.d;
    } catch (const std::exception& e) {
      r.error = e.what();
      r.ise_f = r.ise_dfdt = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(std::move(r));
  }
  double best_f = std::numeric_limits<double>::infinity(), best_d = best_f;
  for (const auto& r : out) {
    if (!r.ok()) continue;
    best_f = std::min(best_f, r.ise_f);
    best_d = std::min(best_d, r.ise_dfdt);
  }
  for (auto& r : out) {
    r.rel_ise_f = r.ok() ? r.ise_f / best_f : std::numeric_limits<double>::quiet_NaN();
    r.rel_ise_dfdt = r.ok() ? r.ise_dfdt / best_d : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

/// Records ordered by scenario, then replication, then the order of cfg.methods.
inline std::vector<StudyRecord> run_study(const std::vector<Scenario>& scenarios, const StudyConfig& cfg) {
  if (cfg.methods.empty()) throw SpecError("study: no methods selected");
  if (cfg.replications < 1) throw SpecError("study: need at least one replication");
  const Index cells = static_cast<Index>(scenarios.size()) * cfg.replications;
  std::vector<std::vector<StudyRecord>> slots(cells);
  parallel_for(cells, thread_budget(cfg.threads), [&](Index c) {
    const Index sc = c / cfg.replications;
    const int rep = static_cast<int>(c % cfg.replications);
    slots[c] = run_cell(scenarios[sc], rep, cfg);
  });
  std::vector<StudyRecord> out;
  for (auto& s : slots)
    for (auto& r : s) out.push_back(std::move(r));
  return out;
}

}  // namespace vsm
