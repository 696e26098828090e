// Command-line front end: fit, df, ci, predict, simulate, study.
// Exit codes: 0 success, 2 rejected input or configuration, 3 numerical failure,
// 1 anything else (I/O).

#include "vsm/io.hpp"
#include "vsm/vsm.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace vsm;

namespace {

/// Command-line values mirroring RunConfig; only flags actually given end up in the JSON.
struct ModelFlags {
  std::optional<std::string> method;
  std::optional<int> kt, ks, ks_tp, ks_star, degree, max_components, cv_folds, cv_repeats, reml_restarts;
  std::optional<int> eval_t_points, eval_s_points, penalty_order;
  std::optional<double> lambda_t, lambda_s, variance_share, z;
  std::optional<long long> components, max_coef;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> penalty_kind;
  std::vector<double> lambdas, t_domain, s_domain;
  std::vector<int> k_range;
  bool ci = false;
  bool timing = false;
  std::optional<std::string> config;

  json to_json() const {
    json j = json::object();
    auto put = [&j](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    put("method", method);
    put("kt", kt);
    put("ks", ks);
    put("ks_tp", ks_tp);
    put("ks_star", ks_star);
    put("degree", degree);
    put("max_components", max_components);
    put("cv_folds", cv_folds);
    put("cv_repeats", cv_repeats);
    put("reml_restarts", reml_restarts);
    put("eval_t_points", eval_t_points);
    put("eval_s_points", eval_s_points);
    put("lambda_t", lambda_t);
    put("lambda_s", lambda_s);
    put("variance_share", variance_share);
    put("z", z);
    put("components", components);
    put("max_coef", max_coef);
    put("seed", seed);
    if (!lambdas.empty()) j["lambdas"] = lambdas;
    if (!k_range.empty()) j["k_range"] = k_range;
    if (!t_domain.empty()) j["t_domain"] = t_domain;
    if (!s_domain.empty()) j["s_domain"] = s_domain;
    if (penalty_kind || penalty_order) {
      json p = json::object();
      put_into(p, "kind", penalty_kind);
      put_into(p, "order", penalty_order);
      j["penalty_t"] = p;
      j["penalty_s"] = p;
    }
    if (ci) j["ci"] = true;
    if (timing) j["timing"] = true;
    return j;
  }

  template <class T>
  static void put_into(json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
  }
};

void add_model_flags(CLI::App* cmd, ModelFlags& f, bool run_fields) {
  if (run_fields) {
    cmd->add_option("--method", f.method, "tp-ols | tp-gls | tp-ols-adapt | tp-gls-adapt | fpc-scores | 2s-pen | "
                                          "2s-fpc | 2s-penfpc | step1-only");
    cmd->add_option("--eval-t-points", f.eval_t_points, "t points of the band grid");
    cmd->add_option("--eval-s-points", f.eval_s_points, "s points of the band grid");
    cmd->add_option("--z", f.z, "band half-width in standard errors");
  }
  cmd->add_option("--kt", f.kt, "t basis dimension");
  cmd->add_option("--ks", f.ks, "s basis dimension (fpc and two-step methods)");
  cmd->add_option("--ks-tp", f.ks_tp, "s basis dimension (tensor-product methods)");
  cmd->add_option("--ks-star", f.ks_star, "coarse s basis of the adaptive penalty");
  cmd->add_option("--degree", f.degree, "spline degree");
  cmd->add_option("--penalty-kind", f.penalty_kind, "derivative | difference");
  cmd->add_option("--penalty-order", f.penalty_order, "penalty order");
  cmd->add_option("--lambdas", f.lambdas, "fixed tensor-product smoothing parameters")->delimiter(',');
  cmd->add_option("--lambda-t", f.lambda_t, "fixed common step-1 smoothing parameter");
  cmd->add_option("--lambda-s", f.lambda_s, "fixed step-2 smoothing parameter");
  cmd->add_option("--components", f.components, "number of principal components");
  cmd->add_option("--variance-share", f.variance_share, "variance share for automatic component count");
  cmd->add_option("--max-components", f.max_components, "upper bound of the component search");
  cmd->add_option("--cv-folds", f.cv_folds, "cross-validation folds");
  cmd->add_option("--cv-repeats", f.cv_repeats, "cross-validation repeats");
  if (run_fields) cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--k-range", f.k_range, "candidate precision bandwidths, comma separated")->delimiter(',');
  cmd->add_option("--reml-restarts", f.reml_restarts, "REML multi-start count");
  cmd->add_option("--max-coef", f.max_coef, "cap on K_t * K_s");
  cmd->add_option("--t-domain", f.t_domain, "t basis domain lo,hi")->delimiter(',')->expected(2);
  cmd->add_option("--s-domain", f.s_domain, "s basis domain lo,hi")->delimiter(',')->expected(2);
  cmd->add_flag("--timing", f.timing, "record wall time (output is then not reproducible)");
  cmd->add_option("--config", f.config, "JSON configuration; its values override flags");
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw SpecError(path + ": " + e.what());
  }
}

RunConfig resolve(const ModelFlags& f, RunConfig base = {}) {
  apply_config_json(base, f.to_json());
  if (f.config) apply_config_json(base, read_json(*f.config));
  return base;
}

struct DataFlags {
  std::string data;
  std::optional<std::string> grid;
};

void add_data_flags(CLI::App* cmd, DataFlags& d) {
  cmd->add_option("--data", d.data, "response CSV: t column then one column per s point")->required();
  cmd->add_option("--grid", d.grid, "s grid file when the header carries no s=<value> cells");
}

Dataset load(const DataFlags& d) {
  Dataset ds = read_dataset(d.data, d.grid);
  for (const auto& w : ds.warnings) std::cerr << "warning: " << w << '\n';
  return ds;
}

std::string vector_column_csv(const std::string& head, const std::vector<std::pair<std::string, Vector>>& cols,
                              const Vector& key) {
  std::string out = head;
  for (const auto& c : cols) out += ',' + c.first;
  out += '\n';
  for (Index i = 0; i < key.size(); ++i) {
    out += format_double(key(i));
    for (const auto& c : cols) out += ',' + format_double(c.second(i));
    out += '\n';
  }
  return out;
}

json cv_json(const CvResult& cv) { return {{"grid", cv.grid}, {"errors", cv.errors}, {"best", cv.best}}; }

json tuning_json(const VsFit& fit, const RunConfig& cfg, const Dataset& d) {
  json j;
  j["method"] = method_tag(fit.method);
  j["n"] = d.Y.rows();
  j["L"] = d.Y.cols();
  j["basis_t"] = basis_to_json(fit.basis_t.spec);
  j["basis_s"] = basis_to_json(fit.basis_s.spec);
  j["penalty_t"] = detail::penalty_to_json(cfg.model.penalty_t);
  j["penalty_s"] = detail::penalty_to_json(cfg.model.penalty_s);
  try {
    j["r2"] = functional_r2(d.Y, fit.fitted, d.s);
  } catch (const DegenerateInputError&) {
    j["r2"] = nullptr;
  }
  if (fit.penalty) j["lambdas"] = to_std(fit.penalty->lambdas);
  if (fit.reml) j["reml"] = {{"score", fit.reml->score}, {"evals", fit.reml->evals}, {"floored", fit.reml->floored}};
  if (fit.precision) j["precision"] = {{"k", fit.precision->k}, {"lw_stat", fit.precision->lw_stat}};
  if (const auto* f = dynamic_cast<const TwoStepFit*>(&fit)) {
    j["step1_lambdas"] = to_std(f->step1.lambdas);
    if (f->lambda_s) j["lambda_s"] = *f->lambda_s;
    if (f->fpca) j["components"] = f->components;
    if (f->cv) j["cv"] = cv_json(*f->cv);
  }
  if (const auto* f = dynamic_cast<const FpcScoresFit*>(&fit)) {
    j["components"] = f->components;
    j["score_lambdas"] = to_std(f->score_smooth.lambdas);
    j["eigenvalues"] = to_std(f->fpca.eigenvalues);
    if (f->cv) j["cv"] = cv_json(*f->cv);
  }
  j["interpolation_warning"] = fit.interpolation_warning;
  j["warnings"] = d.warnings;
  return j;
}

Vector even_grid(double lo, double hi, int count) {
  if (count == 1) return Vector::Constant(1, 0.5 * (lo + hi));
  return Vector::LinSpaced(count, lo, hi);
}

std::string ci_csv(const CiResult& ci) {
  std::string out = "t,s,fhat,var,lower,upper\n";
  for (Index i = 0; i < ci.t.size(); ++i)
    for (Index l = 0; l < ci.s.size(); ++l)
      out += format_double(ci.t(i)) + ',' + format_double(ci.s(l)) + ',' + format_double(ci.fhat(i, l)) + ',' +
             format_double(ci.var(i, l)) + ',' + format_double(ci.lower(i, l)) + ',' + format_double(ci.upper(i, l)) +
             '\n';
  return out;
}

std::string df_csv(const Dataset& d, const DfReport& df) {
  std::vector<std::pair<std::string, Vector>> cols{{"d", df.d}};
  if (df.d_step1) cols.emplace_back("d_step1", *df.d_step1);
  return vector_column_csv("s", cols, d.s);
}

struct FitRequest {
  bool write_fit = true;  ///< theta, fitted, tuning
  bool leverage = false;
};

void run_fit(const RunConfig& cfg, const Dataset& d, const fs::path& out, const FitRequest& req) {
  if (cfg.ci && cfg.method != Method::two_step_pen)
    throw SpecError("confidence bands are available for 2s-pen only, not " + method_tag(cfg.method));
  const auto t0 = std::chrono::steady_clock::now();
  const std::shared_ptr<VsFit> fit = fit_method(cfg.method, d.Y, d.t, d.s, cfg.model);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const DfReport df = pointwise_df(*fit);
  OutputSet files;
  if (req.write_fit) {
    if (fit->theta) files.add(out / "theta.csv", matrix_csv(*fit->theta));
    files.add(out / "fitted.csv", dataset_csv(d.t, d.s, fit->fitted));
    json tuning = tuning_json(*fit, cfg, d);
    if (cfg.timing) tuning["seconds"] = seconds;
    files.add(out / "tuning.json", tuning.dump(2) + '\n');
  }
  files.add(out / "df.csv", df_csv(d, df));
  if (req.leverage)
    files.add(out / "leverage.csv", dataset_csv(d.t, d.s, pointwise_leverage(frozen_map(*fit), d.Y.rows(), d.Y.cols())));
  if (cfg.ci) {
    const auto& f = dynamic_cast<const TwoStepFit&>(*fit);
    const Vector te = even_grid(f.basis_t.spec.domain_lo, f.basis_t.spec.domain_hi, cfg.eval_t_points);
    const Vector se = even_grid(f.basis_s.spec.domain_lo, f.basis_s.spec.domain_hi, cfg.eval_s_points);
    files.add(out / "ci.csv", ci_csv(ci_twostep(f, default_ci_covariance(f, d.Y), te, se, cfg.z)));
  }
  files.commit();
}

struct PredictFlags {
  std::string fit_dir;
  std::optional<std::string> t_grid, s_grid;
  int t_points = 50;
  int s_points = 50;
  bool deriv = false;
  bool allow_extrapolation = false;
  std::string out;
};

Vector eval_points(const std::optional<std::string>& file, int count, const BasisSpec& spec, const char* axis,
                   bool allow) {
  if (count < 1) throw SpecError(std::string("predict: need at least one ") + axis + " point");
  const Vector p = file ? parse_grid_text(read_text(*file), *file) : even_grid(spec.domain_lo, spec.domain_hi, count);
  if (p.size() == 0) throw DomainError(std::string("predict: empty ") + axis + " grid");
  if (!allow)
    for (Index i = 0; i < p.size(); ++i)
      if (p(i) < spec.domain_lo || p(i) > spec.domain_hi)
        throw DomainError(std::string("predict: ") + axis + " = " + format_double(p(i)) + " lies outside the basis domain [" +
                          format_double(spec.domain_lo) + ", " + format_double(spec.domain_hi) +
                          "]; pass --allow-extrapolation to evaluate anyway");
  return p;
}

void run_predict(const PredictFlags& f) {
  const fs::path dir(f.fit_dir);
  if (!fs::exists(dir / "theta.csv"))
    throw DomainError("predict: " + (dir / "theta.csv").string() + " not found (this method stores no coefficient matrix)");
  const json tuning = read_json((dir / "tuning.json").string());
  BasisSpec bt, bs;
  try {
    bt = basis_from_json(tuning.at("basis_t"));
    bs = basis_from_json(tuning.at("basis_s"));
  } catch (const json::exception& e) {
    throw SpecError("predict: tuning.json: " + std::string(e.what()));
  }
  const Matrix theta = parse_matrix_csv(read_text((dir / "theta.csv").string()), "theta.csv");
  if (theta.rows() != bt.dim || theta.cols() != bs.dim)
    throw DimensionError("predict: theta.csv is " + std::to_string(theta.rows()) + " x " + std::to_string(theta.cols()) +
                         " but the bases need " + std::to_string(bt.dim) + " x " + std::to_string(bs.dim));
  const Vector t = eval_points(f.t_grid, f.t_points, bt, "t", f.allow_extrapolation);
  const Vector s = eval_points(f.s_grid, f.s_points, bs, "s", f.allow_extrapolation);
  const Matrix ws = basis_matrix(bs, s, 0, true).transpose();
  const fs::path out(f.out);
  OutputSet files;
  files.add(out / "predict.csv", dataset_csv(t, s, basis_matrix(bt, t, 0, true) * theta * ws));
  if (f.deriv) files.add(out / "dfdt.csv", dataset_csv(t, s, basis_matrix(bt, t, 1, true) * theta * ws));
  files.commit();
}

struct SimulateFlags {
  std::string surface = "f1";
  double r2 = 0.3;
  double gamma = 0.25;
  long long n = 100;
  long long L = 201;
  std::uint64_t seed = 1;
  std::string out;
};

void run_simulate(const SimulateFlags& f) {
  if (f.n < kMinCurves || f.L < kMinGridPoints)
    throw InsufficientSampleError("simulate: need n >= " + std::to_string(kMinCurves) + " and L >= " +
                                  std::to_string(kMinGridPoints));
  const Scenario sc{parse_surface(f.surface), f.r2, f.gamma, static_cast<Index>(f.n), static_cast<Index>(f.L)};
  const SimulatedDataset d = calibrate_r2(sc, f.seed);
  json manifest = {{"surface", f.surface},
                   {"r2_target", f.r2},
                   {"gamma", f.gamma},
                   {"n", f.n},
                   {"L", f.L},
                   {"seed", f.seed},
                   {"sigma2_effective", d.sigma2_effective},
                   {"realized_r2", d.realized_r2},
                   {"iterations", d.iterations},
                   {"r2_trajectory", d.r2_trajectory}};
  const fs::path out(f.out);
  OutputSet files;
  files.add(out / "dataset.csv", dataset_csv(d.t, d.s, d.Y));
  files.add(out / "truth.csv", dataset_csv(d.t, d.s, d.F));
  files.add(out / "manifest.json", manifest.dump(2) + '\n');
  files.commit();
}

struct StudyFlags {
  int reps = 20;
  std::uint64_t seed = 1;
  std::vector<std::string> methods;
  std::vector<std::string> surfaces{"f1", "f2"};
  std::vector<double> r2s{0.05, 0.3};
  std::vector<double> gammas{0.25, 4.0};
  long long n = 100;
  long long L = 201;
  int threads = 0;
  std::string out;
};

std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

int run_study_cmd(const StudyFlags& f, const ModelFlags& mf) {
  RunConfig base;
  base.model = study_model_defaults();
  const RunConfig rc = resolve(mf, base);
  StudyConfig cfg;
  cfg.replications = f.reps;
  cfg.seed = f.seed;
  cfg.threads = f.threads;
  cfg.timing = rc.timing;
  cfg.model = rc.model;
  if (f.methods.empty()) cfg.methods = all_methods();
  for (const auto& m : f.methods) cfg.methods.push_back(parse_method(m));
  std::vector<Scenario> scen;
  for (const auto& sf : f.surfaces)
    for (double r2 : f.r2s)
      for (double g : f.gammas)
        scen.push_back({parse_surface(sf), r2, g, static_cast<Index>(f.n), static_cast<Index>(f.L)});
  if (scen.empty()) throw SpecError("study: no settings selected");
  const auto records = run_study(scen, cfg);

  std::string res = "scenario,surface,r2,gamma,n,L,replication,method,ise_f,ise_dfdt,rel_ise_f,rel_ise_dfdt";
  if (cfg.timing) res += ",seconds";
  res += ",error\n";
  std::string dfs = "scenario,replication,method";
  const Vector grid = uniform_grid(static_cast<Index>(f.L));
  for (Index l = 0; l < grid.size(); ++l) dfs += ",s=" + format_double(grid(l));
  dfs += '\n';
  int failures = 0;
  for (const auto& r : records) {
    const Scenario& s = r.scenario;
    res += s.label() + ',' + surface_tag(s.surface) + ',' + format_double(s.r2) + ',' + format_double(s.gamma) + ',' +
           std::to_string(s.n) + ',' + std::to_string(s.L) + ',' + std::to_string(r.replication) + ',' +
           method_tag(r.method) + ',' + format_double(r.ise_f) + ',' + format_double(r.ise_dfdt) + ',' +
           format_double(r.rel_ise_f) + ',' + format_double(r.rel_ise_dfdt);
    if (cfg.timing) res += ',' + format_double(r.seconds);
    res += ',' + csv_safe(r.error) + '\n';
    if (!r.ok()) {
      ++failures;
      std::cerr << "failed: " << s.label() << " replication " << r.replication << ' ' << method_tag(r.method) << ": "
                << r.error << '\n';
      continue;
    }
    dfs += s.label() + ',' + std::to_string(r.replication) + ',' + method_tag(r.method);
    for (Index l = 0; l < r.df.size(); ++l) dfs += ',' + format_double(r.df(l));
    dfs += '\n';
  }
  const fs::path out(f.out);
  OutputSet files;
  files.add(out / "results.csv", res);
  files.add(out / "df.csv", dfs);
  files.commit();
  if (failures) {
    std::cerr << failures << " of " << records.size() << " fits failed\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Varying-smoother models for functional responses"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  ModelFlags fit_m, df_m, ci_m, study_m;
  DataFlags fit_d, df_d, ci_d;
  std::string fit_out, df_out, ci_out;
  bool fit_ci = false, fit_lev = false, df_lev = false;

  auto* fit = app.add_subcommand("fit", "fit a method and write theta, fitted values, tuning and df");
  add_data_flags(fit, fit_d);
  add_model_flags(fit, fit_m, true);
  fit->add_flag("--ci", fit_ci, "also write pointwise bands (2s-pen)");
  fit->add_flag("--leverage", fit_lev, "also write pointwise leverage");
  fit->add_option("--out", fit_out, "output directory")->required();

  auto* dfc = app.add_subcommand("df", "write pointwise degrees of freedom");
  add_data_flags(dfc, df_d);
  add_model_flags(dfc, df_m, true);
  dfc->add_flag("--leverage", df_lev, "also write pointwise leverage");
  dfc->add_option("--out", df_out, "output directory")->required();

  auto* ci = app.add_subcommand("ci", "fit 2s-pen and write pointwise variance bands");
  add_data_flags(ci, ci_d);
  add_model_flags(ci, ci_m, true);
  ci->add_option("--out", ci_out, "output directory")->required();

  PredictFlags pf;
  auto* pred = app.add_subcommand("predict", "evaluate a stored fit on a grid");
  pred->add_option("--fit", pf.fit_dir, "directory written by fit")->required();
  pred->add_option("--t-grid", pf.t_grid, "file of t points");
  pred->add_option("--s-grid", pf.s_grid, "file of s points");
  pred->add_option("--t-points", pf.t_points, "evenly spaced t points when no file is given");
  pred->add_option("--s-points", pf.s_points, "evenly spaced s points when no file is given");
  pred->add_flag("--deriv", pf.deriv, "also write the t-derivative grid");
  pred->add_flag("--allow-extrapolation", pf.allow_extrapolation, "evaluate outside the basis domain");
  pred->add_option("--out", pf.out, "output directory")->required();

  SimulateFlags sf;
  auto* sim = app.add_subcommand("simulate", "draw one calibrated data set");
  sim->add_option("--surface", sf.surface, "f1 | f2");
  sim->add_option("--r2", sf.r2, "target functional R^2");
  sim->add_option("--gamma", sf.gamma, "ratio of correlated to white noise variance");
  sim->add_option("--n", sf.n, "curves");
  sim->add_option("--L", sf.L, "grid points");
  sim->add_option("--seed", sf.seed, "random seed");
  sim->add_option("--out", sf.out, "output directory")->required();

  StudyFlags stf;
  auto* study = app.add_subcommand("study", "run the simulation study");
  study->add_option("--reps", stf.reps, "replications per setting");
  study->add_option("--seed", stf.seed, "random seed");
  study->add_option("--methods", stf.methods, "methods, comma separated (default all)")->delimiter(',');
  study->add_option("--surfaces", stf.surfaces, "surfaces, comma separated")->delimiter(',');
  study->add_option("--r2-values", stf.r2s, "target R^2 values, comma separated")->delimiter(',');
  study->add_option("--gammas", stf.gammas, "gamma values, comma separated")->delimiter(',');
  study->add_option("--n", stf.n, "curves");
  study->add_option("--L", stf.L, "grid points");
  study->add_option("--threads", stf.threads, "worker threads (capped by THREADS)");
  add_model_flags(study, study_m, false);
  study->add_option("--out", stf.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*fit) {
      RunConfig cfg = resolve(fit_m);
      if (fit_ci) cfg.ci = true;
      run_fit(cfg, load(fit_d), fit_out, {true, fit_lev});
    } else if (*dfc) {
      RunConfig cfg = resolve(df_m);
      cfg.ci = false;
      run_fit(cfg, load(df_d), df_out, {false, df_lev});
    } else if (*ci) {
      RunConfig cfg = resolve(ci_m);
      cfg.ci = true;
      run_fit(cfg, load(ci_d), ci_out, {false, false});
    } else if (*pred) {
      run_predict(pf);
    } else if (*sim) {
      run_simulate(sf);
    } else if (*study) {
      return run_study_cmd(stf, study_m);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
