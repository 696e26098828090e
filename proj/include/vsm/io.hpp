#pragma once

// CSV datasets, canonical float text, JSON run configurations and atomic file writes.

#include "vsm/common.hpp"
#include "vsm/models.hpp"
#include "vsm/tensorfit.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <unistd.h>

namespace vsm {

using json = nlohmann::json;

/// 17 significant digits: parses back to the identical double.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& text, const std::string& where) {
  std::size_t b = text.find_first_not_of(" \t\r");
  std::size_t e = text.find_last_not_of(" \t\r");
  if (b == std::string::npos) throw DomainError(where + ": empty field");
  const char* first = text.data() + b;
  const char* last = text.data() + e + 1;
  if (*first == '+') ++first;
  double v = 0.0;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw DomainError(where + ": cannot parse '" + text + "' as a number");
  if (!std::isfinite(v)) throw DomainError(where + ": non-finite value");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

/// Rows are curves: column 0 holds t_i, the remaining columns y_i(s_l).
struct Dataset {
  Vector t;
  Vector s;
  Matrix Y;
  std::vector<std::string> warnings;
};

inline constexpr Index kMinCurves = 4;
inline constexpr Index kMinGridPoints = 4;

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> text_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string::npos) lines.pop_back();
  return lines;
}

/// Grid values from a file holding one number per line (an optional non-numeric header is skipped).
inline Vector parse_grid_text(const std::string& text, const std::string& name) {
  std::vector<double> v;
  const auto lines = text_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i == 0) {
      double tmp;
      const std::string& f = lines[0];
      if (std::from_chars(f.data(), f.data() + f.size(), tmp).ec != std::errc()) continue;
    }
    for (const auto& cell : split_csv_line(lines[i]))
      v.push_back(parse_double(cell, name + " line " + std::to_string(i + 1)));
  }
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline Dataset parse_dataset(const std::string& text, const std::optional<Vector>& grid = std::nullopt,
                             const std::string& name = "dataset") {
  const auto lines = text_lines(text);
  if (lines.empty()) throw DomainError(name + ": empty file");
  const auto header = split_csv_line(lines[0]);
  const Index L = static_cast<Index>(header.size()) - 1;
  if (L < 1) throw DomainError(name + ": need a t column and at least one s column");
  Dataset d;
  if (grid) {
    if (grid->size() != L)
      throw DimensionError(name + ": grid has " + std::to_string(grid->size()) + " points but the data has " +
                           std::to_string(L) + " columns");
    d.s = *grid;
  } else {
    d.s.resize(L);
    for (Index l = 0; l < L; ++l) {
      const std::string& h = header[l + 1];
      if (h.rfind("s=", 0) != 0)
        throw DomainError(name + ": header cell '" + h + "' is not of the form s=<value>; supply a grid file");
      d.s(l) = parse_double(h.substr(2), name + " header column " + std::to_string(l + 2));
    }
  }
  for (Index l = 1; l < L; ++l)
    if (!(d.s(l) > d.s(l - 1))) throw DomainError(name + ": s grid must be strictly increasing");
  const Index n = static_cast<Index>(lines.size()) - 1;
  if (n < 1) throw DomainError(name + ": no data rows");
  d.t.resize(n);
  d.Y.resize(n, L);
  for (Index i = 0; i < n; ++i) {
    const auto cells = split_csv_line(lines[i + 1]);
    const std::string where = name + " row " + std::to_string(i + 2);
    if (static_cast<Index>(cells.size()) != L + 1)
      throw DimensionError(where + ": expected " + std::to_string(L + 1) + " fields, found " +
                           std::to_string(cells.size()));
    d.t(i) = parse_double(cells[0], where + " column 1 (t)");
    for (Index l = 0; l < L; ++l) d.Y(i, l) = parse_double(cells[l + 1], where + " column " + std::to_string(l + 2));
  }
  if (n < kMinCurves) throw InsufficientSampleError(name + ": need at least " + std::to_string(kMinCurves) + " curves");
  if (L < kMinGridPoints)
    throw InsufficientSampleError(name + ": need at least " + std::to_string(kMinGridPoints) + " grid points");
  std::set<double> seen;
  for (Index i = 0; i < n; ++i)
    if (!seen.insert(d.t(i)).second) d.warnings.push_back(name + ": duplicate t value " + format_double(d.t(i)));
  return d;
}

inline Dataset read_dataset(const std::string& path, const std::optional<std::string>& grid_path = std::nullopt) {
  std::optional<Vector> grid;
  if (grid_path) grid = parse_grid_text(read_text(*grid_path), *grid_path);
  return parse_dataset(read_text(path), grid, path);
}

inline std::string dataset_csv(const Vector& t, const Vector& s, const Matrix& Y) {
  std::string out = "t";
  for (Index l = 0; l < s.size(); ++l) out += ",s=" + format_double(s(l));
  out += '\n';
  for (Index i = 0; i < Y.rows(); ++i) {
    out += format_double(t(i));
    for (Index l = 0; l < Y.cols(); ++l) out += ',' + format_double(Y(i, l));
    out += '\n';
  }
  return out;
}

inline std::string dataset_csv(const Dataset& d) { return dataset_csv(d.t, d.s, d.Y); }

inline std::string matrix_csv(const Matrix& m) {
  std::string out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline Matrix parse_matrix_csv(const std::string& text, const std::string& name) {
  const auto lines = text_lines(text);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<double> r;
    for (const auto& c : split_csv_line(lines[i])) r.push_back(parse_double(c, name + " line " + std::to_string(i + 1)));
    if (!rows.empty() && r.size() != rows[0].size()) throw DimensionError(name + ": ragged rows");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DomainError(name + ": empty matrix");
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

/// Writes to a temporary sibling and renames it into place.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DomainError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw DomainError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

/// Files of one command, written only after every computation succeeded.
class OutputSet {
 public:
  void add(std::filesystem::path path, std::string content) { files_.emplace_back(std::move(path), std::move(content)); }
  void commit() const {
    for (const auto& [p, c] : files_) atomic_write(p, c);
  }

 private:
  std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

/// Everything a fit-type command needs; unknown JSON keys are rejected.
struct RunConfig {
  Method method = Method::two_step_pen;
  ModelConfig model;
  bool ci = false;
  double z = 2.0;
  int eval_t_points = 50;
  int eval_s_points = 50;
  bool timing = false;
};

namespace detail {

inline PenaltySpec penalty_from_json(const json& j, const std::string& key) {
  if (!j.is_object()) throw SpecError("config: '" + key + "' must be an object");
  PenaltySpec p;
  for (const auto& [k, v] : j.items()) {
    if (k == "kind") {
      const std::string s = v.get<std::string>();
      if (s == "derivative") p.kind = PenaltyKind::derivative;
      else if (s == "difference") p.kind = PenaltyKind::difference;
      else throw SpecError("config: " + key + ".kind must be 'derivative' or 'difference'");
    } else if (k == "order") {
      p.order = v.get<int>();
    } else {
      throw SpecError("config: unknown key '" + key + "." + k + "'");
    }
  }
  return p;
}

inline json penalty_to_json(const PenaltySpec& p) {
  return {{"kind", p.kind == PenaltyKind::derivative ? "derivative" : "difference"}, {"order", p.order}};
}

inline std::pair<double, double> domain_from_json(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2) throw SpecError("config: '" + key + "' must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace detail

/// Applies a JSON object on top of cfg.
inline void apply_config_json(RunConfig& cfg, const json& j) {
  if (!j.is_object()) throw SpecError("config: top level must be an object");
  ModelConfig& m = cfg.model;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "method") cfg.method = parse_method(v.get<std::string>());
      else if (k == "kt") m.kt = v.get<int>();
      else if (k == "ks") m.ks = v.get<int>();
      else if (k == "ks_tp") m.ks_tp = v.get<int>();
      else if (k == "ks_star") m.ks_star = v.get<int>();
      else if (k == "degree") m.degree = v.get<int>();
      else if (k == "degree_star") m.degree_star = v.get<int>();
      else if (k == "penalty_t") m.penalty_t = detail::penalty_from_json(v, k);
      else if (k == "penalty_s") m.penalty_s = detail::penalty_from_json(v, k);
      else if (k == "t_domain") m.t_domain = detail::domain_from_json(v, k);
      else if (k == "s_domain") m.s_domain = detail::domain_from_json(v, k);
      else if (k == "lambdas") {
        const auto vals = v.get<std::vector<double>>();
        m.tp_lambdas = Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size()));
      } else if (k == "lambda_t") m.lambda_t = v.get<double>();
      else if (k == "lambda_s") m.lambda_s = v.get<double>();
      else if (k == "components") m.components = v.get<Index>();
      else if (k == "variance_share") m.variance_share = v.get<double>();
      else if (k == "max_components") m.max_components = v.get<int>();
      else if (k == "cv_folds") m.cv_folds = v.get<int>();
      else if (k == "cv_repeats") m.cv_repeats = v.get<int>();
      else if (k == "seed") m.seed = v.get<std::uint64_t>();
      else if (k == "k_range") m.k_range = v.get<std::vector<int>>();
      else if (k == "reml_restarts") m.reml_restarts = v.get<int>();
      else if (k == "max_coef") m.max_coef = v.get<Index>();
      else if (k == "ci") cfg.ci = v.get<bool>();
      else if (k == "z") cfg.z = v.get<double>();
      else if (k == "eval_t_points") cfg.eval_t_points = v.get<int>();
      else if (k == "eval_s_points") cfg.eval_s_points = v.get<int>();
      else if (k == "timing") cfg.timing = v.get<bool>();
      else throw SpecError("config: unknown key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw SpecError(std::string("config: ") + e.what());
  }
  if (m.cv_folds < 2) throw SpecError("config: cv_folds must be at least 2");
  if (cfg.eval_t_points < 1 || cfg.eval_s_points < 1) throw SpecError("config: evaluation grids need points");
}

inline json basis_to_json(const BasisSpec& b) {
  return {{"domain", {b.domain_lo, b.domain_hi}}, {"dim", b.dim}, {"degree", b.degree}};
}

inline BasisSpec basis_from_json(const json& j) {
  BasisSpec b;
  b.domain_lo = j.at("domain").at(0).get<double>();
  b.domain_hi = j.at("domain").at(1).get<double>();
  b.dim = j.at("dim").get<int>();
  b.degree = j.at("degree").get<int>();
  b.validate();
  return b;
}

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline std::vector<double> to_std(const std::vector<double>& v) { return v; }

}  // namespace vsm
