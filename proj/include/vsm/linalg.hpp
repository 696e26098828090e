#pragma once

#include "vsm/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace vsm {

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Column-stacking vectorization.
inline Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

inline Matrix unvec(const Vector& v, Index rows, Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

inline Eigen::LLT<Matrix> cholesky_or_throw(const Matrix& m, const std::string& what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw ConditioningError(what + ": matrix is not positive definite");
  const Vector d = llt.matrixLLT().diagonal();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (!(d.minCoeff() > 1e-13 * dmax) || !std::isfinite(dmax))
    throw ConditioningError(what + ": matrix is numerically singular");
  return llt;
}

inline double logdet_llt(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

/// Symmetric PSD square root; eigenvalues below rel_clamp * max are clamped to that floor.
inline Matrix sym_sqrt(const Matrix& s, double rel_clamp = 0.0) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
  Vector ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  if (ev.minCoeff() < -1e-10 * std::max(top, 1e-300))
    throw ConditioningError("matrix square root: matrix is not positive semi-definite");
  ev = ev.cwiseMax(rel_clamp * top);
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

inline Matrix sym_inv_sqrt(const Matrix& s, double rel_clamp = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
  const Vector ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  if (!(ev.minCoeff() > rel_clamp * top))
    throw ConditioningError("inverse square root: matrix is not positive definite");
  return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

/// Orthonormal bases of the null space and range of a symmetric PSD matrix.
struct SymSplit {
  Matrix null_basis;
  Matrix range_basis;
};

inline SymSplit split_null_range(const Matrix& s, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
  const Vector& ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Index q = 0;
  while (q < ev.size() && ev(q) < rel_tol * top) ++q;
  return {es.eigenvectors().leftCols(q), es.eigenvectors().rightCols(ev.size() - q)};
}

/// Log-determinant of a symmetric PD matrix, Cholesky first and eigenvalues as fallback.
inline double logdet_sym(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) return logdet_llt(llt);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const double floor = 1e-300;
  return es.eigenvalues().cwiseMax(floor).array().log().sum();
}

/// Gauss-Legendre nodes and weights on [-1, 1].
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline Quadrature gauss_legendre(int n) {
  if (n < 1) throw SpecError("gauss_legendre: need at least one node");
  // P_n(x) and P_n'(x) by the three-term recurrence.
  auto legendre = [n](double x, double& p, double& dp) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    p = p1;
    dp = n * (x * p1 - p0) / (x * x - 1.0);
  };
  Quadrature q{std::vector<double>(n), std::vector<double>(n)};
  const double pi = std::acos(-1.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double p, dp;
    for (int it = 0; it < 100; ++it) {
      legendre(x, p, dp);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    legendre(x, p, dp);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    q.nodes[i] = -x;
    q.nodes[n - 1 - i] = x;
    q.weights[i] = w;
    q.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) q.nodes[n / 2] = 0.0;
  return q;
}

/// Composite Gauss-Legendre rule on [lo, hi] with equal panels.
inline Quadrature composite_gauss(double lo, double hi, int panels, int nodes_per_panel) {
  const Quadrature base = gauss_legendre(nodes_per_panel);
  Quadrature q;
  const double h = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * h;
    for (int k = 0; k < nodes_per_panel; ++k) {
      q.nodes.push_back(a + 0.5 * h * (base.nodes[k] + 1.0));
      q.weights.push_back(0.5 * h * base.weights[k]);
    }
  }
  return q;
}

struct NelderMeadOptions {
  double initial_step = 1.5;
  double ftol = 1e-10;
  double xtol = 1e-7;
  int max_evals = 3000;
};

struct NelderMeadResult {
  Vector x;
  double f = 0.0;
  int evals = 0;
};

inline NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                                    const NelderMeadOptions& opt = {}) {
  const Index m = x0.size();
  std::vector<Vector> pts(m + 1, x0);
  std::vector<double> val(m + 1);
  for (Index j = 0; j < m; ++j) pts[j + 1](j) += opt.initial_step;
  int evals = 0;
  auto eval = [&](const Vector& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::max();
  };
  for (Index j = 0; j <= m; ++j) val[j] = eval(pts[j]);
  std::vector<Index> order(m + 1);
  while (evals < opt.max_evals) {
    for (Index j = 0; j <= m; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return val[a] < val[b]; });
    const Index best = order[0], worst = order[m], second = order[m - 1];
    double diam = 0.0;
    for (Index j = 1; j <= m; ++j) diam = std::max(diam, (pts[order[j]] - pts[best]).cwiseAbs().maxCoeff());
    if (val[worst] - val[best] <= opt.ftol * (1.0 + std::abs(val[best])) && diam <= opt.xtol) break;
    if (diam <= 1e-3 * opt.xtol) break;
    Vector centroid = Vector::Zero(m);
    for (Index j = 0; j < m; ++j) centroid += pts[order[j]];
    centroid /= static_cast<double>(m);
    const Vector xr = centroid + (centroid - pts[worst]);
    const double fr = eval(xr);
    if (fr < val[best]) {
      const Vector xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        val[worst] = fe;
      } else {
        pts[worst] = xr;
        val[worst] = fr;
      }
    } else if (fr < val[second]) {
      pts[worst] = xr;
      val[worst] = fr;
    } else {
      const bool outside = fr < val[worst];
      const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                                : Vector(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = eval(xc);
      if (fc < std::min(fr, val[worst])) {
        pts[worst] = xc;
        val[worst] = fc;
      } else {
        for (Index j = 1; j <= m; ++j) {
          const Index k = order[j];
          pts[k] = pts[best] + 0.5 * (pts[k] - pts[best]);
          val[k] = eval(pts[k]);
        }
      }
    }
  }
  Index best = 0;
  for (Index j = 1; j <= m; ++j)
    if (val[j] < val[best]) best = j;
  return {pts[best], val[best], evals};
}

/// Golden-section minimization on [a, b]; returns the abscissa.
inline double golden_section(const std::function<double(double)>& f, double a, double b, double tol) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? c : d;
}

/// Worker count: the requested value, capped by the THREADS environment variable.
inline int thread_budget(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return std::max(1, n);
}

/// Runs fn(i) for i in [0, count). Results must be written to per-index slots by fn.
inline void parallel_for(Index count, int threads, const std::function<void(Index)>& fn) {
  threads = static_cast<int>(std::min<Index>(threads, count));
  if (threads <= 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (Index i = next++; i < count; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline Vector log_grid(double lo, double hi, int count) {
  Vector g(count);
  for (int i = 0; i < count; ++i)
    g(i) = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / std::max(1, count - 1));
  return g;
}

}  // namespace vsm
