#pragma once

// Reference computations used only by the tests. Each follows the textbook
// definition directly and shares no code path with the library routine it checks.

#include "vsm/common.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using vsm::Index;
using vsm::Matrix;
using vsm::Vector;

/// Clamped knot vector built from scratch.
inline std::vector<double> clamped_knots(double lo, double hi, int dim, int degree) {
  std::vector<double> u(degree + 1, lo);
  const int spans = dim - degree;
  for (int j = 1; j < spans; ++j) u.push_back(lo + (hi - lo) * j / spans);
  for (int i = 0; i <= degree; ++i) u.push_back(hi);
  return u;
}

/// Cox-de Boor recursion for B_{i,p}(x); the right end of the domain belongs to the last span.
inline double cox_de_boor(const std::vector<double>& u, int i, int p, double x) {
  if (p == 0) {
    const double hi = u.back();
    if (x == hi) {
      // last non-degenerate span owns the right end point
      int last = static_cast<int>(u.size()) - 2;
      while (last > 0 && !(u[last] < u[last + 1])) --last;
      return i == last ? 1.0 : 0.0;
    }
    return (u[i] <= x && x < u[i + 1]) ? 1.0 : 0.0;
  }
  double a = 0.0, b = 0.0;
  if (u[i + p] > u[i]) a = (x - u[i]) / (u[i + p] - u[i]) * cox_de_boor(u, i, p - 1, x);
  if (u[i + p + 1] > u[i + 1]) b = (u[i + p + 1] - x) / (u[i + p + 1] - u[i + 1]) * cox_de_boor(u, i + 1, p - 1, x);
  return a + b;
}

/// m-th derivative through the derivative recursion on lower-degree splines.
inline double cox_de_boor_deriv(const std::vector<double>& u, int i, int p, double x, int m) {
  if (m == 0) return cox_de_boor(u, i, p, x);
  if (p == 0) return 0.0;
  double a = 0.0, b = 0.0;
  if (u[i + p] > u[i]) a = p / (u[i + p] - u[i]) * cox_de_boor_deriv(u, i, p - 1, x, m - 1);
  if (u[i + p + 1] > u[i + 1]) b = p / (u[i + p + 1] - u[i + 1]) * cox_de_boor_deriv(u, i + 1, p - 1, x, m - 1);
  return a - b;
}

inline double simpson_step(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                           double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol || std::abs(delta) <= 1e-14 * (std::abs(left) + std::abs(right))) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

/// Adaptive Simpson quadrature. The interval is first cut into `pieces` equal parts so
/// that a kink cannot hide between the initial sample points.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol = 1e-12,
                               int pieces = 16, int depth = 30) {
  double total = 0.0;
  const double h = (b - a) / pieces;
  for (int k = 0; k < pieces; ++k) {
    const double lo = a + k * h, hi = lo + h, mid = 0.5 * (lo + hi);
    const double fa = f(lo), fm = f(mid), fb = f(hi);
    total += simpson_step(f, lo, hi, fa, fm, fb, h / 6.0 * (fa + 4.0 * fm + fb), tol / pieces, depth);
  }
  return total;
}

inline Matrix random_matrix(vsm::Rng& rng, Index r, Index c) {
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

inline Vector random_vector(vsm::Rng& rng, Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

inline Matrix random_spd(vsm::Rng& rng, Index n, double ridge = 0.5) {
  const Matrix a = random_matrix(rng, n, n);
  Matrix s = a * a.transpose() / static_cast<double>(n);
  s.diagonal().array() += ridge;
  return s;
}

/// Explicit Kronecker product, element by element.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      for (Index k = 0; k < b.rows(); ++k)
        for (Index l = 0; l < b.cols(); ++l) out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

inline Vector vec(const Matrix& m) {
  Vector v(m.size());
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) v(j * m.rows() + i) = m(i, j);
  return v;
}

/// Dense solve through a full-pivot LU, independent of the Cholesky paths.
inline Matrix solve(const Matrix& a, const Matrix& b) { return a.fullPivLu().solve(b); }

/// Trace of each diagonal-row block sum: d_l = sum_m tr(H_{lm}), blocks of size n.
inline Vector block_trace_df(const Matrix& H, Index n, Index L) {
  Vector d = Vector::Zero(L);
  for (Index l = 0; l < L; ++l)
    for (Index m = 0; m < L; ++m)
      for (Index i = 0; i < n; ++i) d(l) += H(l * n + i, m * n + i);
  return d;
}

/// Dense hat matrix of a linear map on n x L matrices, from unit inputs.
inline Matrix hat_by_probing(const std::function<Matrix(const Matrix&)>& map, Index n, Index L) {
  Matrix H(n * L, n * L);
  for (Index l = 0; l < L; ++l)
    for (Index i = 0; i < n; ++i) {
      Matrix e = Matrix::Zero(n, L);
      e(i, l) = 1.0;
      H.col(l * n + i) = vec(map(e));
    }
  return H;
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double den = std::max(b.norm(), 1e-300);
  return (a - b).norm() / den;
}

}  // namespace oracle
