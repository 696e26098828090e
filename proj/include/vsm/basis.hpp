#pragma once

// B-spline bases on an interval with equally spaced interior knots, their
// Gram and roughness matrices, and the locally weighted Gram matrices used by
// the adaptive tensor penalty.

#include "vsm/common.hpp"
#include "vsm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace vsm {

enum class PenaltyKind { derivative, difference };

struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::derivative;
  int order = 2;
};

struct BasisSpec {
  double domain_lo = 0.0;
  double domain_hi = 1.0;
  int dim = 10;
  int degree = 3;

  void validate() const {
    if (!(domain_lo < domain_hi) || !std::isfinite(domain_lo) || !std::isfinite(domain_hi))
      throw SpecError("basis: domain must satisfy lo < hi");
    if (degree < 0) throw SpecError("basis: degree must be non-negative");
    if (dim < degree + 1)
      throw SpecError("basis: dim " + std::to_string(dim) + " is below degree + 1 = " + std::to_string(degree + 1));
  }

  /// Full clamped knot vector of length dim + degree + 1.
  std::vector<double> knots() const {
    validate();
    std::vector<double> u;
    u.reserve(dim + degree + 1);
    for (int i = 0; i <= degree; ++i) u.push_back(domain_lo);
    const int spans = dim - degree;
    for (int j = 1; j < spans; ++j) u.push_back(domain_lo + (domain_hi - domain_lo) * j / spans);
    for (int i = 0; i <= degree; ++i) u.push_back(domain_hi);
    return u;
  }

  /// Distinct knot values, domain ends included.
  std::vector<double> breakpoints() const {
    std::vector<double> u = knots();
    u.erase(std::unique(u.begin(), u.end()), u.end());
    return u;
  }
};

inline bool operator==(const BasisSpec& a, const BasisSpec& b) {
  return a.domain_lo == b.domain_lo && a.domain_hi == b.domain_hi && a.dim == b.dim && a.degree == b.degree;
}

namespace detail {

inline int find_span(const std::vector<double>& u, int dim, int degree, double x) {
  if (x >= u[dim]) return dim - 1;
  if (x <= u[degree]) return degree;
  const auto it = std::upper_bound(u.begin() + degree, u.begin() + dim + 1, x);
  return static_cast<int>(it - u.begin()) - 1;
}

/// Values and derivatives up to order n of the degree+1 functions non-zero on span.
/// ders[k][r] is the k-th derivative of basis function span - degree + r.
inline std::vector<std::vector<double>> ders_basis_funs(const std::vector<double>& u, int span, int p, double x,
                                                        int n) {
  std::vector<std::vector<double>> ndu(p + 1, std::vector<double>(p + 1, 0.0));
  std::vector<double> left(p + 1), right(p + 1);
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - u[span + 1 - j];
    right[j] = u[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  std::vector<std::vector<double>> ders(n + 1, std::vector<double>(p + 1, 0.0));
  for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];
  std::vector<std::vector<double>> a(2, std::vector<double>(p + 1, 0.0));
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= n && k <= p; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  double fac = p;
  for (int k = 1; k <= n && k <= p; ++k) {
    for (int j = 0; j <= p; ++j) ders[k][j] *= fac;
    fac *= (p - k);
  }
  return ders;
}

}  // namespace detail

/// Design matrix of the order-th derivative at the given points (points x dim).
/// Points outside the domain raise DomainError unless extrapolate is set, in which
/// case the polynomial piece of the nearest end span is continued.
inline Matrix basis_matrix(const BasisSpec& spec, const Vector& points, int order = 0, bool extrapolate = false) {
  spec.validate();
  if (order < 0) throw SpecError("basis: derivative order must be non-negative");
  const std::vector<double> u = spec.knots();
  const double tol = 1e-12 * (spec.domain_hi - spec.domain_lo);
  Matrix out = Matrix::Zero(points.size(), spec.dim);
  if (order > spec.degree) return out;
  for (Index i = 0; i < points.size(); ++i) {
    double x = points(i);
    if (!std::isfinite(x)) throw DomainError("basis: non-finite evaluation point");
    if (!extrapolate && (x < spec.domain_lo - tol || x > spec.domain_hi + tol))
      throw DomainError("basis: point " + std::to_string(x) + " outside [" + std::to_string(spec.domain_lo) + ", " +
                        std::to_string(spec.domain_hi) + "]");
    if (!extrapolate) x = std::clamp(x, spec.domain_lo, spec.domain_hi);
    const int span = detail::find_span(u, spec.dim, spec.degree, x);
    const auto ders = detail::ders_basis_funs(u, span, spec.degree, x, order);
    for (int r = 0; r <= spec.degree; ++r) out(i, span - spec.degree + r) = ders[order][r];
  }
  return out;
}

/// Integral of a product of two basis functions (or derivatives), exact by
/// per-interval Gauss-Legendre over the given breakpoints.
namespace detail {

inline Matrix integrate_products(const BasisSpec& a, int order_a, const BasisSpec& b, int order_b,
                                 const std::vector<double>& breaks, int nodes, const BasisSpec* weight = nullptr,
                                 int weight_index = -1) {
  const Quadrature q = gauss_legendre(nodes);
  Matrix out = Matrix::Zero(a.dim, b.dim);
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double lo = breaks[k], hi = breaks[k + 1];
    if (!(hi > lo)) continue;
    Vector x(nodes), w(nodes);
    for (int j = 0; j < nodes; ++j) {
      x(j) = lo + 0.5 * (hi - lo) * (q.nodes[j] + 1.0);
      w(j) = 0.5 * (hi - lo) * q.weights[j];
    }
    if (weight) w = w.cwiseProduct(basis_matrix(*weight, x).col(weight_index));
    const Matrix ba = basis_matrix(a, x, order_a);
    const Matrix bb = basis_matrix(b, x, order_b);
    out.noalias() += ba.transpose() * w.asDiagonal() * bb;
  }
  return out;
}

inline std::vector<double> merged_breaks(const BasisSpec& a, const BasisSpec& b) {
  std::vector<double> u = a.breakpoints(), v = b.breakpoints();
  std::vector<double> m;
  std::merge(u.begin(), u.end(), v.begin(), v.end(), std::back_inserter(m));
  m.erase(std::unique(m.begin(), m.end()), m.end());
  std::vector<double> out;
  for (double x : m)
    if (x >= a.domain_lo && x <= a.domain_hi) out.push_back(x);
  return out;
}

}  // namespace detail

/// Gram matrix of order-th derivatives, the roughness penalty P.
inline Matrix derivative_penalty(const BasisSpec& spec, int order) {
  spec.validate();
  if (order < 0 || order > spec.degree)
    throw SpecError("penalty: derivative order " + std::to_string(order) + " exceeds degree " +
                    std::to_string(spec.degree));
  const int nodes = (2 * (spec.degree - order) + 2) / 2 + 1;
  Matrix p = detail::integrate_products(spec, order, spec, order, spec.breakpoints(), nodes);
  return 0.5 * (p + p.transpose());
}

/// D^T D with D the order-th difference operator on coefficients.
inline Matrix difference_penalty(int dim, int order) {
  if (order < 0 || order >= dim) throw SpecError("difference penalty: order must be in [0, dim)");
  Matrix d = Matrix::Identity(dim, dim);
  for (int k = 0; k < order; ++k) {
    Matrix next(d.rows() - 1, dim);
    for (Index i = 0; i + 1 < d.rows(); ++i) next.row(i) = d.row(i + 1) - d.row(i);
    d = next;
  }
  return d.transpose() * d;
}

/// Q = integral of b b^T over the domain.
inline Matrix exact_gram(const BasisSpec& spec) { return derivative_penalty(spec, 0); }

/// Q^{b*_k} = integral of b*_k b b^T, with b*_k the k-th (zero-based) function of weight_spec.
inline Matrix weighted_gram(const BasisSpec& spec, const BasisSpec& weight_spec, int k) {
  spec.validate();
  weight_spec.validate();
  if (k < 0 || k >= weight_spec.dim) throw SpecError("weighted gram: weight index out of range");
  if (weight_spec.domain_lo != spec.domain_lo || weight_spec.domain_hi != spec.domain_hi)
    throw SpecError("weighted gram: weight basis must share the domain");
  const int nodes = (2 * spec.degree + weight_spec.degree + 2) / 2 + 1;
  Matrix g = detail::integrate_products(spec, 0, spec, 0, detail::merged_breaks(spec, weight_spec), nodes,
                                        &weight_spec, k);
  return 0.5 * (g + g.transpose());
}

inline Matrix penalty_matrix(const BasisSpec& spec, const PenaltySpec& pen) {
  return pen.kind == PenaltyKind::derivative ? derivative_penalty(spec, pen.order)
                                             : difference_penalty(spec.dim, pen.order);
}

/// A basis evaluated at a point set, with its Gram and penalty matrices.
struct EvaluatedBasis {
  BasisSpec spec;
  PenaltySpec penalty_spec;
  Vector points;
  Matrix design;
  Matrix gram;
  Matrix penalty;

  Index size() const { return spec.dim; }
};

inline EvaluatedBasis build_basis(const BasisSpec& spec, const Vector& points, const PenaltySpec& pen = {}) {
  spec.validate();
  EvaluatedBasis b;
  b.spec = spec;
  b.penalty_spec = pen;
  b.points = points;
  b.design = basis_matrix(spec, points);
  b.gram = exact_gram(spec);
  b.penalty = penalty_matrix(spec, pen);
  return b;
}

inline Matrix eval_basis_deriv(const EvaluatedBasis& basis, const Vector& points, int order) {
  if (order > basis.spec.degree)
    throw SpecError("derivative order " + std::to_string(order) + " exceeds degree " + std::to_string(basis.spec.degree));
  return basis_matrix(basis.spec, points, order);
}

/// Numerical column rank of a design matrix.
inline Index design_rank(const Matrix& b) {
  Eigen::JacobiSVD<Matrix> svd(b);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  Index r = 0;
  while (r < sv.size() && sv(r) > 1e-10 * sv(0)) ++r;
  return r;
}

}  // namespace vsm
