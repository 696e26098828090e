#pragma once

#include "vsm/common.hpp"

#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace vsm {

struct CvResult {
  std::vector<double> grid;
  std::vector<double> errors;  ///< mean squared prediction error per grid value
  std::size_t best = 0;

  double best_value() const { return grid.at(best); }
};

/// Given training rows and held-out t values, returns held-out predictions for each grid value.
using CvFitter = std::function<std::vector<Matrix>(const Matrix& y_train, const Vector& t_train,
                                                   const Vector& t_test, const std::vector<double>& grid)>;

/// K-fold cross-validation over rows with a seeded shuffle. The grid must be ordered
/// from least to most complex; ties resolve to the earlier entry.
inline CvResult cross_validate(const CvFitter& fitter, const Matrix& Y, const Vector& t,
                               const std::vector<double>& grid, int folds = 5, int repeats = 1,
                               std::uint64_t seed = 1) {
  const Index n = Y.rows();
  if (grid.empty()) throw SpecError("cross_validate: empty grid");
  if (folds < 2) throw SpecError("cross_validate: need at least two folds");
  if (repeats < 1) throw SpecError("cross_validate: need at least one repeat");
  if (folds > n)
    throw InsufficientSampleError("cross_validate: " + std::to_string(folds) + " folds need at least as many rows, got " +
                                  std::to_string(n));
  if (n - (n + folds - 1) / folds < 2)
    throw InsufficientSampleError("cross_validate: " + std::to_string(folds) + " folds over " + std::to_string(n) +
                                  " rows leaves a training fold with fewer than two rows");
  CvResult res;
  res.grid = grid;
  res.errors.assign(grid.size(), 0.0);
  for (int r = 0; r < repeats; ++r) {
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    Rng rng(derive_seed(seed, 0xc5, static_cast<std::uint64_t>(r)));
    rng.shuffle(perm);
    for (int f = 0; f < folds; ++f) {
      std::vector<Index> tr, te;
      for (Index p = 0; p < n; ++p) (p % folds == f ? te : tr).push_back(perm[p]);
      Matrix ytr(tr.size(), Y.cols()), yte(te.size(), Y.cols());
      Vector ttr(tr.size()), tte(te.size());
      for (std::size_t i = 0; i < tr.size(); ++i) {
        ytr.row(i) = Y.row(tr[i]);
        ttr(i) = t(tr[i]);
      }
      for (std::size_t i = 0; i < te.size(); ++i) {
        yte.row(i) = Y.row(te[i]);
        tte(i) = t(te[i]);
      }
      const std::vector<Matrix> preds = fitter(ytr, ttr, tte, grid);
      if (preds.size() != grid.size()) throw SpecError("cross_validate: fitter returned the wrong number of predictions");
      for (std::size_t g = 0; g < grid.size(); ++g) res.errors[g] += (preds[g] - yte).squaredNorm();
    }
  }
  const double denom = static_cast<double>(n) * static_cast<double>(Y.cols()) * repeats;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    res.errors[g] /= denom;
    if (res.errors[g] < best) {
      best = res.errors[g];
      res.best = g;
    }
  }
  return res;
}

}  // namespace vsm
