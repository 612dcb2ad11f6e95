#pragma once

#include <cstddef>
#include <vector>

#include "atlas/matrix.hpp"

namespace atlas {

struct PcaOptions {
  double variance_target = 0.95;
  // Centered data is densified for a direct thin SVD when rows * cols is at
  // most this many entries; larger inputs go through the Gram matrix of the
  // smaller side, built without densifying.
  std::size_t dense_budget = std::size_t{1} << 25;
};

struct PcaModel {
  std::vector<double> mean;  // length V
  DenseMatrix components;    // d x V, rows are orthonormal principal axes
  std::vector<double> explained_variance;
  std::vector<double> explained_variance_ratio;
  double variance_target = 0.95;
  std::size_t rank = 0;  // rank of the centered training matrix
  std::size_t n_samples = 0;

  std::size_t n_components() const { return components.rows(); }
  std::size_t n_features() const { return mean.size(); }

  friend bool operator==(const PcaModel&, const PcaModel&) = default;
};

/// Fits PCA and keeps the fewest leading components whose cumulative
/// explained-variance ratio reaches `variance_target` (all `rank`
/// components when rounding keeps the sum just below the target).
///
/// Variances are s_i^2 / (n - 1) from the singular values of the centered
/// data. Each axis is sign-fixed so that its largest-magnitude entry is
/// non-negative.
///
/// Throws std::invalid_argument for fewer than two rows or a target outside
/// (0, 1], and DataError when every row is identical.
PcaModel fit_pca(const SparseMatrix& x, const PcaOptions& options = {});

/// (x - mean) * components^T. Throws std::invalid_argument on a column-count
/// mismatch.
DenseMatrix transform(const SparseMatrix& x, const PcaModel& model);

}  // namespace atlas
