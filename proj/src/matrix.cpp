#include "atlas/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace atlas {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw std::invalid_argument("DenseMatrix: value count does not match shape");
  }
}

bool DenseMatrix::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double SparseRow::squared_norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return s;
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
                           std::vector<std::uint32_t> col_indices, std::vector<double> values)
    : cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (row_offsets_.size() != rows + 1) {
    throw std::invalid_argument("SparseMatrix: row_offsets must have rows + 1 entries");
  }
  check_structure();
}

void SparseMatrix::check_structure() const {
  if (row_offsets_.front() != 0 || row_offsets_.back() != col_indices_.size() ||
      col_indices_.size() != values_.size()) {
    throw std::invalid_argument("SparseMatrix: inconsistent compressed-row arrays");
  }
  for (std::size_t r = 0; r + 1 < row_offsets_.size(); ++r) {
    if (row_offsets_[r] > row_offsets_[r + 1]) {
      throw std::invalid_argument("SparseMatrix: row offsets must be non-decreasing");
    }
    for (std::size_t p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) {
      if (col_indices_[p] >= cols_) throw std::invalid_argument("SparseMatrix: column out of range");
      if (p > row_offsets_[r] && col_indices_[p] <= col_indices_[p - 1]) {
        throw std::invalid_argument("SparseMatrix: column indices must be strictly increasing");
      }
    }
  }
}

SparseMatrix SparseMatrix::from_dense(const DenseMatrix& dense) {
  SparseMatrix out(dense.cols());
  std::vector<std::uint32_t> idx;
  std::vector<double> val;
  for (std::size_t r = 0; r < dense.rows(); ++r) {
    idx.clear();
    val.clear();
    for (std::size_t c = 0; c < dense.cols(); ++c) {
      if (dense(r, c) != 0.0) {
        idx.push_back(static_cast<std::uint32_t>(c));
        val.push_back(dense(r, c));
      }
    }
    out.push_row(idx, val);
  }
  return out;
}

void SparseMatrix::push_row(std::span<const std::uint32_t> indices, std::span<const double> values) {
  if (indices.size() != values.size()) {
    throw std::invalid_argument("SparseMatrix::push_row: size mismatch");
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= cols_ || (i > 0 && indices[i] <= indices[i - 1])) {
      throw std::invalid_argument("SparseMatrix::push_row: indices must be increasing and in range");
    }
  }
  col_indices_.insert(col_indices_.end(), indices.begin(), indices.end());
  values_.insert(values_.end(), values.begin(), values.end());
  row_offsets_.push_back(col_indices_.size());
}

SparseRow SparseMatrix::row(std::size_t r) const {
  const std::size_t begin = row_offsets_[r];
  const std::size_t len = row_offsets_[r + 1] - begin;
  return {std::span<const std::uint32_t>(col_indices_.data() + begin, len),
          std::span<const double>(values_.data() + begin, len)};
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const SparseRow rr = row(r);
  for (std::size_t p = 0; p < rr.size(); ++p) {
    if (rr.indices[p] == c) return rr.values[p];
    if (rr.indices[p] > c) break;
  }
  return 0.0;
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix out(rows(), cols_);
  for (std::size_t r = 0; r < rows(); ++r) {
    const SparseRow rr = row(r);
    for (std::size_t p = 0; p < rr.size(); ++p) out(r, rr.indices[p]) = rr.values[p];
  }
  return out;
}

double sparse_dot(const SparseRow& a, const SparseRow& b) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a.indices[i] == b.indices[j]) {
      s += a.values[i++] * b.values[j++];
    } else if (a.indices[i] < b.indices[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return s;
}

double squared_distance(const SparseRow& a, const SparseRow& b) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    double diff;
    if (j == b.size() || (i < a.size() && a.indices[i] < b.indices[j])) {
      diff = a.values[i++];
    } else if (i == a.size() || b.indices[j] < a.indices[i]) {
      diff = b.values[j++];
    } else {
      diff = a.values[i++] - b.values[j++];
    }
    s += diff * diff;
  }
  return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace atlas
