#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace atlas {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool all_finite() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Read-only view of one compressed row.
struct SparseRow {
  std::span<const std::uint32_t> indices;
  std::span<const double> values;

  std::size_t size() const { return indices.size(); }
  double squared_norm() const;
};

/// Compressed-sparse-row matrix. Column indices are strictly increasing
/// within each row.
class SparseMatrix {
 public:
  SparseMatrix() : row_offsets_{0} {}
  explicit SparseMatrix(std::size_t cols) : cols_(cols), row_offsets_{0} {}
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
               std::vector<std::uint32_t> col_indices, std::vector<double> values);

  static SparseMatrix from_dense(const DenseMatrix& dense);

  // Appends a row; `indices` must be strictly increasing and < cols().
  void push_row(std::span<const std::uint32_t> indices, std::span<const double> values);

  std::size_t rows() const { return row_offsets_.size() - 1; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  SparseRow row(std::size_t r) const;
  double at(std::size_t r, std::size_t c) const;

  DenseMatrix to_dense() const;

  const std::vector<std::size_t>& row_offsets() const { return row_offsets_; }
  const std::vector<std::uint32_t>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  void check_structure() const;

  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_;
  std::vector<std::uint32_t> col_indices_;
  std::vector<double> values_;
};

double sparse_dot(const SparseRow& a, const SparseRow& b);

// Exact squared Euclidean distance computed over the union of the supports.
double squared_distance(const SparseRow& a, const SparseRow& b);

double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace atlas
