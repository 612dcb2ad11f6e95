#include "atlas/pca.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "atlas/error.hpp"

namespace atlas {
namespace {

struct Spectrum {
  Eigen::VectorXd singular_values;  // descending
  Eigen::MatrixXd right_vectors;    // V x r, columns match singular_values
};

Eigen::VectorXd column_mean(const SparseMatrix& x) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(x.cols()));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const SparseRow row = x.row(r);
    for (std::size_t p = 0; p < row.size(); ++p) mean(row.indices[p]) += row.values[p];
  }
  return mean / static_cast<double>(x.rows());
}

Spectrum dense_svd(const SparseMatrix& x, const Eigen::VectorXd& mean) {
  const auto n = static_cast<Eigen::Index>(x.rows());
  Eigen::MatrixXd centered = (-mean.transpose()).replicate(n, 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    const SparseRow row = x.row(static_cast<std::size_t>(r));
    for (std::size_t p = 0; p < row.size(); ++p) centered(r, row.indices[p]) += row.values[p];
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  return {svd.singularValues(), svd.matrixV()};
}

Eigen::SparseMatrix<double, Eigen::RowMajor> to_eigen(const SparseMatrix& x) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(x.nnz());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const SparseRow row = x.row(r);
    for (std::size_t p = 0; p < row.size(); ++p) {
      triplets.emplace_back(static_cast<int>(r), static_cast<int>(row.indices[p]), row.values[p]);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> m(static_cast<Eigen::Index>(x.rows()),
                                                 static_cast<Eigen::Index>(x.cols()));
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

// Eigen-decomposes the Gram matrix of the implicitly centered data on its
// smaller side. Singular vectors recovered from the other side are
// re-orthonormalized afterwards.
Spectrum gram_svd(const SparseMatrix& x, const Eigen::VectorXd& mean) {
  const auto xs = to_eigen(x);
  const auto n = static_cast<Eigen::Index>(x.rows());
  const auto v = static_cast<Eigen::Index>(x.cols());
  const double nd = static_cast<double>(n);

  Spectrum out;
  if (v <= n) {
    // Xc^T Xc = X^T X - n * mean * mean^T
    Eigen::MatrixXd gram = Eigen::MatrixXd(xs.transpose() * xs);
    gram.noalias() -= nd * mean * mean.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const Eigen::VectorXd vals = eig.eigenvalues().reverse();
    out.singular_values = vals.cwiseMax(0.0).cwiseSqrt();
    out.right_vectors = eig.eigenvectors().rowwise().reverse();
    return out;
  }

  // Xc Xc^T = X X^T - (X m) 1^T - 1 (X m)^T + (m.m) 1 1^T
  const Eigen::VectorXd xm = xs * mean;
  Eigen::MatrixXd gram = Eigen::MatrixXd(xs * xs.transpose());
  gram.colwise() -= xm;
  gram.rowwise() -= xm.transpose();
  gram.array() += mean.squaredNorm();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd vals = eig.eigenvalues().reverse();
  const Eigen::MatrixXd left = eig.eigenvectors().rowwise().reverse();
  out.singular_values = vals.cwiseMax(0.0).cwiseSqrt();
  // v_i = Xc^T u_i / s_i; columns with s_i == 0 are left for the caller to
  // drop via the rank cut.
  const Eigen::VectorXd ones_u = left.colwise().sum().transpose();
  Eigen::MatrixXd right = Eigen::MatrixXd(xs.transpose() * left);
  right.noalias() -= mean * ones_u.transpose();
  for (Eigen::Index i = 0; i < right.cols(); ++i) {
    const double s = out.singular_values(i);
    if (s > 0.0) right.col(i) /= s;
  }
  out.right_vectors = std::move(right);
  return out;
}

std::size_t numerical_rank(const Eigen::VectorXd& s, std::size_t n, std::size_t v) {
  if (s.size() == 0 || s(0) <= 0.0) return 0;
  const double tol = s(0) * static_cast<double>(std::max(n, v)) * std::numeric_limits<double>::epsilon();
  std::size_t rank = 0;
  while (rank < static_cast<std::size_t>(s.size()) && s(static_cast<Eigen::Index>(rank)) > tol) ++rank;
  return rank;
}

}  // namespace

PcaModel fit_pca(const SparseMatrix& x, const PcaOptions& options) {
  if (x.rows() < 2) throw std::invalid_argument("fit_pca: need at least two rows");
  if (!(options.variance_target > 0.0 && options.variance_target <= 1.0)) {
    throw std::invalid_argument("fit_pca: variance_target must be in (0, 1]");
  }
  const std::size_t n = x.rows();
  const std::size_t v = x.cols();
  const Eigen::VectorXd mean = column_mean(x);

  const bool dense = n * v <= options.dense_budget;
  Spectrum spec = dense ? dense_svd(x, mean) : gram_svd(x, mean);

  const std::size_t rank = numerical_rank(spec.singular_values, n, v);
  if (rank == 0) throw DataError("fit_pca: zero variance (all rows are identical)");

  const double denom = static_cast<double>(n - 1);
  std::vector<double> variance(rank);
  double total = 0.0;
  for (std::size_t i = 0; i < rank; ++i) {
    const double s = spec.singular_values(static_cast<Eigen::Index>(i));
    variance[i] = s * s / denom;
    total += variance[i];
  }

  std::size_t d = rank;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < rank; ++i) {
    cumulative += variance[i] / total;
    if (cumulative >= options.variance_target) {
      d = i + 1;
      break;
    }
  }

  Eigen::MatrixXd axes = spec.right_vectors.leftCols(static_cast<Eigen::Index>(d));
  if (!dense) {
    // Restore orthonormality lost in the Gram route; signs are fixed below.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(axes);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(axes.rows(), axes.cols());
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      if (q.col(c).dot(axes.col(c)) < 0.0) q.col(c) = -q.col(c);
    }
    axes = std::move(q);
  }

  PcaModel model;
  model.variance_target = options.variance_target;
  model.rank = rank;
  model.n_samples = n;
  model.mean.assign(mean.data(), mean.data() + mean.size());
  model.components = DenseMatrix(d, v);
  for (std::size_t c = 0; c < d; ++c) {
    const auto col = axes.col(static_cast<Eigen::Index>(c));
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    const double sign = col(arg) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < v; ++j) model.components(c, j) = sign * col(static_cast<Eigen::Index>(j));
    model.explained_variance.push_back(variance[c]);
    model.explained_variance_ratio.push_back(variance[c] / total);
  }
  return model;
}

DenseMatrix transform(const SparseMatrix& x, const PcaModel& model) {
  if (x.cols() != model.n_features()) {
    throw std::invalid_argument("transform: matrix has " + std::to_string(x.cols()) + " columns, model expects " +
                                std::to_string(model.n_features()));
  }
  const std::size_t d = model.n_components();
  std::vector<double> mean_projection(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    const auto axis = model.components.row(c);
    double s = 0.0;
    for (std::size_t j = 0; j < axis.size(); ++j) s += model.mean[j] * axis[j];
    mean_projection[c] = s;
  }
  DenseMatrix out(x.rows(), d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const SparseRow row = x.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      const auto axis = model.components.row(c);
      double s = 0.0;
      for (std::size_t p = 0; p < row.size(); ++p) s += row.values[p] * axis[row.indices[p]];
      out(r, c) = s - mean_projection[c];
    }
  }
  return out;
}

}  // namespace atlas
