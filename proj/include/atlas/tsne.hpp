#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "atlas/matrix.hpp"

namespace atlas {

enum class TsneInit { kGaussian, kPca };

TsneInit parse_tsne_init(std::string_view name);
std::string_view to_string(TsneInit init);

struct TsneConfig {
  double perplexity = 30.0;
  int n_iter = 1000;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double learning_rate = 200.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iter = 250;
  double theta = 0.5;  // 0 selects the exact O(n^2) gradient
  std::uint64_t seed = 0;
  TsneInit init = TsneInit::kGaussian;
  // Above this many distinct rows neighbours come from a vantage-point tree
  // instead of a full scan.
  std::size_t exact_knn_max = 10000;
  int threads = 1;

  friend bool operator==(const TsneConfig&, const TsneConfig&) = default;
};

/// Throws std::invalid_argument unless perplexity < (n - 1) / 3 and the
/// remaining parameters are in range.
void validate(const TsneConfig& config, std::size_t n_points);

/// Square sparse matrix of affinities in compressed-row form.
struct AffinityMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<std::uint32_t> columns;
  std::vector<double> values;

  std::size_t nnz() const { return values.size(); }
  double at(std::size_t i, std::size_t j) const;
  double sum() const;
};

struct GaussianConditionals {
  AffinityMatrix conditional;  // row i holds p(j | i); rows sum to 1
  std::vector<double> beta;    // 1 / (2 sigma_i^2)
  std::vector<double> entropy; // nats
};

inline constexpr int kBandwidthMaxSteps = 100;
inline constexpr double kEntropyTolerance = 1e-5;
// Also required of exp(H) itself, which matters once perplexity exceeds ~10.
inline constexpr double kPerplexityTolerance = 5e-5;

/// Per-point Gaussian conditionals with the bandwidth found by bisection so
/// that exp(H_i) (equivalently 2^H in bits) matches the perplexity.
/// `n_neighbors` = 0 uses every other point; otherwise the support is the
/// nearest n_neighbors rows. Optional `weights` scale each column's kernel
/// (multiplicity of collapsed duplicates).
GaussianConditionals gaussian_conditionals(const SparseMatrix& x, double perplexity, std::size_t n_neighbors = 0,
                                           std::span<const double> weights = {}, int threads = 1,
                                           std::size_t exact_knn_max = 10000);

/// p_ij = (p(j|i) + p(i|j)) / 2n.
AffinityMatrix symmetrize(const AffinityMatrix& conditional);

/// Joint input affinities. theta > 0 restricts each conditional to the
/// floor(3 * perplexity) nearest neighbours. Needs at least four rows and
/// perplexity <= n - 1.
AffinityMatrix conditional_affinities(const SparseMatrix& x, double perplexity, double theta = 0.5,
                                      int threads = 1);

/// KL(P || Q) with exact Student-t normalization.
double kl_divergence(const AffinityMatrix& p, const DenseMatrix& y);

/// Exact gradient of KL(p_scale * P || Q) with respect to Y.
DenseMatrix exact_gradient(const AffinityMatrix& p, const DenseMatrix& y, double p_scale = 1.0, int threads = 1);

/// Same gradient with the repulsive term approximated on a quadtree.
DenseMatrix barnes_hut_gradient(const AffinityMatrix& p, const DenseMatrix& y, double theta, double p_scale = 1.0,
                                int threads = 1);

struct Embedding2D {
  DenseMatrix y;  // n x 2
  double final_kl = 0.0;
  std::vector<std::pair<int, double>> kl_trace;  // (iteration, KL) every 50 iterations and at the end
  std::optional<double> kl_at_exaggeration_end;
  std::size_t n_distinct = 0;

  friend bool operator==(const Embedding2D&, const Embedding2D&) = default;
};

/// Gradient descent with momentum and per-coordinate gains. Starts from
/// `initial` when given, otherwise from N(0, 1e-4^2) noise. Throws
/// std::runtime_error naming the iteration and point on a non-finite
/// gradient, or when the final KL exceeds the KL at the end of early
/// exaggeration.
Embedding2D tsne_optimize(const AffinityMatrix& p, const TsneConfig& config,
                          std::optional<DenseMatrix> initial = std::nullopt);

/// Full t-SNE on the rows of x: exact-duplicate rows are collapsed to one
/// weighted representative, embedded, and re-expanded with 1e-6 jitter.
Embedding2D embed(const SparseMatrix& x, const TsneConfig& config);

}  // namespace atlas
