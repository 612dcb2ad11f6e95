#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "atlas/matrix.hpp"

namespace atlas {

enum class KMeansInit {
  kPlusPlus,    // k-means++ seeding
  kRandom,      // k distinct points chosen uniformly
  kExhaustive,  // one run per partition into k groups, started at the group means; n_init is ignored
};

// Upper bound on the partitions an exhaustive fit will enumerate.
inline constexpr double kMaxExhaustiveStarts = 1e6;

KMeansInit parse_kmeans_init(std::string_view name);
std::string_view to_string(KMeansInit init);

struct KMeansOptions {
  std::size_t k = 8;
  std::uint64_t seed = 0;
  int n_init = 10;
  int max_iter = 300;
  // Convergence when total squared centroid shift <= tol * mean per-feature
  // variance of the data.
  double tol = 1e-4;
  KMeansInit init = KMeansInit::kPlusPlus;
  int threads = 1;
};

struct KMeansModel {
  std::size_t k = 0;
  DenseMatrix centroids;  // k x d
  std::vector<std::uint32_t> labels;
  double inertia = 0.0;
  int n_iter_run = 0;
  std::uint64_t seed = 0;
  // Inertia after every assignment step of the winning run.
  std::vector<double> inertia_trace;

  friend bool operator==(const KMeansModel&, const KMeansModel&) = default;
};

/// Sum of squared distances from each point to its labelled centroid.
double compute_inertia(const DenseMatrix& x, const DenseMatrix& centroids, std::span<const std::uint32_t> labels);

/// Lloyd's algorithm, best inertia of several seeded starts. A cluster that
/// empties is re-seeded at the point farthest from its current centroid.
/// Throws std::invalid_argument unless 1 <= k <= rows.
KMeansModel kmeans_fit(const DenseMatrix& x, const KMeansOptions& options);

struct ElbowPoint {
  std::size_t k = 0;
  double distortion = 0.0;

  friend bool operator==(const ElbowPoint&, const ElbowPoint&) = default;
};

struct ElbowCurve {
  std::vector<ElbowPoint> entries;  // k strictly increasing
  std::size_t chosen_k = 0;

  friend bool operator==(const ElbowCurve&, const ElbowCurve&) = default;
};

struct ElbowOptions {
  std::size_t k_min = 2;
  std::size_t k_max = 40;
  std::size_t step = 2;
  std::uint64_t seed = 0;
  int n_init = 10;
  int max_iter = 300;
  double tol = 1e-4;
  KMeansInit init = KMeansInit::kPlusPlus;
  // A sweep whose first distortion is less than this multiple of its last
  // has no elbow; k_min is chosen.
  double flat_ratio = 2.0;
  int threads = 1;
};

/// Knee of a distortion curve: the entry farthest below the chord joining
/// the end points after min-max normalizing k and log(distortion). Returns
/// the first k when the curve is flat per `flat_ratio` or nothing lies
/// strictly below the chord.
std::size_t select_knee(std::span<const ElbowPoint> entries, double flat_ratio = 2.0);

/// One kmeans_fit per k in k_min, k_min + step, ... <= k_max, all with the
/// same seed. Throws std::invalid_argument unless 1 <= k_min < k_max <= rows.
ElbowCurve elbow_sweep(const DenseMatrix& x, const ElbowOptions& options);

}  // namespace atlas
