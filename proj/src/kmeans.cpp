#include "atlas/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "atlas/error.hpp"
#include "atlas/parallel.hpp"
#include "atlas/random.hpp"

namespace atlas {
namespace {

struct RunResult {
  DenseMatrix centroids;
  std::vector<std::uint32_t> labels;
  double inertia = std::numeric_limits<double>::infinity();
  int n_iter = 0;
  std::vector<double> trace;
};

double mean_feature_variance(const DenseMatrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (d == 0) return 0.0;
  double total = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double diff = x(r, c) - mean;
      var += diff * diff;
    }
    total += var / static_cast<double>(n);
  }
  return total / static_cast<double>(d);
}

// Nearest centroid per point (lowest index wins ties); fills distances.
void assign(const DenseMatrix& x, const DenseMatrix& centroids, std::vector<std::uint32_t>& labels,
            std::vector<double>& distances, int threads) {
  parallel_for(x.rows(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t c = 0; c < centroids.rows(); ++c) {
        const double dist = squared_distance(x.row(i), centroids.row(c));
        if (dist < best) {
          best = dist;
          arg = static_cast<std::uint32_t>(c);
        }
      }
      labels[i] = arg;
      distances[i] = best;
    }
  });
}

DenseMatrix centroids_from_indices(const DenseMatrix& x, std::span<const std::size_t> indices) {
  DenseMatrix c(indices.size(), x.cols());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    std::copy(x.row(indices[j]).begin(), x.row(indices[j]).end(), c.row(j).begin());
  }
  return c;
}

DenseMatrix init_random(const DenseMatrix& x, std::size_t k, Rng& rng) {
  // Partial Fisher-Yates over point indices.
  std::vector<std::size_t> idx(x.rows());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t pick = j + rng.below(idx.size() - j);
    std::swap(idx[j], idx[pick]);
  }
  idx.resize(k);
  return centroids_from_indices(x, idx);
}

DenseMatrix init_plus_plus(const DenseMatrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows();
  std::vector<std::size_t> chosen;
  chosen.push_back(rng.below(n));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x.row(i), x.row(chosen[0]));
  while (chosen.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      // Every point coincides with a chosen centre; fall back to uniform.
      pick = rng.below(n);
    }
    chosen.push_back(pick);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(x.row(i), x.row(pick)));
  }
  return centroids_from_indices(x, chosen);
}

double sum_in_order(const std::vector<double>& v) {
  double s = 0.0;
  for (double d : v) s += d;
  return s;
}

RunResult lloyd(const DenseMatrix& x, DenseMatrix centroids, const KMeansOptions& opt, double tol_abs) {
  const std::size_t n = x.rows(), d = x.cols(), k = centroids.rows();
  RunResult run;
  run.labels.assign(n, 0);
  std::vector<double> dist(n);
  std::vector<std::size_t> counts(k);
  DenseMatrix updated(k, d);

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    assign(x, centroids, run.labels, dist, opt.threads);
    run.trace.push_back(sum_in_order(dist));
    run.n_iter = iter + 1;

    // Sequential accumulation in point order keeps results independent of
    // the thread count.
    std::fill(updated.values().begin(), updated.values().end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = updated.row(run.labels[i]);
      const auto src = x.row(i);
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
      ++counts[run.labels[i]];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) continue;
      for (double& v : updated.row(j)) v /= static_cast<double>(counts[j]);
    }
    // Empty clusters move to the point farthest from its own centroid;
    // each reseed claims a distinct point.
    std::vector<bool> taken(n, false);
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && (far == n || dist[i] > dist[far])) far = i;
      }
      taken[far] = true;
      std::copy(x.row(far).begin(), x.row(far).end(), updated.row(j).begin());
    }

    double shift = 0.0;
    for (std::size_t j = 0; j < k; ++j) shift += squared_distance(updated.row(j), centroids.row(j));
    std::swap(centroids, updated);
    if (shift <= tol_abs) break;
  }

  // Final assignment against the returned centroids.
  assign(x, centroids, run.labels, dist, opt.threads);
  run.inertia = sum_in_order(dist);
  if (run.inertia != run.trace.back()) run.trace.push_back(run.inertia);
  run.centroids = std::move(centroids);
  return run;
}

// Number of ways to split n points into k non-empty groups (Stirling number
// of the second kind), saturating at `cap`.
double partition_count(std::size_t n, std::size_t k, double cap) {
  std::vector<double> row(k + 1, 0.0);
  row[0] = 1.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = std::min(i, k); j >= 1; --j) row[j] = std::min(cap, static_cast<double>(j) * row[j] + row[j - 1]);
    row[0] = 0.0;
  }
  return row[k];
}

// Calls fn(labels) for every partition of [0, n) into exactly k non-empty
// groups, as restricted growth strings in lexicographic order.
template <typename Fn>
void for_each_partition(std::size_t n, std::size_t k, Fn&& fn) {
  std::vector<std::uint32_t> labels(n, 0);
  auto recurse = [&](auto&& self, std::size_t i, std::uint32_t used) -> void {
    if (n - i < k - used) return;  // not enough points left to open the remaining groups
    if (i == n) {
      if (used == k) fn(std::span<const std::uint32_t>(labels));
      return;
    }
    for (std::uint32_t c = 0; c <= used && c < k; ++c) {
      labels[i] = c;
      self(self, i + 1, c == used ? used + 1 : used);
    }
  };
  recurse(recurse, 0, 0);
}

DenseMatrix centroids_from_labels(const DenseMatrix& x, std::span<const std::uint32_t> labels, std::size_t k) {
  DenseMatrix c(k, x.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto dst = c.row(labels[i]);
    const auto src = x.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) dst[j] += src[j];
    ++counts[labels[i]];
  }
  for (std::size_t g = 0; g < k; ++g) {
    for (double& v : c.row(g)) v /= static_cast<double>(counts[g]);
  }
  return c;
}

double log_or_floor(double v) { return std::log(std::max(v, std::numeric_limits<double>::min())); }

}  // namespace

KMeansInit parse_kmeans_init(std::string_view name) {
  if (name == "k-means++") return KMeansInit::kPlusPlus;
  if (name == "random") return KMeansInit::kRandom;
  if (name == "exhaustive") return KMeansInit::kExhaustive;
  throw ConfigError("unknown k-means init '" + std::string(name) + "' (expected k-means++, random or exhaustive)");
}

std::string_view to_string(KMeansInit init) {
  switch (init) {
    case KMeansInit::kPlusPlus:
      return "k-means++";
    case KMeansInit::kRandom:
      return "random";
    case KMeansInit::kExhaustive:
      return "exhaustive";
  }
  return "k-means++";
}

double compute_inertia(const DenseMatrix& x, const DenseMatrix& centroids, std::span<const std::uint32_t> labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) s += squared_distance(x.row(i), centroids.row(labels[i]));
  return s;
}

KMeansModel kmeans_fit(const DenseMatrix& x, const KMeansOptions& options) {
  if (options.k == 0) throw std::invalid_argument("kmeans_fit: k must be at least 1");
  if (options.k > x.rows()) {
    throw std::invalid_argument("kmeans_fit: k = " + std::to_string(options.k) + " exceeds the " +
                                std::to_string(x.rows()) + " available points");
  }
  if (options.n_init < 1 || options.max_iter < 1) {
    throw std::invalid_argument("kmeans_fit: n_init and max_iter must be positive");
  }
  const double tol_abs = options.tol * mean_feature_variance(x);

  RunResult best;
  auto consider = [&](RunResult run) {
    if (run.inertia < best.inertia) best = std::move(run);
  };

  if (options.init == KMeansInit::kExhaustive) {
    if (partition_count(x.rows(), options.k, 2.0 * kMaxExhaustiveStarts) > kMaxExhaustiveStarts) {
      throw std::invalid_argument("kmeans_fit: exhaustive init would need more than " +
                                  std::to_string(kMaxExhaustiveStarts) + " starts");
    }
    for_each_partition(x.rows(), options.k, [&](std::span<const std::uint32_t> labels) {
      consider(lloyd(x, centroids_from_labels(x, labels, options.k), options, tol_abs));
    });
  } else {
    Rng rng(options.seed);
    for (int run = 0; run < options.n_init; ++run) {
      DenseMatrix start = options.init == KMeansInit::kPlusPlus ? init_plus_plus(x, options.k, rng)
                                                                : init_random(x, options.k, rng);
      consider(lloyd(x, std::move(start), options, tol_abs));
    }
  }

  KMeansModel model;
  model.k = options.k;
  model.centroids = std::move(best.centroids);
  model.labels = std::move(best.labels);
  model.inertia = best.inertia;
  model.n_iter_run = best.n_iter;
  model.seed = options.seed;
  model.inertia_trace = std::move(best.trace);
  return model;
}

std::size_t select_knee(std::span<const ElbowPoint> entries, double flat_ratio) {
  if (entries.empty()) throw std::invalid_argument("select_knee: empty curve");
  const std::size_t m = entries.size();
  if (m < 3) return entries.front().k;
  const double first = entries.front().distortion;
  const double last = entries.back().distortion;
  if (!(first >= flat_ratio * last)) return entries.front().k;

  const double k0 = static_cast<double>(entries.front().k);
  const double k_span = static_cast<double>(entries.back().k) - k0;
  const double y0 = log_or_floor(first);
  const double y1 = log_or_floor(last);
  const double y_span = y0 - y1;
  if (!(y_span > 0.0)) return entries.front().k;

  // Normalized curve runs from (0, 1) to (1, 0); the chord is x + y = 1 and
  // the signed distance below it is proportional to 1 - x - y.
  std::size_t best = 0;
  double best_gap = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double xn = (static_cast<double>(entries[i].k) - k0) / k_span;
    const double yn = (log_or_floor(entries[i].distortion) - y1) / y_span;
    const double gap = 1.0 - xn - yn;
    if (gap > best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return entries[best].k;
}

ElbowCurve elbow_sweep(const DenseMatrix& x, const ElbowOptions& options) {
  if (options.step == 0) throw std::invalid_argument("elbow_sweep: step must be positive");
  if (options.k_min < 1 || options.k_min >= options.k_max || options.k_max > x.rows()) {
    throw std::invalid_argument("elbow_sweep: need 1 <= k_min < k_max <= number of points");
  }
  ElbowCurve curve;
  for (std::size_t k = options.k_min; k <= options.k_max; k += options.step) {
    KMeansOptions km;
    km.k = k;
    km.seed = options.seed;
    km.n_init = options.n_init;
    km.max_iter = options.max_iter;
    km.tol = options.tol;
    km.init = options.init;
    km.threads = options.threads;
    curve.entries.push_back({k, kmeans_fit(x, km).inertia});
  }
  curve.chosen_k = select_knee(curve.entries, options.flat_ratio);
  return curve;
}

}  // namespace atlas
