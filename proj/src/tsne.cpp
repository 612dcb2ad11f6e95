#include "atlas/tsne.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>

#include "atlas/error.hpp"
#include "atlas/neighbors.hpp"
#include "atlas/parallel.hpp"
#include "atlas/pca.hpp"
#include "atlas/random.hpp"

namespace atlas {
namespace {

constexpr std::size_t kExactKlMaxPoints = 5000;

// Point-region quadtree over 2-D coordinates with centre-of-mass summaries.
class QuadTree {
 public:
  explicit QuadTree(const DenseMatrix& y) : y_(y) {
    double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
    double min_y = min_x, max_y = -min_x;
    for (std::size_t i = 0; i < y.rows(); ++i) {
      min_x = std::min(min_x, y(i, 0));
      max_x = std::max(max_x, y(i, 0));
      min_y = std::min(min_y, y(i, 1));
      max_y = std::max(max_y, y(i, 1));
    }
    const double half = std::max({max_x - min_x, max_y - min_y, 1e-12}) / 2.0 * (1.0 + 1e-9);
    nodes_.reserve(2 * y.rows() + 1);
    Node root;
    root.centre = {(min_x + max_x) / 2.0, (min_y + max_y) / 2.0};
    root.half = half;
    nodes_.push_back(std::move(root));
    for (std::size_t i = 0; i < y.rows(); ++i) insert(0, static_cast<std::uint32_t>(i), 0);
  }

  // Accumulates sum_j q_ij^2 (y_i - y_j) into force and sum_j q_ij into z,
  // with q_ij = 1 / (1 + |y_i - y_j|^2) and j != i.
  void repulsion(std::uint32_t i, double theta, std::array<double, 2>& force, double& z) const {
    visit(0, i, y_(i, 0), y_(i, 1), theta * theta, force, z);
  }

 private:
  static constexpr int kMaxDepth = 48;
  // Cells this small are summed point by point even when far away.
  static constexpr std::size_t kDirectSumMax = 8;
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  struct Node {
    std::array<double, 2> centre{};
    double half = 0.0;
    std::array<double, 2> mass_sum{};  // sum of member coordinates
    std::array<double, 3> moment_sum{};  // sum of xx, xy, yy
    std::size_t count = 0;
    std::array<std::uint32_t, 4> child{kNone, kNone, kNone, kNone};
    std::vector<std::uint32_t> points;  // leaf members
    bool leaf = true;
  };

  static void add_point(Node& node, double px, double py) {
    node.mass_sum[0] += px;
    node.mass_sum[1] += py;
    node.moment_sum[0] += px * px;
    node.moment_sum[1] += px * py;
    node.moment_sum[2] += py * py;
    ++node.count;
  }

  int quadrant(const Node& node, double px, double py) const {
    return (px >= node.centre[0] ? 1 : 0) + (py >= node.centre[1] ? 2 : 0);
  }

  void insert(std::uint32_t node_id, std::uint32_t p, int depth) {
    const double px = y_(p, 0), py = y_(p, 1);
    while (true) {
      Node& node = nodes_[node_id];
      add_point(node, px, py);
      if (node.leaf) {
        const bool coincident =
            !node.points.empty() && y_(node.points[0], 0) == px && y_(node.points[0], 1) == py;
        if (node.points.empty() || coincident || depth >= kMaxDepth) {
          node.points.push_back(p);
          return;
        }
        split(node_id);
      }
      const int q = quadrant(nodes_[node_id], px, py);
      node_id = child_for(node_id, q);
      ++depth;
    }
  }

  std::uint32_t child_for(std::uint32_t node_id, int q) {
    if (nodes_[node_id].child[q] == kNone) {
      const Node& parent = nodes_[node_id];
      const double h = parent.half / 2.0;
      Node c;
      c.centre = {parent.centre[0] + ((q & 1) ? h : -h), parent.centre[1] + ((q & 2) ? h : -h)};
      c.half = h;
      nodes_.push_back(std::move(c));
      nodes_[node_id].child[q] = static_cast<std::uint32_t>(nodes_.size() - 1);
    }
    return nodes_[node_id].child[q];
  }

  // Moves a leaf's points one level down. Coordinates already counted in
  // this node's summary are re-counted only in the child.
  void split(std::uint32_t node_id) {
    std::vector<std::uint32_t> members = std::move(nodes_[node_id].points);
    nodes_[node_id].points.clear();
    nodes_[node_id].leaf = false;
    for (std::uint32_t m : members) {
      const int q = quadrant(nodes_[node_id], y_(m, 0), y_(m, 1));
      const std::uint32_t c = child_for(node_id, q);
      Node& child = nodes_[c];
      add_point(child, y_(m, 0), y_(m, 1));
      child.points.push_back(m);
    }
  }

  bool contains(const Node& node, double px, double py) const {
    return std::abs(px - node.centre[0]) <= node.half && std::abs(py - node.centre[1]) <= node.half;
  }

  void visit(std::uint32_t node_id, std::uint32_t i, double px, double py, double theta2,
             std::array<double, 2>& force, double& z) const {
    const Node& node = nodes_[node_id];
    if (node.count == 0) return;
    if (node.leaf) {
      for (std::uint32_t j : node.points) {
        if (j == i) continue;
        const double dx = px - y_(j, 0), dy = py - y_(j, 1);
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        z += q;
        force[0] += q * q * dx;
        force[1] += q * q * dy;
      }
      return;
    }
    const double cnt = static_cast<double>(node.count);
    const double cx = node.mass_sum[0] / cnt, cy = node.mass_sum[1] / cnt;
    const double dx = px - cx, dy = py - cy;
    const double d2 = dx * dx + dy * dy;
    const double width = 2.0 * node.half;
    if (node.count > kDirectSumMax && !contains(node, px, py) && width * width < theta2 * d2) {
      // Monopole plus quadrupole terms of the expansion about the centre of
      // mass; M is the members' scatter matrix about that centre.
      const double mxx = node.moment_sum[0] - cnt * cx * cx;
      const double mxy = node.moment_sum[1] - cnt * cx * cy;
      const double myy = node.moment_sum[2] - cnt * cy * cy;
      const double tr = mxx + myy;
      const double mr_x = mxx * dx + mxy * dy, mr_y = mxy * dx + myy * dy;
      const double rmr = dx * mr_x + dy * mr_y;
      const double q = 1.0 / (1.0 + d2), q2 = q * q, q3 = q2 * q, q4 = q2 * q2;
      z += cnt * q - q2 * tr + 4.0 * q3 * rmr;
      const double radial = cnt * q2 - 2.0 * q3 * tr + 12.0 * q4 * rmr;
      force[0] += radial * dx - 4.0 * q3 * mr_x;
      force[1] += radial * dy - 4.0 * q3 * mr_y;
      return;
    }
    for (std::uint32_t c : node.child) {
      if (c != kNone) visit(c, i, px, py, theta2, force, z);
    }
  }

  const DenseMatrix& y_;
  std::vector<Node> nodes_;
};

void check_embedding(const AffinityMatrix& p, const DenseMatrix& y) {
  if (y.rows() != p.n || y.cols() != 2) throw std::invalid_argument("embedding must be n x 2 matching P");
}

// sum_j p_ij q_ij (y_i - y_j) over the stored entries of row i.
void attraction(const AffinityMatrix& p, const DenseMatrix& y, std::size_t i, double p_scale,
                std::array<double, 2>& out) {
  out = {0.0, 0.0};
  for (std::size_t e = p.row_offsets[i]; e < p.row_offsets[i + 1]; ++e) {
    const std::size_t j = p.columns[e];
    const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
    const double w = p_scale * p.values[e] / (1.0 + dx * dx + dy * dy);
    out[0] += w * dx;
    out[1] += w * dy;
  }
}

DenseMatrix combine(const AffinityMatrix& p, const DenseMatrix& y, const std::vector<std::array<double, 2>>& rep,
                    const std::vector<double>& z_parts, double p_scale, int threads) {
  double z = 0.0;
  for (double v : z_parts) z += v;
  DenseMatrix grad(y.rows(), 2);
  parallel_for(y.rows(), threads, [&](std::size_t begin, std::size_t end) {
    std::array<double, 2> attr{};
    for (std::size_t i = begin; i < end; ++i) {
      attraction(p, y, i, p_scale, attr);
      grad(i, 0) = 4.0 * (attr[0] - rep[i][0] / z);
      grad(i, 1) = 4.0 * (attr[1] - rep[i][1] / z);
    }
  });
  return grad;
}

double exact_normalizer(const DenseMatrix& y, int threads) {
  std::vector<double> parts(y.rows(), 0.0);
  parallel_for(y.rows(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < y.rows(); ++j) {
        if (j == i) continue;
        const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
        s += 1.0 / (1.0 + dx * dx + dy * dy);
      }
      parts[i] = s;
    }
  });
  double z = 0.0;
  for (double v : parts) z += v;
  return z;
}

double tree_normalizer(const DenseMatrix& y, double theta, int threads) {
  const QuadTree tree(y);
  std::vector<double> parts(y.rows(), 0.0);
  parallel_for(y.rows(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      std::array<double, 2> f{};
      tree.repulsion(static_cast<std::uint32_t>(i), theta, f, parts[i]);
    }
  });
  double z = 0.0;
  for (double v : parts) z += v;
  return z;
}

double kl_given_normalizer(const AffinityMatrix& p, const DenseMatrix& y, double z) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.n; ++i) {
    for (std::size_t e = p.row_offsets[i]; e < p.row_offsets[i + 1]; ++e) {
      const double pij = p.values[e];
      if (pij <= 0.0) continue;
      const std::size_t j = p.columns[e];
      const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
      const double q = 1.0 / ((1.0 + dx * dx + dy * dy) * z);
      kl += pij * std::log(pij / q);
    }
  }
  return kl;
}

DenseMatrix gaussian_init(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  DenseMatrix y(n, 2);
  for (double& v : y.values()) v = 1e-4 * rng.normal();
  return y;
}

DenseMatrix pca_init(const SparseMatrix& x, std::uint64_t seed) {
  PcaOptions opt;
  opt.variance_target = 1.0;
  const PcaModel model = fit_pca(x, opt);
  const DenseMatrix proj = transform(x, model);
  DenseMatrix y = gaussian_init(x.rows(), seed);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < std::min<std::size_t>(2, proj.cols()); ++c) y(i, c) = proj(i, c);
  }
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < y.rows(); ++i) mean += y(i, 0);
  mean /= static_cast<double>(y.rows());
  for (std::size_t i = 0; i < y.rows(); ++i) var += (y(i, 0) - mean) * (y(i, 0) - mean);
  const double sd = std::sqrt(var / static_cast<double>(y.rows()));
  if (sd > 0.0 && proj.cols() >= 1) {
    for (std::size_t i = 0; i < y.rows(); ++i) {
      for (std::size_t c = 0; c < std::min<std::size_t>(2, proj.cols()); ++c) y(i, c) *= 1e-4 / sd;
    }
  }
  return y;
}

// Bisection on beta for one row. dists and weights describe the support;
// probabilities are written to out.
std::pair<double, double> calibrate_row(std::span<const double> dists, std::span<const double> weights,
                                        double perplexity, std::vector<double>& out) {
  const double target = std::log(perplexity);
  const double dmin = *std::min_element(dists.begin(), dists.end());
  out.assign(dists.size(), 0.0);
  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  double entropy = 0.0;
  double used_beta = beta;

  // beta = 0 gives the largest reachable entropy; a target at or above it
  // is met by the flat kernel.
  {
    double sum = 0.0;
    for (std::size_t j = 0; j < dists.size(); ++j) sum += weights.empty() ? 1.0 : weights[j];
    double flat = 0.0;
    for (std::size_t j = 0; j < dists.size(); ++j) {
      const double v = (weights.empty() ? 1.0 : weights[j]) / sum;
      if (v > 0.0) flat -= v * std::log(v);
    }
    if (flat <= target + kEntropyTolerance) {
      for (std::size_t j = 0; j < dists.size(); ++j) out[j] = (weights.empty() ? 1.0 : weights[j]) / sum;
      return {0.0, flat};
    }
  }

  for (int step = 0; step < kBandwidthMaxSteps; ++step) {
    double sum = 0.0;
    for (std::size_t j = 0; j < dists.size(); ++j) {
      const double w = weights.empty() ? 1.0 : weights[j];
      out[j] = w * std::exp(-beta * (dists[j] - dmin));
      sum += out[j];
    }
    entropy = 0.0;
    for (double& v : out) {
      v /= sum;
      if (v > 0.0) entropy -= v * std::log(v);
    }
    used_beta = beta;
    const double diff = entropy - target;
    if (std::abs(diff) < kEntropyTolerance && std::abs(std::exp(entropy) - perplexity) < kPerplexityTolerance) break;
    if (diff > 0.0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
    } else {
      hi = beta;
      beta = (beta + lo) / 2.0;
    }
  }
  return {used_beta, entropy};
}

}  // namespace

TsneInit parse_tsne_init(std::string_view name) {
  if (name == "gaussian-1e-4" || name == "gaussian") return TsneInit::kGaussian;
  if (name == "pca-2d" || name == "pca") return TsneInit::kPca;
  throw ConfigError("unknown t-SNE init '" + std::string(name) + "' (expected gaussian-1e-4 or pca-2d)");
}

std::string_view to_string(TsneInit init) { return init == TsneInit::kPca ? "pca-2d" : "gaussian-1e-4"; }

void validate(const TsneConfig& c, std::size_t n_points) {
  if (!(c.perplexity > 0.0)) throw std::invalid_argument("t-SNE perplexity must be positive");
  if (!(c.perplexity < (static_cast<double>(n_points) - 1.0) / 3.0)) {
    throw std::invalid_argument("t-SNE perplexity " + std::to_string(c.perplexity) + " is too large for " +
                                std::to_string(n_points) + " points (need perplexity < (n - 1) / 3)");
  }
  if (c.n_iter < 1) throw std::invalid_argument("t-SNE n_iter must be positive");
  if (c.exaggeration_iters < 0 || c.momentum_switch_iter < 0) {
    throw std::invalid_argument("t-SNE iteration switches must be non-negative");
  }
  if (!(c.early_exaggeration > 0.0)) throw std::invalid_argument("t-SNE early_exaggeration must be positive");
  if (!(c.learning_rate > 0.0)) throw std::invalid_argument("t-SNE learning_rate must be positive");
  if (!(c.theta >= 0.0 && c.theta < 1.0)) throw std::invalid_argument("t-SNE theta must be in [0, 1)");
}

double AffinityMatrix::at(std::size_t i, std::size_t j) const {
  for (std::size_t e = row_offsets[i]; e < row_offsets[i + 1]; ++e) {
    if (columns[e] == j) return values[e];
  }
  return 0.0;
}

double AffinityMatrix::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

GaussianConditionals gaussian_conditionals(const SparseMatrix& x, double perplexity, std::size_t n_neighbors,
                                           std::span<const double> weights, int threads,
                                           std::size_t exact_knn_max) {
  const std::size_t n = x.rows();
  if (n < 2) throw std::invalid_argument("gaussian_conditionals: need at least two points");
  if (!weights.empty() && weights.size() != n) throw std::invalid_argument("gaussian_conditionals: weight count");
  const std::size_t support = n_neighbors == 0 ? n - 1 : std::min(n_neighbors, n - 1);
  if (!(perplexity > 0.0) || perplexity > static_cast<double>(support)) {
    throw std::invalid_argument("gaussian_conditionals: perplexity must be in (0, " + std::to_string(support) + "]");
  }

  NeighborLists neighbors;
  if (n_neighbors != 0) {
    neighbors = n <= exact_knn_max ? knn_exact(x, support, threads) : knn_vptree(x, support, 0, threads);
    for (auto& list : neighbors) {
      std::sort(list.begin(), list.end(), [](const Neighbor& a, const Neighbor& b) { return a.index < b.index; });
    }
  }

  GaussianConditionals out;
  out.beta.resize(n);
  out.entropy.resize(n);
  std::vector<std::vector<std::uint32_t>> cols(n);
  std::vector<std::vector<double>> vals(n);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> dists, w;
    for (std::size_t i = begin; i < end; ++i) {
      dists.clear();
      w.clear();
      auto& c = cols[i];
      if (n_neighbors == 0) {
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          c.push_back(static_cast<std::uint32_t>(j));
          dists.push_back(squared_distance(x.row(i), x.row(j)));
        }
      } else {
        for (const auto& nb : neighbors[i]) {
          c.push_back(nb.index);
          dists.push_back(nb.squared_distance);
        }
      }
      if (!weights.empty()) {
        for (auto j : c) w.push_back(weights[j]);
      }
      std::tie(out.beta[i], out.entropy[i]) = calibrate_row(dists, w, perplexity, vals[i]);
    }
  });

  auto& cond = out.conditional;
  cond.n = n;
  for (std::size_t i = 0; i < n; ++i) {
    cond.columns.insert(cond.columns.end(), cols[i].begin(), cols[i].end());
    cond.values.insert(cond.values.end(), vals[i].begin(), vals[i].end());
    cond.row_offsets.push_back(cond.columns.size());
  }
  return out;
}

AffinityMatrix symmetrize(const AffinityMatrix& conditional) {
  struct Entry {
    std::uint32_t i, j;
    double v;
  };
  std::vector<Entry> entries;
  entries.reserve(2 * conditional.nnz());
  for (std::size_t i = 0; i < conditional.n; ++i) {
    for (std::size_t e = conditional.row_offsets[i]; e < conditional.row_offsets[i + 1]; ++e) {
      const auto j = conditional.columns[e];
      if (j == i) continue;
      entries.push_back({static_cast<std::uint32_t>(i), j, conditional.values[e]});
      entries.push_back({j, static_cast<std::uint32_t>(i), conditional.values[e]});
    }
  }
  // Stable sort keeps the two contributions to each pair in a fixed order.
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
  AffinityMatrix out;
  out.n = conditional.n;
  const double scale = 1.0 / (2.0 * static_cast<double>(conditional.n));
  std::size_t row = 0;
  for (std::size_t e = 0; e < entries.size();) {
    std::size_t f = e;
    double v = 0.0;
    while (f < entries.size() && entries[f].i == entries[e].i && entries[f].j == entries[e].j) v += entries[f++].v;
    while (row < entries[e].i) {
      out.row_offsets.push_back(out.columns.size());
      ++row;
    }
    out.columns.push_back(entries[e].j);
    out.values.push_back(v * scale);
    e = f;
  }
  while (out.row_offsets.size() < out.n + 1) out.row_offsets.push_back(out.columns.size());
  return out;
}

AffinityMatrix conditional_affinities(const SparseMatrix& x, double perplexity, double theta, int threads) {
  if (x.rows() < 4) throw std::invalid_argument("conditional_affinities: need at least four points");
  const std::size_t k = theta > 0.0 ? static_cast<std::size_t>(std::floor(3.0 * perplexity)) : 0;
  return symmetrize(gaussian_conditionals(x, perplexity, k, {}, threads).conditional);
}

double kl_divergence(const AffinityMatrix& p, const DenseMatrix& y) {
  check_embedding(p, y);
  return kl_given_normalizer(p, y, exact_normalizer(y, 1));
}

DenseMatrix exact_gradient(const AffinityMatrix& p, const DenseMatrix& y, double p_scale, int threads) {
  check_embedding(p, y);
  const std::size_t n = y.rows();
  std::vector<std::array<double, 2>> rep(n, {0.0, 0.0});
  std::vector<double> z_parts(n, 0.0);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        z_parts[i] += q;
        rep[i][0] += q * q * dx;
        rep[i][1] += q * q * dy;
      }
    }
  });
  return combine(p, y, rep, z_parts, p_scale, threads);
}

DenseMatrix barnes_hut_gradient(const AffinityMatrix& p, const DenseMatrix& y, double theta, double p_scale,
                                int threads) {
  check_embedding(p, y);
  const QuadTree tree(y);
  const std::size_t n = y.rows();
  std::vector<std::array<double, 2>> rep(n, {0.0, 0.0});
  std::vector<double> z_parts(n, 0.0);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) tree.repulsion(static_cast<std::uint32_t>(i), theta, rep[i], z_parts[i]);
  });
  return combine(p, y, rep, z_parts, p_scale, threads);
}

Embedding2D tsne_optimize(const AffinityMatrix& p, const TsneConfig& config, std::optional<DenseMatrix> initial) {
  const std::size_t n = p.n;
  if (n < 2) throw std::invalid_argument("tsne_optimize: need at least two points");
  Embedding2D result;
  result.n_distinct = n;
  DenseMatrix y = initial ? std::move(*initial) : gaussian_init(n, config.seed);
  check_embedding(p, y);

  DenseMatrix velocity(n, 2);
  DenseMatrix gains(n, 2, 1.0);
  auto evaluate_kl = [&] {
    const double z = (config.theta == 0.0 || n <= kExactKlMaxPoints) ? exact_normalizer(y, config.threads)
                                                                      : tree_normalizer(y, config.theta, config.threads);
    return kl_given_normalizer(p, y, z);
  };

  for (int iter = 0; iter < config.n_iter; ++iter) {
    const double p_scale = iter < config.exaggeration_iters ? config.early_exaggeration : 1.0;
    const double momentum = iter < config.momentum_switch_iter ? config.initial_momentum : config.final_momentum;
    const DenseMatrix grad = config.theta > 0.0 ? barnes_hut_gradient(p, y, config.theta, p_scale, config.threads)
                                                : exact_gradient(p, y, p_scale, config.threads);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(grad(i, 0)) || !std::isfinite(grad(i, 1))) {
        throw std::runtime_error("t-SNE gradient is not finite at iteration " + std::to_string(iter) + ", point " +
                                 std::to_string(i));
      }
    }
    auto& g = gains.values();
    auto& v = velocity.values();
    const auto& gr = grad.values();
    for (std::size_t e = 0; e < g.size(); ++e) {
      g[e] = ((gr[e] > 0.0) != (v[e] > 0.0)) ? g[e] + 0.2 : g[e] * 0.8;
      g[e] = std::max(g[e], 0.01);
      v[e] = momentum * v[e] - config.learning_rate * g[e] * gr[e];
      y.values()[e] += v[e];
    }
    for (std::size_t c = 0; c < 2; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += y(i, c);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) y(i, c) -= mean;
    }

    const int done = iter + 1;
    const bool sample = done % 50 == 0 || done == config.n_iter;
    const bool exaggeration_end = done == config.exaggeration_iters;
    if (sample || exaggeration_end) {
      const double kl = evaluate_kl();
      if (sample) result.kl_trace.emplace_back(done, kl);
      if (exaggeration_end) result.kl_at_exaggeration_end = kl;
    }
  }
  result.final_kl = result.kl_trace.back().second;
  if (result.kl_at_exaggeration_end && config.n_iter > config.exaggeration_iters &&
      result.final_kl > *result.kl_at_exaggeration_end) {
    throw std::runtime_error("t-SNE made no progress after early exaggeration: final KL " +
                             std::to_string(result.final_kl) + " > " +
                             std::to_string(*result.kl_at_exaggeration_end));
  }
  if (!y.all_finite()) throw std::runtime_error("t-SNE produced non-finite coordinates");
  result.y = std::move(y);
  return result;
}

Embedding2D embed(const SparseMatrix& x, const TsneConfig& config) {
  const std::size_t n = x.rows();
  validate(config, n);

  // Collapse exact duplicate rows; representative = first occurrence.
  std::vector<std::size_t> rep_of(n);
  std::vector<std::size_t> distinct;
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < n; ++i) {
    const SparseRow r = x.row(i);
    std::string key(r.size() * (sizeof(std::uint32_t) + sizeof(double)), '\0');
    std::memcpy(key.data(), r.indices.data(), r.size() * sizeof(std::uint32_t));
    std::memcpy(key.data() + r.size() * sizeof(std::uint32_t), r.values.data(), r.size() * sizeof(double));
    auto [it, inserted] = seen.try_emplace(std::move(key), distinct.size());
    if (inserted) distinct.push_back(i);
    rep_of[i] = it->second;
  }
  const std::size_t m = distinct.size();
  if (m < 4) throw DataError("t-SNE needs at least four distinct rows, found " + std::to_string(m));

  SparseMatrix unique(x.cols());
  std::vector<double> multiplicity(m, 0.0);
  for (std::size_t u = 0; u < m; ++u) {
    const SparseRow r = x.row(distinct[u]);
    unique.push_row(r.indices, r.values);
  }
  for (std::size_t i = 0; i < n; ++i) multiplicity[rep_of[i]] += 1.0;
  const bool has_duplicates = m < n;

  const std::size_t k = config.theta > 0.0 ? static_cast<std::size_t>(std::floor(3.0 * config.perplexity)) : 0;
  const std::size_t support = k == 0 ? m - 1 : std::min(k, m - 1);
  const double perplexity = std::min(config.perplexity, static_cast<double>(support));
  const auto cond = gaussian_conditionals(unique, perplexity, k, has_duplicates ? std::span<const double>(multiplicity)
                                                                                : std::span<const double>{},
                                          config.threads, config.exact_knn_max);
  const AffinityMatrix p = symmetrize(cond.conditional);

  std::optional<DenseMatrix> init;
  if (config.init == TsneInit::kPca) init = pca_init(unique, config.seed);
  Embedding2D result = tsne_optimize(p, config, std::move(init));

  if (has_duplicates) {
    DenseMatrix full(n, 2);
    Rng jitter(config.seed + 1);
    std::vector<bool> placed(m, false);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t u = rep_of[i];
      full(i, 0) = result.y(u, 0);
      full(i, 1) = result.y(u, 1);
      if (placed[u]) {
        full(i, 0) += 1e-6 * jitter.normal();
        full(i, 1) += 1e-6 * jitter.normal();
      }
      placed[u] = true;
    }
    result.y = std::move(full);
  }
  result.n_distinct = m;
  return result;
}

}  // namespace atlas
