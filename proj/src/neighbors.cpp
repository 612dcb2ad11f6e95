#include "atlas/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "atlas/parallel.hpp"
#include "atlas/random.hpp"

namespace atlas {
namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.squared_distance < b.squared_distance ||
         (a.squared_distance == b.squared_distance && a.index < b.index);
}

void check_k(const SparseMatrix& x, std::size_t k) {
  if (k == 0 || k >= x.rows()) throw std::invalid_argument("knn: need 1 <= k < number of rows");
}

class VpTree {
 public:
  VpTree(const SparseMatrix& x, std::uint64_t seed) : x_(x), items_(x.rows()) {
    std::iota(items_.begin(), items_.end(), 0);
    Rng rng(seed);
    nodes_.reserve(x.rows());
    root_ = build(0, items_.size(), rng);
  }

  std::vector<Neighbor> search(std::uint32_t query, std::size_t k) const {
    std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(&closer)> heap(&closer);
    double tau = std::numeric_limits<double>::infinity();
    search(root_, query, k, heap, tau);
    std::vector<Neighbor> out;
    while (!heap.empty()) {
      out.push_back(heap.top());
      heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  struct Node {
    std::uint32_t item = 0;
    double radius = 0.0;  // Euclidean, not squared
    int inside = -1;
    int outside = -1;
  };

  double distance(std::uint32_t a, std::uint32_t b) const {
    return std::sqrt(squared_distance(x_.row(a), x_.row(b)));
  }

  int build(std::size_t lo, std::size_t hi, Rng& rng) {
    if (lo >= hi) return -1;
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const std::size_t pick = lo + rng.below(hi - lo);
    std::swap(items_[lo], items_[pick]);
    nodes_[id].item = items_[lo];
    if (hi - lo > 1) {
      const std::size_t mid = (lo + 1 + hi) / 2;
      const std::uint32_t vp = items_[lo];
      std::nth_element(items_.begin() + static_cast<std::ptrdiff_t>(lo + 1),
                       items_.begin() + static_cast<std::ptrdiff_t>(mid),
                       items_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::uint32_t a, std::uint32_t b) {
                         const double da = distance(vp, a), db = distance(vp, b);
                         return da < db || (da == db && a < b);
                       });
      nodes_[id].radius = distance(vp, items_[mid]);
      const int inside = build(lo + 1, mid, rng);
      const int outside = build(mid, hi, rng);
      nodes_[id].inside = inside;
      nodes_[id].outside = outside;
    }
    return id;
  }

  template <typename Heap>
  void search(int node_id, std::uint32_t query, std::size_t k, Heap& heap, double& tau) const {
    if (node_id < 0) return;
    const Node& node = nodes_[node_id];
    const double sq = squared_distance(x_.row(query), x_.row(node.item));
    const double dist = std::sqrt(sq);
    if (node.item != query) {
      const Neighbor cand{node.item, sq};
      if (heap.size() < k) {
        heap.push(cand);
      } else if (closer(cand, heap.top())) {
        heap.pop();
        heap.push(cand);
      }
      if (heap.size() == k) tau = std::sqrt(heap.top().squared_distance);
    }
    if (node.inside < 0 && node.outside < 0) return;
    // Small slack so boundary ties are not pruned by sqrt rounding.
    const double slack = 1e-12 * (1.0 + dist);
    if (dist < node.radius) {
      if (dist - tau <= node.radius + slack) search(node.inside, query, k, heap, tau);
      if (dist + tau >= node.radius - slack) search(node.outside, query, k, heap, tau);
    } else {
      if (dist + tau >= node.radius - slack) search(node.outside, query, k, heap, tau);
      if (dist - tau <= node.radius + slack) search(node.inside, query, k, heap, tau);
    }
  }

  const SparseMatrix& x_;
  std::vector<std::uint32_t> items_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace

NeighborLists knn_exact(const SparseMatrix& x, std::size_t k, int threads) {
  check_k(x, k);
  NeighborLists out(x.rows());
  parallel_for(x.rows(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<Neighbor> all;
    for (std::size_t i = begin; i < end; ++i) {
      all.clear();
      for (std::size_t j = 0; j < x.rows(); ++j) {
        if (j != i) all.push_back({static_cast<std::uint32_t>(j), squared_distance(x.row(i), x.row(j))});
      }
      std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
      out[i].assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
    }
  });
  return out;
}

NeighborLists knn_vptree(const SparseMatrix& x, std::size_t k, std::uint64_t seed, int threads) {
  check_k(x, k);
  const VpTree tree(x, seed);
  NeighborLists out(x.rows());
  parallel_for(x.rows(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = tree.search(static_cast<std::uint32_t>(i), k);
  });
  return out;
}

}  // namespace atlas
