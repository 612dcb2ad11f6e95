#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "atlas/matrix.hpp"

namespace atlas {

struct Neighbor {
  std::uint32_t index = 0;
  double squared_distance = 0.0;
};

// Each list holds the k nearest other rows, ordered by (distance, index).
using NeighborLists = std::vector<std::vector<Neighbor>>;

/// Brute-force scan over all pairs.
NeighborLists knn_exact(const SparseMatrix& x, std::size_t k, int threads = 1);

/// Vantage-point tree search; same result as knn_exact up to ties at the
/// k-th distance.
NeighborLists knn_vptree(const SparseMatrix& x, std::size_t k, std::uint64_t seed, int threads = 1);

}  // namespace atlas
