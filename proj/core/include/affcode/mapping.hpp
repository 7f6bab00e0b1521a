#pragma once

// Cluster-to-class identification from the development set.

#include <span>
#include <vector>

#include "affcode/datamodel.hpp"
#include "affcode/matrix.hpp"

namespace affcode {

/// g[k] is the class assigned to cluster k. objective = sum_k w[k][g[k]].
struct ClusterClassMapping {
  std::vector<int> g;
  double objective = 0.0;
  Matrix weights;
};

/// w[k][k'] = sum of gamma[l][k] over dev rows l labeled k'.
Matrix mapping_weights(const Matrix& gamma, const DevSet& dev);

/// sum_k w[k][g[k]], accumulated in cluster order.
double mapping_objective(const Matrix& w, std::span<const int> g);

/// Maximum-weight perfect assignment of rows to columns on a square matrix
/// (shortest augmenting paths with potentials, O(K^3)). Among optimal
/// assignments returns the lexicographically smallest.
std::vector<int> max_weight_assignment(const Matrix& w);

/// Bijection maximizing the goodness objective. K <= 3 is solved by
/// exhaustive search; larger K by max_weight_assignment.
ClusterClassMapping solve_mapping(const Matrix& w);

/// The two-class rule: keep identity when the class-1 dev rows put at least as
/// much mass on cluster 1 as the class-0 dev rows do, otherwise swap.
std::vector<int> two_class_mapping(const Matrix& gamma, const DevSet& dev);

/// Output column g[k] receives input column k. Throws InputError unless g is a
/// bijection onto 0..cols-1.
Matrix apply_mapping(const Matrix& columns, std::span<const int> g);

std::vector<int> invert_mapping(std::span<const int> g);

bool is_bijection(std::span<const int> g, std::size_t k);

}  // namespace affcode
