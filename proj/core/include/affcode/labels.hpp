#pragma once

#include <vector>

#include "affcode/mapping.hpp"
#include "affcode/matrix.hpp"

namespace affcode {

/// Probabilistic labels after cluster-to-class mapping. Rows lie on the
/// K-simplex; `hard` is the row argmax (ties: lowest class).
struct FinalLabels {
  Matrix probs;
  std::vector<int> hard;
  ClusterClassMapping mapping;
};

/// Validates rows (entries in [0, 1], sum 1 within 1e-9) and derives `hard`.
FinalLabels make_final_labels(Matrix probs, ClusterClassMapping mapping);

}  // namespace affcode
