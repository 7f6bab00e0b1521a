#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>

#include "affcode/datamodel.hpp"
#include "affcode/prototypes.hpp"

namespace affcode {

/// Cosine similarity; 0 when either vector has zero norm. Throws InputError on
/// length mismatch.
double cosine(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const float> a, std::span<const float> b);

/// Maximum cosine similarity between `anchor` and every patch of `target`.
double affinity_score(std::span<const float> anchor, const FilterMap& target);

using FeatureKey = std::pair<std::string, std::string>;  // (instance_id, layer)

/// Filter maps indexed by (instance, layer).
class FeatureStore {
 public:
  void add(FilterMap map);
  const FilterMap* find(const std::string& instance_id, const std::string& layer) const;
  std::size_t size() const noexcept { return maps_.size(); }
  const std::map<FeatureKey, FilterMap>& maps() const noexcept { return maps_; }

  /// Reads every *.ggfm file under `dir` (recursively). Maps of instances or
  /// layers not listed in `manifest` are skipped.
  static FeatureStore load_directory(const std::filesystem::path& dir,
                                     const DatasetManifest& manifest);

 private:
  std::map<FeatureKey, FilterMap> maps_;
};

using PrototypeStore = std::map<FeatureKey, PrototypeSet>;

PrototypeStore select_all_prototypes(const FeatureStore& store, std::size_t z);

/// Functions are ordered layer-major (manifest layer order), then by rank
/// 1..Z. Entry (i, f*N + j) is the score of anchor prototype z of instance j
/// against the filter map of instance i, both at layer L, where (L, z) is
/// descriptor f. Columns are computed on `workers` threads.
AffinityMatrix build_affinity_matrix(const FeatureStore& maps, const PrototypeStore& sets,
                                     const DatasetManifest& manifest, std::size_t z,
                                     std::size_t workers = 1);

}  // namespace affcode
