#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "affcode/datamodel.hpp"
#include "affcode/matrix.hpp"

namespace fixture {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// The 3 x 2 x 2 map whose channels are
///   [[1, 0.5], [0.3, 0.6]], [[0.1, 0.7], [0.4, 0.3]], [[0.2, 0.9], [0.5, 0.1]].
affcode::FilterMap worked_example_map();

affcode::FilterMap make_map(const std::string& id, const std::string& layer,
                            std::uint32_t c, std::uint32_t h, std::uint32_t w,
                            std::vector<float> values);

affcode::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                              double lo = -1.0, double hi = 1.0);

/// Rows drawn uniformly, then normalized onto the simplex.
affcode::Matrix random_simplex_rows(std::size_t rows, std::size_t k, std::mt19937_64& rng);

struct FeatureDatasetSpec {
  std::size_t per_class = 12;
  int num_classes = 2;
  std::size_t dev_per_class = 3;
  std::vector<std::string> layers{"pool1", "pool2"};
  std::uint32_t channels = 6;
  std::uint32_t height = 3;
  std::uint32_t width = 3;
  std::uint64_t seed = 7;
};

struct FeatureDataset {
  std::filesystem::path manifest;
  std::filesystem::path filtermaps;
  std::filesystem::path devset;
  std::filesystem::path truth;
  std::vector<int> labels;  // manifest order
};

/// Synthetic post-ReLU filter maps: each image carries its class's pattern at
/// a random position over low background noise. Dev instances are spread
/// through the manifest, not placed last.
FeatureDataset write_feature_dataset(const std::filesystem::path& dir,
                                     const FeatureDatasetSpec& spec);

}  // namespace fixture
