#pragma once

// Planted-structure generators with known ground truth, and accuracy sweeps
// over them.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "affcode/datamodel.hpp"
#include "affcode/ensemble.hpp"
#include "affcode/pipeline.hpp"

namespace affcode {

enum class ScoreFamily {
  kGaussian,  // matches the base model's own family
  kBeta,      // bounded, skewed scores; deliberately misspecified
};

struct PlantedSpec {
  std::size_t n = 100;  // total instances, dev rows included
  int num_classes = 2;
  std::size_t alpha_good = 5;
  std::size_t alpha_noise = 15;
  double separation = 4.0;  // same-class mean shift, in noise standard deviations
  std::uint64_t seed = 0;
  std::size_t dev_per_class = 5;  // dev rows occupy the last K * dev_per_class rows
  ScoreFamily family = ScoreFamily::kGaussian;
  double noise_std = 0.05;

  void validate() const;
};

struct PlantedInstance {
  AffinityMatrix affinity;
  DatasetManifest manifest;
  DevSet dev;
  std::vector<int> labels;  // ground truth for every row
};

/// Good-function columns score same-class rows `separation` noise deviations
/// above cross-class rows; noise-function columns are i.i.d. Good functions
/// come first. Identical specs give identical bytes.
PlantedInstance generate_planted(const PlantedSpec& spec);

struct PlantedOneHotSpec {
  std::size_t n = 100;
  int num_classes = 2;
  std::size_t alpha_good = 1;
  std::size_t alpha_noise = 19;
  double flip_probability = 0.0;  // chance a good block reports a wrong cluster
  std::uint64_t seed = 0;
};

struct PlantedOneHot {
  ConcatenatedLP concat;
  std::vector<int> labels;
};

/// Good blocks one-hot the true class through a random per-block cluster
/// permutation; noise blocks are uniform random one-hots.
PlantedOneHot generate_planted_onehot(const PlantedOneHotSpec& spec);

/// Ground truth as `instance_id<TAB>class` lines.
std::string format_truth(const DatasetManifest& manifest, const std::vector<int>& labels);

enum class SweepAxis { kDevSize, kNumFunctions };

struct SweepPoint {
  double x = 0.0;
  double accuracy = 0.0;
  std::uint64_t seed = 0;
};

/// kDevSize: one planted instance whose dev pool holds max(grid) rows per
/// class; the model is fit once and mapped with the first d pool rows of each
/// class for every grid value d. Accuracy is over the rows outside the pool.
///
/// kNumFunctions: for each grid value a, a fresh instance with a functions
/// keeping the base PlantedSpec's good:noise ratio (at least one good function).
std::vector<SweepPoint> sweep(SweepAxis axis, std::span<const std::size_t> grid,
                              const PlantedSpec& spec, const PipelineConfig& config);

std::string format_sweep_csv(std::span<const SweepPoint> points);

}  // namespace affcode
