#pragma once

// End-to-end labeling: filter maps -> prototypes -> affinity matrix -> base
// models -> ensemble -> cluster-to-class mapping -> label file.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "affcode/datamodel.hpp"
#include "affcode/ensemble.hpp"
#include "affcode/gmm.hpp"
#include "affcode/labels.hpp"
#include "affcode/prototypes.hpp"

namespace affcode {

struct PipelineConfig {
  std::size_t z = kDefaultTopZ;
  int num_classes = 2;
  double tol = 1e-6;
  std::size_t max_iter = 200;
  std::size_t restarts = 5;
  double variance_floor = kDefaultVarianceFloor;
  double bernoulli_floor = kDefaultBernoulliFloor;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  /// Throws InputError unless K >= 2, Z >= 1, floors > 0 and the EM controls
  /// are positive.
  void validate() const;
  GmmConfig base_config() const;
  EnsembleConfig ensemble_config() const;
};

struct InferenceResult {
  std::vector<BaseModelFit> base_fits;          // per function, unmapped columns
  std::vector<LabelPredictionMatrix> base_lps;  // per function, mapped columns
  EnsembleFit ensemble;
  FinalLabels labels;
};

/// Solves the dev-set mapping for unmapped posteriors and rearranges them.
FinalLabels map_to_classes(const Matrix& gamma, const DevSet& dev);

/// Fits every base model (on `config.workers` threads), the ensemble, and the
/// dev-set mapping. Deterministic for a fixed config.seed regardless of the
/// worker count.
InferenceResult infer_labels(const AffinityMatrix& affinity, const DevSet& dev,
                             const PipelineConfig& config);

/// Ground-truth labels by instance id, `instance_id<TAB>class_index` per line
/// (same syntax as a dev set, without the balance requirement).
std::map<std::string, int> parse_truth(std::string_view text, int num_classes);
std::map<std::string, int> read_truth(const std::filesystem::path& path, int num_classes);

struct AccuracyReport {
  std::size_t rows = 0;
  std::size_t correct = 0;
  double accuracy() const noexcept {
    return rows ? static_cast<double>(correct) / static_cast<double>(rows) : 0.0;
  }
};

/// Accuracy of `hard` over rows that are not in the dev set and have truth.
AccuracyReport non_dev_accuracy(const DatasetManifest& manifest, const DevSet& dev,
                                const std::vector<int>& hard,
                                const std::map<std::string, int>& truth);

struct RunMetadata {
  std::size_t z = 0;  // 0 when the affinity matrix was supplied directly
  std::uint64_t seed = 0;
  std::string source;  // "filtermaps" or "affinity"
  std::size_t padded_prototype_sets = 0;  // sets with fewer than Z unique positions
};

/// Line-oriented label file: '#'-prefixed metadata lines (N, K, alpha, Z,
/// seed, mapping, ...) and, when `truth` is given, the non-dev accuracy; then
/// one `instance_id<TAB>p_0<TAB>...<TAB>p_{K-1}<TAB>hard` row per instance,
/// dev rows included.
std::string format_labels(const DatasetManifest& manifest, const DevSet& dev,
                          const AffinityMatrix& affinity, const FinalLabels& labels,
                          const RunMetadata& meta,
                          const std::map<std::string, int>* truth = nullptr);

struct LabelPaths {
  std::filesystem::path manifest;
  std::filesystem::path filtermaps;  // directory of *.ggfm
  std::filesystem::path devset;
  std::filesystem::path output;
  std::optional<std::filesystem::path> truth;
  std::optional<std::filesystem::path> cache_dir;
};

struct AffinityPaths {
  std::filesystem::path affinity;
  std::filesystem::path manifest;
  std::filesystem::path devset;
  std::filesystem::path output;
  std::optional<std::filesystem::path> truth;
  std::optional<std::filesystem::path> cache_dir;
};

struct RunResult {
  DatasetManifest manifest;  // row order used for the matrices
  DevSet dev;
  InferenceResult inference;
  std::optional<AccuracyReport> accuracy;
};

/// Full flow from filter maps. Dev instances are moved to the last m rows.
/// Stage failures are reported as "[stage] message"; the output file is only
/// written once every stage succeeded. With a cache directory the affinity
/// matrix is reused when the cached manifest matches, and per-function label
/// predictions are dumped as text.
RunResult run_label(const PipelineConfig& config, const LabelPaths& paths);

/// Inference from a stored affinity matrix. The manifest must list N
/// instances with the dev instances in its last m rows and every descriptor
/// layer among its layers.
RunResult run_from_affinity(const PipelineConfig& config, const AffinityPaths& paths);

/// Text dump of one label prediction matrix (`source` header, then rows).
std::string format_label_prediction(const LabelPredictionMatrix& lp,
                                    const DatasetManifest& manifest);

}  // namespace affcode
