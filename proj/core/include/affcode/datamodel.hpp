#pragma once

// In-memory data model and on-disk formats shared with the feature exporter.
//
// Binary files are little-endian with IEEE-754 binary32 payloads:
//
//   filter map  "GGFM" u16 version=1
//               u32 len, instance_id bytes; u32 len, layer bytes
//               u32 C, u32 H, u32 W, C*H*W f32 (channel-major, then H, then W)
//
//   affinity    "GGAM" u16 version=1
//               u32 N, u32 alpha
//               alpha x (u32 len, layer bytes, u32 z)
//               N * (alpha*N) f32, row-major
//
// Manifests and dev sets are line-oriented UTF-8 text; see read_manifest and
// read_devset.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "affcode/matrix.hpp"

namespace affcode {

inline constexpr std::uint16_t kFormatVersion = 1;

class DatasetManifest {
 public:
  DatasetManifest() = default;

  /// Validates: ids unique and non-empty, n + m == ids.size(), layers unique
  /// and non-empty. Throws InputError.
  DatasetManifest(std::vector<std::string> instance_ids, std::size_t n_unlabeled,
                  std::size_t m_dev, std::vector<std::string> layer_names,
                  std::string notes = {});

  const std::vector<std::string>& instance_ids() const noexcept { return ids_; }
  const std::vector<std::string>& layer_names() const noexcept { return layers_; }
  const std::string& notes() const noexcept { return notes_; }
  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t n_unlabeled() const noexcept { return n_unlabeled_; }
  std::size_t m_dev() const noexcept { return m_dev_; }

  std::optional<std::size_t> index_of(std::string_view id) const;

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.ids_ == b.ids_ && a.n_unlabeled_ == b.n_unlabeled_ && a.m_dev_ == b.m_dev_ &&
           a.layers_ == b.layers_ && a.notes_ == b.notes_;
  }

 private:
  std::vector<std::string> ids_;
  std::size_t n_unlabeled_ = 0;
  std::size_t m_dev_ = 0;
  std::vector<std::string> layers_;
  std::string notes_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Text manifest. One record per line, fields separated by a single TAB:
///
///   layer<TAB>name          (one per layer, in order)
///   n_unlabeled<TAB>count
///   m_dev<TAB>count
///   notes<TAB>free text
///   instance<TAB>id         (one per instance, in row order)
///
/// Blank lines and lines starting with '#' are ignored. When n_unlabeled and
/// m_dev are both absent, every instance counts as unlabeled.
DatasetManifest parse_manifest(std::string_view text);
DatasetManifest read_manifest(const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& manifest);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// One image's activations at one layer, C x H x W.
class FilterMap {
 public:
  FilterMap() = default;
  /// Throws InputError on zero dimensions, size mismatch or non-finite values.
  FilterMap(std::string instance_id, std::string layer, std::uint32_t channels,
            std::uint32_t height, std::uint32_t width, std::vector<float> data);

  const std::string& instance_id() const noexcept { return instance_id_; }
  const std::string& layer() const noexcept { return layer_; }
  std::uint32_t channels() const noexcept { return channels_; }
  std::uint32_t height() const noexcept { return height_; }
  std::uint32_t width() const noexcept { return width_; }
  std::span<const float> data() const noexcept { return data_; }

  float at(std::uint32_t c, std::uint32_t h, std::uint32_t w) const noexcept {
    return data_[(static_cast<std::size_t>(c) * height_ + h) * width_ + w];
  }

  friend bool operator==(const FilterMap&, const FilterMap&) = default;

 private:
  std::string instance_id_;
  std::string layer_;
  std::uint32_t channels_ = 0;
  std::uint32_t height_ = 0;
  std::uint32_t width_ = 0;
  std::vector<float> data_;
};

std::vector<std::uint8_t> encode_filtermap(const FilterMap& map);
FilterMap decode_filtermap(std::span<const std::uint8_t> bytes);
FilterMap read_filtermap(const std::filesystem::path& path);
void write_filtermap(const FilterMap& map, const std::filesystem::path& path);

struct DevEntry {
  std::string instance_id;
  std::size_t row = 0;  // index into the manifest the set was resolved against
  int label = 0;
};

/// Balanced labeled development set: exactly `per_class` entries per class.
class DevSet {
 public:
  DevSet() = default;
  /// Throws InputError on duplicate rows, labels outside [0, K) or unbalanced
  /// classes.
  DevSet(std::vector<DevEntry> entries, int num_classes);

  const std::vector<DevEntry>& entries() const noexcept { return entries_; }
  int num_classes() const noexcept { return num_classes_; }
  std::size_t per_class() const noexcept { return per_class_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

 private:
  std::vector<DevEntry> entries_;
  int num_classes_ = 0;
  std::size_t per_class_ = 0;
};

/// Rows are `instance_id<TAB>class_index`; '#' comments and blank lines are
/// skipped. Ids are resolved against `manifest`.
DevSet parse_devset(std::string_view text, const DatasetManifest& manifest, int num_classes);
DevSet read_devset(const std::filesystem::path& path, const DatasetManifest& manifest,
                   int num_classes);
std::string format_devset(const DevSet& dev);

/// Reorders `manifest` so that the dev instances occupy the last m rows
/// (unlabeled rows keep their relative order; dev rows follow the dev-set
/// order). Returns the new manifest and the dev set re-resolved against it.
std::pair<DatasetManifest, DevSet> arrange_dev_last(const DatasetManifest& manifest,
                                                    const DevSet& dev);

/// Identifies one affinity function: prototype rank z (1-based) at a layer.
struct AffinityFunctionDescriptor {
  std::string layer;
  std::uint32_t prototype_rank = 1;

  friend bool operator==(const AffinityFunctionDescriptor&,
                         const AffinityFunctionDescriptor&) = default;
};

struct ColumnOwner {
  std::size_t function = 0;
  std::size_t anchor = 0;

  friend bool operator==(const ColumnOwner&, const ColumnOwner&) = default;
};

/// N x (alpha*N) affinity scores. Column j belongs to function j / N and
/// anchor instance j % N.
class AffinityMatrix {
 public:
  AffinityMatrix() = default;
  /// Throws InputError on shape mismatch, duplicate descriptors, or scores that
  /// are non-finite or outside [-1, 1].
  AffinityMatrix(std::size_t num_instances,
                 std::vector<AffinityFunctionDescriptor> descriptors, MatrixF scores);

  std::size_t num_instances() const noexcept { return num_instances_; }
  std::size_t num_functions() const noexcept { return descriptors_.size(); }
  const std::vector<AffinityFunctionDescriptor>& descriptors() const noexcept {
    return descriptors_;
  }
  const MatrixF& scores() const noexcept { return scores_; }

  ColumnOwner owner(std::size_t column) const noexcept {
    return {column / num_instances_, column % num_instances_};
  }

  /// The N x N block of function f, widened to double.
  Matrix slice(std::size_t function) const;

  friend bool operator==(const AffinityMatrix&, const AffinityMatrix&) = default;

 private:
  std::size_t num_instances_ = 0;
  std::vector<AffinityFunctionDescriptor> descriptors_;
  MatrixF scores_;
};

std::vector<std::uint8_t> encode_affinity(const AffinityMatrix& matrix);
AffinityMatrix decode_affinity(std::span<const std::uint8_t> bytes);
void save_affinity(const AffinityMatrix& matrix, const std::filesystem::path& path);
AffinityMatrix load_affinity(const std::filesystem::path& path);

/// Whole-file helpers shared by the readers and writers. Throw InputError on
/// I/O failure.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace affcode
