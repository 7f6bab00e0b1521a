#include "affcode/datamodel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include "affcode/error.hpp"

namespace affcode {
namespace {

bool valid_token(std::string_view s) {
  return !s.empty() && s.find_first_of("\t\r\n") == std::string_view::npos;
}

template <typename F>
void for_each_line(std::string_view text, F&& fn) {
  std::size_t offset = 0;
  std::size_t line_no = 0;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(offset, end - offset);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (!line.empty() && line.front() != '#') fn(line, line_no, offset);
    offset = end + 1;
  }
}

std::size_t parse_count(std::string_view s, std::size_t line_no, std::size_t offset) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError(fmt::format("line {}: expected a non-negative integer, got '{}'",
                                 line_no, s),
                     offset);
  }
  return value;
}

}  // namespace

DatasetManifest::DatasetManifest(std::vector<std::string> instance_ids,
                                 std::size_t n_unlabeled, std::size_t m_dev,
                                 std::vector<std::string> layer_names, std::string notes)
    : ids_(std::move(instance_ids)),
      n_unlabeled_(n_unlabeled),
      m_dev_(m_dev),
      layers_(std::move(layer_names)),
      notes_(std::move(notes)) {
  if (n_unlabeled_ + m_dev_ != ids_.size()) {
    throw InputError(fmt::format("manifest: n_unlabeled ({}) + m_dev ({}) != {} instances",
                                 n_unlabeled_, m_dev_, ids_.size()));
  }
  if (layers_.empty()) throw InputError("manifest: no layers listed");
  std::unordered_set<std::string> seen_layers;
  for (const auto& layer : layers_) {
    if (!valid_token(layer)) throw InputError(fmt::format("manifest: invalid layer name '{}'", layer));
    if (!seen_layers.insert(layer).second) {
      throw InputError(fmt::format("manifest: duplicate layer '{}'", layer));
    }
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!valid_token(ids_[i])) {
      throw InputError(fmt::format("manifest: invalid instance id at row {}", i));
    }
    if (!index_.emplace(ids_[i], i).second) {
      throw InputError(fmt::format("manifest: duplicate instance id '{}'", ids_[i]));
    }
  }
}

std::optional<std::size_t> DatasetManifest::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

DatasetManifest parse_manifest(std::string_view text) {
  std::vector<std::string> ids;
  std::vector<std::string> layers;
  std::optional<std::size_t> n_unlabeled;
  std::optional<std::size_t> m_dev;
  std::string notes;

  for_each_line(text, [&](std::string_view line, std::size_t line_no, std::size_t offset) {
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw ParseError(fmt::format("manifest line {}: expected key<TAB>value", line_no), offset);
    }
    const auto key = line.substr(0, tab);
    const auto value = line.substr(tab + 1);
    const std::size_t value_offset = offset + tab + 1;
    if (key == "instance") {
      ids.emplace_back(value);
    } else if (key == "layer") {
      layers.emplace_back(value);
    } else if (key == "n_unlabeled") {
      n_unlabeled = parse_count(value, line_no, value_offset);
    } else if (key == "m_dev") {
      m_dev = parse_count(value, line_no, value_offset);
    } else if (key == "notes") {
      if (!notes.empty()) notes += ' ';
      notes += value;
    } else {
      throw ParseError(fmt::format("manifest line {}: unknown key '{}'", line_no, key), offset);
    }
  });

  if (!n_unlabeled && !m_dev) {
    n_unlabeled = ids.size();
    m_dev = 0;
  } else if (!n_unlabeled) {
    n_unlabeled = ids.size() >= *m_dev ? ids.size() - *m_dev : ids.size() + 1;
  } else if (!m_dev) {
    m_dev = ids.size() >= *n_unlabeled ? ids.size() - *n_unlabeled : ids.size() + 1;
  }
  return DatasetManifest(std::move(ids), *n_unlabeled, *m_dev, std::move(layers),
                         std::move(notes));
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file_text(path));
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& layer : manifest.layer_names()) out += fmt::format("layer\t{}\n", layer);
  out += fmt::format("n_unlabeled\t{}\nm_dev\t{}\n", manifest.n_unlabeled(), manifest.m_dev());
  if (!manifest.notes().empty()) out += fmt::format("notes\t{}\n", manifest.notes());
  for (const auto& id : manifest.instance_ids()) out += fmt::format("instance\t{}\n", id);
  return out;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  write_file_atomic(path, format_manifest(manifest));
}

FilterMap::FilterMap(std::string instance_id, std::string layer, std::uint32_t channels,
                     std::uint32_t height, std::uint32_t width, std::vector<float> data)
    : instance_id_(std::move(instance_id)),
      layer_(std::move(layer)),
      channels_(channels),
      height_(height),
      width_(width),
      data_(std::move(data)) {
  if (channels_ == 0 || height_ == 0 || width_ == 0) {
    throw InputError(fmt::format("filter map {}/{}: zero dimension {}x{}x{}", instance_id_,
                                 layer_, channels_, height_, width_));
  }
  const std::size_t expected = static_cast<std::size_t>(channels_) * height_ * width_;
  if (data_.size() != expected) {
    throw InputError(fmt::format("filter map {}/{}: {} values for shape {}x{}x{}",
                                 instance_id_, layer_, data_.size(), channels_, height_,
                                 width_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw InputError(fmt::format("filter map {}/{}: non-finite value at index {}",
                                   instance_id_, layer_, i));
    }
  }
}

DevSet::DevSet(std::vector<DevEntry> entries, int num_classes)
    : entries_(std::move(entries)), num_classes_(num_classes) {
  if (num_classes_ < 1) throw InputError("dev set: class count must be positive");
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_), 0);
  std::unordered_set<std::size_t> rows;
  for (const auto& e : entries_) {
    if (e.label < 0 || e.label >= num_classes_) {
      throw InputError(fmt::format("dev set: class index {} for '{}' outside [0, {})", e.label,
                                   e.instance_id, num_classes_));
    }
    if (!rows.insert(e.row).second) {
      throw InputError(fmt::format("dev set: instance '{}' listed more than once", e.instance_id));
    }
    ++counts[static_cast<std::size_t>(e.label)];
  }
  if (std::adjacent_find(counts.begin(), counts.end(), std::not_equal_to<>()) != counts.end()) {
    std::string detail;
    for (int k = 0; k < num_classes_; ++k) {
      detail += fmt::format("{}class {}: {}", k ? ", " : "", k, counts[static_cast<std::size_t>(k)]);
    }
    throw InputError(fmt::format("unbalanced dev set ({})", detail));
  }
  per_class_ = counts.front();
}

DevSet parse_devset(std::string_view text, const DatasetManifest& manifest, int num_classes) {
  std::vector<DevEntry> entries;
  for_each_line(text, [&](std::string_view line, std::size_t line_no, std::size_t offset) {
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw ParseError(fmt::format("dev set line {}: expected instance_id<TAB>class_index",
                                   line_no),
                       offset);
    }
    const auto id = line.substr(0, tab);
    const auto label_text = line.substr(tab + 1);
    const auto row = manifest.index_of(id);
    if (!row) {
      throw InputError(fmt::format("dev set line {}: unknown instance id '{}'", line_no, id));
    }
    const std::size_t label = parse_count(label_text, line_no, offset + tab + 1);
    if (label >= static_cast<std::size_t>(num_classes)) {
      throw InputError(fmt::format("dev set line {}: class index {} >= K = {}", line_no, label,
                                   num_classes));
    }
    entries.push_back({std::string(id), *row, static_cast<int>(label)});
  });
  return DevSet(std::move(entries), num_classes);
}

DevSet read_devset(const std::filesystem::path& path, const DatasetManifest& manifest,
                   int num_classes) {
  return parse_devset(read_file_text(path), manifest, num_classes);
}

std::string format_devset(const DevSet& dev) {
  std::string out;
  for (const auto& e : dev.entries()) out += fmt::format("{}\t{}\n", e.instance_id, e.label);
  return out;
}

std::pair<DatasetManifest, DevSet> arrange_dev_last(const DatasetManifest& manifest,
                                                    const DevSet& dev) {
  std::vector<bool> is_dev(manifest.size(), false);
  for (const auto& e : dev.entries()) {
    if (e.row >= manifest.size() || manifest.instance_ids()[e.row] != e.instance_id) {
      throw InputError(fmt::format("dev set entry '{}' does not match the manifest", e.instance_id));
    }
    is_dev[e.row] = true;
  }
  std::vector<std::string> ids;
  ids.reserve(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (!is_dev[i]) ids.push_back(manifest.instance_ids()[i]);
  }
  const std::size_t n = ids.size();
  std::vector<DevEntry> entries;
  entries.reserve(dev.size());
  for (const auto& e : dev.entries()) {
    entries.push_back({e.instance_id, ids.size(), e.label});
    ids.push_back(e.instance_id);
  }
  DatasetManifest arranged(std::move(ids), n, dev.size(), manifest.layer_names(),
                           manifest.notes());
  return {std::move(arranged), DevSet(std::move(entries), dev.num_classes())};
}

AffinityMatrix::AffinityMatrix(std::size_t num_instances,
                               std::vector<AffinityFunctionDescriptor> descriptors,
                               MatrixF scores)
    : num_instances_(num_instances),
      descriptors_(std::move(descriptors)),
      scores_(std::move(scores)) {
  if (num_instances_ == 0) throw InputError("affinity matrix: no instances");
  if (descriptors_.empty()) throw InputError("affinity matrix: no affinity functions");
  if (scores_.rows() != num_instances_ ||
      scores_.cols() != num_instances_ * descriptors_.size()) {
    throw InputError(fmt::format("affinity matrix: scores are {}x{}, expected {}x{}",
                                 scores_.rows(), scores_.cols(), num_instances_,
                                 num_instances_ * descriptors_.size()));
  }
  for (std::size_t a = 0; a < descriptors_.size(); ++a) {
    if (descriptors_[a].layer.empty()) throw InputError("affinity matrix: empty layer name");
    for (std::size_t b = 0; b < a; ++b) {
      if (descriptors_[a] == descriptors_[b]) {
        throw InputError(fmt::format("affinity matrix: duplicate function ({}, {})",
                                     descriptors_[a].layer, descriptors_[a].prototype_rank));
      }
    }
  }
  const auto values = scores_.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = values[i];
    if (!std::isfinite(v) || v < -1.0f || v > 1.0f) {
      throw InputError(fmt::format("affinity matrix: score {} at ({}, {}) outside [-1, 1]", v,
                                   i / scores_.cols(), i % scores_.cols()));
    }
  }
}

Matrix AffinityMatrix::slice(std::size_t function) const {
  const std::size_t n = num_instances_;
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = scores_.row(i).subspan(function * n, n);
    auto dst = out.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open '{}' for reading", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw InputError(fmt::format("error reading '{}'", path.string()));
  return bytes;
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open '{}' for reading", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError(fmt::format("error writing '{}'", path.string()));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError(fmt::format("cannot open '{}' for writing", tmp.string()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw InputError(fmt::format("error writing '{}'", tmp.string()));
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw InputError(fmt::format("cannot move output into '{}': {}", path.string(), ec.message()));
  }
}

}  // namespace affcode
