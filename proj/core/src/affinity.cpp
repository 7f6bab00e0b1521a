#include "affcode/affinity.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "affcode/error.hpp"

namespace affcode {
namespace {

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw InputError(fmt::format("cosine: length mismatch {} vs {}", a.size(), b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// Patch norms of a filter map, one per (h, w) in row-major order.
std::vector<double> patch_norms(const FilterMap& map) {
  const std::size_t hw = static_cast<std::size_t>(map.height()) * map.width();
  std::vector<double> sq(hw, 0.0);
  const auto data = map.data();
  for (std::size_t c = 0; c < map.channels(); ++c) {
    const float* channel = data.data() + c * hw;
    for (std::size_t p = 0; p < hw; ++p) sq[p] += static_cast<double>(channel[p]) * channel[p];
  }
  for (auto& v : sq) v = std::sqrt(v);
  return sq;
}

double max_patch_cosine(std::span<const float> anchor, const FilterMap& target,
                        std::span<const double> norms, std::vector<double>& scratch) {
  if (anchor.size() != target.channels()) {
    throw InputError(fmt::format("affinity: anchor has {} channels, target {}/{} has {}",
                                 anchor.size(), target.instance_id(), target.layer(),
                                 target.channels()));
  }
  double anchor_sq = 0.0;
  for (float v : anchor) anchor_sq += static_cast<double>(v) * v;
  if (anchor_sq == 0.0) return 0.0;
  const double anchor_norm = std::sqrt(anchor_sq);

  const std::size_t hw = norms.size();
  scratch.assign(hw, 0.0);
  const auto data = target.data();
  for (std::size_t c = 0; c < anchor.size(); ++c) {
    const double a = anchor[c];
    if (a == 0.0) continue;
    const float* channel = data.data() + c * hw;
    for (std::size_t p = 0; p < hw; ++p) scratch[p] += a * channel[p];
  }
  double best = -1.0;
  bool any = false;
  for (std::size_t p = 0; p < hw; ++p) {
    const double s = norms[p] == 0.0 ? 0.0 : scratch[p] / (anchor_norm * norms[p]);
    if (!any || s > best) best = s;
    any = true;
  }
  return std::clamp(best, -1.0, 1.0);
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }
double cosine(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }

double affinity_score(std::span<const float> anchor, const FilterMap& target) {
  std::vector<double> scratch;
  const auto norms = patch_norms(target);
  return max_patch_cosine(anchor, target, norms, scratch);
}

void FeatureStore::add(FilterMap map) {
  FeatureKey key{map.instance_id(), map.layer()};
  if (maps_.contains(key)) {
    throw InputError(fmt::format("duplicate filter map for {}/{}", key.first, key.second));
  }
  maps_.emplace(std::move(key), std::move(map));
}

const FilterMap* FeatureStore::find(const std::string& instance_id,
                                    const std::string& layer) const {
  auto it = maps_.find({instance_id, layer});
  return it == maps_.end() ? nullptr : &it->second;
}

FeatureStore FeatureStore::load_directory(const std::filesystem::path& dir,
                                          const DatasetManifest& manifest) {
  if (!std::filesystem::is_directory(dir)) {
    throw InputError(fmt::format("filter-map directory '{}' does not exist", dir.string()));
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ggfm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  const auto& layers = manifest.layer_names();
  FeatureStore store;
  for (const auto& path : files) {
    auto map = read_filtermap(path);
    if (!manifest.index_of(map.instance_id())) continue;
    if (std::find(layers.begin(), layers.end(), map.layer()) == layers.end()) continue;
    store.add(std::move(map));
  }
  return store;
}

PrototypeStore select_all_prototypes(const FeatureStore& store, std::size_t z) {
  PrototypeStore out;
  for (const auto& [key, map] : store.maps()) out.emplace(key, select_top_z(map, z));
  return out;
}

AffinityMatrix build_affinity_matrix(const FeatureStore& maps, const PrototypeStore& sets,
                                     const DatasetManifest& manifest, std::size_t z,
                                     std::size_t workers) {
  const auto& ids = manifest.instance_ids();
  const std::size_t n = ids.size();
  if (n == 0) throw InputError("affinity: empty manifest");
  if (z == 0) throw InputError("affinity: Z must be at least 1");

  std::vector<AffinityFunctionDescriptor> descriptors;
  for (const auto& layer : manifest.layer_names()) {
    for (std::size_t rank = 1; rank <= z; ++rank) {
      descriptors.push_back({layer, static_cast<std::uint32_t>(rank)});
    }
  }

  // Resolve every (instance, layer) up front so missing inputs fail before any work.
  const std::size_t num_layers = manifest.layer_names().size();
  std::vector<const FilterMap*> map_of(n * num_layers);
  std::vector<const PrototypeSet*> set_of(n * num_layers);
  std::vector<std::vector<double>> norms_of(n * num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    const auto& layer = manifest.layer_names()[l];
    for (std::size_t i = 0; i < n; ++i) {
      const auto* map = maps.find(ids[i], layer);
      if (!map) throw InputError(fmt::format("affinity: no filter map for {}/{}", ids[i], layer));
      auto it = sets.find({ids[i], layer});
      if (it == sets.end()) {
        throw InputError(fmt::format("affinity: no prototype set for {}/{}", ids[i], layer));
      }
      if (it->second.requested() != z) {
        throw InputError(fmt::format("affinity: prototype set for {}/{} was selected with Z={}",
                                     ids[i], layer, it->second.requested()));
      }
      map_of[l * n + i] = map;
      set_of[l * n + i] = &it->second;
      norms_of[l * n + i] = patch_norms(*map);
    }
  }

  const std::size_t alpha = descriptors.size();
  MatrixF scores(n, alpha * n);
  const std::size_t columns = alpha * n;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&] {
    std::vector<double> scratch;
    try {
      for (std::size_t col = next++; col < columns; col = next++) {
        const std::size_t f = col / n;
        const std::size_t j = col % n;
        const std::size_t l = f / z;
        const std::size_t rank = f % z + 1;
        const auto anchor = std::span<const float>(set_of[l * n + j]->at_rank(rank).vector);
        for (std::size_t i = 0; i < n; ++i) {
          const double s = max_patch_cosine(anchor, *map_of[l * n + i], norms_of[l * n + i], scratch);
          scores(i, col) = static_cast<float>(s);
        }
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = columns;
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(workers, 1, columns);
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return AffinityMatrix(n, std::move(descriptors), std::move(scores));
}

}  // namespace affcode
