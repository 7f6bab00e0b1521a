#include "fixtures.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

namespace fixture {

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "affcode-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

affcode::FilterMap make_map(const std::string& id, const std::string& layer, std::uint32_t c,
                            std::uint32_t h, std::uint32_t w, std::vector<float> values) {
  return affcode::FilterMap(id, layer, c, h, w, std::move(values));
}

affcode::FilterMap worked_example_map() {
  return make_map("example", "pool1", 3, 2, 2,
                  {1.0f, 0.5f, 0.3f, 0.6f,    // channel 1
                   0.1f, 0.7f, 0.4f, 0.3f,    // channel 2
                   0.2f, 0.9f, 0.5f, 0.1f});  // channel 3
}

affcode::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo,
                              double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  affcode::Matrix m(rows, cols);
  for (double& x : m.data()) x = u(rng);
  return m;
}

affcode::Matrix random_simplex_rows(std::size_t rows, std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  affcode::Matrix m(rows, k);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (double& x : m.row(i)) s += (x = u(rng));
    for (double& x : m.row(i)) x /= s;
  }
  return m;
}

FeatureDataset write_feature_dataset(const std::filesystem::path& dir,
                                     const FeatureDatasetSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<float> background(0.0f, 0.15f);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  const auto k_count = static_cast<std::size_t>(spec.num_classes);
  const std::size_t n = spec.per_class * k_count;

  // One nonnegative pattern per (class, layer).
  std::vector<std::vector<std::vector<float>>> patterns(k_count);
  for (auto& by_layer : patterns) {
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
      std::vector<float> p(spec.channels);
      for (float& x : p) x = unit(rng) < 0.5f ? 1.0f + unit(rng) : 0.05f * unit(rng);
      by_layer.push_back(std::move(p));
    }
  }

  FeatureDataset out;
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.labels[i] = static_cast<int>(i % k_count);
  std::shuffle(out.labels.begin(), out.labels.end(), rng);

  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = fmt::format("img_{:03d}", i);

  out.filtermaps = dir / "maps";
  std::filesystem::create_directories(out.filtermaps);
  const std::size_t cells = static_cast<std::size_t>(spec.height) * spec.width;
  std::uniform_int_distribution<std::size_t> where(0, cells - 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
      std::vector<float> values(spec.channels * cells);
      for (float& v : values) v = background(rng);
      const std::size_t at = where(rng);
      const float scale = 0.8f + 0.4f * unit(rng);
      const auto& p = patterns[static_cast<std::size_t>(out.labels[i])][l];
      for (std::uint32_t c = 0; c < spec.channels; ++c) values[c * cells + at] = scale * p[c];
      auto map = make_map(ids[i], spec.layers[l], spec.channels, spec.height, spec.width,
                          std::move(values));
      affcode::write_filtermap(map, out.filtermaps / fmt::format("{}_{}.ggfm", ids[i],
                                                                 spec.layers[l]));
    }
  }

  // Dev rows: the first dev_per_class instances of each class in manifest order.
  std::string dev_text, truth_text;
  std::vector<std::size_t> taken(k_count, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& t = taken[static_cast<std::size_t>(out.labels[i])];
    if (t < spec.dev_per_class) {
      dev_text += fmt::format("{}\t{}\n", ids[i], out.labels[i]);
      ++t;
    }
    truth_text += fmt::format("{}\t{}\n", ids[i], out.labels[i]);
  }
  const std::size_t m = spec.dev_per_class * k_count;
  affcode::DatasetManifest manifest(ids, n - m, m, spec.layers, "fixture");
  out.manifest = dir / "manifest.txt";
  out.devset = dir / "devset.tsv";
  out.truth = dir / "truth.tsv";
  affcode::write_manifest(manifest, out.manifest);
  affcode::write_file_atomic(out.devset, dev_text);
  affcode::write_file_atomic(out.truth, truth_text);
  return out;
}

}  // namespace fixture
