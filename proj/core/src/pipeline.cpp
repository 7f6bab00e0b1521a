#include "affcode/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "affcode/affinity.hpp"
#include "affcode/error.hpp"
#include "affcode/mapping.hpp"

namespace affcode {
namespace {

template <typename F>
auto stage(std::string_view name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("[{}] {}", name, e.what()));
  } catch (const std::exception& e) {
    throw Error(ErrorKind::kInternal, fmt::format("[{}] {}", name, e.what()));
  }
}

std::string source_name(const AffinityFunctionDescriptor& d) {
  return fmt::format("{}#{}", d.layer, d.prototype_rank);
}

std::vector<BaseModelFit> fit_all_base_models(const AffinityMatrix& affinity,
                                              const PipelineConfig& config) {
  const std::size_t alpha = affinity.num_functions();
  const GmmConfig base = config.base_config();
  std::vector<BaseModelFit> fits(alpha);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&] {
    try {
      for (std::size_t f = next++; f < alpha; f = next++) {
        fits[f] = fit_base_model(affinity.slice(f), config.num_classes, base, f);
        fits[f].prediction.source = source_name(affinity.descriptors()[f]);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = alpha;
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(config.workers, 1, alpha);
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return fits;
}

std::size_t max_rank(const AffinityMatrix& affinity) {
  std::size_t z = 0;
  for (const auto& d : affinity.descriptors()) z = std::max<std::size_t>(z, d.prototype_rank);
  return z;
}

void check_dev_tail(const DatasetManifest& manifest, const DevSet& dev) {
  if (manifest.m_dev() != dev.size()) {
    throw InputError(fmt::format("manifest declares m_dev = {} but the dev set has {} rows",
                                 manifest.m_dev(), dev.size()));
  }
  for (const auto& e : dev.entries()) {
    if (e.row < manifest.n_unlabeled()) {
      throw InputError(fmt::format("dev instance '{}' is at row {}, outside the last {} rows",
                                   e.instance_id, e.row, manifest.m_dev()));
    }
  }
}

void write_cache_dumps(const std::filesystem::path& dir, const DatasetManifest& manifest,
                       const InferenceResult& inference) {
  std::filesystem::create_directories(dir);
  for (std::size_t f = 0; f < inference.base_lps.size(); ++f) {
    write_file_atomic(dir / fmt::format("lp_{:04d}.tsv", f),
                      format_label_prediction(inference.base_lps[f], manifest));
  }
}

RunResult finish_run(const PipelineConfig& config, DatasetManifest manifest, DevSet dev,
                     const AffinityMatrix& affinity, RunMetadata meta,
                     const std::optional<std::filesystem::path>& truth_path,
                     const std::optional<std::filesystem::path>& cache_dir,
                     const std::filesystem::path& output) {
  InferenceResult inference =
      stage("inference", [&] { return infer_labels(affinity, dev, config); });

  std::optional<std::map<std::string, int>> truth;
  std::optional<AccuracyReport> accuracy;
  if (truth_path) {
    truth = stage("truth", [&] { return read_truth(*truth_path, config.num_classes); });
    accuracy = non_dev_accuracy(manifest, dev, inference.labels.hard, *truth);
  }
  const std::string text = format_labels(manifest, dev, affinity, inference.labels, meta,
                                         truth ? &*truth : nullptr);
  stage("output", [&] {
    if (cache_dir) write_cache_dumps(*cache_dir, manifest, inference);
    write_file_atomic(output, text);
  });
  return {std::move(manifest), std::move(dev), std::move(inference), accuracy};
}

}  // namespace

void PipelineConfig::validate() const {
  if (num_classes < 2) throw InputError(fmt::format("K must be >= 2, got {}", num_classes));
  if (z < 1) throw InputError("Z must be >= 1");
  if (!(tol > 0.0)) throw InputError("tol must be > 0");
  if (max_iter < 1) throw InputError("max-iter must be >= 1");
  if (restarts < 1) throw InputError("restarts must be >= 1");
  if (!(variance_floor > 0.0)) throw InputError("variance floor must be > 0");
  if (!(bernoulli_floor > 0.0 && bernoulli_floor < 0.5)) {
    throw InputError("Bernoulli floor must be in (0, 0.5)");
  }
}

GmmConfig PipelineConfig::base_config() const {
  GmmConfig c;
  c.tol = tol;
  c.max_iter = max_iter;
  c.restarts = restarts;
  c.seed = seed;
  c.variance_floor = variance_floor;
  return c;
}

EnsembleConfig PipelineConfig::ensemble_config() const {
  EnsembleConfig c;
  c.tol = tol;
  c.max_iter = max_iter;
  c.restarts = restarts;
  c.seed = seed;
  c.bernoulli_floor = bernoulli_floor;
  return c;
}

FinalLabels make_final_labels(Matrix probs, ClusterClassMapping mapping) {
  std::vector<int> hard(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw Error(ErrorKind::kInternal, fmt::format("label row {} has entry {} outside [0, 1]", i, p));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw Error(ErrorKind::kInternal, fmt::format("label row {} sums to {}", i, sum));
    }
    hard[i] = static_cast<int>(argmax(row));
  }
  return {std::move(probs), std::move(hard), std::move(mapping)};
}

FinalLabels map_to_classes(const Matrix& gamma, const DevSet& dev) {
  ClusterClassMapping mapping = solve_mapping(mapping_weights(gamma, dev));
  Matrix mapped = apply_mapping(gamma, mapping.g);
  return make_final_labels(std::move(mapped), std::move(mapping));
}

InferenceResult infer_labels(const AffinityMatrix& affinity, const DevSet& dev,
                             const PipelineConfig& config) {
  config.validate();
  if (dev.num_classes() != config.num_classes) {
    throw InputError(fmt::format("dev set was read with K = {}, config has K = {}",
                                 dev.num_classes(), config.num_classes));
  }
  for (const auto& e : dev.entries()) {
    if (e.row >= affinity.num_instances()) {
      throw InputError(fmt::format("dev row {} outside the {} affinity rows", e.row,
                                   affinity.num_instances()));
    }
  }

  InferenceResult out;
  out.base_fits = stage("base-models", [&] { return fit_all_base_models(affinity, config); });

  std::vector<LabelPredictionMatrix> unmapped;
  unmapped.reserve(out.base_fits.size());
  for (const auto& fit : out.base_fits) unmapped.push_back(fit.prediction);

  out.ensemble = stage("ensemble", [&] {
    return fit_ensemble(one_hot_concat(unmapped), config.ensemble_config());
  });

  stage("mapping", [&] {
    out.labels = map_to_classes(out.ensemble.labels, dev);
    // Base-model cluster indices are arbitrary per function, so each LP_f is
    // aligned with its own dev-set mapping.
    out.base_lps.reserve(unmapped.size());
    for (auto& lp : unmapped) {
      const auto g = solve_mapping(mapping_weights(lp.lp, dev)).g;
      out.base_lps.push_back({apply_mapping(lp.lp, g), lp.source});
    }
  });
  return out;
}

std::map<std::string, int> parse_truth(std::string_view text, int num_classes) {
  std::map<std::string, int> truth;
  std::size_t offset = 0;
  std::size_t line_no = 0;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(offset, end - offset);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (!line.empty() && line.front() != '#') {
      const auto tab = line.find('\t');
      if (tab == std::string_view::npos) {
        throw ParseError(fmt::format("truth line {}: expected instance_id<TAB>class_index", line_no),
                         offset);
      }
      int label = -1;
      const auto value = line.substr(tab + 1);
      try {
        std::size_t used = 0;
        label = std::stoi(std::string(value), &used);
        if (used != value.size()) label = -1;
      } catch (const std::exception&) {
        label = -1;
      }
      if (label < 0 || label >= num_classes) {
        throw ParseError(fmt::format("truth line {}: bad class index '{}'", line_no, value),
                         offset + tab + 1);
      }
      truth[std::string(line.substr(0, tab))] = label;
    }
    offset = end + 1;
  }
  return truth;
}

std::map<std::string, int> read_truth(const std::filesystem::path& path, int num_classes) {
  return parse_truth(read_file_text(path), num_classes);
}

AccuracyReport non_dev_accuracy(const DatasetManifest& manifest, const DevSet& dev,
                                const std::vector<int>& hard,
                                const std::map<std::string, int>& truth) {
  std::vector<bool> is_dev(manifest.size(), false);
  for (const auto& e : dev.entries()) is_dev[e.row] = true;
  AccuracyReport report;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (is_dev[i]) continue;
    auto it = truth.find(manifest.instance_ids()[i]);
    if (it == truth.end()) continue;
    ++report.rows;
    if (hard[i] == it->second) ++report.correct;
  }
  return report;
}

std::string format_labels(const DatasetManifest& manifest, const DevSet& dev,
                          const AffinityMatrix& affinity, const FinalLabels& labels,
                          const RunMetadata& meta, const std::map<std::string, int>* truth) {
  const std::size_t k_count = labels.probs.cols();
  std::string out = "# affcode labels v1\n";
  out += fmt::format("# source\t{}\n", meta.source);
  out += fmt::format("# N\t{}\n# K\t{}\n# alpha\t{}\n# Z\t{}\n# seed\t{}\n", manifest.size(),
                     k_count, affinity.num_functions(),
                     meta.z ? meta.z : max_rank(affinity), meta.seed);
  out += fmt::format("# n_unlabeled\t{}\n# m_dev\t{}\n", manifest.size() - dev.size(), dev.size());
  out += fmt::format("# padded_prototype_sets\t{}\n", meta.padded_prototype_sets);
  out += "# mapping\t";
  for (std::size_t k = 0; k < labels.mapping.g.size(); ++k) {
    out += fmt::format("{}{}", k ? " " : "", labels.mapping.g[k]);
  }
  out += fmt::format("\n# mapping_objective\t{:.17g}\n", labels.mapping.objective);
  if (truth) {
    const auto report = non_dev_accuracy(manifest, dev, labels.hard, *truth);
    out += fmt::format("# accuracy_non_dev\t{:.17g}\n# accuracy_rows\t{}\n", report.accuracy(),
                       report.rows);
  }
  out += "# columns\tinstance_id";
  for (std::size_t k = 0; k < k_count; ++k) out += fmt::format("\tp_{}", k);
  out += "\thard\n";
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    out += manifest.instance_ids()[i];
    for (double p : labels.probs.row(i)) out += fmt::format("\t{:.17g}", p);
    out += fmt::format("\t{}\n", labels.hard[i]);
  }
  return out;
}

std::string format_label_prediction(const LabelPredictionMatrix& lp,
                                    const DatasetManifest& manifest) {
  std::string out = fmt::format("# source\t{}\n", lp.source);
  for (std::size_t i = 0; i < lp.lp.rows(); ++i) {
    out += manifest.instance_ids()[i];
    for (double p : lp.lp.row(i)) out += fmt::format("\t{:.17g}", p);
    out += '\n';
  }
  return out;
}

RunResult run_label(const PipelineConfig& config, const LabelPaths& paths) {
  stage("config", [&] { config.validate(); });
  auto original = stage("manifest", [&] { return read_manifest(paths.manifest); });
  auto dev_in = stage("devset", [&] {
    return read_devset(paths.devset, original, config.num_classes);
  });
  auto [manifest, dev] = stage("devset", [&] { return arrange_dev_last(original, dev_in); });

  RunMetadata meta{config.z, config.seed, "filtermaps", 0};
  std::optional<AffinityMatrix> affinity;
  const auto cached_matrix = paths.cache_dir ? *paths.cache_dir / "affinity.ggam" : std::filesystem::path{};
  const auto cached_manifest = paths.cache_dir ? *paths.cache_dir / "manifest.txt" : std::filesystem::path{};
  const auto cached_padding = paths.cache_dir ? *paths.cache_dir / "padded.txt" : std::filesystem::path{};
  if (paths.cache_dir && std::filesystem::exists(cached_matrix) &&
      std::filesystem::exists(cached_manifest) && std::filesystem::exists(cached_padding)) {
    stage("cache", [&] {
      if (read_file_text(cached_manifest) != format_manifest(manifest)) return;
      auto loaded = load_affinity(cached_matrix);
      if (loaded.num_instances() != manifest.size() || max_rank(loaded) != config.z ||
          loaded.num_functions() != manifest.layer_names().size() * config.z) {
        return;
      }
      const std::string padded = read_file_text(cached_padding);
      std::size_t count = 0;
      const auto [end, ec] = std::from_chars(padded.data(), padded.data() + padded.size(), count);
      if (ec != std::errc{} || end == padded.data()) return;
      meta.padded_prototype_sets = count;
      affinity = std::move(loaded);
    });
  }
  if (!affinity) {
    auto features = stage("features", [&] {
      return FeatureStore::load_directory(paths.filtermaps, manifest);
    });
    auto prototypes = stage("prototypes", [&] { return select_all_prototypes(features, config.z); });
    for (const auto& [key, set] : prototypes) {
      if (set.padded() > 0) ++meta.padded_prototype_sets;
    }
    affinity = stage("affinity", [&] {
      return build_affinity_matrix(features, prototypes, manifest, config.z, config.workers);
    });
    if (paths.cache_dir) {
      stage("cache", [&] {
        std::filesystem::create_directories(*paths.cache_dir);
        save_affinity(*affinity, cached_matrix);
        write_manifest(manifest, cached_manifest);
        write_file_atomic(cached_padding, fmt::format("{}\n", meta.padded_prototype_sets));
      });
    }
  }
  return finish_run(config, std::move(manifest), std::move(dev), *affinity, meta, paths.truth,
                    paths.cache_dir, paths.output);
}

RunResult run_from_affinity(const PipelineConfig& config, const AffinityPaths& paths) {
  stage("config", [&] { config.validate(); });
  auto affinity = stage("affinity", [&] { return load_affinity(paths.affinity); });
  auto manifest = stage("manifest", [&] {
    auto m = read_manifest(paths.manifest);
    if (m.size() != affinity.num_instances()) {
      throw InputError(fmt::format("descriptor/manifest mismatch: affinity matrix has N = {}, "
                                   "manifest lists {} instances",
                                   affinity.num_instances(), m.size()));
    }
    const auto& layers = m.layer_names();
    for (const auto& d : affinity.descriptors()) {
      if (std::find(layers.begin(), layers.end(), d.layer) == layers.end()) {
        throw InputError(fmt::format("descriptor/manifest mismatch: layer '{}' is not in the "
                                     "manifest",
                                     d.layer));
      }
    }
    return m;
  });
  auto dev = stage("devset", [&] {
    auto d = read_devset(paths.devset, manifest, config.num_classes);
    check_dev_tail(manifest, d);
    return d;
  });
  RunMetadata meta{0, config.seed, "affinity", 0};
  return finish_run(config, std::move(manifest), std::move(dev), affinity, meta, paths.truth,
                    paths.cache_dir, paths.output);
}

}  // namespace affcode
