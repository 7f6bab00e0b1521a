#include "affcode/synth.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "affcode/error.hpp"
#include "affcode/mixture.hpp"

namespace affcode {
namespace {

constexpr std::uint64_t kPlantedStream = 0x504c414eULL;  // "PLAN"
constexpr std::uint64_t kOneHotStream = 0x4f4e4548ULL;   // "ONEH"

constexpr double kGaussianCrossMean = 0.35;
constexpr double kGaussianNoiseMean = 0.45;
constexpr double kColumnJitter = 0.1;
constexpr double kBetaCrossMean = 0.3;
constexpr double kBetaConcentration = 40.0;

std::vector<int> balanced_shuffled_labels(std::size_t count, int k, std::mt19937_64& rng) {
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(k));
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

double sample_beta(double mean, double concentration, std::mt19937_64& rng) {
  std::gamma_distribution<double> ga(mean * concentration, 1.0);
  std::gamma_distribution<double> gb((1.0 - mean) * concentration, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

double accuracy_on_rows(const std::vector<int>& hard, const std::vector<int>& truth,
                        std::size_t rows) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < rows; ++i) correct += hard[i] == truth[i];
  return rows ? static_cast<double>(correct) / static_cast<double>(rows) : 0.0;
}

// First `per_class` pool entries of each class, in pool order.
DevSet dev_subset(const DevSet& pool, std::size_t per_class) {
  std::vector<std::size_t> taken(static_cast<std::size_t>(pool.num_classes()), 0);
  std::vector<DevEntry> entries;
  for (const auto& e : pool.entries()) {
    auto& t = taken[static_cast<std::size_t>(e.label)];
    if (t < per_class) {
      entries.push_back(e);
      ++t;
    }
  }
  return DevSet(std::move(entries), pool.num_classes());
}

}  // namespace

void PlantedSpec::validate() const {
  if (num_classes < 2) throw InputError("planted: K must be >= 2");
  if (alpha_good + alpha_noise < 1) throw InputError("planted: need at least one function");
  if (n < 2 * static_cast<std::size_t>(num_classes)) throw InputError("planted: N must be >= 2K");
  if (dev_per_class < 1) throw InputError("planted: dev_per_class must be >= 1");
  if (dev_per_class * static_cast<std::size_t>(num_classes) >= n) {
    throw InputError("planted: dev rows must leave at least one unlabeled row");
  }
  if (!(separation >= 0.0)) throw InputError("planted: separation must be >= 0");
  if (!(noise_std > 0.0)) throw InputError("planted: noise_std must be > 0");
}

PlantedInstance generate_planted(const PlantedSpec& spec) {
  spec.validate();
  auto rng = make_rng(spec.seed, kPlantedStream, 0);
  const std::size_t n = spec.n;
  const auto k_count = static_cast<std::size_t>(spec.num_classes);
  const std::size_t m = spec.dev_per_class * k_count;
  const std::size_t unlabeled = n - m;

  std::vector<int> labels = balanced_shuffled_labels(unlabeled, spec.num_classes, rng);
  for (std::size_t k = 0; k < k_count; ++k) {
    labels.insert(labels.end(), spec.dev_per_class, static_cast<int>(k));
  }

  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = fmt::format("inst{:05d}", i);
  DatasetManifest manifest(
      ids, unlabeled, m, {"planted"},
      fmt::format("planted N={} K={} good={} noise={} separation={} seed={}", n, spec.num_classes,
                  spec.alpha_good, spec.alpha_noise, spec.separation, spec.seed));

  std::vector<DevEntry> dev_entries;
  for (std::size_t i = unlabeled; i < n; ++i) dev_entries.push_back({ids[i], i, labels[i]});
  DevSet dev(std::move(dev_entries), spec.num_classes);

  const std::size_t alpha = spec.alpha_good + spec.alpha_noise;
  std::vector<AffinityFunctionDescriptor> descriptors;
  for (std::size_t f = 0; f < alpha; ++f) {
    descriptors.push_back({"planted", static_cast<std::uint32_t>(f + 1)});
  }

  MatrixF scores(n, alpha * n);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-kColumnJitter, kColumnJitter);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double sigma = spec.noise_std;
  const double beta_sd =
      std::sqrt(kBetaCrossMean * (1.0 - kBetaCrossMean) / (kBetaConcentration + 1.0));
  const double beta_same_mean = std::min(kBetaCrossMean + spec.separation * beta_sd, 0.97);

  for (std::size_t f = 0; f < alpha; ++f) {
    const bool good = f < spec.alpha_good;
    for (std::size_t j = 0; j < n; ++j) {
      const double offset = jitter(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const bool same = labels[i] == labels[j];
        double s = 0.0;
        if (spec.family == ScoreFamily::kGaussian) {
          const double mean = good ? kGaussianCrossMean + (same ? spec.separation * sigma : 0.0)
                                   : kGaussianNoiseMean;
          s = mean + offset + sigma * normal(rng);
        } else if (good) {
          s = sample_beta(same ? beta_same_mean : kBetaCrossMean, kBetaConcentration, rng);
        } else {
          s = unit(rng);
        }
        scores(i, f * n + j) = static_cast<float>(std::clamp(s, -1.0, 1.0));
      }
    }
  }
  return {AffinityMatrix(n, std::move(descriptors), std::move(scores)), std::move(manifest),
          std::move(dev), std::move(labels)};
}

PlantedOneHot generate_planted_onehot(const PlantedOneHotSpec& spec) {
  if (spec.num_classes < 2) throw InputError("planted one-hot: K must be >= 2");
  if (spec.alpha_good + spec.alpha_noise < 1) throw InputError("planted one-hot: no blocks");
  if (spec.n < static_cast<std::size_t>(spec.num_classes)) throw InputError("planted one-hot: N < K");
  auto rng = make_rng(spec.seed, kOneHotStream, 0);
  const auto k_count = static_cast<std::size_t>(spec.num_classes);
  const std::size_t blocks = spec.alpha_good + spec.alpha_noise;

  PlantedOneHot out;
  out.labels = balanced_shuffled_labels(spec.n, spec.num_classes, rng);
  out.concat = {BinaryMatrix(spec.n, blocks * k_count, 0), blocks, spec.num_classes};

  std::uniform_int_distribution<int> any_cluster(0, spec.num_classes - 1);
  std::uniform_int_distribution<int> other_cluster(1, spec.num_classes - 1);
  std::bernoulli_distribution flip(spec.flip_probability);
  for (std::size_t f = 0; f < blocks; ++f) {
    std::vector<int> perm(k_count);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const bool good = f < spec.alpha_good;
    for (std::size_t i = 0; i < spec.n; ++i) {
      int cluster = 0;
      if (good) {
        int label = out.labels[i];
        if (flip(rng)) label = (label + other_cluster(rng)) % spec.num_classes;
        cluster = perm[static_cast<std::size_t>(label)];
      } else {
        cluster = any_cluster(rng);
      }
      out.concat.bits(i, f * k_count + static_cast<std::size_t>(cluster)) = 1;
    }
  }
  return out;
}

std::string format_truth(const DatasetManifest& manifest, const std::vector<int>& labels) {
  std::string out;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    out += fmt::format("{}\t{}\n", manifest.instance_ids()[i], labels[i]);
  }
  return out;
}

std::vector<SweepPoint> sweep(SweepAxis axis, std::span<const std::size_t> grid,
                              const PlantedSpec& spec, const PipelineConfig& config) {
  if (grid.empty()) throw InputError("sweep: empty grid");
  std::vector<SweepPoint> points;
  points.reserve(grid.size());

  if (axis == SweepAxis::kDevSize) {
    PlantedSpec pooled = spec;
    pooled.dev_per_class = *std::max_element(grid.begin(), grid.end());
    if (*std::min_element(grid.begin(), grid.end()) < 1) {
      throw InputError("sweep: dev sizes must be >= 1");
    }
    const auto instance = generate_planted(pooled);
    const auto inference = infer_labels(instance.affinity, instance.dev, config);
    const std::size_t eval_rows = instance.manifest.n_unlabeled();
    for (std::size_t d : grid) {
      const auto labels = map_to_classes(inference.ensemble.labels, dev_subset(instance.dev, d));
      points.push_back({static_cast<double>(d),
                        accuracy_on_rows(labels.hard, instance.labels, eval_rows), spec.seed});
    }
    return points;
  }

  const double total = static_cast<double>(spec.alpha_good + spec.alpha_noise);
  const double good_ratio = total > 0 ? static_cast<double>(spec.alpha_good) / total : 0.0;
  for (std::size_t alpha : grid) {
    if (alpha < 1) throw InputError("sweep: function counts must be >= 1");
    PlantedSpec point = spec;
    point.alpha_good = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(good_ratio * static_cast<double>(alpha))), 1, alpha);
    point.alpha_noise = alpha - point.alpha_good;
    const auto instance = generate_planted(point);
    const auto inference = infer_labels(instance.affinity, instance.dev, config);
    points.push_back({static_cast<double>(alpha),
                      accuracy_on_rows(inference.labels.hard, instance.labels,
                                       instance.manifest.n_unlabeled()),
                      spec.seed});
  }
  return points;
}

std::string format_sweep_csv(std::span<const SweepPoint> points) {
  std::string out = "x,accuracy,seed\n";
  for (const auto& p : points) out += fmt::format("{},{:.17g},{}\n", p.x, p.accuracy, p.seed);
  return out;
}

}  // namespace affcode
