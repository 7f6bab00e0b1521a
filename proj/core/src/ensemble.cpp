#include "affcode/ensemble.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "affcode/error.hpp"
#include "affcode/mapping.hpp"

namespace affcode {
namespace {

constexpr std::uint64_t kEnsembleStream = 0xe5e5b1e5ULL;

// Cluster index held by each row in each block, N x alpha.
std::vector<int> hot_indices(const ConcatenatedLP& data) {
  const std::size_t n = data.bits.rows();
  std::vector<int> hot(n * data.blocks);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < data.blocks; ++f) hot[i * data.blocks + f] = data.hot(i, f);
  }
  return hot;
}

Matrix contingency(std::span<const int> a, std::span<const int> b, std::size_t k_count) {
  Matrix table(k_count, k_count, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    table(static_cast<std::size_t>(a[i]), static_cast<std::size_t>(b[i])) += 1.0;
  }
  return table;
}

std::vector<int> column(const std::vector<int>& hot, std::size_t n, std::size_t blocks,
                        std::size_t f) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = hot[i * blocks + f];
  return out;
}

// Modal class per row after relabeling each block's clusters by `align[f]`.
std::vector<int> aligned_vote(const std::vector<std::vector<int>>& cols,
                              const std::vector<std::vector<int>>& align, std::size_t k_count) {
  const std::size_t n = cols.front().size();
  std::vector<int> vote(n);
  std::vector<std::size_t> counts(k_count);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t f = 0; f < cols.size(); ++f) {
      ++counts[static_cast<std::size_t>(align[f][static_cast<std::size_t>(cols[f][i])])];
    }
    vote[i] = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  return vote;
}

}  // namespace

int ConcatenatedLP::hot(std::size_t i, std::size_t f) const {
  const auto k_count = static_cast<std::size_t>(num_classes);
  const auto row = bits.row(i).subspan(f * k_count, k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    if (row[k]) return static_cast<int>(k);
  }
  return 0;
}

ConcatenatedLP one_hot_concat(std::span<const LabelPredictionMatrix> lps) {
  if (lps.empty()) throw InputError("one_hot_concat: no label prediction matrices");
  const std::size_t n = lps.front().lp.rows();
  const std::size_t k_count = lps.front().lp.cols();
  if (n == 0 || k_count == 0) throw InputError("one_hot_concat: empty label prediction matrix");
  for (std::size_t f = 1; f < lps.size(); ++f) {
    if (lps[f].lp.rows() != n || lps[f].lp.cols() != k_count) {
      throw InputError(fmt::format("one_hot_concat: matrix {} is {}x{}, expected {}x{}", f,
                                   lps[f].lp.rows(), lps[f].lp.cols(), n, k_count));
    }
  }
  ConcatenatedLP out{BinaryMatrix(n, lps.size() * k_count, 0), lps.size(),
                     static_cast<int>(k_count)};
  for (std::size_t f = 0; f < lps.size(); ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      out.bits(i, f * k_count + argmax(lps[f].lp.row(i))) = 1;
    }
  }
  return out;
}

double bernoulli_log_density(std::span<const unsigned char> row, std::size_t k,
                             const BernoulliParams& params) {
  const auto b = params.b.row(k);
  double acc = 0.0;
  for (std::size_t l = 0; l < row.size(); ++l) acc += row[l] ? std::log(b[l]) : std::log1p(-b[l]);
  return acc;
}

EStepResult bernoulli_e_step(const ConcatenatedLP& data, const BernoulliParams& params) {
  const std::size_t k_count = params.priors.size();
  const std::size_t width = data.bits.cols();
  if (params.b.cols() != width) {
    throw InputError(fmt::format("bernoulli_e_step: data width {} vs model width {}", width,
                                 params.b.cols()));
  }
  // log p(s | k) = sum_l log(1 - b_kl) + sum_{l: s_l = 1} log(b_kl / (1 - b_kl))
  Matrix log_odds(k_count, width);
  std::vector<double> base(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    double acc = std::log(params.priors[k]);
    for (std::size_t l = 0; l < width; ++l) {
      const double b = params.b(k, l);
      const double log_off = std::log1p(-b);
      acc += log_off;
      log_odds(k, l) = std::log(b) - log_off;
    }
    base[k] = acc;
  }
  Matrix log_joint(data.bits.rows(), k_count);
  for (std::size_t i = 0; i < data.bits.rows(); ++i) {
    const auto row = data.bits.row(i);
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto lo = log_odds.row(k);
      double acc = base[k];
      for (std::size_t l = 0; l < width; ++l) {
        if (row[l]) acc += lo[l];
      }
      log_joint(i, k) = acc;
    }
  }
  return normalize_log_joint(std::move(log_joint));
}

BernoulliParams m_step_bernoulli(const ConcatenatedLP& data, const Matrix& gamma, double floor,
                                 std::size_t* reseeded) {
  const std::size_t n = data.bits.rows();
  const std::size_t width = data.bits.cols();
  const std::size_t k_count = gamma.cols();
  if (gamma.rows() != n) {
    throw InputError(fmt::format("m_step_bernoulli: {} responsibility rows for {} data rows",
                                 gamma.rows(), n));
  }
  if (!(floor > 0.0 && floor < 0.5)) throw InputError("m_step_bernoulli: floor must be in (0, 0.5)");

  BernoulliParams p{std::vector<double>(k_count, 0.0), Matrix(k_count, width, 0.0)};
  std::vector<double> mass(k_count, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = data.bits.row(i);
    for (std::size_t k = 0; k < k_count; ++k) {
      const double g = gamma(i, k);
      mass[k] += g;
      if (g == 0.0) continue;
      auto b = p.b.row(k);
      for (std::size_t l = 0; l < width; ++l) {
        if (row[l]) b[l] += g;
      }
    }
  }
  std::vector<std::size_t> empty;
  for (std::size_t k = 0; k < k_count; ++k) {
    p.priors[k] = mass[k] / static_cast<double>(n);
    if (mass[k] < kEmptyComponentMass) {
      empty.push_back(k);
      continue;
    }
    for (double& b : p.b.row(k)) b /= mass[k];
  }
  if (!empty.empty()) {
    const auto order = least_confident_rows(gamma);
    for (std::size_t e = 0; e < empty.size(); ++e) {
      const std::size_t k = empty[e];
      const auto row = data.bits.row(order[e % n]);
      auto b = p.b.row(k);
      for (std::size_t l = 0; l < width; ++l) b[l] = row[l] ? 1.0 : 0.0;
      p.priors[k] = 1.0 / static_cast<double>(n);
    }
    double total = 0.0;
    for (double w : p.priors) total += w;
    for (double& w : p.priors) w /= total;
  }
  for (double& b : p.b.data()) b = std::clamp(b, floor, 1.0 - floor);
  if (reseeded) *reseeded = empty.size();
  return p;
}

Matrix vote_initialization(const ConcatenatedLP& data, std::size_t restart, double noise,
                           std::mt19937_64& rng) {
  const std::size_t n = data.bits.rows();
  const std::size_t blocks = data.blocks;
  const auto k_count = static_cast<std::size_t>(data.num_classes);
  const auto hot = hot_indices(data);
  std::vector<std::vector<int>> cols(blocks);
  for (std::size_t f = 0; f < blocks; ++f) cols[f] = column(hot, n, blocks, f);

  // Rank blocks by how well they agree with all others under the best
  // relabeling; informative blocks agree with each other, noise agrees with
  // nothing.
  std::vector<double> agreement(blocks, 0.0);
  for (std::size_t a = 0; a < blocks; ++a) {
    for (std::size_t b = a + 1; b < blocks; ++b) {
      const Matrix table = contingency(cols[a], cols[b], k_count);
      const double matched = mapping_objective(table, max_weight_assignment(table));
      agreement[a] += matched;
      agreement[b] += matched;
    }
  }
  std::vector<std::size_t> ranked(blocks);
  std::iota(ranked.begin(), ranked.end(), 0);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](std::size_t a, std::size_t b) { return agreement[a] > agreement[b]; });
  const std::size_t reference = ranked[restart % blocks];

  std::vector<int> target = cols[reference];
  std::vector<std::vector<int>> align(blocks);
  for (int round = 0; round < 3; ++round) {
    for (std::size_t f = 0; f < blocks; ++f) {
      align[f] = max_weight_assignment(contingency(cols[f], target, k_count));
    }
    target = aligned_vote(cols, align, k_count);
  }

  Matrix gamma(n, k_count, 0.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double hard = static_cast<std::size_t>(target[i]) == k ? 1.0 : 0.0;
      gamma(i, k) = (1.0 - noise) * hard + noise * unit(rng);
      sum += gamma(i, k);
    }
    for (double& g : gamma.row(i)) g /= sum;
  }
  return gamma;
}

EnsembleFit fit_ensemble(const ConcatenatedLP& data, const EnsembleConfig& config) {
  const auto k_count = static_cast<std::size_t>(data.num_classes);
  if (k_count < 1 || data.blocks == 0) throw InputError("fit_ensemble: empty input");
  if (data.bits.rows() < k_count) {
    throw InputError(fmt::format("fit_ensemble: N = {} is smaller than K = {}", data.bits.rows(),
                                 k_count));
  }
  if (data.bits.cols() != data.blocks * k_count) {
    throw InputError("fit_ensemble: width is not alpha * K");
  }
  const std::size_t restarts = std::max<std::size_t>(config.restarts, 1);

  EnsembleFit best;
  bool have_best = false;
  for (std::size_t r = 0; r < restarts; ++r) {
    auto rng = make_rng(config.seed, kEnsembleStream, r);
    const Matrix init = vote_initialization(data, r, config.init_noise, rng);
    BernoulliParams params = m_step_bernoulli(data, init, config.bernoulli_floor);
    EmTrace trace;
    trace.restart = r;
    EStepResult post = bernoulli_e_step(data, params);
    trace.log_likelihood.push_back(post.log_likelihood);
    for (std::size_t it = 0; it < config.max_iter; ++it) {
      std::size_t reseeded = 0;
      params = m_step_bernoulli(data, post.responsibilities, config.bernoulli_floor, &reseeded);
      post = bernoulli_e_step(data, params);
      if (reseeded > 0) {
        trace.reseeds += reseeded;
        trace.log_likelihood.assign(1, post.log_likelihood);
        continue;
      }
      const double previous = trace.log_likelihood.back();
      trace.log_likelihood.push_back(post.log_likelihood);
      if (em_converged(previous, post.log_likelihood, config.tol)) {
        trace.converged = true;
        break;
      }
    }
    best.restart_log_likelihoods.push_back(post.log_likelihood);
    if (!have_best || post.log_likelihood > best.trace.log_likelihood.back()) {
      best.params = std::move(params);
      best.labels = std::move(post.responsibilities);
      best.trace = std::move(trace);
      have_best = true;
    }
  }
  return best;
}

}  // namespace affcode
