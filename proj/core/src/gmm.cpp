#include "affcode/gmm.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "affcode/error.hpp"

namespace affcode {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Seeds K rows by farthest-point traversal from a random first row, assigns
// every row to its nearest seed, and runs one M-step on that hard assignment.
GmmParams farthest_point_init(const Matrix& data, std::size_t k_count, double variance_floor,
                              std::mt19937_64& rng) {
  const std::size_t n = data.rows();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> seeds{pick(rng)};

  auto sq_dist = [&](std::size_t a, std::size_t b) {
    const auto ra = data.row(a);
    const auto rb = data.row(b);
    double s = 0.0;
    for (std::size_t d = 0; d < ra.size(); ++d) s += (ra[d] - rb[d]) * (ra[d] - rb[d]);
    return s;
  };

  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (seeds.size() < k_count) {
    std::size_t far = 0;
    double far_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(i, seeds.back()));
      if (nearest[i] > far_dist) {
        far_dist = nearest[i];
        far = i;
      }
    }
    seeds.push_back(far);
  }

  Matrix gamma(n, k_count, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < k_count; ++k) {
      const double dist = sq_dist(i, seeds[k]);
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    gamma(i, best) = 1.0;
  }
  return m_step_gaussian(data, gamma, variance_floor);
}

}  // namespace

double gaussian_log_density(std::span<const double> x, const GmmParams& params, std::size_t k) {
  const auto mean = params.means.row(k);
  const auto var = params.variances.row(k);
  double acc = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double diff = x[d] - mean[d];
    acc += kLog2Pi + std::log(var[d]) + diff * diff / var[d];
  }
  return -0.5 * acc;
}

EStepResult e_step(const Matrix& data, const GmmParams& params) {
  const std::size_t k_count = params.num_components();
  if (params.means.cols() != data.cols()) {
    throw InputError(fmt::format("e_step: data has {} columns, model has {}", data.cols(),
                                 params.means.cols()));
  }
  const std::size_t dims = data.cols();
  std::vector<double> constant(k_count);
  Matrix inv_var(k_count, dims);
  for (std::size_t k = 0; k < k_count; ++k) {
    double c = 0.0;
    for (std::size_t d = 0; d < dims; ++d) {
      const double v = params.variances(k, d);
      inv_var(k, d) = 1.0 / v;
      c += kLog2Pi + std::log(v);
    }
    constant[k] = std::log(params.priors[k]) - 0.5 * c;
  }

  Matrix log_joint(data.rows(), k_count);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto x = data.row(i);
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto mu = params.means.row(k);
      const auto iv = inv_var.row(k);
      double quad = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const double diff = x[d] - mu[d];
        quad += diff * diff * iv[d];
      }
      log_joint(i, k) = constant[k] - 0.5 * quad;
    }
  }
  return normalize_log_joint(std::move(log_joint));
}

GmmParams m_step_gaussian(const Matrix& data, const Matrix& gamma, double variance_floor,
                          std::size_t* reseeded) {
  const std::size_t n = data.rows();
  const std::size_t dims = data.cols();
  const std::size_t k_count = gamma.cols();
  if (gamma.rows() != n) {
    throw InputError(fmt::format("m_step_gaussian: {} responsibility rows for {} data rows",
                                 gamma.rows(), n));
  }
  if (n == 0 || k_count == 0) throw InputError("m_step_gaussian: empty input");

  GmmParams p{std::vector<double>(k_count, 0.0), Matrix(k_count, dims, 0.0),
              Matrix(k_count, dims, 0.0)};
  std::vector<double> mass(k_count, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.row(i);
    for (std::size_t k = 0; k < k_count; ++k) {
      const double g = gamma(i, k);
      mass[k] += g;
      if (g == 0.0) continue;
      auto mu = p.means.row(k);
      for (std::size_t d = 0; d < dims; ++d) mu[d] += g * x[d];
    }
  }

  std::vector<std::size_t> empty;
  for (std::size_t k = 0; k < k_count; ++k) {
    if (mass[k] < kEmptyComponentMass) {
      empty.push_back(k);
      continue;
    }
    for (double& m : p.means.row(k)) m /= mass[k];
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.row(i);
    for (std::size_t k = 0; k < k_count; ++k) {
      const double g = gamma(i, k);
      if (g == 0.0 || mass[k] < kEmptyComponentMass) continue;
      const auto mu = p.means.row(k);
      auto var = p.variances.row(k);
      for (std::size_t d = 0; d < dims; ++d) {
        const double diff = x[d] - mu[d];
        var[d] += g * diff * diff;
      }
    }
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    p.priors[k] = mass[k] / static_cast<double>(n);
    if (mass[k] < kEmptyComponentMass) continue;
    for (double& v : p.variances.row(k)) v = std::max(v / mass[k], variance_floor);
  }

  if (!empty.empty()) {
    std::vector<double> global_mean(dims, 0.0), global_var(dims, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dims; ++d) global_mean[d] += data(i, d);
    }
    for (double& m : global_mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dims; ++d) {
        const double diff = data(i, d) - global_mean[d];
        global_var[d] += diff * diff;
      }
    }
    const auto order = least_confident_rows(gamma);
    for (std::size_t e = 0; e < empty.size(); ++e) {
      const std::size_t k = empty[e];
      const auto x = data.row(order[e % n]);
      std::copy(x.begin(), x.end(), p.means.row(k).begin());
      auto var = p.variances.row(k);
      for (std::size_t d = 0; d < dims; ++d) {
        var[d] = std::max(global_var[d] / static_cast<double>(n), variance_floor);
      }
      p.priors[k] = 1.0 / static_cast<double>(n);
    }
    double total = 0.0;
    for (double w : p.priors) total += w;
    for (double& w : p.priors) w /= total;
  }
  if (reseeded) *reseeded = empty.size();
  return p;
}

BaseModelFit fit_base_model(const Matrix& slice, int num_classes, const GmmConfig& config,
                            std::uint64_t function_index) {
  if (num_classes < 1) throw InputError("fit_base_model: K must be positive");
  const auto k_count = static_cast<std::size_t>(num_classes);
  if (slice.rows() < k_count) {
    throw InputError(fmt::format("fit_base_model: N = {} is smaller than K = {}", slice.rows(),
                                 k_count));
  }
  if (config.variance_floor <= 0.0) throw InputError("fit_base_model: variance floor must be > 0");
  const std::size_t restarts = std::max<std::size_t>(config.restarts, 1);

  BaseModelFit best;
  bool have_best = false;
  for (std::size_t r = 0; r < restarts; ++r) {
    auto rng = make_rng(config.seed, function_index, r);
    GmmParams params = farthest_point_init(slice, k_count, config.variance_floor, rng);
    EmTrace trace;
    trace.restart = r;
    EStepResult post = e_step(slice, params);
    trace.log_likelihood.push_back(post.log_likelihood);
    for (std::size_t it = 0; it < config.max_iter; ++it) {
      std::size_t reseeded = 0;
      params = m_step_gaussian(slice, post.responsibilities, config.variance_floor, &reseeded);
      post = e_step(slice, params);
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
      best.prediction.lp = std::move(post.responsibilities);
      best.trace = std::move(trace);
      have_best = true;
    }
  }
  return best;
}

}  // namespace affcode
