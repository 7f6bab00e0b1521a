#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "affcode/error.hpp"
#include "affcode/mixture.hpp"

namespace affcode {

EStepResult normalize_log_joint(Matrix log_joint) {
  const std::size_t k_count = log_joint.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < log_joint.rows(); ++i) {
    auto row = log_joint.row(i);
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : row) {
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        throw InputError(fmt::format("E-step: non-finite log density in row {}", i));
      }
      peak = std::max(peak, v);
    }
    if (!std::isfinite(peak)) {
      throw InputError(fmt::format("E-step: every component underflows for row {}", i));
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      row[k] = std::exp(row[k] - peak);
      sum += row[k];
    }
    for (double& v : row) v /= sum;
    total += peak + std::log(sum);
  }
  return {std::move(log_joint), total};
}

bool em_converged(double previous, double current, double tol) noexcept {
  const double scale = std::abs(previous) > 0.0 ? std::abs(previous) : 1.0;
  return std::abs(current - previous) < tol * scale;
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(substream),
                    static_cast<std::uint32_t>(substream >> 32)};
  return std::mt19937_64(seq);
}

std::size_t argmax(std::span<const double> values) noexcept {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

std::vector<std::size_t> least_confident_rows(const Matrix& gamma) {
  std::vector<double> confidence(gamma.rows());
  for (std::size_t i = 0; i < gamma.rows(); ++i) {
    const auto row = gamma.row(i);
    confidence[i] = *std::max_element(row.begin(), row.end());
  }
  std::vector<std::size_t> order(gamma.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return confidence[a] < confidence[b]; });
  return order;
}

}  // namespace affcode
