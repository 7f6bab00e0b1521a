#pragma once

// Pieces shared by the Gaussian base models and the Bernoulli ensemble.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "affcode/matrix.hpp"

namespace affcode {

struct EmConfig {
  double tol = 1e-6;  // relative change in log-likelihood
  std::size_t max_iter = 200;
  std::size_t restarts = 5;
  std::uint64_t seed = 0;
};

/// Soft assignments (rows on the K-simplex) plus the data log-likelihood
/// under the parameters that produced them.
struct EStepResult {
  Matrix responsibilities;
  double log_likelihood = 0.0;
};

/// Per-restart EM record. `log_likelihood[t]` is evaluated after t M-steps
/// counted from the last (re)initialization.
struct EmTrace {
  std::vector<double> log_likelihood;
  std::size_t restart = 0;
  std::size_t reseeds = 0;  // empty-component reseeds; each restarts the trace
  bool converged = false;
};

/// Turns a matrix of log(pi_k) + log p(x_i | k) into posteriors with
/// max-subtraction. Throws InputError if a row has no finite entry.
EStepResult normalize_log_joint(Matrix log_joint);

bool em_converged(double previous, double current, double tol) noexcept;

/// Deterministic generator for one (seed, stream, substream) triple.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values) noexcept;

/// Rows ordered by ascending max-responsibility (ties: lower row first). Used
/// to pick reseed points for empty components.
std::vector<std::size_t> least_confident_rows(const Matrix& gamma);

}  // namespace affcode
