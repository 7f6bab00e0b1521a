#pragma once

// Multivariate-Bernoulli mixture over the one-hot concatenation of the base
// models' label predictions.

#include <cstddef>
#include <span>
#include <vector>

#include "affcode/gmm.hpp"
#include "affcode/matrix.hpp"
#include "affcode/mixture.hpp"

namespace affcode {

inline constexpr double kDefaultBernoulliFloor = 1e-4;

/// N x (alpha*K) binary matrix; each K-wide block of a row holds one 1.
struct ConcatenatedLP {
  BinaryMatrix bits;
  std::size_t blocks = 0;
  int num_classes = 0;

  /// Position of the 1 inside block `f` of row `i`.
  int hot(std::size_t i, std::size_t f) const;
};

struct BernoulliParams {
  std::vector<double> priors;  // K
  Matrix b;                    // K x (alpha*K), each in [floor, 1 - floor]
};

struct EnsembleConfig : EmConfig {
  double bernoulli_floor = kDefaultBernoulliFloor;
  double init_noise = 0.05;  // weight of uniform noise mixed into the vote init
};

/// Argmax of each block row is set to 1 (ties: lowest class). Throws
/// InputError when the matrices disagree on N or K.
ConcatenatedLP one_hot_concat(std::span<const LabelPredictionMatrix> lps);

double bernoulli_log_density(std::span<const unsigned char> row, std::size_t k,
                             const BernoulliParams& params);

EStepResult bernoulli_e_step(const ConcatenatedLP& data, const BernoulliParams& params);

/// N_k = sum_i gamma_ik, pi_k = N_k / N, b_kl = sum_i gamma_ik s_il / N_k,
/// clipped into [floor, 1 - floor]. Empty components are reseeded at the
/// least confidently assigned row (prior 1/N); `reseeded` receives the count.
BernoulliParams m_step_bernoulli(const ConcatenatedLP& data, const Matrix& gamma, double floor,
                                 std::size_t* reseeded = nullptr);

/// Initial responsibilities for one restart: blocks are aligned to a
/// reference block by optimal assignment on their contingency tables, each
/// row takes the modal aligned class, the vote is re-aligned twice, and
/// uniform noise of weight `noise` is mixed in. Restart r uses the block
/// ranked r-th by total pairwise agreement.
Matrix vote_initialization(const ConcatenatedLP& data, std::size_t restart, double noise,
                           std::mt19937_64& rng);

struct EnsembleFit {
  BernoulliParams params;
  Matrix labels;  // N x K posteriors before cluster-to-class mapping
  EmTrace trace;
  std::vector<double> restart_log_likelihoods;
};

EnsembleFit fit_ensemble(const ConcatenatedLP& data, const EnsembleConfig& config);

/// alpha base models (2KN + K each) plus the ensemble (alpha*K*K + K).
constexpr std::size_t hierarchy_parameter_count(std::size_t n, std::size_t alpha, std::size_t k) {
  return alpha * base_model_parameter_count(n, k) + (alpha * k * k + k);
}

/// K means of length alpha*N, K full covariances counted as C(alpha*N, 2)
/// off-diagonal terms plus alpha*N variances.
constexpr double full_covariance_gmm_parameter_count(std::size_t n, std::size_t alpha,
                                                     std::size_t k) {
  const double dims = static_cast<double>(alpha) * static_cast<double>(n);
  return static_cast<double>(k) * (dims * (dims - 1.0) / 2.0 + dims);
}

}  // namespace affcode
