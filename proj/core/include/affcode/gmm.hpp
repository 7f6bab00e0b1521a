#pragma once

// Diagonal-covariance Gaussian mixture fit by EM, one per affinity function.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "affcode/matrix.hpp"
#include "affcode/mixture.hpp"

namespace affcode {

inline constexpr double kDefaultVarianceFloor = 1e-6;
inline constexpr double kEmptyComponentMass = 1e-8;

struct GmmParams {
  std::vector<double> priors;  // K
  Matrix means;                // K x D
  Matrix variances;            // K x D, diagonal of each covariance

  std::size_t num_components() const noexcept { return priors.size(); }
};

struct GmmConfig : EmConfig {
  double variance_floor = kDefaultVarianceFloor;
};

/// Rows of `lp` are class posteriors of one model. `source` names the
/// affinity function ("<layer>#<z>") or "ensemble".
struct LabelPredictionMatrix {
  Matrix lp;
  std::string source;
};

double gaussian_log_density(std::span<const double> x, const GmmParams& params, std::size_t k);

EStepResult e_step(const Matrix& data, const GmmParams& params);

/// Weighted moments: N_k = sum_i gamma_ik, pi_k = N_k / N, mu_k the
/// gamma-weighted mean, diagonal variance the gamma-weighted mean squared
/// deviation floored at `variance_floor`. A component with N_k below
/// kEmptyComponentMass is reseeded at the least confidently assigned row with
/// the global variance and prior 1/N; `reseeded` receives the count.
GmmParams m_step_gaussian(const Matrix& data, const Matrix& gamma, double variance_floor,
                          std::size_t* reseeded = nullptr);

struct BaseModelFit {
  GmmParams params;
  LabelPredictionMatrix prediction;
  EmTrace trace;  // of the selected restart
  std::vector<double> restart_log_likelihoods;
};

/// EM with `config.restarts` farthest-point initializations; keeps the
/// restart with the highest final log-likelihood (ties: earliest). The RNG of
/// each restart is seeded from (config.seed, function_index, restart).
BaseModelFit fit_base_model(const Matrix& slice, int num_classes, const GmmConfig& config,
                            std::uint64_t function_index = 0);

/// Free parameters of one base model: K means and K variances of length N,
/// plus K priors.
constexpr std::size_t base_model_parameter_count(std::size_t n, std::size_t k) {
  return 2 * k * n + k;
}

}  // namespace affcode
