#pragma once

// How many labeled dev examples per class are needed before the
// cluster-to-class mapping is correct with a given probability.
//
// Model: each of the d dev examples of a class lands in its correct cluster
// with probability eta and in each of the K-1 wrong clusters with probability
// rho, so the per-cluster counts are multinomial. A class is mapped correctly
// (lower bound) when its correct cluster holds a strict majority; ties count
// as failures.

#include <cstddef>
#include <span>
#include <vector>

namespace affcode {

enum class RhoConvention {
  kNormalized,  // rho = (1 - eta) / (K - 1); the multinomial sums to 1
  kLiteral,     // rho = eta / (K - 1); does not normalize unless eta = 1/2
};

double wrong_cluster_probability(int num_classes, double eta,
                                 RhoConvention convention = RhoConvention::kNormalized);

/// d! / prod(d_j!) * eta^{d_0} * rho^{d - d_0}, where counts[0] is the
/// correct cluster. Evaluated with log-gamma. Throws InputError on negative
/// counts or probabilities.
double multinomial_pmf(std::span<const long> counts, double eta, double rho);

/// Pl: probability that the correct cluster's count strictly exceeds every
/// other count. Computed by the S(j, D) recurrence over wrong clusters, for
/// each possible correct count. Pl(d = 0) = 0.
double pl_correct_class(int num_classes, double eta, std::size_t per_class,
                        RhoConvention convention = RhoConvention::kNormalized);

/// Lower bound on the probability that the whole mapping is correct: Pl^K.
double mapping_probability_bound(int num_classes, double eta, std::size_t per_class,
                                 RhoConvention convention = RhoConvention::kNormalized);

struct DevSizeRequirement {
  std::size_t per_class = 0;  // d*
  std::size_t total = 0;      // m* = K d*
  double bound = 0.0;         // Pl(d*)^K
};

inline constexpr std::size_t kDefaultMaxPerClass = 1000;

/// Smallest d with Pl(d)^K >= p, scanning d = 1, 2, ... Pl is not monotone
/// in d (even d can tie), so the scan never skips. Throws InfeasibleError
/// ("unreachable confidence") when eta <= 1/K or when no d up to
/// `max_per_class` reaches p; the message carries the best bound seen.
DevSizeRequirement min_devset_size(int num_classes, double eta, double p,
                                   std::size_t max_per_class = kDefaultMaxPerClass);

struct BoundPoint {
  std::size_t per_class = 0;
  double pl = 0.0;
  double bound = 0.0;
};

std::vector<BoundPoint> bound_curve(int num_classes, double eta, std::size_t max_per_class,
                                    RhoConvention convention = RhoConvention::kNormalized);

}  // namespace affcode
