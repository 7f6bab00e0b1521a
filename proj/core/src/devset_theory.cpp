#include "affcode/devset_theory.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "affcode/error.hpp"

namespace affcode {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

void check_query(int num_classes, double eta) {
  if (num_classes < 2) throw InputError(fmt::format("theory: K must be >= 2, got {}", num_classes));
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw InputError(fmt::format("theory: eta must be in [0, 1], got {}", eta));
  }
}

}  // namespace

double wrong_cluster_probability(int num_classes, double eta, RhoConvention convention) {
  check_query(num_classes, eta);
  const double others = static_cast<double>(num_classes - 1);
  return convention == RhoConvention::kNormalized ? (1.0 - eta) / others : eta / others;
}

double multinomial_pmf(std::span<const long> counts, double eta, double rho) {
  if (counts.empty()) throw InputError("multinomial_pmf: no counts");
  if (eta < 0.0 || rho < 0.0) throw InputError("multinomial_pmf: negative probability");
  long total = 0;
  double log_denominator = 0.0;
  for (long c : counts) {
    if (c < 0) throw InputError("multinomial_pmf: negative count");
    total += c;
    log_denominator += std::lgamma(static_cast<double>(c) + 1.0);
  }
  const long correct = counts[0];
  const long wrong = total - correct;
  double log_p = std::lgamma(static_cast<double>(total) + 1.0) - log_denominator;
  if (correct > 0) log_p += static_cast<double>(correct) * safe_log(eta);
  if (wrong > 0) log_p += static_cast<double>(wrong) * safe_log(rho);
  return log_p == kNegInf ? 0.0 : std::exp(log_p);
}

namespace {

// Pl for every d in 0..max_d. For a correct-cluster count c, S_c[R] is the
// log of the sum, over wrong-cluster counts that are each below c and total
// R, of prod rho^x / x!; one pass over the K-1 wrong clusters fills S_c for
// every R at once, so the whole curve shares the work.
std::vector<double> pl_curve(int num_classes, double eta, std::size_t max_d,
                             RhoConvention convention) {
  const double rho = wrong_cluster_probability(num_classes, eta, convention);
  const std::size_t wrong_clusters = static_cast<std::size_t>(num_classes - 1);
  const double log_eta = safe_log(eta);
  const double log_rho = safe_log(rho);

  std::vector<double> log_fact(max_d + 1, 0.0);
  for (std::size_t x = 1; x <= max_d; ++x) log_fact[x] = log_fact[x - 1] + std::log(static_cast<double>(x));
  // term[x] = log(rho^x / x!)
  std::vector<double> term(max_d + 1);
  for (std::size_t x = 0; x <= max_d; ++x) {
    term[x] = x == 0 ? 0.0 : (log_rho == kNegInf ? kNegInf : static_cast<double>(x) * log_rho) - log_fact[x];
  }

  std::vector<double> log_pl(max_d + 1, kNegInf);
  std::vector<double> s(max_d + 1), next(max_d + 1);
  for (std::size_t correct = 1; correct <= max_d && log_eta != kNegInf; ++correct) {
    // Wrong clusters hold at most correct - 1 each.
    const std::size_t top_total = std::min(max_d - correct, wrong_clusters * (correct - 1));
    std::fill(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(top_total + 1), kNegInf);
    s[0] = 0.0;
    for (std::size_t j = 0; j < wrong_clusters; ++j) {
      for (std::size_t total = 0; total <= top_total; ++total) {
        double acc = kNegInf;
        const std::size_t top = std::min(correct - 1, total);
        for (std::size_t x = 0; x <= top; ++x) {
          if (s[total - x] == kNegInf || term[x] == kNegInf) continue;
          acc = log_add(acc, term[x] + s[total - x]);
        }
        next[total] = acc;
      }
      std::swap(s, next);
    }
    const double head = static_cast<double>(correct) * log_eta - log_fact[correct];
    for (std::size_t remaining = 0; remaining <= top_total; ++remaining) {
      if (s[remaining] == kNegInf) continue;
      const std::size_t d = correct + remaining;
      log_pl[d] = log_add(log_pl[d], log_fact[d] + head + s[remaining]);
    }
  }
  std::vector<double> out(max_d + 1, 0.0);
  for (std::size_t d = 1; d <= max_d; ++d) out[d] = log_pl[d] == kNegInf ? 0.0 : std::exp(log_pl[d]);
  return out;
}

}  // namespace

double pl_correct_class(int num_classes, double eta, std::size_t per_class,
                        RhoConvention convention) {
  check_query(num_classes, eta);
  if (per_class == 0) return 0.0;
  return pl_curve(num_classes, eta, per_class, convention)[per_class];
}

double mapping_probability_bound(int num_classes, double eta, std::size_t per_class,
                                 RhoConvention convention) {
  const double pl = pl_correct_class(num_classes, eta, per_class, convention);
  return std::pow(pl, num_classes);
}

DevSizeRequirement min_devset_size(int num_classes, double eta, double p,
                                   std::size_t max_per_class) {
  check_query(num_classes, eta);
  if (!(p > 0.0 && p < 1.0)) throw InputError(fmt::format("theory: p must be in (0, 1), got {}", p));
  if (eta <= 1.0 / static_cast<double>(num_classes)) {
    throw InfeasibleError(fmt::format(
        "unreachable confidence: eta = {} does not exceed 1/K = {}; the bound is not driven to {} "
        "by any dev-set size (best bound at d = 1: {:.6g})",
        eta, 1.0 / num_classes, p, mapping_probability_bound(num_classes, eta, 1)));
  }
  double best = 0.0;
  std::size_t best_d = 0;
  std::size_t scanned = 0;
  // Grow the curve geometrically; each d is still checked in order.
  for (std::size_t horizon = std::min<std::size_t>(16, max_per_class); scanned < max_per_class;
       horizon = std::min(horizon * 2, max_per_class)) {
    const auto pl = pl_curve(num_classes, eta, horizon, RhoConvention::kNormalized);
    for (std::size_t d = scanned + 1; d <= horizon; ++d) {
      const double bound = std::pow(pl[d], num_classes);
      if (bound > best) {
        best = bound;
        best_d = d;
      }
      if (bound >= p) return {d, d * static_cast<std::size_t>(num_classes), bound};
    }
    scanned = horizon;
  }
  throw InfeasibleError(fmt::format(
      "unreachable confidence: no d <= {} reaches p = {} (best bound {:.6g} at d = {})",
      max_per_class, p, best, best_d));
}

std::vector<BoundPoint> bound_curve(int num_classes, double eta, std::size_t max_per_class,
                                    RhoConvention convention) {
  check_query(num_classes, eta);
  const auto pl = pl_curve(num_classes, eta, max_per_class, convention);
  std::vector<BoundPoint> out;
  out.reserve(max_per_class);
  for (std::size_t d = 1; d <= max_per_class; ++d) {
    out.push_back({d, pl[d], std::pow(pl[d], num_classes)});
  }
  return out;
}

}  // namespace affcode
