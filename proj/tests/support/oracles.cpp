#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

Permutation best_permutation(const affcode::Matrix& w) {
  const std::size_t k = w.rows();
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  Permutation best;
  bool first = true;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += w(i, static_cast<std::size_t>(perm[i]));
    if (first || total > best.objective) {
      best.objective = total;
      best.g = perm;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

namespace {

double choose(std::size_t n, std::size_t r) {
  double c = 1.0;
  for (std::size_t i = 1; i <= r; ++i) {
    c *= static_cast<double>(n - r + i);
    c /= static_cast<double>(i);
  }
  return c;
}

double factorial(long n) {
  double f = 1.0;
  for (long i = 2; i <= n; ++i) f *= static_cast<double>(i);
  return f;
}

}  // namespace

double binomial_strict_majority(std::size_t d, double eta) {
  double total = 0.0;
  for (std::size_t j = d / 2 + 1; j <= d; ++j) {
    total += choose(d, j) * std::pow(eta, static_cast<double>(j)) *
             std::pow(1.0 - eta, static_cast<double>(d - j));
  }
  return total;
}

double multinomial_direct(std::span<const long> counts, double eta, double rho) {
  long d = 0;
  for (long c : counts) d += c;
  double coef = factorial(d);
  for (long c : counts) coef /= factorial(c);
  double p = coef * std::pow(eta, static_cast<double>(counts[0]));
  for (std::size_t j = 1; j < counts.size(); ++j) p *= std::pow(rho, static_cast<double>(counts[j]));
  return p;
}

double pl_enumeration(int k, double eta, std::size_t d, double rho) {
  double total = 0.0;
  for_each_composition(d, static_cast<std::size_t>(k), [&](std::span<const long> c) {
    const long others = *std::max_element(c.begin() + 1, c.end());
    if (c[0] > others) total += multinomial_direct(c, eta, rho);
  });
  return total;
}

double pmf_total(int k, double eta, std::size_t d, double rho) {
  double total = 0.0;
  for_each_composition(d, static_cast<std::size_t>(k),
                       [&](std::span<const long> c) { total += multinomial_direct(c, eta, rho); });
  return total;
}

Moments weighted_moments(const affcode::Matrix& data, const affcode::Matrix& gamma,
                         double variance_floor) {
  const std::size_t n = data.rows(), dims = data.cols(), k = gamma.cols();
  Moments m{std::vector<double>(k), std::vector<double>(k), affcode::Matrix(k, dims, 0.0),
            affcode::Matrix(k, dims, 0.0)};
  for (std::size_t c = 0; c < k; ++c) {
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) mass += gamma(i, c);
    m.mass[c] = mass;
    m.priors[c] = mass / static_cast<double>(n);
    for (std::size_t d = 0; d < dims; ++d) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += gamma(i, c) * data(i, d);
      m.means(c, d) = s / mass;
    }
    for (std::size_t d = 0; d < dims; ++d) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dev = data(i, d) - m.means(c, d);
        s += gamma(i, c) * dev * dev;
      }
      m.variances(c, d) = std::max(s / mass, variance_floor);
    }
  }
  return m;
}

affcode::Matrix gaussian_posterior_linear(const affcode::Matrix& data,
                                          const affcode::GmmParams& params) {
  const std::size_t k = params.priors.size();
  affcode::Matrix post(data.rows(), k);
  const double pi = std::acos(-1.0);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      double dens = params.priors[c];
      for (std::size_t d = 0; d < data.cols(); ++d) {
        const double v = params.variances(c, d);
        const double diff = data(i, d) - params.means(c, d);
        dens *= std::exp(-diff * diff / (2.0 * v)) / std::sqrt(2.0 * pi * v);
      }
      post(i, c) = dens;
      z += dens;
    }
    for (std::size_t c = 0; c < k; ++c) post(i, c) /= z;
  }
  return post;
}

double bernoulli_log_product(std::span<const unsigned char> row, std::span<const double> b) {
  double p = 1.0;
  for (std::size_t l = 0; l < row.size(); ++l) p *= row[l] ? b[l] : 1.0 - b[l];
  return std::log(p);
}

double max_patch_cosine(std::span<const float> anchor, const affcode::FilterMap& target) {
  long double best = -2.0L;
  for (std::uint32_t h = 0; h < target.height(); ++h) {
    for (std::uint32_t w = 0; w < target.width(); ++w) {
      long double dot = 0, na = 0, nb = 0;
      for (std::uint32_t c = 0; c < target.channels(); ++c) {
        const long double a = anchor[c], b = target.at(c, h, w);
        dot += a * b;
        na += a * a;
        nb += b * b;
      }
      const long double cos = (na == 0 || nb == 0) ? 0.0L : dot / std::sqrt(na * nb);
      best = std::max(best, cos);
    }
  }
  return static_cast<double>(best);
}

bool non_decreasing(std::span<const double> trace, double slack) {
  for (std::size_t t = 1; t < trace.size(); ++t) {
    if (trace[t] < trace[t - 1] - slack * std::abs(trace[t - 1])) return false;
  }
  return true;
}

}  // namespace oracle
