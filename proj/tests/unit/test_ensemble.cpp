#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "affcode/ensemble.hpp"
#include "affcode/error.hpp"
#include "affcode/synth.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace affcode;

namespace {

LabelPredictionMatrix lp_of(std::size_t rows, std::size_t k, std::vector<double> values) {
  return {Matrix(rows, k, std::move(values)), "test"};
}

double agreement(const Matrix& gamma, const std::vector<int>& labels) {
  std::size_t agree = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) agree += static_cast<int>(argmax(gamma.row(i))) == labels[i];
  return static_cast<double>(agree) / static_cast<double>(labels.size());
}

// Best agreement over cluster relabelings (brute force).
double matched_agreement(const Matrix& gamma, const std::vector<int>& labels, int k) {
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    std::size_t agree = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      agree += perm[argmax(gamma.row(i))] == labels[i];
    }
    best = std::max(best, static_cast<double>(agree) / static_cast<double>(labels.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

BernoulliParams random_bernoulli(std::size_t k, std::size_t width, std::mt19937_64& rng) {
  BernoulliParams p{std::vector<double>(k), fixture::random_matrix(k, width, rng, 0.05, 0.95)};
  double s = 0.0;
  for (double& w : p.priors) s += (w = std::uniform_real_distribution<double>(0.1, 1.0)(rng));
  for (double& w : p.priors) w /= s;
  return p;
}

}  // namespace

TEST_SUITE("ensemble") {

TEST_CASE("one_hot_concat") {
  SUBCASE("argmax and the lowest-index tie rule") {
    const std::vector<LabelPredictionMatrix> lps{lp_of(2, 2, {0.2, 0.8, 0.5, 0.5})};
    const auto c = one_hot_concat(lps);
    CHECK(c.bits(0, 0) == 0);
    CHECK(c.bits(0, 1) == 1);
    CHECK(c.bits(1, 0) == 1);
    CHECK(c.bits(1, 1) == 0);
    CHECK(c.hot(0, 0) == 1);
  }
  SUBCASE("alpha = 3, K = 2 gives width 6 with three ones per row") {
    std::mt19937_64 rng(1);
    std::vector<LabelPredictionMatrix> lps;
    for (int f = 0; f < 3; ++f) lps.push_back({fixture::random_simplex_rows(5, 2, rng), "f"});
    const auto c = one_hot_concat(lps);
    CHECK(c.bits.cols() == 6);
    CHECK(c.blocks == 3);
    for (std::size_t i = 0; i < 5; ++i) {
      int ones = 0;
      for (auto b : c.bits.row(i)) ones += b;
      CHECK(ones == 3);
    }
  }
  SUBCASE("shape disagreement") {
    const std::vector<LabelPredictionMatrix> lps{lp_of(2, 2, {1, 0, 0, 1}), lp_of(1, 2, {1, 0})};
    CHECK_THROWS_AS(one_hot_concat(lps), InputError);
    CHECK_THROWS_AS(one_hot_concat(std::span<const LabelPredictionMatrix>{}), InputError);
  }
}

TEST_CASE("bernoulli_log_density") {
  SUBCASE("all-0.5 parameters give 0.5^(alpha K) for any row") {
    BernoulliParams p{{1.0}, Matrix(1, 6, 0.5)};
    const std::vector<unsigned char> a{1, 0, 0, 1, 1, 0}, b{0, 1, 1, 0, 0, 1};
    CHECK(bernoulli_log_density(a, 0, p) == doctest::Approx(6 * std::log(0.5)).epsilon(1e-15));
    CHECK(bernoulli_log_density(b, 0, p) == doctest::Approx(6 * std::log(0.5)).epsilon(1e-15));
  }
  SUBCASE("round(b) is the densest binary row") {
    const double e = 1e-4;
    BernoulliParams p{{1.0}, Matrix(1, 4, std::vector<double>{e, 1 - e, 1 - e, e})};
    const std::vector<unsigned char> best{0, 1, 1, 0};
    const double top = bernoulli_log_density(best, 0, p);
    for (int mask = 0; mask < 16; ++mask) {
      std::vector<unsigned char> row(4);
      for (int l = 0; l < 4; ++l) row[static_cast<std::size_t>(l)] = static_cast<unsigned char>((mask >> l) & 1);
      if (row != best) CHECK(bernoulli_log_density(row, 0, p) < top);
    }
  }
  SUBCASE("random 4-dim rows against the direct product") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      const auto p = random_bernoulli(2, 4, rng);
      std::vector<unsigned char> row(4);
      for (auto& b : row) b = static_cast<unsigned char>(rng() & 1);
      for (std::size_t k = 0; k < 2; ++k) {
        CHECK(std::abs(bernoulli_log_density(row, k, p) - oracle::bernoulli_log_product(row, p.b.row(k))) <= 1e-12);
      }
    }
  }
}

TEST_CASE("bernoulli_e_step matches the direct posterior") {
  std::mt19937_64 rng(44);
  const auto planted = generate_planted_onehot({30, 3, 2, 3, 0.2, 5});
  const auto p = random_bernoulli(3, planted.concat.bits.cols(), rng);
  const auto r = bernoulli_e_step(planted.concat, p);
  double ll = 0.0;
  for (std::size_t i = 0; i < 30; ++i) {
    std::vector<double> joint(3);
    double z = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      joint[k] = p.priors[k] * std::exp(oracle::bernoulli_log_product(planted.concat.bits.row(i), p.b.row(k)));
      z += joint[k];
    }
    for (std::size_t k = 0; k < 3; ++k) CHECK(r.responsibilities(i, k) == doctest::Approx(joint[k] / z).epsilon(1e-11));
    ll += std::log(z);
  }
  CHECK(r.log_likelihood == doctest::Approx(ll).epsilon(1e-11));
}

TEST_CASE("m_step_bernoulli: weighted frequencies, clipped") {
  std::mt19937_64 rng(9);
  const auto planted = generate_planted_onehot({25, 2, 1, 2, 0.1, 3});
  const auto& bits = planted.concat.bits;
  const Matrix g = fixture::random_simplex_rows(25, 2, rng);
  const auto p = m_step_bernoulli(planted.concat, g, 1e-4);
  for (std::size_t k = 0; k < 2; ++k) {
    double mass = 0.0;
    for (std::size_t i = 0; i < 25; ++i) mass += g(i, k);
    CHECK(std::abs(p.priors[k] - mass / 25.0) <= 1e-12);
    for (std::size_t l = 0; l < bits.cols(); ++l) {
      double s = 0.0;
      for (std::size_t i = 0; i < 25; ++i) s += g(i, k) * bits(i, l);
      CHECK(std::abs(p.b(k, l) - std::clamp(s / mass, 1e-4, 1 - 1e-4)) <= 1e-12);
    }
  }

  // Unanimous hard assignment hits exact 0 and 1 before clipping.
  Matrix hard(25, 2, 0.0);
  for (std::size_t i = 0; i < 25; ++i) hard(i, static_cast<std::size_t>(planted.concat.hot(i, 0))) = 1.0;
  const auto q = m_step_bernoulli(planted.concat, hard, 1e-4);
  for (double b : q.b.data()) {
    CHECK(b >= 1e-4);
    CHECK(b <= 1 - 1e-4);
  }
  CHECK_THROWS_AS(m_step_bernoulli(planted.concat, hard, 0.0), InputError);
}

TEST_CASE("perfectly agreeing blocks are recovered exactly") {
  const auto planted = generate_planted_onehot({40, 2, 6, 0, 0.0, 2});
  const auto fit = fit_ensemble(planted.concat, EnsembleConfig{});
  CHECK(matched_agreement(fit.labels, planted.labels, 2) == 1.0);
  for (std::size_t i = 0; i < 40; ++i) CHECK(fit.labels.row(i)[argmax(fit.labels.row(i))] > 0.999);
}

TEST_CASE("one good block among 19 noise blocks cannot be singled out") {
  // With K = 2 every block is a random bipartition, the good one included, and
  // the likelihood is symmetric in the blocks. The fit settles on one block's
  // split; it is the planted one about 1 time in 20.
  int planted_hits = 0, block_hits = 0;
  const int seeds = 40;
  for (std::uint64_t seed = 0; seed < static_cast<std::uint64_t>(seeds); ++seed) {
    const auto planted = generate_planted_onehot({100, 2, 1, 19, 0.0, seed});
    EnsembleConfig cfg;
    cfg.seed = seed;
    const auto fit = fit_ensemble(planted.concat, cfg);
    CHECK(oracle::non_decreasing(fit.trace.log_likelihood, 1e-9));
    planted_hits += matched_agreement(fit.labels, planted.labels, 2) >= 0.95;
    double best = 0.0;
    for (std::size_t f = 0; f < planted.concat.blocks; ++f) {
      std::vector<int> split(100);
      for (std::size_t i = 0; i < 100; ++i) split[i] = planted.concat.hot(i, f);
      best = std::max(best, matched_agreement(fit.labels, split, 2));
    }
    block_hits += best >= 0.95;
  }
  CHECK(planted_hits <= seeds / 4);
  CHECK(block_hits >= seeds * 9 / 10);
}

TEST_CASE("a few agreeing good blocks outvote many noise blocks") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto planted = generate_planted_onehot({100, 2, 3, 17, 0.0, seed});
    EnsembleConfig cfg;
    cfg.seed = seed;
    const auto fit = fit_ensemble(planted.concat, cfg);
    CHECK(matched_agreement(fit.labels, planted.labels, 2) >= 0.95);
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto planted = generate_planted_onehot({100, 3, 4, 16, 0.0, seed});
    EnsembleConfig cfg;
    cfg.seed = seed;
    CHECK(matched_agreement(fit_ensemble(planted.concat, cfg).labels, planted.labels, 3) >= 0.95);
  }
}

TEST_CASE("rows stay on the simplex and traces ascend") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto planted = generate_planted_onehot({60, 3, 3, 5, 0.25, seed});
    EnsembleConfig cfg;
    cfg.seed = seed;
    const auto fit = fit_ensemble(planted.concat, cfg);
    CHECK(oracle::non_decreasing(fit.trace.log_likelihood, 1e-9));
    for (std::size_t i = 0; i < 60; ++i) {
      double s = 0.0;
      for (double v : fit.labels.row(i)) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("block order does not change the fit") {
  const auto planted = generate_planted_onehot({50, 2, 3, 4, 0.15, 21});
  const auto& a = planted.concat;
  const std::vector<std::size_t> order{6, 2, 0, 5, 1, 3, 4};
  ConcatenatedLP b{BinaryMatrix(50, a.bits.cols(), 0), a.blocks, a.num_classes};
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t f = 0; f < a.blocks; ++f)
      for (std::size_t k = 0; k < 2; ++k) b.bits(i, f * 2 + k) = a.bits(i, order[f] * 2 + k);
  const auto fa = fit_ensemble(a, EnsembleConfig{});
  const auto fb = fit_ensemble(b, EnsembleConfig{});
  CHECK(fa.trace.log_likelihood.back() == doctest::Approx(fb.trace.log_likelihood.back()).epsilon(1e-6));
  // Same partition up to a relabeling of clusters.
  std::vector<int> la(50);
  for (std::size_t i = 0; i < 50; ++i) la[i] = static_cast<int>(argmax(fa.labels.row(i)));
  CHECK(matched_agreement(fb.labels, la, 2) == 1.0);
}

TEST_CASE("vote initialization is a hard vote plus noise") {
  const auto planted = generate_planted_onehot({30, 2, 5, 0, 0.0, 8});
  std::mt19937_64 rng(0);
  const auto gamma = vote_initialization(planted.concat, 0, 0.05, rng);
  CHECK(matched_agreement(gamma, planted.labels, 2) == 1.0);
  for (std::size_t i = 0; i < 30; ++i) {
    const double top = gamma.row(i)[argmax(gamma.row(i))];
    CHECK(top >= 0.95);
    CHECK(top < 1.0);
  }
}

TEST_CASE("fit_ensemble input checks") {
  ConcatenatedLP empty;
  CHECK_THROWS_AS(fit_ensemble(empty, EnsembleConfig{}), InputError);
  const auto planted = generate_planted_onehot({4, 2, 1, 0, 0.0, 1});
  ConcatenatedLP bad = planted.concat;
  bad.blocks = 2;
  CHECK_THROWS_AS(fit_ensemble(bad, EnsembleConfig{}), InputError);
}

TEST_CASE("deterministic under a fixed seed") {
  const auto planted = generate_planted_onehot({70, 3, 2, 8, 0.2, 4});
  EnsembleConfig cfg;
  cfg.seed = 123;
  const auto a = fit_ensemble(planted.concat, cfg);
  const auto b = fit_ensemble(planted.concat, cfg);
  CHECK(a.labels == b.labels);
  CHECK(agreement(a.labels, planted.labels) == agreement(b.labels, planted.labels));
}

}  // TEST_SUITE
