#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "affcode/affinity.hpp"
#include "affcode/error.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace affcode;

namespace {

struct Dataset {
  DatasetManifest manifest;
  FeatureStore store;
};

// Random nonnegative maps; layer "a" has 4 channels and layer "b" has 7.
Dataset random_dataset(std::size_t n, std::uint64_t seed, const std::vector<std::size_t>& order = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<FilterMap> maps;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "x" + std::to_string(i);
    std::vector<float> a(4 * 3 * 2), b(7 * 2 * 2);
    for (float& v : a) v = u(rng) < 0.3f ? 0.0f : u(rng);
    for (float& v : b) v = u(rng);
    maps.push_back(fixture::make_map(id, "a", 4, 3, 2, std::move(a)));
    maps.push_back(fixture::make_map(id, "b", 7, 2, 2, std::move(b)));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  if (!order.empty()) perm = order;
  std::vector<std::string> ids;
  for (std::size_t i : perm) ids.push_back("x" + std::to_string(i));
  Dataset d{DatasetManifest(ids, n, 0, {"a", "b"}), {}};
  for (auto& m : maps) d.store.add(std::move(m));
  return d;
}

}  // namespace

TEST_SUITE("affinity") {

TEST_CASE("cosine") {
  const std::vector<double> a{1, 2, 3}, zero{0, 0, 0}, neg{-1, -2, -3};
  CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine(a, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(cosine(a, zero) == 0.0);
  CHECK(cosine(zero, zero) == 0.0);
  const std::vector<double> b{1, 2};
  CHECK_THROWS_AS(cosine(a, b), InputError);
  const std::vector<float> f1{3, 4}, f2{4, -3};
  CHECK(cosine(f1, f2) == doctest::Approx(0.0));
}

TEST_CASE("affinity_score examples") {
  SUBCASE("anchor against its own source map scores 1") {
    const auto map = fixture::worked_example_map();
    const auto set = select_top_z(map, 2);
    for (const auto& p : set.prototypes()) CHECK(affinity_score(p.vector, map) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("orthogonal target scores 0") {
    const std::vector<float> anchor{1, 0, 0};
    const auto target = fixture::make_map("t", "L", 3, 1, 2, {0, 0, 1, 0, 0, 1});
    CHECK(affinity_score(anchor, target) == 0.0);
  }
  SUBCASE("2 x 2 target with patch cosines {0.3, 0.9, 0.1, 0.5}") {
    const std::vector<float> anchor{1, 0};
    const double cs[4] = {0.3, 0.9, 0.1, 0.5};
    std::vector<float> values(8);
    for (int p = 0; p < 4; ++p) {
      values[static_cast<std::size_t>(p)] = static_cast<float>(cs[p]);
      values[static_cast<std::size_t>(4 + p)] = static_cast<float>(std::sqrt(1.0 - cs[p] * cs[p]));
    }
    const auto target = fixture::make_map("t", "L", 2, 2, 2, values);
    CHECK(affinity_score(anchor, target) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(affinity_score(anchor, target) == doctest::Approx(oracle::max_patch_cosine(anchor, target)).epsilon(1e-12));
  }
  SUBCASE("zero anchor scores 0") {
    const std::vector<float> anchor{0, 0, 0};
    CHECK(affinity_score(anchor, fixture::worked_example_map()) == 0.0);
  }
  SUBCASE("channel mismatch") {
    const std::vector<float> anchor{1, 0};
    CHECK_THROWS_AS(affinity_score(anchor, fixture::worked_example_map()), InputError);
  }
}

TEST_CASE("N = 2, alpha = 1 hand-built matrix") {
  // p has patches (1,0) and (0,1); its prototype is (1,0) (channel 0 wins the tie).
  // q has patches (3,4) and (1,1); its prototype is (3,4) (channel 1 peaks at 4).
  FeatureStore store;
  store.add(fixture::make_map("p", "L", 2, 1, 2, {1, 0, 0, 1}));
  store.add(fixture::make_map("q", "L", 2, 1, 2, {3, 1, 4, 1}));
  const DatasetManifest manifest({"p", "q"}, 2, 0, {"L"});
  const auto sets = select_all_prototypes(store, 1);
  const auto m = build_affinity_matrix(store, sets, manifest, 1);
  REQUIRE(m.num_functions() == 1);
  CHECK(m.scores()(0, 0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(m.scores()(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-7));  // max(0.6, 0.7071)
  CHECK(m.scores()(0, 1) == doctest::Approx(0.8).epsilon(1e-7));                   // max(0.6, 0.8)
  CHECK(m.scores()(1, 1) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("matrix entries match the brute-force oracle") {
  const auto d = random_dataset(9, 17);
  const std::size_t z = 3;
  const auto sets = select_all_prototypes(d.store, z);
  const auto m = build_affinity_matrix(d.store, sets, d.manifest, z);
  const std::size_t n = 9;
  REQUIRE(m.num_functions() == 2 * z);
  CHECK(m.descriptors()[0] == AffinityFunctionDescriptor{"a", 1});
  CHECK(m.descriptors()[z] == AffinityFunctionDescriptor{"b", 1});
  for (std::size_t f = 0; f < m.num_functions(); ++f) {
    const auto& desc = m.descriptors()[f];
    for (std::size_t j = 0; j < n; ++j) {
      const auto& anchor_set = sets.at({d.manifest.instance_ids()[j], desc.layer});
      const auto& anchor = anchor_set.at_rank(desc.prototype_rank).vector;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& target = d.store.maps().at({d.manifest.instance_ids()[i], desc.layer});
        const float got = m.scores()(i, f * n + j);
        CHECK(got == doctest::Approx(oracle::max_patch_cosine(anchor, target)).epsilon(1e-6));
        CHECK(got >= 0.0f);
        CHECK(got <= 1.0f);
      }
      if (std::any_of(anchor.begin(), anchor.end(), [](float v) { return v != 0.0f; })) {
        CHECK(m.scores()(j, f * n + j) == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("worker count does not change the matrix") {
  const auto d = random_dataset(11, 5);
  const auto sets = select_all_prototypes(d.store, 4);
  const auto one = build_affinity_matrix(d.store, sets, d.manifest, 4, 1);
  const auto many = build_affinity_matrix(d.store, sets, d.manifest, 4, 3);
  CHECK(one == many);
}

TEST_CASE("permuting instances permutes rows and anchor columns") {
  const std::size_t n = 7;
  const std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
  const auto base = random_dataset(n, 99);
  const auto shuffled = random_dataset(n, 99, perm);
  const std::size_t z = 2;
  const auto m0 = build_affinity_matrix(base.store, select_all_prototypes(base.store, z), base.manifest, z);
  const auto m1 = build_affinity_matrix(shuffled.store, select_all_prototypes(shuffled.store, z),
                                        shuffled.manifest, z);
  for (std::size_t f = 0; f < m0.num_functions(); ++f)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(m1.scores()(i, f * n + j) == m0.scores()(perm[i], f * n + perm[j]));
}

TEST_CASE("missing inputs fail before any work") {
  const auto d = random_dataset(3, 1);
  auto sets = select_all_prototypes(d.store, 2);
  const DatasetManifest extra({"x0", "x1", "x2", "x9"}, 4, 0, {"a", "b"});
  CHECK_THROWS_AS(build_affinity_matrix(d.store, sets, extra, 2), InputError);
  CHECK_THROWS_AS(build_affinity_matrix(d.store, sets, d.manifest, 3), InputError);
  sets.erase({"x1", "b"});
  CHECK_THROWS_AS(build_affinity_matrix(d.store, sets, d.manifest, 2), InputError);
}

TEST_CASE("load_directory reads recursively and skips strangers") {
  fixture::TempDir tmp;
  std::filesystem::create_directories(tmp / "sub");
  write_filtermap(fixture::make_map("x0", "a", 1, 1, 1, {1}), tmp / "x0_a.ggfm");
  write_filtermap(fixture::make_map("x1", "a", 1, 1, 1, {2}), tmp / "sub" / "x1_a.ggfm");
  write_filtermap(fixture::make_map("stranger", "a", 1, 1, 1, {3}), tmp / "s.ggfm");
  write_filtermap(fixture::make_map("x0", "other", 1, 1, 1, {4}), tmp / "x0_o.ggfm");
  write_file_atomic(tmp / "notes.txt", "ignored");
  const DatasetManifest manifest({"x0", "x1"}, 2, 0, {"a"});
  const auto store = FeatureStore::load_directory(tmp.path(), manifest);
  CHECK(store.size() == 2);
  REQUIRE(store.find("x1", "a") != nullptr);
  CHECK(store.find("x1", "a")->data()[0] == 2.0f);
  CHECK(store.find("x0", "other") == nullptr);

  write_filtermap(fixture::make_map("x0", "a", 1, 1, 1, {5}), tmp / "dup.ggfm");
  CHECK_THROWS_AS(FeatureStore::load_directory(tmp.path(), manifest), InputError);
  CHECK_THROWS_AS(FeatureStore::load_directory(tmp / "nope", manifest), InputError);
}

}  // TEST_SUITE
