#include <doctest.h>

#include <cmath>
#include <random>

#include "hoplens/activation.hpp"
#include "test_util.hpp"

using namespace hoplens;

namespace {

// 3 prompts, L = 3, A1 = {10, 11, 12}, A2 = {20, 21}, TOPK = {30}.
ActivationTrace fixture() {
  ActivationTrace t;
  t.header.model_id = "m";
  t.header.n_layers = 3;
  t.header.n_stored_layers = 4;
  t.header.vocab_size = 40;
  t.header.n_prompts = 3;
  t.header.tracked_sets = {{"A1", {10, 11, 12}}, {"A2", {20, 21}}, {"TOPK", {30}}};
  for (int p = 0; p < 3; ++p) t.metas.push_back({"p" + std::to_string(p), "qt", "s", {}, {}, false});
  t.tensor = ActivationTensor(3, 4, 6);
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t l = 0; l < 4; ++l)
      for (std::size_t k = 0; k < 6; ++k)
        t.tensor(p, l, k) = static_cast<float>(100 * p + 10 * l + k);
  return t;
}

}  // namespace

TEST_CASE("reading layers") {
  CHECK(two_thirds_layer(32) == 21);
  CHECK(two_thirds_layer(80) == 53);
  CHECK(two_thirds_layer(12) == 8);
  CHECK(half_layer(32) == 16);
  CHECK(half_layer(7) == 3);
}

TEST_CASE("category activations slice the tracked axis") {
  const auto t = fixture();
  const auto a2 = category_activations(t, "A2", 2);
  CHECK(a2.question_type == "qt");
  CHECK(a2.values.rows() == 3);
  CHECK(a2.values.cols() == 2);
  CHECK(a2.values(1, 0) == 100 + 20 + 3);
  CHECK(a2.values(2, 1) == 200 + 20 + 4);
  const auto a1 = category_activations(t, "A1", 0);
  CHECK(a1.values(0, 2) == 2);
  CHECK_THROWS_AS(category_activations(t, "A1", 4), Error);
  CHECK_THROWS_AS(category_activations(t, "X", 1), Error);
}

TEST_CASE("layer series mean and standard error") {
  const auto t = fixture();
  const auto curve = layer_series(t, 21);
  CHECK(curve.set_label == "A2");
  REQUIRE(curve.mean.size() == 4);
  // Values 4 + 10 l + {0, 100, 200}: mean 104 + 10 l, population sd sqrt(20000/3).
  for (Eigen::Index l = 0; l < 4; ++l) {
    CHECK(curve.mean[l] == doctest::Approx(104.0 + 10.0 * static_cast<double>(l)));
    CHECK(curve.stderr_[l] == doctest::Approx(std::sqrt(20000.0 / 3.0) / std::sqrt(3.0)));
  }
  const auto single = layer_series(t, 10, 2);
  CHECK(single.mean[3] == 230.0);
  CHECK(single.stderr_.isZero());
  CHECK_THROWS_AS(layer_series(t, 99), Error);
  CHECK_THROWS_AS(layer_series(t, 10, 3), Error);
}

TEST_CASE("top pair curves pick the largest A1 members at the layer") {
  auto t = fixture();
  // Make A1 member 2 strongest, member 0 second at layer 2.
  for (std::size_t p = 0; p < 3; ++p) {
    t.tensor(p, 2, 0) = 1000.0f;
    t.tensor(p, 2, 2) = 2000.0f;
  }
  const std::vector<std::size_t> index{1, 0, 1};
  const auto pairs = top_pair_curves(t, index, 2, 2);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].a1_column == 2);
  CHECK(pairs[0].a2_column == 1);
  CHECK(pairs[1].a1_column == 0);
  CHECK(pairs[0].a1.token == 12);
  CHECK(pairs[0].a2.token == 21);
  CHECK(pairs[0].a1.mean[2] == doctest::Approx(2000.0));
  CHECK_THROWS_AS(top_pair_curves(t, index, 2, 4), Error);
  CHECK_THROWS_AS(top_pair_curves(t, std::vector<std::size_t>{0, 1}, 2, 1), Error);
}

TEST_CASE("slices agree with direct indexing on random traces") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 30; ++i) {
    const auto t = testutil::random_trace(rng);
    const std::size_t layer = rng() % t.header.n_stored_layers;
    const auto a2 = category_activations(t, "A2", layer);
    const auto off = *t.header.set_offset("A2");
    for (Eigen::Index p = 0; p < a2.values.rows(); ++p)
      for (Eigen::Index k = 0; k < a2.values.cols(); ++k)
        CHECK(a2.values(p, k) ==
              t.tensor(static_cast<std::size_t>(p), layer, off + static_cast<std::size_t>(k)));
  }
}
