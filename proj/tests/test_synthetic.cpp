#include <doctest.h>

#include <nlohmann/json.hpp>

#include "hoplens/linear_probe.hpp"
#include "hoplens/synthetic.hpp"

using namespace hoplens;

TEST_CASE("default plant has unit-norm rows and the stated expected R^2") {
  const auto spec = default_plant(20, 10, 500, 12, 0.5, 0);
  CHECK(spec.onset_layer == 6);
  for (Eigen::Index r = 0; r < 10; ++r) CHECK(spec.planted_q.row(r).norm() == doctest::Approx(1.0));
  CHECK(expected_r2(spec) == doctest::Approx(0.8));
  CHECK(spec.answer_index[13] == 3);
  // Uneven c1 / c2: rows still unit norm.
  const auto uneven = default_plant(7, 3, 10, 4, 0.0, 0);
  for (Eigen::Index r = 0; r < 3; ++r) CHECK(uneven.planted_q.row(r).norm() == doctest::Approx(1.0));
  CHECK(expected_r2(uneven) == 1.0);
}

TEST_CASE("generated trace is valid and deterministic in the seed") {
  const auto spec = default_plant(6, 3, 40, 5, 0.5, 17);
  const auto a = generate(spec);
  CHECK(validate_trace(a.trace).ok());
  CHECK(a.trace == generate(spec).trace);
  auto other = spec;
  other.seed = 18;
  CHECK_FALSE(a.trace == generate(other).trace);
  CHECK(a.predictor_layer == 3);
  CHECK(a.trace.header.n_stored_layers == 6);
  CHECK(a.categories.map.indices(a.categories.a1, a.categories.a2) == spec.answer_index);
}

TEST_CASE("A1 equals the latent from the onset on; final A2 follows Q z + noise") {
  auto spec = default_plant(5, 2, 30, 6, 0.0, 2);
  const auto s = generate(spec);
  const auto onset = category_activations(s.trace, "A1", spec.onset_layer);
  for (std::size_t l = spec.onset_layer + 1; l <= 6; ++l)
    CHECK(category_activations(s.trace, "A1", l).values == onset.values);
  CHECK_FALSE(category_activations(s.trace, "A1", spec.onset_layer - 1).values == onset.values);
  const Eigen::MatrixXd z = onset.values.cast<double>();
  const Eigen::MatrixXd a2 = category_activations(s.trace, "A2", 6).values.cast<double>();
  CHECK((a2 - z * spec.planted_q.transpose()).norm() < 1e-5);
}

TEST_CASE("gold tokens are argmax members") {
  const auto s = generate(default_plant(4, 2, 10, 3, 0.5, 1));
  const auto a1 = category_activations(s.trace, "A1", 3);
  for (std::size_t p = 0; p < 10; ++p) {
    Eigen::Index best = 0;
    a1.values.row(static_cast<Eigen::Index>(p)).maxCoeff(&best);
    CHECK(*s.trace.metas[p].gold_a1_token == static_cast<TokenId>(best));
  }
}

TEST_CASE("invalid specs are rejected") {
  auto spec = default_plant(5, 2, 30, 6, 0.5, 2);
  spec.onset_layer = 7;
  CHECK_THROWS_AS(generate(spec), Error);
  spec = default_plant(5, 2, 30, 6, 0.5, 2);
  spec.planted_q.resize(3, 5);
  CHECK_THROWS_AS(generate(spec), Error);
  spec = default_plant(5, 2, 30, 6, 0.5, 2);
  spec.answer_index[0] = 2;
  CHECK_THROWS_AS(generate(spec), Error);
}

TEST_CASE("truth sidecar") {
  const auto s = generate(default_plant(4, 2, 10, 3, 0.5, 1));
  const auto j = truth_json(s);
  CHECK(j.at("expected_r2").get<double>() == doctest::Approx(0.8));
  CHECK(j.at("planted_q").size() == 2);
  CHECK(j.at("onset_layer").get<int>() == 1);
}
