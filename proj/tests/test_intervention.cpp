#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "hoplens/intervention.hpp"

using namespace hoplens;

TEST_CASE("score arithmetic") {
  CHECK(intervention_score({"p", 3, 0.3, 0.3}) == 0.0);
  CHECK(intervention_score({"p", 3, 0.7, 0.0}) == 1.0);
  CHECK(intervention_score({"p", 3, 0.4, 0.5}) == doctest::Approx(-0.25));
  CHECK(intervention_score({"p", 3, 1.0, 0.25}) == doctest::Approx(0.75));
}

TEST_CASE("score preconditions") {
  CHECK_THROWS_AS(intervention_score({"p", 1, 0.0, 0.1}), Error);
  CHECK_THROWS_AS(intervention_score({"p", 1, 1.5, 0.1}), Error);
  CHECK_THROWS_AS(intervention_score({"p", 1, 0.5, -0.1}), Error);
  CHECK_THROWS_AS(intervention_score({"p", 1, 0.5, 1.1}), Error);
  CHECK_THROWS_AS(intervention_score({"p", 1, std::nan(""), 0.1}), Error);
}

TEST_CASE("curve aggregates per layer") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  std::vector<InterventionRecord> records;
  std::map<std::size_t, std::vector<double>> scores;
  for (std::size_t layer : {1u, 2u, 5u}) {
    for (int i = 0; i < 40; ++i) {
      InterventionRecord r{"p" + std::to_string(i), layer, unif(rng), unif(rng) * 0.9};
      records.push_back(r);
      scores[layer].push_back(1 - r.prob / r.baseline_prob);
    }
  }
  const auto curve = intervention_curve(records);
  CHECK(curve.size() == 3);
  CHECK_FALSE(curve.contains(3));
  for (const auto& [layer, s] : scores) {
    double mean = 0;
    for (double v : s) mean += v / static_cast<double>(s.size());
    double var = 0;
    for (double v : s) var += (v - mean) * (v - mean) / static_cast<double>(s.size());
    const auto& pt = curve.at(layer);
    CHECK(pt.n == 40);
    CHECK(pt.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(pt.stderr_ == doctest::Approx(std::sqrt(var / 40.0)).epsilon(1e-9));
  }
}

TEST_CASE("identity interventions give a flat zero curve") {
  std::vector<InterventionRecord> records;
  for (std::size_t l = 0; l < 6; ++l) records.push_back({"a", l, 0.6, 0.6});
  for (const auto& [layer, pt] : intervention_curve(records)) {
    CHECK(pt.mean == 0.0);
    CHECK(pt.stderr_ == 0.0);
  }
  CHECK(intervention_curve({}).empty());
}

TEST_CASE("jsonl parsing") {
  std::istringstream in(
      "{\"prompt_id\": \"a\", \"layer\": 2, \"baseline_prob\": 0.4, \"prob\": 0.5}\n"
      "\n"
      "{\"prompt_id\": \"b\", \"layer\": 3, \"baseline_prob\": 0.5, \"prob\": 0.25}\n");
  const auto records = parse_intervention_records(in);
  REQUIRE(records.size() == 2);
  CHECK(records[0].prompt_id == "a");
  CHECK(records[1].layer == 3);
  CHECK(intervention_score(records[0]) == doctest::Approx(-0.25));

  std::istringstream bad("{\"prompt_id\": \"a\", \"layer\": 2}\n");
  CHECK_THROWS_AS(parse_intervention_records(bad), Error);
  std::istringstream invalid("{\"prompt_id\": \"a\", \"layer\": 2, \"baseline_prob\": 0, \"prob\": 0}\n");
  CHECK_THROWS_AS(parse_intervention_records(invalid), Error);
}
