#pragma once

// Aggregation of zero-intervention measurements: for each layer, how much
// zeroing every position but the last lowers the baseline token probability.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hoplens/error.hpp"

namespace hoplens {

struct InterventionRecord {
  std::string prompt_id;
  std::size_t layer = 0;
  double baseline_prob = 1.0;  // probability of the un-intervened argmax token
  double prob = 1.0;           // probability of that token with the layer zeroed
};

/// 1 - prob / baseline_prob. Negative when the intervention raises the
/// token's probability. Throws when baseline_prob is not in (0, 1] or prob
/// is not in [0, 1].
double intervention_score(const InterventionRecord& record);

struct InterventionPoint {
  double mean = 0.0;
  double stderr_ = 0.0;  // population stddev / sqrt(n)
  std::size_t n = 0;
};

/// Per-layer mean score. Layers without records have no entry.
std::map<std::size_t, InterventionPoint> intervention_curve(
    std::span<const InterventionRecord> records);

/// One JSON object per line: {"prompt_id", "layer", "baseline_prob", "prob"}.
std::vector<InterventionRecord> parse_intervention_records(std::istream& in);
std::vector<InterventionRecord> read_intervention_records(const std::filesystem::path& path);

}  // namespace hoplens
