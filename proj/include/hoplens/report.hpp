#pragma once

// Orchestration behind the `hoplens` subcommands. Every command returns the
// files it wrote plus accumulated warnings; hard failures throw Error.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace hoplens {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunConfig {
  std::filesystem::path traces_dir = ".";
  std::optional<std::filesystem::path> categories_dir;  // default: <traces>/categories
  std::filesystem::path out_dir = "out";
  std::vector<std::string> types;  // empty: every <type>.drt in traces_dir
  std::optional<std::size_t> layer;
  std::size_t k = 5;
  double kfold_lambda = 0.0;  // penalty of the k-fold sweeps (0 = OLS)
  double ridge_lambda = 1.0;  // penalty of the fictitious-prompt generalisation
  std::uint64_t seed = 0;
  bool exact_p = true;
  std::size_t top_k = 10;
  std::optional<std::string> prompt_id;  // curves: single-prompt mode
  std::optional<std::filesystem::path> interventions;

  /// Throws Error when k < 2, a lambda is negative, or top_k < 3.
  void check() const;
  nlohmann::json to_json() const;
};

struct RunStatus {
  std::vector<std::filesystem::path> outputs;
  std::vector<std::string> warnings;
  std::vector<std::string> summary;  // human-readable lines for stdout
};

/// "# hoplens <version> seed=<seed> config=<16 hex digits>"
std::string provenance_line(const RunConfig& config);

struct DatasetConfig {
  std::filesystem::path source;
  std::filesystem::path out_dir;
  std::filesystem::path fixture_dir;
};

RunStatus cmd_dataset(const DatasetConfig& config);

struct SynthConfig {
  std::size_t c1 = 20;
  std::size_t c2 = 10;
  std::size_t n_prompts = 500;
  std::size_t n_layers = 12;
  double sigma = 0.5;
  std::uint64_t seed = 0;
  std::optional<std::size_t> onset_layer;
  std::string question_type = "synthetic";
  std::filesystem::path output;
};

/// Writes the trace, <stem>.truth.json and categories/<type>.json beside it.
RunStatus cmd_synth(const SynthConfig& config);

RunStatus cmd_regress(const RunConfig& config);
RunStatus cmd_spearman(const RunConfig& config);
RunStatus cmd_curves(const RunConfig& config);
RunStatus cmd_intervene(const RunConfig& config);

/// Validates each trace; a file that fails to decode counts as invalid.
/// Returns true when all are valid.
bool cmd_validate(const std::vector<std::filesystem::path>& paths, RunStatus& status);

}  // namespace hoplens
