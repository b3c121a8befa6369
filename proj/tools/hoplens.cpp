#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hoplens/error.hpp"
#include "hoplens/report.hpp"

#ifndef HOPLENS_DATA_DIR
#define HOPLENS_DATA_DIR "data"
#endif

namespace {

void print(const hoplens::RunStatus& status) {
  for (const auto& line : status.summary) std::cout << line << '\n';
  for (const auto& w : status.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& path : status.outputs) std::cout << "wrote " << path.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hoplens: layer-wise probes of category activations in transformer traces"};
  app.set_version_flag("--version", std::string(hoplens::kToolVersion));
  app.require_subcommand(1);

  hoplens::RunConfig config;
  std::string traces = ".";
  std::string out = "out";
  std::string categories;
  std::string layer_text;
  std::string exact_p = "auto";
  std::string prompt;
  std::string input;

  app.add_option("--traces", traces, "Directory holding <type>.drt traces")->capture_default_str();
  app.add_option("--out", out, "Output directory")->capture_default_str();
  app.add_option("--categories", categories, "Category directory (default <traces>/categories)");
  app.add_option("--seed", config.seed, "Fold-shuffle / generator seed")->capture_default_str();
  app.add_option("--layer", layer_text, "Reading layer (default floor(2L/3))");
  app.add_option("--k", config.k, "Number of cross-validation folds")->capture_default_str();
  app.add_option("--lambda", config.ridge_lambda, "Ridge strength for fictitious generalisation")
      ->capture_default_str();
  app.add_option("--kfold-lambda", config.kfold_lambda, "Ridge strength inside k-fold sweeps")
      ->capture_default_str();
  app.add_option("--types", config.types, "Comma-separated question types")->delimiter(',');
  app.add_option("--exact-p", exact_p, "auto|on|off: exact permutation p-values for n <= 10")
      ->check(CLI::IsMember({"auto", "on", "off", "true", "false"}))
      ->capture_default_str();
  app.add_option("--top-k", config.top_k, "Sorted positions used by spearman")->capture_default_str();

  auto* dataset = app.add_subcommand("dataset", "Build prompt and category files")->fallthrough();
  std::string source;
  std::string fixtures = HOPLENS_DATA_DIR;
  dataset->add_option("source", source, "Celebrity source JSONL")->required();
  dataset->add_option("-o,--output", out, "Output directory");
  dataset->add_option("--fixtures", fixtures, "Directory with names and attribute lists")
      ->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Generate a trace with a planted linear map")->fallthrough();
  hoplens::SynthConfig synth_config;
  std::string synth_out = "synthetic.drt";
  std::size_t onset = 0;
  synth->add_option("-o,--output", synth_out, "Trace path")->capture_default_str();
  synth->add_option("--c1", synth_config.c1)->capture_default_str();
  synth->add_option("--c2", synth_config.c2)->capture_default_str();
  synth->add_option("--prompts", synth_config.n_prompts)->capture_default_str();
  synth->add_option("--layers", synth_config.n_layers)->capture_default_str();
  synth->add_option("--sigma", synth_config.sigma, "Noise on the final-layer A2 activations")
      ->capture_default_str();
  auto* onset_opt = synth->add_option("--onset", onset, "First layer carrying the A1 signal");
  synth->add_option("--type", synth_config.question_type)->capture_default_str();

  auto* regress = app.add_subcommand("regress", "Cross-validated R^2 per layer")->fallthrough();
  auto* spearman = app.add_subcommand("spearman", "Rank correlation of S1 and S2")->fallthrough();
  auto* curves = app.add_subcommand("curves", "Activation curves across layers")->fallthrough();
  curves->add_option("--prompt", prompt, "Single prompt id instead of the mean");
  auto* intervene = app.add_subcommand("intervene", "Layer intervention curve")->fallthrough();
  intervene->add_option("--input", input, "Intervention records JSONL")->required();
  auto* validate = app.add_subcommand("validate", "Check trace files")->fallthrough();
  std::vector<std::string> validate_paths;
  validate->add_option("traces", validate_paths, "Trace files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    config.traces_dir = traces;
    config.out_dir = out;
    if (!categories.empty()) config.categories_dir = categories;
    if (!layer_text.empty()) {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(layer_text, &pos);
      if (pos != layer_text.size()) throw hoplens::Error("--layer expects an integer");
      config.layer = static_cast<std::size_t>(v);
    }
    config.exact_p = exact_p != "off" && exact_p != "false";
    if (!prompt.empty()) config.prompt_id = prompt;
    if (!input.empty()) config.interventions = input;

    if (*dataset) {
      print(hoplens::cmd_dataset({source, out, fixtures}));
    } else if (*synth) {
      synth_config.seed = config.seed;
      synth_config.output = synth_out;
      if (*onset_opt) synth_config.onset_layer = onset;
      print(hoplens::cmd_synth(synth_config));
    } else if (*regress) {
      print(hoplens::cmd_regress(config));
    } else if (*spearman) {
      print(hoplens::cmd_spearman(config));
    } else if (*curves) {
      print(hoplens::cmd_curves(config));
    } else if (*intervene) {
      print(hoplens::cmd_intervene(config));
    } else if (*validate) {
      hoplens::RunStatus status;
      std::vector<std::filesystem::path> paths(validate_paths.begin(), validate_paths.end());
      const bool ok = hoplens::cmd_validate(paths, status);
      print(status);
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "hoplens: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
