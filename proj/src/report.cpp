#include "hoplens/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hoplens/activation.hpp"
#include "hoplens/dataset.hpp"
#include "hoplens/intervention.hpp"
#include "hoplens/linear_probe.hpp"
#include "hoplens/parallel.hpp"
#include "hoplens/rank_correlation.hpp"
#include "hoplens/synthetic.hpp"
#include "hoplens/trace_format.hpp"

namespace hoplens {

namespace fs = std::filesystem;
using json = nlohmann::json;

void RunConfig::check() const {
  if (k < 2) throw Error("--k must be >= 2");
  if (!(kfold_lambda >= 0.0) || !(ridge_lambda >= 0.0)) throw Error("--lambda must be >= 0");
  if (top_k < 3) throw Error("--top-k must be >= 3");
}

json RunConfig::to_json() const {
  return {{"traces_dir", traces_dir.generic_string()},
          {"categories_dir", categories_dir ? categories_dir->generic_string() : ""},
          {"out_dir", out_dir.generic_string()},
          {"types", types},
          {"layer", layer ? json(*layer) : json(nullptr)},
          {"k", k},
          {"kfold_lambda", kfold_lambda},
          {"ridge_lambda", ridge_lambda},
          {"seed", seed},
          {"exact_p", exact_p},
          {"top_k", top_k},
          {"prompt_id", prompt_id ? json(*prompt_id) : json(nullptr)}};
}

std::string provenance_line(const RunConfig& config) {
  const std::string dumped = config.to_json().dump();
  const auto hash = fnv1a64({reinterpret_cast<const std::uint8_t*>(dumped.data()), dumped.size()});
  char buf[128];
  std::snprintf(buf, sizeof buf, "# hoplens %s seed=%llu config=%016llx", kToolVersion,
                static_cast<unsigned long long>(config.seed), static_cast<unsigned long long>(hash));
  return buf;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::string& provenance,
            const std::vector<std::string>& columns)
      : out_(path) {
    if (!out_) throw Error("cannot write '" + path.string() + "'");
    out_ << provenance << '\n';
    row(columns);
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << csv_field(fields[i]);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

std::string safe_name(std::string s) {
  for (auto& c : s)
    if (c == '/' || c == '\\' || c == ':' || c == ' ') c = '_';
  return s.empty() ? "unknown" : s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

struct TypedTrace {
  std::string question_type;
  fs::path path;
  ActivationTrace trace;
};

// Real-prompt traces named <type>.drt; fn_<type>.drt holds fictitious subjects.
std::vector<TypedTrace> load_traces(const RunConfig& config, RunStatus& status) {
  if (!fs::is_directory(config.traces_dir))
    throw Error("trace directory '" + config.traces_dir.string() + "' does not exist");
  std::vector<std::string> types = config.types;
  if (types.empty()) {
    for (const auto& entry : fs::directory_iterator(config.traces_dir)) {
      if (entry.path().extension() != ".drt") continue;
      const auto stem = entry.path().stem().string();
      if (stem.rfind("fn_", 0) != 0) types.push_back(stem);
    }
    std::sort(types.begin(), types.end());
  }
  std::vector<TypedTrace> out;
  for (const auto& type : types) {
    const auto path = config.traces_dir / (type + ".drt");
    if (!fs::exists(path)) {
      status.warnings.push_back("no trace for '" + type + "' at " + path.string() + "; skipped");
      continue;
    }
    out.push_back({type, path, load_trace(path)});
  }
  if (out.empty()) throw Error("no traces found in '" + config.traces_dir.string() + "'");
  return out;
}

fs::path categories_dir(const RunConfig& config) {
  return config.categories_dir.value_or(config.traces_dir / "categories");
}

std::optional<CategoryBundle> find_categories(const RunConfig& config, const std::string& type,
                                              RunStatus& status) {
  const auto path = categories_dir(config) / (type + ".json");
  if (!fs::exists(path)) {
    status.warnings.push_back("no category file for '" + type + "' at " + path.string());
    return std::nullopt;
  }
  return load_category_bundle(path);
}

std::vector<std::size_t> answer_index_for(const CategoryBundle& bundle, const ActivationTrace& trace) {
  const auto idx = bundle.map.indices(bundle.a1, bundle.a2);
  const auto* a1 = trace.header.find_set("A1");
  const auto* a2 = trace.header.find_set("A2");
  if (!a1 || !a2 || a1->token_ids.size() != bundle.a1.size() ||
      a2->token_ids.size() != bundle.a2.size())
    throw Error("category file for '" + bundle.question_type +
                "' does not match the trace's tracked A1/A2 sets");
  return idx;
}

std::string model_of(const std::vector<TypedTrace>& traces) {
  return safe_name(traces.front().trace.header.model_id);
}

std::size_t reading_layer(const RunConfig& config, const ActivationTrace& trace) {
  const std::size_t layer = config.layer.value_or(two_thirds_layer(trace.header.n_layers));
  if (layer > trace.header.n_layers)
    throw Error("--layer " + std::to_string(layer) + " exceeds the model's " +
                std::to_string(trace.header.n_layers) + " layers");
  return layer;
}

struct MeanSe {
  double mean = std::nan("");
  double se = std::nan("");
  std::size_t n = 0;
};

MeanSe mean_se(const std::vector<double>& values) {
  MeanSe out;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    sum_sq += v * v;
    ++out.n;
  }
  if (out.n == 0) return out;
  const double n = static_cast<double>(out.n);
  out.mean = sum / n;
  out.se = std::sqrt(std::max(0.0, sum_sq / n - out.mean * out.mean)) / std::sqrt(n);
  return out;
}

}  // namespace

RunStatus cmd_dataset(const DatasetConfig& config) {
  if (!fs::exists(config.source))
    throw Error("source file '" + config.source.string() + "' does not exist");
  RunStatus status;
  const auto rows = read_celebrity_source(config.source);
  auto loaded = load_compositional_celebrities(rows);
  status.warnings = loaded.warning_messages;

  const auto prompts_dir = config.out_dir / "prompts";
  const auto categories = config.out_dir / "categories";
  fs::create_directories(prompts_dir);
  fs::create_directories(categories);

  auto write_records = [&](const fs::path& path, const std::vector<PromptRecord>& records,
                           const std::string& type) {
    std::string text;
    for (const auto& r : records)
      if (r.question_type == type) text += to_json(r).dump() + "\n";
    write_text(path, text);
    status.outputs.push_back(path);
  };

  for (const auto& info : original_question_types()) {
    const std::string type(info.name);
    write_records(prompts_dir / (type + ".jsonl"), loaded.records, type);
    const auto bundle = build_category_spec(rows, type);
    write_text(categories / (type + ".json"), to_json(bundle).dump(2) + "\n");
    status.outputs.push_back(categories / (type + ".json"));
  }

  std::vector<std::string> fn_names;
  for (const auto& line : read_lines(config.fixture_dir / "fictitious_names.txt"))
    fn_names.push_back(line);
  if (fn_names.size() != kFictitiousNameCount)
    throw Error("fictitious_names.txt must hold " + std::to_string(kFictitiousNameCount) +
                " names, has " + std::to_string(fn_names.size()));
  const auto fictitious = build_fictitious_subjects(fn_names);
  for (const auto& info : original_question_types()) {
    const std::string type(info.name);
    write_records(prompts_dir / ("fn_" + type + ".jsonl"), fictitious, type);
  }

  const auto lists = read_attribute_lists(config.fixture_dir);
  const auto attributes = build_fictitious_attributes(distinct_names(rows, kAttributeNameCount));
  for (const auto& info : fictitious_attribute_types()) {
    const std::string type(info.name);
    write_records(prompts_dir / (type + ".jsonl"), attributes, type);
    const auto bundle = build_category_spec(lists, type);
    write_text(categories / (type + ".json"), to_json(bundle).dump(2) + "\n");
    status.outputs.push_back(categories / (type + ".json"));
  }

  status.summary.push_back("compositional celebrities: " + std::to_string(loaded.records.size()) +
                           " prompts in " + std::to_string(original_question_types().size()) +
                           " types (" + std::to_string(loaded.warnings) + " skipped)");
  status.summary.push_back("fictitious subjects: " + std::to_string(fictitious.size()) + " prompts");
  status.summary.push_back("fictitious attributes: " + std::to_string(attributes.size()) +
                           " prompts");
  return status;
}

RunStatus cmd_synth(const SynthConfig& config) {
  auto spec = default_plant(config.c1, config.c2, config.n_prompts, config.n_layers, config.sigma,
                            config.seed);
  if (config.onset_layer) spec.onset_layer = *config.onset_layer;
  spec.question_type = config.question_type;
  const auto synthetic = generate(spec);

  RunStatus status;
  const auto dir = config.output.has_parent_path() ? config.output.parent_path() : fs::path(".");
  fs::create_directories(dir / "categories");
  save_trace(config.output, synthetic.trace);
  status.outputs.push_back(config.output);

  auto truth = config.output;
  truth.replace_extension(".truth.json");
  write_text(truth, truth_json(synthetic).dump(2) + "\n");
  status.outputs.push_back(truth);

  const auto cat = dir / "categories" / (config.question_type + ".json");
  write_text(cat, to_json(synthetic.categories).dump(2) + "\n");
  status.outputs.push_back(cat);
  status.summary.push_back("synthetic trace: " + std::to_string(spec.n_prompts) + " prompts, " +
                           std::to_string(spec.n_layers) + " layers, onset " +
                           std::to_string(spec.onset_layer) + ", expected R^2 " +
                           num(synthetic.expected_r2));
  return status;
}

RunStatus cmd_regress(const RunConfig& config) {
  config.check();
  RunStatus status;
  const auto traces = load_traces(config, status);
  const auto model = model_of(traces);
  const auto provenance = provenance_line(config);
  const auto r2_dir = config.out_dir / "r2" / model;
  fs::create_directories(r2_dir);

  KFoldOptions kfold;
  kfold.k = config.k;
  kfold.lambda = config.kfold_lambda;
  kfold.seed = config.seed;
  const FitOptions ridge{config.ridge_lambda, true, false};

  // per_layer[predictor][layer] -> mean R^2 of each type
  std::map<std::string, std::map<std::size_t, std::vector<double>>> per_layer;
  std::map<std::size_t, std::vector<double>> fn_per_layer;
  CsvWriter summary(config.out_dir / "r2_summary.csv", provenance,
                    {"model", "question_type", "a1_category", "a2_category", "layer",
                     "r2_two_thirds", "r2_fictitious", "lambda", "seed"});

  for (const auto& tt : traces) {
    const auto& trace = tt.trace;
    CsvWriter csv(r2_dir / (tt.question_type + ".csv"), provenance,
                  {"layer", "predictor_set", "mean_r2", "stderr", "lambda", "seed"});
    for (const std::string set : {"A1", "A2"}) {
      const auto reports = layer_sweep(trace, set, {kfold, 1});
      for (const auto& r : reports) {
        csv.row({std::to_string(r.predictor.layer), set, num(r.mean_r2), num(r.stderr_r2),
                 num(r.lambda), std::to_string(r.seed)});
        per_layer[set][r.predictor.layer].push_back(r.mean_r2);
        if (r.n_undefined > 0)
          status.warnings.push_back(tt.question_type + " " + set + " layer " +
                                    std::to_string(r.predictor.layer) + ": " +
                                    std::to_string(r.n_undefined) +
                                    " zero-variance targets excluded");
      }
    }
    status.outputs.push_back(r2_dir / (tt.question_type + ".csv"));

    const std::size_t layer = reading_layer(config, trace);
    const auto data = probe_data(trace, "A1", layer);
    const Eigen::MatrixXd x = data.predictors.values.cast<double>();
    const Eigen::MatrixXd y = data.targets.values.cast<double>();
    const Eigen::MatrixXd pred = kfold_predict(x, y, kfold);
    const auto at_layer = r2_scores(y, pred);
    {
      CsvWriter fit_csv(r2_dir / (tt.question_type + "_fit.csv"), provenance,
                        {"prompt_id", "target", "predicted", "actual"});
      for (Eigen::Index i = 0; i < y.rows(); ++i)
        for (Eigen::Index j = 0; j < y.cols(); ++j)
          fit_csv.row({trace.metas[static_cast<std::size_t>(i)].prompt_id, std::to_string(j),
                       num(pred(i, j)), num(y(i, j))});
      status.outputs.push_back(r2_dir / (tt.question_type + "_fit.csv"));
    }

    double fn_r2 = std::nan("");
    const auto fn_path = config.traces_dir / ("fn_" + tt.question_type + ".drt");
    if (fs::exists(fn_path)) {
      const auto fn_trace = load_trace(fn_path);
      CsvWriter fn_csv(r2_dir / ("fn_" + tt.question_type + ".csv"), provenance,
                       {"layer", "mean_r2", "stderr", "lambda"});
      for (std::size_t l = 1; l <= trace.header.n_layers; ++l) {
        const auto r = generalize(probe_data(trace, "A1", l), probe_data(fn_trace, "A1", l), ridge);
        fn_csv.row({std::to_string(l), num(r.mean_r2), num(r.stderr_r2), num(r.lambda)});
        fn_per_layer[l].push_back(r.mean_r2);
        if (l == layer) fn_r2 = r.mean_r2;
      }
      status.outputs.push_back(r2_dir / ("fn_" + tt.question_type + ".csv"));
    }

    std::string a1_name;
    std::string a2_name;
    if (fs::exists(categories_dir(config) / (tt.question_type + ".json"))) {
      const auto bundle = load_category_bundle(categories_dir(config) / (tt.question_type + ".json"));
      a1_name = bundle.a1.name;
      a2_name = bundle.a2.name;
    }
    summary.row({model, tt.question_type, a1_name, a2_name, std::to_string(layer),
                 num(at_layer.mean_r2), num(fn_r2), num(config.ridge_lambda),
                 std::to_string(config.seed)});
    status.summary.push_back(tt.question_type + ": mean R^2 at layer " + std::to_string(layer) +
                             " = " + num(at_layer.mean_r2));
  }
  status.outputs.push_back(config.out_dir / "r2_summary.csv");

  CsvWriter mean_csv(r2_dir / "mean_by_layer.csv", provenance,
                     {"layer", "predictor_set", "mean_r2", "stderr", "n_types"});
  for (const auto& [set, layers] : per_layer)
    for (const auto& [layer, values] : layers) {
      const auto m = mean_se(values);
      mean_csv.row({std::to_string(layer), set, num(m.mean), num(m.se), std::to_string(m.n)});
    }
  for (const auto& [layer, values] : fn_per_layer) {
    const auto m = mean_se(values);
    mean_csv.row({std::to_string(layer), "A1_fictitious", num(m.mean), num(m.se), std::to_string(m.n)});
  }
  status.outputs.push_back(r2_dir / "mean_by_layer.csv");
  return status;
}

RunStatus cmd_spearman(const RunConfig& config) {
  config.check();
  RunStatus status;
  const auto traces = load_traces(config, status);
  const auto model = model_of(traces);
  const auto provenance = provenance_line(config);
  const auto dir = config.out_dir / "spearman";
  fs::create_directories(dir);
  const std::optional<PValueMethod> method =
      config.exact_p ? std::nullopt : std::optional(PValueMethod::kTApprox);

  CsvWriter table(dir / (model + ".csv"), provenance,
                  {"question_type", "layer_fraction", "layer", "rho", "p", "stars", "method",
                   "n_prompts"});
  CsvWriter patterns(dir / (model + "_patterns.csv"), provenance,
                     {"question_type", "layer", "position", "s1_mean", "s2_mean"});
  std::map<std::size_t, std::vector<double>> by_layer;

  for (const auto& tt : traces) {
    const auto bundle = find_categories(config, tt.question_type, status);
    if (!bundle) {
      status.warnings.push_back("spearman: '" + tt.question_type + "' skipped");
      continue;
    }
    const auto index = answer_index_for(*bundle, tt.trace);
    const std::size_t c1 = index.size();
    const std::size_t top_k = std::min(config.top_k, c1);
    const std::size_t L = tt.trace.header.n_layers;

    std::vector<std::pair<std::string, std::size_t>> rows;
    if (config.layer) {
      rows.emplace_back("override", reading_layer(config, tt.trace));
    } else {
      rows.emplace_back("1/2", half_layer(L));
      rows.emplace_back("2/3", two_thirds_layer(L));
    }
    for (const auto& [fraction, layer] : rows) {
      const auto pattern = rank_pattern(tt.trace, index, layer, top_k, method);
      const auto& c = pattern.correlation;
      table.row({tt.question_type, fraction, std::to_string(layer), num(c.rho), num(c.p_value),
                 significance_stars(c.p_value), to_string(c.method),
                 std::to_string(pattern.n_prompts)});
      for (std::size_t i = 0; i < top_k; ++i)
        patterns.row({tt.question_type, std::to_string(layer), std::to_string(i),
                      num(pattern.s1_mean[static_cast<Eigen::Index>(i)]),
                      num(pattern.s2_mean[static_cast<Eigen::Index>(i)])});
      status.summary.push_back(tt.question_type + " layer " + std::to_string(layer) + ": rho = " +
                               num(c.rho) + significance_stars(c.p_value));
    }

    std::vector<double> rhos(L);
    parallel_for(L, [&](std::size_t i) {
      rhos[i] = rank_pattern(tt.trace, index, i + 1, top_k, method).correlation.rho;
    });
    for (std::size_t i = 0; i < L; ++i) by_layer[i + 1].push_back(rhos[i]);
  }
  status.outputs.push_back(dir / (model + ".csv"));
  status.outputs.push_back(dir / (model + "_patterns.csv"));

  CsvWriter mean_csv(dir / (model + "_by_layer.csv"), provenance,
                     {"layer", "mean_rho", "stderr", "n_types"});
  for (const auto& [layer, values] : by_layer) {
    const auto m = mean_se(values);
    mean_csv.row({std::to_string(layer), num(m.mean), num(m.se), std::to_string(m.n)});
  }
  status.outputs.push_back(dir / (model + "_by_layer.csv"));
  return status;
}

RunStatus cmd_curves(const RunConfig& config) {
  config.check();
  RunStatus status;
  const auto traces = load_traces(config, status);
  const auto provenance = provenance_line(config);
  const auto dir = config.out_dir / "curves";
  fs::create_directories(dir);

  for (const auto& tt : traces) {
    const auto& trace = tt.trace;
    std::optional<std::size_t> prompt;
    if (config.prompt_id) {
      const auto it = std::find_if(trace.metas.begin(), trace.metas.end(),
                                   [&](const auto& m) { return m.prompt_id == *config.prompt_id; });
      if (it == trace.metas.end()) {
        status.warnings.push_back("prompt '" + *config.prompt_id + "' not in " + tt.question_type);
        continue;
      }
      prompt = static_cast<std::size_t>(it - trace.metas.begin());
    }
    const auto bundle = find_categories(config, tt.question_type, status);
    auto label = [&](const std::string& set, std::size_t i, TokenId id) {
      if (bundle && set == "A1" && i < bundle->a1.size()) return bundle->a1.members[i].term;
      if (bundle && set == "A2" && i < bundle->a2.size()) return bundle->a2.members[i].term;
      return std::to_string(id);
    };

    CsvWriter csv(dir / (tt.question_type + ".csv"), provenance,
                  {"token", "layer", "mean", "stderr", "set_label"});
    for (const auto& set : trace.header.tracked_sets) {
      if (set.label == "TOPK") continue;
      for (std::size_t i = 0; i < set.token_ids.size(); ++i) {
        const auto curve = layer_series(trace, set.token_ids[i], prompt);
        // layer_series resolves the first set holding the id; only emit own rows
        if (curve.set_label != set.label) continue;
        for (Eigen::Index l = 0; l < curve.mean.size(); ++l)
          csv.row({label(set.label, i, set.token_ids[i]), std::to_string(l), num(curve.mean[l]),
                   num(curve.stderr_[l]), set.label});
      }
    }
    status.outputs.push_back(dir / (tt.question_type + ".csv"));

    if (bundle) {
      const auto index = answer_index_for(*bundle, trace);
      const std::size_t layer = reading_layer(config, trace);
      const std::size_t k = std::min(config.top_k, index.size());
      const auto pairs = top_pair_curves(trace, index, layer, k, prompt);
      CsvWriter top(dir / (tt.question_type + "_top_pairs.csv"), provenance,
                    {"rank", "a1_token", "a2_token", "layer", "a1_mean", "a1_stderr", "a2_mean",
                     "a2_stderr"});
      for (std::size_t r = 0; r < pairs.size(); ++r) {
        const auto& p = pairs[r];
        for (Eigen::Index l = 0; l < p.a1.mean.size(); ++l)
          top.row({std::to_string(r), bundle->a1.members[p.a1_column].term,
                   bundle->a2.members[p.a2_column].term, std::to_string(l), num(p.a1.mean[l]),
                   num(p.a1.stderr_[l]), num(p.a2.mean[l]), num(p.a2.stderr_[l])});
      }
      status.outputs.push_back(dir / (tt.question_type + "_top_pairs.csv"));
    }
  }
  return status;
}

RunStatus cmd_intervene(const RunConfig& config) {
  config.check();
  if (!config.interventions) throw Error("intervene needs --input <records.jsonl>");
  RunStatus status;
  const auto records = read_intervention_records(*config.interventions);
  const auto curve = intervention_curve(records);
  if (!curve.empty()) {
    const std::size_t first = curve.begin()->first;
    const std::size_t last = curve.rbegin()->first;
    for (std::size_t l = std::max<std::size_t>(first, 1); l <= last; ++l)
      if (!curve.contains(l))
        status.warnings.push_back("no intervention records for layer " + std::to_string(l));
  }
  fs::create_directories(config.out_dir);
  const auto path = config.out_dir / "intervention_curve.csv";
  CsvWriter csv(path, provenance_line(config), {"layer", "mean_score", "stderr", "n"});
  for (const auto& [layer, point] : curve)
    csv.row({std::to_string(layer), num(point.mean), num(point.stderr_), std::to_string(point.n)});
  status.outputs.push_back(path);
  status.summary.push_back(std::to_string(records.size()) + " records over " +
                           std::to_string(curve.size()) + " layers");
  return status;
}

bool cmd_validate(const std::vector<fs::path>& paths, RunStatus& status) {
  bool all_ok = true;
  for (const auto& path : paths) {
    try {
      const auto report = validate_trace(load_trace(path));
      if (report.ok()) {
        status.summary.push_back("OK " + path.string());
      } else {
        all_ok = false;
        status.summary.push_back("INVALID " + path.string() + "\n" + format_report(report));
      }
    } catch (const Error& e) {
      all_ok = false;
      status.summary.push_back("INVALID " + path.string() + ": " + e.what());
    }
  }
  return all_ok;
}

}  // namespace hoplens
