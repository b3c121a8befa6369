#include "hoplens/intervention.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hoplens {

double intervention_score(const InterventionRecord& record) {
  if (!(record.baseline_prob > 0.0 && record.baseline_prob <= 1.0))
    throw Error("intervention record '" + record.prompt_id + "': baseline probability must be in (0, 1]");
  if (!(record.prob >= 0.0 && record.prob <= 1.0))
    throw Error("intervention record '" + record.prompt_id + "': probability must be in [0, 1]");
  return 1.0 - record.prob / record.baseline_prob;
}

std::map<std::size_t, InterventionPoint> intervention_curve(
    std::span<const InterventionRecord> records) {
  struct Acc {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n = 0;
  };
  std::map<std::size_t, Acc> acc;
  for (const auto& r : records) {
    const double s = intervention_score(r);
    auto& a = acc[r.layer];
    a.sum += s;
    a.sum_sq += s * s;
    ++a.n;
  }
  std::map<std::size_t, InterventionPoint> curve;
  for (const auto& [layer, a] : acc) {
    const double n = static_cast<double>(a.n);
    const double mean = a.sum / n;
    const double var = std::max(0.0, a.sum_sq / n - mean * mean);
    curve[layer] = {mean, std::sqrt(var) / std::sqrt(n), a.n};
  }
  return curve;
}

std::vector<InterventionRecord> parse_intervention_records(std::istream& in) {
  std::vector<InterventionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      records.push_back({j.at("prompt_id").get<std::string>(), j.at("layer").get<std::size_t>(),
                         j.at("baseline_prob").get<double>(), j.at("prob").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error("intervention record line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      intervention_score(records.back());
    } catch (const Error& e) {
      throw Error("intervention record line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

std::vector<InterventionRecord> read_intervention_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open intervention records '" + path.string() + "'");
  return parse_intervention_records(in);
}

}  // namespace hoplens
