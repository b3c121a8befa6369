#include "hoplens/activation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hoplens {

std::string trace_question_type(const ActivationTrace& trace) {
  return trace.metas.empty() ? std::string{} : trace.metas.front().question_type;
}

CategoryActivationMatrix category_activations(const ActivationTrace& trace,
                                              std::string_view set_label, std::size_t layer) {
  const auto& h = trace.header;
  const auto* set = h.find_set(set_label);
  if (!set) throw Error("trace has no tracked set '" + std::string(set_label) + "'");
  if (layer >= trace.tensor.n_layers())
    throw Error("layer " + std::to_string(layer) + " outside [0, " +
                std::to_string(h.n_layers) + "]");
  const auto offset = static_cast<Eigen::Index>(*h.set_offset(set_label));
  CategoryActivationMatrix out;
  out.question_type = trace_question_type(trace);
  out.layer = layer;
  out.set_label = std::string(set_label);
  out.values = trace.tensor.layer(layer).middleCols(offset,
                                                    static_cast<Eigen::Index>(set->token_ids.size()));
  return out;
}

namespace {

struct Column {
  std::string set_label;
  std::size_t index;  // flat column in the tracked axis
  TokenId token;
};

Column locate(const TraceHeader& h, TokenId token) {
  std::size_t offset = 0;
  for (const auto& set : h.tracked_sets) {
    for (std::size_t i = 0; i < set.token_ids.size(); ++i)
      if (set.token_ids[i] == token) return {set.label, offset + i, token};
    offset += set.token_ids.size();
  }
  throw Error("token " + std::to_string(token) + " is not tracked");
}

Column set_column(const TraceHeader& h, std::string_view label, std::size_t i) {
  const auto* set = h.find_set(label);
  if (!set) throw Error("trace has no tracked set '" + std::string(label) + "'");
  if (i >= set->token_ids.size())
    throw Error("column " + std::to_string(i) + " outside tracked set '" + std::string(label) + "'");
  return {std::string(label), *h.set_offset(label) + i, set->token_ids[i]};
}

LayerCurve column_curve(const ActivationTrace& trace, const Column& col,
                        std::optional<std::size_t> prompt) {
  const auto& t = trace.tensor;
  const std::size_t n_layers = t.n_layers();
  LayerCurve curve{col.set_label, col.token, Eigen::VectorXd::Zero(n_layers),
                   Eigen::VectorXd::Zero(n_layers)};
  if (prompt) {
    if (*prompt >= t.n_prompts()) throw Error("prompt index out of range");
    for (std::size_t l = 0; l < n_layers; ++l) curve.mean[l] = t(*prompt, l, col.index);
    return curve;
  }
  if (t.n_prompts() == 0) throw Error("trace has no prompts");
  const auto n = static_cast<double>(t.n_prompts());
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Eigen::VectorXd x = t.layer(l).col(static_cast<Eigen::Index>(col.index)).cast<double>();
    const double mean = x.mean();
    const double var = (x.array() - mean).square().sum() / n;
    curve.mean[l] = mean;
    curve.stderr_[l] = std::sqrt(var) / std::sqrt(n);
  }
  return curve;
}

}  // namespace

LayerCurve layer_series(const ActivationTrace& trace, TokenId token,
                        std::optional<std::size_t> prompt) {
  return column_curve(trace, locate(trace.header, token), prompt);
}

std::vector<CurvePair> top_pair_curves(const ActivationTrace& trace,
                                       std::span<const std::size_t> answer_index,
                                       std::size_t layer, std::size_t k,
                                       std::optional<std::size_t> prompt) {
  const auto a1 = category_activations(trace, "A1", layer);
  const auto c1 = static_cast<std::size_t>(a1.values.cols());
  if (k > c1) throw Error("k = " + std::to_string(k) + " exceeds A1 size " + std::to_string(c1));
  if (answer_index.size() != c1)
    throw Error("answer map covers " + std::to_string(answer_index.size()) +
                " A1 members, trace tracks " + std::to_string(c1));

  Eigen::VectorXd means;
  if (prompt) {
    if (*prompt >= static_cast<std::size_t>(a1.values.rows()))
      throw Error("prompt index out of range");
    means = a1.values.row(static_cast<Eigen::Index>(*prompt)).transpose().cast<double>();
  } else {
    means = a1.values.cast<double>().colwise().mean().transpose();
  }
  std::vector<std::size_t> order(c1);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return means[a] > means[b]; });

  std::vector<CurvePair> pairs;
  pairs.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t j = order[r];
    CurvePair pair;
    pair.a1_column = j;
    pair.a2_column = answer_index[j];
    pair.a1_mean_at_layer = means[static_cast<Eigen::Index>(j)];
    pair.a1 = column_curve(trace, set_column(trace.header, "A1", j), prompt);
    pair.a2 = column_curve(trace, set_column(trace.header, "A2", answer_index[j]), prompt);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace hoplens
