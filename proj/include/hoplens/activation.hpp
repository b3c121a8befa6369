#pragma once

// Slicing of traces into category activation vectors and per-layer curves.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hoplens/trace_format.hpp"

namespace hoplens {

/// floor(2L/3): the "two-thirds of the depth" reading layer.
constexpr std::size_t two_thirds_layer(std::size_t n_layers) { return 2 * n_layers / 3; }
constexpr std::size_t half_layer(std::size_t n_layers) { return n_layers / 2; }

/// Question type of the prompts in a trace (first prompt; empty when none).
std::string trace_question_type(const ActivationTrace& trace);

struct CategoryActivationMatrix {
  std::string question_type;
  std::size_t layer = 0;
  std::string set_label;
  RowMatrixXf values;  // [n_prompts x category size], tracked-set order
};

CategoryActivationMatrix category_activations(const ActivationTrace& trace,
                                              std::string_view set_label, std::size_t layer);

struct LayerCurve {
  std::string set_label;
  TokenId token = 0;
  Eigen::VectorXd mean;     // [n_stored_layers]
  Eigen::VectorXd stderr_;  // population stddev / sqrt(n)
};

/// Mean and standard error of one tracked token across prompts, per layer.
/// With `prompt` set, the curve of that single prompt (zero error bars).
LayerCurve layer_series(const ActivationTrace& trace, TokenId token,
                        std::optional<std::size_t> prompt = std::nullopt);

struct CurvePair {
  std::size_t a1_column = 0;
  std::size_t a2_column = 0;
  double a1_mean_at_layer = 0.0;
  LayerCurve a1;
  LayerCurve a2;
};

/// The k A1 members with the largest dataset-mean activation at `layer`
/// (ties by member order), each paired with the curve of its mapped A2 member.
/// `answer_index[j]` is the A2 column of A1 member j.
std::vector<CurvePair> top_pair_curves(const ActivationTrace& trace,
                                       std::span<const std::size_t> answer_index,
                                       std::size_t layer, std::size_t k,
                                       std::optional<std::size_t> prompt = std::nullopt);

}  // namespace hoplens
