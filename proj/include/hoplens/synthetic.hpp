#pragma once

// Synthetic traces with a planted linear A1 -> A2 map.
//
// Per prompt a latent z ~ N(0, I_c1) is drawn. A1 activations equal z at every
// layer >= onset and are fresh N(0, 1) noise below it; final-layer A2 equals
// Q z + sigma * eps, every other A2 layer is noise. Reading A1 at any layer
// from the onset on therefore recovers the plant.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "hoplens/dataset.hpp"
#include "hoplens/trace_format.hpp"

namespace hoplens {

struct PlantSpec {
  std::size_t c1 = 20;
  std::size_t c2 = 10;
  std::size_t n_prompts = 500;
  std::size_t n_layers = 12;
  Eigen::MatrixXd planted_q;              // [c2 x c1]
  std::vector<std::size_t> answer_index;  // A2 member of each A1 member, [c1]
  std::size_t onset_layer = 6;            // 1 <= onset <= n_layers
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;
  std::string question_type = "synthetic";
  std::string model_id = "synthetic";
};

/// Plant where A1 member j maps to A2 member j mod c2 and every row of Q has
/// unit norm (equal weights on the members mapping to it). Onset defaults to
/// floor(L/2).
PlantSpec default_plant(std::size_t c1, std::size_t c2, std::size_t n_prompts,
                        std::size_t n_layers, double noise_sigma, std::uint64_t seed);

/// Population R^2 of the planted map: mean over rows of
/// ||q_j||^2 / (||q_j||^2 + sigma^2). Rows with zero norm and zero noise are skipped.
double expected_r2(const PlantSpec& spec);

struct SyntheticTrace {
  ActivationTrace trace;
  CategoryBundle categories;
  PlantSpec spec;
  std::size_t predictor_layer = 0;  // floor(2L/3)
  double expected_r2 = 0.0;
};

/// Deterministic in spec.seed. Throws on an invalid spec.
SyntheticTrace generate(const PlantSpec& spec);

/// Sidecar content written next to a synthetic trace.
nlohmann::json truth_json(const SyntheticTrace& synthetic);

}  // namespace hoplens
