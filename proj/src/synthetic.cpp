#include "hoplens/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <nlohmann/json.hpp>

#include "hoplens/activation.hpp"

namespace hoplens {

namespace {

std::string member_name(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%03zu", prefix, i);
  return buf;
}

std::string numbered(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return prefix + "-" + buf;
}

void check(const PlantSpec& s) {
  if (s.c1 < 2 || s.c2 < 2) throw Error("plant needs c1, c2 >= 2");
  if (s.n_layers < 1) throw Error("plant needs at least one layer");
  if (s.onset_layer < 1 || s.onset_layer > s.n_layers)
    throw Error("onset layer must lie in [1, " + std::to_string(s.n_layers) + "]");
  if (s.planted_q.rows() != static_cast<Eigen::Index>(s.c2) ||
      s.planted_q.cols() != static_cast<Eigen::Index>(s.c1))
    throw Error("planted Q must be c2 x c1");
  if (!s.planted_q.allFinite()) throw Error("planted Q must be finite");
  if (!(s.noise_sigma >= 0.0)) throw Error("noise sigma must be >= 0");
  if (s.answer_index.size() != s.c1) throw Error("answer index must cover every A1 member");
  for (auto j : s.answer_index)
    if (j >= s.c2) throw Error("answer index outside A2");
}

}  // namespace

PlantSpec default_plant(std::size_t c1, std::size_t c2, std::size_t n_prompts,
                        std::size_t n_layers, double noise_sigma, std::uint64_t seed) {
  PlantSpec spec;
  spec.c1 = c1;
  spec.c2 = c2;
  spec.n_prompts = n_prompts;
  spec.n_layers = n_layers;
  spec.noise_sigma = noise_sigma;
  spec.seed = seed;
  spec.onset_layer = std::max<std::size_t>(1, n_layers / 2);
  spec.planted_q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c2), static_cast<Eigen::Index>(c1));
  spec.answer_index.resize(c1);
  for (std::size_t j = 0; j < c1; ++j) {
    spec.answer_index[j] = j % c2;
    spec.planted_q(static_cast<Eigen::Index>(j % c2), static_cast<Eigen::Index>(j)) = 1.0;
  }
  for (Eigen::Index r = 0; r < spec.planted_q.rows(); ++r) {
    const double norm = spec.planted_q.row(r).norm();
    if (norm > 0.0) spec.planted_q.row(r) /= norm;
  }
  return spec;
}

double expected_r2(const PlantSpec& spec) {
  const double noise = spec.noise_sigma * spec.noise_sigma;
  double sum = 0.0;
  std::size_t rows = 0;
  for (Eigen::Index r = 0; r < spec.planted_q.rows(); ++r) {
    const double signal = spec.planted_q.row(r).squaredNorm();
    if (signal + noise == 0.0) continue;
    sum += signal / (signal + noise);
    ++rows;
  }
  return rows ? sum / static_cast<double>(rows) : 0.0;
}

SyntheticTrace generate(const PlantSpec& spec) {
  check(spec);
  const std::size_t c1 = spec.c1;
  const std::size_t c2 = spec.c2;
  const std::size_t n_stored = spec.n_layers + 1;

  SyntheticTrace out;
  out.spec = spec;
  out.predictor_layer = two_thirds_layer(spec.n_layers);
  out.expected_r2 = expected_r2(spec);

  auto& h = out.trace.header;
  h.model_id = spec.model_id;
  h.n_layers = static_cast<std::uint32_t>(spec.n_layers);
  h.n_stored_layers = static_cast<std::uint32_t>(n_stored);
  h.vocab_size = static_cast<std::uint32_t>(c1 + c2);
  h.n_prompts = static_cast<std::uint32_t>(spec.n_prompts);
  TrackedSet a1{"A1", {}};
  TrackedSet a2{"A2", {}};
  for (std::size_t j = 0; j < c1; ++j) a1.token_ids.push_back(static_cast<TokenId>(j));
  for (std::size_t j = 0; j < c2; ++j) a2.token_ids.push_back(static_cast<TokenId>(c1 + j));
  h.tracked_sets = {a1, a2};
  h.metadata["generator"] = "synthetic plant";
  h.metadata["onset_layer"] = std::to_string(spec.onset_layer);

  out.trace.tensor = ActivationTensor(spec.n_prompts, n_stored, c1 + c2);
  auto& t = out.trace.tensor;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(static_cast<Eigen::Index>(c1));
  Eigen::VectorXd eps(static_cast<Eigen::Index>(c2));

  for (std::size_t p = 0; p < spec.n_prompts; ++p) {
    for (auto& v : z) v = normal(rng);
    for (auto& v : eps) v = normal(rng);
    const Eigen::VectorXd final_a2 = spec.planted_q * z + spec.noise_sigma * eps;
    for (std::size_t l = 0; l < n_stored; ++l) {
      for (std::size_t j = 0; j < c1; ++j)
        t(p, l, j) = static_cast<float>(l >= spec.onset_layer ? z[static_cast<Eigen::Index>(j)]
                                                              : normal(rng));
      for (std::size_t j = 0; j < c2; ++j)
        t(p, l, c1 + j) = static_cast<float>(
            l == spec.n_layers ? final_a2[static_cast<Eigen::Index>(j)] : normal(rng));
    }
    Eigen::Index a1_best = 0;
    Eigen::Index a2_best = 0;
    z.maxCoeff(&a1_best);
    final_a2.maxCoeff(&a2_best);
    PromptTraceMeta meta;
    meta.prompt_id = numbered(spec.question_type, p);
    meta.question_type = spec.question_type;
    meta.subject = numbered("subject", p);
    meta.gold_a1_token = static_cast<TokenId>(a1_best);
    meta.gold_a2_token = static_cast<TokenId>(c1 + static_cast<std::size_t>(a2_best));
    out.trace.metas.push_back(std::move(meta));
  }

  auto& cat = out.categories;
  cat.question_type = spec.question_type;
  cat.a1.name = "synthetic_a1";
  cat.a2.name = "synthetic_a2";
  for (std::size_t j = 0; j < c1; ++j) cat.a1.members.push_back({member_name('a', j), member_name('a', j)});
  for (std::size_t j = 0; j < c2; ++j) cat.a2.members.push_back({member_name('b', j), member_name('b', j)});
  cat.map.question_type = spec.question_type;
  for (std::size_t j = 0; j < c1; ++j)
    cat.map.mapping[cat.a1.members[j].term] = cat.a2.members[spec.answer_index[j]].term;
  return out;
}

nlohmann::json truth_json(const SyntheticTrace& s) {
  std::vector<std::vector<double>> q;
  for (Eigen::Index r = 0; r < s.spec.planted_q.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(s.spec.planted_q.cols()));
    for (Eigen::Index c = 0; c < s.spec.planted_q.cols(); ++c)
      row[static_cast<std::size_t>(c)] = s.spec.planted_q(r, c);
    q.push_back(std::move(row));
  }
  return {{"question_type", s.spec.question_type},
          {"c1", s.spec.c1},
          {"c2", s.spec.c2},
          {"n_prompts", s.spec.n_prompts},
          {"n_layers", s.spec.n_layers},
          {"onset_layer", s.spec.onset_layer},
          {"noise_sigma", s.spec.noise_sigma},
          {"seed", s.spec.seed},
          {"predictor_layer", s.predictor_layer},
          {"expected_r2", s.expected_r2},
          {"answer_index", s.spec.answer_index},
          {"planted_q", q}};
}

}  // namespace hoplens
