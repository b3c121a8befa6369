#pragma once

// S1/S2 rank patterns and Spearman correlation with exact or t-approximate
// p-values.
//
// S1 is a prompt's A1 activation row sorted in decreasing order; S2[i] is the
// final-layer activation of the A2 member that the answer map assigns to the
// A1 member at sorted position i.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hoplens/trace_format.hpp"

namespace hoplens {

inline constexpr std::size_t kMaxExactPermutationN = 10;
inline constexpr std::size_t kDefaultTopK = 10;

enum class PValueMethod { kExact, kTApprox };

std::string to_string(PValueMethod method);

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;
  PValueMethod method = PValueMethod::kExact;
  bool defined = true;  // false when either input has zero variance
};

/// 1-based ranks, ties receive the average of the ranks they span.
Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& values);

/// Two-sided Spearman test. Without an explicit method, exact enumeration is
/// used for n <= 10 and the t approximation above that. Requires n >= 3.
SpearmanResult spearman(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y,
                        std::optional<PValueMethod> method = std::nullopt);

/// Fraction of all n! rank permutations whose |rho| is at least |rho(x, y)|.
double exact_spearman_p(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y);

double t_approx_spearman_p(double rho, std::size_t n);

/// "***" for p < 0.001, "**" for p < 0.01, "*" for p < 0.05, otherwise "".
std::string significance_stars(double p_value);

struct SortedPair {
  Eigen::VectorXd s1;               // [c1]
  Eigen::VectorXd s2;               // [c1]
  std::vector<std::size_t> order;   // A1 member at each sorted position
};

/// Ties in a1_row keep A1 member order; S2 follows the same permutation.
SortedPair build_s1_s2(const Eigen::Ref<const Eigen::VectorXd>& a1_row,
                       const Eigen::Ref<const Eigen::VectorXd>& a2_final_row,
                       std::span<const std::size_t> answer_index);

struct RankPattern {
  std::string question_type;
  std::size_t layer = 0;
  Eigen::VectorXd s1_mean;
  Eigen::VectorXd s2_mean;
  std::size_t top_k = kDefaultTopK;
  std::size_t n_prompts = 0;
  SpearmanResult correlation;  // over the first top_k positions; filled by correlate()
};

/// Position-wise means of S1 and S2 over prompts. Throws when empty or when
/// top_k exceeds the vector length.
RankPattern average_pattern(std::span<const SortedPair> pairs, std::size_t top_k = kDefaultTopK);

/// Spearman between the first top_k entries of s1_mean and s2_mean.
void correlate(RankPattern& pattern, std::optional<PValueMethod> method = std::nullopt);

/// Full pipeline on a trace: A1 at `layer`, A2 at the final layer.
RankPattern rank_pattern(const ActivationTrace& trace, std::span<const std::size_t> answer_index,
                         std::size_t layer, std::size_t top_k = kDefaultTopK,
                         std::optional<PValueMethod> method = std::nullopt);

}  // namespace hoplens
