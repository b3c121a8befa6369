#include "hoplens/rank_correlation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "hoplens/activation.hpp"

namespace hoplens {

std::string to_string(PValueMethod method) {
  return method == PValueMethod::kExact ? "exact" : "t-approx";
}

Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& values) {
  const auto n = static_cast<std::size_t>(values.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  Eigen::VectorXd ranks(values.size());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

namespace {

struct RankStats {
  Eigen::VectorXd rx;
  Eigen::VectorXd ry;
  double mean = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
};

RankStats rank_stats(const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& y) {
  RankStats s{average_ranks(x), average_ranks(y)};
  s.mean = 0.5 * static_cast<double>(x.size() + 1);
  s.sxx = (s.rx.array() - s.mean).square().sum();
  s.syy = (s.ry.array() - s.mean).square().sum();
  return s;
}

bool untied(const Eigen::VectorXd& ranks) {
  std::vector<double> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i)
    if (sorted[i] != static_cast<double>(i + 1)) return false;
  return true;
}

// Histogram of sum_i i * pi(i) over all permutations pi of 1..n.
const std::vector<std::uint64_t>& untied_null_distribution(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::vector<std::uint64_t>> cache;
  std::lock_guard lock(mutex);
  auto& hist = cache[n];
  if (!hist.empty()) return hist;
  hist.assign(n * (n + 1) * (2 * n + 1) / 6 + 1, 0);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 1);
  do {
    std::size_t t = 0;
    for (std::size_t i = 0; i < n; ++i) t += (i + 1) * perm[i];
    ++hist[t];
  } while (std::next_permutation(perm.begin(), perm.end()));
  return hist;
}

bool at_least_as_extreme(double rho_perm, double rho_obs) {
  return std::abs(rho_perm) >= std::abs(rho_obs) - 1e-12;
}

}  // namespace

double exact_spearman_p(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y) {
  const auto n = static_cast<std::size_t>(x.size());
  if (n > kMaxExactPermutationN)
    throw Error("exact Spearman p-value limited to n <= " +
                std::to_string(kMaxExactPermutationN) + ", got " + std::to_string(n));
  const auto s = rank_stats(x, y);
  const double denom = std::sqrt(s.sxx * s.syy);
  if (!(denom > 0.0)) throw Error("exact Spearman p-value undefined for zero-variance input");
  const double nm2 = static_cast<double>(n) * s.mean * s.mean;
  const double rho_obs = (s.rx.dot(s.ry) - nm2) / denom;

  std::uint64_t extreme = 0;
  std::uint64_t total = 0;
  if (untied(s.rx) && untied(s.ry)) {
    const auto& hist = untied_null_distribution(n);
    for (std::size_t t = 0; t < hist.size(); ++t) {
      if (hist[t] == 0) continue;
      total += hist[t];
      if (at_least_as_extreme((static_cast<double>(t) - nm2) / denom, rho_obs)) extreme += hist[t];
    }
  } else {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      double t = 0.0;
      for (std::size_t i = 0; i < n; ++i) t += s.rx[i] * s.ry[perm[i]];
      ++total;
      if (at_least_as_extreme((t - nm2) / denom, rho_obs)) ++extreme;
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return static_cast<double>(extreme) / static_cast<double>(total);
}

double t_approx_spearman_p(double rho, std::size_t n) {
  if (n < 3) throw Error("Spearman needs n >= 3");
  if (std::abs(rho) >= 1.0) return 0.0;
  const double dof = static_cast<double>(n - 2);
  const double t = rho * std::sqrt(dof / ((1.0 - rho) * (1.0 + rho)));
  const boost::math::students_t_distribution<double> dist(dof);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

SpearmanResult spearman(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y,
                        std::optional<PValueMethod> method) {
  const auto n = static_cast<std::size_t>(x.size());
  if (static_cast<std::size_t>(y.size()) != n) throw Error("spearman: length mismatch");
  if (n < 3) throw Error("spearman needs n >= 3, got " + std::to_string(n));

  SpearmanResult result;
  result.method = method.value_or(n <= kMaxExactPermutationN ? PValueMethod::kExact
                                                             : PValueMethod::kTApprox);
  const auto s = rank_stats(x, y);
  if (!(s.sxx > 0.0) || !(s.syy > 0.0)) {
    result.defined = false;
    result.rho = std::numeric_limits<double>::quiet_NaN();
    result.p_value = std::numeric_limits<double>::quiet_NaN();
    return result;
  }
  const double cov = (s.rx.array() - s.mean).matrix().dot((s.ry.array() - s.mean).matrix());
  result.rho = std::clamp(cov / std::sqrt(s.sxx * s.syy), -1.0, 1.0);
  result.p_value = result.method == PValueMethod::kExact ? exact_spearman_p(x, y)
                                                         : t_approx_spearman_p(result.rho, n);
  return result;
}

std::string significance_stars(double p_value) {
  if (!(p_value >= 0.0)) return "";
  if (p_value < 0.001) return "***";
  if (p_value < 0.01) return "**";
  if (p_value < 0.05) return "*";
  return "";
}

SortedPair build_s1_s2(const Eigen::Ref<const Eigen::VectorXd>& a1_row,
                       const Eigen::Ref<const Eigen::VectorXd>& a2_final_row,
                       std::span<const std::size_t> answer_index) {
  const auto c1 = static_cast<std::size_t>(a1_row.size());
  if (answer_index.size() != c1)
    throw Error("answer map covers " + std::to_string(answer_index.size()) +
                " A1 members, row has " + std::to_string(c1));
  SortedPair out;
  out.order.resize(c1);
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](std::size_t a, std::size_t b) { return a1_row[a] > a1_row[b]; });
  out.s1.resize(a1_row.size());
  out.s2.resize(a1_row.size());
  for (std::size_t i = 0; i < c1; ++i) {
    const std::size_t member = out.order[i];
    const std::size_t image = answer_index[member];
    if (image >= static_cast<std::size_t>(a2_final_row.size()))
      throw Error("answer map image outside the A2 row");
    out.s1[i] = a1_row[member];
    out.s2[i] = a2_final_row[image];
  }
  return out;
}

RankPattern average_pattern(std::span<const SortedPair> pairs, std::size_t top_k) {
  if (pairs.empty()) throw Error("average_pattern needs at least one prompt");
  const auto c1 = pairs.front().s1.size();
  if (top_k > static_cast<std::size_t>(c1))
    throw Error("top_k = " + std::to_string(top_k) + " exceeds category size " +
                std::to_string(c1));
  RankPattern pattern;
  pattern.top_k = top_k;
  pattern.n_prompts = pairs.size();
  pattern.s1_mean = Eigen::VectorXd::Zero(c1);
  pattern.s2_mean = Eigen::VectorXd::Zero(c1);
  for (const auto& p : pairs) {
    if (p.s1.size() != c1 || p.s2.size() != c1) throw Error("average_pattern: length mismatch");
    pattern.s1_mean += p.s1;
    pattern.s2_mean += p.s2;
  }
  pattern.s1_mean /= static_cast<double>(pairs.size());
  pattern.s2_mean /= static_cast<double>(pairs.size());
  return pattern;
}

void correlate(RankPattern& pattern, std::optional<PValueMethod> method) {
  const auto k = static_cast<Eigen::Index>(pattern.top_k);
  pattern.correlation = spearman(pattern.s1_mean.head(k), pattern.s2_mean.head(k), method);
}

RankPattern rank_pattern(const ActivationTrace& trace, std::span<const std::size_t> answer_index,
                         std::size_t layer, std::size_t top_k, std::optional<PValueMethod> method) {
  const auto a1 = category_activations(trace, "A1", layer);
  const auto a2 = category_activations(trace, "A2", trace.header.n_layers);
  std::vector<SortedPair> pairs;
  pairs.reserve(static_cast<std::size_t>(a1.values.rows()));
  for (Eigen::Index i = 0; i < a1.values.rows(); ++i)
    pairs.push_back(build_s1_s2(a1.values.row(i).transpose().cast<double>(),
                                a2.values.row(i).transpose().cast<double>(), answer_index));
  auto pattern = average_pattern(pairs, top_k);
  pattern.question_type = a1.question_type;
  pattern.layer = layer;
  correlate(pattern, method);
  return pattern;
}

}  // namespace hoplens
