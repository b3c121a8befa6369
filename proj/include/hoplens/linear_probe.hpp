#pragma once

// Linear maps from A1 category activations to final-layer A2 activations.
//
// fit() minimises ||Y - X B - 1 b^T||^2 + lambda ||B||^2 with an unpenalised
// intercept, solving the centred normal equations with an LDLT factorisation.
// With `standardize`, the penalty acts on unit-variance predictors and the
// weights are mapped back to the original scale.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include "hoplens/activation.hpp"
#include "hoplens/error.hpp"

namespace hoplens {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class RankDeficientError : public Error {
 public:
  using Error::Error;
};

struct PredictorLabel {
  std::string set_label;  // "A1" or "A2"
  std::size_t layer = 0;
};

template <typename Scalar = double>
struct LinearProbeModel {
  MatrixX<Scalar> weights;    // [m x p]: the Q2 matrix, c2 x c1
  VectorX<Scalar> intercept;  // [m]
  double lambda = 0.0;
  PredictorLabel predictor;
  std::string question_type;

  template <typename Derived>
  MatrixX<Scalar> predict(const Eigen::MatrixBase<Derived>& x) const {
    MatrixX<Scalar> out = x.template cast<Scalar>() * weights.transpose();
    out.rowwise() += intercept.transpose();
    return out;
  }
};

struct FitOptions {
  double lambda = 0.0;
  bool standardize = true;
  // Minimum-norm least squares instead of failing on a singular X^T X (lambda = 0 only).
  bool pseudo_inverse = false;
};

template <typename DerivedX, typename DerivedY>
LinearProbeModel<typename DerivedX::Scalar> fit(const Eigen::MatrixBase<DerivedX>& x_in,
                                                const Eigen::MatrixBase<DerivedY>& y_in,
                                                const FitOptions& options = {}) {
  using Scalar = typename DerivedX::Scalar;
  const MatrixX<Scalar> x = x_in;
  const MatrixX<Scalar> y = y_in.template cast<Scalar>();
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n < 2) throw Error("fit needs at least 2 samples, got " + std::to_string(n));
  if (y.rows() != n)
    throw Error("fit: X has " + std::to_string(n) + " rows but Y has " + std::to_string(y.rows()));
  if (!(options.lambda >= 0.0) || !std::isfinite(options.lambda))
    throw Error("fit: lambda must be finite and >= 0");
  if (!x.allFinite() || !y.allFinite()) throw Error("fit: non-finite input");

  const VectorX<Scalar> x_mean = x.colwise().mean().transpose();
  const VectorX<Scalar> y_mean = y.colwise().mean().transpose();
  MatrixX<Scalar> xc = x.rowwise() - x_mean.transpose();
  const MatrixX<Scalar> yc = y.rowwise() - y_mean.transpose();

  VectorX<Scalar> scale = VectorX<Scalar>::Ones(p);
  if (options.standardize) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const Scalar s = std::sqrt(xc.col(j).squaredNorm() / static_cast<Scalar>(n));
      if (s > Scalar(0)) scale[j] = s;
    }
    xc = xc * scale.cwiseInverse().asDiagonal();
  }

  MatrixX<Scalar> gram = xc.transpose() * xc;
  gram.diagonal().array() += static_cast<Scalar>(options.lambda);
  const MatrixX<Scalar> rhs = xc.transpose() * yc;

  MatrixX<Scalar> beta;
  const Eigen::LDLT<MatrixX<Scalar>> ldlt(gram);
  const Scalar tol = Scalar(100) * std::numeric_limits<Scalar>::epsilon();
  const bool singular =
      ldlt.info() != Eigen::Success || !ldlt.isPositive() || (p > 0 && !(ldlt.rcond() >= tol));
  if (!singular) {
    beta = ldlt.solve(rhs);
  } else if (options.pseudo_inverse && options.lambda == 0.0) {
    beta = xc.completeOrthogonalDecomposition().solve(yc);
  } else {
    throw RankDeficientError(
        "fit: X^T X is rank deficient; use lambda > 0 or the pseudo-inverse option");
  }
  beta = scale.cwiseInverse().asDiagonal() * beta;

  LinearProbeModel<Scalar> model;
  model.weights = beta.transpose();
  model.intercept = y_mean - model.weights * x_mean;
  model.lambda = options.lambda;
  return model;
}

struct R2Report {
  std::string question_type;
  PredictorLabel predictor;
  std::vector<double> per_target_r2;  // NaN where the target has zero variance
  double mean_r2 = std::numeric_limits<double>::quiet_NaN();
  double stderr_r2 = std::numeric_limits<double>::quiet_NaN();  // over defined targets
  std::size_t n_folds = 0;
  std::size_t n_samples = 0;
  std::size_t n_undefined = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
};

/// Per-target coefficient of determination of `pred` against `truth`,
/// 1 - SS_res / SS_tot with SS_tot around the column mean of `truth`.
template <typename DerivedT, typename DerivedP>
R2Report r2_scores(const Eigen::MatrixBase<DerivedT>& truth, const Eigen::MatrixBase<DerivedP>& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw Error("r2_scores: shape mismatch");
  R2Report report;
  report.n_samples = static_cast<std::size_t>(truth.rows());
  const Eigen::MatrixXd t = truth.template cast<double>();
  const Eigen::MatrixXd e = t - pred.template cast<double>();
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t defined = 0;
  for (Eigen::Index j = 0; j < t.cols(); ++j) {
    const double mean = t.col(j).mean();
    const double ss_tot = (t.col(j).array() - mean).square().sum();
    const double scale = std::max(1.0, t.col(j).squaredNorm());
    if (!(ss_tot > 1e-24 * scale)) {
      report.per_target_r2.push_back(std::numeric_limits<double>::quiet_NaN());
      ++report.n_undefined;
      continue;
    }
    const double r2 = 1.0 - e.col(j).squaredNorm() / ss_tot;
    report.per_target_r2.push_back(r2);
    sum += r2;
    sum_sq += r2 * r2;
    ++defined;
  }
  if (defined > 0) {
    const double d = static_cast<double>(defined);
    report.mean_r2 = sum / d;
    const double var = std::max(0.0, sum_sq / d - report.mean_r2 * report.mean_r2);
    report.stderr_r2 = std::sqrt(var) / std::sqrt(d);
  }
  return report;
}

struct KFoldOptions {
  std::size_t k = 5;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  bool standardize = true;
  bool pseudo_inverse = false;
};

/// Fold of every sample: seeded uniform shuffle, then k contiguous blocks
/// (the first n mod k blocks one sample larger).
inline std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || n < k)
    throw Error("k-fold needs n >= k >= 2, got n = " + std::to_string(n) + ", k = " +
                std::to_string(k));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold(n);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) fold[order[pos++]] = f;
  }
  return fold;
}

/// Out-of-fold predictions pooled over all folds, [n x m].
template <typename DerivedX, typename DerivedY>
MatrixX<typename DerivedX::Scalar> kfold_predict(const Eigen::MatrixBase<DerivedX>& x_in,
                                                 const Eigen::MatrixBase<DerivedY>& y_in,
                                                 const KFoldOptions& options = {}) {
  using Scalar = typename DerivedX::Scalar;
  const MatrixX<Scalar> x = x_in;
  const MatrixX<Scalar> y = y_in.template cast<Scalar>();
  const auto n = static_cast<std::size_t>(x.rows());
  const auto fold = fold_assignment(n, options.k, options.seed);
  MatrixX<Scalar> pred(x.rows(), y.cols());
  const FitOptions fit_options{options.lambda, options.standardize, options.pseudo_inverse};
  for (std::size_t f = 0; f < options.k; ++f) {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
    for (std::size_t i = 0; i < n; ++i)
      (fold[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
    const MatrixX<Scalar> x_train = x(train, Eigen::all);
    const MatrixX<Scalar> y_train = y(train, Eigen::all);
    const auto model = fit(x_train, y_train, fit_options);
    pred(test, Eigen::all) = model.predict(x(test, Eigen::all));
  }
  return pred;
}

template <typename DerivedX, typename DerivedY>
R2Report kfold_r2(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                  const KFoldOptions& options = {}) {
  const auto pred = kfold_predict(x, y, options);
  R2Report report = r2_scores(y, pred);
  report.n_folds = options.k;
  report.lambda = options.lambda;
  report.seed = options.seed;
  return report;
}

// Trace-level drivers (double precision internally).

struct SweepOptions {
  KFoldOptions kfold;
  std::size_t first_layer = 1;  // layer 0 (embeddings) is skipped by default
};

/// One R2Report per layer l in [first_layer, L]: predictors are `predictor_set`
/// activations at l, targets are A2 activations at the final layer.
std::vector<R2Report> layer_sweep(const ActivationTrace& trace, std::string_view predictor_set,
                                  const SweepOptions& options = {});

/// kfold_r2 of (predictor_set at layer) -> final-layer A2.
R2Report probe_layer(const ActivationTrace& trace, std::string_view predictor_set,
                     std::size_t layer, const KFoldOptions& options = {});

struct ProbeData {
  CategoryActivationMatrix predictors;  // A1 at the reading layer
  CategoryActivationMatrix targets;     // A2 at the final layer
};

ProbeData probe_data(const ActivationTrace& trace, std::string_view predictor_set,
                     std::size_t layer);

/// Fit once on `train` (ridge), score per-target R^2 on `test` without refitting.
R2Report generalize(const ProbeData& train, const ProbeData& test, const FitOptions& options);

}  // namespace hoplens
