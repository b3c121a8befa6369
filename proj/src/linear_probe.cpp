#include "hoplens/linear_probe.hpp"

#include "hoplens/parallel.hpp"

namespace hoplens {

ProbeData probe_data(const ActivationTrace& trace, std::string_view predictor_set,
                     std::size_t layer) {
  return {category_activations(trace, predictor_set, layer),
          category_activations(trace, "A2", trace.header.n_layers)};
}

R2Report probe_layer(const ActivationTrace& trace, std::string_view predictor_set,
                     std::size_t layer, const KFoldOptions& options) {
  const auto data = probe_data(trace, predictor_set, layer);
  auto report = kfold_r2(data.predictors.values.cast<double>(), data.targets.values.cast<double>(),
                         options);
  report.question_type = data.predictors.question_type;
  report.predictor = {std::string(predictor_set), layer};
  return report;
}

std::vector<R2Report> layer_sweep(const ActivationTrace& trace, std::string_view predictor_set,
                                  const SweepOptions& options) {
  if (!trace.header.find_set("A1") || !trace.header.find_set("A2"))
    throw Error("layer sweep needs both A1 and A2 tracked sets");
  const std::size_t last = trace.header.n_layers;
  if (options.first_layer > last) return {};
  std::vector<R2Report> reports(last - options.first_layer + 1);
  parallel_for(reports.size(), [&](std::size_t i) {
    reports[i] = probe_layer(trace, predictor_set, options.first_layer + i, options.kfold);
  });
  return reports;
}

R2Report generalize(const ProbeData& train, const ProbeData& test, const FitOptions& options) {
  if (train.predictors.values.cols() != test.predictors.values.cols() ||
      train.targets.values.cols() != test.targets.values.cols() ||
      train.predictors.layer != test.predictors.layer ||
      train.predictors.set_label != test.predictors.set_label ||
      train.targets.layer != test.targets.layer)
    throw Error("generalize: train and test use different category specs or layers");
  const auto model =
      fit(train.predictors.values.cast<double>(), train.targets.values.cast<double>(), options);
  const Eigen::MatrixXd pred = model.predict(test.predictors.values.cast<double>());
  auto report = r2_scores(test.targets.values.cast<double>(), pred);
  report.question_type = train.predictors.question_type;
  report.predictor = {train.predictors.set_label, train.predictors.layer};
  report.lambda = options.lambda;
  return report;
}

}  // namespace hoplens
