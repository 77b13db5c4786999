#pragma once

// Downstream classifiers and the accuracy / precision / recall / F1 suite.
// Logistic regression and the MLP are differentiable and can serve as the
// frozen gradient surrogate while the weighter trains.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfwt/data_io.hpp"
#include "tfwt/numerics.hpp"

namespace tfwt {

enum class ModelKind { logistic_regression, gaussian_nb, knn, mlp, forest };

std::string to_string(ModelKind k);
/// Accepts the long names and the short forms lr, nb, knn, mlp, rf.
ModelKind model_kind_from_string(const std::string& s);

struct ModelOptions {
  std::uint64_t seed = 0;
  double l2 = 1.0;  // logistic regression penalty on the summed loss
  std::size_t knn_k = 5;
  std::size_t forest_trees = 50;
  std::size_t forest_depth = 8;
  std::size_t mlp_hidden = 64;
  std::size_t mlp_epochs = 200;
  std::size_t mlp_patience = 10;
  double mlp_lr = 1e-3;
};

class DownstreamModel {
 public:
  virtual ~DownstreamModel() = default;

  virtual ModelKind kind() const = 0;
  /// n x C class probabilities; rows sum to 1.
  virtual Matrix predict_proba(const Matrix& x) const = 0;
  virtual bool differentiable() const { return false; }
  /// Logits [n, C] recorded on `t`, with the model's own parameters frozen.
  virtual Tensor logits(Tape& t, const Tensor& x) const;

  virtual std::vector<int> predict(const Matrix& x) const;
  std::size_t num_features() const { return num_features_; }
  std::size_t num_classes() const { return num_classes_; }

 protected:
  void check_input(const Matrix& x) const;
  std::size_t num_features_ = 0;
  std::size_t num_classes_ = 0;
};

/// Fits `kind` on (x, y) with classes 0..num_classes-1. Throws FitError when
/// fewer than two classes are present.
std::unique_ptr<DownstreamModel> fit(ModelKind kind, const Matrix& x, std::span<const int> y, std::size_t num_classes,
                                     const ModelOptions& opt = {});

class LogisticRegression final : public DownstreamModel {
 public:
  /// Multinomial model with class 0 as reference, fitted by damped Newton.
  static std::unique_ptr<LogisticRegression> train(const Matrix& x, std::span<const int> y, std::size_t num_classes,
                                                   double l2);
  ModelKind kind() const override { return ModelKind::logistic_regression; }
  Matrix predict_proba(const Matrix& x) const override;
  bool differentiable() const override { return true; }
  Tensor logits(Tape& t, const Tensor& x) const override;

  const Matrix& coef() const { return coef_; }  // P x C, column 0 is zero
  const Vector& intercept() const { return intercept_; }

 private:
  Matrix coef_;
  Vector intercept_;
  Tensor coef_t_, intercept_t_;
};

struct Metrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  std::vector<std::string> warnings;
  nlohmann::json to_json() const;
};

/// Macro-averaged metrics from predictions. A class with no predicted
/// samples gets precision 0 and a warning.
Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred, std::size_t num_classes);

/// Predicts and scores; throws SchemaError when x's width differs from training.
Metrics evaluate(const DownstreamModel& model, const Matrix& x, std::span<const int> y);

struct MetricSummary {
  double mean = 0, stddev = 0;  // population standard deviation
  std::vector<double> values;
};

struct MetricsAggregate {
  MetricSummary accuracy, precision, recall, f1;
  nlohmann::json to_json() const;
};

/// Requires at least two runs.
MetricsAggregate compare(std::span<const Metrics> runs);

/// Rank-based area under the ROC curve for binary labels (ties get half credit).
double roc_auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace tfwt
