#pragma once

// Per-seed experiment steps shared by the command-line tool, the Python
// module and the acceptance suite: train, fine-tune, evaluate, report.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfwt/baselines.hpp"
#include "tfwt/downstream.hpp"
#include "tfwt/ppo.hpp"
#include "tfwt/redundancy.hpp"
#include "tfwt/weighting.hpp"

namespace tfwt {

struct ExperimentConfig {
  std::string dataset_path;
  std::string schema_path;
  std::string synthetic;  // gated | duplicated | independent; used when dataset_path is empty
  std::size_t synthetic_rows = 4000;
  double split_fraction = 0.7;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  EncoderConfig encoder;
  TrainConfig train;
  PPOConfig ppo;
  Discretizer discretizer;
  ModelKind surrogate = ModelKind::logistic_regression;
  std::vector<ModelKind> models{ModelKind::logistic_regression, ModelKind::gaussian_nb, ModelKind::knn,
                                ModelKind::mlp, ModelKind::forest};
  std::vector<BaselineKind> baselines{BaselineKind::usp, BaselineKind::lasso, BaselineKind::wb};
  std::optional<double> lasso_lambda;
  ModelOptions model_options;
  std::string output_dir = "tfwt_out";

  void validate() const;
  std::string dataset_label() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

Dataset load_dataset(const ExperimentConfig& cfg);

/// Split, validation carve and surrogate shared by training and fine-tuning.
struct SeedContext {
  SplitResult split;
  std::vector<std::size_t> fit_rows, val_rows;  // indices into split.train
  std::unique_ptr<DownstreamModel> surrogate;
};

SeedContext prepare_seed(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed);

struct SeedTraining {
  WeighterModel model;
  TrainResult result;
};

SeedTraining train_seed(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed);
SeedTraining train_seed(const ExperimentConfig& cfg, const SeedContext& ctx, std::uint64_t seed);

struct SeedFinetune {
  FinetuneResult result;
  Matrix train_weights;  // accepted W' on the training split
};

/// Runs PPO on the training split's W. Accumulated column offsets are added
/// to model.column_offset so test-row weights follow the accepted shifts.
SeedFinetune finetune_seed(const ExperimentConfig& cfg, const SeedContext& ctx, WeighterModel& model,
                           std::uint64_t seed);

struct RunRecord {
  std::string dataset, model, method;
  std::uint64_t seed = 0;
  Metrics metrics;
};

struct MethodData {
  std::string method;
  Matrix train_x;
  std::vector<int> train_y;
  Matrix test_x;
};

/// raw, tfwt, tfwt_ft (when given) and every configured baseline.
std::vector<MethodData> method_features(const ExperimentConfig& cfg, const SeedContext& ctx, std::uint64_t seed,
                                        const WeighterModel* tfwt, const WeighterModel* tfwt_ft,
                                        const Matrix* ft_train_weights, std::vector<std::string>* notes = nullptr);

std::vector<RunRecord> evaluate_seed(const ExperimentConfig& cfg, const SeedContext& ctx, std::uint64_t seed,
                                     const std::vector<MethodData>& methods);

std::string metrics_csv(const std::vector<RunRecord>& runs);
nlohmann::json metrics_json(const std::vector<RunRecord>& runs);
/// Markdown tables (one per metric): rows = downstream model, columns = method.
std::string report_markdown(const std::vector<RunRecord>& runs, const std::string& title);

/// Writes `text` to `path` via a temporary file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& text);

/// CSV with a header of feature names, one row per sample.
std::string weights_csv(const Matrix& w, const std::vector<std::string>& names);
Matrix parse_weights_csv(const std::string& text, std::size_t expected_cols);

}  // namespace tfwt
