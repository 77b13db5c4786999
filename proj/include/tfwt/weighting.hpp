#pragma once

// The weighter: tokenizer + encoder + decoder producing W for each row, and
// the training loop that pushes a frozen surrogate's cross-entropy back into
// the weighter's parameters.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfwt/alignment.hpp"
#include "tfwt/decoder.hpp"
#include "tfwt/downstream.hpp"
#include "tfwt/encoder.hpp"

namespace tfwt {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  double divergence_limit = 1e3;  // any |w| above this aborts training

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;  // inference-mode cross-entropy on the fitting rows
  double val_loss = 0;
  double val_accuracy = 0;
  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

class WeighterModel {
 public:
  WeighterModel() = default;
  /// Fresh, untrained weighter for `train`'s schema; continuous statistics are
  /// taken from `train`.
  static WeighterModel create(const Dataset& train, const EncoderConfig& cfg, std::uint64_t seed);

  /// W [n, K] for the given rows, recorded on `t`. Column offsets from
  /// fine-tuning are not included.
  Tensor forward(Tape& t, const Dataset& ds, std::span<const std::size_t> rows, bool training, Rng& rng) const;

  /// Inference-mode W for every row of `ds`, fine-tuning offsets included.
  Matrix weights(const Dataset& ds) const;

  /// Throws SchemaError when `ds` was built from a different schema.
  void check_schema(const Dataset& ds) const;

  ParamList params() const;

  EncoderConfig config;
  FeatureTokenizer tokenizer;
  EncoderStack encoder;
  DecoderStack decoder;
  FeatureStats stats;
  std::string fingerprint;
  /// Per-column offsets accepted by fine-tuning; empty when not fine-tuned.
  std::vector<double> column_offset;
};

/// Fits `kind` on the unweighted numeric view of `train`.
std::unique_ptr<DownstreamModel> pretrain_downstream(const Dataset& train, const FeatureStats& stats, ModelKind kind,
                                                     const ModelOptions& opt = {});

/// Trains on `fit_rows`, early-stops on `val_rows` (indices into `train`), and
/// leaves `model` at the best validation epoch. Epoch 0 is the untrained model.
TrainResult train(WeighterModel& model, const Dataset& train, const DownstreamModel& surrogate,
                  std::span<const std::size_t> fit_rows, std::span<const std::size_t> val_rows,
                  const TrainConfig& cfg);

struct Transformed {
  WeightMatrix w;
  Matrix features;  // W applied to the numeric view
};

Transformed transform(const WeighterModel& model, const Dataset& ds);

}  // namespace tfwt
