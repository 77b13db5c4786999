#include "tfwt/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tfwt/errors.hpp"
#include "tfwt/ops.hpp"

namespace tfwt {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(lr > 0.0) || lr > 1.0) throw ConfigError("train: lr must lie in (0, 1]");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train: validation_fraction must lie in (0, 1)");
  }
  if (!(divergence_limit > 0.0)) throw ConfigError("train: divergence_limit must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},   {"batch_size", batch_size},
          {"lr", lr},           {"patience", patience},
          {"seed", seed},       {"validation_fraction", validation_fraction},
          {"divergence_limit", divergence_limit}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.divergence_limit = j.value("divergence_limit", c.divergence_limit);
  c.validate();
  return c;
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch}, {"train_loss", train_loss}, {"val_loss", val_loss}, {"val_accuracy", val_accuracy}};
}

WeighterModel WeighterModel::create(const Dataset& train, const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  WeighterModel m;
  m.config = cfg;
  Rng rng("weighter-init", seed);
  m.tokenizer = FeatureTokenizer::for_dataset(train, cfg.d_model, rng);
  m.encoder = EncoderStack(cfg, rng);
  m.decoder = DecoderStack(cfg, train.k, rng);
  m.stats = compute_stats(train);
  m.fingerprint = train.schema.fingerprint();
  return m;
}

void WeighterModel::check_schema(const Dataset& ds) const {
  const std::string fp = ds.schema.fingerprint();
  if (fp != fingerprint) {
    throw SchemaError("weighter was trained on schema " + fingerprint + ", dataset has schema " + fp);
  }
}

Tensor WeighterModel::forward(Tape& t, const Dataset& ds, std::span<const std::size_t> rows, bool training,
                              Rng& rng) const {
  AlignedBatch batch = tokenizer.align(t, ds, rows, stats);
  Tensor z = encoder.encode(t, batch.tokens, training, rng);
  Tensor w_init = Tensor::filled({batch.n, batch.k}, 1.0);
  return decoder.decode(t, z, w_init, training, rng);
}

Matrix WeighterModel::weights(const Dataset& ds) const {
  check_schema(ds);
  Matrix w(static_cast<Eigen::Index>(ds.n), static_cast<Eigen::Index>(ds.k));
  Rng unused(0);
  constexpr std::size_t block = 512;
  std::vector<std::size_t> rows;
  for (std::size_t b = 0; b < ds.n; b += block) {
    rows.resize(std::min(block, ds.n - b));
    std::iota(rows.begin(), rows.end(), b);
    Tape t;
    t.set_grad_enabled(false);
    Tensor wb = forward(t, ds, rows, false, unused);
    w.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(rows.size())) =
        Eigen::Map<const Matrix>(wb.data().data(), static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ds.k));
  }
  if (!column_offset.empty()) {
    if (column_offset.size() != ds.k) throw DimensionError("weights: column offsets do not match K");
    for (std::size_t c = 0; c < ds.k; ++c) w.col(static_cast<Eigen::Index>(c)).array() += column_offset[c];
  }
  check_finite(std::span<const double>(w.data(), static_cast<std::size_t>(w.size())), "weights");
  return w;
}

ParamList WeighterModel::params() const {
  ParamList p;
  append_params(p, "tokenizer.", tokenizer.params());
  append_params(p, "encoder.", encoder.params());
  append_params(p, "decoder.", decoder.params());
  return p;
}

std::unique_ptr<DownstreamModel> pretrain_downstream(const Dataset& train, const FeatureStats& stats, ModelKind kind,
                                                     const ModelOptions& opt) {
  if (train.n == 0) throw DataError("pretrain_downstream: empty training set");
  return fit(kind, numeric_view(train, stats), train.labels, train.num_classes(), opt);
}

namespace {

Tensor gather_view(const Matrix& x, std::span<const std::size_t> rows) {
  const auto p = static_cast<std::size_t>(x.cols());
  std::vector<double> v(rows.size() * p);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = x.row(static_cast<Eigen::Index>(rows[i]));
    std::copy(r.data(), r.data() + p, v.begin() + static_cast<std::ptrdiff_t>(i * p));
  }
  return Tensor::from({rows.size(), p}, std::move(v));
}

std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> rows) {
  std::vector<int> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = ds.labels[rows[i]];
  return y;
}

void guard(const Tensor& w, double limit, std::size_t epoch) {
  for (double v : w.data()) {
    if (!std::isfinite(v) || std::abs(v) > limit) {
      throw TrainingError("weighter diverged: |w| = " + std::to_string(std::abs(v)) + " exceeds " + std::to_string(limit),
                          epoch);
    }
  }
}

struct Eval {
  double loss = 0, accuracy = 0;
};

Eval evaluate_rows(const WeighterModel& m, const Dataset& ds, const Matrix& view, const NumericLayout& layout,
                   const DownstreamModel& surrogate, std::span<const std::size_t> rows, double limit,
                   std::size_t epoch) {
  Eval e;
  if (rows.empty()) return e;
  Rng unused(0);
  constexpr std::size_t block = 512;
  for (std::size_t b = 0; b < rows.size(); b += block) {
    auto part = rows.subspan(b, std::min(block, rows.size() - b));
    Tape t;
    t.set_grad_enabled(false);
    Tensor w = m.forward(t, ds, part, false, unused);
    guard(w, limit, epoch);
    Tensor logits = surrogate.logits(t, apply_weights(t, w, gather_view(view, part), layout));
    const auto y = gather_labels(ds, part);
    e.loss += ops::cross_entropy(t, logits, y).item() * static_cast<double>(part.size());
    const std::size_t C = logits.dim(1);
    for (std::size_t i = 0; i < part.size(); ++i) {
      const auto row = logits.data().subspan(i * C, C);
      const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == y[i]) e.accuracy += 1.0;
    }
  }
  e.loss /= static_cast<double>(rows.size());
  e.accuracy /= static_cast<double>(rows.size());
  return e;
}

}  // namespace

TrainResult train(WeighterModel& model, const Dataset& train, const DownstreamModel& surrogate,
                  std::span<const std::size_t> fit_rows, std::span<const std::size_t> val_rows,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (!surrogate.differentiable()) {
    throw ConfigError("train: surrogate '" + to_string(surrogate.kind()) + "' is not differentiable; use lr or mlp");
  }
  model.check_schema(train);
  if (fit_rows.empty()) throw DataError("train: no fitting rows");
  const Matrix view = numeric_view(train, model.stats);
  const NumericLayout layout = numeric_layout(train);
  if (static_cast<std::size_t>(view.cols()) != surrogate.num_features()) {
    throw SchemaError("train: surrogate expects " + std::to_string(surrogate.num_features()) + " columns, view has " +
                      std::to_string(view.cols()));
  }
  const auto eval_rows = val_rows.empty() ? fit_rows : val_rows;
  const ParamList params = model.params();
  Adam adam(params, AdamConfig{cfg.lr});
  Rng shuffle_rng("weighter-batches", cfg.seed);
  Rng dropout_rng("weighter-dropout", cfg.seed);

  TrainResult result;
  auto log_epoch = [&](std::size_t epoch) {
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = evaluate_rows(model, train, view, layout, surrogate, fit_rows, cfg.divergence_limit, epoch).loss;
    const Eval v = evaluate_rows(model, train, view, layout, surrogate, eval_rows, cfg.divergence_limit, epoch);
    e.val_loss = v.loss;
    e.val_accuracy = v.accuracy;
    result.log.push_back(e);
    return e;
  };

  double best = log_epoch(0).val_loss;
  auto best_snap = snapshot(params);
  std::size_t since_best = 0;
  std::vector<std::size_t> order(fit_rows.begin(), fit_rows.end());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::span<const std::size_t> rows(order.data() + b, std::min(cfg.batch_size, order.size() - b));
      Tape t;
      Tensor w = model.forward(t, train, rows, true, dropout_rng);
      guard(w, cfg.divergence_limit, epoch);
      Tensor logits = surrogate.logits(t, apply_weights(t, w, gather_view(view, rows), layout));
      Tensor loss = ops::cross_entropy(t, logits, gather_labels(train, rows));
      adam.zero_grad();
      t.backward(loss);
      adam.step();
    }
    const double v = log_epoch(epoch).val_loss;
    if (v < best) {
      best = v;
      best_snap = snapshot(params);
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  restore(params, best_snap);
  adam.zero_grad();
  return result;
}

Transformed transform(const WeighterModel& model, const Dataset& ds) {
  Transformed out;
  out.w.values = model.weights(ds);
  out.features = apply_weights(out.w.values, numeric_view(ds, model.stats), numeric_layout(ds));
  return out;
}

}  // namespace tfwt
