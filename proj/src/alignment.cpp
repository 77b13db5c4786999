#include "tfwt/alignment.hpp"

#include <cmath>

#include "tfwt/errors.hpp"

namespace tfwt {

FeatureTokenizer::FeatureTokenizer(std::vector<std::size_t> cardinalities, std::size_t num_features, std::size_t d,
                                   Rng& rng)
    : d_(d), k_(num_features) {
  if (d == 0) throw ConfigError("tokenizer: token width must be positive");
  if (cardinalities.size() > num_features) throw ConfigError("tokenizer: more discrete features than features");
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto card : cardinalities) tables_.push_back(uniform_param({card + 1, d}, s, rng));
  for (std::size_t f = cardinalities.size(); f < num_features; ++f) {
    directions_.push_back(uniform_param({1, d}, s, rng));
    biases_.push_back(Tensor::zeros({d}, true));
  }
}

FeatureTokenizer FeatureTokenizer::for_dataset(const Dataset& ds, std::size_t d, Rng& rng) {
  std::vector<std::size_t> cards;
  for (std::size_t f = 0; f < ds.m; ++f) cards.push_back(ds.cardinality(f));
  return FeatureTokenizer(std::move(cards), ds.k, d, rng);
}

std::size_t FeatureTokenizer::checked_index(double cell, std::size_t feature, CategoryMode mode) const {
  const auto idx = static_cast<std::size_t>(cell);
  const std::size_t card = cardinality(feature);
  if (idx < card) return idx;
  if (idx == card && mode == CategoryMode::lenient) return idx;
  throw CategoryError("feature " + std::to_string(feature) + ": category index " + std::to_string(idx) +
                      " outside cardinality " + std::to_string(card));
}

Tensor FeatureTokenizer::encode_discrete(Tape& t, std::size_t value_index, std::size_t feature,
                                         CategoryMode mode) const {
  if (feature >= tables_.size()) throw ContractError("encode_discrete: feature " + std::to_string(feature) + " is not discrete");
  const std::size_t idx = checked_index(static_cast<double>(value_index), feature, mode);
  const std::size_t rows[] = {idx};
  return ops::gather_rows(t, tables_[feature], rows);
}

Tensor FeatureTokenizer::encode_continuous(Tape& t, double raw, std::size_t feature, const FeatureStats& stats) const {
  if (feature < tables_.size() || feature >= k_) {
    throw ContractError("encode_continuous: feature " + std::to_string(feature) + " is not continuous");
  }
  if (feature >= stats.mean.size()) throw ContractError("encode_continuous: no statistics for feature " + std::to_string(feature));
  if (!std::isfinite(raw)) throw NumericError("encode_continuous: non-finite value for feature " + std::to_string(feature));
  const std::size_t c = feature - tables_.size();
  Tensor z = Tensor::from({1, 1}, {stats.normalize(feature, raw)});
  return ops::add_bias(t, ops::matmul(t, z, directions_[c]), biases_[c]);
}

AlignedBatch FeatureTokenizer::align(Tape& t, const Dataset& ds, std::span<const std::size_t> rows,
                                     const FeatureStats& stats, CategoryMode mode) const {
  if (rows.empty()) throw ContractError("align: empty batch");
  if (ds.k != k_ || ds.m != tables_.size()) {
    throw SchemaError("align: dataset has " + std::to_string(ds.k) + " features (" + std::to_string(ds.m) +
                      " discrete), tokenizer expects " + std::to_string(k_) + " (" + std::to_string(tables_.size()) + ")");
  }
  const std::size_t n = rows.size();
  std::vector<Tensor> parts;
  parts.reserve(k_);
  for (std::size_t f = 0; f < k_; ++f) {
    if (f < ds.m) {
      std::vector<std::size_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) {
        try {
          idx[i] = checked_index(ds.at(rows[i], f), f, mode);
        } catch (const CategoryError& e) {
          throw CategoryError("align: row " + std::to_string(rows[i]) + ", column '" + ds.feature_names()[f] +
                              "': " + e.what());
        }
      }
      parts.push_back(ops::gather_rows(t, tables_[f], idx));
    } else {
      std::vector<double> z(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double raw = ds.at(rows[i], f);
        if (!std::isfinite(raw)) {
          throw NumericError("align: non-finite value at row " + std::to_string(rows[i]) + ", column '" +
                             ds.feature_names()[f] + "'");
        }
        z[i] = stats.normalize(f, raw);
      }
      const std::size_t c = f - ds.m;
      Tensor zt = Tensor::from({n, 1}, std::move(z));
      parts.push_back(ops::add_bias(t, ops::matmul(t, zt, directions_[c]), biases_[c]));
    }
  }
  AlignedBatch b;
  b.tokens = ops::reshape(t, ops::interleave(t, parts), {n, k_, d_});
  b.rows.assign(rows.begin(), rows.end());
  b.n = n;
  b.k = k_;
  b.d = d_;
  return b;
}

ParamList FeatureTokenizer::params() const {
  ParamList p;
  for (std::size_t f = 0; f < tables_.size(); ++f) p.push_back({"embed." + std::to_string(f), tables_[f]});
  for (std::size_t c = 0; c < directions_.size(); ++c) {
    const auto f = std::to_string(c + tables_.size());
    p.push_back({"dir." + f, directions_[c]});
    p.push_back({"bias." + f, biases_[c]});
  }
  return p;
}

nlohmann::json FeatureTokenizer::config_json() const {
  std::vector<std::size_t> cards;
  for (std::size_t f = 0; f < tables_.size(); ++f) cards.push_back(cardinality(f));
  return {{"d", d_}, {"num_features", k_}, {"cardinalities", cards}};
}

}  // namespace tfwt
