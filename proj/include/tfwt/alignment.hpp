#pragma once

// Feature alignment: every cell of a sample becomes one d-wide token.
// Discrete cells look up a per-feature embedding table; continuous cells are
// z-normalized and mapped through a per-feature affine line z*direction+bias.

#include <span>
#include <vector>

#include "json.hpp"
#include "tfwt/data_io.hpp"
#include "tfwt/nn.hpp"

namespace tfwt {

enum class CategoryMode {
  strict,   // unseen category -> CategoryError
  lenient,  // unseen category -> reserved "unknown" embedding row
};

/// n samples x k tokens x d, stored row-major as [n, k, d].
struct AlignedBatch {
  Tensor tokens;
  std::vector<std::size_t> rows;  // source row indices into the dataset
  std::size_t n = 0, k = 0, d = 0;
};

class FeatureTokenizer {
 public:
  FeatureTokenizer() = default;
  /// Tables get cardinality+1 rows; the last one is the unknown-category row.
  FeatureTokenizer(std::vector<std::size_t> cardinalities, std::size_t num_features, std::size_t d, Rng& rng);
  static FeatureTokenizer for_dataset(const Dataset& ds, std::size_t d, Rng& rng);

  std::size_t width() const { return d_; }
  std::size_t num_features() const { return k_; }
  std::size_t num_discrete() const { return tables_.size(); }
  std::size_t cardinality(std::size_t feature) const { return tables_.at(feature).dim(0) - 1; }

  /// Returns a [1, d] row of the feature's embedding table.
  Tensor encode_discrete(Tape& t, std::size_t value_index, std::size_t feature,
                         CategoryMode mode = CategoryMode::strict) const;
  /// Returns ((raw - mean) / stddev) * direction + bias as a [1, d] row.
  Tensor encode_continuous(Tape& t, double raw, std::size_t feature, const FeatureStats& stats) const;

  AlignedBatch align(Tape& t, const Dataset& ds, std::span<const std::size_t> rows, const FeatureStats& stats,
                     CategoryMode mode = CategoryMode::lenient) const;

  Tensor& table(std::size_t feature) { return tables_.at(feature); }
  Tensor& direction(std::size_t feature) { return directions_.at(feature - tables_.size()); }
  Tensor& bias(std::size_t feature) { return biases_.at(feature - tables_.size()); }

  ParamList params() const;
  nlohmann::json config_json() const;

 private:
  std::size_t checked_index(double cell, std::size_t feature, CategoryMode mode) const;

  std::size_t d_ = 0, k_ = 0;
  std::vector<Tensor> tables_;      // per discrete feature: (cardinality + 1) x d
  std::vector<Tensor> directions_;  // per continuous feature: 1 x d
  std::vector<Tensor> biases_;      // per continuous feature: d
};

}  // namespace tfwt
