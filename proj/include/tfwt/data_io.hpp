#pragma once

// Tabular ingestion: typed schema, CSV loading, stratified splits,
// normalization statistics and the numeric view consumed by classifiers.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace tfwt {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class ColumnKind { discrete, continuous, label };

std::string to_string(ColumnKind k);
ColumnKind column_kind_from_string(const std::string& s);

struct ColumnSpec {
  std::string name;
  ColumnKind kind;
};

class Schema {
 public:
  Schema() = default;
  /// Validates: names unique, exactly one label column, at least one feature.
  explicit Schema(std::vector<ColumnSpec> columns);

  static Schema from_json(const nlohmann::json& j);
  static Schema load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const std::string& label_name() const { return label_; }
  /// Feature names in internal order: discrete columns first, then continuous.
  const std::vector<std::string>& feature_order() const { return features_; }
  std::size_t discrete_count() const { return discrete_; }
  /// Stable hash of the internal feature order and kinds.
  std::string fingerprint() const;

 private:
  std::vector<ColumnSpec> columns_;
  std::vector<std::string> features_;
  std::string label_;
  std::size_t discrete_ = 0;
};

struct Dataset {
  Schema schema;
  std::size_t n = 0;  // samples
  std::size_t k = 0;  // features
  std::size_t m = 0;  // discrete features, stored at positions [0, m)
  /// n x k, row-major. Discrete cells hold category indices.
  std::vector<double> features;
  std::vector<int> labels;
  /// Category names per discrete feature, index = encoded value.
  std::vector<std::vector<std::string>> categories;
  std::vector<std::string> class_names;

  double at(std::size_t row, std::size_t col) const { return features[row * k + col]; }
  std::size_t cardinality(std::size_t feature) const { return categories.at(feature).size(); }
  bool is_discrete(std::size_t feature) const { return feature < m; }
  std::size_t num_classes() const { return class_names.size(); }
  const std::vector<std::string>& feature_names() const { return schema.feature_order(); }

  /// Rows in the given order; encodings are shared.
  Dataset subset(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> class_counts() const;
};

struct LoadOptions {
  /// Reuse category and class encodings from a previously loaded dataset.
  const Dataset* encoding_reference = nullptr;
  /// With a reference, map unseen categories to the reserved index
  /// `cardinality` instead of raising CategoryError.
  bool allow_unknown_categories = false;
};

/// RFC-4180 CSV with a header row. Missing cells are rejected.
Dataset load_csv(const std::filesystem::path& path, const Schema& schema, const LoadOptions& opt = {});
Dataset parse_csv(const std::string& text, const Schema& schema, const LoadOptions& opt = {});

/// Continuous-only dataset from a dense matrix; columns are named x0, x1, ...
/// and the label column "class" with classes "0".."C-1".
Dataset from_matrix(const Matrix& x, std::span<const int> labels, std::size_t num_classes);

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

/// Stratified split; round(fraction * n) training rows allocated across
/// classes by largest remainder. Deterministic per seed.
SplitResult split(const Dataset& ds, double train_fraction, std::uint64_t seed);

/// Stratified carve of `fraction` of `rows` (indices into ds) for validation.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    const Dataset& ds, std::span<const std::size_t> rows, double fraction, std::uint64_t seed);

struct FeatureStats {
  /// Indexed by feature position; entries for discrete features are unused (0 / 1).
  std::vector<double> mean;
  std::vector<double> stddev;
  std::size_t m = 0;

  bool empty() const { return mean.size() == m; }
  double normalize(std::size_t feature, double raw) const {
    return (raw - mean[feature]) / stddev[feature];
  }

  nlohmann::json to_json() const;
  static FeatureStats from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static FeatureStats load(const std::filesystem::path& path);
};

/// Population mean / standard deviation of each continuous column. Constant
/// columns get stddev 1.
FeatureStats compute_stats(const Dataset& train);

/// Column layout of the numeric view: one-hot block per discrete feature
/// (width = cardinality), one column per continuous feature.
struct NumericLayout {
  std::vector<std::size_t> source_feature;  // numeric column -> feature index
  std::size_t width() const { return source_feature.size(); }
};

NumericLayout numeric_layout(const Dataset& ds);

/// One-hot discrete features (unknown categories -> zero block), normalized
/// continuous features.
Matrix numeric_view(const Dataset& ds, const FeatureStats& stats);

/// Dense n x k matrix of the feature cells with continuous features
/// normalized and discrete cells left as category indices.
Matrix normalized_cells(const Dataset& ds, const FeatureStats& stats);

}  // namespace tfwt
