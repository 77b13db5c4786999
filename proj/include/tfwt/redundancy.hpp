#pragma once

// Redundancy of a feature matrix: mean pairwise mutual information over
// quantile-binned columns, diagonal included by default.

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "tfwt/data_io.hpp"

namespace tfwt {

struct Discretizer {
  std::size_t bins = 16;
  std::size_t max_rows = 20000;  // larger inputs are subsampled (seeded)
  std::uint64_t seed = 0;
  bool include_diagonal = true;

  void validate() const;
  nlohmann::json to_json() const;
};

struct BinnedColumn {
  std::vector<std::uint32_t> codes;
  std::size_t bins = 0;
};

/// Quantile bins for continuous columns; category identity for discrete ones
/// with at most 256 distinct values.
BinnedColumn discretize(std::span<const double> column, const Discretizer& disc, bool discrete = false);

/// Plug-in entropy of the binned column, in nats.
double entropy(const BinnedColumn& c);

double mutual_information(const BinnedColumn& x, const BinnedColumn& y);
double mutual_information(std::span<const double> x, std::span<const double> y, const Discretizer& disc);
/// MI of a joint probability (or count) table.
double mutual_information_from_joint(const Matrix& joint);

struct RddReport {
  double rdd = 0.0;
  Matrix pair_matrix;  // K x K, symmetric, diagonal = binned entropies
  std::size_t bins = 0;
  bool include_diagonal = true;

  std::size_t k() const { return static_cast<std::size_t>(pair_matrix.rows()); }
  nlohmann::json to_json() const;
};

/// `discrete` flags columns for identity binning; empty means all continuous.
RddReport rdd(const Matrix& x, const Discretizer& disc, std::span<const char> discrete = {});

/// after.rdd - before.rdd; throws ComparisonError when K, B or the diagonal mode differ.
double delta_rdd(const RddReport& before, const RddReport& after);

/// The matrix redundancy is measured on: continuous cells normalized and
/// multiplied by their weight, discrete cells as (index + 1) * weight.
Matrix weighted_cells(const Dataset& ds, const FeatureStats& stats, const Matrix& w);

/// Flags for `rdd` derived from the dataset's discrete prefix.
std::vector<char> discrete_flags(const Dataset& ds);

}  // namespace tfwt
