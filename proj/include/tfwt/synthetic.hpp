#pragma once

// Seeded synthetic datasets used by the tests, the acceptance suite and the
// CLI's `--synthetic` option.

#include <cstdint>
#include <string>

#include "tfwt/data_io.hpp"

namespace tfwt::synthetic {

/// Binary task over `informative` standard-normal features plus `noise`
/// pure-noise standard-normal columns. x1's sign gates whether x0 or x2
/// drives the label, so feature relevance varies per sample.
Dataset gated(std::size_t n, std::uint64_t seed, std::size_t informative = 5, std::size_t noise = 15);

/// K continuous columns where the last is an exact copy of the first; the
/// remaining columns are independent. Label depends on the first two columns.
Dataset duplicated_column(std::size_t n, std::size_t k, std::uint64_t seed);

/// K independent uniform columns with a label from the first column.
Dataset independent(std::size_t n, std::size_t k, std::uint64_t seed);

/// Binary labels with the given minority share; features are two noisy
/// class-shifted normals.
Dataset imbalanced(std::size_t n, double minority_share, std::uint64_t seed);

/// Dispatch by name: gated, duplicated, independent.
Dataset by_name(const std::string& name, std::size_t n, std::uint64_t seed);

}  // namespace tfwt::synthetic
