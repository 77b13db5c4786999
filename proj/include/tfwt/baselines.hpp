#pragma once

// Comparison methods: class undersampling, L1-logistic feature selection and
// inverse-frequency weighted bootstrapping.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tfwt/data_io.hpp"

namespace tfwt {

enum class BaselineKind { usp, lasso, wb };

std::string to_string(BaselineKind k);
BaselineKind baseline_kind_from_string(const std::string& s);

struct BaselineSpec {
  BaselineKind kind = BaselineKind::usp;
  /// LASSO strength; unset means chosen by 3-fold cross-validation.
  std::optional<double> lambda;
};

/// Every class reduced to the minority count. `note` receives a message when
/// the input is already balanced (the input is then returned unchanged).
Dataset undersample(const Dataset& train, std::uint64_t seed, std::string* note = nullptr);

/// N rows drawn with replacement, probability proportional to 1 / count(class).
Dataset weighted_bootstrap(const Dataset& train, std::uint64_t seed);

struct LassoOptions {
  double tol = 1e-6;
  std::size_t max_iter = 5000;
};

/// L1-penalized logistic regression coefficients by proximal gradient.
/// Objective: mean log-loss + lambda * |beta|_1, intercept unpenalized.
/// Multi-class problems fit one-vs-rest and return P x C; binary returns P x 1.
Matrix lasso_coefficients(const Matrix& x, std::span<const int> y, std::size_t num_classes, double lambda,
                          const LassoOptions& opt = {}, const Matrix* warm_start = nullptr);

/// Column indices with a nonzero coefficient; EmptySelectionError when none survive.
std::vector<std::size_t> lasso_select(const Matrix& x, std::span<const int> y, std::size_t num_classes, double lambda,
                                      const LassoOptions& opt = {});

/// Selected sets along an increasing lambda grid, each solve warm-started
/// from the previous one. Empty sets are returned as empty vectors.
std::vector<std::vector<std::size_t>> lasso_path(const Matrix& x, std::span<const int> y, std::size_t num_classes,
                                                 std::span<const double> lambdas, const LassoOptions& opt = {});

/// Lambda with the best 3-fold accuracy over {1e-4, ..., 1} (9 log-spaced
/// points); ties go to the larger lambda.
double lasso_cv_lambda(const Matrix& x, std::span<const int> y, std::size_t num_classes, std::uint64_t seed);

Matrix select_columns(const Matrix& x, std::span<const std::size_t> cols);

}  // namespace tfwt
