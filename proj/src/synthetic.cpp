#include "tfwt/synthetic.hpp"

#include "tfwt/errors.hpp"
#include "tfwt/rng.hpp"

namespace tfwt::synthetic {

Dataset gated(std::size_t n, std::uint64_t seed, std::size_t informative, std::size_t noise) {
  if (informative < 5) throw ConfigError("gated: needs at least 5 informative features");
  Rng rng("synthetic-gated", seed);
  const auto k = static_cast<Eigen::Index>(informative + noise);
  Matrix x(static_cast<Eigen::Index>(n), k);
  std::vector<int> y(n);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < k; ++c) x(r, c) = rng.normal();
    double z = 2.0 * (x(r, 1) > 0 ? x(r, 0) : x(r, 2)) + x(r, 3) + x(r, 4);
    for (Eigen::Index c = 5; c < static_cast<Eigen::Index>(informative); ++c) z += x(r, c);
    z += 0.3 * rng.normal();
    y[static_cast<std::size_t>(r)] = z > 0 ? 1 : 0;
  }
  return from_matrix(x, y, 2);
}

Dataset duplicated_column(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 3) throw ConfigError("duplicated_column: needs k >= 3");
  Rng rng("synthetic-duplicated", seed);
  const auto kk = static_cast<Eigen::Index>(k);
  Matrix x(static_cast<Eigen::Index>(n), kk);
  std::vector<int> y(n);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c + 1 < kk; ++c) x(r, c) = rng.normal();
    x(r, kk - 1) = x(r, 0);
    y[static_cast<std::size_t>(r)] = x(r, 0) + x(r, 1) + 0.5 * rng.normal() > 0 ? 1 : 0;
  }
  return from_matrix(x, y, 2);
}

Dataset independent(std::size_t n, std::size_t k, std::uint64_t seed) {
  Rng rng("synthetic-independent", seed);
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  std::vector<int> y(n);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = rng.uniform();
    y[static_cast<std::size_t>(r)] = x(r, 0) + 0.2 * rng.normal() > 0.5 ? 1 : 0;
  }
  return from_matrix(x, y, 2);
}

Dataset imbalanced(std::size_t n, double minority_share, std::uint64_t seed) {
  if (!(minority_share > 0.0 && minority_share < 1.0)) throw ConfigError("imbalanced: share must lie in (0, 1)");
  Rng rng("synthetic-imbalanced", seed);
  Matrix x(static_cast<Eigen::Index>(n), 2);
  std::vector<int> y(n);
  const auto minority = static_cast<std::size_t>(std::llround(minority_share * static_cast<double>(n)));
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = r < minority ? 1 : 0;
    const double shift = y[r] ? 1.0 : -1.0;
    x(static_cast<Eigen::Index>(r), 0) = shift + rng.normal();
    x(static_cast<Eigen::Index>(r), 1) = 0.5 * shift + rng.normal();
  }
  return from_matrix(x, y, 2);
}

Dataset by_name(const std::string& name, std::size_t n, std::uint64_t seed) {
  if (name == "gated") return gated(n, seed);
  if (name == "duplicated") return duplicated_column(n, 6, seed);
  if (name == "independent") return independent(n, 6, seed);
  throw ConfigError("unknown synthetic dataset '" + name + "' (expected gated|duplicated|independent)");
}

}  // namespace tfwt::synthetic
