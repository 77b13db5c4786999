#include "tfwt/redundancy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tfwt/errors.hpp"
#include "tfwt/rng.hpp"

namespace tfwt {

void Discretizer::validate() const {
  if (bins < 2 || bins > 256) throw ConfigError("discretizer: bins must lie in [2, 256], got " + std::to_string(bins));
  if (max_rows < 2) throw ConfigError("discretizer: max_rows must be >= 2");
}

nlohmann::json Discretizer::to_json() const {
  return {{"bins", bins}, {"max_rows", max_rows}, {"seed", seed}, {"include_diagonal", include_diagonal}};
}

BinnedColumn discretize(std::span<const double> column, const Discretizer& disc, bool discrete) {
  disc.validate();
  BinnedColumn out;
  out.codes.resize(column.size());
  if (column.empty()) return out;
  for (double v : column) {
    if (!std::isfinite(v)) throw NumericError("discretize: non-finite value");
  }
  if (discrete) {
    std::map<double, std::uint32_t> ids;
    for (double v : column) {
      ids.emplace(v, 0);
      if (ids.size() > 256) break;
    }
    if (ids.size() <= 256) {
      std::uint32_t next = 0;
      for (auto& [v, id] : ids) id = next++;
      for (std::size_t i = 0; i < column.size(); ++i) out.codes[i] = ids.at(column[i]);
      out.bins = ids.size();
      return out;
    }
  }
  std::vector<double> sorted(column.begin(), column.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  std::vector<double> edges;
  for (std::size_t i = 1; i < disc.bins; ++i) edges.push_back(sorted[i * n / disc.bins]);
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  for (std::size_t i = 0; i < n; ++i) {
    out.codes[i] = static_cast<std::uint32_t>(std::upper_bound(edges.begin(), edges.end(), column[i]) - edges.begin());
  }
  // Ties at an edge can leave bins empty; renumber the occupied ones.
  std::vector<std::uint32_t> remap(edges.size() + 1, 0);
  for (auto c : out.codes) remap[c] = 1;
  std::uint32_t next = 0;
  for (auto& r : remap) r = r ? next++ : 0;
  for (auto& c : out.codes) c = remap[c];
  out.bins = next;
  return out;
}

double entropy(const BinnedColumn& c) {
  if (c.codes.empty()) return 0.0;
  std::vector<double> counts(c.bins, 0.0);
  for (auto v : c.codes) counts[v] += 1.0;
  const double n = static_cast<double>(c.codes.size());
  double h = 0.0;
  for (double k : counts) {
    if (k > 0) h -= (k / n) * std::log(k / n);
  }
  return h;
}

double mutual_information_from_joint(const Matrix& joint) {
  const double total = joint.sum();
  if (!(total > 0) || (joint.array() < 0).any()) throw ContractError("mutual_information: joint table must be nonnegative with positive mass");
  const Vector px = joint.rowwise().sum() / total;
  const Vector py = joint.colwise().sum().transpose() / total;
  double mi = 0.0;
  for (Eigen::Index a = 0; a < joint.rows(); ++a) {
    for (Eigen::Index b = 0; b < joint.cols(); ++b) {
      const double p = joint(a, b) / total;
      if (p > 0) mi += p * std::log(p / (px(a) * py(b)));
    }
  }
  return std::max(0.0, mi);
}

double mutual_information(const BinnedColumn& x, const BinnedColumn& y) {
  if (x.codes.size() != y.codes.size()) {
    throw DimensionError("mutual_information: lengths " + std::to_string(x.codes.size()) + " and " +
                         std::to_string(y.codes.size()));
  }
  if (x.codes.size() < 2) throw ContractError("mutual_information: needs at least 2 samples");
  Matrix joint = Matrix::Zero(static_cast<Eigen::Index>(x.bins), static_cast<Eigen::Index>(y.bins));
  for (std::size_t i = 0; i < x.codes.size(); ++i) joint(x.codes[i], y.codes[i]) += 1.0;
  return mutual_information_from_joint(joint);
}

double mutual_information(std::span<const double> x, std::span<const double> y, const Discretizer& disc) {
  if (x.size() != y.size()) {
    throw DimensionError("mutual_information: lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  return mutual_information(discretize(x, disc), discretize(y, disc));
}

nlohmann::json RddReport::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (Eigen::Index i = 0; i < pair_matrix.rows(); ++i) {
    std::vector<double> row(pair_matrix.cols());
    for (Eigen::Index j = 0; j < pair_matrix.cols(); ++j) row[static_cast<std::size_t>(j)] = pair_matrix(i, j);
    pairs.push_back(row);
  }
  return {{"rdd", rdd}, {"bins", bins}, {"k", k()}, {"include_diagonal", include_diagonal}, {"pair_matrix", pairs}};
}

RddReport rdd(const Matrix& x, const Discretizer& disc, std::span<const char> discrete) {
  disc.validate();
  const auto K = static_cast<std::size_t>(x.cols());
  if (K == 0) throw ContractError("rdd: matrix has no columns");
  if (!discrete.empty() && discrete.size() != K) throw DimensionError("rdd: discrete flags do not match columns");
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  if (rows.size() > disc.max_rows) {
    Rng rng("rdd-subsample", disc.seed);
    rng.shuffle(rows);
    rows.resize(disc.max_rows);
    std::sort(rows.begin(), rows.end());
  }
  std::vector<BinnedColumn> cols(K);
  std::vector<double> buf(rows.size());
  for (std::size_t c = 0; c < K; ++c) {
    for (std::size_t i = 0; i < rows.size(); ++i) buf[i] = x(rows[i], static_cast<Eigen::Index>(c));
    cols[c] = discretize(buf, disc, !discrete.empty() && discrete[c]);
  }
  RddReport r;
  r.bins = disc.bins;
  r.include_diagonal = disc.include_diagonal;
  r.pair_matrix = Matrix::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
  for (std::size_t a = 0; a < K; ++a) {
    const auto ia = static_cast<Eigen::Index>(a);
    r.pair_matrix(ia, ia) = entropy(cols[a]);
    for (std::size_t b = a + 1; b < K; ++b) {
      const auto ib = static_cast<Eigen::Index>(b);
      const double mi = mutual_information(cols[a], cols[b]);
      r.pair_matrix(ia, ib) = mi;
      r.pair_matrix(ib, ia) = mi;
    }
  }
  const double total = r.pair_matrix.sum();
  const double kk = static_cast<double>(K);
  if (disc.include_diagonal) {
    r.rdd = total / (kk * kk);
  } else {
    r.rdd = K > 1 ? (total - r.pair_matrix.trace()) / (kk * (kk - 1.0)) : 0.0;
  }
  return r;
}

double delta_rdd(const RddReport& before, const RddReport& after) {
  if (before.k() != after.k() || before.bins != after.bins || before.include_diagonal != after.include_diagonal) {
    throw ComparisonError("delta_rdd: reports differ in K (" + std::to_string(before.k()) + " vs " +
                          std::to_string(after.k()) + ") or bins (" + std::to_string(before.bins) + " vs " +
                          std::to_string(after.bins) + ")");
  }
  return after.rdd - before.rdd;
}

Matrix weighted_cells(const Dataset& ds, const FeatureStats& stats, const Matrix& w) {
  if (static_cast<std::size_t>(w.rows()) != ds.n || static_cast<std::size_t>(w.cols()) != ds.k) {
    throw DimensionError("weighted_cells: W is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                         ", dataset is " + std::to_string(ds.n) + "x" + std::to_string(ds.k));
  }
  Matrix out = normalized_cells(ds, stats);
  out.leftCols(static_cast<Eigen::Index>(ds.m)).array() += 1.0;
  return out.cwiseProduct(w);
}

std::vector<char> discrete_flags(const Dataset& ds) {
  std::vector<char> f(ds.k, 0);
  for (std::size_t i = 0; i < ds.m; ++i) f[i] = 1;
  return f;
}

}  // namespace tfwt
