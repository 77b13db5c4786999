#include "tfwt/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tfwt/errors.hpp"
#include "tfwt/rng.hpp"

namespace tfwt {

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::usp:
      return "usp";
    case BaselineKind::lasso:
      return "lasso";
    case BaselineKind::wb:
      return "wb";
  }
  return "?";
}

BaselineKind baseline_kind_from_string(const std::string& s) {
  if (s == "usp" || s == "undersample") return BaselineKind::usp;
  if (s == "lasso") return BaselineKind::lasso;
  if (s == "wb" || s == "weighted_bootstrap") return BaselineKind::wb;
  throw ConfigError("unknown baseline '" + s + "' (expected usp|lasso|wb)");
}

Dataset undersample(const Dataset& train, std::uint64_t seed, std::string* note) {
  const auto counts = train.class_counts();
  std::size_t present = 0, minority = train.n;
  for (auto c : counts) {
    if (c > 0) {
      ++present;
      minority = std::min(minority, c);
    }
  }
  if (present < 2) throw FitError("undersample: needs at least two classes");
  if (std::all_of(counts.begin(), counts.end(), [&](auto c) { return c == 0 || c == minority; })) {
    if (note) *note = "classes already balanced; undersampling is the identity";
    return train;
  }
  Rng rng("undersample", seed);
  std::vector<std::vector<std::size_t>> by_class(counts.size());
  for (std::size_t i = 0; i < train.n; ++i) by_class[static_cast<std::size_t>(train.labels[i])].push_back(i);
  std::vector<std::size_t> keep;
  for (auto& rows : by_class) {
    if (rows.empty()) continue;
    rng.shuffle(rows);
    keep.insert(keep.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(minority));
  }
  std::sort(keep.begin(), keep.end());
  return train.subset(keep);
}

Dataset weighted_bootstrap(const Dataset& train, std::uint64_t seed) {
  if (train.n == 0) throw DataError("weighted_bootstrap: empty dataset");
  const auto counts = train.class_counts();
  std::vector<double> cumulative(train.n);
  double total = 0.0;
  for (std::size_t i = 0; i < train.n; ++i) {
    total += 1.0 / static_cast<double>(counts[static_cast<std::size_t>(train.labels[i])]);
    cumulative[i] = total;
  }
  Rng rng("weighted-bootstrap", seed);
  std::vector<std::size_t> rows(train.n);
  for (auto& r : rows) {
    const double u = rng.uniform(0.0, total);
    r = std::min<std::size_t>(static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                                       cumulative.begin()),
                              train.n - 1);
  }
  return train.subset(rows);
}

namespace {

struct LassoFit {
  Matrix coef;       // P x T
  Vector intercept;  // T
};

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// Largest squared singular value of [x, 1] by power iteration.
double lipschitz_bound(const Matrix& x) {
  const Eigen::Index P = x.cols();
  Vector v = Vector::Ones(P + 1) / std::sqrt(static_cast<double>(P + 1));
  double s = 0.0;
  for (int it = 0; it < 50; ++it) {
    Vector xv = x * v.head(P);
    xv.array() += v(P);
    Vector u(P + 1);
    u.head(P) = x.transpose() * xv;
    u(P) = xv.sum();
    const double norm = u.norm();
    if (norm == 0.0) return 1.0;
    s = norm;
    v = u / norm;
  }
  return s;
}

LassoFit fit_lasso(const Matrix& x, std::span<const int> y, std::size_t num_classes, double lambda,
                   const LassoOptions& opt, const LassoFit* warm) {
  if (!(lambda > 0.0)) throw ConfigError("lasso: lambda must be positive");
  if (static_cast<std::size_t>(x.rows()) != y.size() || x.rows() == 0) throw DimensionError("lasso: rows vs labels");
  const Eigen::Index n = x.rows(), P = x.cols();
  const std::size_t T = num_classes == 2 ? 1 : num_classes;
  const double L = lipschitz_bound(x) / (4.0 * static_cast<double>(n));
  const double step = 1.0 / std::max(L, 1e-12);
  LassoFit out{Matrix::Zero(P, static_cast<Eigen::Index>(T)), Vector::Zero(static_cast<Eigen::Index>(T))};
  if (warm) out = *warm;
  for (std::size_t task = 0; task < T; ++task) {
    const int positive = num_classes == 2 ? 1 : static_cast<int>(task);
    Vector target(n);
    for (Eigen::Index i = 0; i < n; ++i) target(i) = y[static_cast<std::size_t>(i)] == positive ? 1.0 : 0.0;
    Vector beta = out.coef.col(static_cast<Eigen::Index>(task));
    double b = out.intercept(static_cast<Eigen::Index>(task));
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
      Vector z = x * beta;
      Vector resid(n);
      for (Eigen::Index i = 0; i < n; ++i) resid(i) = sigmoid(z(i) + b) - target(i);
      const Vector g = x.transpose() * resid / static_cast<double>(n);
      const double gb = resid.mean();
      Vector next = beta - step * g;
      const double thr = step * lambda;
      next = next.unaryExpr([thr](double v) { return v > thr ? v - thr : (v < -thr ? v + thr : 0.0); });
      const double nb = b - step * gb;
      const double change = std::max((next - beta).cwiseAbs().maxCoeff(), std::abs(nb - b));
      beta = next;
      b = nb;
      if (change < opt.tol) break;
    }
    out.coef.col(static_cast<Eigen::Index>(task)) = beta;
    out.intercept(static_cast<Eigen::Index>(task)) = b;
  }
  return out;
}

std::vector<std::size_t> nonzero_rows(const Matrix& coef) {
  std::vector<std::size_t> sel;
  for (Eigen::Index p = 0; p < coef.rows(); ++p)
    if ((coef.row(p).array() != 0.0).any()) sel.push_back(static_cast<std::size_t>(p));
  return sel;
}

std::vector<int> lasso_predict(const LassoFit& f, const Matrix& x) {
  Matrix s = x * f.coef;
  s.rowwise() += f.intercept.transpose();
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (s.cols() == 1) {
      out[static_cast<std::size_t>(i)] = s(i, 0) > 0 ? 1 : 0;
    } else {
      Eigen::Index best;
      s.row(i).maxCoeff(&best);
      out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
  }
  return out;
}

}  // namespace

Matrix lasso_coefficients(const Matrix& x, std::span<const int> y, std::size_t num_classes, double lambda,
                          const LassoOptions& opt, const Matrix* warm_start) {
  LassoFit warm;
  if (warm_start) warm = {*warm_start, Vector::Zero(warm_start->cols())};
  return fit_lasso(x, y, num_classes, lambda, opt, warm_start ? &warm : nullptr).coef;
}

std::vector<std::size_t> lasso_select(const Matrix& x, std::span<const int> y, std::size_t num_classes, double lambda,
                                      const LassoOptions& opt) {
  auto sel = nonzero_rows(fit_lasso(x, y, num_classes, lambda, opt, nullptr).coef);
  if (sel.empty()) {
    throw EmptySelectionError("lasso: lambda " + std::to_string(lambda) + " removed every feature");
  }
  return sel;
}

std::vector<std::vector<std::size_t>> lasso_path(const Matrix& x, std::span<const int> y, std::size_t num_classes,
                                                 std::span<const double> lambdas, const LassoOptions& opt) {
  std::vector<std::vector<std::size_t>> out;
  LassoFit prev;
  bool have = false;
  double last = 0.0;
  for (double l : lambdas) {
    if (have && l < last) throw ContractError("lasso_path: lambdas must be increasing");
    prev = fit_lasso(x, y, num_classes, l, opt, have ? &prev : nullptr);
    have = true;
    last = l;
    out.push_back(nonzero_rows(prev.coef));
  }
  return out;
}

double lasso_cv_lambda(const Matrix& x, std::span<const int> y, std::size_t num_classes, std::uint64_t seed) {
  constexpr std::size_t folds = 3;
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < y.size(); ++i) by_class[static_cast<std::size_t>(y[i])].push_back(i);
  Rng rng("lasso-cv", seed);
  std::vector<std::size_t> fold_of(y.size());
  std::size_t next = 0;
  for (auto& rows : by_class) {
    rng.shuffle(rows);
    for (auto r : rows) fold_of[r] = next++ % folds;
  }
  double best_lambda = 1.0, best_acc = -1.0;
  for (int g = 0; g <= 8; ++g) {
    const double lambda = std::pow(10.0, -4.0 + 0.5 * g);
    double acc = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<std::size_t> tr, te;
      for (std::size_t i = 0; i < y.size(); ++i) (fold_of[i] == f ? te : tr).push_back(i);
      Matrix xtr(static_cast<Eigen::Index>(tr.size()), x.cols()), xte(static_cast<Eigen::Index>(te.size()), x.cols());
      std::vector<int> ytr, yte;
      for (std::size_t i = 0; i < tr.size(); ++i) {
        xtr.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(tr[i]));
        ytr.push_back(y[tr[i]]);
      }
      for (std::size_t i = 0; i < te.size(); ++i) {
        xte.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(te[i]));
        yte.push_back(y[te[i]]);
      }
      const auto pred = lasso_predict(fit_lasso(xtr, ytr, num_classes, lambda, {}, nullptr), xte);
      std::size_t hit = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == yte[i];
      acc += static_cast<double>(hit) / static_cast<double>(std::max<std::size_t>(1, te.size()));
    }
    acc /= folds;
    if (acc >= best_acc) {
      best_acc = acc;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

Matrix select_columns(const Matrix& x, std::span<const std::size_t> cols) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] >= static_cast<std::size_t>(x.cols())) throw DimensionError("select_columns: index out of range");
    out.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(cols[j]));
  }
  return out;
}

}  // namespace tfwt
