#include "tfwt/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tfwt/errors.hpp"
#include "tfwt/nn.hpp"
#include "tfwt/ops.hpp"
#include "tfwt/rng.hpp"

namespace tfwt {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::logistic_regression:
      return "lr";
    case ModelKind::gaussian_nb:
      return "nb";
    case ModelKind::knn:
      return "knn";
    case ModelKind::mlp:
      return "mlp";
    case ModelKind::forest:
      return "rf";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "lr" || s == "logistic_regression") return ModelKind::logistic_regression;
  if (s == "nb" || s == "gaussian_nb") return ModelKind::gaussian_nb;
  if (s == "knn") return ModelKind::knn;
  if (s == "mlp") return ModelKind::mlp;
  if (s == "rf" || s == "forest") return ModelKind::forest;
  throw ConfigError("unknown model kind '" + s + "' (expected lr|nb|knn|mlp|rf)");
}

Tensor DownstreamModel::logits(Tape&, const Tensor&) const {
  throw ConfigError("model '" + to_string(kind()) + "' is not differentiable");
}

void DownstreamModel::check_input(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != num_features_) {
    throw SchemaError("model '" + to_string(kind()) + "' was trained on " + std::to_string(num_features_) +
                      " columns, got " + std::to_string(x.cols()));
  }
}

std::vector<int> DownstreamModel::predict(const Matrix& x) const {
  const Matrix p = predict_proba(x);
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index best;
    p.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

namespace {

void softmax_inplace(Matrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - mx).exp();
    z.row(r) /= z.row(r).sum();
  }
}

void check_fit_input(const Matrix& x, std::span<const int> y, std::size_t num_classes) {
  if (static_cast<std::size_t>(x.rows()) != y.size() || x.rows() == 0) {
    throw DimensionError("fit: " + std::to_string(x.rows()) + " rows vs " + std::to_string(y.size()) + " labels");
  }
  std::vector<std::size_t> counts(num_classes, 0);
  for (int v : y) {
    if (v < 0 || static_cast<std::size_t>(v) >= num_classes) throw FitError("fit: label out of range");
    ++counts[static_cast<std::size_t>(v)];
  }
  const auto present = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; });
  if (present < 2) throw FitError("fit: training data contains a single class");
  if (!x.allFinite()) throw NumericError("fit: non-finite feature values");
}

}  // namespace

// ---------------------------------------------------------------- logistic

std::unique_ptr<LogisticRegression> LogisticRegression::train(const Matrix& x, std::span<const int> y,
                                                              std::size_t num_classes, double l2) {
  check_fit_input(x, y, num_classes);
  const Eigen::Index n = x.rows(), P = x.cols();
  const Eigen::Index C = static_cast<Eigen::Index>(num_classes);
  const Eigen::Index B = P + 1;  // block: coefficients then intercept
  const Eigen::Index D = B * (C - 1);
  Matrix xa(n, B);
  xa.leftCols(P) = x;
  xa.col(P).setOnes();

  Vector theta = Vector::Zero(D);
  auto logits_of = [&](const Vector& th) {
    Matrix z = Matrix::Zero(n, C);
    for (Eigen::Index c = 1; c < C; ++c) z.col(c) = xa * th.segment((c - 1) * B, B);
    return z;
  };
  // Damped Newton with backtracking on the penalized negative log-likelihood.
  auto penalized = [&](const Vector& th) {
    Matrix z = logits_of(th);
    double f = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double mx = z.row(r).maxCoeff();
      const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
      f += lse - z(r, y[static_cast<std::size_t>(r)]);
    }
    for (Eigen::Index c = 1; c < C; ++c) f += 0.5 * l2 * th.segment((c - 1) * B, P).squaredNorm();
    return f;
  };
  double f = penalized(theta);
  for (int iter = 0; iter < 100; ++iter) {
    Matrix p = logits_of(theta);
    softmax_inplace(p);
    Vector grad(D);
    Matrix hess = Matrix::Zero(D, D);
    for (Eigen::Index c = 1; c < C; ++c) {
      Vector resid = p.col(c);
      for (Eigen::Index r = 0; r < n; ++r)
        if (y[static_cast<std::size_t>(r)] == c) resid(r) -= 1.0;
      Vector g = xa.transpose() * resid;
      g.head(P) += l2 * theta.segment((c - 1) * B, P);
      grad.segment((c - 1) * B, B) = g;
      for (Eigen::Index c2 = 1; c2 < C; ++c2) {
        Vector wgt = (c == c2) ? Vector(p.col(c).array() * (1.0 - p.col(c).array()))
                               : Vector(-p.col(c).array() * p.col(c2).array());
        hess.block((c - 1) * B, (c2 - 1) * B, B, B) = xa.transpose() * wgt.asDiagonal() * xa;
      }
      hess.block((c - 1) * B, (c - 1) * B, P, P).diagonal().array() += l2;
    }
    if (grad.cwiseAbs().maxCoeff() < 1e-9 * static_cast<double>(n)) break;
    hess.diagonal().array() += 1e-10;
    Vector step = hess.ldlt().solve(grad);
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 50; ++ls) {
      Vector cand = theta - t * step;
      const double fc = penalized(cand);
      if (std::isfinite(fc) && fc <= f - 1e-4 * t * grad.dot(step)) {
        theta = cand;
        f = fc;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
  }

  auto m = std::unique_ptr<LogisticRegression>(new LogisticRegression());
  m->num_features_ = static_cast<std::size_t>(P);
  m->num_classes_ = num_classes;
  m->coef_ = Matrix::Zero(P, C);
  m->intercept_ = Vector::Zero(C);
  for (Eigen::Index c = 1; c < C; ++c) {
    m->coef_.col(c) = theta.segment((c - 1) * B, P);
    m->intercept_(c) = theta((c - 1) * B + P);
  }
  m->coef_t_ = Tensor::from({static_cast<std::size_t>(P), num_classes},
                            std::vector<double>(m->coef_.data(), m->coef_.data() + m->coef_.size()));
  m->intercept_t_ = Tensor::from({num_classes}, std::vector<double>(m->intercept_.data(),
                                                                    m->intercept_.data() + m->intercept_.size()));
  return m;
}

Matrix LogisticRegression::predict_proba(const Matrix& x) const {
  check_input(x);
  Matrix z = x * coef_;
  z.rowwise() += intercept_.transpose();
  softmax_inplace(z);
  return z;
}

Tensor LogisticRegression::logits(Tape& t, const Tensor& x) const {
  return ops::linear(t, x, coef_t_, intercept_t_);
}

// ---------------------------------------------------------------- naive Bayes

namespace {

class GaussianNB final : public DownstreamModel {
 public:
  GaussianNB(const Matrix& x, std::span<const int> y, std::size_t num_classes) {
    num_features_ = static_cast<std::size_t>(x.cols());
    num_classes_ = num_classes;
    const Eigen::Index C = static_cast<Eigen::Index>(num_classes), P = x.cols();
    mean_ = Matrix::Zero(C, P);
    var_ = Matrix::Zero(C, P);
    log_prior_ = Vector::Constant(C, -std::numeric_limits<double>::infinity());
    std::vector<double> count(num_classes, 0.0);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const auto c = y[static_cast<std::size_t>(r)];
      mean_.row(c) += x.row(r);
      count[static_cast<std::size_t>(c)] += 1.0;
    }
    for (Eigen::Index c = 0; c < C; ++c)
      if (count[static_cast<std::size_t>(c)] > 0) mean_.row(c) /= count[static_cast<std::size_t>(c)];
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const auto c = y[static_cast<std::size_t>(r)];
      var_.row(c).array() += (x.row(r) - mean_.row(c)).array().square();
    }
    // Variance smoothing: 1e-9 of the largest overall feature variance.
    const Vector overall_mean = x.colwise().mean();
    const double max_var = (x.rowwise() - overall_mean.transpose()).array().square().colwise().mean().maxCoeff();
    const double eps = 1e-9 * std::max(max_var, 1e-300);
    for (Eigen::Index c = 0; c < C; ++c) {
      const double nc = count[static_cast<std::size_t>(c)];
      if (nc > 0) {
        var_.row(c) = var_.row(c) / nc;
        log_prior_(c) = std::log(nc / static_cast<double>(x.rows()));
      }
      var_.row(c).array() += eps;
    }
  }

  ModelKind kind() const override { return ModelKind::gaussian_nb; }

  Matrix predict_proba(const Matrix& x) const override {
    check_input(x);
    const Eigen::Index C = mean_.rows();
    Matrix jll(x.rows(), C);
    for (Eigen::Index c = 0; c < C; ++c) {
      const double norm = -0.5 * (2.0 * M_PI * var_.row(c).array()).log().sum();
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        jll(r, c) = log_prior_(c) + norm - 0.5 * ((x.row(r) - mean_.row(c)).array().square() / var_.row(c).array()).sum();
      }
    }
    softmax_inplace(jll);
    return jll;
  }

 private:
  Matrix mean_, var_;
  Vector log_prior_;
};

// ---------------------------------------------------------------- k-NN

class KNearest final : public DownstreamModel {
 public:
  KNearest(const Matrix& x, std::span<const int> y, std::size_t num_classes, std::size_t k)
      : x_(x), y_(y.begin(), y.end()), k_(std::min<std::size_t>(k, static_cast<std::size_t>(x.rows()))) {
    num_features_ = static_cast<std::size_t>(x.cols());
    num_classes_ = num_classes;
    norms_ = x_.rowwise().squaredNorm();
  }

  ModelKind kind() const override { return ModelKind::knn; }

  Matrix predict_proba(const Matrix& x) const override {
    Matrix out;
    std::vector<int> dummy;
    run(x, out, dummy);
    return out;
  }

  std::vector<int> predict(const Matrix& x) const override {
    Matrix p;
    std::vector<int> labels;
    run(x, p, labels);
    return labels;
  }

 private:
  // Vote fractions; the predicted label breaks vote ties by the nearest
  // neighbor among the tied classes.
  void run(const Matrix& x, Matrix& proba, std::vector<int>& labels) const {
    check_input(x);
    const Eigen::Index n = x.rows(), N = x_.rows();
    proba = Matrix::Zero(n, static_cast<Eigen::Index>(num_classes_));
    labels.assign(static_cast<std::size_t>(n), 0);
    constexpr Eigen::Index block = 256;
    std::vector<std::pair<double, Eigen::Index>> cand(static_cast<std::size_t>(N));
    for (Eigen::Index b0 = 0; b0 < n; b0 += block) {
      const Eigen::Index bn = std::min(block, n - b0);
      Matrix d = -2.0 * (x.middleRows(b0, bn) * x_.transpose());
      d.colwise() += x.middleRows(b0, bn).rowwise().squaredNorm();
      d.rowwise() += norms_.transpose();
      for (Eigen::Index i = 0; i < bn; ++i) {
        for (Eigen::Index j = 0; j < N; ++j) cand[static_cast<std::size_t>(j)] = {d(i, j), j};
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k_), cand.end());
        std::vector<std::size_t> votes(num_classes_, 0);
        for (std::size_t j = 0; j < k_; ++j) ++votes[static_cast<std::size_t>(y_[static_cast<std::size_t>(cand[j].second)])];
        const std::size_t top = *std::max_element(votes.begin(), votes.end());
        int label = 0;
        for (std::size_t j = 0; j < k_; ++j) {
          const int c = y_[static_cast<std::size_t>(cand[j].second)];
          if (votes[static_cast<std::size_t>(c)] == top) {
            label = c;
            break;
          }
        }
        labels[static_cast<std::size_t>(b0 + i)] = label;
        for (std::size_t c = 0; c < num_classes_; ++c)
          proba(b0 + i, static_cast<Eigen::Index>(c)) = static_cast<double>(votes[c]) / static_cast<double>(k_);
      }
    }
  }

  Matrix x_;
  std::vector<int> y_;
  Vector norms_;
  std::size_t k_;
};

// ---------------------------------------------------------------- MLP

class MlpClassifier final : public DownstreamModel {
 public:
  MlpClassifier(const Matrix& x, std::span<const int> y, std::size_t num_classes, const ModelOptions& opt) {
    num_features_ = static_cast<std::size_t>(x.cols());
    num_classes_ = num_classes;
    Rng rng("mlp", opt.seed);
    hidden_ = Dense(num_features_, opt.mlp_hidden, rng);
    out_ = Dense(opt.mlp_hidden, num_classes, rng);
    const ParamList params = this->params();

    std::vector<std::size_t> order(static_cast<std::size_t>(x.rows()));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const std::size_t n_val = order.size() >= 20 ? order.size() / 10 : 0;
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

    auto batch_tensor = [&](std::span<const std::size_t> rows) {
      std::vector<double> v(rows.size() * num_features_);
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < num_features_; ++j) v[i * num_features_ + j] = x(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(j));
      return Tensor::from({rows.size(), num_features_}, std::move(v));
    };
    auto labels_of = [&](std::span<const std::size_t> rows) {
      std::vector<int> l(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) l[i] = y[rows[i]];
      return l;
    };

    Adam adam(params, AdamConfig{opt.mlp_lr});
    const Tensor xval = n_val ? batch_tensor(val) : Tensor();
    const std::vector<int> yval = labels_of(val);
    double best = std::numeric_limits<double>::infinity();
    auto best_snap = snapshot(params);
    std::size_t since_best = 0;
    constexpr std::size_t batch = 128;
    for (std::size_t epoch = 0; epoch < opt.mlp_epochs; ++epoch) {
      rng.shuffle(fit);
      for (std::size_t b = 0; b < fit.size(); b += batch) {
        std::span<const std::size_t> rows(fit.data() + b, std::min(batch, fit.size() - b));
        Tape t;
        Tensor loss = ops::cross_entropy(t, forward(t, batch_tensor(rows)), labels_of(rows));
        adam.zero_grad();
        t.backward(loss);
        adam.step();
      }
      if (!n_val) continue;
      Tape t;
      t.set_grad_enabled(false);
      const double vl = ops::cross_entropy(t, forward(t, xval), yval).item();
      if (vl < best - 1e-9) {
        best = vl;
        best_snap = snapshot(params);
        since_best = 0;
      } else if (++since_best >= opt.mlp_patience) {
        break;
      }
    }
    if (n_val) restore(params, best_snap);
    for (auto p : params) p.value.set_requires_grad(false);
  }

  ModelKind kind() const override { return ModelKind::mlp; }
  bool differentiable() const override { return true; }

  Tensor logits(Tape& t, const Tensor& x) const override { return forward(t, x); }

  Matrix predict_proba(const Matrix& x) const override {
    check_input(x);
    Tape t;
    t.set_grad_enabled(false);
    Tensor xt = Tensor::from({static_cast<std::size_t>(x.rows()), num_features_},
                             std::vector<double>(x.data(), x.data() + x.size()));
    Tensor z = forward(t, xt);
    Matrix p = Eigen::Map<const Matrix>(z.data().data(), x.rows(), static_cast<Eigen::Index>(num_classes_));
    softmax_inplace(p);
    return p;
  }

 private:
  Tensor forward(Tape& t, const Tensor& x) const { return out_.forward(t, ops::relu(t, hidden_.forward(t, x))); }
  ParamList params() const {
    ParamList p;
    append_params(p, "hidden.", hidden_.params());
    append_params(p, "out.", out_.params());
    return p;
  }

  Dense hidden_, out_;
};

// ---------------------------------------------------------------- forest

class Forest final : public DownstreamModel {
 public:
  Forest(const Matrix& x, std::span<const int> y, std::size_t num_classes, const ModelOptions& opt)
      : depth_(opt.forest_depth) {
    num_features_ = static_cast<std::size_t>(x.cols());
    num_classes_ = num_classes;
    const std::size_t n = static_cast<std::size_t>(x.rows());
    mtry_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(num_features_))));
    for (std::size_t t = 0; t < opt.forest_trees; ++t) {
      Rng rng("forest", opt.seed * 1000003ULL + t);
      std::vector<std::size_t> rows(n);
      for (auto& r : rows) r = rng.index(n);
      Tree tree;
      grow(tree, x, y, rows, 0, rng);
      trees_.push_back(std::move(tree));
    }
  }

  ModelKind kind() const override { return ModelKind::forest; }

  Matrix predict_proba(const Matrix& x) const override {
    check_input(x);
    Matrix p = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(num_classes_));
    for (const auto& tree : trees_) {
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        std::size_t node = 0;
        while (tree[node].feature >= 0) {
          const auto& nd = tree[node];
          node = x(r, nd.feature) <= nd.threshold ? nd.left : nd.right;
        }
        for (std::size_t c = 0; c < num_classes_; ++c) p(r, static_cast<Eigen::Index>(c)) += tree[node].dist[c];
      }
    }
    p /= static_cast<double>(trees_.size());
    return p;
  }

 private:
  struct Node {
    Eigen::Index feature = -1;
    double threshold = 0;
    std::size_t left = 0, right = 0;
    std::vector<double> dist;
  };
  using Tree = std::vector<Node>;

  static double gini(const std::vector<double>& counts, double total) {
    double s = 0.0;
    for (double c : counts) s += c * c;
    return 1.0 - s / (total * total);
  }

  std::size_t grow(Tree& tree, const Matrix& x, std::span<const int> y, std::vector<std::size_t>& rows,
                   std::size_t depth, Rng& rng) {
    const std::size_t id = tree.size();
    tree.emplace_back();
    std::vector<double> counts(num_classes_, 0.0);
    for (auto r : rows) counts[static_cast<std::size_t>(y[r])] += 1.0;
    const double total = static_cast<double>(rows.size());
    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;
    auto make_leaf = [&] {
      tree[id].dist.resize(num_classes_);
      for (std::size_t c = 0; c < num_classes_; ++c) tree[id].dist[c] = counts[c] / total;
      return id;
    };
    if (depth >= depth_ || pure || rows.size() < 2) return make_leaf();

    std::vector<std::size_t> feats(num_features_);
    std::iota(feats.begin(), feats.end(), 0);
    rng.shuffle(feats);
    feats.resize(mtry_);

    const double parent = gini(counts, total);
    double best_gain = 1e-12;
    Eigen::Index best_f = -1;
    double best_thr = 0;
    std::vector<std::pair<double, int>> vals(rows.size());
    for (auto f : feats) {
      for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {x(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(f)), y[rows[i]]};
      std::sort(vals.begin(), vals.end());
      std::vector<double> left(num_classes_, 0.0), right = counts;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        left[static_cast<std::size_t>(vals[i].second)] += 1.0;
        right[static_cast<std::size_t>(vals[i].second)] -= 1.0;
        if (vals[i].first == vals[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1), nr = total - nl;
        const double gain = parent - (nl / total) * gini(left, nl) - (nr / total) * gini(right, nr);
        if (gain > best_gain) {
          best_gain = gain;
          best_f = static_cast<Eigen::Index>(f);
          best_thr = 0.5 * (vals[i].first + vals[i + 1].first);
        }
      }
    }
    if (best_f < 0) return make_leaf();
    std::vector<std::size_t> lrows, rrows;
    for (auto r : rows) (x(static_cast<Eigen::Index>(r), best_f) <= best_thr ? lrows : rrows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    tree[id].feature = best_f;
    tree[id].threshold = best_thr;
    const std::size_t l = grow(tree, x, y, lrows, depth + 1, rng);
    const std::size_t r = grow(tree, x, y, rrows, depth + 1, rng);
    tree[id].left = l;
    tree[id].right = r;
    return id;
  }

  std::size_t depth_;
  std::size_t mtry_ = 1;
  std::vector<Tree> trees_;
};

}  // namespace

std::unique_ptr<DownstreamModel> fit(ModelKind kind, const Matrix& x, std::span<const int> y, std::size_t num_classes,
                                     const ModelOptions& opt) {
  check_fit_input(x, y, num_classes);
  switch (kind) {
    case ModelKind::logistic_regression:
      return LogisticRegression::train(x, y, num_classes, opt.l2);
    case ModelKind::gaussian_nb:
      return std::make_unique<GaussianNB>(x, y, num_classes);
    case ModelKind::knn:
      if (opt.knn_k == 0) throw ConfigError("knn: k must be positive");
      return std::make_unique<KNearest>(x, y, num_classes, opt.knn_k);
    case ModelKind::mlp:
      return std::make_unique<MlpClassifier>(x, y, num_classes, opt);
    case ModelKind::forest:
      if (opt.forest_trees == 0) throw ConfigError("forest: needs at least one tree");
      return std::make_unique<Forest>(x, y, num_classes, opt);
  }
  throw ConfigError("fit: unknown model kind");
}

// ---------------------------------------------------------------- metrics

nlohmann::json Metrics::to_json() const {
  nlohmann::json j = {{"accuracy", accuracy}, {"precision", precision}, {"recall", recall}, {"f1", f1}};
  if (!warnings.empty()) j["warnings"] = warnings;
  return j;
}

Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred, std::size_t num_classes) {
  if (y_true.size() != y_pred.size() || y_true.empty()) {
    throw DimensionError("metrics: " + std::to_string(y_true.size()) + " labels vs " + std::to_string(y_pred.size()) +
                         " predictions");
  }
  std::vector<double> tp(num_classes, 0), predicted(num_classes, 0), actual(num_classes, 0);
  double correct = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const auto t = static_cast<std::size_t>(y_true[i]), p = static_cast<std::size_t>(y_pred[i]);
    if (t >= num_classes || p >= num_classes) throw ContractError("metrics: class index out of range");
    actual[t] += 1;
    predicted[p] += 1;
    if (t == p) {
      tp[t] += 1;
      correct += 1;
    }
  }
  Metrics m;
  m.accuracy = correct / static_cast<double>(y_true.size());
  for (std::size_t c = 0; c < num_classes; ++c) {
    double prec = 0.0, rec = 0.0;
    if (predicted[c] > 0) {
      prec = tp[c] / predicted[c];
    } else {
      m.warnings.push_back("class " + std::to_string(c) + " never predicted; precision set to 0");
    }
    if (actual[c] > 0) {
      rec = tp[c] / actual[c];
    } else {
      m.warnings.push_back("class " + std::to_string(c) + " absent from labels; recall set to 0");
    }
    m.precision += prec;
    m.recall += rec;
    m.f1 += (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  const double k = static_cast<double>(num_classes);
  m.precision /= k;
  m.recall /= k;
  m.f1 /= k;
  return m;
}

Metrics evaluate(const DownstreamModel& model, const Matrix& x, std::span<const int> y) {
  if (static_cast<std::size_t>(x.cols()) != model.num_features()) {
    throw SchemaError("evaluate: features have " + std::to_string(x.cols()) + " columns, model expects " +
                      std::to_string(model.num_features()));
  }
  return compute_metrics(y, model.predict(x), model.num_classes());
}

namespace {
MetricSummary summarize(std::vector<double> v) {
  MetricSummary s;
  const double n = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / n);
  s.values = std::move(v);
  return s;
}

nlohmann::json summary_json(const MetricSummary& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"values", s.values}};
}
}  // namespace

MetricsAggregate compare(std::span<const Metrics> runs) {
  if (runs.size() < 2) throw ContractError("compare: needs at least 2 runs, got " + std::to_string(runs.size()));
  std::vector<double> a, p, r, f;
  for (const auto& m : runs) {
    for (double v : {m.accuracy, m.precision, m.recall, m.f1}) {
      if (!(v >= 0.0 && v <= 1.0)) throw ComparisonError("compare: metric outside [0, 1]");
    }
    a.push_back(m.accuracy);
    p.push_back(m.precision);
    r.push_back(m.recall);
    f.push_back(m.f1);
  }
  return {summarize(a), summarize(p), summarize(r), summarize(f)};
}

nlohmann::json MetricsAggregate::to_json() const {
  return {{"accuracy", summary_json(accuracy)},
          {"precision", summary_json(precision)},
          {"recall", summary_json(recall)},
          {"f1", summary_json(f1)}};
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("roc_auc: size mismatch");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t q = i; q <= j; ++q) rank[idx[q]] = avg;
    i = j + 1;
  }
  double pos = 0, neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      pos += 1;
      rank_sum += rank[i];
    } else {
      neg += 1;
    }
  }
  if (pos == 0 || neg == 0) throw ContractError("roc_auc: needs both classes");
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

}  // namespace tfwt
