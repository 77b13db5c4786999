#include <cmath>

#include "doctest.h"
#include "support/testing.hpp"
#include "tfwt/downstream.hpp"
#include "tfwt/errors.hpp"
#include "tfwt/ops.hpp"

using namespace tfwt;

namespace {

struct Toy {
  Matrix x;
  std::vector<int> y;
};

Toy blobs(std::size_t n, double gap, std::uint64_t seed) {
  Rng rng(seed);
  Toy t{Matrix(static_cast<Eigen::Index>(n), 2), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    t.x(static_cast<Eigen::Index>(i), 0) = rng.normal() + (c ? gap : -gap);
    t.x(static_cast<Eigen::Index>(i), 1) = rng.normal();
    t.y.push_back(c);
  }
  return t;
}

double accuracy(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
  return static_cast<double>(hit) / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("logistic regression separates separable data") {
  Matrix x(4, 2);
  x << -2, 0, -1, 1, 1, -1, 2, 0;
  const std::vector<int> y{0, 0, 1, 1};
  auto m = fit(ModelKind::logistic_regression, x, y, 2);
  CHECK(accuracy(m->predict(x), y) == 1.0);
}

TEST_CASE("logistic regression on XOR cannot beat 3/4") {
  Matrix x(4, 2);
  x << 0, 0, 0, 1, 1, 0, 1, 1;
  const std::vector<int> y{0, 1, 1, 0};
  auto m = fit(ModelKind::logistic_regression, x, y, 2);
  CHECK(accuracy(m->predict(x), y) <= 0.75);
  // Brute force over linear rules sign(a*x0 + b*x1 + c): none exceeds 3/4.
  double best = 0;
  for (double a = -2; a <= 2; a += 0.25)
    for (double b = -2; b <= 2; b += 0.25)
      for (double c = -2; c <= 2; c += 0.125) {
        std::vector<int> p;
        for (int i = 0; i < 4; ++i) p.push_back(a * x(i, 0) + b * x(i, 1) + c > 0 ? 1 : 0);
        best = std::max(best, accuracy(p, y));
      }
  CHECK(best == 0.75);
}

TEST_CASE("logistic regression logits agree with probabilities") {
  const Toy d = blobs(60, 1.0, 1);
  auto m = fit(ModelKind::logistic_regression, d.x, d.y, 2);
  Tape t;
  std::vector<double> flat(d.x.data(), d.x.data() + d.x.size());
  auto probs = ops::softmax_rows(t, m->logits(t, Tensor::from({60, 2}, flat)));
  const Matrix p = m->predict_proba(d.x);
  for (Eigen::Index i = 0; i < 60; ++i)
    for (Eigen::Index c = 0; c < 2; ++c) CHECK(probs[static_cast<std::size_t>(i * 2 + c)] == doctest::Approx(p(i, c)).epsilon(1e-12));
}

TEST_CASE("Gaussian NB with means +-3 splits at zero") {
  // Symmetric sample: +-(3 + offsets) so fitted means are exactly +-3 and variances equal.
  const double offs[] = {-1.5, -0.5, 0.0, 0.5, 1.5};
  Matrix x(10, 1);
  std::vector<int> y;
  for (int i = 0; i < 5; ++i) {
    x(i, 0) = -3 + offs[i];
    x(5 + i, 0) = 3 + offs[i];
  }
  for (int i = 0; i < 10; ++i) y.push_back(i < 5 ? 0 : 1);
  auto m = fit(ModelKind::gaussian_nb, x, y, 2);
  Matrix q(3, 1);
  q << 0.0, -0.01, 0.01;
  const Matrix p = m->predict_proba(q);
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p(1, 0) > 0.5);
  CHECK(p(2, 1) > 0.5);
  // Closed form at x = 1: posterior ratio exp(2 * 3 * 1 / s2) with s2 the pooled variance.
  double s2 = 0;
  for (double o : offs) s2 += o * o;
  s2 /= 5.0;
  Matrix one(1, 1);
  one << 1.0;
  const Matrix p1 = m->predict_proba(one);
  CHECK(p1(0, 1) / p1(0, 0) == doctest::Approx(std::exp(6.0 / s2)).epsilon(1e-6));
}

TEST_CASE("1-NN picks the nearest point") {
  Matrix x(2, 2);
  x << 0, 0, 1, 1;
  const std::vector<int> y{0, 1};
  ModelOptions o;
  o.knn_k = 1;
  auto m = fit(ModelKind::knn, x, y, 2, o);
  Matrix q(1, 2);
  q << 0.1, 0.1;
  CHECK(m->predict(q) == std::vector<int>{0});
}

TEST_CASE("unknown model kind") {
  CHECK_THROWS_AS(model_kind_from_string("svm"), ConfigError);
  CHECK(model_kind_from_string("rf") == ModelKind::forest);
  CHECK(model_kind_from_string(to_string(ModelKind::mlp)) == ModelKind::mlp);
}

TEST_CASE("every model fits blobs, returns normalized probabilities and is seed-deterministic") {
  const Toy tr = blobs(300, 1.5, 2), te = blobs(200, 1.5, 3);
  for (auto kind : {ModelKind::logistic_regression, ModelKind::gaussian_nb, ModelKind::knn, ModelKind::mlp,
                    ModelKind::forest}) {
    CAPTURE(to_string(kind));
    ModelOptions o;
    o.seed = 4;
    auto a = fit(kind, tr.x, tr.y, 2, o);
    auto b = fit(kind, tr.x, tr.y, 2, o);
    const Matrix p = a->predict_proba(te.x);
    for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p == b->predict_proba(te.x));
    CHECK(accuracy(a->predict(te.x), te.y) > 0.85);
  }
}

TEST_CASE("fit and evaluate contracts") {
  Matrix x(3, 1);
  x << 1, 2, 3;
  const std::vector<int> one_class{0, 0, 0};
  CHECK_THROWS_AS(fit(ModelKind::logistic_regression, x, one_class, 2), FitError);
  const std::vector<int> y{0, 1, 0};
  Matrix bad = x;
  bad(1, 0) = std::nan("");
  CHECK_THROWS_AS(fit(ModelKind::gaussian_nb, bad, y, 2), NumericError);
  auto m = fit(ModelKind::gaussian_nb, x, y, 2);
  CHECK_THROWS_AS(evaluate(*m, Matrix::Zero(3, 2), y), SchemaError);
}

TEST_CASE("metric arithmetic") {
  {
    const std::vector<int> y{0, 1, 1, 0};
    const Metrics m = compute_metrics(y, y, 2);
    CHECK(m.accuracy == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
  }
  {
    const std::vector<int> y{0, 0, 1, 1}, p{0, 0, 0, 0};
    const Metrics m = compute_metrics(y, p, 2);
    CHECK(m.accuracy == 0.5);
    CHECK(m.recall == 0.5);
    CHECK(m.precision == doctest::Approx(0.25));  // (0.5 + 0) / 2
    CHECK(!m.warnings.empty());
  }
  {
    // Confusion [[8, 2], [3, 7]] (rows = truth).
    std::vector<int> y, p;
    auto add = [&](int t, int q, int n) {
      for (int i = 0; i < n; ++i) {
        y.push_back(t);
        p.push_back(q);
      }
    };
    add(0, 0, 8);
    add(0, 1, 2);
    add(1, 0, 3);
    add(1, 1, 7);
    const Metrics m = compute_metrics(y, p, 2);
    const double p0 = 8.0 / 11.0, r0 = 0.8, p1 = 7.0 / 9.0, r1 = 0.7;
    CHECK(m.accuracy == doctest::Approx(0.75));
    CHECK(m.precision == doctest::Approx((p0 + p1) / 2));
    CHECK(m.recall == doctest::Approx((r0 + r1) / 2));
    CHECK(m.f1 == doctest::Approx((2 * p0 * r0 / (p0 + r0) + 2 * p1 * r1 / (p1 + r1)) / 2));
    const std::vector<int> only0_y(y.begin(), y.begin() + 10), only0_p(p.begin(), p.begin() + 10);
    const Metrics c0 = compute_metrics(only0_y, only0_p, 2);
    CHECK(c0.accuracy == doctest::Approx(0.8));
  }
}

TEST_CASE("cross-run aggregation") {
  Metrics a, b;
  a.accuracy = 0.6;
  b.accuracy = 0.8;
  const std::vector<Metrics> two{a, b};
  const auto agg = compare(two);
  CHECK(agg.accuracy.mean == doctest::Approx(0.7));
  CHECK(agg.accuracy.stddev == doctest::Approx(0.1));
  const std::vector<Metrics> same{a, a, a};
  CHECK(compare(same).accuracy.stddev == 0.0);
  const std::vector<Metrics> one{a};
  CHECK_THROWS_AS(compare(one), ContractError);
  Metrics bad;
  bad.accuracy = 1.5;
  const std::vector<Metrics> broken{a, bad};
  CHECK_THROWS_AS(compare(broken), ComparisonError);
}

TEST_CASE("ROC AUC by ranks") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(roc_auc(s, y) == doctest::Approx(0.75));
  const std::vector<double> tied{0.5, 0.5};
  const std::vector<int> yt{0, 1};
  CHECK(roc_auc(tied, yt) == doctest::Approx(0.5));
}
