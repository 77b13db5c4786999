#include <numeric>

#include "doctest.h"
#include "support/testing.hpp"
#include "tfwt/errors.hpp"
#include "tfwt/ops.hpp"
#include "tfwt/synthetic.hpp"
#include "tfwt/weighting.hpp"

using namespace tfwt;

namespace {

EncoderConfig small() {
  EncoderConfig c;
  c.layers = 1;
  c.heads = 2;
  c.d_model = 8;
  c.dropout = 0.1;
  return c;
}

struct Setup {
  Dataset train;
  std::vector<std::size_t> fit_rows, val_rows;
  std::unique_ptr<DownstreamModel> surrogate;
};

Setup setup(const Dataset& ds, std::uint64_t seed) {
  Setup s;
  s.train = ds;
  std::vector<std::size_t> all(ds.n);
  std::iota(all.begin(), all.end(), 0);
  std::tie(s.fit_rows, s.val_rows) = stratified_holdout(ds, all, 0.1, seed);
  s.surrogate = pretrain_downstream(ds.subset(s.fit_rows), compute_stats(ds), ModelKind::logistic_regression);
  return s;
}

}  // namespace

TEST_CASE("untrained weighter is the identity") {
  const Dataset ds = testing::mixed_dataset(40, 4, 2, 1);
  const WeighterModel m = WeighterModel::create(ds, small(), 3);
  const Transformed tr = transform(m, ds);
  CHECK(tr.w.values == Matrix::Ones(40, 4));
  CHECK(tr.features == numeric_view(ds, m.stats));
  const std::vector<std::size_t> one{5};
  const Transformed single = transform(m, ds.subset(one));
  CHECK(single.w.rows() == 1);
  CHECK(single.w.cols() == 4);
  CHECK(transform(m, ds).features == tr.features);
}

TEST_CASE("epoch 0 loss equals the raw surrogate loss; training lowers it") {
  const Dataset ds = synthetic::gated(800, 2);
  Setup s = setup(ds, 2);
  WeighterModel m = WeighterModel::create(ds, small(), 2);
  TrainConfig tc;
  tc.epochs = 8;
  tc.lr = 3e-3;
  tc.patience = 8;
  tc.seed = 2;
  const TrainResult r = train(m, ds, *s.surrogate, s.fit_rows, s.val_rows, tc);

  const Dataset fit_ds = ds.subset(s.fit_rows);
  const Matrix view = numeric_view(fit_ds, m.stats);
  Tape t;
  std::vector<double> flat(view.data(), view.data() + view.size());
  const double raw = ops::cross_entropy(t, s.surrogate->logits(t, Tensor::from({fit_ds.n, static_cast<std::size_t>(view.cols())}, flat)),
                                        fit_ds.labels)
                         .item();
  REQUIRE(!r.log.empty());
  CHECK(r.log[0].epoch == 0);
  CHECK(r.log[0].train_loss == doctest::Approx(raw).epsilon(1e-12));
  CHECK(r.log[r.best_epoch].train_loss < r.log[0].train_loss);
}

TEST_CASE("training is deterministic per seed") {
  const Dataset ds = synthetic::gated(300, 4);
  Setup s = setup(ds, 4);
  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 4;
  WeighterModel a = WeighterModel::create(ds, small(), 4), b = WeighterModel::create(ds, small(), 4);
  const TrainResult ra = train(a, ds, *s.surrogate, s.fit_rows, s.val_rows, tc);
  const TrainResult rb = train(b, ds, *s.surrogate, s.fit_rows, s.val_rows, tc);
  CHECK(snapshot(a.params()) == snapshot(b.params()));
  for (std::size_t e = 0; e < ra.log.size(); ++e) CHECK(ra.log[e].val_loss == rb.log[e].val_loss);
  CHECK(a.weights(ds) == b.weights(ds));
}

TEST_CASE("weighter contracts") {
  const Dataset ds = testing::mixed_dataset(30, 3, 1, 5);
  Setup s = setup(ds, 5);
  WeighterModel m = WeighterModel::create(ds, small(), 5);
  const Dataset other = synthetic::gated(30, 1);
  CHECK_THROWS_AS(m.weights(other), SchemaError);

  auto nb = pretrain_downstream(ds, m.stats, ModelKind::gaussian_nb);
  CHECK_THROWS_AS(train(m, ds, *nb, s.fit_rows, s.val_rows, TrainConfig{}), ConfigError);

  TrainConfig bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  TrainConfig back = TrainConfig::from_json(TrainConfig{}.to_json());
  CHECK(back.to_json() == TrainConfig{}.to_json());
}

TEST_CASE("column offsets shift inference weights") {
  const Dataset ds = testing::mixed_dataset(20, 3, 1, 6);
  WeighterModel m = WeighterModel::create(ds, small(), 6);
  m.column_offset = {0.1, 0.0, -0.05};
  const Matrix w = m.weights(ds);
  CHECK(w.col(0).isApprox(Matrix::Constant(20, 1, 1.1), 1e-15));
  CHECK(w.col(2).isApprox(Matrix::Constant(20, 1, 0.95), 1e-15));
}

TEST_CASE("gradients through the full weighter match finite differences") {
  const Dataset ds = testing::mixed_dataset(8, 4, 1, 7);
  EncoderConfig cfg = small();
  cfg.dropout = 0.0;
  WeighterModel m = WeighterModel::create(ds, cfg, 7);
  Rng rng(7);
  for (auto& v : m.decoder.out_weight().mutable_data()) v = 0.5 * rng.normal();
  auto sur = pretrain_downstream(ds, m.stats, ModelKind::logistic_regression);
  const Matrix view = numeric_view(ds, m.stats);
  const NumericLayout lay = numeric_layout(ds);
  std::vector<double> flat(view.data(), view.data() + view.size());
  const Tensor x = Tensor::from({ds.n, static_cast<std::size_t>(view.cols())}, flat);
  std::vector<std::size_t> rows(ds.n);
  std::iota(rows.begin(), rows.end(), 0);
  auto r = testing::check_gradients(m.params(), [&](Tape& t) {
    Rng unused(0);
    Tensor w = m.forward(t, ds, rows, false, unused);
    return ops::cross_entropy(t, sur->logits(t, apply_weights(t, w, x, lay)), ds.labels);
  });
  CHECK(r.nonzero > 500);
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}
