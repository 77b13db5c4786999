#include <cmath>

#include "doctest.h"
#include "support/testing.hpp"
#include "tfwt/errors.hpp"
#include "tfwt/nn.hpp"
#include "tfwt/ops.hpp"

using namespace tfwt;

namespace {

Tensor random_tensor(Shape s, Rng& rng, bool grad = true) {
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = rng.normal();
  return Tensor::from(std::move(s), std::move(v), grad);
}

}  // namespace

TEST_CASE("matmul small products") {
  Tape t;
  auto id = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto b = Tensor::from({2, 1}, {3, 4});
  CHECK(ops::matmul(t, id, b).values() == std::vector<double>{3, 4});

  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto c = Tensor::from({2, 1}, {5, 6});
  // 1*5 + 2*6, 3*5 + 4*6
  CHECK(ops::matmul(t, a, c).values() == std::vector<double>{17, 39});

  CHECK_THROWS_AS(ops::matmul(t, Tensor::zeros({2, 3}), Tensor::zeros({4, 5})), DimensionError);
}

TEST_CASE("softmax rows") {
  Tape t;
  auto s = ops::softmax_rows(t, Tensor::from({1, 3}, {0, 0, 0}));
  for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  s = ops::softmax_rows(t, Tensor::from({1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  CHECK(s[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(s[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-14));
  CHECK(s[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-14));

  s = ops::softmax_rows(t, Tensor::from({1, 2}, {1000, 0}));
  CHECK(std::isfinite(s[0]));
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] < 1e-300);
}

TEST_CASE("reverse mode basic gradients") {
  {
    Tape t;
    auto x = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
    t.backward(ops::sum(t, x));
    for (double g : x.grad_view()) CHECK(g == 1.0);
  }
  {
    Tape t;
    auto x = Tensor::from({2}, {1, 2}, true);
    t.backward(ops::sum(t, ops::mul(t, x, x)));
    CHECK(x.grad_view()[0] == 2.0);
    CHECK(x.grad_view()[1] == 4.0);
  }
}

TEST_CASE("relu, dropout in eval mode, identity linear") {
  Tape t;
  Rng rng(1);
  CHECK(ops::relu(t, Tensor::from({2}, {-1, 2})).values() == std::vector<double>{0, 2});

  auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto d = ops::dropout(t, x, 0.2, false, rng);
  CHECK(d.same_storage(x));

  auto eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(ops::linear(t, x, eye, Tensor::zeros({3})).values() == x.values());
}

TEST_CASE("dropout in training mode keeps the expectation") {
  Tape t;
  Rng rng(7);
  auto x = Tensor::filled({200, 50}, 1.0);
  auto d = ops::dropout(t, x, 0.2, true, rng);
  double s = 0;
  std::size_t zeros = 0;
  for (double v : d.values()) {
    s += v;
    zeros += v == 0.0;
    if (v != 0.0) CHECK(v == doctest::Approx(1.25));
  }
  CHECK(s / 10000.0 == doctest::Approx(1.0).epsilon(0.05));
  CHECK(static_cast<double>(zeros) / 10000.0 == doctest::Approx(0.2).epsilon(0.1));
}

TEST_CASE("two-layer net gradient matches finite differences") {
  Rng rng(3);
  Dense l1(4, 6, rng), l2(6, 3, rng);
  auto x = random_tensor({5, 4}, rng, false);
  const std::vector<int> y{0, 1, 2, 1, 0};
  ParamList params;
  append_params(params, "l1.", l1.params());
  append_params(params, "l2.", l2.params());
  // Nudge biases off zero so no relu sits exactly on its kink.
  for (auto& p : params)
    for (auto& v : Tensor(p.value).mutable_data()) v += 0.01 * rng.normal();
  auto r = testing::check_gradients(params, [&](Tape& t) {
    return ops::cross_entropy(t, l2.forward(t, ops::relu(t, l1.forward(t, x))), y);
  });
  CHECK(r.nonzero > 0);
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}

TEST_CASE("op gradients: layernorm, softmax, bmm, gather, exp, clamp, minimum") {
  Rng rng(11);
  auto x = random_tensor({3, 4}, rng);
  auto g = random_tensor({4}, rng);
  auto b = random_tensor({4}, rng);
  auto a3 = random_tensor({2, 3, 4}, rng);
  auto b3 = random_tensor({2, 5, 4}, rng);
  auto table = random_tensor({5, 4}, rng);
  auto m = random_tensor({3, 4}, rng);
  const std::vector<std::size_t> idx{4, 0, 4};
  ParamList params{{"x", x}, {"g", g}, {"b", b}, {"a3", a3}, {"b3", b3}, {"table", table}, {"m", m}};
  auto r = testing::check_gradients(params, [&](Tape& t) {
    Tensor l = ops::layernorm(t, x, g, b);
    Tensor s = ops::softmax_rows(t, ops::add(t, l, ops::gather_rows(t, table, idx)));
    Tensor p = ops::bmm(t, a3, b3, true);
    Tensor e = ops::exp(t, ops::clamp(t, ops::scale(t, x, 0.5), -0.7, 0.7));
    Tensor mn = ops::minimum(t, m, x);
    return ops::add(t, ops::add(t, ops::sum(t, ops::mul(t, s, x)), ops::mean(t, ops::mul(t, p, p))),
                    ops::add(t, ops::sum(t, e), ops::sum(t, ops::mul(t, mn, mn))));
  });
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}

TEST_CASE("split and merge heads are inverse") {
  Tape t;
  Rng rng(5);
  auto x = random_tensor({2 * 3, 8}, rng, false);
  auto s = ops::split_heads(t, x, 2, 3, 2);
  CHECK(s.shape() == Shape{4, 3, 4});
  CHECK(ops::merge_heads(t, s, 2, 2).values() == x.values());
}

TEST_CASE("cross entropy rejects out-of-range labels") {
  Tape t;
  const std::vector<int> y{0, 3};
  CHECK_THROWS_AS(ops::cross_entropy(t, Tensor::zeros({2, 3}), y), ContractError);
}

TEST_CASE("check_finite names the site") {
  const std::vector<double> v{1.0, std::nan("")};
  try {
    check_finite(v, "unit");
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("unit") != std::string::npos);
  }
}

TEST_CASE("adam moves parameters against the gradient") {
  auto p = Tensor::from({2}, {1.0, -1.0}, true);
  Adam opt(std::vector<Tensor>{p}, AdamConfig{0.1});
  Tape t;
  t.backward(ops::sum(t, ops::mul(t, p, p)));
  opt.step();
  // First Adam step has magnitude lr in each coordinate.
  CHECK(p[0] == doctest::Approx(0.9));
  CHECK(p[1] == doctest::Approx(-0.9));
}

TEST_CASE("derived seeds are stable and component-specific") {
  CHECK(derive_seed("a", 1) == derive_seed("a", 1));
  CHECK(derive_seed("a", 1) != derive_seed("b", 1));
  CHECK(derive_seed("a", 1) != derive_seed("a", 2));
}
