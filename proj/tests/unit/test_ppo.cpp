#include <cmath>

#include "doctest.h"
#include "support/testing.hpp"
#include "tfwt/errors.hpp"
#include "tfwt/ppo.hpp"
#include "tfwt/synthetic.hpp"

using namespace tfwt;

namespace {

Tensor state_of(const Matrix& w) {
  auto s = state_features(w);
  return Tensor::from({1, s.size()}, s);
}

RedundancyEnv random_env(std::size_t n, std::size_t k, std::uint64_t seed) {
  RedundancyEnv env;
  env.base = Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  Rng rng(seed);
  for (Eigen::Index i = 0; i < env.base.size(); ++i) env.base.data()[i] = rng.normal();
  env.discrete.assign(k, 0);
  return env;
}

// log-density of the current policy for a transition, straight from its action.
double current_log_prob(const PPOAgent& agent, const Transition& tr, const Matrix& w, double eps_w) {
  Tape t;
  t.set_grad_enabled(false);
  const PolicyOutput pol = policy_forward(t, state_of(w), agent.actor);
  const CellGaussian g = cell_distribution(w, pol.offset.values(), pol.log_std.values(), eps_w);
  return gaussian_log_prob(tr.action, g.mu, g.sigma);
}

std::vector<std::vector<double>> values_of(const ParamList& p) { return snapshot(p); }

}  // namespace

TEST_CASE("actor at init: mean equals w, sigma equals sigma0") {
  Rng rng(1);
  ActorNet actor(3, 16, 0.05, rng);
  const Matrix w = Matrix::Constant(4, 3, 0.7);
  Tape t;
  const PolicyOutput pol = policy_forward(t, state_of(w), actor);
  for (double v : pol.offset.values()) CHECK(v == 0.0);
  for (double v : pol.log_std.values()) CHECK(v == doctest::Approx(std::log(0.05)).epsilon(1e-15));
  const CellGaussian g = cell_distribution(w, pol.offset.values(), pol.log_std.values(), 0.1);
  CHECK(g.mu == w);
  CHECK((g.sigma.array() - 0.05).abs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(policy_forward(t, Tensor::zeros({1, 5}), actor), DimensionError);
}

TEST_CASE("log-prob at the mean") {
  const Matrix mu = Matrix::Constant(5, 2, 1.0);
  Matrix sigma(5, 2);
  sigma.col(0).setConstant(0.1);
  sigma.col(1).setConstant(0.3);
  double want = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) want += -0.5 * std::log(2 * M_PI * sigma.data()[i] * sigma.data()[i]);
  CHECK(gaussian_log_prob(mu, mu, sigma) == doctest::Approx(want).epsilon(1e-14));

  Tape t;
  auto off = Tensor::from({1, 2}, {0.0, 0.0});
  auto ls = Tensor::from({1, 2}, {std::log(0.1), std::log(0.3)});
  const std::vector<double> zero{0.0, 0.0};
  CHECK(column_log_prob(t, off, ls, zero, zero, 5, 0.1).item() == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("column log-prob equals the cell-wise density and has correct gradients") {
  Rng rng(2);
  const Matrix w = Matrix::Random(6, 3).array() + 1.0;
  const std::vector<double> offset{0.03, -0.05, 0.2}, log_std{-2.0, -1.5, -3.0};
  const CellGaussian g = cell_distribution(w, offset, log_std, 0.1);
  CHECK(g.mu(0, 2) == doctest::Approx(w(0, 2) + 0.1));
  const Matrix a = sample_action(g.mu, g.sigma, rng);
  std::vector<double> s1(3), s2(3);
  for (Eigen::Index c = 0; c < 3; ++c) {
    s1[static_cast<std::size_t>(c)] = (a.col(c) - w.col(c)).sum();
    s2[static_cast<std::size_t>(c)] = (a.col(c) - w.col(c)).squaredNorm();
  }
  Tape t;
  auto off = Tensor::from({1, 3}, offset, true);
  auto ls = Tensor::from({1, 3}, log_std, true);
  CHECK(column_log_prob(t, off, ls, s1, s2, 6, 0.1).item() ==
        doctest::Approx(gaussian_log_prob(a, g.mu, g.sigma)).epsilon(1e-12));

  auto off_in = Tensor::from({1, 3}, {0.03, -0.05, 0.04}, true);
  auto r = testing::check_gradients({{"offset", off_in}, {"log_std", ls}}, [&](Tape& tt) {
    return column_log_prob(tt, off_in, ls, s1, s2, 6, 0.1);
  });
  CHECK_MESSAGE(r.max_rel_error < 1e-6, r.worst);
}

TEST_CASE("log-std clamp") {
  Rng rng(3);
  ActorNet actor(2, 8, 0.05, rng);
  auto b = actor.log_std_head.bias.mutable_data();
  b[0] = 10.0;
  b[1] = -10.0;
  Tape t;
  const auto ls = policy_forward(t, state_of(Matrix::Ones(3, 2)), actor).log_std.values();
  CHECK(ls[0] == kLogStdMax);
  CHECK(ls[1] == kLogStdMin);
}

TEST_CASE("mean clipping") {
  const Matrix w = Matrix::Constant(2, 2, 1.0);
  CHECK(clip_means(w, w, 0.1) == w);
  CHECK(clip_means(w.array() + 10.0, w, 0.1).isApprox(Matrix::Constant(2, 2, 1.1), 1e-15));
  CHECK(clip_means(w.array() - 10.0, w, 0.1).isApprox(Matrix::Constant(2, 2, 0.9), 1e-15));
  const std::vector<double> big{5.0, -5.0}, ls{-3.0, -3.0};
  const CellGaussian g = cell_distribution(w, big, ls, 0.1);
  CHECK(((g.mu - w).array().abs() <= 0.1 + 1e-15).all());
}

TEST_CASE("sampling") {
  const Matrix mu = Matrix::Constant(3, 2, 0.4);
  CHECK((sample_action(mu, Matrix::Constant(3, 2, 1e-8), std::uint64_t{5}) - mu).cwiseAbs().maxCoeff() < 1e-6);
  const Matrix sig = Matrix::Constant(3, 2, 0.2);
  CHECK(sample_action(mu, sig, std::uint64_t{7}) == sample_action(mu, sig, std::uint64_t{7}));
  CHECK(sample_action(mu, sig, std::uint64_t{7}) != sample_action(mu, sig, std::uint64_t{8}));
  const Matrix m1 = Matrix::Constant(10000, 1, 0.4), s1 = Matrix::Constant(10000, 1, 0.2);
  const double mean = sample_action(m1, s1, std::uint64_t{9}).mean();
  CHECK(std::abs(mean - 0.4) < 3 * 0.2 / 100.0);
}

TEST_CASE("clipped surrogate") {
  const double eps = 0.2;
  CHECK(clipped_surrogate(1.0, 2.5, eps) == 2.5);
  CHECK(clipped_surrogate(1.0 + 2 * eps, 2.5, eps) == doctest::Approx((1 + eps) * 2.5));
  CHECK(clipped_surrogate(1.0 - 2 * eps, -2.5, eps) == doctest::Approx((1 - eps) * -2.5));
  CHECK(clipped_surrogate(1.0 + 2 * eps, -2.5, eps) == doctest::Approx((1 + 2 * eps) * -2.5));
  CHECK(clipped_surrogate(1.7, 0.0, eps) == 0.0);
}

TEST_CASE("rewards") {
  PPOConfig cfg;
  cfg.steps = 0;
  RedundancyEnv env = random_env(50, 3, 4);
  Rng rng(5);
  ActorNet actor(3, 8, cfg.sigma0, rng);
  CriticNet critic(3, 8, rng);
  const Matrix w = Matrix::Ones(50, 3);
  CHECK(rollout(w, env.rdd_of(w), env, actor, critic, cfg, rng).empty());
  CHECK(env.rdd_of(w) - env.rdd_of(w) == 0.0);

  // Duplicated column: zeroing the copy removes its row and column of the pair matrix.
  const Dataset ds = synthetic::duplicated_column(3000, 4, 6);
  RedundancyEnv dup;
  dup.base = weighted_cells(ds, compute_stats(ds), Matrix::Ones(3000, 4));
  dup.discrete = discrete_flags(ds);
  const RddReport before = rdd(dup.base, dup.disc, dup.discrete);
  CHECK(before.pair_matrix(0, 3) == doctest::Approx(before.pair_matrix(0, 0)));
  Matrix zeroed = Matrix::Ones(3000, 4);
  zeroed.col(3).setZero();
  const double after = dup.rdd_of(zeroed);
  const Matrix& m = before.pair_matrix;
  const double oracle = (m.sum() - 2 * m.row(3).sum() + m(3, 3)) / 16.0;
  CHECK(after == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(-(after - before.rdd) > 0.0);
}

TEST_CASE("PPO update: ratio one, forced clipping, zero advantages") {
  PPOConfig cfg;
  cfg.steps = 4;
  cfg.update_epochs = 1;
  cfg.seed = 3;
  RedundancyEnv env = random_env(40, 3, 7);
  const Matrix w = Matrix::Ones(40, 3);
  Rng rng(8);

  {
    PPOAgent agent(3, cfg);
    auto batch = rollout(w, env.rdd_of(w), env, agent.actor, agent.critic, cfg, rng);
    REQUIRE(batch.size() == 4);
    for (auto& tr : batch) {
      CHECK(tr.log_prob == doctest::Approx(current_log_prob(agent, tr, w, cfg.eps_w)).epsilon(1e-12));
      tr.advantage = 1.5;
    }
    const auto d = agent.update(batch);
    CHECK(d.mean_ratio == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.clip_fraction == 0.0);
    CHECK(d.actor_loss == doctest::Approx(-1.5).epsilon(1e-12));
  }
  {
    PPOAgent agent(3, cfg);
    auto batch = rollout(w, env.rdd_of(w), env, agent.actor, agent.critic, cfg, rng);
    for (auto& tr : batch) {
      tr.log_prob -= std::log(1.0 + 2 * cfg.eps_ratio);
      tr.advantage = 2.0;
    }
    const auto d = agent.update(batch);
    CHECK(d.mean_ratio == doctest::Approx(1.0 + 2 * cfg.eps_ratio).epsilon(1e-12));
    CHECK(d.clip_fraction == 1.0);
    CHECK(d.actor_loss == doctest::Approx(-(1.0 + cfg.eps_ratio) * 2.0).epsilon(1e-12));
  }
  {
    PPOAgent agent(3, cfg);
    auto batch = rollout(w, env.rdd_of(w), env, agent.actor, agent.critic, cfg, rng);
    for (auto& tr : batch) {
      tr.advantage = 0.0;
      tr.reward = 0.3;
    }
    const auto actor_before = values_of(agent.actor.params());
    const auto critic_before = values_of(agent.critic.params());
    const auto d = agent.update(batch);
    CHECK(d.actor_skipped);
    CHECK(!d.warnings.empty());
    CHECK(values_of(agent.actor.params()) == actor_before);
    CHECK(values_of(agent.critic.params()) != critic_before);
  }
}

TEST_CASE("finetune: zero rounds, independent columns, duplicated column") {
  PPOConfig cfg;
  cfg.rounds = 0;
  RedundancyEnv env = random_env(200, 3, 9);
  const Matrix w = Matrix::Ones(200, 3);
  const auto r0 = finetune(w, env, cfg);
  CHECK(r0.w == w);
  CHECK(r0.accepted_rounds == 0);

  const Dataset ind = synthetic::independent(2000, 4, 1);
  RedundancyEnv ienv;
  ienv.base = weighted_cells(ind, compute_stats(ind), Matrix::Ones(2000, 4));
  ienv.discrete = discrete_flags(ind);
  cfg.rounds = 3;
  cfg.steps = 8;
  const auto ri = finetune(Matrix::Ones(2000, 4), ienv, cfg);
  CHECK((ri.w.array() - 1.0).abs().maxCoeff() <= cfg.eps_w);

  const Dataset dup = synthetic::duplicated_column(2000, 6, 2);
  RedundancyEnv denv;
  denv.base = weighted_cells(dup, compute_stats(dup), Matrix::Ones(2000, 6));
  denv.discrete = discrete_flags(dup);
  cfg.rounds = 5;
  cfg.steps = 16;
  const auto rd = finetune(Matrix::Ones(2000, 6), denv, cfg);
  CHECK(rd.rdd_final < rd.rdd_initial);
  CHECK(rd.rdd_final == doctest::Approx(denv.rdd_of(rd.w)).epsilon(1e-14));
  CHECK(rd.rounds.size() == 5);
  for (double o : rd.column_offset) CHECK(std::abs(o) <= cfg.eps_w * static_cast<double>(rd.accepted_rounds) + 1e-12);
}

TEST_CASE("finetune respects the validation guard") {
  const Dataset dup = synthetic::duplicated_column(1500, 6, 3);
  RedundancyEnv env;
  env.base = weighted_cells(dup, compute_stats(dup), Matrix::Ones(1500, 6));
  env.discrete = discrete_flags(dup);
  PPOConfig cfg;
  cfg.rounds = 3;
  cfg.steps = 8;
  std::size_t calls = 0;
  const auto r = finetune(Matrix::Ones(1500, 6), env, cfg, [&](const Matrix& cand) {
    ++calls;
    // Baseline (all ones) scores 1, every perturbed candidate scores 0.
    return cand == Matrix::Ones(1500, 6) ? 1.0 : 0.0;
  });
  CHECK(calls > 0);
  CHECK(r.accepted_rounds == 0);
  CHECK(r.w == Matrix::Ones(1500, 6));
  CHECK(!r.warnings.empty());
}

TEST_CASE("ppo config validation") {
  PPOConfig c;
  c.eps_ratio = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  PPOConfig d;
  const auto back = PPOConfig::from_json(d.to_json());
  CHECK(back.to_json() == d.to_json());
}
