#include "tfwt/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tfwt/errors.hpp"
#include "tfwt/ops.hpp"

namespace tfwt {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // ln(2 pi)
}

void PPOConfig::validate() const {
  if (!(eps_ratio > 0.0 && eps_ratio < 1.0)) throw ConfigError("ppo: eps_ratio must lie in (0, 1)");
  if (!(eps_w > 0.0)) throw ConfigError("ppo: eps_w must be positive");
  if (!(sigma0 > 0.0)) throw ConfigError("ppo: sigma0 must be positive");
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("ppo: learning rates must be positive");
  if (hidden == 0) throw ConfigError("ppo: hidden width must be positive");
  if (min_relative_improvement < 0.0) throw ConfigError("ppo: min_relative_improvement must be >= 0");
  if (guard_tolerance < 0.0) throw ConfigError("ppo: guard_tolerance must be >= 0");
}

nlohmann::json PPOConfig::to_json() const {
  return {{"eps_ratio", eps_ratio},
          {"eps_w", eps_w},
          {"sigma0", sigma0},
          {"steps", steps},
          {"update_epochs", update_epochs},
          {"rounds", rounds},
          {"actor_lr", actor_lr},
          {"critic_lr", critic_lr},
          {"hidden", hidden},
          {"literal_reward_sign", literal_reward_sign},
          {"min_relative_improvement", min_relative_improvement},
          {"guard_tolerance", guard_tolerance},
          {"seed", seed}};
}

PPOConfig PPOConfig::from_json(const nlohmann::json& j) {
  PPOConfig c;
  c.eps_ratio = j.value("eps_ratio", c.eps_ratio);
  c.eps_w = j.value("eps_w", c.eps_w);
  c.sigma0 = j.value("sigma0", c.sigma0);
  c.steps = j.value("steps", c.steps);
  c.update_epochs = j.value("update_epochs", c.update_epochs);
  c.rounds = j.value("rounds", c.rounds);
  c.actor_lr = j.value("actor_lr", c.actor_lr);
  c.critic_lr = j.value("critic_lr", c.critic_lr);
  c.hidden = j.value("hidden", c.hidden);
  c.literal_reward_sign = j.value("literal_reward_sign", c.literal_reward_sign);
  c.min_relative_improvement = j.value("min_relative_improvement", c.min_relative_improvement);
  c.guard_tolerance = j.value("guard_tolerance", c.guard_tolerance);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::vector<double> state_features(const Matrix& w) {
  if (w.rows() == 0 || w.cols() == 0) throw DimensionError("state_features: empty W");
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(4 * w.cols()));
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    const auto col = w.col(c);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    s.insert(s.end(), {mean, sd, col.minCoeff(), col.maxCoeff()});
  }
  check_finite(s, "ppo state");
  return s;
}

ActorNet::ActorNet(std::size_t num_features, std::size_t hidden_width, double sigma0, Rng& rng) : k_(num_features) {
  hidden = Dense(4 * num_features, hidden_width, rng);
  mean_head = Dense(hidden_width, num_features, rng);
  log_std_head = Dense(hidden_width, num_features, rng);
  std::fill(mean_head.weight.mutable_data().begin(), mean_head.weight.mutable_data().end(), 0.0);
  std::fill(log_std_head.weight.mutable_data().begin(), log_std_head.weight.mutable_data().end(), 0.0);
  std::fill(log_std_head.bias.mutable_data().begin(), log_std_head.bias.mutable_data().end(), std::log(sigma0));
}

ParamList ActorNet::params() const {
  ParamList p;
  append_params(p, "hidden.", hidden.params());
  append_params(p, "mean.", mean_head.params());
  append_params(p, "log_std.", log_std_head.params());
  return p;
}

CriticNet::CriticNet(std::size_t num_features, std::size_t hidden_width, Rng& rng) {
  hidden = Dense(4 * num_features, hidden_width, rng);
  out = Dense(hidden_width, 1, rng);
}

Tensor CriticNet::value(Tape& t, const Tensor& state) const {
  return out.forward(t, ops::relu(t, hidden.forward(t, state)));
}

ParamList CriticNet::params() const {
  ParamList p;
  append_params(p, "hidden.", hidden.params());
  append_params(p, "out.", out.params());
  return p;
}

PolicyOutput policy_forward(Tape& t, const Tensor& state, const ActorNet& actor) {
  if (state.rank() != 2 || state.dim(0) != 1 || state.dim(1) != 4 * actor.num_features()) {
    throw DimensionError("policy_forward: state must be [1, " + std::to_string(4 * actor.num_features()) + "], got " +
                         shape_str(state.shape()));
  }
  check_finite(state.data(), "policy state");
  Tensor h = ops::relu(t, actor.hidden.forward(t, state));
  PolicyOutput out;
  out.offset = actor.mean_head.forward(t, h);
  out.log_std = ops::clamp(t, actor.log_std_head.forward(t, h), kLogStdMin, kLogStdMax);
  check_finite(out.offset.data(), "policy mean");
  check_finite(out.log_std.data(), "policy log-std");
  return out;
}

CellGaussian cell_distribution(const Matrix& w, std::span<const double> offset, std::span<const double> log_std,
                               double eps_w) {
  if (offset.size() != static_cast<std::size_t>(w.cols()) || log_std.size() != offset.size()) {
    throw DimensionError("cell_distribution: policy width does not match W");
  }
  CellGaussian g{w, Matrix(w.rows(), w.cols())};
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    const auto k = static_cast<std::size_t>(c);
    g.mu.col(c).array() += std::clamp(offset[k], -eps_w, eps_w);
    g.sigma.col(c).setConstant(std::exp(std::clamp(log_std[k], kLogStdMin, kLogStdMax)));
  }
  return g;
}

Matrix clip_means(const Matrix& mu, const Matrix& w, double eps_w) {
  if (mu.rows() != w.rows() || mu.cols() != w.cols()) throw DimensionError("clip_means: shape mismatch");
  return mu.array().max(w.array() - eps_w).min(w.array() + eps_w).matrix();
}

Matrix sample_action(const Matrix& mu, const Matrix& sigma, Rng& rng) {
  if (mu.rows() != sigma.rows() || mu.cols() != sigma.cols()) throw DimensionError("sample_action: shape mismatch");
  if ((sigma.array() <= 0.0).any()) throw ContractError("sample_action: sigma must be positive");
  Matrix a(mu.rows(), mu.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = mu(r, c) + sigma(r, c) * rng.normal();
  return a;
}

Matrix sample_action(const Matrix& mu, const Matrix& sigma, std::uint64_t seed) {
  Rng rng("ppo-sample", seed);
  return sample_action(mu, sigma, rng);
}

double gaussian_log_prob(const Matrix& action, const Matrix& mu, const Matrix& sigma) {
  if (action.rows() != mu.rows() || action.cols() != mu.cols() || sigma.rows() != mu.rows() ||
      sigma.cols() != mu.cols()) {
    throw DimensionError("gaussian_log_prob: shape mismatch");
  }
  const auto z = (action - mu).array() / sigma.array();
  return (-0.5 * z.square() - sigma.array().log() - 0.5 * kLog2Pi).sum();
}

Tensor column_log_prob(Tape& t, const Tensor& offset, const Tensor& log_std, std::span<const double> s1,
                       std::span<const double> s2, std::size_t rows, double eps_w) {
  const std::size_t K = offset.numel();
  if (s1.size() != K || s2.size() != K || log_std.numel() != K) throw DimensionError("column_log_prob: width mismatch");
  const double N = static_cast<double>(rows);
  Tensor d = ops::clamp(t, offset, -eps_w, eps_w);
  Tensor S1 = Tensor::from(offset.shape(), {s1.begin(), s1.end()});
  Tensor S2 = Tensor::from(offset.shape(), {s2.begin(), s2.end()});
  // sum_i (a_i - w_i - d)^2 = S2 - 2 d S1 + N d^2
  Tensor sq = ops::add(t, ops::sub(t, S2, ops::scale(t, ops::mul(t, d, S1), 2.0)), ops::scale(t, ops::mul(t, d, d), N));
  Tensor inv_var = ops::exp(t, ops::scale(t, log_std, -2.0));
  Tensor lp = ops::add(t, ops::scale(t, ops::mul(t, sq, inv_var), -0.5), ops::scale(t, log_std, -N));
  return ops::add_scalar(t, ops::sum(t, lp), -0.5 * N * static_cast<double>(K) * kLog2Pi);
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

double RedundancyEnv::rdd_of(const Matrix& w) const {
  if (w.rows() != base.rows() || w.cols() != base.cols()) throw DimensionError("rdd_of: W does not match the environment");
  return rdd(base.cwiseProduct(w), disc, discrete).rdd;
}

namespace {

Tensor state_tensor(const std::vector<double>& s) { return Tensor::from({1, s.size()}, s); }

}  // namespace

std::vector<Transition> rollout(const Matrix& w, double rdd_w, const RedundancyEnv& env, const ActorNet& actor,
                                const CriticNet& critic, const PPOConfig& cfg, Rng& rng) {
  std::vector<Transition> out;
  if (cfg.steps == 0) return out;
  const std::vector<double> state = state_features(w);
  Tape t;
  t.set_grad_enabled(false);
  const Tensor st = state_tensor(state);
  const PolicyOutput pol = policy_forward(t, st, actor);
  const double value = critic.value(t, st).item();
  check_finite(std::span<const double>(&value, 1), "critic value");
  const auto offset = pol.offset.values();
  const auto log_std = pol.log_std.values();
  const CellGaussian g = cell_distribution(w, offset, log_std, cfg.eps_w);
  const auto K = static_cast<std::size_t>(w.cols());
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Transition tr;
    tr.state = state;
    tr.action = sample_action(g.mu, g.sigma, rng);
    tr.offset.resize(K);
    tr.s1.resize(K);
    tr.s2.resize(K);
    for (std::size_t c = 0; c < K; ++c) {
      const auto diff = tr.action.col(static_cast<Eigen::Index>(c)) - w.col(static_cast<Eigen::Index>(c));
      tr.s1[c] = diff.sum();
      tr.s2[c] = diff.squaredNorm();
      tr.offset[c] = std::clamp(offset[c], -cfg.eps_w, cfg.eps_w);
    }
    tr.log_prob = gaussian_log_prob(tr.action, g.mu, g.sigma);
    try {
      tr.rdd_after = env.rdd_of(tr.action);
    } catch (const NumericError& e) {
      throw TrainingError(std::string("rollout: redundancy failed: ") + e.what(), step);
    }
    const double delta = tr.rdd_after - rdd_w;
    tr.reward = cfg.literal_reward_sign ? delta : -delta;
    tr.value = value;
    tr.advantage = tr.reward - tr.value;
    out.push_back(std::move(tr));
  }
  return out;
}

PPOAgent::PPOAgent(std::size_t num_features, const PPOConfig& cfg)
    : actor([&] {
        Rng rng("ppo-actor", cfg.seed);
        return ActorNet(num_features, cfg.hidden, cfg.sigma0, rng);
      }()),
      critic([&] {
        Rng rng("ppo-critic", cfg.seed);
        return CriticNet(num_features, cfg.hidden, rng);
      }()),
      cfg_(cfg),
      actor_opt_(actor.params(), AdamConfig{cfg.actor_lr}),
      critic_opt_(critic.params(), AdamConfig{cfg.critic_lr}) {
  cfg_.validate();
}

UpdateDiagnostics PPOAgent::update(const std::vector<Transition>& batch) {
  if (batch.empty()) throw ContractError("ppo update: no transitions");
  UpdateDiagnostics diag;
  const double n = static_cast<double>(batch.size());
  const bool all_zero = std::all_of(batch.begin(), batch.end(), [](const Transition& tr) { return tr.advantage == 0.0; });
  if (all_zero) {
    diag.actor_skipped = true;
    diag.warnings.push_back("all advantages are zero; actor update skipped");
  }
  const auto rows = static_cast<std::size_t>(batch.front().action.rows());
  for (std::size_t epoch = 0; epoch < cfg_.update_epochs; ++epoch) {
    double ratio_sum = 0.0, clipped = 0.0;
    if (!all_zero) {
      Tape t;
      Tensor total;
      for (const auto& tr : batch) {
        const PolicyOutput pol = policy_forward(t, state_tensor(tr.state), actor);
        Tensor lp = column_log_prob(t, pol.offset, pol.log_std, tr.s1, tr.s2, rows, cfg_.eps_w);
        Tensor ratio = ops::exp(t, ops::clamp(t, ops::add_scalar(t, lp, -tr.log_prob), -20.0, 20.0));
        const double r = ratio.item();
        ratio_sum += r;
        if (r < 1.0 - cfg_.eps_ratio || r > 1.0 + cfg_.eps_ratio) clipped += 1.0;
        Tensor surr = ops::minimum(t, ops::scale(t, ratio, tr.advantage),
                                   ops::scale(t, ops::clamp(t, ratio, 1.0 - cfg_.eps_ratio, 1.0 + cfg_.eps_ratio),
                                              tr.advantage));
        total = total.defined() ? ops::add(t, total, surr) : surr;
      }
      Tensor loss = ops::scale(t, total, -1.0 / n);
      diag.actor_loss = loss.item();
      diag.mean_ratio = ratio_sum / n;
      diag.clip_fraction = clipped / n;
      if (loss.requires_grad()) {
        actor_opt_.zero_grad();
        t.backward(loss);
        actor_opt_.step();
      }
    }
    Tape t;
    Tensor total;
    for (const auto& tr : batch) {
      Tensor v = critic.value(t, state_tensor(tr.state));
      Tensor err = ops::add_scalar(t, v, -tr.reward);
      Tensor sq = ops::mul(t, err, err);
      total = total.defined() ? ops::add(t, total, sq) : sq;
    }
    Tensor closs = ops::scale(t, ops::sum(t, total), 1.0 / n);
    diag.critic_loss = closs.item();
    critic_opt_.zero_grad();
    t.backward(closs);
    critic_opt_.step();
  }
  return diag;
}

nlohmann::json RoundDiagnostics::to_json() const {
  return {{"round", round},
          {"rdd_before", rdd_before},
          {"rdd_after", rdd_after},
          {"reward_mean", reward_mean},
          {"mean_ratio", mean_ratio},
          {"clip_fraction", clip_fraction},
          {"actor_loss", actor_loss},
          {"critic_loss", critic_loss},
          {"validation_accuracy", validation_accuracy},
          {"accepted", accepted},
          {"offset", offset}};
}

FinetuneResult finetune(const Matrix& w, const RedundancyEnv& env, const PPOConfig& cfg, const ValidationGuard& guard) {
  cfg.validate();
  FinetuneResult res;
  res.w = w;
  res.column_offset.assign(static_cast<std::size_t>(w.cols()), 0.0);
  res.rdd_initial = env.rdd_of(w);
  res.rdd_final = res.rdd_initial;
  if (cfg.rounds == 0 || cfg.steps == 0) return res;

  const double base_accuracy = guard ? guard(w) : 0.0;
  PPOAgent agent(static_cast<std::size_t>(w.cols()), cfg);
  Rng rng("ppo-rollout", cfg.seed);
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    RoundDiagnostics rd;
    rd.round = round;
    rd.rdd_before = res.rdd_final;
    rd.validation_accuracy = base_accuracy;
    auto batch = rollout(res.w, res.rdd_final, env, agent.actor, agent.critic, cfg, rng);
    rd.reward_mean = std::accumulate(batch.begin(), batch.end(), 0.0,
                                     [](double s, const Transition& tr) { return s + tr.reward; }) /
                     static_cast<double>(batch.size());
    const UpdateDiagnostics ud = agent.update(batch);
    rd.mean_ratio = ud.mean_ratio;
    rd.clip_fraction = ud.clip_fraction;
    rd.actor_loss = ud.actor_loss;
    rd.critic_loss = ud.critic_loss;

    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return batch[a].rdd_after < batch[b].rdd_after; });
    rd.rdd_after = batch[order.front()].rdd_after;
    const double threshold = res.rdd_final * (1.0 - cfg.min_relative_improvement);
    for (auto i : order) {
      const Transition& tr = batch[i];
      if (!(tr.rdd_after < threshold)) break;
      if (guard) {
        const double acc = guard(tr.action);
        if (acc < base_accuracy - cfg.guard_tolerance) continue;
        rd.validation_accuracy = acc;
      }
      rd.accepted = true;
      rd.rdd_after = tr.rdd_after;
      rd.offset = tr.offset;
      res.w = tr.action;
      res.rdd_final = tr.rdd_after;
      for (std::size_t c = 0; c < res.column_offset.size(); ++c) res.column_offset[c] += tr.offset[c];
      ++res.accepted_rounds;
      break;
    }
    res.rounds.push_back(rd);
  }
  if (res.accepted_rounds == 0) res.warnings.push_back("no fine-tuning candidate was accepted; W unchanged");
  return res;
}

}  // namespace tfwt
