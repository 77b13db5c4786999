#pragma once

// PPO fine-tuning of a weight matrix toward lower redundancy. Episodes are a
// single step: observe a summary of W, sample a perturbed W', get paid the
// drop in Rdd. The actor emits a per-column mean offset and log-std; every
// cell of a column shares them, and cells are sampled independently.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfwt/nn.hpp"
#include "tfwt/redundancy.hpp"

namespace tfwt {

struct PPOConfig {
  double eps_ratio = 0.2;
  double eps_w = 0.1;
  double sigma0 = 0.05;
  std::size_t steps = 32;
  std::size_t update_epochs = 4;
  std::size_t rounds = 10;
  double actor_lr = 1e-5;
  double critic_lr = 1e-3;
  std::size_t hidden = 64;
  /// false: reward = -(Rdd' - Rdd). true: the literal +(Rdd' - Rdd).
  bool literal_reward_sign = false;
  /// A candidate must lower Rdd by at least this fraction of the current value.
  double min_relative_improvement = 0.01;
  /// Maximum allowed drop in surrogate validation accuracy.
  double guard_tolerance = 0.005;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static PPOConfig from_json(const nlohmann::json& j);
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 1.0;

/// Per-column (mean, std, min, max) of W, flattened to 4K values.
std::vector<double> state_features(const Matrix& w);

class ActorNet {
 public:
  ActorNet() = default;
  ActorNet(std::size_t num_features, std::size_t hidden, double sigma0, Rng& rng);
  ParamList params() const;
  std::size_t num_features() const { return k_; }

  Dense hidden, mean_head, log_std_head;

 private:
  std::size_t k_ = 0;
};

class CriticNet {
 public:
  CriticNet() = default;
  CriticNet(std::size_t num_features, std::size_t hidden, Rng& rng);
  Tensor value(Tape& t, const Tensor& state) const;  // [1, 1]
  ParamList params() const;

  Dense hidden, out;
};

struct PolicyOutput {
  Tensor offset;   // [1, K], unclipped
  Tensor log_std;  // [1, K], clamped to [kLogStdMin, kLogStdMax]
};

/// state: [1, 4K].
PolicyOutput policy_forward(Tape& t, const Tensor& state, const ActorNet& actor);

/// Per-cell Gaussian parameters: mu = w + clamp(offset, +-eps_w), sigma = exp(log_std).
struct CellGaussian {
  Matrix mu;
  Matrix sigma;
};
CellGaussian cell_distribution(const Matrix& w, std::span<const double> offset, std::span<const double> log_std,
                               double eps_w);

/// Element-wise clamp of mu into [w - eps_w, w + eps_w].
Matrix clip_means(const Matrix& mu, const Matrix& w, double eps_w);

Matrix sample_action(const Matrix& mu, const Matrix& sigma, Rng& rng);
Matrix sample_action(const Matrix& mu, const Matrix& sigma, std::uint64_t seed);

/// Sum of independent per-cell Gaussian log-densities.
double gaussian_log_prob(const Matrix& action, const Matrix& mu, const Matrix& sigma);

/// Differentiable log-prob of an action under the column policy, from the
/// action's per-column sufficient statistics S1 = sum(a - w), S2 = sum((a - w)^2).
Tensor column_log_prob(Tape& t, const Tensor& offset, const Tensor& log_std, std::span<const double> s1,
                       std::span<const double> s2, std::size_t rows, double eps_w);

/// min(r * A, clip(r, 1 - eps, 1 + eps) * A).
double clipped_surrogate(double ratio, double advantage, double eps);

struct Transition {
  std::vector<double> state;
  Matrix action;  // W'
  std::vector<double> s1, s2;
  std::vector<double> offset;  // clipped mean offset the action was drawn around
  double log_prob = 0;
  double reward = 0;
  double value = 0;
  double advantage = 0;
  double rdd_after = 0;
};

/// The environment: the base cell matrix (weighted_cells with W = ones) and
/// how redundancy is measured on it.
struct RedundancyEnv {
  Matrix base;
  std::vector<char> discrete;
  Discretizer disc;

  double rdd_of(const Matrix& w) const;
};

/// `cfg.steps` single-step episodes from W. A step whose action equals W
/// earns reward 0.
std::vector<Transition> rollout(const Matrix& w, double rdd_w, const RedundancyEnv& env, const ActorNet& actor,
                                const CriticNet& critic, const PPOConfig& cfg, Rng& rng);

struct UpdateDiagnostics {
  double mean_ratio = 1.0;
  double clip_fraction = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  bool actor_skipped = false;
  std::vector<std::string> warnings;
};

class PPOAgent {
 public:
  PPOAgent(std::size_t num_features, const PPOConfig& cfg);

  UpdateDiagnostics update(const std::vector<Transition>& batch);

  ActorNet actor;
  CriticNet critic;

 private:
  PPOConfig cfg_;
  Adam actor_opt_, critic_opt_;
};

struct RoundDiagnostics {
  std::size_t round = 0;
  double rdd_before = 0, rdd_after = 0;  // rdd_after: best candidate of the round
  double reward_mean = 0;
  double mean_ratio = 1, clip_fraction = 0;
  double actor_loss = 0, critic_loss = 0;
  double validation_accuracy = 0;
  bool accepted = false;
  std::vector<double> offset;  // clipped mean offset of the accepted action; empty otherwise
  nlohmann::json to_json() const;
};

struct FinetuneResult {
  Matrix w;                           // accepted W (the input W when nothing was accepted)
  std::vector<double> column_offset;  // accumulated clipped mean offsets of accepted rounds
  double rdd_initial = 0, rdd_final = 0;
  std::size_t accepted_rounds = 0;
  std::vector<RoundDiagnostics> rounds;
  std::vector<std::string> warnings;
};

/// Returns the surrogate's validation accuracy under a candidate W.
using ValidationGuard = std::function<double(const Matrix&)>;

FinetuneResult finetune(const Matrix& w, const RedundancyEnv& env, const PPOConfig& cfg,
                        const ValidationGuard& guard = {});

}  // namespace tfwt
