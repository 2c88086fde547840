#pragma once

#include "crowdnav/checkpoint.hpp"
#include "crowdnav/env.hpp"
#include "crowdnav/features.hpp"
#include "crowdnav/policy.hpp"
#include "crowdnav/thread_pool.hpp"

#include <json.hpp>

#include <deque>
#include <memory>
#include <random>
#include <span>

namespace crowdnav {

struct PPOConfig {
  int num_envs = 16;
  int rollout_len = 128;
  std::int64_t total_steps = 60'000'000;
  double lr = 8e-5;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatches = 4;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-5;
  /// Multiplies env rewards before they enter the buffer.
  double reward_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::int64_t steps_per_iteration() const { return static_cast<std::int64_t>(num_envs) * rollout_len; }
};

nlohmann::json to_json(const PPOConfig& c);
void update_from_json(const nlohmann::json& j, PPOConfig& out, const std::string& context = "ppo");

/// lr_0 * (1 - steps / total_steps), floored at zero.
double learning_rate(const PPOConfig& c, std::int64_t steps);

/// Generalised advantage estimation over one env sequence:
///   delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t
///   A_t = delta_t + gamma lambda (1 - done_t) A_{t+1},  returns = A + V
/// with V_T = bootstrap_value.
void compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                 double bootstrap_value, double gamma, double lambda, std::span<double> advantages,
                 std::span<double> returns);

/// In place to mean 0, std 1 (population std; left centred if std is 0).
void normalize_advantages(std::span<double> advantages);

struct RolloutBuffer {
  int num_envs = 0;
  int rollout_len = 0;
  // Indexed [env * rollout_len + t].
  std::vector<PolicyInput<double>> inputs;
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<double> advantages;
  std::vector<double> returns;
  // Per env.
  std::vector<nn::Matrix<double>> initial_hidden;
  std::vector<double> bootstrap_values;

  void reset(int envs, int len);
  std::size_t index(int env, int t) const { return static_cast<std::size_t>(env) * rollout_len + t; }
  std::size_t size() const { return static_cast<std::size_t>(num_envs) * rollout_len; }
  void compute_advantages(double gamma, double lambda, bool normalize = true);
};

struct PPOSample {
  int action = 0;
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double target_return = 0.0;
};

struct PPOLossTerms {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

/// Mean over samples of  -min(rho A, clip(rho, 1 +- eps) A)
///   + value_coef (V - R)^2 - entropy_coef H(pi)
/// as one tape node with analytic gradients w.r.t. logits and values.
template <typename Scalar>
nn::Var ppo_loss(nn::Tape<Scalar>& tape, std::span<const nn::Var> logits, std::span<const nn::Var> values,
                 std::span<const PPOSample> samples, const PPOConfig& config, PPOLossTerms* terms = nullptr);

template <typename Scalar>
class Adam {
 public:
  Adam(const nn::ParamStore<Scalar>& params, double beta1, double beta2, double eps);
  void step(nn::ParamStore<Scalar>& params, double lr);

  std::int64_t t = 0;
  std::vector<nn::Matrix<Scalar>> m, v;

 private:
  double beta1_, beta2_, eps_;
};

/// Scales gradients so their global norm is at most max_norm. Returns the
/// norm before scaling.
template <typename Scalar>
double clip_grad_norm(nn::ParamStore<Scalar>& params, double max_norm);

/// Recomputes the listed env sequences from their stored initial hidden
/// state (hidden reset after each done) and accumulates loss gradients.
template <typename Scalar>
PPOLossTerms minibatch_gradients(const Policy<Scalar>& policy, nn::ParamStore<Scalar>& params,
                                 const RolloutBuffer& buffer, std::span<const int> envs, const PPOConfig& config);

struct UpdateStats {
  PPOLossTerms loss;
  double grad_norm = 0.0;  // mean pre-clip norm
  double max_clipped_norm = 0.0;
};

/// Epochs x minibatches of clipped-surrogate updates, minibatched by whole
/// env sequences.
template <typename Scalar>
UpdateStats ppo_update(Policy<Scalar>& policy, Adam<Scalar>& adam, const RolloutBuffer& buffer,
                       const PPOConfig& config, double lr, std::mt19937_64& rng);

struct EpisodeSummary {
  double reward = 0.0;
  int length = 0;
  Outcome outcome = Outcome::Running;
};

struct TrainStats {
  int iteration = 0;
  std::int64_t env_steps = 0;
  int episodes = 0;  // finished this iteration
  double mean_episode_reward = 0.0;  // rolling window
  double mean_episode_length = 0.0;
  double success_rate = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;

  nlohmann::json to_json() const;
};

struct TrainerSetup {
  EnvConfig env;
  PolicyConfig policy;
  PPOConfig ppo;
  FeatureConfig features;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Policy input dimensions implied by the env (n_max, beam count).
PolicyConfig policy_config_for(const EnvConfig& env, PolicyConfig policy);

/// Recurrent PPO with parallel rollouts. Rollouts read an immutable policy
/// snapshot on worker threads; the update runs on the calling thread.
/// Results do not depend on the thread count.
class Trainer {
 public:
  static constexpr std::size_t kRollingWindow = 100;

  Trainer(TrainerSetup setup, int threads);

  const TrainerSetup& setup() const { return setup_; }
  const Policy<float>& policy() const { return policy_; }
  int iteration() const { return iteration_; }
  std::int64_t env_steps() const { return env_steps_; }
  bool finished() const { return env_steps_ >= setup_.ppo.total_steps; }
  const RolloutBuffer& last_buffer() const { return buffer_; }
  const std::vector<EpisodeSummary>& last_episodes() const { return last_episodes_; }

  /// Collect one rollout, then update.
  TrainStats iterate();
  void collect_rollouts();

  Checkpoint checkpoint(const TrainStats* stats = nullptr) const;
  static std::unique_ptr<Trainer> from_checkpoint(const Checkpoint& ckpt, int threads);

 private:
  struct Slot {
    std::unique_ptr<CrowdEnv> env;
    Observation obs;
    nn::Matrix<float> hidden;
    std::mt19937_64 rng;
    std::uint64_t episode = 0;
    double episode_reward = 0.0;
    int episode_length = 0;
    std::vector<EpisodeSummary> finished;
  };

  void start_episode(int env_index);

  TrainerSetup setup_;
  ThreadPool pool_;
  Policy<float> policy_;
  Adam<float> adam_;
  std::mt19937_64 shuffle_rng_;
  std::vector<Slot> slots_;
  RolloutBuffer buffer_;
  std::deque<EpisodeSummary> recent_;
  std::vector<EpisodeSummary> last_episodes_;
  int iteration_ = 0;
  std::int64_t env_steps_ = 0;
};

/// Rebuilds the trained policy, its config and feature settings.
struct LoadedPolicy {
  TrainerSetup setup;
  std::shared_ptr<const Policy<float>> policy;
};
LoadedPolicy policy_from_checkpoint(const Checkpoint& ckpt);
TrainerSetup setup_from_json(const nlohmann::json& j);

}  // namespace crowdnav
