#include "crowdnav/ppo.hpp"

#include "crowdnav/config_io.hpp"
#include "crowdnav/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace crowdnav {

using nlohmann::json;

void PPOConfig::validate() const {
  if (num_envs <= 0 || rollout_len <= 0) throw std::invalid_argument("PPOConfig: num_envs and rollout_len must be positive");
  if (minibatches <= 0 || num_envs % minibatches != 0) {
    throw std::invalid_argument("PPOConfig: num_envs must be divisible by minibatches (minibatches hold whole env sequences)");
  }
  if (total_steps <= 0) throw std::invalid_argument("PPOConfig: total_steps must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("PPOConfig: lr must be positive");
  if (gamma < 0.0 || gamma > 1.0 || gae_lambda < 0.0 || gae_lambda > 1.0) {
    throw std::invalid_argument("PPOConfig: gamma and gae_lambda must lie in [0, 1]");
  }
  if (!(clip_eps > 0.0)) throw std::invalid_argument("PPOConfig: clip_eps must be positive");
  if (epochs <= 0) throw std::invalid_argument("PPOConfig: epochs must be positive");
  if (!(max_grad_norm > 0.0)) throw std::invalid_argument("PPOConfig: max_grad_norm must be positive");
  if (!(reward_scale > 0.0)) throw std::invalid_argument("PPOConfig: reward_scale must be positive");
}

json to_json(const PPOConfig& c) {
  return {{"num_envs", c.num_envs},         {"rollout_len", c.rollout_len},   {"total_steps", c.total_steps},
          {"lr", c.lr},                     {"gamma", c.gamma},               {"gae_lambda", c.gae_lambda},
          {"clip_eps", c.clip_eps},         {"epochs", c.epochs},             {"minibatches", c.minibatches},
          {"value_coef", c.value_coef},     {"entropy_coef", c.entropy_coef}, {"max_grad_norm", c.max_grad_norm},
          {"adam_beta1", c.adam_beta1},     {"adam_beta2", c.adam_beta2},     {"adam_eps", c.adam_eps},
          {"reward_scale", c.reward_scale}, {"seed", c.seed}};
}

void update_from_json(const json& j, PPOConfig& c, const std::string& context) {
  StrictObject o(j, context);
  o.read("num_envs", c.num_envs);
  o.read("rollout_len", c.rollout_len);
  o.read("total_steps", c.total_steps);
  o.read("lr", c.lr);
  o.read("gamma", c.gamma);
  o.read("gae_lambda", c.gae_lambda);
  o.read("clip_eps", c.clip_eps);
  o.read("epochs", c.epochs);
  o.read("minibatches", c.minibatches);
  o.read("value_coef", c.value_coef);
  o.read("entropy_coef", c.entropy_coef);
  o.read("max_grad_norm", c.max_grad_norm);
  o.read("adam_beta1", c.adam_beta1);
  o.read("adam_beta2", c.adam_beta2);
  o.read("adam_eps", c.adam_eps);
  o.read("reward_scale", c.reward_scale);
  o.read("seed", c.seed);
  o.finish();
  c.validate();
}

double learning_rate(const PPOConfig& c, std::int64_t steps) {
  const double frac = 1.0 - static_cast<double>(steps) / static_cast<double>(c.total_steps);
  return c.lr * std::max(0.0, frac);
}

void compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                 double bootstrap_value, double gamma, double lambda, std::span<double> advantages,
                 std::span<double> returns) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n || advantages.size() != n || returns.size() != n) {
    throw std::invalid_argument("compute_gae: length mismatch");
  }
  double next_value = bootstrap_value;
  double next_advantage = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    advantages[k] = delta + gamma * lambda * live * next_advantage;
    returns[k] = advantages[k] + values[k];
    next_value = values[k];
    next_advantage = advantages[k];
  }
}

void normalize_advantages(std::span<double> a) {
  if (a.empty()) return;
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(a.size()));
  for (double& x : a) x = sd > 1e-12 ? (x - mean) / sd : x - mean;
}

void RolloutBuffer::reset(int envs, int len) {
  num_envs = envs;
  rollout_len = len;
  const std::size_t n = size();
  inputs.assign(n, {});
  actions.assign(n, 0);
  log_probs.assign(n, 0.0);
  values.assign(n, 0.0);
  rewards.assign(n, 0.0);
  dones.assign(n, 0);
  advantages.assign(n, 0.0);
  returns.assign(n, 0.0);
  initial_hidden.assign(envs, {});
  bootstrap_values.assign(envs, 0.0);
}

void RolloutBuffer::compute_advantages(double gamma, double lambda, bool normalize) {
  for (int e = 0; e < num_envs; ++e) {
    const std::size_t o = index(e, 0);
    const std::size_t n = static_cast<std::size_t>(rollout_len);
    compute_gae(std::span(rewards).subspan(o, n), std::span(values).subspan(o, n), std::span(dones).subspan(o, n),
                bootstrap_values[e], gamma, lambda, std::span(advantages).subspan(o, n),
                std::span(returns).subspan(o, n));
  }
  if (normalize) normalize_advantages(advantages);
}

template <typename Scalar>
nn::Var ppo_loss(nn::Tape<Scalar>& tape, std::span<const nn::Var> logits, std::span<const nn::Var> values,
                 std::span<const PPOSample> samples, const PPOConfig& config, PPOLossTerms* terms) {
  using Mat = nn::Matrix<Scalar>;
  const std::size_t m = samples.size();
  if (m == 0 || logits.size() != m || values.size() != m) throw std::invalid_argument("ppo_loss: size mismatch");
  const double inv_m = 1.0 / static_cast<double>(m);

  PPOLossTerms t;
  std::vector<Mat> grad_logits(m);
  std::vector<double> grad_values(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Mat& l = tape.value(logits[i]);
    const Eigen::VectorXd lv = l.row(0).transpose().template cast<double>();
    const nn::Categorical<double> dist(lv);
    const PPOSample& s = samples[i];
    const double logp = dist.log_prob(s.action);
    const double ratio = std::exp(logp - s.old_log_prob);
    const double clipped = std::clamp(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
    const double surr1 = ratio * s.advantage;
    const double surr2 = clipped * s.advantage;
    const double d_logp = surr1 <= surr2 ? -ratio * s.advantage : 0.0;
    const double h = dist.entropy();
    const double v = static_cast<double>(tape.value(values[i])(0, 0));
    const double err = v - s.target_return;

    t.policy += -std::min(surr1, surr2) * inv_m;
    t.value += err * err * inv_m;
    t.entropy += h * inv_m;
    t.approx_kl += (s.old_log_prob - logp) * inv_m;
    if (std::abs(ratio - 1.0) > config.clip_eps) t.clip_fraction += inv_m;

    Eigen::VectorXd g = -d_logp * dist.probs();
    g(s.action) += d_logp;
    // dH/dl_j = -p_j (log p_j + H)
    const Eigen::VectorXd dh = -(dist.probs().array() * (dist.log_probs().array() + h)).matrix();
    g -= config.entropy_coef * dh;
    grad_logits[i] = (g * inv_m).transpose().template cast<Scalar>();
    grad_values[i] = config.value_coef * 2.0 * err * inv_m;
  }
  t.total = t.policy + config.value_coef * t.value - config.entropy_coef * t.entropy;
  if (!std::isfinite(t.total)) {
    std::ostringstream msg;
    msg << "ppo_loss: non-finite loss (policy " << t.policy << ", value " << t.value << ", entropy " << t.entropy << ")";
    throw nn::NumericError(msg.str());
  }
  if (terms) *terms = t;

  std::vector<nn::Var> inputs(logits.begin(), logits.end());
  inputs.insert(inputs.end(), values.begin(), values.end());
  Mat out(1, 1);
  out(0, 0) = static_cast<Scalar>(t.total);
  return tape.custom(std::move(inputs), std::move(out),
                     [grad_logits = std::move(grad_logits), grad_values = std::move(grad_values), m](
                         const Mat& grad_out, const typename nn::Tape<Scalar>::Emit& emit) {
                       const Scalar g = grad_out(0, 0);
                       for (std::size_t i = 0; i < m; ++i) {
                         emit(i, grad_logits[i] * g);
                         Mat gv(1, 1);
                         gv(0, 0) = static_cast<Scalar>(grad_values[i]) * g;
                         emit(m + i, gv);
                       }
                     });
}

template <typename Scalar>
Adam<Scalar>::Adam(const nn::ParamStore<Scalar>& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m.push_back(nn::Matrix<Scalar>::Zero(params.value(i).rows(), params.value(i).cols()));
    v.push_back(nn::Matrix<Scalar>::Zero(params.value(i).rows(), params.value(i).cols()));
  }
}

template <typename Scalar>
void Adam<Scalar>::step(nn::ParamStore<Scalar>& params, double lr) {
  if (params.size() != m.size()) throw std::invalid_argument("Adam: parameter count changed");
  ++t;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
  const Scalar b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
  const Scalar step = static_cast<Scalar>(lr / c1);
  const Scalar inv_c2 = static_cast<Scalar>(1.0 / c2);
  const Scalar eps = static_cast<Scalar>(eps_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = params.grad(i).array();
    m[i].array() = b1 * m[i].array() + (Scalar(1) - b1) * g;
    v[i].array() = b2 * v[i].array() + (Scalar(1) - b2) * g * g;
    params.value(i).array() -= step * m[i].array() / ((v[i].array() * inv_c2).sqrt() + eps);
  }
}

template <typename Scalar>
double clip_grad_norm(nn::ParamStore<Scalar>& params, double max_norm) {
  const double norm = params.grad_norm();
  if (norm > max_norm) {
    const Scalar s = static_cast<Scalar>(max_norm / norm);
    for (std::size_t i = 0; i < params.size(); ++i) params.grad(i) *= s;
  }
  return norm;
}

template <typename Scalar>
PPOLossTerms minibatch_gradients(const Policy<Scalar>& policy, nn::ParamStore<Scalar>& params,
                                 const RolloutBuffer& buffer, std::span<const int> envs, const PPOConfig& config) {
  nn::Tape<Scalar> tape(&params);
  const PolicyParamVars p = policy.bind(tape);
  std::vector<nn::Var> logits, values;
  std::vector<PPOSample> samples;
  const std::size_t n = envs.size() * static_cast<std::size_t>(buffer.rollout_len);
  logits.reserve(n);
  values.reserve(n);
  samples.reserve(n);
  const nn::Matrix<Scalar> zero = policy.zero_hidden();
  for (int e : envs) {
    nn::Var hidden = tape.constant(buffer.initial_hidden.at(e).template cast<Scalar>());
    for (int t = 0; t < buffer.rollout_len; ++t) {
      const std::size_t k = buffer.index(e, t);
      const PolicyNodes nodes = policy.forward(tape, p, buffer.inputs[k].template cast<Scalar>(), hidden);
      logits.push_back(nodes.logits);
      values.push_back(nodes.value);
      samples.push_back({buffer.actions[k], buffer.log_probs[k], buffer.advantages[k], buffer.returns[k]});
      hidden = buffer.dones[k] ? tape.constant(zero) : nodes.hidden;
    }
  }
  PPOLossTerms terms;
  const nn::Var loss = ppo_loss<Scalar>(tape, logits, values, samples, config, &terms);
  tape.backward(loss);
  return terms;
}

template <typename Scalar>
UpdateStats ppo_update(Policy<Scalar>& policy, Adam<Scalar>& adam, const RolloutBuffer& buffer,
                       const PPOConfig& config, double lr, std::mt19937_64& rng) {
  std::vector<int> order(buffer.num_envs);
  std::iota(order.begin(), order.end(), 0);
  const int per_batch = buffer.num_envs / config.minibatches;
  UpdateStats stats;
  int updates = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int b = 0; b < config.minibatches; ++b) {
      nn::ParamStore<Scalar>& params = policy.params();
      params.zero_grad();
      const PPOLossTerms t = minibatch_gradients(policy, params, buffer,
                                                 std::span<const int>(order).subspan(b * per_batch, per_batch), config);
      const double norm = clip_grad_norm(params, config.max_grad_norm);
      stats.max_clipped_norm = std::max(stats.max_clipped_norm, params.grad_norm());
      adam.step(params, lr);
      stats.loss.policy += t.policy;
      stats.loss.value += t.value;
      stats.loss.entropy += t.entropy;
      stats.loss.total += t.total;
      stats.loss.approx_kl += t.approx_kl;
      stats.loss.clip_fraction += t.clip_fraction;
      stats.grad_norm += norm;
      ++updates;
    }
  }
  const double inv = 1.0 / updates;
  stats.loss.policy *= inv;
  stats.loss.value *= inv;
  stats.loss.entropy *= inv;
  stats.loss.total *= inv;
  stats.loss.approx_kl *= inv;
  stats.loss.clip_fraction *= inv;
  stats.grad_norm *= inv;
  return stats;
}

json TrainStats::to_json() const {
  return {{"iteration", iteration},
          {"env_steps", env_steps},
          {"episodes", episodes},
          {"mean_episode_reward", mean_episode_reward},
          {"mean_episode_length", mean_episode_length},
          {"success_rate", success_rate},
          {"policy_loss", policy_loss},
          {"value_loss", value_loss},
          {"entropy", entropy},
          {"approx_kl", approx_kl},
          {"clip_fraction", clip_fraction},
          {"grad_norm", grad_norm},
          {"lr", lr}};
}

PolicyConfig policy_config_for(const EnvConfig& env, PolicyConfig policy) {
  policy.n_max = env.n_max;
  policy.num_beams = env.sensor.scan.num_beams;
  return policy;
}

void TrainerSetup::validate() const {
  env.validate();
  policy.validate();
  ppo.validate();
  if (policy.n_max != env.n_max || policy.num_beams != env.sensor.scan.num_beams) {
    throw std::invalid_argument("policy n_max/num_beams disagree with the env config");
  }
  if (policy.action_count != kActionCount) throw std::invalid_argument("policy action_count must be 9");
}

json TrainerSetup::to_json() const {
  return {{"env", crowdnav::to_json(env)},
          {"policy", crowdnav::to_json(policy)},
          {"ppo", crowdnav::to_json(ppo)},
          {"features", crowdnav::to_json(features)}};
}

TrainerSetup setup_from_json(const json& j) {
  TrainerSetup s;
  StrictObject o(j, "setup");
  if (const json* v = o.take("env")) update_from_json(*v, s.env);
  if (const json* v = o.take("policy")) update_from_json(*v, s.policy);
  if (const json* v = o.take("ppo")) update_from_json(*v, s.ppo);
  if (const json* v = o.take("features")) update_from_json(*v, s.features);
  o.finish();
  s.validate();
  return s;
}

namespace {

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& text) {
  std::istringstream in(text);
  in >> rng;
  if (!in) throw CheckpointError("bad RNG state in checkpoint");
}

json summary_json(const EpisodeSummary& e) {
  return {{"reward", e.reward}, {"length", e.length}, {"outcome", to_string(e.outcome)}};
}

EpisodeSummary summary_from(const json& j) {
  EpisodeSummary e;
  e.reward = j.at("reward").get<double>();
  e.length = j.at("length").get<int>();
  const std::string o = j.at("outcome").get<std::string>();
  for (Outcome c : {Outcome::Running, Outcome::Success, Outcome::CollisionHuman, Outcome::CollisionObstacle,
                    Outcome::Timeout}) {
    if (to_string(c) == o) e.outcome = c;
  }
  return e;
}

}  // namespace

Trainer::Trainer(TrainerSetup setup, int threads)
    : setup_((setup.validate(), std::move(setup))),
      pool_(threads),
      policy_(setup_.policy, mix_seed(setup_.ppo.seed, 0x706f6c696379ULL)),
      adam_(policy_.params(), setup_.ppo.adam_beta1, setup_.ppo.adam_beta2, setup_.ppo.adam_eps),
      shuffle_rng_(mix_seed(setup_.ppo.seed, 0x73687566666c65ULL)) {
  slots_.resize(setup_.ppo.num_envs);
  for (int e = 0; e < setup_.ppo.num_envs; ++e) {
    Slot& s = slots_[e];
    s.env = std::make_unique<CrowdEnv>(setup_.env);
    s.rng.seed(mix_seed(mix_seed(setup_.ppo.seed, 0x616374696f6eULL), static_cast<std::uint64_t>(e)));
    start_episode(e);
  }
}

void Trainer::start_episode(int e) {
  Slot& s = slots_[e];
  s.obs = s.env->reset(training_episode_seed(setup_.ppo.seed, static_cast<std::uint64_t>(e), s.episode));
  ++s.episode;
  s.hidden = policy_.zero_hidden();
  s.episode_reward = 0.0;
  s.episode_length = 0;
}

void Trainer::collect_rollouts() {
  const PPOConfig& c = setup_.ppo;
  buffer_.reset(c.num_envs, c.rollout_len);
  const Policy<float>& policy = policy_;
  pool_.parallel_for(c.num_envs, [&](int e) {
    Slot& s = slots_[e];
    s.finished.clear();
    buffer_.initial_hidden[e] = s.hidden.cast<double>();
    for (int t = 0; t < c.rollout_len; ++t) {
      const std::size_t k = buffer_.index(e, t);
      PolicyInput<double> input = make_policy_input<double>(s.obs, setup_.features);
      const PolicyOutput<float> out = policy.forward(input.cast<float>(), s.hidden);
      const nn::Categorical<double> dist(out.logits.cast<double>());
      const int action = dist.sample(s.rng);
      StepResult r;
      try {
        r = s.env->step(action);
      } catch (const std::exception& ex) {
        throw std::runtime_error("env " + std::to_string(e) + " (episode seed " +
                                 std::to_string(s.env->episode_seed()) + ", t=" + std::to_string(s.env->t()) +
                                 "): " + ex.what());
      }
      buffer_.inputs[k] = std::move(input);
      buffer_.actions[k] = action;
      buffer_.log_probs[k] = dist.log_prob(action);
      buffer_.values[k] = static_cast<double>(out.value);
      buffer_.rewards[k] = r.reward * c.reward_scale;
      buffer_.dones[k] = r.done ? 1 : 0;
      s.episode_reward += r.reward;
      ++s.episode_length;
      if (r.done) {
        s.finished.push_back({s.episode_reward, s.episode_length, r.outcome});
        start_episode(e);
      } else {
        s.obs = std::move(r.observation);
        s.hidden = out.hidden;
      }
    }
    const PolicyInput<double> input = make_policy_input<double>(s.obs, setup_.features);
    buffer_.bootstrap_values[e] = static_cast<double>(policy.forward(input.cast<float>(), s.hidden).value);
  });

  last_episodes_.clear();
  for (Slot& s : slots_) {
    for (const EpisodeSummary& ep : s.finished) {
      last_episodes_.push_back(ep);
      recent_.push_back(ep);
      if (recent_.size() > kRollingWindow) recent_.pop_front();
    }
  }
}

TrainStats Trainer::iterate() {
  const double lr = learning_rate(setup_.ppo, env_steps_);
  collect_rollouts();
  env_steps_ += setup_.ppo.steps_per_iteration();
  buffer_.compute_advantages(setup_.ppo.gamma, setup_.ppo.gae_lambda, true);
  const UpdateStats u = ppo_update(policy_, adam_, buffer_, setup_.ppo, lr, shuffle_rng_);
  ++iteration_;

  TrainStats st;
  st.iteration = iteration_;
  st.env_steps = env_steps_;
  st.episodes = static_cast<int>(last_episodes_.size());
  if (!recent_.empty()) {
    double reward = 0.0, length = 0.0, success = 0.0;
    for (const EpisodeSummary& e : recent_) {
      reward += e.reward;
      length += e.length;
      success += e.outcome == Outcome::Success ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(recent_.size());
    st.mean_episode_reward = reward / n;
    st.mean_episode_length = length / n;
    st.success_rate = success / n;
  }
  st.policy_loss = u.loss.policy;
  st.value_loss = u.loss.value;
  st.entropy = u.loss.entropy;
  st.approx_kl = u.loss.approx_kl;
  st.clip_fraction = u.loss.clip_fraction;
  st.grad_norm = u.grad_norm;
  st.lr = lr;
  return st;
}

Checkpoint Trainer::checkpoint(const TrainStats* stats) const {
  Checkpoint ck;
  json slots = json::array();
  for (const Slot& s : slots_) {
    slots.push_back({{"env", s.env->save_state()},
                     {"rng", rng_to_string(s.rng)},
                     {"episode", s.episode},
                     {"episode_reward", s.episode_reward},
                     {"episode_length", s.episode_length},
                     {"hidden", std::vector<float>(s.hidden.data(), s.hidden.data() + s.hidden.size())}});
  }
  json recent = json::array();
  for (const EpisodeSummary& e : recent_) recent.push_back(summary_json(e));
  ck.metadata = {{"format", "crowdnav-policy"},
                 {"setup", setup_.to_json()},
                 {"stats", stats ? stats->to_json() : json(nullptr)},
                 {"trainer",
                  {{"iteration", iteration_},
                   {"env_steps", env_steps_},
                   {"adam_t", adam_.t},
                   {"shuffle_rng", rng_to_string(shuffle_rng_)},
                   {"recent", std::move(recent)},
                   {"slots", std::move(slots)}}}};
  const auto& params = policy_.params();
  for (std::size_t i = 0; i < params.size(); ++i) ck.tensors.emplace_back(params.name(i), params.value(i));
  for (std::size_t i = 0; i < params.size(); ++i) ck.tensors.emplace_back("optim/m/" + params.name(i), adam_.m[i]);
  for (std::size_t i = 0; i < params.size(); ++i) ck.tensors.emplace_back("optim/v/" + params.name(i), adam_.v[i]);
  return ck;
}

namespace {

nn::ParamStore<float> params_from_checkpoint(const Checkpoint& ck, const PolicyConfig& config) {
  const Policy<float> reference(config, 0);
  nn::ParamStore<float> store;
  for (std::size_t i = 0; i < reference.params().size(); ++i) {
    const std::string& name = reference.params().name(i);
    const nn::Matrix<float>& m = ck.tensor(name);
    const auto& want = reference.params().value(i);
    if (m.rows() != want.rows() || m.cols() != want.cols()) {
      throw CheckpointError("checkpoint tensor '" + name + "' has the wrong shape");
    }
    store.add(name, m);
  }
  return store;
}

}  // namespace

LoadedPolicy policy_from_checkpoint(const Checkpoint& ck) {
  LoadedPolicy out;
  try {
    out.setup = setup_from_json(ck.metadata.at("setup"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata: ") + e.what());
  }
  out.policy = std::make_shared<const Policy<float>>(out.setup.policy, params_from_checkpoint(ck, out.setup.policy));
  return out;
}

std::unique_ptr<Trainer> Trainer::from_checkpoint(const Checkpoint& ck, int threads) {
  const LoadedPolicy loaded = policy_from_checkpoint(ck);
  if (!ck.metadata.contains("trainer")) throw CheckpointError("checkpoint has no trainer state; cannot resume");
  auto trainer = std::make_unique<Trainer>(loaded.setup, threads);
  try {
    const json& tj = ck.metadata.at("trainer");
    trainer->policy_ = *loaded.policy;
    auto& params = trainer->policy_.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      trainer->adam_.m[i] = ck.tensor("optim/m/" + params.name(i));
      trainer->adam_.v[i] = ck.tensor("optim/v/" + params.name(i));
    }
    trainer->adam_.t = tj.at("adam_t").get<std::int64_t>();
    trainer->iteration_ = tj.at("iteration").get<int>();
    trainer->env_steps_ = tj.at("env_steps").get<std::int64_t>();
    rng_from_string(trainer->shuffle_rng_, tj.at("shuffle_rng").get<std::string>());
    trainer->recent_.clear();
    for (const json& e : tj.at("recent")) trainer->recent_.push_back(summary_from(e));
    const json& slots = tj.at("slots");
    if (slots.size() != trainer->slots_.size()) throw CheckpointError("checkpoint env count disagrees with its config");
    for (std::size_t e = 0; e < slots.size(); ++e) {
      Slot& s = trainer->slots_[e];
      const json& sj = slots[e];
      s.env->load_state(sj.at("env"));
      s.obs = s.env->observe();
      rng_from_string(s.rng, sj.at("rng").get<std::string>());
      s.episode = sj.at("episode").get<std::uint64_t>();
      s.episode_reward = sj.at("episode_reward").get<double>();
      s.episode_length = sj.at("episode_length").get<int>();
      const auto h = sj.at("hidden").get<std::vector<float>>();
      if (static_cast<int>(h.size()) != trainer->setup_.policy.gru_hidden) throw CheckpointError("bad hidden state size");
      s.hidden = Eigen::Map<const nn::Matrix<float>>(h.data(), 1, static_cast<Eigen::Index>(h.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint trainer state: ") + e.what());
  }
  return trainer;
}

template nn::Var ppo_loss<float>(nn::Tape<float>&, std::span<const nn::Var>, std::span<const nn::Var>,
                                 std::span<const PPOSample>, const PPOConfig&, PPOLossTerms*);
template nn::Var ppo_loss<double>(nn::Tape<double>&, std::span<const nn::Var>, std::span<const nn::Var>,
                                  std::span<const PPOSample>, const PPOConfig&, PPOLossTerms*);
template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm<float>(nn::ParamStore<float>&, double);
template double clip_grad_norm<double>(nn::ParamStore<double>&, double);
template PPOLossTerms minibatch_gradients<float>(const Policy<float>&, nn::ParamStore<float>&, const RolloutBuffer&,
                                                 std::span<const int>, const PPOConfig&);
template PPOLossTerms minibatch_gradients<double>(const Policy<double>&, nn::ParamStore<double>&, const RolloutBuffer&,
                                                  std::span<const int>, const PPOConfig&);
template UpdateStats ppo_update<float>(Policy<float>&, Adam<float>&, const RolloutBuffer&, const PPOConfig&, double,
                                       std::mt19937_64&);
template UpdateStats ppo_update<double>(Policy<double>&, Adam<double>&, const RolloutBuffer&, const PPOConfig&, double,
                                        std::mt19937_64&);

}  // namespace crowdnav
