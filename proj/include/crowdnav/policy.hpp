#pragma once

#include "crowdnav/autodiff.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace crowdnav {

/// Which interaction stages the network contains. RH alone is the
/// robot-human baseline; RH_OH adds obstacle-human attention; Full adds
/// human-human attention in front of both.
enum class AttentionStages { RH, RH_OH, Full };

std::string to_string(AttentionStages stages);
AttentionStages attention_stages_from_string(const std::string& name);

struct ConvLayerSpec {
  int channels = 8;
  int kernel = 5;
  int stride = 2;
};

struct PolicyConfig {
  int d_hh = 64;
  int d_oh = 64;
  int d_rh = 64;
  int heads_hh = 8;
  int gru_hidden = 128;
  std::vector<ConvLayerSpec> conv{{8, 5, 2}, {16, 5, 2}};
  int n_max = 6;
  int action_count = 9;
  int num_beams = 180;
  int robot_features = 7;
  int human_features = 4;
  AttentionStages stages = AttentionStages::Full;

  void validate() const;
  /// Flattened length of the conv stack output.
  int conv_output_size() const;
  int gru_input_size() const { return d_rh + d_oh + d_rh + 1; }
};

/// Network input for one timestep. Human rows beyond the visible set and
/// every masked row must be zero.
template <typename Scalar>
struct PolicyInput {
  nn::Matrix<Scalar> robot;   // 1 x robot_features
  nn::Matrix<Scalar> humans;  // n_max x human_features
  std::vector<Scalar> mask;   // n_max entries, 1 = visible
  nn::Matrix<Scalar> scan;    // 1 x num_beams, ranges / max_range

  template <typename Other>
  PolicyInput<Other> cast() const {
    return {robot.template cast<Other>(), humans.template cast<Other>(),
            std::vector<Other>(mask.begin(), mask.end()), scan.template cast<Other>()};
  }
};

/// Tape handles of every parameter, created once per tape.
struct PolicyParamVars {
  nn::Var robot_w, robot_b;
  nn::Var hh_wq, hh_wk, hh_wv, hh_wo;
  std::vector<nn::Var> conv_w, conv_b;
  nn::Var obst_w, obst_b;
  nn::Var oh_wq, oh_wv;
  nn::Var rh_wq, rh_wv;
  nn::Var gru_w_ih, gru_w_hh, gru_b_ih, gru_b_hh;
  nn::Var value_w, value_b, policy_w, policy_b;
};

struct AttentionResult {
  nn::Var features;           // n x d (HH, OH) or 1 x d (RH)
  std::vector<nn::Var> weights;  // HH: one n x n per head; OH/RH: one 1 x n
  bool no_humans = false;
};

struct PolicyNodes {
  nn::Var value;   // 1 x 1
  nn::Var logits;  // 1 x action_count
  nn::Var hidden;  // 1 x gru_hidden
  nn::Var robot_embedding;
  nn::Var obstacle_embedding;
  AttentionResult hh, oh, rh;
  bool no_humans = false;
};

template <typename Scalar>
struct PolicyOutput {
  Scalar value = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logits;
  nn::Matrix<Scalar> hidden;
  std::vector<nn::Matrix<Scalar>> hh_weights;  // per head, n_max x n_max
  nn::Matrix<Scalar> oh_weights;               // 1 x n_max
  nn::Matrix<Scalar> rh_weights;               // 1 x n_max
  bool no_humans = false;
};

/// Structured attention policy: HH attention -> OH attention (key from a 1D
/// conv over the scan) -> RH attention (key from the robot embedding) ->
/// GRU -> value and policy heads. Projections are shared across humans, so
/// the parameter count does not depend on n_max.
template <typename Scalar>
class Policy {
 public:
  using Mat = nn::Matrix<Scalar>;

  Policy(PolicyConfig config, std::uint64_t seed);
  /// Adopts existing parameters; throws if names or shapes disagree with config.
  Policy(PolicyConfig config, nn::ParamStore<Scalar> params);

  const PolicyConfig& config() const { return config_; }
  nn::ParamStore<Scalar>& params() { return params_; }
  const nn::ParamStore<Scalar>& params() const { return params_; }
  Mat zero_hidden() const { return Mat::Zero(1, config_.gru_hidden); }

  /// Inference forward on a private tape. Thread-safe on a const Policy.
  PolicyOutput<Scalar> forward(const PolicyInput<Scalar>& input, const Mat& hidden) const;

  PolicyParamVars bind(nn::Tape<Scalar>& tape) const;
  PolicyNodes forward(nn::Tape<Scalar>& tape, const PolicyParamVars& p, const PolicyInput<Scalar>& input,
                      nn::Var hidden) const;

  // Individual stages, exposed for inspection and testing.
  nn::Var robot_embedding(nn::Tape<Scalar>& tape, const PolicyParamVars& p, nn::Var robot) const;
  AttentionResult hh_attention(nn::Tape<Scalar>& tape, const PolicyParamVars& p, nn::Var humans,
                               std::span<const Scalar> mask) const;
  nn::Var obstacle_embedding(nn::Tape<Scalar>& tape, const PolicyParamVars& p, nn::Var scan) const;
  AttentionResult oh_attention(nn::Tape<Scalar>& tape, const PolicyParamVars& p, nn::Var human_features,
                               nn::Var obstacle_key, std::span<const Scalar> mask) const;
  AttentionResult rh_attention(nn::Tape<Scalar>& tape, const PolicyParamVars& p, nn::Var human_features,
                               nn::Var robot_key, std::span<const Scalar> mask) const;

 private:
  void init_params(std::uint64_t seed);
  void check_params() const;

  PolicyConfig config_;
  nn::ParamStore<Scalar> params_;
};

/// Parameter count of a freshly built policy for `config`.
std::size_t policy_parameter_count(const PolicyConfig& config);

}  // namespace crowdnav
