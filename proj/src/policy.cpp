#include "crowdnav/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace crowdnav {

using nn::Var;

std::string to_string(AttentionStages stages) {
  switch (stages) {
    case AttentionStages::RH:
      return "RH";
    case AttentionStages::RH_OH:
      return "RH+OH";
    case AttentionStages::Full:
      return "RH+HH+OH";
  }
  return "?";
}

AttentionStages attention_stages_from_string(const std::string& name) {
  if (name == "RH") return AttentionStages::RH;
  if (name == "RH+OH") return AttentionStages::RH_OH;
  if (name == "RH+HH+OH") return AttentionStages::Full;
  throw std::invalid_argument("unknown attention configuration '" + name + "' (expected RH, RH+OH or RH+HH+OH)");
}

void PolicyConfig::validate() const {
  if (d_hh <= 0 || d_oh <= 0 || d_rh <= 0 || gru_hidden <= 0) throw std::invalid_argument("policy sizes must be positive");
  if (heads_hh <= 0 || d_hh % heads_hh != 0) throw std::invalid_argument("d_hh must be divisible by heads_hh");
  if (n_max <= 0) throw std::invalid_argument("n_max must be positive");
  if (action_count <= 0) throw std::invalid_argument("action_count must be positive");
  if (robot_features <= 0 || human_features <= 0) throw std::invalid_argument("feature sizes must be positive");
  if (conv.empty()) throw std::invalid_argument("conv stack needs at least one layer");
  if (conv_output_size() <= 0) throw std::invalid_argument("conv stack is too deep for the beam count");
}

int PolicyConfig::conv_output_size() const {
  int length = num_beams;
  int channels = 1;
  for (const ConvLayerSpec& layer : conv) {
    if (layer.kernel <= 0 || layer.stride <= 0 || layer.channels <= 0 || length < layer.kernel) return 0;
    length = (length - layer.kernel) / layer.stride + 1;
    channels = layer.channels;
  }
  return channels * length;
}

template <typename Scalar>
Policy<Scalar>::Policy(PolicyConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  init_params(seed);
}

template <typename Scalar>
Policy<Scalar>::Policy(PolicyConfig config, nn::ParamStore<Scalar> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  check_params();
}

template <typename Scalar>
void Policy<Scalar>::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto dense = [&](const std::string& name, int in, int out) {
    params_.add(name, nn::glorot_uniform<Scalar>(in, out, in, out, rng));
  };
  const auto zeros = [&](const std::string& name, int rows, int cols) { params_.add(name, Mat::Zero(rows, cols)); };

  const PolicyConfig& c = config_;
  dense("robot.w", c.robot_features, c.d_rh);
  zeros("robot.b", 1, c.d_rh);
  if (c.stages == AttentionStages::Full) {
    dense("hh.wq", c.human_features, c.d_hh);
    dense("hh.wk", c.human_features, c.d_hh);
    dense("hh.wv", c.human_features, c.d_hh);
    dense("hh.wo", c.d_hh, c.d_hh);
  }
  int in_channels = 1;
  for (std::size_t i = 0; i < c.conv.size(); ++i) {
    const ConvLayerSpec& layer = c.conv[i];
    params_.add("conv" + std::to_string(i) + ".w",
                nn::glorot_uniform<Scalar>(layer.channels, in_channels * layer.kernel, in_channels * layer.kernel,
                                           layer.channels * layer.kernel, rng));
    zeros("conv" + std::to_string(i) + ".b", layer.channels, 1);
    in_channels = layer.channels;
  }
  dense("obst.w", c.conv_output_size(), c.d_oh);
  zeros("obst.b", 1, c.d_oh);
  if (c.stages != AttentionStages::RH) {
    const int in = c.stages == AttentionStages::Full ? c.d_hh : c.human_features;
    dense("oh.wq", in, c.d_oh);
    dense("oh.wv", in, c.d_oh);
  }
  const int rh_in = c.stages == AttentionStages::RH ? c.human_features : c.d_oh;
  dense("rh.wq", rh_in, c.d_rh);
  dense("rh.wv", rh_in, c.d_rh);

  const int in = c.gru_input_size();
  const int hidden = c.gru_hidden;
  Mat w_ih(in, 3 * hidden);
  Mat w_hh(hidden, 3 * hidden);
  for (int gate = 0; gate < 3; ++gate) {
    w_ih.middleCols(gate * hidden, hidden) = nn::glorot_uniform<Scalar>(in, hidden, in, hidden, rng);
    w_hh.middleCols(gate * hidden, hidden) = nn::glorot_uniform<Scalar>(hidden, hidden, hidden, hidden, rng);
  }
  params_.add("gru.w_ih", std::move(w_ih));
  params_.add("gru.w_hh", std::move(w_hh));
  zeros("gru.b_ih", 1, 3 * hidden);
  zeros("gru.b_hh", 1, 3 * hidden);
  dense("value.w", hidden, 1);
  zeros("value.b", 1, 1);
  dense("policy.w", hidden, c.action_count);
  zeros("policy.b", 1, c.action_count);
}

template <typename Scalar>
void Policy<Scalar>::check_params() const {
  const Policy<Scalar> reference(config_, 0);
  const auto& ref = reference.params();
  if (ref.size() != params_.size())
    throw std::invalid_argument("parameter set has " + std::to_string(params_.size()) + " tensors, expected " +
                                std::to_string(ref.size()));
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const auto& mine = params_.value(ref.name(i));
    if (mine.rows() != ref.value(i).rows() || mine.cols() != ref.value(i).cols())
      throw std::invalid_argument("parameter " + ref.name(i) + " has the wrong shape");
  }
}

template <typename Scalar>
PolicyParamVars Policy<Scalar>::bind(nn::Tape<Scalar>& tape) const {
  const auto get = [&](const char* name) { return params_.contains(name) ? tape.param(name) : Var{}; };
  PolicyParamVars p;
  p.robot_w = get("robot.w");
  p.robot_b = get("robot.b");
  p.hh_wq = get("hh.wq");
  p.hh_wk = get("hh.wk");
  p.hh_wv = get("hh.wv");
  p.hh_wo = get("hh.wo");
  for (std::size_t i = 0; i < config_.conv.size(); ++i) {
    p.conv_w.push_back(tape.param("conv" + std::to_string(i) + ".w"));
    p.conv_b.push_back(tape.param("conv" + std::to_string(i) + ".b"));
  }
  p.obst_w = get("obst.w");
  p.obst_b = get("obst.b");
  p.oh_wq = get("oh.wq");
  p.oh_wv = get("oh.wv");
  p.rh_wq = get("rh.wq");
  p.rh_wv = get("rh.wv");
  p.gru_w_ih = get("gru.w_ih");
  p.gru_w_hh = get("gru.w_hh");
  p.gru_b_ih = get("gru.b_ih");
  p.gru_b_hh = get("gru.b_hh");
  p.value_w = get("value.w");
  p.value_b = get("value.b");
  p.policy_w = get("policy.w");
  p.policy_b = get("policy.b");
  return p;
}

template <typename Scalar>
Var Policy<Scalar>::robot_embedding(nn::Tape<Scalar>& tape, const PolicyParamVars& p, Var robot) const {
  return tape.linear(robot, p.robot_w, p.robot_b);
}

template <typename Scalar>
AttentionResult Policy<Scalar>::hh_attention(nn::Tape<Scalar>& tape, const PolicyParamVars& p, Var humans,
                                             std::span<const Scalar> mask) const {
  AttentionResult out;
  const int n = static_cast<int>(mask.size());
  const int head_dim = config_.d_hh / config_.heads_hh;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));

  const Var q = tape.matmul(humans, p.hh_wq);
  const Var k = tape.matmul(humans, p.hh_wk);
  const Var v = tape.matmul(humans, p.hh_wv);
  Mat mask_col(n, 1);
  for (int i = 0; i < n; ++i) mask_col(i, 0) = mask[i];
  const Var query_mask = tape.constant(mask_col);

  std::vector<Var> heads;
  for (int h = 0; h < config_.heads_hh; ++h) {
    const Var qh = tape.slice_cols(q, h * head_dim, head_dim);
    const Var kh = tape.slice_cols(k, h * head_dim, head_dim);
    const Var vh = tape.slice_cols(v, h * head_dim, head_dim);
    const Var logits = tape.scale(tape.matmul_transposed(qh, kh), inv_sqrt);
    // Key-side masking, then drop the rows of invisible queries.
    const Var weights = tape.scale_rows(tape.masked_softmax(logits, mask, &out.no_humans), query_mask);
    out.weights.push_back(weights);
    heads.push_back(tape.matmul(weights, vh));
  }
  out.features = tape.matmul(tape.concat_cols(heads), p.hh_wo);
  return out;
}

template <typename Scalar>
Var Policy<Scalar>::obstacle_embedding(nn::Tape<Scalar>& tape, const PolicyParamVars& p, Var scan) const {
  const auto& s = tape.value(scan);
  if (s.rows() != 1 || s.cols() != config_.num_beams)
    throw nn::ShapeError("scan has " + std::to_string(s.cols()) + " beams, policy expects " +
                         std::to_string(config_.num_beams));
  Var x = scan;
  for (std::size_t i = 0; i < config_.conv.size(); ++i)
    x = tape.relu(tape.conv1d(x, p.conv_w[i], p.conv_b[i], config_.conv[i].kernel, config_.conv[i].stride));
  const auto& feature_map = tape.value(x);
  const Var flat = tape.reshape(x, 1, static_cast<int>(feature_map.size()));
  return tape.linear(flat, p.obst_w, p.obst_b);
}

template <typename Scalar>
AttentionResult Policy<Scalar>::oh_attention(nn::Tape<Scalar>& tape, const PolicyParamVars& p, Var human_features,
                                             Var obstacle_key, std::span<const Scalar> mask) const {
  AttentionResult out;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(config_.d_oh));
  const Var q = tape.matmul(human_features, p.oh_wq);
  const Var v = tape.matmul(human_features, p.oh_wv);
  const Var logits = tape.transpose(tape.scale(tape.matmul_transposed(q, obstacle_key), inv_sqrt));
  const Var weights = tape.masked_softmax(logits, mask, &out.no_humans);
  out.weights.push_back(weights);
  Scalar visible = 0;
  for (Scalar m : mask) visible += m != Scalar(0) ? Scalar(1) : Scalar(0);
  // n_vis * weight keeps uniform attention an identity scaling.
  out.features = tape.scale_rows(v, tape.scale(tape.transpose(weights), visible));
  return out;
}

template <typename Scalar>
AttentionResult Policy<Scalar>::rh_attention(nn::Tape<Scalar>& tape, const PolicyParamVars& p, Var human_features,
                                             Var robot_key, std::span<const Scalar> mask) const {
  AttentionResult out;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(config_.d_rh));
  const Var q = tape.matmul(human_features, p.rh_wq);
  const Var v = tape.matmul(human_features, p.rh_wv);
  const Var logits = tape.transpose(tape.scale(tape.matmul_transposed(q, robot_key), inv_sqrt));
  const Var weights = tape.masked_softmax(logits, mask, &out.no_humans);
  out.weights.push_back(weights);
  out.features = tape.matmul(weights, v);
  return out;
}

template <typename Scalar>
PolicyNodes Policy<Scalar>::forward(nn::Tape<Scalar>& tape, const PolicyParamVars& p, const PolicyInput<Scalar>& input,
                                    Var hidden) const {
  const PolicyConfig& c = config_;
  if (input.robot.rows() != 1 || input.robot.cols() != c.robot_features)
    throw nn::ShapeError("robot input must be 1 x " + std::to_string(c.robot_features));
  if (input.humans.rows() != c.n_max || input.humans.cols() != c.human_features)
    throw nn::ShapeError("human input must be " + std::to_string(c.n_max) + " x " + std::to_string(c.human_features));
  if (static_cast<int>(input.mask.size()) != c.n_max) throw nn::ShapeError("mask length must equal n_max");

  Mat humans = input.humans;
  for (int i = 0; i < c.n_max; ++i)
    if (input.mask[i] == Scalar(0)) humans.row(i).setZero();

  PolicyNodes out;
  const Var robot = tape.constant(input.robot);
  const Var human_var = tape.constant(std::move(humans));
  const Var scan = tape.constant(input.scan);
  const std::span<const Scalar> mask(input.mask);

  out.robot_embedding = robot_embedding(tape, p, robot);
  out.obstacle_embedding = obstacle_embedding(tape, p, scan);
  Var rh_input = human_var;
  if (c.stages == AttentionStages::Full) {
    out.hh = hh_attention(tape, p, human_var, mask);
    out.oh = oh_attention(tape, p, out.hh.features, out.obstacle_embedding, mask);
    rh_input = out.oh.features;
  } else if (c.stages == AttentionStages::RH_OH) {
    out.oh = oh_attention(tape, p, human_var, out.obstacle_embedding, mask);
    rh_input = out.oh.features;
  }
  out.rh = rh_attention(tape, p, rh_input, out.robot_embedding, mask);
  out.no_humans = out.rh.no_humans;

  Mat flag(1, 1);
  flag(0, 0) = out.no_humans ? Scalar(1) : Scalar(0);
  const Var parts[] = {out.robot_embedding, out.obstacle_embedding, out.rh.features, tape.constant(flag)};
  const Var x = tape.concat_cols(parts);
  out.hidden = tape.gru_cell(x, hidden, p.gru_w_ih, p.gru_w_hh, p.gru_b_ih, p.gru_b_hh);
  out.value = tape.linear(out.hidden, p.value_w, p.value_b);
  out.logits = tape.linear(out.hidden, p.policy_w, p.policy_b);
  return out;
}

template <typename Scalar>
PolicyOutput<Scalar> Policy<Scalar>::forward(const PolicyInput<Scalar>& input, const Mat& hidden) const {
  nn::Tape<Scalar> tape(params_);
  const PolicyParamVars p = bind(tape);
  const PolicyNodes nodes = forward(tape, p, input, tape.constant(hidden));

  PolicyOutput<Scalar> out;
  out.value = tape.value(nodes.value)(0, 0);
  out.logits = tape.value(nodes.logits).row(0).transpose();
  out.hidden = tape.value(nodes.hidden);
  for (Var w : nodes.hh.weights) out.hh_weights.push_back(tape.value(w));
  if (!nodes.oh.weights.empty()) out.oh_weights = tape.value(nodes.oh.weights.front());
  out.rh_weights = tape.value(nodes.rh.weights.front());
  out.no_humans = nodes.no_humans;
  return out;
}

std::size_t policy_parameter_count(const PolicyConfig& config) {
  return Policy<float>(config, 0).params().parameter_count();
}

template class Policy<float>;
template class Policy<double>;

}  // namespace crowdnav
