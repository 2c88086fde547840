#include "crowdnav/policy.hpp"
#include "support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace crowdnav;
using nn::Tape;
using nn::Var;
using Mat = nn::Matrix<double>;

namespace {

// Parameter store with the policy weights plus extra named inputs, so stage
// inputs can be differentiated too.
nn::ParamStore<double> with_inputs(const Policy<double>& policy,
                                   std::initializer_list<std::pair<std::string, Mat>> inputs) {
  nn::ParamStore<double> store = policy.params();
  for (const auto& [name, value] : inputs) store.add(name, value);
  return store;
}

// Random weights and biases, so no ReLU sits exactly on its kink.
Policy<double> fd_policy(const PolicyConfig& c, std::uint64_t seed) {
  nn::ParamStore<double> params = Policy<double>(c, seed).params();
  std::mt19937_64 rng(seed);
  oracle::randomize_biases(params, rng);
  return Policy<double>(c, std::move(params));
}

double max_abs(const Eigen::VectorXf& a, const Eigen::VectorXf& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST(PolicyConfig, ParameterCountIgnoresHumanCount) {
  const PolicyConfig base;
  std::size_t counts[3];
  int i = 0;
  for (int n : {2, 6, 12}) {
    PolicyConfig c = base;
    c.n_max = n;
    counts[i++] = Policy<float>(c, 1).params().parameter_count();
  }
  EXPECT_EQ(counts[0], counts[1]);
  EXPECT_EQ(counts[1], counts[2]);
  EXPECT_EQ(counts[1], policy_parameter_count(base));
}

TEST(PolicyConfig, StagesAddParameters) {
  PolicyConfig c;
  c.stages = AttentionStages::RH;
  const std::size_t rh = policy_parameter_count(c);
  c.stages = AttentionStages::RH_OH;
  const std::size_t rh_oh = policy_parameter_count(c);
  c.stages = AttentionStages::Full;
  const std::size_t full = policy_parameter_count(c);
  EXPECT_LT(rh, rh_oh);
  EXPECT_LT(rh_oh, full);
}

TEST(PolicyConfig, RejectsBadHeads) {
  PolicyConfig c;
  c.heads_hh = 7;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Policy, AdoptingParamsChecksShapes) {
  const PolicyConfig c = oracle::small_policy_config();
  Policy<double> p(c, 3);
  EXPECT_NO_THROW(Policy<double>(c, p.params()));
  PolicyConfig other = c;
  other.gru_hidden = 7;
  EXPECT_THROW(Policy<double>(other, p.params()), std::invalid_argument);
}

TEST(Policy, SingleHumanStages) {
  const PolicyConfig c = oracle::small_policy_config();
  const Policy<double> policy(c, 4);
  std::mt19937_64 rng(4);
  const PolicyInput<double> in = oracle::random_policy_input<double>(c, 1, rng);
  int slot = 0;
  while (in.mask[slot] == 0.0) ++slot;

  Tape<double> tape(policy.params());
  const auto p = policy.bind(tape);
  const Var humans = tape.constant(in.humans);
  const AttentionResult hh = policy.hh_attention(tape, p, humans, in.mask);
  for (const Var w : hh.weights) EXPECT_DOUBLE_EQ(tape.value(w)(slot, slot), 1.0);

  const Var key = policy.obstacle_embedding(tape, p, tape.constant(in.scan));
  const AttentionResult oh = policy.oh_attention(tape, p, hh.features, key, in.mask);
  EXPECT_DOUBLE_EQ(tape.value(oh.weights[0])(0, slot), 1.0);
  const Mat v_oh = tape.value(hh.features).row(slot) * policy.params().value("oh.wv");
  EXPECT_LT((tape.value(oh.features).row(slot) - v_oh).cwiseAbs().maxCoeff(), 1e-12);

  const Var robot_key = policy.robot_embedding(tape, p, tape.constant(in.robot));
  const AttentionResult rh = policy.rh_attention(tape, p, oh.features, robot_key, in.mask);
  const Mat v_rh = tape.value(oh.features).row(slot) * policy.params().value("rh.wv");
  EXPECT_LT((tape.value(rh.features) - v_rh).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Policy, OhUniformAttentionIsIdentityScaling) {
  const PolicyConfig c = oracle::small_policy_config(AttentionStages::RH_OH);
  Policy<double> policy(c, 5);
  // Zero query weights give equal logits.
  policy.params().value("oh.wq").setZero();
  std::mt19937_64 rng(5);
  const PolicyInput<double> in = oracle::random_policy_input<double>(c, 2, rng);
  Tape<double> tape(policy.params());
  const auto p = policy.bind(tape);
  const Var humans = tape.constant(in.humans);
  const Var key = policy.obstacle_embedding(tape, p, tape.constant(in.scan));
  const AttentionResult oh = policy.oh_attention(tape, p, humans, key, in.mask);
  const Mat expected = in.humans * policy.params().value("oh.wv");
  EXPECT_LT((tape.value(oh.features) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Policy, RhWeightsSumToOneOverVisible) {
  const PolicyConfig c = oracle::small_policy_config();
  const Policy<float> policy(c, 6);
  std::mt19937_64 rng(6);
  for (int visible = 1; visible <= c.n_max; ++visible) {
    const auto in = oracle::random_policy_input<float>(c, visible, rng);
    const auto out = policy.forward(in, policy.zero_hidden());
    float total = 0.0f;
    for (int i = 0; i < c.n_max; ++i) {
      if (in.mask[i] == 0.0f) EXPECT_EQ(out.rh_weights(0, i), 0.0f);
      total += out.rh_weights(0, i);
    }
    EXPECT_NEAR(total, 1.0f, 1e-6f);
  }
}

TEST(Policy, NoHumansStillFinite) {
  const PolicyConfig c = oracle::small_policy_config();
  const Policy<float> policy(c, 7);
  std::mt19937_64 rng(7);
  const auto out = policy.forward(oracle::random_policy_input<float>(c, 0, rng), policy.zero_hidden());
  EXPECT_TRUE(out.no_humans);
  EXPECT_TRUE(std::isfinite(out.value));
  EXPECT_TRUE(out.logits.allFinite());
  EXPECT_TRUE(out.rh_weights.isZero(0.0f));
}

TEST(Policy, ForwardIsDeterministic) {
  const PolicyConfig c;
  const Policy<float> a(c, 8), b(c, 8);
  std::mt19937_64 rng(8);
  const auto in = oracle::random_policy_input<float>(c, 3, rng);
  const auto oa = a.forward(in, a.zero_hidden());
  const auto ob = b.forward(in, b.zero_hidden());
  EXPECT_EQ(oa.value, ob.value);
  EXPECT_EQ(oa.logits, ob.logits);
  EXPECT_EQ(oa.hidden, ob.hidden);
}

TEST(Policy, WrongBeamCountThrows) {
  const PolicyConfig c = oracle::small_policy_config();
  const Policy<float> policy(c, 9);
  std::mt19937_64 rng(9);
  auto in = oracle::random_policy_input<float>(c, 1, rng);
  in.scan.resize(1, c.num_beams + 1);
  EXPECT_THROW(policy.forward(in, policy.zero_hidden()), nn::ShapeError);
}

TEST(Policy, MaskedSlotContentsAreIgnored) {
  const PolicyConfig c;
  const Policy<float> policy(c, 10);
  std::mt19937_64 rng(10);
  std::normal_distribution<float> noise(0.0f, 50.0f);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = oracle::random_policy_input<float>(c, trial % (c.n_max + 1), rng);
    auto dirty = in;
    for (int i = 0; i < c.n_max; ++i) {
      if (in.mask[i] != 0.0f) continue;
      for (int k = 0; k < c.human_features; ++k) dirty.humans(i, k) = noise(rng);
    }
    const auto a = policy.forward(in, policy.zero_hidden());
    const auto b = policy.forward(dirty, policy.zero_hidden());
    EXPECT_LE(std::abs(a.value - b.value), 1e-6f);
    EXPECT_LE(max_abs(a.logits, b.logits), 1e-6f);
  }
}

TEST(Policy, InvariantToHumanPermutation) {
  const PolicyConfig c;
  const Policy<float> policy(c, 11);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = oracle::random_policy_input<float>(c, 1 + trial % c.n_max, rng);
    std::vector<int> perm(c.n_max);
    for (int i = 0; i < c.n_max; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    auto shuffled = in;
    for (int i = 0; i < c.n_max; ++i) {
      shuffled.humans.row(perm[i]) = in.humans.row(i);
      shuffled.mask[perm[i]] = in.mask[i];
    }
    const auto a = policy.forward(in, policy.zero_hidden());
    const auto b = policy.forward(shuffled, policy.zero_hidden());
    EXPECT_LE(std::abs(a.value - b.value), 1e-5f);
    EXPECT_LE(max_abs(a.logits, b.logits), 1e-5f);
  }
}

TEST(Policy, HhAttentionIsPermutationEquivariant) {
  const PolicyConfig c = oracle::small_policy_config();
  const Policy<double> policy(c, 12);
  std::mt19937_64 rng(12);
  const auto in = oracle::random_policy_input<double>(c, 3, rng);
  const std::vector<int> perm = {2, 0, 3, 1};
  PolicyInput<double> shuffled = in;
  for (int i = 0; i < c.n_max; ++i) {
    shuffled.humans.row(perm[i]) = in.humans.row(i);
    shuffled.mask[perm[i]] = in.mask[i];
  }
  Tape<double> tape(policy.params());
  const auto p = policy.bind(tape);
  const Mat a = tape.value(policy.hh_attention(tape, p, tape.constant(in.humans), in.mask).features);
  const Mat b = tape.value(policy.hh_attention(tape, p, tape.constant(shuffled.humans), shuffled.mask).features);
  for (int i = 0; i < c.n_max; ++i) EXPECT_LT((a.row(i) - b.row(perm[i])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Policy, MaskingEqualsDeletion) {
  const PolicyConfig c = oracle::small_policy_config();
  const Policy<double> policy(c, 13);
  std::mt19937_64 rng(13);
  auto in = oracle::random_policy_input<double>(c, 4, rng);
  // Hide slot 1 versus zeroing it out entirely: identical outputs.
  auto hidden = in;
  hidden.mask[1] = 0.0;
  auto deleted = hidden;
  deleted.humans.row(1).setZero();
  const auto a = policy.forward(hidden, policy.zero_hidden());
  const auto b = policy.forward(deleted, policy.zero_hidden());
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_EQ(a.oh_weights(0, 1), 0.0);
}

TEST(Policy, ConvWithSingleTapKernelsSubsamples) {
  const PolicyConfig c = oracle::small_policy_config();
  const Policy<double> policy(c, 14);
  std::mt19937_64 rng(14);
  const auto in = oracle::random_policy_input<double>(c, 0, rng);
  // One tap at offset 0 from input channel 0 for every output channel.
  Tape<double> tape;
  Var x = tape.constant(in.scan);
  int stride_total = 1, in_channels = 1, length = c.num_beams;
  for (const ConvLayerSpec& layer : c.conv) {
    Mat k = Mat::Zero(layer.channels, in_channels * layer.kernel);
    k.col(0).setOnes();
    x = tape.relu(tape.conv1d(x, tape.constant(k), tape.constant(Mat::Zero(layer.channels, 1)), layer.kernel,
                              layer.stride));
    stride_total *= layer.stride;
    in_channels = layer.channels;
    length = (length - layer.kernel) / layer.stride + 1;
  }
  const Mat out = tape.value(x);
  ASSERT_EQ(out.cols(), length);
  ASSERT_EQ(static_cast<int>(out.size()), c.conv_output_size());
  for (int ch = 0; ch < out.rows(); ++ch)
    for (int j = 0; j < length; ++j) EXPECT_DOUBLE_EQ(out(ch, j), in.scan(0, stride_total * j));
}

TEST(PolicyGradient, EveryStageMatchesFiniteDifferences) {
  const PolicyConfig c = oracle::small_policy_config();
  const Policy<double> policy = fd_policy(c, 15);
  std::mt19937_64 rng(15);
  const auto in = oracle::random_policy_input<double>(c, 3, rng);
  const Mat probe_hh = oracle::random_matrix(c.n_max, c.d_hh, rng);
  const Mat probe_oh = oracle::random_matrix(c.n_max, c.d_oh, rng);
  const Mat probe_rh = oracle::random_matrix(1, c.d_rh, rng);
  const Mat probe_obst = oracle::random_matrix(1, c.d_oh, rng);

  auto store = with_inputs(policy, {{"in.humans", in.humans},
                                    {"in.scan", in.scan},
                                    {"in.robot", in.robot},
                                    {"in.hh", oracle::random_matrix(c.n_max, c.d_hh, rng)},
                                    {"in.oh", oracle::random_matrix(c.n_max, c.d_oh, rng)}});
  const auto probe = [](Tape<double>& t, Var v, const Mat& w) { return t.sum(t.mul(t.tanh(v), t.constant(w))); };

  EXPECT_LE(oracle::gradient_error(store,
                                   [&](Tape<double>& t) {
                                     const auto p = policy.bind(t);
                                     return probe(t, policy.hh_attention(t, p, t.param("in.humans"), in.mask).features,
                                                  probe_hh);
                                   }),
            1e-4);
  EXPECT_LE(oracle::gradient_error(store,
                                   [&](Tape<double>& t) {
                                     const auto p = policy.bind(t);
                                     return probe(t, policy.obstacle_embedding(t, p, t.param("in.scan")), probe_obst);
                                   }),
            1e-4);
  EXPECT_LE(oracle::gradient_error(store,
                                   [&](Tape<double>& t) {
                                     const auto p = policy.bind(t);
                                     const Var key = policy.obstacle_embedding(t, p, t.param("in.scan"));
                                     return probe(t, policy.oh_attention(t, p, t.param("in.hh"), key, in.mask).features,
                                                  probe_oh);
                                   }),
            1e-4);
  EXPECT_LE(oracle::gradient_error(store,
                                   [&](Tape<double>& t) {
                                     const auto p = policy.bind(t);
                                     const Var key = policy.robot_embedding(t, p, t.param("in.robot"));
                                     return probe(t, policy.rh_attention(t, p, t.param("in.oh"), key, in.mask).features,
                                                  probe_rh);
                                   }),
            1e-4);
}

TEST(PolicyGradient, FullForwardMatchesFiniteDifferences) {
  for (AttentionStages stages : {AttentionStages::RH, AttentionStages::RH_OH, AttentionStages::Full}) {
    const PolicyConfig c = oracle::small_policy_config(stages);
    const Policy<double> policy = fd_policy(c, 16);
    std::mt19937_64 rng(16);
    const auto in = oracle::random_policy_input<double>(c, 2, rng);
    const Mat h0 = oracle::random_matrix(1, c.gru_hidden, rng, 0.5);
    const Mat probe = oracle::random_matrix(1, c.action_count, rng);
    auto store = policy.params();
    const double err = oracle::gradient_error(store, [&](Tape<double>& t) {
      const auto p = policy.bind(t);
      // Two recurrent steps so the hidden-state path is exercised.
      const PolicyNodes first = policy.forward(t, p, in, t.constant(h0));
      const PolicyNodes second = policy.forward(t, p, in, first.hidden);
      return t.add(t.sum(t.mul(second.logits, t.constant(probe))), t.mul(second.value, second.value));
    });
    EXPECT_LE(err, 1e-4) << to_string(stages);
  }
}
