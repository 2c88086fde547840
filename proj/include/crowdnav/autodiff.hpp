#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crowdnav::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised when an op produces NaN/Inf or receives incompatible shapes.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Named trainable tensors with matching gradient buffers.
template <typename Scalar>
class ParamStore {
 public:
  using Mat = Matrix<Scalar>;

  std::size_t add(const std::string& name, Mat init);
  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Mat& value(std::size_t i) { return values_[i]; }
  const Mat& value(std::size_t i) const { return values_[i]; }
  Mat& grad(std::size_t i) { return grads_[i]; }
  const Mat& grad(std::size_t i) const { return grads_[i]; }
  Mat& value(std::string_view name) { return values_[index(name)]; }
  const Mat& value(std::string_view name) const { return values_[index(name)]; }

  /// Total number of trainable scalars.
  std::size_t parameter_count() const;
  void zero_grad();
  double grad_norm() const;

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], values_[i].template cast<Other>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::vector<Mat> grads_;
};

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense row-major matrices. Nodes are recorded in
/// creation order, which is a topological order, so backward is a single
/// reverse sweep. Single-threaded.
template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Emit = std::function<void(std::size_t input, const Mat& grad)>;
  using CustomBackward = std::function<void(const Mat& grad_out, const Emit& emit)>;

  Tape() = default;
  /// Training tape: parameter gradients are added into `params` on backward.
  explicit Tape(ParamStore<Scalar>* params) : source_(params), sink_(params) {}
  /// Inference tape: parameters are read-only and carry no gradient.
  explicit Tape(const ParamStore<Scalar>& params) : source_(&params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  Var param(std::size_t index);
  Var param(std::string_view name);

  const Mat& value(Var v) const {
    const Node& node = nodes_.at(v.id);
    return node.external ? *node.external : node.value;
  }
  /// Gradient accumulated by the last backward; empty if the node got none.
  const Mat& grad(Var v) const { return nodes_.at(v.id).grad; }
  std::size_t size() const { return nodes_.size(); }
  void clear();

  Var matmul(Var a, Var b);
  /// a * b^T
  Var matmul_transposed(Var a, Var b);
  Var transpose(Var a);
  /// Elementwise sum; `b` may also be a 1 x cols row broadcast over rows.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, Scalar s);
  /// Row i of `a` multiplied by column(i, 0).
  Var scale_rows(Var a, Var column);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var slice_cols(Var a, int start, int count);
  Var slice_rows(Var a, int start, int count);
  Var reshape(Var a, int rows, int cols);
  Var relu(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var sum(Var a);
  Var linear(Var x, Var weight, Var bias) { return add(matmul(x, weight), bias); }

  /// Row-wise softmax over the last dimension.
  Var softmax(Var a);
  /// Row-wise softmax restricted to columns with mask != 0. Masked columns get
  /// exactly zero weight. Rows with no unmasked column are all-zero, and
  /// `all_masked` (if given) is set.
  Var masked_softmax(Var logits, std::span<const Scalar> mask, bool* all_masked = nullptr);

  /// Valid 1D convolution: signal (C_in x L), kernels (C_out x C_in*K) laid
  /// out [c_in][k], bias (C_out x 1) -> (C_out x L_out).
  Var conv1d(Var signal, Var kernels, Var bias, int kernel_size, int stride);

  /// Gated recurrent update with gates ordered [reset, update, candidate]:
  ///   r = sig(x Wr + br + h Ur + cr),  z = sig(x Wz + bz + h Uz + cz)
  ///   n = tanh(x Wn + bn + r * (h Un + cn)),  h' = (1 - z) * h + z * n
  Var gru_cell(Var x, Var h, Var w_ih, Var w_hh, Var b_ih, Var b_hh);

  /// Node with caller-provided value and backward rule.
  Var custom(std::vector<Var> inputs, Mat value, CustomBackward backward);

  /// Reverse sweep from a 1x1 loss. Parameter gradients are added into the
  /// bound ParamStore.
  void backward(Var loss);

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;  // parameter leaves alias the store
    Mat grad;
    std::function<void()> backward;
    int param_index = -1;
    bool requires_grad = false;
  };

  Var push(Mat value, bool requires_grad, std::function<void()> backward = {});
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  template <typename Expr>
  void accumulate(Var v, const Expr& g);
  void check(Var v, const char* what) const;

  const ParamStore<Scalar>* source_ = nullptr;
  ParamStore<Scalar>* sink_ = nullptr;
  std::vector<Node> nodes_;
};

/// Discrete distribution over softmax(logits).
template <typename Scalar>
class Categorical {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit Categorical(const Eigen::Ref<const Vec>& logits);

  int size() const { return static_cast<int>(log_probs_.size()); }
  Scalar log_prob(int action) const { return log_probs_(action); }
  Scalar prob(int action) const { return probs_(action); }
  const Vec& log_probs() const { return log_probs_; }
  const Vec& probs() const { return probs_; }
  Scalar entropy() const;
  int argmax() const;
  /// Inverse-CDF sampling.
  int sample(std::mt19937_64& rng) const;

 private:
  Vec log_probs_;
  Vec probs_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename Scalar>
Matrix<Scalar> glorot_uniform(int rows, int cols, int fan_in, int fan_out, std::mt19937_64& rng);

}  // namespace crowdnav::nn
