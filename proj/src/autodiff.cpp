#include "crowdnav/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace crowdnav::nn {

namespace {

std::string shape_of(const auto& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore

template <typename Scalar>
std::size_t ParamStore<Scalar>::add(const std::string& name, Mat init) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  names_.push_back(name);
  grads_.push_back(Mat::Zero(init.rows(), init.cols()));
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

template <typename Scalar>
std::size_t ParamStore<Scalar>::index(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

template <typename Scalar>
bool ParamStore<Scalar>::contains(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

template <typename Scalar>
std::size_t ParamStore<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

template <typename Scalar>
void ParamStore<Scalar>::zero_grad() {
  for (auto& g : grads_) g.setZero();
}

template <typename Scalar>
double ParamStore<Scalar>::grad_norm() const {
  double sq = 0.0;
  for (const auto& g : grads_) sq += g.template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------
// Tape plumbing

template <typename Scalar>
Var Tape<Scalar>::push(Mat value, bool requires_grad, std::function<void()> backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  const Var v{static_cast<int>(nodes_.size()) - 1};
  if (!nodes_.back().value.allFinite()) throw NumericError("non-finite value produced on tape");
  return v;
}

template <typename Scalar>
template <typename Expr>
void Tape<Scalar>::accumulate(Var v, const Expr& g) {
  Node& node = nodes_[v.id];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0)
    node.grad = g;
  else
    node.grad += g;
}

template <typename Scalar>
void Tape<Scalar>::check(Var v, const char* what) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::out_of_range(std::string(what) + ": variable does not belong to this tape");
}

template <typename Scalar>
void Tape<Scalar>::clear() {
  nodes_.clear();
}

template <typename Scalar>
Var Tape<Scalar>::constant(Mat value) {
  return push(std::move(value), false);
}

template <typename Scalar>
Var Tape<Scalar>::param(std::size_t index) {
  if (!source_) throw std::logic_error("tape has no parameter store");
  if (index >= source_->size()) throw std::out_of_range("parameter index out of range");
  Node node;
  node.external = &source_->value(index);
  node.requires_grad = sink_ != nullptr;
  node.param_index = static_cast<int>(index);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename Scalar>
Var Tape<Scalar>::param(std::string_view name) {
  if (!source_) throw std::logic_error("tape has no parameter store");
  return param(source_->index(name));
}

// ---------------------------------------------------------------------------
// Ops

template <typename Scalar>
Var Tape<Scalar>::matmul(Var a, Var b) {
  check(a, "matmul");
  check(b, "matmul");
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.rows()) throw ShapeError("matmul " + shape_of(A) + " * " + shape_of(B));
  const Var out = push(A * B, needs(a) || needs(b));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, b, id] {
      const Mat& g = nodes_[id].grad;
      if (needs(a)) accumulate(a, g * value(b).transpose());
      if (needs(b)) accumulate(b, value(a).transpose() * g);
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::matmul_transposed(Var a, Var b) {
  check(a, "matmul_transposed");
  check(b, "matmul_transposed");
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.cols()) throw ShapeError("matmul_transposed " + shape_of(A) + " * " + shape_of(B) + "^T");
  const Var out = push(A * B.transpose(), needs(a) || needs(b));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, b, id] {
      const Mat& g = nodes_[id].grad;
      if (needs(a)) accumulate(a, g * value(b));
      if (needs(b)) accumulate(b, g.transpose() * value(a));
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::transpose(Var a) {
  check(a, "transpose");
  const Var out = push(value(a).transpose(), needs(a));
  const int id = out.id;
  if (nodes_[id].requires_grad) nodes_[id].backward = [this, a, id] { accumulate(a, nodes_[id].grad.transpose()); };
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::add(Var a, Var b) {
  check(a, "add");
  check(b, "add");
  const Mat& A = value(a);
  const Mat& B = value(b);
  const bool same = A.rows() == B.rows() && A.cols() == B.cols();
  const bool broadcast = !same && B.rows() == 1 && B.cols() == A.cols();
  if (!same && !broadcast) throw ShapeError("add " + shape_of(A) + " + " + shape_of(B));
  Mat result = A;
  if (same)
    result += B;
  else
    result.rowwise() += B.row(0);
  const Var out = push(std::move(result), needs(a) || needs(b));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, b, id, broadcast] {
      const Mat& g = nodes_[id].grad;
      if (needs(a)) accumulate(a, g);
      if (needs(b)) {
        if (broadcast)
          accumulate(b, Mat(g.colwise().sum()));
        else
          accumulate(b, g);
      }
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::sub(Var a, Var b) {
  check(a, "sub");
  check(b, "sub");
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw ShapeError("sub " + shape_of(A) + " - " + shape_of(B));
  const Var out = push(A - B, needs(a) || needs(b));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, b, id] {
      const Mat& g = nodes_[id].grad;
      if (needs(a)) accumulate(a, g);
      if (needs(b)) accumulate(b, -g);
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::mul(Var a, Var b) {
  check(a, "mul");
  check(b, "mul");
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw ShapeError("mul " + shape_of(A) + " .* " + shape_of(B));
  const Var out = push(A.cwiseProduct(B), needs(a) || needs(b));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, b, id] {
      const Mat& g = nodes_[id].grad;
      if (needs(a)) accumulate(a, g.cwiseProduct(value(b)));
      if (needs(b)) accumulate(b, g.cwiseProduct(value(a)));
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::scale(Var a, Scalar s) {
  check(a, "scale");
  const Var out = push(value(a) * s, needs(a));
  const int id = out.id;
  if (nodes_[id].requires_grad) nodes_[id].backward = [this, a, id, s] { accumulate(a, nodes_[id].grad * s); };
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::scale_rows(Var a, Var column) {
  check(a, "scale_rows");
  check(column, "scale_rows");
  const Mat& A = value(a);
  const Mat& c = value(column);
  if (c.cols() != 1 || c.rows() != A.rows()) throw ShapeError("scale_rows " + shape_of(A) + " by " + shape_of(c));
  Mat result = c.col(0).asDiagonal() * A;
  const Var out = push(std::move(result), needs(a) || needs(column));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, column, id] {
      const Mat& g = nodes_[id].grad;
      if (needs(a)) accumulate(a, value(column).col(0).asDiagonal() * g);
      if (needs(column)) accumulate(column, Mat(g.cwiseProduct(value(a)).rowwise().sum()));
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Var p : parts) {
    check(p, "concat_cols");
    if (value(p).rows() != rows) throw ShapeError("concat_cols row mismatch");
    cols += value(p).cols();
    rg = rg || needs(p);
  }
  Mat result(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    result.middleCols(offset, value(p).cols()) = value(p);
    offset += value(p).cols();
  }
  const Var out = push(std::move(result), rg);
  const int id = out.id;
  if (rg) {
    std::vector<Var> inputs(parts.begin(), parts.end());
    nodes_[id].backward = [this, inputs, id] {
      const Mat& g = nodes_[id].grad;
      Eigen::Index off = 0;
      for (Var p : inputs) {
        const Eigen::Index w = value(p).cols();
        if (needs(p)) accumulate(p, Mat(g.middleCols(off, w)));
        off += w;
      }
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (Var p : parts) {
    check(p, "concat_rows");
    if (value(p).cols() != cols) throw ShapeError("concat_rows column mismatch");
    rows += value(p).rows();
    rg = rg || needs(p);
  }
  Mat result(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    result.middleRows(offset, value(p).rows()) = value(p);
    offset += value(p).rows();
  }
  const Var out = push(std::move(result), rg);
  const int id = out.id;
  if (rg) {
    std::vector<Var> inputs(parts.begin(), parts.end());
    nodes_[id].backward = [this, inputs, id] {
      const Mat& g = nodes_[id].grad;
      Eigen::Index off = 0;
      for (Var p : inputs) {
        const Eigen::Index h = value(p).rows();
        if (needs(p)) accumulate(p, Mat(g.middleRows(off, h)));
        off += h;
      }
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::slice_cols(Var a, int start, int count) {
  check(a, "slice_cols");
  const Mat& A = value(a);
  if (start < 0 || count < 0 || start + count > A.cols()) throw ShapeError("slice_cols out of range on " + shape_of(A));
  const Var out = push(A.middleCols(start, count), needs(a));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, id, start, count] {
      const Mat& src = value(a);
      Mat full = Mat::Zero(src.rows(), src.cols());
      full.middleCols(start, count) = nodes_[id].grad;
      accumulate(a, full);
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::slice_rows(Var a, int start, int count) {
  check(a, "slice_rows");
  const Mat& A = value(a);
  if (start < 0 || count < 0 || start + count > A.rows()) throw ShapeError("slice_rows out of range on " + shape_of(A));
  const Var out = push(A.middleRows(start, count), needs(a));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, id, start, count] {
      const Mat& src = value(a);
      Mat full = Mat::Zero(src.rows(), src.cols());
      full.middleRows(start, count) = nodes_[id].grad;
      accumulate(a, full);
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::reshape(Var a, int rows, int cols) {
  check(a, "reshape");
  const Mat& A = value(a);
  if (static_cast<Eigen::Index>(rows) * cols != A.size()) throw ShapeError("reshape " + shape_of(A));
  Mat result = Eigen::Map<const Mat>(A.data(), rows, cols);
  const Var out = push(std::move(result), needs(a));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, id] {
      const Mat& g = nodes_[id].grad;
      const Mat& src = value(a);
      accumulate(a, Mat(Eigen::Map<const Mat>(g.data(), src.rows(), src.cols())));
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::relu(Var a) {
  check(a, "relu");
  const Var out = push(value(a).cwiseMax(Scalar(0)), needs(a));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, id] {
      const Mat& x = value(a);
      accumulate(a, Mat(nodes_[id].grad.array() * (x.array() > Scalar(0)).template cast<Scalar>()));
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::tanh(Var a) {
  check(a, "tanh");
  const Var out = push(value(a).array().tanh().matrix(), needs(a));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, id] {
      const Mat& y = nodes_[id].value;
      accumulate(a, Mat(nodes_[id].grad.array() * (Scalar(1) - y.array().square())));
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::sigmoid(Var a) {
  check(a, "sigmoid");
  const Var out = push((Scalar(1) / (Scalar(1) + (-value(a).array()).exp())).matrix(), needs(a));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, id] {
      const Mat& y = nodes_[id].value;
      accumulate(a, Mat(nodes_[id].grad.array() * y.array() * (Scalar(1) - y.array())));
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::sum(Var a) {
  check(a, "sum");
  Mat result(1, 1);
  result(0, 0) = value(a).sum();
  const Var out = push(std::move(result), needs(a));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, id] {
      const Mat& src = value(a);
      accumulate(a, Mat::Constant(src.rows(), src.cols(), nodes_[id].grad(0, 0)));
    };
  }
  return out;
}

namespace {

template <typename Mat>
void softmax_backward_rows(const Mat& y, const Mat& g, Mat& dx) {
  dx.resize(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const auto dot = y.row(r).dot(g.row(r));
    dx.row(r) = y.row(r).cwiseProduct(g.row(r)) - dot * y.row(r);
  }
}

}  // namespace

template <typename Scalar>
Var Tape<Scalar>::softmax(Var a) {
  check(a, "softmax");
  const Mat& x = value(a);
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  const Var out = push(std::move(y), needs(a));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, a, id] {
      Mat dx;
      softmax_backward_rows(nodes_[id].value, nodes_[id].grad, dx);
      accumulate(a, dx);
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::masked_softmax(Var logits, std::span<const Scalar> mask, bool* all_masked) {
  check(logits, "masked_softmax");
  const Mat& x = value(logits);
  if (static_cast<Eigen::Index>(mask.size()) != x.cols())
    throw ShapeError("masked_softmax mask length " + std::to_string(mask.size()) + " for " + shape_of(x));
  Mat y = Mat::Zero(x.rows(), x.cols());
  bool none = true;
  for (Scalar m : mask) none = none && m == Scalar(0);
  if (!none) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      Scalar top = -std::numeric_limits<Scalar>::infinity();
      for (Eigen::Index c = 0; c < x.cols(); ++c)
        if (mask[c] != Scalar(0)) top = std::max(top, x(r, c));
      Scalar total = 0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        if (mask[c] != Scalar(0)) {
          y(r, c) = std::exp(x(r, c) - top);
          total += y(r, c);
        }
      }
      y.row(r) /= total;
    }
  }
  if (all_masked) *all_masked = none;
  const Var out = push(std::move(y), needs(logits));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, logits, id] {
      Mat dx;
      softmax_backward_rows(nodes_[id].value, nodes_[id].grad, dx);
      accumulate(logits, dx);
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::conv1d(Var signal, Var kernels, Var bias, int kernel_size, int stride) {
  check(signal, "conv1d");
  check(kernels, "conv1d");
  check(bias, "conv1d");
  const Mat& x = value(signal);
  const Mat& w = value(kernels);
  const Mat& b = value(bias);
  const Eigen::Index c_in = x.rows();
  const Eigen::Index length = x.cols();
  const Eigen::Index c_out = w.rows();
  if (kernel_size <= 0 || stride <= 0) throw ShapeError("conv1d kernel size and stride must be positive");
  if (w.cols() != c_in * kernel_size) throw ShapeError("conv1d kernels " + shape_of(w) + " for input " + shape_of(x));
  if (b.rows() != c_out || b.cols() != 1) throw ShapeError("conv1d bias " + shape_of(b));
  if (length < kernel_size) throw ShapeError("conv1d input shorter than kernel");
  const Eigen::Index out_len = (length - kernel_size) / stride + 1;

  Mat columns(c_in * kernel_size, out_len);
  for (Eigen::Index c = 0; c < c_in; ++c)
    for (int k = 0; k < kernel_size; ++k)
      for (Eigen::Index t = 0; t < out_len; ++t) columns(c * kernel_size + k, t) = x(c, t * stride + k);
  Mat y = w * columns;
  y.colwise() += b.col(0);

  const Var out = push(std::move(y), needs(signal) || needs(kernels) || needs(bias));
  const int id = out.id;
  if (nodes_[id].requires_grad) {
    nodes_[id].backward = [this, signal, kernels, bias, id, columns = std::move(columns), kernel_size, stride] {
      const Mat& g = nodes_[id].grad;
      if (needs(kernels)) accumulate(kernels, Mat(g * columns.transpose()));
      if (needs(bias)) accumulate(bias, Mat(g.rowwise().sum()));
      if (needs(signal)) {
        const Mat dcols = value(kernels).transpose() * g;
        const Mat& src = value(signal);
        Mat dx = Mat::Zero(src.rows(), src.cols());
        for (Eigen::Index c = 0; c < src.rows(); ++c)
          for (int k = 0; k < kernel_size; ++k)
            for (Eigen::Index t = 0; t < dcols.cols(); ++t) dx(c, t * stride + k) += dcols(c * kernel_size + k, t);
        accumulate(signal, dx);
      }
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::gru_cell(Var x, Var h, Var w_ih, Var w_hh, Var b_ih, Var b_hh) {
  for (Var v : {x, h, w_ih, w_hh, b_ih, b_hh}) check(v, "gru_cell");
  const Mat& X = value(x);
  const Mat& H = value(h);
  const Eigen::Index hidden = H.cols();
  if (value(w_ih).rows() != X.cols() || value(w_ih).cols() != 3 * hidden || value(w_hh).rows() != hidden ||
      value(w_hh).cols() != 3 * hidden || value(b_ih).cols() != 3 * hidden || value(b_hh).cols() != 3 * hidden ||
      value(b_ih).rows() != 1 || value(b_hh).rows() != 1 || X.rows() != H.rows())
    throw ShapeError("gru_cell shapes x " + shape_of(X) + " h " + shape_of(H) + " w_ih " + shape_of(value(w_ih)));

  Mat gi = X * value(w_ih);
  gi.rowwise() += value(b_ih).row(0);
  Mat gh = H * value(w_hh);
  gh.rowwise() += value(b_hh).row(0);

  const auto sig = [](const auto& m) { return (Scalar(1) / (Scalar(1) + (-m.array()).exp())).matrix(); };
  Mat r = sig(gi.leftCols(hidden) + gh.leftCols(hidden));
  Mat z = sig(gi.middleCols(hidden, hidden) + gh.middleCols(hidden, hidden));
  Mat gh_n = gh.rightCols(hidden);
  Mat n = (gi.rightCols(hidden).array() + r.array() * gh_n.array()).tanh().matrix();
  Mat h_next = ((Scalar(1) - z.array()) * H.array() + z.array() * n.array()).matrix();

  bool rg = false;
  for (Var v : {x, h, w_ih, w_hh, b_ih, b_hh}) rg = rg || needs(v);
  const Var out = push(std::move(h_next), rg);
  const int id = out.id;
  if (rg) {
    nodes_[id].backward = [this, x, h, w_ih, w_hh, b_ih, b_hh, id, r = std::move(r), z = std::move(z),
                           n = std::move(n), gh_n = std::move(gh_n), hidden] {
      const Mat& g = nodes_[id].grad;
      const Mat& Hv = value(h);
      const auto ga = g.array();
      const Mat dz_pre = (ga * (n.array() - Hv.array()) * z.array() * (Scalar(1) - z.array())).matrix();
      const Mat dn_pre = (ga * z.array() * (Scalar(1) - n.array().square())).matrix();
      const Mat dr_pre = (dn_pre.array() * gh_n.array() * r.array() * (Scalar(1) - r.array())).matrix();

      Mat dgi(g.rows(), 3 * hidden);
      dgi << dr_pre, dz_pre, dn_pre;
      Mat dgh(g.rows(), 3 * hidden);
      dgh << dr_pre, dz_pre, Mat(dn_pre.cwiseProduct(r));

      if (needs(w_ih)) accumulate(w_ih, Mat(value(x).transpose() * dgi));
      if (needs(b_ih)) accumulate(b_ih, Mat(dgi.colwise().sum()));
      if (needs(x)) accumulate(x, Mat(dgi * value(w_ih).transpose()));
      if (needs(w_hh)) accumulate(w_hh, Mat(Hv.transpose() * dgh));
      if (needs(b_hh)) accumulate(b_hh, Mat(dgh.colwise().sum()));
      if (needs(h)) {
        Mat dh = (ga * (Scalar(1) - z.array())).matrix();
        dh += dgh * value(w_hh).transpose();
        accumulate(h, dh);
      }
    };
  }
  return out;
}

template <typename Scalar>
Var Tape<Scalar>::custom(std::vector<Var> inputs, Mat value, CustomBackward backward) {
  bool rg = false;
  for (Var v : inputs) {
    check(v, "custom");
    rg = rg || needs(v);
  }
  const Var out = push(std::move(value), rg);
  const int id = out.id;
  if (rg) {
    nodes_[id].backward = [this, inputs = std::move(inputs), backward = std::move(backward), id] {
      backward(nodes_[id].grad, [&](std::size_t i, const Mat& g) {
        const Mat& src = this->value(inputs.at(i));
        if (g.rows() != src.rows() || g.cols() != src.cols()) throw ShapeError("custom op gradient shape mismatch");
        accumulate(inputs[i], g);
      });
    };
  }
  return out;
}

template <typename Scalar>
void Tape<Scalar>::backward(Var loss) {
  check(loss, "backward");
  if (value(loss).rows() != 1 || value(loss).cols() != 1)
    throw ShapeError("backward needs a scalar loss, got " + shape_of(value(loss)));
  for (auto& node : nodes_) node.grad.resize(0, 0);
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Mat::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    Node& node = nodes_[i];
    if (node.grad.size() == 0) continue;
    if (node.param_index >= 0) {
      sink_->grad(node.param_index) += node.grad;
    } else if (node.backward) {
      node.backward();
    }
  }
  for (int i = 0; i <= loss.id; ++i)
    if (nodes_[i].grad.size() && !nodes_[i].grad.allFinite()) throw NumericError("non-finite gradient on tape");
}

// ---------------------------------------------------------------------------
// Categorical

template <typename Scalar>
Categorical<Scalar>::Categorical(const Eigen::Ref<const Vec>& logits) {
  if (logits.size() == 0) throw std::invalid_argument("categorical over zero actions");
  if (!logits.allFinite()) throw NumericError("categorical logits are not finite");
  const Scalar top = logits.maxCoeff();
  const Scalar lse = top + std::log((logits.array() - top).exp().sum());
  log_probs_ = logits.array() - lse;
  probs_ = log_probs_.array().exp();
}

template <typename Scalar>
Scalar Categorical<Scalar>::entropy() const {
  Scalar h = 0;
  for (Eigen::Index i = 0; i < probs_.size(); ++i) h -= probs_(i) * log_probs_(i);
  return h;
}

template <typename Scalar>
int Categorical<Scalar>::argmax() const {
  Eigen::Index best = 0;
  log_probs_.maxCoeff(&best);
  return static_cast<int>(best);
}

template <typename Scalar>
int Categorical<Scalar>::sample(std::mt19937_64& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cdf = 0.0;
  for (int i = 0; i < size(); ++i) {
    cdf += static_cast<double>(probs_(i));
    if (u < cdf) return i;
  }
  // Rounding can leave the total just under 1; take the last likely action.
  for (int i = size() - 1; i >= 0; --i)
    if (probs_(i) > Scalar(0)) return i;
  return size() - 1;
}

template <typename Scalar>
Matrix<Scalar> glorot_uniform(int rows, int cols, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return m;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Tape<float>;
template class Tape<double>;
template class Categorical<float>;
template class Categorical<double>;
template Matrix<float> glorot_uniform<float>(int, int, int, int, std::mt19937_64&);
template Matrix<double> glorot_uniform<double>(int, int, int, int, std::mt19937_64&);

}  // namespace crowdnav::nn
