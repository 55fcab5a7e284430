#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "gram/errors.hpp"

namespace gram::num {

// Dense row-major tensor of 64-bit reals, rank 0..2 in practice.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // sized lazily, same length as data

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  void zero_grad() { grad.assign(data.size(), 0.0); }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<std::size_t> shape, bool requires_grad = false);
TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> data,
                      bool requires_grad = false);
TensorPtr make_scalar(double v, bool requires_grad = false);

// Records operations onto a tape; backward() replays it in reverse
// insertion order, accumulating gradients additively across fan-out.
// Single-threaded per graph; independent graphs are independent.
class Graph {
 public:
  Graph() = default;
  // grad_enabled=false skips tape recording entirely (inference forwards).
  explicit Graph(bool grad_enabled) : grad_enabled_(grad_enabled) {}

  // C = A * B for 2-D tensors with matching inner dimension.
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  // Elementwise sum, identical shapes.
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  // x[m,n] + b[n] broadcast over rows (the only broadcast supported).
  TensorPtr add_bias(const TensorPtr& x, const TensorPtr& b);
  TensorPtr scale(const TensorPtr& a, double s);
  // Log-probabilities along `axis` (0 for 1-D tensors, 1 for 2-D rows),
  // stable via max subtraction.
  TensorPtr softmax_logprob(const TensorPtr& a, std::size_t axis);
  // Row-wise RMS normalization followed by a learned per-column gain.
  TensorPtr rmsnorm(const TensorPtr& x, const TensorPtr& gain);
  TensorPtr gelu(const TensorPtr& x);
  // Elementwise log(1 + exp(x)), stable for large |x|.
  TensorPtr softplus(const TensorPtr& x);
  // out[i,:] = table[ids[i],:]
  TensorPtr gather_rows(const TensorPtr& table, const std::vector<int>& ids);
  // 1-D view (copy) of row r of a 2-D tensor.
  TensorPtr row(const TensorPtr& x, std::size_t r);
  // 1-D gather by flat index.
  TensorPtr gather(const TensorPtr& x, const std::vector<std::size_t>& idx);
  // Scalar dot of two 1-D tensors.
  TensorPtr dotv(const TensorPtr& a, const TensorPtr& b);
  // Scalar sum_i w[i] * x[i] with constant weights.
  TensorPtr weighted_sum(const TensorPtr& x, std::vector<double> w);
  // Scalar -sum_i w[i] * logp[pos[i], tgt[i]].
  TensorPtr pick_nll(const TensorPtr& logp, const std::vector<std::size_t>& pos,
                     const std::vector<int>& tgt, const std::vector<double>& w);
  // Multi-head causal self attention over packed projections q,k,v [T,d].
  TensorPtr causal_self_attention(const TensorPtr& q, const TensorPtr& k,
                                  const TensorPtr& v, std::size_t n_heads);

  // Populates grad for every recorded ancestor of a scalar root.
  void backward(const TensorPtr& root);

  std::size_t tape_size() const { return tape_.size(); }
  void clear() { tape_.clear(); }

 private:
  std::vector<std::function<void()>> tape_;
  bool grad_enabled_ = true;
  // Nodes whose output never received gradient are skipped during backward.
  void record(const TensorPtr& out, std::function<void()> fn) {
    if (!grad_enabled_) return;
    tape_.push_back([out, fn = std::move(fn)] {
      if (!out->grad.empty()) fn();
    });
  }
};

}  // namespace gram::num
