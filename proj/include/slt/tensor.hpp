/* Copyright 2026 The SLT Baseline Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace slt::num {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major float64 array with an optional reverse-mode tape.
///
/// A Tensor is a cheap handle; copies share storage. Values produced by an
/// operation are never modified afterwards. Leaves (parameters, inputs) may be
/// mutated in place through `mutable_values()`, which is how optimizers and
/// finite-difference probes work.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);
  static Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad = false);
  static Tensor uniform(Shape shape, double bound, Rng& rng, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }

  std::span<const double> values() const;
  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

  bool requires_grad() const;
  bool is_leaf() const;
  // Only meaningful on leaves.
  void set_requires_grad(bool on);
  std::span<double> mutable_values();

  // Accumulated gradient; empty span when no gradient has reached this tensor.
  std::span<const double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();

  // Allocates (zero-filled) on first call. Used by operation backward passes.
  std::span<double> grad_accumulator() const;

  Tensor detach() const;
  Tensor clone() const;
  Tensor reshape(Shape shape) const;

  bool defined() const { return node_ != nullptr; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>,
                        std::function<void(std::span<const double>)>);
};

/// Receives the output gradient and accumulates into input gradients via
/// `Tensor::grad_accumulator()`.
using BackwardFn = std::function<void(std::span<const double> grad_out)>;

/// Builds the result of an operation. The backward closure is recorded only
/// when gradient mode is on and some input requires a gradient.
Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
               BackwardFn backward);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse pass from a scalar. Leaf gradients accumulate across calls;
/// interior gradients are recomputed on every call.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Primitives. Matrices are rank-2 [rows x cols]; "segments" describe packed
// variable-length sequences stacked along rows.

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[N x in] . w[in x out] + b[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[N x C] + b[C] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
/// Row gather; also serves as an embedding lookup.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

/// Kernel-3 temporal convolution over packed sequences.
/// x[N x Cin], w[Cout x Cin x 3], b[Cout]; one zero frame of padding on each
/// side; output length per sequence is ceil(T / stride).
Tensor temporal_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                       std::span<const std::size_t> lengths);
Tensor temporal_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride);
std::vector<std::size_t> conv_output_lengths(std::span<const std::size_t> lengths, int stride);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};
/// Per-channel normalization over rows. Training mode uses batch statistics
/// and updates the running averages; evaluation mode uses the running ones.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor dropout(const Tensor& x, double p, Rng& rng);

/// Mean over non-ignored rows of -sum_v q_v log p_v with
/// q = (1 - eps) onehot + eps / V.
Tensor cross_entropy_label_smoothed(const Tensor& logits, std::span<const int> targets, double eps,
                                    int ignore_index);

struct AttentionLayout {
  std::vector<std::size_t> query_lengths;
  std::vector<std::size_t> key_lengths;
  // Optional, one flag per key row; 0 hides the key.
  std::vector<std::uint8_t> key_mask;
  bool causal = false;
};
/// Scaled dot-product attention with `heads` heads over packed sequences.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const AttentionLayout& layout);

// ---------------------------------------------------------------------------

/// max over coordinates of |analytic - central difference| / max(1, |analytic|)
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double h = 1e-5);

/// Same check against a leaf captured by `f`; perturbs `param` in place and
/// restores it. `max_coords` > 0 samples that many coordinates.
double finite_difference_check_param(const std::function<Tensor()>& f, Tensor param,
                                     double h = 1e-5, std::size_t max_coords = 0,
                                     std::uint64_t seed = 0);

// ---------------------------------------------------------------------------

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
  // Buffers (running statistics) are stored and checkpointed but never
  // optimized.
  bool buffer = false;
};

/// Named parameter collection with unique, ordered names.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Tensor init, bool trainable = true);
  Tensor add_buffer(const std::string& name, Tensor init);

  bool contains(const std::string& name) const;
  const Parameter& get(const std::string& name) const;
  Tensor tensor(const std::string& name) const { return get(name).tensor; }
  std::vector<const Parameter*> all() const;
  std::vector<const Parameter*> with_prefix(const std::string& prefix) const;
  std::size_t size() const { return params_.size(); }
  std::vector<Tensor> trainable_tensors() const;

  void set_trainable(const std::string& prefix, bool trainable);
  void zero_grad();
  /// Gradient per parameter; zero tensors for frozen parameters and buffers.
  std::map<std::string, Tensor> gradients() const;
  /// Overwrites the values of `name`; sizes must match.
  void assign(const std::string& name, std::span<const double> values);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace slt::num
