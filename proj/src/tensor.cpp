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

#include "slt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "slt/error.hpp"

namespace slt::num {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values,
                                       bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor() : node_(new_node({}, {0.0}, false)) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(new_node(std::move(shape), std::move(values), requires_grad)) {}

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_size(shape), value);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::uniform(Shape shape, double bound, Rng& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw RankError("expected a matrix, got shape " + shape_string(shape()));
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw RankError("expected a matrix, got shape " + shape_string(shape()));
  return node_->shape[1];
}

std::span<const double> Tensor::values() const { return node_->value; }

double Tensor::item() const {
  if (size() != 1) throw RankError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return !node_->backward; }
void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }
std::span<double> Tensor::mutable_values() { return node_->value; }
std::span<const double> Tensor::grad() const { return node_->grad; }

Tensor Tensor::grad_tensor() const {
  if (node_->grad.empty()) return zeros(shape());
  return Tensor(shape(), node_->grad);
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

std::span<double> Tensor::grad_accumulator() const {
  if (node_->grad.size() != node_->value.size()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }
Tensor Tensor::clone() const { return Tensor(shape(), node_->value, requires_grad()); }

Tensor Tensor::reshape(Shape new_shape) const {
  if (shape_size(new_shape) != size()) {
    throw DimensionError("cannot reshape " + shape_string(shape()) + " to " +
                         shape_string(new_shape));
  }
  Tensor self = *this;
  return make_op(std::move(new_shape), node_->value, {self},
                 [self](std::span<const double> g) {
                   auto acc = self.grad_accumulator();
                   for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
                 });
}

Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
               BackwardFn backward) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  auto node = new_node(std::move(shape), std::move(values), needs);
  if (needs) {
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) {
      if (in.requires_grad()) node->parents.push_back(in.node());
    }
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw RankError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (node->backward) node->grad.assign(node->value.size(), 0.0);
  }
  auto* root = loss.node().get();
  if (root->backward) {
    root->grad[0] = 1.0;
  } else {
    root->grad.resize(1, 0.0);
    root->grad[0] += 1.0;
    return;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward) node->backward(node->grad);
  }
}

// ---------------------------------------------------------------------------

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double h) {
  Tensor probe(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
  return finite_difference_check_param([&] { return f(probe); }, probe, h);
}

double finite_difference_check_param(const std::function<Tensor()>& f, Tensor param, double h,
                                     std::size_t max_coords, std::uint64_t seed) {
  const bool had_grad = param.requires_grad();
  param.set_requires_grad(true);
  param.zero_grad();
  Tensor out = f();
  if (!std::isfinite(out.item())) throw EvaluationError("function value is not finite");
  backward(out);
  std::vector<double> analytic(param.size(), 0.0);
  if (!param.grad().empty()) std::copy(param.grad().begin(), param.grad().end(), analytic.begin());
  param.zero_grad();

  std::vector<std::size_t> coords(param.size());
  std::iota(coords.begin(), coords.end(), 0);
  if (max_coords > 0 && max_coords < coords.size()) {
    Rng rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
  }

  double worst = 0.0;
  NoGradGuard no_grad;
  auto values = param.mutable_values();
  for (auto i : coords) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f().item();
    values[i] = saved - h;
    const double down = f().item();
    values[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw EvaluationError("function value is not finite near coordinate " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  param.set_requires_grad(had_grad);
  return worst;
}

// ---------------------------------------------------------------------------

Tensor ParameterStore::add(const std::string& name, Tensor init, bool trainable) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  init.set_requires_grad(trainable);
  index_[name] = params_.size();
  params_.push_back({name, init, trainable, false});
  return init;
}

Tensor ParameterStore::add_buffer(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  init.set_requires_grad(false);
  index_[name] = params_.size();
  params_.push_back({name, init, false, true});
  return init;
}

bool ParameterStore::contains(const std::string& name) const { return index_.count(name) > 0; }

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::with_prefix(const std::string& prefix) const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) {
    if (p.name.compare(0, prefix.size(), prefix) == 0) out.push_back(&p);
  }
  return out;
}

std::vector<Tensor> ParameterStore::trainable_tensors() const {
  std::vector<Tensor> out;
  for (const auto& p : params_) {
    if (p.trainable && !p.buffer) out.push_back(p.tensor);
  }
  return out;
}

void ParameterStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& p : params_) {
    if (p.buffer || p.name.compare(0, prefix.size(), prefix) != 0) continue;
    p.trainable = trainable;
    p.tensor.set_requires_grad(trainable);
  }
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::map<std::string, Tensor> ParameterStore::gradients() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : params_) {
    out.emplace(p.name, p.trainable ? p.tensor.grad_tensor() : Tensor::zeros(p.tensor.shape()));
  }
  return out;
}

void ParameterStore::assign(const std::string& name, std::span<const double> values) {
  Tensor t = get(name).tensor;
  if (t.size() != values.size()) {
    throw DimensionError("parameter " + name + " has " + std::to_string(t.size()) +
                         " values, got " + std::to_string(values.size()));
  }
  std::copy(values.begin(), values.end(), t.mutable_values().begin());
}

}  // namespace slt::num
