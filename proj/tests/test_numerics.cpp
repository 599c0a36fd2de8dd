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

#include <cmath>
#include <limits>

#include "doctest.h"
#include "slt/error.hpp"
#include "slt/optim.hpp"
#include "slt/tensor.hpp"
#include "support/oracles.hpp"

using namespace slt;
using num::Tensor;

using oracle::kink_free;
using oracle::weighted_sum;

TEST_CASE("matmul identity and arithmetic") {
  Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Tensor b = Tensor::matrix(2, 2, {5, 6, 7, 8});
  auto ia = num::matmul(eye, a);
  for (std::size_t i = 0; i < 4; ++i) CHECK(ia.at(i) == a.at(i));
  auto c = num::matmul(a, b);
  CHECK(c.at(0, 0) == 19);
  CHECK(c.at(0, 1) == 22);
  CHECK(c.at(1, 0) == 43);
  CHECK(c.at(1, 1) == 50);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    num::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 4}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x4]") != std::string::npos);
  }
}

TEST_CASE("gradient of sum(matmul) w.r.t. a is ones times b transpose") {
  num::Rng rng(3);
  Tensor a = Tensor::randn({3, 4}, 1.0, rng, true);
  Tensor b = Tensor::randn({4, 2}, 1.0, rng);
  num::backward(num::sum(num::matmul(a, b)));
  auto expected = num::matmul(Tensor::full({3, 2}, 1.0), Tensor::matrix(2, 4, [&] {
                                std::vector<double> bt(8);
                                for (std::size_t i = 0; i < 4; ++i)
                                  for (std::size_t j = 0; j < 2; ++j) bt[j * 4 + i] = b.at(i, j);
                                return bt;
                              }()));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.grad()[i] == doctest::Approx(expected.at(i)).epsilon(1e-12));
  double err = num::finite_difference_check([&](const Tensor& x) { return num::sum(num::matmul(x, b)); }, a);
  CHECK(err <= 1e-8);
}

TEST_CASE("temporal_conv1d examples") {
  SUBCASE("delta kernel with identity channel map reproduces the input") {
    const std::size_t c = 3;
    std::vector<double> w(c * c * 3, 0.0);
    for (std::size_t o = 0; o < c; ++o) w[(o * c + o) * 3 + 1] = 1.0;
    num::Rng rng(1);
    Tensor x = Tensor::randn({5, c}, 1.0, rng);
    auto y = num::temporal_conv1d(x, Tensor({c, c, 3}, w), Tensor::zeros({c}), 1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.at(i) == x.at(i));
  }
  SUBCASE("all-ones kernel on a constant") {
    Tensor x = Tensor::full({6, 1}, 2.5);
    auto y = num::temporal_conv1d(x, Tensor::full({1, 1, 3}, 1.0), Tensor::zeros({1}), 1);
    CHECK(y.at(0) == 5.0);
    CHECK(y.at(5) == 5.0);
    for (std::size_t t = 1; t < 5; ++t) CHECK(y.at(t) == 7.5);
  }
  SUBCASE("shape contract") {
    auto y = num::temporal_conv1d(Tensor::zeros({8, 832}), Tensor::zeros({512, 832, 3}), Tensor::zeros({512}), 1);
    CHECK(y.shape() == num::Shape{8, 512});
    auto z = num::temporal_conv1d(Tensor::zeros({9, 4}), Tensor::zeros({2, 4, 3}), Tensor::zeros({2}), 2);
    CHECK(z.shape() == num::Shape{5, 2});
  }
  SUBCASE("empty sequence") {
    CHECK_THROWS_AS(num::temporal_conv1d(Tensor::zeros({0, 2}), Tensor::zeros({2, 2, 3}), Tensor::zeros({2}), 1),
                    EmptySequenceError);
  }
  SUBCASE("packed sequences do not leak across boundaries") {
    num::Rng rng(2);
    Tensor a = Tensor::randn({4, 2}, 1.0, rng), b = Tensor::randn({3, 2}, 1.0, rng);
    Tensor w = Tensor::randn({3, 2, 3}, 1.0, rng), bias = Tensor::randn({3}, 1.0, rng);
    const std::vector<std::size_t> lens{4, 3};
    for (int stride : {1, 2}) {
      auto packed = num::temporal_conv1d(num::concat_rows({a, b}), w, bias, stride, lens);
      auto ya = num::temporal_conv1d(a, w, bias, stride);
      auto yb = num::temporal_conv1d(b, w, bias, stride);
      auto joined = num::concat_rows({ya, yb});
      REQUIRE(packed.shape() == joined.shape());
      for (std::size_t i = 0; i < packed.size(); ++i) CHECK(packed.at(i) == doctest::Approx(joined.at(i)).epsilon(1e-14));
    }
  }
}

TEST_CASE("softmax examples and invariants") {
  auto u = num::softmax(Tensor::zeros({1, 5}));
  for (double v : u.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  auto p = num::softmax(Tensor::matrix(1, 2, {0.0, std::log(3.0)}));
  CHECK(std::abs(p.at(0) - 0.25) < 1e-15);
  CHECK(std::abs(p.at(1) - 0.75) < 1e-15);

  num::Rng rng(7);
  std::uniform_real_distribution<double> dist(-100.0, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(6 * 9);
    for (auto& x : v) x = dist(rng);
    Tensor x = Tensor::matrix(6, 9, v);
    auto y = num::softmax(x);
    std::vector<double> shifted = v;
    for (auto& s : shifted) s += 17.25;
    auto ys = num::softmax(Tensor::matrix(6, 9, shifted));
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 9; ++c) {
        CHECK(y.at(r, c) >= 0.0);
        s += y.at(r, c);
        CHECK(std::abs(y.at(r, c) - ys.at(r, c)) <= 1e-12);
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("label-smoothed cross entropy") {
  const std::vector<int> t0{0};
  SUBCASE("certain prediction, no smoothing") {
    auto l = num::cross_entropy_label_smoothed(Tensor::matrix(1, 3, {800.0, 0.0, 0.0}), t0, 0.0, -1);
    CHECK(l.item() == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("uniform prediction gives ln V") {
    auto l = num::cross_entropy_label_smoothed(Tensor::zeros({1, 7}), t0, 0.0, -1);
    CHECK(std::abs(l.item() - std::log(7.0)) < 1e-14);
  }
  SUBCASE("eps 0.2, V 4 matches arbitrary-precision evaluation") {
    // mpmath, 40 digits: -sum q log softmax([2,0,0,0]) with q = 0.8 onehot + 0.05
    auto l = num::cross_entropy_label_smoothed(Tensor::matrix(1, 4, {2, 0, 0, 0}), t0, 0.2, -1);
    CHECK(std::abs(l.item() - 0.6407529539131311653737) < 1e-14);
  }
  SUBCASE("padding rows are ignored; all padding is undefined") {
    const std::vector<int> t{1, -1};
    auto l = num::cross_entropy_label_smoothed(Tensor::matrix(2, 2, {0, 0, 5, -5}), t, 0.0, -1);
    CHECK(std::abs(l.item() - std::log(2.0)) < 1e-14);
    const std::vector<int> pads{-1, -1};
    CHECK_THROWS_AS(num::cross_entropy_label_smoothed(Tensor::zeros({2, 2}), pads, 0.0, -1), UndefinedError);
  }
}

TEST_CASE("backward basics") {
  Tensor x = Tensor::scalar(3.0, true), y = Tensor::scalar(-2.0, true);
  num::backward(num::mul(x, y));
  CHECK(x.grad()[0] == -2.0);
  CHECK(y.grad()[0] == 3.0);

  Tensor r = Tensor::scalar(-1.0, true);
  Tensor w = Tensor::scalar(4.0, true);
  num::backward(num::add(num::relu(r), w));
  CHECK(r.grad()[0] == 0.0);
  CHECK(w.grad()[0] == 1.0);

  Tensor z = Tensor::scalar(0.0, true);
  num::backward(num::relu(z));
  CHECK(z.grad()[0] == 0.0);

  CHECK_THROWS_AS(num::backward(Tensor::zeros({2, 2}, true)), RankError);
}

TEST_CASE("backward twice without zeroing doubles gradients exactly") {
  num::Rng rng(11);
  Tensor a = Tensor::randn({3, 4}, 1.0, rng, true);
  Tensor w = Tensor::randn({4, 2}, 1.0, rng, true);
  Tensor b = Tensor::randn({2}, 1.0, rng, true);
  auto loss = num::sum(num::softmax(num::relu(num::linear(a, w, b))));
  num::backward(loss);
  std::vector<double> once(w.grad().begin(), w.grad().end());
  std::vector<double> once_a(a.grad().begin(), a.grad().end());
  num::backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(w.grad()[i] == 2.0 * once[i]);
  for (std::size_t i = 0; i < once_a.size(); ++i) CHECK(a.grad()[i] == 2.0 * once_a[i]);
}

TEST_CASE("finite difference check examples") {
  num::Rng rng(5);
  Tensor x = Tensor::randn({3, 4}, 1.0, rng);
  CHECK(num::finite_difference_check([](const Tensor& v) { return num::sum(num::softmax(v)); }, x) <= 1e-6);
  Tensor coeff = Tensor::randn({3, 4}, 1.0, rng);
  CHECK(num::finite_difference_check([&](const Tensor& v) { return num::sum(num::mul(v, coeff)); }, x) <= 1e-10);
  const std::vector<int> tgt{1, 0, 3};
  CHECK(num::finite_difference_check(
            [&](const Tensor& v) { return num::cross_entropy_label_smoothed(v, tgt, 0.2, -1); }, x) <= 1e-6);
  CHECK_THROWS_AS(num::finite_difference_check(
                      [](const Tensor& v) { return num::scale(num::sum(v), std::numeric_limits<double>::infinity()); }, x),
                  EvaluationError);
}

TEST_CASE("every primitive passes the finite-difference check on 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    num::Rng rng(seed);
    Tensor x = kink_free({4, 6}, rng);
    Tensor other = Tensor::randn({4, 6}, 1.0, rng);
    Tensor w = Tensor::randn({6, 3}, 0.5, rng);
    Tensor bias = Tensor::randn({3}, 0.5, rng);
    Tensor cw = Tensor::randn({5, 6, 3}, 0.5, rng);
    Tensor cb = Tensor::randn({5}, 0.5, rng);
    Tensor gamma = Tensor::randn({6}, 1.0, rng);
    Tensor beta = Tensor::randn({6}, 1.0, rng);
    const std::vector<int> targets{2, -1, 0, 1};
    const std::vector<std::size_t> ids{3, 0, 3, 1, 2};
    const std::vector<std::size_t> lens{3, 1};
    num::BatchNormState bn{Tensor::randn({6}, 0.3, rng), Tensor::full({6}, 1.7), 0.1, 1e-5};

    auto check = [&](const char* name, const std::function<Tensor(const Tensor&)>& f) {
      INFO(name << " seed " << seed);
      CHECK(num::finite_difference_check(f, x) <= 1e-4);
    };
    check("matmul", [&](const Tensor& v) { return weighted_sum(num::matmul(v, w), seed); });
    check("linear", [&](const Tensor& v) { return weighted_sum(num::linear(v, w, bias), seed); });
    check("add", [&](const Tensor& v) { return weighted_sum(num::add(v, other), seed); });
    check("sub", [&](const Tensor& v) { return weighted_sum(num::sub(other, v), seed); });
    check("mul", [&](const Tensor& v) { return weighted_sum(num::mul(v, v), seed); });
    check("scale", [&](const Tensor& v) { return weighted_sum(num::scale(v, -1.5), seed); });
    check("add_bias", [&](const Tensor& v) { return weighted_sum(num::add_bias(v, gamma), seed); });
    check("relu", [&](const Tensor& v) { return weighted_sum(num::relu(v), seed); });
    check("softmax", [&](const Tensor& v) { return weighted_sum(num::softmax(v), seed); });
    check("log_softmax", [&](const Tensor& v) { return weighted_sum(num::log_softmax(v), seed); });
    check("mean", [&](const Tensor& v) { return num::mean(num::mul(v, other)); });
    check("concat/slice", [&](const Tensor& v) {
      return weighted_sum(num::concat_rows({num::slice_rows(v, 1, 3), v}), seed);
    });
    check("gather_rows", [&](const Tensor& v) { return weighted_sum(num::gather_rows(v, ids), seed); });
    check("conv stride 1", [&](const Tensor& v) { return weighted_sum(num::temporal_conv1d(v, cw, cb, 1, lens), seed); });
    check("conv stride 2", [&](const Tensor& v) { return weighted_sum(num::temporal_conv1d(v, cw, cb, 2, lens), seed); });
    check("batch_norm train", [&](const Tensor& v) {
      num::BatchNormState s{Tensor::zeros({6}), Tensor::full({6}, 1.0), 0.1, 1e-5};
      return weighted_sum(num::batch_norm(v, gamma, beta, s, true), seed);
    });
    check("batch_norm eval", [&](const Tensor& v) { return weighted_sum(num::batch_norm(v, gamma, beta, bn, false), seed); });
    check("layer_norm", [&](const Tensor& v) { return weighted_sum(num::layer_norm(v, gamma, beta), seed); });
    check("cross_entropy", [&](const Tensor& v) { return num::cross_entropy_label_smoothed(v, targets, 0.2, -1); });
    check("attention", [&](const Tensor& v) {
      num::AttentionLayout layout{{3, 1}, {2, 2}, {1, 1, 1, 0}, false};
      return weighted_sum(num::multi_head_attention(v, num::slice_rows(other, 0, 4), num::scale(v, 0.5), 2, layout),
                          seed);
    });
    check("causal attention", [&](const Tensor& v) {
      num::AttentionLayout layout{{3, 1}, {3, 1}, {}, true};
      return weighted_sum(num::multi_head_attention(v, v, other, 3, layout), seed);
    });

    // Parameter-side gradients of the layers with learnable weights.
    CHECK(num::finite_difference_check_param([&] { return weighted_sum(num::linear(x, w, bias), seed); }, w) <= 1e-4);
    CHECK(num::finite_difference_check_param([&] { return weighted_sum(num::temporal_conv1d(x, cw, cb, 2, lens), seed); },
                                             cw) <= 1e-4);
    CHECK(num::finite_difference_check_param([&] { return weighted_sum(num::layer_norm(x, gamma, beta), seed); },
                                             gamma) <= 1e-4);
  }
}

TEST_CASE("attention masking") {
  num::Rng rng(9);
  Tensor q = Tensor::randn({3, 4}, 1.0, rng), k = Tensor::randn({3, 4}, 1.0, rng);
  Tensor v = Tensor::randn({3, 4}, 1.0, rng);
  SUBCASE("causal output at t ignores later positions") {
    num::AttentionLayout layout{{3}, {3}, {}, true};
    auto base = num::multi_head_attention(q, k, v, 2, layout);
    Tensor v2 = v.clone();
    for (std::size_t c = 0; c < 4; ++c) v2.mutable_values()[2 * 4 + c] += 10.0;
    auto changed = num::multi_head_attention(q, k, v2, 2, layout);
    for (std::size_t i = 0; i < 8; ++i) CHECK(base.at(i) == changed.at(i));
  }
  SUBCASE("masked keys do not contribute") {
    num::AttentionLayout masked{{3}, {3}, {1, 1, 0}, false};
    num::AttentionLayout two{{3}, {2}, {}, false};
    auto a = num::multi_head_attention(q, k, v, 2, masked);
    auto b = num::multi_head_attention(q, num::slice_rows(k, 0, 2), num::slice_rows(v, 0, 2), 2, two);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == b.at(i));
  }
  CHECK_THROWS_AS(num::multi_head_attention(q, k, v, 3, {{3}, {3}, {}, false}), ConfigError);
}

TEST_CASE("batch norm statistics policy") {
  Tensor x = Tensor::matrix(4, 1, {1, 2, 3, 6});
  num::BatchNormState s{Tensor::zeros({1}), Tensor::full({1}, 1.0), 0.1, 0.0};
  auto y = num::batch_norm(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), s, true);
  double m = 0.0;
  for (double v : y.values()) m += v;
  CHECK(std::abs(m) < 1e-12);
  CHECK(s.running_mean.at(0) == doctest::Approx(0.3));
  // unbiased batch variance of {1,2,3,6} is 14/3
  CHECK(s.running_var.at(0) == doctest::Approx(0.9 + 0.1 * 14.0 / 3.0));
  auto e = num::batch_norm(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), s, false);
  CHECK(e.at(0) == doctest::Approx((1.0 - 0.3) / std::sqrt(s.running_var.at(0))));
}

TEST_CASE("parameter store freezing and gradient map") {
  num::ParameterStore store;
  num::Rng rng(1);
  Tensor a = store.add("visual.backbone.w", Tensor::randn({2, 2}, 1.0, rng));
  Tensor b = store.add("visual.head.w", Tensor::randn({2, 2}, 1.0, rng));
  CHECK_THROWS_AS(store.add("visual.head.w", Tensor::zeros({1})), ConfigError);
  store.set_trainable("visual.backbone", false);
  Tensor x = Tensor::randn({3, 2}, 1.0, rng);
  num::backward(num::sum(num::matmul(num::matmul(x, a), b)));
  auto grads = store.gradients();
  for (double g : grads.at("visual.backbone.w").values()) CHECK(g == 0.0);
  double norm = 0.0;
  for (double g : grads.at("visual.head.w").values()) norm += std::abs(g);
  CHECK(norm > 0.0);

  num::Adam opt({{{a, b}, 0.1}}, {});
  std::vector<double> before(a.values().begin(), a.values().end());
  opt.step();
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(a.at(i) == before[i]);
}

TEST_CASE("cosine schedule endpoints") {
  CHECK(num::cosine_lr(1e-3, 0, 100) == 1e-3);
  CHECK(num::cosine_lr(1e-3, 99, 100) <= 1e-6);
  CHECK(num::cosine_lr(1e-3, 50, 101) == doctest::Approx(5e-4));
}
