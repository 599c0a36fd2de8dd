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

#include "doctest.h"
#include "slt/error.hpp"
#include "slt/optim.hpp"
#include "slt/vl_mapper.hpp"

using namespace slt;
using mapper::InputKind;
using mapper::MapperConfig;
using mapper::VlMapper;
using num::Tensor;

namespace {

MapperConfig config(InputKind kind, std::size_t d_in, std::size_t d_out, std::size_t hidden = 0) {
  MapperConfig c;
  c.input_kind = kind;
  c.d_in = d_in;
  c.d_out = d_out;
  c.d_hidden = hidden;
  return c;
}

}  // namespace

TEST_CASE("mapper shapes and dimension errors") {
  VlMapper m(config(InputKind::gloss_representation, 5, 8), 1);
  num::Rng rng(2);
  auto y = m.map(Tensor::randn({7, 5}, 1.0, rng));
  CHECK(y.dim(0) == 7);
  CHECK(y.dim(1) == 8);
  CHECK_THROWS_AS(m.map(Tensor::randn({7, 4}, 1.0, rng)), ConfigError);
  CHECK(m.params().size() == 6);
  CHECK(m.params().get("mapper.fc2.weight").tensor.shape() == num::Shape{8, 8});
}

TEST_CASE("zero parameters map to zero") {
  VlMapper m(config(InputKind::gloss_logits, 4, 6, 3), 3);
  for (const auto* p : m.params().all()) m.params().assign(p->name, std::vector<double>(p->tensor.size(), 0.0));
  num::Rng rng(4);
  auto y = m.map(Tensor::randn({5, 4}, 1.0, rng));
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("mapper gradients pass finite differences") {
  VlMapper m(config(InputKind::s3d_features, 4, 6, 5), 5);
  num::Rng rng(6);
  Tensor x = Tensor::randn({6, 4}, 1.0, rng, true);
  Tensor w = Tensor::randn({6, 6}, 1.0, rng);
  auto f = [&] { return num::sum(num::mul(m.map(x), w)); };
  for (const auto* p : m.params().all()) {
    INFO(p->name);
    CHECK(num::finite_difference_check_param(f, p->tensor, 1e-6) <= 1e-4);
  }
  CHECK(num::finite_difference_check_param(f, x, 1e-6) <= 1e-4);
}

TEST_CASE("mapper is per-frame") {
  VlMapper m(config(InputKind::gloss_representation, 3, 4), 7);
  num::Rng rng(8);
  Tensor x = Tensor::randn({5, 3}, 1.0, rng);
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  auto y = m.map(x);
  auto yp = m.map(num::gather_rows(x, perm));
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t c = 0; c < 4; ++c) CHECK(yp.at(i, c) == doctest::Approx(y.at(perm[i], c)).epsilon(1e-12));
  }
}

TEST_CASE("embedding initialization") {
  const std::size_t k1 = 5, d = 6;
  num::Rng rng(9);
  Tensor table = Tensor::randn({k1, d}, 1.0, rng);

  SUBCASE("one-hot rows recover the table, uniform rows its mean") {
    VlMapper m(config(InputKind::gloss_probabilities, k1, d), 10);
    m.init_from_embedding(table);
    std::vector<double> eye(k1 * k1, 0.0);
    for (std::size_t i = 0; i < k1; ++i) eye[i * k1 + i] = 1.0;
    auto rows = m.map(Tensor({k1, k1}, eye));
    for (std::size_t i = 0; i < table.size(); ++i) CHECK(std::abs(rows.at(i) - table.at(i)) <= 1e-9);
    auto mean = m.map(Tensor::full({1, k1}, 1.0 / k1));
    for (std::size_t c = 0; c < d; ++c) {
      double expected = 0.0;
      for (std::size_t r = 0; r < k1; ++r) expected += table.at(r, c) / k1;
      CHECK(std::abs(mean.at(0, c) - expected) <= 1e-9);
    }
  }

  SUBCASE("parameters stay trainable") {
    VlMapper m(config(InputKind::gloss_probabilities, k1, d), 11);
    m.init_from_embedding(table);
    Tensor probs = num::softmax(Tensor::randn({4, k1}, 1.0, rng));
    auto before = m.map(probs);
    num::Adam adam({{m.params().trainable_tensors(), 1e-2}}, {});
    Tensor target = Tensor::randn({4, d}, 1.0, rng);
    auto diff = num::sub(m.map(probs), target);
    num::backward(num::sum(num::mul(diff, diff)));
    adam.step();
    auto after = m.map(probs);
    double change = 0.0;
    for (std::size_t i = 0; i < after.size(); ++i) change = std::max(change, std::abs(after.at(i) - before.at(i)));
    CHECK(change > 1e-6);
  }

  SUBCASE("invalid combinations") {
    VlMapper wrong_kind(config(InputKind::gloss_logits, k1, d), 12);
    CHECK_THROWS_AS(wrong_kind.init_from_embedding(table), ConfigError);
    VlMapper wrong_rows(config(InputKind::gloss_probabilities, k1 + 1, d), 13);
    CHECK_THROWS_AS(wrong_rows.init_from_embedding(table), ConfigError);
    VlMapper narrow(config(InputKind::gloss_probabilities, k1, d, 3), 14);
    CHECK_THROWS_AS(narrow.init_from_embedding(table), ConfigError);
    auto bad = config(InputKind::gloss_representation, k1, d);
    bad.init_from_embedding = true;
    CHECK_THROWS_AS(VlMapper(bad, 0), ConfigError);
  }
}

TEST_CASE("visual taps") {
  visual::VisualEncoderConfig vc;
  vc.d_in = 6;
  vc.d_backbone = 10;
  vc.d_z = 7;
  vc.num_glosses = 4;
  CHECK(mapper::expected_input_dim(InputKind::gloss_representation, vc) == 7);
  CHECK(mapper::expected_input_dim(InputKind::gloss_logits, vc) == 5);
  CHECK(mapper::expected_input_dim(InputKind::s3d_features, vc) == 10);
  CHECK(mapper::expected_input_dim(InputKind::gloss_probabilities, vc) == 5);

  visual::VisualEncoder enc(vc, 15);
  num::Rng rng(16);
  visual::VideoFeatures video{Tensor::randn({13, 6}, 1.0, rng)};
  auto out = enc.forward(std::span<const visual::VideoFeatures>(&video, 1), visual::Mode::eval);
  CHECK(mapper::select_visual_feature(out, InputKind::gloss_representation).node() == out.gloss_repr->node());
  CHECK(mapper::select_visual_feature(out, InputKind::gloss_logits).node() == out.logits->node());
  CHECK(mapper::select_visual_feature(out, InputKind::s3d_features).node() == out.backbone->node());
  auto probs = mapper::select_visual_feature(out, InputKind::gloss_probabilities);
  for (std::size_t r = 0; r < probs.dim(0); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < probs.dim(1); ++c) s += probs.at(r, c);
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }

  auto partial = enc.forward_backbone_only(std::span<const visual::VideoFeatures>(&video, 1), visual::Mode::eval);
  CHECK_NOTHROW(mapper::select_visual_feature(partial, InputKind::s3d_features));
  CHECK_THROWS_AS(mapper::select_visual_feature(partial, InputKind::gloss_representation), PipelineOrderError);
  CHECK_THROWS_AS(mapper::select_visual_feature(partial, InputKind::gloss_probabilities), PipelineOrderError);

  // Every tap feeds a mapper that lands in the same output space.
  for (auto kind : {InputKind::gloss_representation, InputKind::gloss_logits, InputKind::s3d_features,
                    InputKind::gloss_probabilities}) {
    VlMapper m(config(kind, mapper::expected_input_dim(kind, vc), 12), 17);
    auto y = m.map(mapper::select_visual_feature(out, kind));
    CHECK(y.dim(0) == out.lengths[0]);
    CHECK(y.dim(1) == 12);
    CHECK(mapper::input_kind_from_string(mapper::to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(mapper::input_kind_from_string("pixels"), ConfigError);
}
