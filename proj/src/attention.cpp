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

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "slt/error.hpp"
#include "slt/tensor.hpp"

namespace slt::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

struct Block {
  std::size_t q_off, q_len, k_off, k_len, p_off;
};

}  // namespace

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const AttentionLayout& layout) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw RankError("multi_head_attention expects matrices");
  }
  const std::size_t d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw DimensionError("multi_head_attention: q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("model dimension " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (layout.query_lengths.size() != layout.key_lengths.size()) {
    throw DimensionError("multi_head_attention: query and key segment counts differ");
  }
  if (!layout.key_mask.empty() && layout.key_mask.size() != k.rows()) {
    throw DimensionError("multi_head_attention: key mask length mismatch");
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Block> blocks;
  std::size_t qo = 0, ko = 0, po = 0;
  for (std::size_t s = 0; s < layout.query_lengths.size(); ++s) {
    const std::size_t ql = layout.query_lengths[s], kl = layout.key_lengths[s];
    if (layout.causal && ql != kl) throw DimensionError("causal attention needs equal lengths");
    blocks.push_back({qo, ql, ko, kl, po});
    qo += ql;
    ko += kl;
    po += heads * ql * kl;
  }
  if (qo != q.rows() || ko != k.rows()) {
    throw DimensionError("multi_head_attention: segment lengths do not cover the inputs");
  }

  auto probs = std::make_shared<std::vector<double>>(po, 0.0);
  std::vector<double> out(q.rows() * d, 0.0);
  const auto nq = static_cast<Eigen::Index>(q.rows());
  const auto nk = static_cast<Eigen::Index>(k.rows());
  const auto dd = static_cast<Eigen::Index>(d);
  MapC Q(q.values().data(), nq, dd), K(k.values().data(), nk, dd), V(v.values().data(), nk, dd);
  Map O(out.data(), nq, dd);
  const double neg_inf = -std::numeric_limits<double>::infinity();

  for (const auto& blk : blocks) {
    const auto ql = static_cast<Eigen::Index>(blk.q_len), kl = static_cast<Eigen::Index>(blk.k_len);
    if (ql == 0 || kl == 0) continue;
    for (std::size_t h = 0; h < heads; ++h) {
      const auto c0 = static_cast<Eigen::Index>(h * dh), dhi = static_cast<Eigen::Index>(dh);
      Map P(probs->data() + blk.p_off + h * blk.q_len * blk.k_len, ql, kl);
      P.noalias() = Q.block(blk.q_off, c0, ql, dhi) * K.block(blk.k_off, c0, kl, dhi).transpose();
      P *= scale;
      for (Eigen::Index i = 0; i < ql; ++i) {
        double mx = neg_inf;
        for (Eigen::Index j = 0; j < kl; ++j) {
          const bool hidden = (layout.causal && j > i) ||
                              (!layout.key_mask.empty() && !layout.key_mask[blk.k_off + j]);
          if (hidden) {
            P(i, j) = neg_inf;
          } else {
            mx = std::max(mx, P(i, j));
          }
        }
        if (mx == neg_inf) {
          P.row(i).setZero();
          continue;
        }
        double z = 0.0;
        for (Eigen::Index j = 0; j < kl; ++j) {
          const double e = P(i, j) == neg_inf ? 0.0 : std::exp(P(i, j) - mx);
          P(i, j) = e;
          z += e;
        }
        P.row(i) /= z;
      }
      O.block(blk.q_off, c0, ql, dhi).noalias() = P * V.block(blk.k_off, c0, kl, dhi);
    }
  }

  return make_op({q.rows(), d}, std::move(out), {q, k, v},
                 [q, k, v, probs, blocks, heads, dh, scale, nq, nk, dd](std::span<const double> g) {
                   MapC G(g.data(), nq, dd);
                   MapC Qm(q.values().data(), nq, dd), Km(k.values().data(), nk, dd),
                       Vm(v.values().data(), nk, dd);
                   RowMat dQ = RowMat::Zero(nq, dd), dK = RowMat::Zero(nk, dd), dV = RowMat::Zero(nk, dd);
                   for (const auto& blk : blocks) {
                     const auto ql = static_cast<Eigen::Index>(blk.q_len);
                     const auto kl = static_cast<Eigen::Index>(blk.k_len);
                     if (ql == 0 || kl == 0) continue;
                     for (std::size_t h = 0; h < heads; ++h) {
                       const auto c0 = static_cast<Eigen::Index>(h * dh), dhi = static_cast<Eigen::Index>(dh);
                       MapC P(probs->data() + blk.p_off + h * blk.q_len * blk.k_len, ql, kl);
                       auto Gb = G.block(blk.q_off, c0, ql, dhi);
                       dV.block(blk.k_off, c0, kl, dhi).noalias() += P.transpose() * Gb;
                       RowMat dP = Gb * Vm.block(blk.k_off, c0, kl, dhi).transpose();
                       RowMat dS(ql, kl);
                       for (Eigen::Index i = 0; i < ql; ++i) {
                         const double dot = (dP.row(i).array() * P.row(i).array()).sum();
                         dS.row(i) = P.row(i).array() * (dP.row(i).array() - dot);
                       }
                       dS *= scale;
                       dQ.block(blk.q_off, c0, ql, dhi).noalias() += dS * Km.block(blk.k_off, c0, kl, dhi);
                       dK.block(blk.k_off, c0, kl, dhi).noalias() += dS.transpose() * Qm.block(blk.q_off, c0, ql, dhi);
                     }
                   }
                   auto add_into = [](const Tensor& t, const RowMat& d) {
                     if (!t.requires_grad()) return;
                     auto acc = t.grad_accumulator();
                     for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d.data()[i];
                   };
                   add_into(q, dQ);
                   add_into(k, dK);
                   add_into(v, dV);
                 });
}

}  // namespace slt::num
