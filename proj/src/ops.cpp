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
#include <algorithm>
#include <cmath>
#include <limits>

#include "slt/error.hpp"
#include "slt/tensor.hpp"

namespace slt::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC as_mat(std::span<const double> v, std::size_t r, std::size_t c) {
  return MapC(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
Map as_mat(std::span<double> v, std::size_t r, std::size_t c) {
  return Map(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw RankError(std::string(what) + " expects a matrix, got shape " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

// Treats rank-1 tensors as a single row.
std::pair<std::size_t, std::size_t> rows_cols(const Tensor& t) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw RankError("expected rank 1 or 2, got shape " + shape_string(t.shape()));
}

void accumulate(const Tensor& t, std::span<const double> g) {
  if (!t.requires_grad()) return;
  auto acc = t.grad_accumulator();
  for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  as_mat(std::span<double>(out), m, n).noalias() = as_mat(a.values(), m, k) * as_mat(b.values(), k, n);
  return make_op({m, n}, std::move(out), {a, b}, [a, b, m, k, n](std::span<const double> g) {
    auto G = as_mat(g, m, n);
    if (a.requires_grad()) as_mat(a.grad_accumulator(), m, k).noalias() += G * as_mat(b.values(), k, n).transpose();
    if (b.requires_grad()) as_mat(b.grad_accumulator(), k, n).noalias() += as_mat(a.values(), m, k).transpose() * G;
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  if (x.cols() != w.rows() || b.size() != w.cols()) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + ", weight " +
                         shape_string(w.shape()) + ", bias " + shape_string(b.shape()));
  }
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  std::vector<double> out(m * n);
  auto O = as_mat(std::span<double>(out), m, n);
  O.noalias() = as_mat(x.values(), m, k) * as_mat(w.values(), k, n);
  O.rowwise() += as_mat(b.values(), 1, n).row(0);
  return make_op({m, n}, std::move(out), {x, w, b}, [x, w, b, m, k, n](std::span<const double> g) {
    auto G = as_mat(g, m, n);
    if (x.requires_grad()) as_mat(x.grad_accumulator(), m, k).noalias() += G * as_mat(w.values(), k, n).transpose();
    if (w.requires_grad()) as_mat(w.grad_accumulator(), k, n).noalias() += as_mat(x.values(), m, k).transpose() * G;
    if (b.requires_grad()) as_mat(b.grad_accumulator(), 1, n).row(0) += G.colwise().sum();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return make_op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    accumulate(a, g);
    accumulate(b, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return make_op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    accumulate(a, g);
    if (b.requires_grad()) {
      auto acc = b.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return make_op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    if (a.requires_grad()) {
      auto acc = a.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * b.at(i);
    }
    if (b.requires_grad()) {
      auto acc = b.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * a.at(i);
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return make_op(a.shape(), std::move(out), {a}, [a, factor](std::span<const double> g) {
    auto acc = a.grad_accumulator();
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  require_matrix(x, "add_bias");
  if (b.size() != x.cols()) {
    throw DimensionError("add_bias: " + shape_string(x.shape()) + " with bias " +
                         shape_string(b.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b.at(j);
  return make_op(x.shape(), std::move(out), {x, b}, [x, b, m, n](std::span<const double> g) {
    accumulate(x, g);
    if (b.requires_grad()) {
      auto acc = b.grad_accumulator();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) acc[j] += g[i * n + j];
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) > 0.0 ? x.at(i) : 0.0;
  return make_op(x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
    auto acc = x.grad_accumulator();
    // Subgradient at exactly zero is taken as 0.
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.at(i) > 0.0) acc[i] += g[i];
  });
}

Tensor softmax(const Tensor& x) {
  auto [m, n] = rows_cols(x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * n;
    double* o = out.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return make_op(x.shape(), std::move(out), {x}, [x, y, m = m, n = n](std::span<const double> g) {
    auto acc = x.grad_accumulator();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * (*y)[i * n + j];
      for (std::size_t j = 0; j < n; ++j) acc[i * n + j] += (*y)[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  auto [m, n] = rows_cols(x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return make_op(x.shape(), std::move(out), {x}, [x, y, m = m, n = n](std::span<const double> g) {
    auto acc = x.grad_accumulator();
    for (std::size_t i = 0; i < m; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += g[i * n + j];
      for (std::size_t j = 0; j < n; ++j) acc[i * n + j] += g[i * n + j] - std::exp((*y)[i * n + j]) * gs;
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_op({}, {s}, {x}, [x](std::span<const double> g) {
    auto acc = x.grad_accumulator();
    for (auto& a : acc) a += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw UndefinedError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw EmptySequenceError("concat_rows of nothing");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_op({m, n}, std::move(out), parts, [parts](std::span<const double> g) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) accumulate(p, g.subspan(offset, p.size()));
      offset += p.size();
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_rows");
  if (begin > end || end > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of " + shape_string(x.shape()));
  }
  const std::size_t n = x.cols();
  std::vector<double> out(x.values().begin() + begin * n, x.values().begin() + end * n);
  return make_op({end - begin, n}, std::move(out), {x}, [x, begin, n](std::span<const double> g) {
    auto acc = x.grad_accumulator();
    for (std::size_t i = 0; i < g.size(); ++i) acc[begin * n + i] += g[i];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_matrix(table, "gather_rows");
  const std::size_t n = table.cols();
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * n);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= table.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(idx[i]) + " out of " +
                           shape_string(table.shape()));
    }
    std::copy_n(table.values().begin() + idx[i] * n, n, out.begin() + i * n);
  }
  return make_op({idx.size(), n}, std::move(out), {table}, [table, idx, n](std::span<const double> g) {
    auto acc = table.grad_accumulator();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) acc[idx[i] * n + j] += g[i * n + j];
  });
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> conv_output_lengths(std::span<const std::size_t> lengths, int stride) {
  std::vector<std::size_t> out;
  out.reserve(lengths.size());
  for (auto t : lengths) out.push_back((t + stride - 1) / stride);
  return out;
}

Tensor temporal_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  require_matrix(x, "temporal_conv1d");
  const std::size_t len = x.rows();
  return temporal_conv1d(x, w, b, stride, std::span<const std::size_t>(&len, 1));
}

Tensor temporal_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                       std::span<const std::size_t> lengths) {
  require_matrix(x, "temporal_conv1d");
  if (w.rank() != 3 || w.dim(2) != 3) {
    throw DimensionError("temporal_conv1d: weight must be [Cout x Cin x 3], got " +
                         shape_string(w.shape()));
  }
  if (stride != 1 && stride != 2) throw ArgumentError("temporal_conv1d: stride must be 1 or 2");
  const std::size_t cin = x.cols(), cout = w.dim(0);
  if (w.dim(1) != cin || b.size() != cout) {
    throw DimensionError("temporal_conv1d: input " + shape_string(x.shape()) + ", weight " +
                         shape_string(w.shape()) + ", bias " + shape_string(b.shape()));
  }
  std::size_t total = 0;
  for (auto t : lengths) {
    if (t == 0) throw EmptySequenceError("temporal_conv1d: empty sequence");
    total += t;
  }
  if (total != x.rows()) {
    throw DimensionError("temporal_conv1d: lengths sum to " + std::to_string(total) +
                         " but input has " + std::to_string(x.rows()) + " rows");
  }
  const auto out_lengths = conv_output_lengths(lengths, stride);
  std::size_t out_rows = 0;
  for (auto t : out_lengths) out_rows += t;

  // im2col: col[r][k * cin + c] = x[src(r, k)][c], zero outside the sequence.
  const std::size_t kc = 3 * cin;
  auto col = std::make_shared<std::vector<double>>(out_rows * kc, 0.0);
  auto src = std::make_shared<std::vector<std::ptrdiff_t>>(out_rows * 3, -1);
  {
    std::size_t in_off = 0, r = 0;
    for (std::size_t s = 0; s < lengths.size(); ++s) {
      const auto len = static_cast<std::ptrdiff_t>(lengths[s]);
      for (std::size_t t = 0; t < out_lengths[s]; ++t, ++r) {
        for (std::ptrdiff_t k = 0; k < 3; ++k) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t) * stride + k - 1;
          if (pos < 0 || pos >= len) continue;
          const std::size_t row = in_off + static_cast<std::size_t>(pos);
          (*src)[r * 3 + k] = static_cast<std::ptrdiff_t>(row);
          std::copy_n(x.values().begin() + row * cin, cin, col->begin() + r * kc + k * cin);
        }
      }
      in_off += lengths[s];
    }
  }
  // wmat[(k * cin + c)][o] = w[o][c][k]
  RowMat wmat(kc, cout);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t k = 0; k < 3; ++k) wmat(k * cin + c, o) = w.at((o * cin + c) * 3 + k);

  std::vector<double> out(out_rows * cout);
  auto O = as_mat(std::span<double>(out), out_rows, cout);
  O.noalias() = as_mat(std::span<const double>(*col), out_rows, kc) * wmat;
  O.rowwise() += as_mat(b.values(), 1, cout).row(0);

  return make_op({out_rows, cout}, std::move(out), {x, w, b},
                 [x, w, b, col, src, wmat = std::move(wmat), out_rows, cin, cout, kc](std::span<const double> g) {
                   auto G = as_mat(g, out_rows, cout);
                   if (x.requires_grad()) {
                     RowMat dcol = G * wmat.transpose();
                     auto acc = x.grad_accumulator();
                     for (std::size_t r = 0; r < out_rows; ++r) {
                       for (std::size_t k = 0; k < 3; ++k) {
                         const auto row = (*src)[r * 3 + k];
                         if (row < 0) continue;
                         double* dst = acc.data() + static_cast<std::size_t>(row) * cin;
                         for (std::size_t c = 0; c < cin; ++c) dst[c] += dcol(r, k * cin + c);
                       }
                     }
                   }
                   if (w.requires_grad()) {
                     RowMat dw = as_mat(std::span<const double>(*col), out_rows, kc).transpose() * G;
                     auto acc = w.grad_accumulator();
                     for (std::size_t o = 0; o < cout; ++o)
                       for (std::size_t c = 0; c < cin; ++c)
                         for (std::size_t k = 0; k < 3; ++k) acc[(o * cin + c) * 3 + k] += dw(k * cin + c, o);
                   }
                   if (b.requires_grad()) as_mat(b.grad_accumulator(), 1, cout).row(0) += G.colwise().sum();
                 });
}

// ---------------------------------------------------------------------------

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training) {
  require_matrix(x, "batch_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.size() != n || beta.size() != n || state.running_mean.size() != n ||
      state.running_var.size() != n) {
    throw DimensionError("batch_norm: input " + shape_string(x.shape()) + " with " +
                         std::to_string(gamma.size()) + " channels");
  }
  std::vector<double> mu(n, 0.0), var(n, 0.0);
  if (training) {
    if (m == 0) throw EmptySequenceError("batch_norm on zero rows");
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) mu[j] += x.at(i * n + j);
    for (auto& v : mu) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double d = x.at(i * n + j) - mu[j];
        var[j] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(m);
    auto rm = state.running_mean.mutable_values();
    auto rv = state.running_var.mutable_values();
    const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      rm[j] = (1.0 - state.momentum) * rm[j] + state.momentum * mu[j];
      rv[j] = (1.0 - state.momentum) * rv[j] + state.momentum * var[j] * unbias;
    }
  } else {
    std::copy(state.running_mean.values().begin(), state.running_mean.values().end(), mu.begin());
    std::copy(state.running_var.values().begin(), state.running_var.values().end(), var.begin());
  }
  std::vector<double> inv_std(n);
  for (std::size_t j = 0; j < n; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (x.at(i * n + j) - mu[j]) * inv_std[j];
      (*xhat)[i * n + j] = h;
      out[i * n + j] = gamma.at(j) * h + beta.at(j);
    }
  return make_op(x.shape(), std::move(out), {x, gamma, beta},
                 [x, gamma, beta, xhat, inv_std, m, n, training](std::span<const double> g) {
                   std::vector<double> dg(n, 0.0), db(n, 0.0);
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < n; ++j) {
                       dg[j] += g[i * n + j] * (*xhat)[i * n + j];
                       db[j] += g[i * n + j];
                     }
                   if (gamma.requires_grad()) {
                     auto acc = gamma.grad_accumulator();
                     for (std::size_t j = 0; j < n; ++j) acc[j] += dg[j];
                   }
                   if (beta.requires_grad()) {
                     auto acc = beta.grad_accumulator();
                     for (std::size_t j = 0; j < n; ++j) acc[j] += db[j];
                   }
                   if (!x.requires_grad()) return;
                   auto acc = x.grad_accumulator();
                   const double inv_m = 1.0 / static_cast<double>(m);
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < n; ++j) {
                       const double gx = g[i * n + j] * gamma.at(j);
                       if (training) {
                         acc[i * n + j] += gamma.at(j) * inv_std[j] *
                                           (g[i * n + j] - inv_m * db[j] - (*xhat)[i * n + j] * inv_m * dg[j]);
                       } else {
                         acc[i * n + j] += gx * inv_std[j];
                       }
                     }
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.size() != n || beta.size() != n) {
    throw DimensionError("layer_norm: input " + shape_string(x.shape()) + " with " +
                         std::to_string(gamma.size()) + " features");
  }
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * is;
      (*xhat)[i * n + j] = h;
      out[i * n + j] = gamma.at(j) * h + beta.at(j);
    }
  }
  return make_op(x.shape(), std::move(out), {x, gamma, beta},
                 [x, gamma, beta, xhat, inv_std, m, n](std::span<const double> g) {
                   if (gamma.requires_grad() || beta.requires_grad()) {
                     auto ga = gamma.requires_grad() ? gamma.grad_accumulator() : std::span<double>();
                     auto ba = beta.requires_grad() ? beta.grad_accumulator() : std::span<double>();
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) {
                         if (!ga.empty()) ga[j] += g[i * n + j] * (*xhat)[i * n + j];
                         if (!ba.empty()) ba[j] += g[i * n + j];
                       }
                   }
                   if (!x.requires_grad()) return;
                   auto acc = x.grad_accumulator();
                   const double inv_n = 1.0 / static_cast<double>(n);
                   for (std::size_t i = 0; i < m; ++i) {
                     double s1 = 0.0, s2 = 0.0;
                     for (std::size_t j = 0; j < n; ++j) {
                       const double gh = g[i * n + j] * gamma.at(j);
                       s1 += gh;
                       s2 += gh * (*xhat)[i * n + j];
                     }
                     for (std::size_t j = 0; j < n; ++j) {
                       const double gh = g[i * n + j] * gamma.at(j);
                       acc[i * n + j] += (*inv_std)[i] * (gh - inv_n * s1 - (*xhat)[i * n + j] * inv_n * s2);
                     }
                   }
                 });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ArgumentError("dropout probability must lie in [0, 1)");
  if (p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.size());
  const double s = 1.0 / (1.0 - p);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = keep(rng) ? s : 0.0;
    out[i] = x.at(i) * (*mask)[i];
  }
  return make_op(x.shape(), std::move(out), {x}, [x, mask](std::span<const double> g) {
    auto acc = x.grad_accumulator();
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * (*mask)[i];
  });
}

Tensor cross_entropy_label_smoothed(const Tensor& logits, std::span<const int> targets, double eps,
                                    int ignore_index) {
  require_matrix(logits, "cross_entropy_label_smoothed");
  if (eps < 0.0 || eps >= 1.0) throw ArgumentError("label smoothing must lie in [0, 1)");
  const std::size_t m = logits.rows(), v = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(m) + " rows");
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  std::size_t valid = 0;
  for (int t : tgt) {
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw VocabularyError("cross_entropy: target id " + std::to_string(t) + " outside [0," +
                            std::to_string(v) + ")");
    }
    ++valid;
  }
  if (valid == 0) throw UndefinedError("cross_entropy: every position is padding");

  const double off = eps / static_cast<double>(v);
  auto probs = std::make_shared<std::vector<double>>(m * v);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (tgt[i] == ignore_index) continue;
    const double* row = logits.values().data() + i * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    double loss = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      const double logp = row[j] - lse;
      (*probs)[i * v + j] = std::exp(logp);
      const double q = off + (static_cast<int>(j) == tgt[i] ? 1.0 - eps : 0.0);
      if (q > 0.0) loss -= q * logp;
    }
    total += loss;
  }
  const double inv = 1.0 / static_cast<double>(valid);
  return make_op({}, {total * inv}, {logits},
                 [logits, tgt, probs, m, v, off, eps, inv, ignore_index](std::span<const double> g) {
                   auto acc = logits.grad_accumulator();
                   for (std::size_t i = 0; i < m; ++i) {
                     if (tgt[i] == ignore_index) continue;
                     for (std::size_t j = 0; j < v; ++j) {
                       const double q = off + (static_cast<int>(j) == tgt[i] ? 1.0 - eps : 0.0);
                       acc[i * v + j] += g[0] * inv * ((*probs)[i * v + j] - q);
                     }
                   }
                 });
}

}  // namespace slt::num
