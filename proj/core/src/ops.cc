// Copyright 2026 The subllm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "subllm/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kernels.h"
#include "subllm/errors.h"

namespace subllm {

namespace {

template <typename T>
void require_rank(const Tensor<T>& x, int rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_to_string(x.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

template <typename T>
std::vector<T> copy_of(const Tensor<T>& x) {
  auto d = x.data();
  return {d.begin(), d.end()};
}

}  // namespace

// ---------------------------------------------------------------- RopeTable

template <typename T>
RopeTable<T>::RopeTable(std::int64_t head_dim, double theta, std::int64_t max_positions)
    : head_dim_(head_dim), max_positions_(max_positions), theta_(theta) {
  if (head_dim <= 0 || head_dim % 2 != 0) {
    throw DimensionError("rope head_dim must be positive and even");
  }
  const std::int64_t half = head_dim / 2;
  cos_.resize(static_cast<size_t>(max_positions * half));
  sin_.resize(cos_.size());
  for (std::int64_t p = 0; p < max_positions; ++p) {
    for (std::int64_t i = 0; i < half; ++i) {
      const double freq =
          std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
      const double angle = static_cast<double>(p) * freq;
      cos_[p * half + i] = static_cast<T>(std::cos(angle));
      sin_[p * half + i] = static_cast<T>(std::sin(angle));
    }
  }
}

template <typename T>
const T* RopeTable<T>::cos_row(std::int64_t pos) const {
  if (pos < 0 || pos >= max_positions_) {
    throw WindowError("position " + std::to_string(pos) + " outside rotary table of " +
                      std::to_string(max_positions_));
  }
  return cos_.data() + pos * (head_dim_ / 2);
}

template <typename T>
const T* RopeTable<T>::sin_row(std::int64_t pos) const {
  if (pos < 0 || pos >= max_positions_) {
    throw WindowError("position " + std::to_string(pos) + " outside rotary table of " +
                      std::to_string(max_positions_));
  }
  return sin_.data() + pos * (head_dim_ / 2);
}

// ---------------------------------------------------------------- matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
  }
  std::vector<T> out(static_cast<size_t>(m * n));
  kernels::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data(), false);
  return Tensor<T>::make_result({m, n}, std::move(out), {a, b},
                                [a, b, m, n, k](std::span<const T> g) mutable {
                                  if (a.requires_grad()) {
                                    kernels::gemm_nt(m, k, n, g.data(), b.data().data(),
                                                     a.mutable_grad().data(), true);
                                  }
                                  if (b.requires_grad()) {
                                    kernels::gemm_tn(k, n, m, a.data().data(), g.data(),
                                                     b.mutable_grad().data(), true);
                                  }
                                });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank(x, 2, "transpose");
  const auto r = x.dim(0), c = x.dim(1);
  std::vector<T> out(static_cast<size_t>(r * c));
  kernels::transpose(r, c, x.data().data(), out.data());
  return Tensor<T>::make_result({c, r}, std::move(out), {x},
                                [x, r, c](std::span<const T> g) mutable {
                                  std::vector<T> gt(static_cast<size_t>(r * c));
                                  kernels::transpose(c, r, g.data(), gt.data());
                                  x.accumulate_grad(gt);
                                });
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  auto out = copy_of(a);
  auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b},
                                [a, b](std::span<const T> g) mutable {
                                  a.accumulate_grad(g);
                                  b.accumulate_grad(g);
                                });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  auto out = copy_of(a);
  auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b},
                                [a, b](std::span<const T> g) mutable {
                                  a.accumulate_grad(g);
                                  if (b.requires_grad()) {
                                    auto gb = b.mutable_grad();
                                    for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                                  }
                                });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  auto out = copy_of(a);
  auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b},
                                [a, b](std::span<const T> g) mutable {
                                  if (a.requires_grad()) {
                                    auto ga = a.mutable_grad();
                                    auto bd = b.data();
                                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
                                  }
                                  if (b.requires_grad()) {
                                    auto gb = b.mutable_grad();
                                    auto ad = a.data();
                                    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const auto nb = bias.numel();
  const auto last = x.rank() == 0 ? 1 : x.dim(-1);
  if (nb != 1 && nb != last) {
    throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) +
                         " does not broadcast over " + shape_to_string(x.shape()));
  }
  auto out = copy_of(x);
  auto bd = bias.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[nb == 1 ? 0 : i % nb];
  return Tensor<T>::make_result(x.shape(), std::move(out), {x, bias},
                                [x, bias, nb](std::span<const T> g) mutable {
                                  x.accumulate_grad(g);
                                  if (bias.requires_grad()) {
                                    auto gb = bias.mutable_grad();
                                    for (size_t i = 0; i < g.size(); ++i) {
                                      gb[nb == 1 ? 0 : i % nb] += g[i];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  auto out = copy_of(x);
  for (auto& v : out) v *= factor;
  return Tensor<T>::make_result(x.shape(), std::move(out), {x},
                                [x, factor](std::span<const T> g) mutable {
                                  auto gx = x.mutable_grad();
                                  for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
                                });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  auto out = copy_of(x);
  for (auto& v : out) v += value;
  return Tensor<T>::make_result(x.shape(), std::move(out), {x},
                                [x](std::span<const T> g) mutable { x.accumulate_grad(g); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (auto v : x.data()) total += v;
  return Tensor<T>::make_result({}, {total}, {x}, [x](std::span<const T> g) mutable {
    auto gx = x.mutable_grad();
    for (auto& v : gx) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const auto n = x.numel();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(n));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_to_string(x.shape()) + " -> " +
                         shape_to_string(shape));
  }
  return Tensor<T>::make_result(std::move(shape), copy_of(x), {x},
                                [x](std::span<const T> g) mutable { x.accumulate_grad(g); });
}

// ---------------------------------------------------------------- indexing

template <typename T>
Tensor<T> index_select(const Tensor<T>& x, int dim, std::span<const std::int64_t> idx) {
  const int r = x.rank();
  if (dim < 0) dim += r;
  if (dim < 0 || dim >= r) throw DimensionError("index_select: bad axis");
  const auto& shape = x.shape();
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < dim; ++i) outer *= shape[i];
  for (int i = dim + 1; i < r; ++i) inner *= shape[i];
  const std::int64_t extent = shape[dim];
  const auto m = static_cast<std::int64_t>(idx.size());
  for (auto i : idx) {
    if (i < 0 || i >= extent) {
      throw IndexError("index_select: index " + std::to_string(i) + " out of range [0, " +
                       std::to_string(extent) + ")");
    }
  }
  Shape out_shape = shape;
  out_shape[dim] = m;
  std::vector<T> out(static_cast<size_t>(outer * m * inner));
  auto xd = x.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t j = 0; j < m; ++j) {
      const T* src = xd.data() + (o * extent + idx[j]) * inner;
      std::copy(src, src + inner, out.data() + (o * m + j) * inner);
    }
  }
  std::vector<std::int64_t> ids(idx.begin(), idx.end());
  return Tensor<T>::make_result(
      std::move(out_shape), std::move(out), {x},
      [x, ids = std::move(ids), outer, extent, inner](std::span<const T> g) mutable {
        auto gx = x.mutable_grad();
        const auto m = static_cast<std::int64_t>(ids.size());
        for (std::int64_t o = 0; o < outer; ++o) {
          for (std::int64_t j = 0; j < m; ++j) {
            const T* src = g.data() + (o * m + j) * inner;
            T* dst = gx.data() + (o * extent + ids[j]) * inner;
            for (std::int64_t c = 0; c < inner; ++c) dst[c] += src[c];
          }
        }
      });
}

template <typename T>
Tensor<T> merge_rows(const Tensor<T>& a, std::span<const std::int64_t> idx_a,
                     const Tensor<T>& b, std::span<const std::int64_t> idx_b) {
  if (a.rank() < 1 || b.rank() < 1) throw DimensionError("merge_rows: rank 0 operand");
  if (a.dim(0) != static_cast<std::int64_t>(idx_a.size()) ||
      b.dim(0) != static_cast<std::int64_t>(idx_b.size())) {
    throw DimensionError("merge_rows: index count does not match row count");
  }
  Shape row_shape_a(a.shape().begin() + 1, a.shape().end());
  Shape row_shape_b(b.shape().begin() + 1, b.shape().end());
  if (row_shape_a != row_shape_b) throw DimensionError("merge_rows: row shapes differ");
  const std::int64_t inner = shape_numel(row_shape_a);
  const auto n = static_cast<std::int64_t>(idx_a.size() + idx_b.size());
  std::vector<std::uint8_t> covered(static_cast<size_t>(n), 0);
  auto mark = [&](std::int64_t i) {
    if (i < 0 || i >= n || covered[i]) {
      throw IndexError("merge_rows: index sets do not partition [0, " + std::to_string(n) + ")");
    }
    covered[i] = 1;
  };
  for (auto i : idx_a) mark(i);
  for (auto i : idx_b) mark(i);

  std::vector<T> out(static_cast<size_t>(n * inner));
  auto ad = a.data();
  auto bd = b.data();
  for (size_t j = 0; j < idx_a.size(); ++j) {
    std::copy(ad.begin() + j * inner, ad.begin() + (j + 1) * inner,
              out.begin() + idx_a[j] * inner);
  }
  for (size_t j = 0; j < idx_b.size(); ++j) {
    std::copy(bd.begin() + j * inner, bd.begin() + (j + 1) * inner,
              out.begin() + idx_b[j] * inner);
  }
  Shape out_shape = a.shape();
  out_shape[0] = n;
  std::vector<std::int64_t> ia(idx_a.begin(), idx_a.end());
  std::vector<std::int64_t> ib(idx_b.begin(), idx_b.end());
  return Tensor<T>::make_result(
      std::move(out_shape), std::move(out), {a, b},
      [a, b, ia = std::move(ia), ib = std::move(ib), inner](std::span<const T> g) mutable {
        auto scatter = [&](const Tensor<T>& t, const std::vector<std::int64_t>& ids) {
          if (!t.requires_grad()) return;
          auto gt = t.mutable_grad();
          for (size_t j = 0; j < ids.size(); ++j) {
            for (std::int64_t c = 0; c < inner; ++c) gt[j * inner + c] += g[ids[j] * inner + c];
          }
        };
        scatter(a, ia);
        scatter(b, ib);
      });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  const int r = parts[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("concat: bad axis");
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw DimensionError("concat: rank mismatch");
    for (int i = 0; i < r; ++i) {
      if (i != axis && p.dim(i) != parts[0].dim(i)) {
        throw DimensionError("concat: extent mismatch on axis " + std::to_string(i));
      }
    }
    out_shape[axis] += p.dim(axis);
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[i];
  for (int i = axis + 1; i < r; ++i) inner *= out_shape[i];
  const std::int64_t total = out_shape[axis];
  std::vector<T> out(static_cast<size_t>(shape_numel(out_shape)));
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const auto e = p.dim(axis);
    auto pd = p.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy(pd.begin() + o * e * inner, pd.begin() + (o + 1) * e * inner,
                out.begin() + (o * total + off) * inner);
    }
    off += e;
  }
  return Tensor<T>::make_result(
      std::move(out_shape), std::move(out), parts,
      [parts, offsets, outer, inner, total, axis](std::span<const T> g) mutable {
        for (size_t k = 0; k < parts.size(); ++k) {
          auto& p = parts[k];
          if (!p.requires_grad()) continue;
          const auto e = p.dim(axis);
          auto gp = p.mutable_grad();
          for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t c = 0; c < e * inner; ++c) {
              gp[o * e * inner + c] += g[(o * total + offsets[k]) * inner + c];
            }
          }
        }
      });
}

// ---------------------------------------------------------------- clamp / custom

template <typename T>
Tensor<T> clamp01(const Tensor<T>& s) {
  auto out = copy_of(s);
  for (auto& v : out) v = std::min(std::max(v, T(0)), T(1));
  return Tensor<T>::make_result(s.shape(), std::move(out), {s},
                                [s](std::span<const T> g) mutable {
                                  auto gs = s.mutable_grad();
                                  auto sd = s.data();
                                  for (size_t i = 0; i < g.size(); ++i) {
                                    if (sd[i] >= T(0) && sd[i] <= T(1)) gs[i] += g[i];
                                  }
                                });
}

template <typename T>
Tensor<T> custom_grad(const Tensor<T>& x, GradTransform<T> transform) {
  return Tensor<T>::make_result(x.shape(), copy_of(x), {x},
                                [x, transform = std::move(transform)](std::span<const T> g) mutable {
                                  std::vector<T> shaped(g.begin(), g.end());
                                  if (transform) transform(x.data(), shaped);
                                  x.accumulate_grad(shaped);
                                });
}

// ---------------------------------------------------------------- softmax

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, const SoftmaxMask& mask) {
  if (x.rank() < 1) throw DimensionError("softmax of a scalar");
  const std::int64_t n = x.dim(-1);
  const std::int64_t rows = n == 0 ? 0 : x.numel() / n;
  std::int64_t mat_rows = 1;
  if (mask.causal || !mask.allowed.empty()) {
    if (x.rank() < 2) throw DimensionError("masked softmax needs rank >= 2");
    mat_rows = x.dim(-2);
    if (mask.causal && mat_rows != n) throw DimensionError("causal mask needs square trailing axes");
    if (!mask.allowed.empty() && static_cast<std::int64_t>(mask.allowed.size()) != mat_rows * n) {
      throw DimensionError("softmax mask size does not match trailing axes");
    }
  }
  auto allowed = [&](std::int64_t row, std::int64_t j) {
    if (mask.causal) return j <= row % mat_rows;
    if (!mask.allowed.empty()) return mask.allowed[(row % mat_rows) * n + j] != 0;
    return true;
  };
  std::vector<T> out(static_cast<size_t>(x.numel()), T(0));
  auto xd = x.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::int64_t j = 0; j < n; ++j) {
      if (allowed(r, j)) mx = std::max(mx, xd[r * n + j]);
    }
    if (mx == -std::numeric_limits<T>::infinity()) continue;
    T total = 0;
    for (std::int64_t j = 0; j < n; ++j) {
      if (!allowed(r, j)) continue;
      out[r * n + j] = std::exp(xd[r * n + j] - mx);
      total += out[r * n + j];
    }
    for (std::int64_t j = 0; j < n; ++j) out[r * n + j] /= total;
  }
  std::vector<T> probs = out;
  return Tensor<T>::make_result(x.shape(), std::move(out), {x},
                                [x, probs = std::move(probs), rows, n](std::span<const T> g) mutable {
                                  auto gx = x.mutable_grad();
                                  for (std::int64_t r = 0; r < rows; ++r) {
                                    const T* p = probs.data() + r * n;
                                    const T* gr = g.data() + r * n;
                                    T dot = 0;
                                    for (std::int64_t j = 0; j < n; ++j) dot += p[j] * gr[j];
                                    for (std::int64_t j = 0; j < n; ++j) {
                                      gx[r * n + j] += p[j] * (gr[j] - dot);
                                    }
                                  }
                                });
}

// ---------------------------------------------------------------- norm / activations

template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, T eps) {
  require_rank(x, 2, "rms_norm");
  const auto n = x.dim(0), c = x.dim(1);
  if (gain.numel() != c) throw DimensionError("rms_norm: gain length mismatch");
  std::vector<T> out(static_cast<size_t>(n * c));
  std::vector<T> inv_rms(static_cast<size_t>(n));
  auto xd = x.data();
  auto gd = gain.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const T* row = xd.data() + i * c;
    T ms = 0;
    for (std::int64_t j = 0; j < c; ++j) ms += row[j] * row[j];
    ms /= static_cast<T>(c);
    const T r = T(1) / std::sqrt(ms + eps);
    inv_rms[i] = r;
    for (std::int64_t j = 0; j < c; ++j) out[i * c + j] = row[j] * r * gd[j];
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, gain},
      [x, gain, inv_rms = std::move(inv_rms), n, c](std::span<const T> g) mutable {
        auto xd = x.data();
        auto gd = gain.data();
        if (gain.requires_grad()) {
          auto gg = gain.mutable_grad();
          for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * xd[i * c + j] * inv_rms[i];
          }
        }
        if (x.requires_grad()) {
          auto gx = x.mutable_grad();
          for (std::int64_t i = 0; i < n; ++i) {
            const T r = inv_rms[i];
            T dot = 0;
            for (std::int64_t j = 0; j < c; ++j) dot += g[i * c + j] * gd[j] * xd[i * c + j] * r;
            dot /= static_cast<T>(c);
            for (std::int64_t j = 0; j < c; ++j) {
              const T xhat = xd[i * c + j] * r;
              gx[i * c + j] += r * (g[i * c + j] * gd[j] - xhat * dot);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  auto out = copy_of(x);
  for (auto& v : out) v = v / (T(1) + std::exp(-v));
  return Tensor<T>::make_result(x.shape(), std::move(out), {x},
                                [x](std::span<const T> g) mutable {
                                  auto gx = x.mutable_grad();
                                  auto xd = x.data();
                                  for (size_t i = 0; i < g.size(); ++i) {
                                    const T sg = T(1) / (T(1) + std::exp(-xd[i]));
                                    gx[i] += g[i] * sg * (T(1) + xd[i] * (T(1) - sg));
                                  }
                                });
}

template <typename T>
Tensor<T> embedding(std::span<const int> ids, const Tensor<T>& table) {
  require_rank(table, 2, "embedding");
  const auto v = table.dim(0), c = table.dim(1);
  const auto n = static_cast<std::int64_t>(ids.size());
  std::vector<T> out(static_cast<size_t>(n * c));
  auto td = table.data();
  for (std::int64_t i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= v) {
      throw InputError("token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                       std::to_string(v));
    }
    std::copy(td.begin() + ids[i] * c, td.begin() + (ids[i] + 1) * c, out.begin() + i * c);
  }
  std::vector<int> id_copy(ids.begin(), ids.end());
  return Tensor<T>::make_result({n, c}, std::move(out), {table},
                                [table, id_copy = std::move(id_copy), c](std::span<const T> g) mutable {
                                  auto gt = table.mutable_grad();
                                  for (size_t i = 0; i < id_copy.size(); ++i) {
                                    for (std::int64_t j = 0; j < c; ++j) {
                                      gt[id_copy[i] * c + j] += g[i * c + j];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  require_rank(logits, 2, "cross_entropy");
  const auto n = logits.dim(0), v = logits.dim(1);
  if (static_cast<std::int64_t>(targets.size()) != n) {
    throw DimensionError("cross_entropy: target count does not match rows");
  }
  if (n == 0) throw DimensionError("cross_entropy: empty batch");
  auto ld = logits.data();
  std::vector<T> probs(static_cast<size_t>(n * v));
  T loss = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (targets[i] < 0 || targets[i] >= v) throw InputError("cross_entropy: target out of range");
    std::copy(ld.begin() + i * v, ld.begin() + (i + 1) * v, probs.begin() + i * v);
    T* p = probs.data() + i * v;
    const T mx = *std::max_element(p, p + v);
    T total = 0;
    for (std::int64_t j = 0; j < v; ++j) total += std::exp(p[j] - mx);
    const T lse = mx + std::log(total);
    loss += lse - p[targets[i]];
    for (std::int64_t j = 0; j < v; ++j) p[j] = std::exp(p[j] - lse);
  }
  loss /= static_cast<T>(n);
  std::vector<int> tg(targets.begin(), targets.end());
  return Tensor<T>::make_result(
      {}, {loss}, {logits},
      [logits, probs = std::move(probs), tg = std::move(tg), n, v](std::span<const T> g) mutable {
        auto gl = logits.mutable_grad();
        const T f = g[0] / static_cast<T>(n);
        for (std::int64_t i = 0; i < n; ++i) {
          for (std::int64_t j = 0; j < v; ++j) {
            const T onehot = j == tg[i] ? T(1) : T(0);
            gl[i * v + j] += f * (probs[i * v + j] - onehot);
          }
        }
      });
}

// ---------------------------------------------------------------- rope / attention

template <typename T>
Tensor<T> rope(const Tensor<T>& x, std::span<const std::int64_t> positions,
               const RopeTable<T>& table) {
  require_rank(x, 2, "rope");
  const auto n = x.dim(0), c = x.dim(1);
  const auto hd = table.head_dim();
  if (static_cast<std::int64_t>(positions.size()) != n) {
    throw DimensionError("rope: position count does not match rows");
  }
  if (c % hd != 0) throw DimensionError("rope: width not a multiple of head_dim");
  auto out = copy_of(x);
  for (std::int64_t i = 0; i < n; ++i) {
    kernels::rope_row(out.data() + i * c, c, hd, table.cos_row(positions[i]),
                      table.sin_row(positions[i]), +1);
  }
  std::vector<std::int64_t> pos(positions.begin(), positions.end());
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x},
      [x, pos = std::move(pos), &table, n, c, hd](std::span<const T> g) mutable {
        std::vector<T> gx(g.begin(), g.end());
        for (std::int64_t i = 0; i < n; ++i) {
          kernels::rope_row(gx.data() + i * c, c, hd, table.cos_row(pos[i]),
                            table.sin_row(pos[i]), -1);
        }
        x.accumulate_grad(gx);
      });
}

template <typename T>
Tensor<T> causal_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           std::int64_t heads, std::vector<T>* probs_out) {
  require_rank(q, 2, "causal_attention");
  require_same_shape(q, k, "causal_attention");
  require_same_shape(q, v, "causal_attention");
  const auto n = q.dim(0), c = q.dim(1);
  if (heads <= 0 || c % heads != 0) throw DimensionError("causal_attention: width not divisible by heads");
  const auto hd = c / heads;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(hd));
  const std::int64_t tri = n * (n + 1) / 2;

  std::vector<T> out(static_cast<size_t>(n * c));
  std::vector<T> probs(static_cast<size_t>(heads * tri));
  std::vector<T> kt(static_cast<size_t>(hd * n));
  auto qd = q.data();
  auto kd = k.data();
  auto vd = v.data();
  for (std::int64_t h = 0; h < heads; ++h) {
    for (std::int64_t j = 0; j < n; ++j) {
      for (std::int64_t d = 0; d < hd; ++d) kt[d * n + j] = kd[j * c + h * hd + d];
    }
    T* ph = probs.data() + h * tri;
    for (std::int64_t i = 0; i < n; ++i) {
      kernels::attend_head(qd.data() + i * c + h * hd, kt.data(), n, vd.data() + h * hd, c, hd,
                           i + 1, scale_factor, ph + i * (i + 1) / 2, out.data() + i * c + h * hd);
    }
  }
  if (probs_out) {
    probs_out->assign(static_cast<size_t>(heads * n * n), T(0));
    for (std::int64_t h = 0; h < heads; ++h) {
      for (std::int64_t i = 0; i < n; ++i) {
        const T* src = probs.data() + h * tri + i * (i + 1) / 2;
        std::copy(src, src + i + 1, probs_out->begin() + (h * n + i) * n);
      }
    }
  }
  return Tensor<T>::make_result(
      {n, c}, std::move(out), {q, k, v},
      [q, k, v, probs = std::move(probs), n, c, hd, heads, tri,
       scale_factor](std::span<const T> g) mutable {
        auto qd = q.data();
        auto kd = k.data();
        auto vd = v.data();
        std::vector<T> gq(static_cast<size_t>(n * c), T(0));
        std::vector<T> gk(static_cast<size_t>(n * c), T(0));
        std::vector<T> gv(static_cast<size_t>(n * c), T(0));
        std::vector<T> vt(static_cast<size_t>(hd * n));
        std::vector<T> dp(static_cast<size_t>(n));
        for (std::int64_t h = 0; h < heads; ++h) {
          const std::int64_t off = h * hd;
          for (std::int64_t j = 0; j < n; ++j) {
            for (std::int64_t d = 0; d < hd; ++d) vt[d * n + j] = vd[j * c + off + d];
          }
          const T* ph = probs.data() + h * tri;
          for (std::int64_t i = 0; i < n; ++i) {
            const T* p = ph + i * (i + 1) / 2;
            const T* go = g.data() + i * c + off;
            const std::int64_t m = i + 1;
            std::fill(dp.begin(), dp.begin() + m, T(0));
            for (std::int64_t d = 0; d < hd; ++d) {
              const T god = go[d];
              const T* vrow = vt.data() + d * n;
              for (std::int64_t j = 0; j < m; ++j) dp[j] += god * vrow[j];
            }
            T rowdot = 0;
            for (std::int64_t j = 0; j < m; ++j) rowdot += p[j] * dp[j];
            const T* qi = qd.data() + i * c + off;
            T* gqi = gq.data() + i * c + off;
            for (std::int64_t j = 0; j < m; ++j) {
              const T ds = p[j] * (dp[j] - rowdot) * scale_factor;
              const T* kj = kd.data() + j * c + off;
              T* gkj = gk.data() + j * c + off;
              T* gvj = gv.data() + j * c + off;
              const T pj = p[j];
              for (std::int64_t d = 0; d < hd; ++d) {
                gqi[d] += ds * kj[d];
                gkj[d] += ds * qi[d];
                gvj[d] += pj * go[d];
              }
            }
          }
        }
        q.accumulate_grad(gq);
        k.accumulate_grad(gk);
        v.accumulate_grad(gv);
      });
}

template <typename T>
Tensor<T> channel_mix(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& c) {
  require_rank(x, 2, "channel_mix");
  require_same_shape(x, y, "channel_mix");
  const auto n = x.dim(0), w = x.dim(1);
  if (c.numel() != w) throw DimensionError("channel_mix: weight length mismatch");
  std::vector<T> out(static_cast<size_t>(n * w));
  auto xd = x.data();
  auto yd = y.data();
  auto cd = c.data();
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      out[i * w + j] = (T(1) - cd[j]) * xd[i * w + j] + cd[j] * yd[i * w + j];
    }
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, y, c},
      [x, y, c, n, w](std::span<const T> g) mutable {
        auto xd = x.data();
        auto yd = y.data();
        auto cd = c.data();
        if (x.requires_grad()) {
          auto gx = x.mutable_grad();
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < w; ++j) gx[i * w + j] += (T(1) - cd[j]) * g[i * w + j];
        }
        if (y.requires_grad()) {
          auto gy = y.mutable_grad();
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < w; ++j) gy[i * w + j] += cd[j] * g[i * w + j];
        }
        if (c.requires_grad()) {
          auto gc = c.mutable_grad();
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < w; ++j)
              gc[j] += g[i * w + j] * (yd[i * w + j] - xd[i * w + j]);
        }
      });
}

// ---------------------------------------------------------------- instantiation

#define SUBLLM_INSTANTIATE_OPS(T)                                                          \
  template class RopeTable<T>;                                                             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> transpose(const Tensor<T>&);                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                           \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                      \
  template Tensor<T> sum(const Tensor<T>&);                                                \
  template Tensor<T> mean(const Tensor<T>&);                                               \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                     \
  template Tensor<T> index_select(const Tensor<T>&, int, std::span<const std::int64_t>);   \
  template Tensor<T> merge_rows(const Tensor<T>&, std::span<const std::int64_t>,           \
                                const Tensor<T>&, std::span<const std::int64_t>);          \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                           \
  template Tensor<T> clamp01(const Tensor<T>&);                                            \
  template Tensor<T> custom_grad(const Tensor<T>&, GradTransform<T>);                      \
  template Tensor<T> softmax(const Tensor<T>&, const SoftmaxMask&);                        \
  template Tensor<T> rms_norm(const Tensor<T>&, const Tensor<T>&, T);                      \
  template Tensor<T> silu(const Tensor<T>&);                                               \
  template Tensor<T> embedding(std::span<const int>, const Tensor<T>&);                    \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                \
  template Tensor<T> rope(const Tensor<T>&, std::span<const std::int64_t>,                 \
                          const RopeTable<T>&);                                            \
  template Tensor<T> causal_attention(const Tensor<T>&, const Tensor<T>&,                  \
                                      const Tensor<T>&, std::int64_t, std::vector<T>*);    \
  template Tensor<T> channel_mix(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

SUBLLM_INSTANTIATE_OPS(float)
SUBLLM_INSTANTIATE_OPS(double)

#undef SUBLLM_INSTANTIATE_OPS

}  // namespace subllm
