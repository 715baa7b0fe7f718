// Copyright 2026 The chanprune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "chanprune/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "chanprune/error.hpp"

namespace chanprune {

namespace {

struct ConvGeom {
  std::int64_t n, ci, h, w;    // input
  std::int64_t co, oh, ow;     // output
  std::int64_t groups, ib, ob; // channels per group, in/out
  int kh, kw, sh, sw, ph, pw;
};

ConvGeom conv_geom(const CompGraph &graph, std::size_t k, std::int64_t batch) {
  const Layer &l = graph.layer(k);
  const Shape &x = graph.input_shape(k);
  const Shape &y = graph.shape(k);
  ConvGeom g{};
  g.n = batch;
  g.ci = x.c;
  g.h = x.h;
  g.w = x.w;
  g.co = y.c;
  g.oh = y.h;
  g.ow = y.w;
  g.groups = l.attrs.groups;
  g.ib = x.c / g.groups;
  g.ob = y.c / g.groups;
  g.kh = l.attrs.kernel_h;
  g.kw = l.attrs.kernel_w;
  g.sh = l.attrs.stride_h;
  g.sw = l.attrs.stride_w;
  g.ph = l.attrs.pad_h;
  g.pw = l.attrs.pad_w;
  return g;
}

// Output columns [lo, hi) whose input column ox*s - p + kx lies in [0, w).
inline void column_range(std::int64_t w, std::int64_t ow, int s, int p, int kx, std::int64_t &lo,
                         std::int64_t &hi) {
  const std::int64_t off = kx - p;
  lo = off >= 0 ? 0 : (-off + s - 1) / s;
  const std::int64_t last = w - 1 - off; // ox*s <= last
  hi = last < 0 ? 0 : std::min<std::int64_t>(ow, last / s + 1);
  if (lo > hi) lo = hi;
}

template <typename T>
void conv_forward(const ConvGeom &g, const T *in, const T *weight, const T *bias,
                  const std::vector<T> *mask, T *out) {
  const std::int64_t in_plane = g.h * g.w;
  const std::int64_t out_plane = g.oh * g.ow;
  const std::int64_t wstride = g.ib * g.kh * g.kw;
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t o = 0; o < g.co; ++o) {
      T *dst = out + (n * g.co + o) * out_plane;
      std::fill(dst, dst + out_plane, bias ? bias[o] : T{0});
      const std::int64_t grp = o / g.ob;
      for (std::int64_t ir = 0; ir < g.ib; ++ir) {
        const std::int64_t i = grp * g.ib + ir;
        if (mask && (*mask)[static_cast<std::size_t>(i)] == T{0}) continue;
        const T *src = in + (n * g.ci + i) * in_plane;
        const T *wk = weight + o * wstride + ir * g.kh * g.kw;
        for (int ky = 0; ky < g.kh; ++ky) {
          for (int kx = 0; kx < g.kw; ++kx) {
            const T wv = wk[ky * g.kw + kx];
            std::int64_t lo, hi;
            column_range(g.w, g.ow, g.sw, g.pw, kx, lo, hi);
            for (std::int64_t oy = 0; oy < g.oh; ++oy) {
              const std::int64_t iy = oy * g.sh - g.ph + ky;
              if (iy < 0 || iy >= g.h) continue;
              const T *row = src + iy * g.w + (kx - g.pw);
              T *orow = dst + oy * g.ow;
              if (g.sw == 1) {
                for (std::int64_t ox = lo; ox < hi; ++ox) orow[ox] += wv * row[ox];
              } else {
                for (std::int64_t ox = lo; ox < hi; ++ox) orow[ox] += wv * row[ox * g.sw];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T> bool all_zero(const T *p, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i)
    if (p[i] != T{0}) return false;
  return true;
}

// din (masked-input gradient) and dweight/dbias from dout.
template <typename T>
void conv_backward(const ConvGeom &g, const T *in, const T *weight, const std::vector<T> *mask,
                   const T *dout, T *din, T *dweight, T *dbias) {
  const std::int64_t in_plane = g.h * g.w;
  const std::int64_t out_plane = g.oh * g.ow;
  const std::int64_t wstride = g.ib * g.kh * g.kw;
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t o = 0; o < g.co; ++o) {
      const T *go = dout + (n * g.co + o) * out_plane;
      if (all_zero(go, out_plane)) continue;
      if (dbias) {
        T acc{0};
        for (std::int64_t p = 0; p < out_plane; ++p) acc += go[p];
        dbias[o] += acc;
      }
      const std::int64_t grp = o / g.ob;
      for (std::int64_t ir = 0; ir < g.ib; ++ir) {
        const std::int64_t i = grp * g.ib + ir;
        if (mask && (*mask)[static_cast<std::size_t>(i)] == T{0}) continue;
        const T *src = in + (n * g.ci + i) * in_plane;
        T *gi = din + (n * g.ci + i) * in_plane;
        const T *wk = weight + o * wstride + ir * g.kh * g.kw;
        T *dwk = dweight + o * wstride + ir * g.kh * g.kw;
        for (int ky = 0; ky < g.kh; ++ky) {
          for (int kx = 0; kx < g.kw; ++kx) {
            const T wv = wk[ky * g.kw + kx];
            T dw{0};
            std::int64_t lo, hi;
            column_range(g.w, g.ow, g.sw, g.pw, kx, lo, hi);
            for (std::int64_t oy = 0; oy < g.oh; ++oy) {
              const std::int64_t iy = oy * g.sh - g.ph + ky;
              if (iy < 0 || iy >= g.h) continue;
              const std::int64_t base = iy * g.w + (kx - g.pw);
              const T *grow = go + oy * g.ow;
              for (std::int64_t ox = lo; ox < hi; ++ox) {
                const std::int64_t ix = base + ox * g.sw;
                dw += src[ix] * grow[ox];
                gi[ix] += wv * grow[ox];
              }
            }
            dwk[ky * g.kw + kx] += dw;
          }
        }
      }
    }
  }
}

template <typename T> const Tensor<T> &param(const TensorMap<T> &params, const std::string &name) {
  auto it = params.find(name);
  if (it == params.end()) fail(ErrorCode::kMissingTensor, name);
  return it->second;
}

template <typename T> const Tensor<T> *optional_param(const TensorMap<T> &params, const std::string &name) {
  auto it = params.find(name);
  return it == params.end() ? nullptr : &it->second;
}

Dims runtime_dims(const Shape &s, std::int64_t batch) { return {batch, s.c, s.h, s.w}; }

} // namespace

template <typename T>
ForwardResult<T> forward(const CompGraph &graph, const TensorMap<T> &params,
                         const InputMasks<T> &masks, const Tensor<T> &batch,
                         std::span<const std::uint32_t> labels, Mode mode) {
  const auto inputs = graph.input_layer_indices();
  if (inputs.size() != 1)
    fail(ErrorCode::kInvalidArgument, "evaluation needs exactly one Input layer");
  const Shape &decl = graph.shape(inputs.front());
  if (batch.rank() != 4 || batch.dim(1) != decl.c || batch.dim(2) != decl.h ||
      batch.dim(3) != decl.w)
    fail(ErrorCode::kShapeMismatch, "batch: expected (N," + std::to_string(decl.c) + "," +
                                        std::to_string(decl.h) + "," + std::to_string(decl.w) +
                                        "), got " + dims_to_string(batch.dims()));
  const std::int64_t N = batch.dim(0);
  if (static_cast<std::int64_t>(labels.size()) != N)
    fail(ErrorCode::kShapeMismatch, "labels: expected " + std::to_string(N) + ", got " +
                                        std::to_string(labels.size()));
  const Shape &logits_shape = graph.shape(graph.output_index());
  if (logits_shape.h != 1 || logits_shape.w != 1)
    fail(ErrorCode::kShapeMismatch,
         "output: expected (n,classes,1,1), got " + logits_shape.to_string());
  const std::int64_t classes = logits_shape.c;
  for (auto y : labels)
    if (static_cast<std::int64_t>(y) >= classes)
      fail(ErrorCode::kInvalidArgument, "label " + std::to_string(y) + " >= classes " +
                                            std::to_string(classes));

  ForwardResult<T> result;
  Tape<T> &tape = result.tape;
  tape.mode = mode;
  tape.batch = N;
  tape.values.resize(graph.size());
  tape.masked_inputs.resize(graph.size());
  tape.masks.resize(graph.size());
  tape.bn_mean.resize(graph.size());
  tape.bn_var.resize(graph.size());
  tape.pool_argmax.resize(graph.size());
  tape.labels.assign(labels.begin(), labels.end());

  for (std::size_t k = 0; k < graph.size(); ++k) {
    const Layer &l = graph.layer(k);
    const auto &ins = graph.input_indices(k);
    const Shape &ys = graph.shape(k);
    Tensor<T> y(runtime_dims(ys, N));
    switch (l.kind) {
    case LayerKind::kInput:
      y = batch;
      break;
    case LayerKind::kConv:
    case LayerKind::kFC: {
      const Tensor<T> &x = tape.values[ins[0]];
      const std::vector<T> *mask = nullptr;
      if (k < masks.size() && !masks[k].empty()) {
        if (static_cast<std::int64_t>(masks[k].size()) != x.dim(1))
          fail(ErrorCode::kShapeMismatch, "mask of layer '" + l.id + "'");
        tape.masks[k] = masks[k];
        mask = &tape.masks[k];
        Tensor<T> xm = x;
        const std::int64_t c = x.dim(1);
        const std::int64_t plane = x.dim(2) * x.dim(3);
        for (std::int64_t n = 0; n < N; ++n)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const T m = (*mask)[static_cast<std::size_t>(ch)];
            T *p = xm.data() + (n * c + ch) * plane;
            for (std::int64_t q = 0; q < plane; ++q) p[q] *= m;
          }
        tape.masked_inputs[k] = std::move(xm);
      } else {
        tape.masked_inputs[k] = x;
      }
      const Tensor<T> &xin = tape.masked_inputs[k];
      const Tensor<T> &wt = param(params, l.id + ".weight");
      const Tensor<T> *b = optional_param(params, l.id + ".bias");
      if (l.kind == LayerKind::kConv) {
        conv_forward(conv_geom(graph, k, N), xin.data(), wt.data(), b ? b->data() : nullptr, mask,
                     y.data());
      } else {
        const std::int64_t ci = xin.dim(1);
        const std::int64_t co = ys.c;
        for (std::int64_t n = 0; n < N; ++n)
          for (std::int64_t o = 0; o < co; ++o) {
            T acc = b ? (*b)[static_cast<std::size_t>(o)] : T{0};
            const T *wr = wt.data() + o * ci;
            const T *xr = xin.data() + n * ci;
            for (std::int64_t i = 0; i < ci; ++i) acc += wr[i] * xr[i];
            y[static_cast<std::size_t>(n * co + o)] = acc;
          }
      }
      break;
    }
    case LayerKind::kBatchNorm: {
      const Tensor<T> &x = tape.values[ins[0]];
      const std::int64_t c = ys.c;
      const std::int64_t plane = ys.h * ys.w;
      const T eps = static_cast<T>(l.attrs.eps);
      const Tensor<T> &gamma = param(params, l.id + ".weight");
      const Tensor<T> &beta = param(params, l.id + ".bias");
      std::vector<T> mean(static_cast<std::size_t>(c)), var(static_cast<std::size_t>(c));
      if (mode == Mode::kTrain) {
        const T count = static_cast<T>(N * plane);
        for (std::int64_t ch = 0; ch < c; ++ch) {
          T s{0};
          for (std::int64_t n = 0; n < N; ++n) {
            const T *p = x.data() + (n * c + ch) * plane;
            for (std::int64_t q = 0; q < plane; ++q) s += p[q];
          }
          const T mu = s / count;
          T v{0};
          for (std::int64_t n = 0; n < N; ++n) {
            const T *p = x.data() + (n * c + ch) * plane;
            for (std::int64_t q = 0; q < plane; ++q) v += (p[q] - mu) * (p[q] - mu);
          }
          mean[static_cast<std::size_t>(ch)] = mu;
          var[static_cast<std::size_t>(ch)] = v / count;
        }
      } else {
        const Tensor<T> &rm = param(params, l.id + ".running_mean");
        const Tensor<T> &rv = param(params, l.id + ".running_var");
        mean.assign(rm.values().begin(), rm.values().end());
        var.assign(rv.values().begin(), rv.values().end());
      }
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const auto cs = static_cast<std::size_t>(ch);
        const T inv = T{1} / std::sqrt(var[cs] + eps);
        const T scale = gamma[cs] * inv;
        const T shift = beta[cs] - mean[cs] * scale;
        for (std::int64_t n = 0; n < N; ++n) {
          const T *p = x.data() + (n * c + ch) * plane;
          T *q = y.data() + (n * c + ch) * plane;
          for (std::int64_t i = 0; i < plane; ++i) q[i] = p[i] * scale + shift;
        }
      }
      tape.bn_mean[k] = std::move(mean);
      tape.bn_var[k] = std::move(var);
      break;
    }
    case LayerKind::kReLU: {
      const Tensor<T> &x = tape.values[ins[0]];
      for (std::int64_t i = 0; i < x.numel(); ++i)
        y[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] > T{0} ? x[static_cast<std::size_t>(i)] : T{0};
      break;
    }
    case LayerKind::kMaxPool:
    case LayerKind::kAvgPool: {
      const Tensor<T> &x = tape.values[ins[0]];
      const Shape &xs = graph.shape(ins[0]);
      const auto &a = l.attrs;
      const bool is_max = l.kind == LayerKind::kMaxPool;
      std::vector<std::int32_t> argmax;
      if (is_max) argmax.resize(static_cast<std::size_t>(y.numel()));
      const T inv_area = T{1} / static_cast<T>(a.kernel_h * a.kernel_w);
      for (std::int64_t nc = 0; nc < N * ys.c; ++nc) {
        const T *src = x.data() + nc * xs.h * xs.w;
        for (std::int64_t oy = 0; oy < ys.h; ++oy)
          for (std::int64_t ox = 0; ox < ys.w; ++ox) {
            T best = -std::numeric_limits<T>::infinity();
            std::int32_t best_at = -1;
            T sum{0};
            for (int ky = 0; ky < a.kernel_h; ++ky) {
              const std::int64_t iy = oy * a.stride_h - a.pad_h + ky;
              if (iy < 0 || iy >= xs.h) continue;
              for (int kx = 0; kx < a.kernel_w; ++kx) {
                const std::int64_t ix = ox * a.stride_w - a.pad_w + kx;
                if (ix < 0 || ix >= xs.w) continue;
                const T v = src[iy * xs.w + ix];
                sum += v;
                if (best_at < 0 || v > best) {
                  best = v;
                  best_at = static_cast<std::int32_t>(iy * xs.w + ix);
                }
              }
            }
            const std::size_t at = static_cast<std::size_t>((nc * ys.h + oy) * ys.w + ox);
            if (is_max) {
              y[at] = best;
              argmax[at] = best_at;
            } else {
              y[at] = sum * inv_area;
            }
          }
      }
      tape.pool_argmax[k] = std::move(argmax);
      break;
    }
    case LayerKind::kGlobalAvgPool: {
      const Tensor<T> &x = tape.values[ins[0]];
      const Shape &xs = graph.shape(ins[0]);
      const std::int64_t plane = xs.h * xs.w;
      for (std::int64_t nc = 0; nc < N * ys.c; ++nc) {
        T s{0};
        const T *p = x.data() + nc * plane;
        for (std::int64_t q = 0; q < plane; ++q) s += p[q];
        y[static_cast<std::size_t>(nc)] = s / static_cast<T>(plane);
      }
      break;
    }
    case LayerKind::kAdd: {
      y = tape.values[ins[0]];
      for (std::size_t j = 1; j < ins.size(); ++j) {
        const Tensor<T> &x = tape.values[ins[j]];
        for (std::int64_t i = 0; i < y.numel(); ++i) y[static_cast<std::size_t>(i)] += x[static_cast<std::size_t>(i)];
      }
      break;
    }
    case LayerKind::kConcat: {
      const std::int64_t plane = ys.h * ys.w;
      std::int64_t offset = 0;
      for (std::size_t in : ins) {
        const Tensor<T> &x = tape.values[in];
        const std::int64_t c = graph.shape(in).c;
        for (std::int64_t n = 0; n < N; ++n)
          std::copy(x.data() + n * c * plane, x.data() + (n + 1) * c * plane,
                    y.data() + (n * ys.c + offset) * plane);
        offset += c;
      }
      break;
    }
    case LayerKind::kFlatten:
    case LayerKind::kOutput:
      y = Tensor<T>(runtime_dims(ys, N), tape.values[ins[0]].values());
      break;
    }
    tape.values[k] = std::move(y);
  }

  // Softmax cross-entropy over the logits.
  const Tensor<T> &logits = tape.values[graph.output_index()];
  tape.probs = Tensor<T>({N, classes});
  tape.sample_losses.resize(static_cast<std::size_t>(N));
  double total = 0.0;
  for (std::int64_t n = 0; n < N; ++n) {
    const T *z = logits.data() + n * classes;
    T zmax = *std::max_element(z, z + classes);
    T s{0};
    for (std::int64_t c = 0; c < classes; ++c) s += std::exp(z[c] - zmax);
    const T log_s = std::log(s);
    for (std::int64_t c = 0; c < classes; ++c)
      tape.probs[static_cast<std::size_t>(n * classes + c)] = std::exp(z[c] - zmax - log_s);
    const T ln = -(z[labels[static_cast<std::size_t>(n)]] - zmax - log_s);
    tape.sample_losses[static_cast<std::size_t>(n)] = ln;
    total += static_cast<double>(ln);
  }
  result.loss = total / static_cast<double>(N);
  if (!std::isfinite(result.loss))
    fail(ErrorCode::kNonFiniteLoss, "loss is " + std::to_string(result.loss));
  return result;
}

template <typename T>
Gradients<T> backward(const CompGraph &graph, const TensorMap<T> &params, const Tape<T> &tape) {
  const std::int64_t N = tape.batch;
  Gradients<T> grads;
  grads.act_grads.resize(graph.size());
  std::vector<Tensor<T>> g(graph.size());
  auto grad_of = [&](std::size_t k) -> Tensor<T> & {
    if (g[k].empty()) g[k] = Tensor<T>(runtime_dims(graph.shape(k), N));
    return g[k];
  };
  auto param_grad = [&](const std::string &name, const Dims &dims) -> Tensor<T> & {
    auto it = grads.params.find(name);
    if (it == grads.params.end()) it = grads.params.emplace(name, Tensor<T>(dims)).first;
    return it->second;
  };

  {
    const std::size_t out = graph.output_index();
    Tensor<T> &go = grad_of(out);
    const std::int64_t classes = tape.probs.dim(1);
    const T inv_n = T{1} / static_cast<T>(N);
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < classes; ++c) {
        const auto at = static_cast<std::size_t>(n * classes + c);
        T d = tape.probs[at];
        if (c == static_cast<std::int64_t>(tape.labels[static_cast<std::size_t>(n)])) d -= T{1};
        go[at] = d * inv_n;
      }
  }

  for (std::size_t kk = graph.size(); kk-- > 0;) {
    const std::size_t k = kk;
    const Layer &l = graph.layer(k);
    if (g[k].empty()) continue; // no path to the loss
    const Tensor<T> &gy = g[k];
    const auto &ins = graph.input_indices(k);
    const Shape &ys = graph.shape(k);
    switch (l.kind) {
    case LayerKind::kInput:
      break;
    case LayerKind::kConv:
    case LayerKind::kFC: {
      const Tensor<T> &xin = tape.masked_inputs[k];
      const std::vector<T> *mask = tape.masks[k].empty() ? nullptr : &tape.masks[k];
      const Tensor<T> &wt = param(params, l.id + ".weight");
      Tensor<T> &dw = param_grad(l.id + ".weight", wt.dims());
      const Tensor<T> *b = optional_param(params, l.id + ".bias");
      T *db = b ? param_grad(l.id + ".bias", b->dims()).data() : nullptr;
      Tensor<T> dxm(xin.dims());
      if (l.kind == LayerKind::kConv) {
        conv_backward(conv_geom(graph, k, N), xin.data(), wt.data(), mask, gy.data(), dxm.data(),
                      dw.data(), db);
      } else {
        const std::int64_t ci = xin.dim(1);
        const std::int64_t co = ys.c;
        for (std::int64_t n = 0; n < N; ++n) {
          const T *go = gy.data() + n * co;
          const T *xr = xin.data() + n * ci;
          T *dx = dxm.data() + n * ci;
          for (std::int64_t o = 0; o < co; ++o) {
            const T d = go[o];
            if (d == T{0}) continue;
            if (db) db[o] += d;
            const T *wr = wt.data() + o * ci;
            T *dwr = dw.data() + o * ci;
            for (std::int64_t i = 0; i < ci; ++i) {
              dwr[i] += d * xr[i];
              dx[i] += d * wr[i];
            }
          }
        }
        if (mask)
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t i = 0; i < ci; ++i)
              if ((*mask)[static_cast<std::size_t>(i)] == T{0}) dxm[static_cast<std::size_t>(n * ci + i)] = T{0};
      }
      Tensor<T> &gx = grad_of(ins[0]);
      const std::int64_t c = xin.dim(1);
      const std::int64_t plane = xin.dim(2) * xin.dim(3);
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const T m = mask ? (*mask)[static_cast<std::size_t>(ch)] : T{1};
          if (m == T{0}) continue;
          const T *src = dxm.data() + (n * c + ch) * plane;
          T *dst = gx.data() + (n * c + ch) * plane;
          for (std::int64_t q = 0; q < plane; ++q) dst[q] += src[q] * m;
        }
      Tensor<T> per_sample = std::move(dxm);
      const T scale = static_cast<T>(N);
      for (auto &v : per_sample.values()) v *= scale;
      grads.act_grads[k] = std::move(per_sample);
      break;
    }
    case LayerKind::kBatchNorm: {
      const Tensor<T> &x = tape.values[ins[0]];
      const std::int64_t c = ys.c;
      const std::int64_t plane = ys.h * ys.w;
      const T eps = static_cast<T>(l.attrs.eps);
      const Tensor<T> &gamma = param(params, l.id + ".weight");
      Tensor<T> &dgamma = param_grad(l.id + ".weight", gamma.dims());
      Tensor<T> &dbeta = param_grad(l.id + ".bias", gamma.dims());
      Tensor<T> &gx = grad_of(ins[0]);
      const T count = static_cast<T>(N * plane);
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const auto cs = static_cast<std::size_t>(ch);
        const T mu = tape.bn_mean[k][cs];
        const T inv = T{1} / std::sqrt(tape.bn_var[k][cs] + eps);
        T sum_dy{0}, sum_dy_xhat{0};
        for (std::int64_t n = 0; n < N; ++n) {
          const T *p = x.data() + (n * c + ch) * plane;
          const T *d = gy.data() + (n * c + ch) * plane;
          for (std::int64_t q = 0; q < plane; ++q) {
            sum_dy += d[q];
            sum_dy_xhat += d[q] * (p[q] - mu) * inv;
          }
        }
        dgamma[cs] += sum_dy_xhat;
        dbeta[cs] += sum_dy;
        const T gm = gamma[cs];
        for (std::int64_t n = 0; n < N; ++n) {
          const T *p = x.data() + (n * c + ch) * plane;
          const T *d = gy.data() + (n * c + ch) * plane;
          T *o = gx.data() + (n * c + ch) * plane;
          if (tape.mode == Mode::kTrain) {
            for (std::int64_t q = 0; q < plane; ++q) {
              const T xhat = (p[q] - mu) * inv;
              o[q] += gm * inv * (d[q] - sum_dy / count - xhat * sum_dy_xhat / count);
            }
          } else {
            for (std::int64_t q = 0; q < plane; ++q) o[q] += gm * inv * d[q];
          }
        }
      }
      break;
    }
    case LayerKind::kReLU: {
      const Tensor<T> &x = tape.values[ins[0]];
      Tensor<T> &gx = grad_of(ins[0]);
      for (std::int64_t i = 0; i < x.numel(); ++i) {
        const auto at = static_cast<std::size_t>(i);
        if (x[at] > T{0}) gx[at] += gy[at];
      }
      break;
    }
    case LayerKind::kMaxPool: {
      const Shape &xs = graph.shape(ins[0]);
      Tensor<T> &gx = grad_of(ins[0]);
      const auto &argmax = tape.pool_argmax[k];
      const std::int64_t out_plane = ys.h * ys.w;
      const std::int64_t in_plane = xs.h * xs.w;
      for (std::int64_t nc = 0; nc < N * ys.c; ++nc)
        for (std::int64_t p = 0; p < out_plane; ++p) {
          const auto at = static_cast<std::size_t>(nc * out_plane + p);
          if (argmax[at] >= 0) gx[static_cast<std::size_t>(nc * in_plane + argmax[at])] += gy[at];
        }
      break;
    }
    case LayerKind::kAvgPool: {
      const Shape &xs = graph.shape(ins[0]);
      const auto &a = l.attrs;
      Tensor<T> &gx = grad_of(ins[0]);
      const T inv_area = T{1} / static_cast<T>(a.kernel_h * a.kernel_w);
      for (std::int64_t nc = 0; nc < N * ys.c; ++nc) {
        T *dst = gx.data() + nc * xs.h * xs.w;
        for (std::int64_t oy = 0; oy < ys.h; ++oy)
          for (std::int64_t ox = 0; ox < ys.w; ++ox) {
            const T d = gy[static_cast<std::size_t>((nc * ys.h + oy) * ys.w + ox)] * inv_area;
            for (int ky = 0; ky < a.kernel_h; ++ky) {
              const std::int64_t iy = oy * a.stride_h - a.pad_h + ky;
              if (iy < 0 || iy >= xs.h) continue;
              for (int kx = 0; kx < a.kernel_w; ++kx) {
                const std::int64_t ix = ox * a.stride_w - a.pad_w + kx;
                if (ix < 0 || ix >= xs.w) continue;
                dst[iy * xs.w + ix] += d;
              }
            }
          }
      }
      break;
    }
    case LayerKind::kGlobalAvgPool: {
      const Shape &xs = graph.shape(ins[0]);
      const std::int64_t plane = xs.h * xs.w;
      Tensor<T> &gx = grad_of(ins[0]);
      const T inv = T{1} / static_cast<T>(plane);
      for (std::int64_t nc = 0; nc < N * ys.c; ++nc) {
        const T d = gy[static_cast<std::size_t>(nc)] * inv;
        T *dst = gx.data() + nc * plane;
        for (std::int64_t q = 0; q < plane; ++q) dst[q] += d;
      }
      break;
    }
    case LayerKind::kAdd:
      for (std::size_t in : ins) {
        Tensor<T> &gx = grad_of(in);
        for (std::int64_t i = 0; i < gy.numel(); ++i) gx[static_cast<std::size_t>(i)] += gy[static_cast<std::size_t>(i)];
      }
      break;
    case LayerKind::kConcat: {
      const std::int64_t plane = ys.h * ys.w;
      std::int64_t offset = 0;
      for (std::size_t in : ins) {
        const std::int64_t c = graph.shape(in).c;
        Tensor<T> &gx = grad_of(in);
        for (std::int64_t n = 0; n < N; ++n) {
          const T *src = gy.data() + (n * ys.c + offset) * plane;
          T *dst = gx.data() + n * c * plane;
          for (std::int64_t q = 0; q < c * plane; ++q) dst[q] += src[q];
        }
        offset += c;
      }
      break;
    }
    case LayerKind::kFlatten:
    case LayerKind::kOutput: {
      Tensor<T> &gx = grad_of(ins[0]);
      for (std::int64_t i = 0; i < gy.numel(); ++i) gx[static_cast<std::size_t>(i)] += gy[static_cast<std::size_t>(i)];
      break;
    }
    }
    g[k] = Tensor<T>(); // release
  }

  // Parameters without any gradient path still get a (zero) entry.
  for (std::size_t k = 0; k < graph.size(); ++k) {
    const Layer &l = graph.layer(k);
    if (!l.is_prunable() && l.kind != LayerKind::kBatchNorm) continue;
    for (const char *suffix : {".weight", ".bias"}) {
      const std::string name = l.id + suffix;
      if (const Tensor<T> *p = optional_param(params, name)) param_grad(name, p->dims());
    }
  }
  return grads;
}

void update_running_stats(const CompGraph &graph, WeightStore &weights, const Tape<float> &tape) {
  if (tape.mode != Mode::kTrain) return;
  for (std::size_t k = 0; k < graph.size(); ++k) {
    const Layer &l = graph.layer(k);
    if (l.kind != LayerKind::kBatchNorm) continue;
    const Shape &s = graph.shape(k);
    const double count = static_cast<double>(tape.batch * s.h * s.w);
    const double unbias = count > 1 ? count / (count - 1) : 1.0;
    const double mom = l.attrs.momentum;
    auto &rm = weights.at(l.id + ".running_mean");
    auto &rv = weights.at(l.id + ".running_var");
    for (std::int64_t c = 0; c < s.c; ++c) {
      const auto cs = static_cast<std::size_t>(c);
      rm[cs] = static_cast<float>((1.0 - mom) * rm[cs] + mom * tape.bn_mean[k][cs]);
      rv[cs] = static_cast<float>((1.0 - mom) * rv[cs] + mom * tape.bn_var[k][cs] * unbias);
    }
  }
}

void sgd_step(WeightStore &weights, const TensorMap<float> &grads, const SgdConfig &config,
              SgdState &state) {
  if (config.lr < 0 || config.momentum < 0 || config.momentum >= 1 || config.weight_decay < 0)
    fail(ErrorCode::kInvalidArgument, "sgd: need lr >= 0, 0 <= momentum < 1, weight_decay >= 0");
  for (const auto &[name, grad] : grads) {
    if (!is_trainable_name(name)) continue;
    Tensor<float> &w = weights.at(name);
    if (w.dims() != grad.dims())
      fail(ErrorCode::kShapeMismatch, "gradient of '" + name + "'");
    auto it = state.velocity.find(name);
    if (it == state.velocity.end() || it->second.dims() != w.dims())
      it = state.velocity.insert_or_assign(name, Tensor<float>(w.dims())).first;
    Tensor<float> &v = it->second;
    for (std::int64_t i = 0; i < w.numel(); ++i) {
      const auto at = static_cast<std::size_t>(i);
      const double d = static_cast<double>(grad[at]) + config.weight_decay * w[at];
      const double vel = config.momentum * v[at] + d;
      v[at] = static_cast<float>(vel);
      w[at] = static_cast<float>(w[at] - config.lr * vel);
    }
  }
}

template ForwardResult<float> forward(const CompGraph &, const TensorMap<float> &,
                                      const InputMasks<float> &, const Tensor<float> &,
                                      std::span<const std::uint32_t>, Mode);
template ForwardResult<double> forward(const CompGraph &, const TensorMap<double> &,
                                       const InputMasks<double> &, const Tensor<double> &,
                                       std::span<const std::uint32_t>, Mode);
template ForwardResult<long double> forward(const CompGraph &, const TensorMap<long double> &,
                                            const InputMasks<long double> &, const Tensor<long double> &,
                                            std::span<const std::uint32_t>, Mode);
template Gradients<float> backward(const CompGraph &, const TensorMap<float> &, const Tape<float> &);
template Gradients<double> backward(const CompGraph &, const TensorMap<double> &,
                                    const Tape<double> &);

} // namespace chanprune
