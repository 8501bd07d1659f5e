#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "rldarts/graph.hpp"

// Differentiable primitives. Free functions append a node to a Graph and
// return its id. Forward values are computed eagerly; each function installs
// the exact reverse-mode rule for its output.

namespace rldarts {

enum class Act { Relu, TanhAct, Identity };
enum class PoolKind { Max, Avg };

namespace detail {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapM = Eigen::Map<MatRM<S>>;
template <typename S>
using MapCM = Eigen::Map<const MatRM<S>>;

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

struct Conv2dDims {
  int n, h, w, cin;
  int kh, kw, cout;
  int stride, dil;
  int ho, wo;
  int pad_t, pad_l;
  long long rows() const { return static_cast<long long>(n) * ho * wo; }
  int patch() const { return kh * kw * cin; }
};

inline Conv2dDims conv2d_dims(const std::vector<int>& xs, const std::vector<int>& ks,
                              int stride, int dil) {
  if (xs.size() != 4) throw ConfigError("conv2d: input must be N x H x W x C, got " + shape_str(xs));
  if (ks.size() != 4) throw ConfigError("conv2d: kernel must be kh x kw x Cin x Cout, got " + shape_str(ks));
  if (stride != 1 && stride != 2) throw ConfigError("conv2d: stride must be 1 or 2");
  if (dil != 1 && dil != 2) throw ConfigError("conv2d: dilation must be 1 or 2");
  if (ks[2] != xs[3])
    throw ConfigError("conv2d: kernel Cin " + std::to_string(ks[2]) +
                      " does not match input channels " + std::to_string(xs[3]));
  Conv2dDims d;
  d.n = xs[0]; d.h = xs[1]; d.w = xs[2]; d.cin = xs[3];
  d.kh = ks[0]; d.kw = ks[1]; d.cout = ks[3];
  d.stride = stride; d.dil = dil;
  d.ho = ceil_div(d.h, stride);
  d.wo = ceil_div(d.w, stride);
  const int eff_h = (d.kh - 1) * dil + 1;
  const int eff_w = (d.kw - 1) * dil + 1;
  d.pad_t = std::max(0, (d.ho - 1) * stride + eff_h - d.h) / 2;
  d.pad_l = std::max(0, (d.wo - 1) * stride + eff_w - d.w) / 2;
  return d;
}

// Gather SAME-padded patches for output rows [r0, r0+rows) into a
// rows x patch row-major buffer. Row r encodes (n, ho, wo). For dilation 1
// the kernel-row taps are contiguous in both source and destination, so a
// whole (a, b0..b1) run is one copy.
template <typename S>
void im2col(const S* x, const Conv2dDims& d, long long r0, long long rows, S* buf) {
  const int patch = d.patch();
  for (long long r = 0; r < rows; ++r) {
    const long long g = r0 + r;
    const int wo = static_cast<int>(g % d.wo);
    const int ho = static_cast<int>((g / d.wo) % d.ho);
    const int n = static_cast<int>(g / (static_cast<long long>(d.wo) * d.ho));
    S* dst = buf + r * patch;
    const int hi0 = ho * d.stride - d.pad_t;
    const int wi0 = wo * d.stride - d.pad_l;
    if (d.dil == 1) {
      const int b0 = std::max(0, -wi0);
      const int b1 = std::min(d.kw, d.w - wi0);
      for (int a = 0; a < d.kh; ++a) {
        const int hi = hi0 + a;
        S* row = dst + a * d.kw * d.cin;
        if (hi < 0 || hi >= d.h || b0 >= b1) {
          std::fill(row, row + d.kw * d.cin, static_cast<S>(0));
          continue;
        }
        if (b0 > 0) std::fill(row, row + b0 * d.cin, static_cast<S>(0));
        const S* src = x + ((static_cast<long long>(n) * d.h + hi) * d.w + (wi0 + b0)) * d.cin;
        std::copy(src, src + (b1 - b0) * d.cin, row + b0 * d.cin);
        if (b1 < d.kw) std::fill(row + b1 * d.cin, row + d.kw * d.cin, static_cast<S>(0));
      }
    } else {
      for (int a = 0; a < d.kh; ++a) {
        const int hi = hi0 + a * d.dil;
        for (int b = 0; b < d.kw; ++b) {
          const int wi = wi0 + b * d.dil;
          S* cell = dst + (a * d.kw + b) * d.cin;
          if (hi >= 0 && hi < d.h && wi >= 0 && wi < d.w) {
            const S* src = x + ((static_cast<long long>(n) * d.h + hi) * d.w + wi) * d.cin;
            std::copy(src, src + d.cin, cell);
          } else {
            std::fill(cell, cell + d.cin, static_cast<S>(0));
          }
        }
      }
    }
  }
}

// Scatter-add of patch gradients back to the input, inverse of im2col.
template <typename S>
void col2im_add(const S* buf, const Conv2dDims& d, long long r0, long long rows, S* gx) {
  const int patch = d.patch();
  for (long long r = 0; r < rows; ++r) {
    const long long g = r0 + r;
    const int wo = static_cast<int>(g % d.wo);
    const int ho = static_cast<int>((g / d.wo) % d.ho);
    const int n = static_cast<int>(g / (static_cast<long long>(d.wo) * d.ho));
    const S* src0 = buf + r * patch;
    const int hi0 = ho * d.stride - d.pad_t;
    const int wi0 = wo * d.stride - d.pad_l;
    if (d.dil == 1) {
      const int b0 = std::max(0, -wi0);
      const int b1 = std::min(d.kw, d.w - wi0);
      if (b0 >= b1) continue;
      const int run = (b1 - b0) * d.cin;
      for (int a = 0; a < d.kh; ++a) {
        const int hi = hi0 + a;
        if (hi < 0 || hi >= d.h) continue;
        const S* src = src0 + (a * d.kw + b0) * d.cin;
        S* dst = gx + ((static_cast<long long>(n) * d.h + hi) * d.w + (wi0 + b0)) * d.cin;
        Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(dst, run) +=
            Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(src, run);
      }
    } else {
      for (int a = 0; a < d.kh; ++a) {
        const int hi = hi0 + a * d.dil;
        if (hi < 0 || hi >= d.h) continue;
        for (int b = 0; b < d.kw; ++b) {
          const int wi = wi0 + b * d.dil;
          if (wi < 0 || wi >= d.w) continue;
          const S* src = src0 + (a * d.kw + b) * d.cin;
          S* dst = gx + ((static_cast<long long>(n) * d.h + hi) * d.w + wi) * d.cin;
          for (int c = 0; c < d.cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

inline long long conv_chunk_rows(int patch, long long rows) {
  const long long budget = 1LL << 22;  // floats per im2col buffer
  return std::max<long long>(1, std::min(rows, budget / std::max(1, patch)));
}

struct Pool2dDims {
  int n, h, w, c;
  int stride;
  int ho, wo;
  int pad_t, pad_l;
};

inline Pool2dDims pool2d_dims(const std::vector<int>& xs, int stride) {
  if (xs.size() != 4) throw ConfigError("pool2d: input must be N x H x W x C, got " + shape_str(xs));
  if (stride != 1 && stride != 2) throw ConfigError("pool2d: stride must be 1 or 2");
  Pool2dDims d;
  d.n = xs[0]; d.h = xs[1]; d.w = xs[2]; d.c = xs[3];
  d.stride = stride;
  d.ho = ceil_div(d.h, stride);
  d.wo = ceil_div(d.w, stride);
  d.pad_t = std::max(0, (d.ho - 1) * stride + 3 - d.h) / 2;
  d.pad_l = std::max(0, (d.wo - 1) * stride + 3 - d.w) / 2;
  return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and reduction primitives

template <typename S>
int add(Graph<S>& g, int a, int b) {
  if (!same_shape(g.val(a), g.val(b)))
    throw ConfigError("add: shape mismatch " + shape_str(g.val(a).shape) + " vs " +
                      shape_str(g.val(b).shape));
  Tensor<S> out(g.val(a).shape, g.val(a).data + g.val(b).data);
  return g.make(std::move(out), {a, b}, [](Graph<S>& gr, int id) {
    const auto& go = gr.grad_ref(id).data;
    gr.accum(gr.in(id, 0), go);
    gr.accum(gr.in(id, 1), go);
  });
}

template <typename S>
int sub(Graph<S>& g, int a, int b) {
  if (!same_shape(g.val(a), g.val(b))) throw ConfigError("sub: shape mismatch");
  Tensor<S> out(g.val(a).shape, g.val(a).data - g.val(b).data);
  return g.make(std::move(out), {a, b}, [](Graph<S>& gr, int id) {
    const auto& go = gr.grad_ref(id).data;
    gr.accum(gr.in(id, 0), go);
    gr.accum(gr.in(id, 1), -go);
  });
}

template <typename S>
int mul(Graph<S>& g, int a, int b) {
  if (!same_shape(g.val(a), g.val(b))) throw ConfigError("mul: shape mismatch");
  Tensor<S> out(g.val(a).shape, g.val(a).data * g.val(b).data);
  return g.make(std::move(out), {a, b}, [](Graph<S>& gr, int id) {
    const auto& go = gr.grad_ref(id).data;
    gr.accum(gr.in(id, 0), go * gr.val(gr.in(id, 1)).data);
    gr.accum(gr.in(id, 1), go * gr.val(gr.in(id, 0)).data);
  });
}

template <typename S>
int scale(Graph<S>& g, int x, S c) {
  Tensor<S> out(g.val(x).shape, g.val(x).data * c);
  return g.make(std::move(out), {x}, [c](Graph<S>& gr, int id) {
    gr.accum(gr.in(id, 0), gr.grad_ref(id).data * c);
  });
}

template <typename S>
int mul_const(Graph<S>& g, int x, Tensor<S> c) {
  if (!same_shape(g.val(x), c)) throw ConfigError("mul_const: shape mismatch");
  Tensor<S> out(c.shape, g.val(x).data * c.data);
  return g.make(std::move(out), {x}, [c = std::move(c)](Graph<S>& gr, int id) {
    gr.accum(gr.in(id, 0), gr.grad_ref(id).data * c.data);
  });
}

template <typename S>
int add_n(Graph<S>& g, const std::vector<int>& xs) {
  if (xs.empty()) throw UsageError("add_n: empty input list");
  Tensor<S> out(g.val(xs[0]).shape);
  for (int x : xs) {
    if (!same_shape(g.val(x), out)) throw ConfigError("add_n: shape mismatch");
    out.data += g.val(x).data;
  }
  return g.make(std::move(out), xs, [](Graph<S>& gr, int id) {
    const auto& go = gr.grad_ref(id).data;
    for (int k = 0; k < gr.num_inputs(id); ++k) gr.accum(gr.in(id, k), go);
  });
}

// out = sum_k s_k * x_k with scalar nodes s_k; the mixed-edge workhorse
template <typename S>
int weighted_sum(Graph<S>& g, const std::vector<std::pair<int, int>>& terms) {
  if (terms.empty()) throw UsageError("weighted_sum: empty term list");
  Tensor<S> out(g.val(terms[0].second).shape);
  std::vector<int> ins;
  ins.reserve(terms.size() * 2);
  for (auto [s, x] : terms) {
    if (g.val(s).size() != 1) throw UsageError("weighted_sum: weight node must be scalar");
    if (!same_shape(g.val(x), out)) throw ConfigError("weighted_sum: shape mismatch");
    out.data += g.val(s).data[0] * g.val(x).data;
    ins.push_back(s);
    ins.push_back(x);
  }
  return g.make(std::move(out), std::move(ins), [](Graph<S>& gr, int id) {
    const auto& go = gr.grad_ref(id).data;
    for (int k = 0; k < gr.num_inputs(id); k += 2) {
      const int s = gr.in(id, k), x = gr.in(id, k + 1);
      gr.accum(x, go * gr.val(s).data[0]);
      if (gr.needs_grad(s)) {
        Eigen::Array<S, 1, 1> ds;
        ds[0] = (go * gr.val(x).data).sum();
        gr.accum(s, ds);
      }
    }
  });
}

template <typename S>
int sum_all(Graph<S>& g, int x) {
  Tensor<S> out = Tensor<S>::scalar(g.val(x).data.sum());
  return g.make(std::move(out), {x}, [](Graph<S>& gr, int id) {
    const S go = gr.grad_ref(id).data[0];
    const auto& xv = gr.val(gr.in(id, 0)).data;
    gr.accum(gr.in(id, 0), Tensor<S>::full({static_cast<int>(xv.size())}, go).data);
  });
}

template <typename S>
int mean_all(Graph<S>& g, int x) {
  const S inv = static_cast<S>(1) / static_cast<S>(g.val(x).size());
  Tensor<S> out = Tensor<S>::scalar(g.val(x).data.sum() * inv);
  return g.make(std::move(out), {x}, [inv](Graph<S>& gr, int id) {
    const S go = gr.grad_ref(id).data[0] * inv;
    const auto& xv = gr.val(gr.in(id, 0)).data;
    gr.accum(gr.in(id, 0), Tensor<S>::full({static_cast<int>(xv.size())}, go).data);
  });
}

template <typename S>
int exp_(Graph<S>& g, int x) {
  Tensor<S> out(g.val(x).shape, g.val(x).data.exp());
  return g.make(std::move(out), {x}, [](Graph<S>& gr, int id) {
    gr.accum(gr.in(id, 0), gr.grad_ref(id).data * gr.val(id).data);
  });
}

// gradient passes only strictly inside the band; exactly at a bound it is 0
template <typename S>
int clip(Graph<S>& g, int x, S lo, S hi) {
  Tensor<S> out(g.val(x).shape, g.val(x).data.max(lo).min(hi));
  return g.make(std::move(out), {x}, [lo, hi](Graph<S>& gr, int id) {
    const auto& xv = gr.val(gr.in(id, 0)).data;
    const auto mask = (xv > lo && xv < hi).template cast<S>();
    gr.accum(gr.in(id, 0), gr.grad_ref(id).data * mask);
  });
}

// elementwise min; ties route the gradient to the first argument
template <typename S>
int min_elem(Graph<S>& g, int a, int b) {
  if (!same_shape(g.val(a), g.val(b))) throw ConfigError("min_elem: shape mismatch");
  Tensor<S> out(g.val(a).shape, g.val(a).data.min(g.val(b).data));
  return g.make(std::move(out), {a, b}, [](Graph<S>& gr, int id) {
    const auto& av = gr.val(gr.in(id, 0)).data;
    const auto& bv = gr.val(gr.in(id, 1)).data;
    const auto& go = gr.grad_ref(id).data;
    const auto first = (av <= bv).template cast<S>();
    gr.accum(gr.in(id, 0), go * first);
    gr.accum(gr.in(id, 1), go * (static_cast<S>(1) - first));
  });
}

// elementwise Huber loss against a fixed target
template <typename S>
int huber_to_target(Graph<S>& g, int x, Tensor<S> target, S delta = static_cast<S>(1)) {
  if (!same_shape(g.val(x), target)) throw ConfigError("huber_to_target: shape mismatch");
  auto e = (g.val(x).data - target.data).eval();
  auto quad = static_cast<S>(0.5) * e * e;
  auto lin = delta * (e.abs() - static_cast<S>(0.5) * delta);
  Tensor<S> out(target.shape, (e.abs() <= delta).select(quad, lin));
  return g.make(std::move(out), {x}, [t = std::move(target), delta](Graph<S>& gr, int id) {
    auto e = (gr.val(gr.in(id, 0)).data - t.data).eval();
    gr.accum(gr.in(id, 0), gr.grad_ref(id).data * e.max(-delta).min(delta));
  });
}

template <typename S>
int activation(Graph<S>& g, int x, Act kind) {
  const auto& xv = g.val(x).data;
  Tensor<S> out(g.val(x).shape);
  switch (kind) {
    case Act::Relu: out.data = xv.max(static_cast<S>(0)); break;
    case Act::TanhAct: out.data = xv.tanh(); break;
    case Act::Identity: out.data = xv; break;
  }
  return g.make(std::move(out), {x}, [kind](Graph<S>& gr, int id) {
    const auto& go = gr.grad_ref(id).data;
    const auto& xv = gr.val(gr.in(id, 0)).data;
    switch (kind) {
      case Act::Relu:
        // relu'(0) is defined as 0
        gr.accum(gr.in(id, 0), go * (xv > static_cast<S>(0)).template cast<S>());
        break;
      case Act::TanhAct: {
        const auto& yv = gr.val(id).data;
        gr.accum(gr.in(id, 0), go * (static_cast<S>(1) - yv * yv));
        break;
      }
      case Act::Identity: gr.accum(gr.in(id, 0), go); break;
    }
  });
}

// ---------------------------------------------------------------------------
// shape primitives

template <typename S>
int reshape(Graph<S>& g, int x, std::vector<int> shape) {
  if (numel(shape) != g.val(x).size())
    throw ConfigError("reshape: element count mismatch for " + shape_str(shape));
  Tensor<S> out(std::move(shape), g.val(x).data);
  return g.make(std::move(out), {x}, [](Graph<S>& gr, int id) {
    gr.accum(gr.in(id, 0), gr.grad_ref(id).data);
  });
}

// spatial subsampling x[:, ::2, ::2, :]; the stride-2 identity for Skip edges
template <typename S>
int subsample2(Graph<S>& g, int x) {
  const auto& xs = g.val(x).shape;
  if (xs.size() != 4) throw ConfigError("subsample2: input must be N x H x W x C");
  const int n = xs[0], h = xs[1], w = xs[2], c = xs[3];
  const int ho = detail::ceil_div(h, 2), wo = detail::ceil_div(w, 2);
  Tensor<S> out({n, ho, wo, c});
  const S* src = g.val(x).data.data();
  S* dst = out.data.data();
  for (int in = 0; in < n; ++in)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        const S* s = src + ((static_cast<long long>(in) * h + 2 * i) * w + 2 * j) * c;
        S* d = dst + ((static_cast<long long>(in) * ho + i) * wo + j) * c;
        std::copy(s, s + c, d);
      }
  return g.make(std::move(out), {x}, [n, h, w, c, ho, wo](Graph<S>& gr, int id) {
    if (!gr.needs_grad(gr.in(id, 0))) return;
    Tensor<S> gx({n, h, w, c});
    const S* go = gr.grad_ref(id).data.data();
    S* dst = gx.data.data();
    for (int in = 0; in < n; ++in)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          const S* s = go + ((static_cast<long long>(in) * ho + i) * wo + j) * c;
          S* d = dst + ((static_cast<long long>(in) * h + 2 * i) * w + 2 * j) * c;
          for (int k = 0; k < c; ++k) d[k] += s[k];
        }
    gr.accum(gr.in(id, 0), gx.data);
  });
}

template <typename S>
int concat_channels(Graph<S>& g, const std::vector<int>& xs) {
  if (xs.empty()) throw UsageError("concat_channels: empty input list");
  const auto& s0 = g.val(xs[0]).shape;
  if (s0.size() != 4) throw ConfigError("concat_channels: inputs must be N x H x W x C");
  int ctot = 0;
  std::vector<int> cs;
  for (int x : xs) {
    const auto& s = g.val(x).shape;
    if (s.size() != 4 || s[0] != s0[0] || s[1] != s0[1] || s[2] != s0[2])
      throw ConfigError("concat_channels: spatial shape mismatch");
    cs.push_back(s[3]);
    ctot += s[3];
  }
  const long long pixels = static_cast<long long>(s0[0]) * s0[1] * s0[2];
  Tensor<S> out({s0[0], s0[1], s0[2], ctot});
  S* dst = out.data.data();
  for (long long p = 0; p < pixels; ++p) {
    S* row = dst + p * ctot;
    for (size_t k = 0; k < xs.size(); ++k) {
      const S* src = g.val(xs[k]).data.data() + p * cs[k];
      std::copy(src, src + cs[k], row);
      row += cs[k];
    }
  }
  return g.make(std::move(out), xs, [cs, pixels, ctot](Graph<S>& gr, int id) {
    const S* go = gr.grad_ref(id).data.data();
    for (int k = 0; k < gr.num_inputs(id); ++k) {
      const int x = gr.in(id, k);
      if (!gr.needs_grad(x)) continue;
      int off = 0;
      for (int j = 0; j < k; ++j) off += cs[static_cast<size_t>(j)];
      const int c = cs[static_cast<size_t>(k)];
      Tensor<S> gx(gr.val(x).shape);
      S* dst = gx.data.data();
      for (long long p = 0; p < pixels; ++p) {
        const S* src = go + p * ctot + off;
        S* d = dst + p * c;
        for (int i = 0; i < c; ++i) d[i] += src[i];
      }
      gr.accum(x, gx.data);
    }
  });
}

// ---------------------------------------------------------------------------
// dense / conv / pool

// out = x W + b for x: N x F, W: F x G, b: G
template <typename S>
int affine(Graph<S>& g, int x, int W, int b) {
  const auto& xs = g.val(x).shape;
  const auto& ws = g.val(W).shape;
  const auto& bs = g.val(b).shape;
  if (xs.size() != 2 || ws.size() != 2 || bs.size() != 1 || xs[1] != ws[0] || ws[1] != bs[0])
    throw ConfigError("affine: shape mismatch " + shape_str(xs) + " * " + shape_str(ws) +
                      " + " + shape_str(bs));
  const int n = xs[0], f = xs[1], gdim = ws[1];
  detail::MapCM<S> X(g.val(x).data.data(), n, f);
  detail::MapCM<S> Wm(g.val(W).data.data(), f, gdim);
  Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> bv(g.val(b).data.data(), gdim);
  Tensor<S> out({n, gdim});
  detail::MapM<S> O(out.data.data(), n, gdim);
  O.noalias() = X * Wm;
  O.rowwise() += bv;
  return g.make(std::move(out), {x, W, b}, [n, f, gdim](Graph<S>& gr, int id) {
    detail::MapCM<S> G(gr.grad_ref(id).data.data(), n, gdim);
    const int x = gr.in(id, 0), W = gr.in(id, 1), b = gr.in(id, 2);
    detail::MapCM<S> X(gr.val(x).data.data(), n, f);
    detail::MapCM<S> Wm(gr.val(W).data.data(), f, gdim);
    if (gr.needs_grad(x)) {
      Tensor<S> gx({n, f});
      detail::MapM<S>(gx.data.data(), n, f).noalias() = G * Wm.transpose();
      gr.accum(x, gx.data);
    }
    if (gr.needs_grad(W)) {
      Tensor<S> gw({f, gdim});
      detail::MapM<S>(gw.data.data(), f, gdim).noalias() = X.transpose() * G;
      gr.accum(W, gw.data);
    }
    if (gr.needs_grad(b)) {
      Tensor<S> gb({gdim});
      Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(gb.data.data(), gdim) = G.colwise().sum();
      gr.accum(b, gb.data);
    }
  });
}

// adds a per-channel bias over the trailing axis
template <typename S>
int bias_add(Graph<S>& g, int x, int b) {
  const auto& xs = g.val(x).shape;
  const auto& bs = g.val(b).shape;
  if (bs.size() != 1 || xs.empty() || xs.back() != bs[0])
    throw ConfigError("bias_add: bias " + shape_str(bs) + " does not match trailing axis of " +
                      shape_str(xs));
  const int c = bs[0];
  const long long rows = g.val(x).size() / c;
  Tensor<S> out(xs, g.val(x).data);
  detail::MapM<S> O(out.data.data(), rows, c);
  O.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(g.val(b).data.data(), c);
  return g.make(std::move(out), {x, b}, [rows, c](Graph<S>& gr, int id) {
    const auto& go = gr.grad_ref(id).data;
    gr.accum(gr.in(id, 0), go);
    if (gr.needs_grad(gr.in(id, 1))) {
      detail::MapCM<S> G(go.data(), rows, c);
      Tensor<S> gb({c});
      Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(gb.data.data(), c) = G.colwise().sum();
      gr.accum(gr.in(id, 1), gb.data);
    }
  });
}

// Cross-correlation with SAME zero padding; output spatial dims are
// ceil(H / stride). x: N x H x W x Cin, kernel: kh x kw x Cin x Cout.
template <typename S>
int conv2d(Graph<S>& g, int x, int kernel, int stride = 1, int dilation = 1) {
  const auto d = detail::conv2d_dims(g.val(x).shape, g.val(kernel).shape, stride, dilation);
  const long long rows = d.rows();
  const int patch = d.patch();
  Tensor<S> out({d.n, d.ho, d.wo, d.cout});
  {
    detail::MapCM<S> K(g.val(kernel).data.data(), patch, d.cout);
    const long long chunk = detail::conv_chunk_rows(patch, rows);
    detail::MatRM<S> buf(chunk, patch);
    for (long long r0 = 0; r0 < rows; r0 += chunk) {
      const long long rc = std::min(chunk, rows - r0);
      detail::im2col(g.val(x).data.data(), d, r0, rc, buf.data());
      detail::MapM<S> O(out.data.data() + r0 * d.cout, rc, d.cout);
      O.noalias() = buf.topRows(rc) * K;
    }
  }
  return g.make(std::move(out), {x, kernel}, [d](Graph<S>& gr, int id) {
    const int x = gr.in(id, 0), kernel = gr.in(id, 1);
    const long long rows = d.rows();
    const int patch = d.patch();
    const S* go = gr.grad_ref(id).data.data();
    const long long chunk = detail::conv_chunk_rows(patch, rows);
    detail::MatRM<S> buf(chunk, patch);
    const bool need_x = gr.needs_grad(x);
    const bool need_k = gr.needs_grad(kernel);
    detail::MapCM<S> K(gr.val(kernel).data.data(), patch, d.cout);
    // col-major accumulator: the product kernel prefers the narrow
    // destination in column order
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> gk_acc;
    Tensor<S> gx;
    if (need_k) gk_acc = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>::Zero(patch, d.cout);
    if (need_x) gx = Tensor<S>(gr.val(x).shape);
    detail::MatRM<S> dcols;
    if (need_x) dcols.resize(chunk, patch);
    for (long long r0 = 0; r0 < rows; r0 += chunk) {
      const long long rc = std::min(chunk, rows - r0);
      detail::MapCM<S> G(go + r0 * d.cout, rc, d.cout);
      if (need_k) {
        detail::im2col(gr.val(x).data.data(), d, r0, rc, buf.data());
        gk_acc.noalias() += buf.topRows(rc).transpose() * G;
      }
      if (need_x) {
        dcols.topRows(rc).noalias() = G * K.transpose();
        detail::col2im_add(dcols.data(), d, r0, rc, gx.data.data());
      }
    }
    if (need_k) {
      Tensor<S> gk(gr.val(kernel).shape);
      detail::MapM<S>(gk.data.data(), patch, d.cout) = gk_acc;
      gr.accum(kernel, gk.data);
    }
    if (need_x) gr.accum(x, gx.data);
  });
}

// 3x3 pooling with SAME padding. Max routes its gradient to the argmax cell
// (first scanned wins on ties); avg divides by the in-bounds cell count and
// splits the gradient uniformly over those cells.
template <typename S>
int pool2d(Graph<S>& g, int x, PoolKind kind, int stride = 1) {
  const auto d = detail::pool2d_dims(g.val(x).shape, stride);
  const long long onum = static_cast<long long>(d.n) * d.ho * d.wo * d.c;
  Tensor<S> out({d.n, d.ho, d.wo, d.c});
  std::vector<long long> argmax;
  if (kind == PoolKind::Max) argmax.assign(static_cast<size_t>(onum), -1);
  const S* src = g.val(x).data.data();
  S* dst = out.data.data();
  for (int n = 0; n < d.n; ++n)
    for (int i = 0; i < d.ho; ++i)
      for (int j = 0; j < d.wo; ++j) {
        const long long obase = ((static_cast<long long>(n) * d.ho + i) * d.wo + j) * d.c;
        const int hi0 = i * d.stride - d.pad_t;
        const int wi0 = j * d.stride - d.pad_l;
        if (kind == PoolKind::Max) {
          for (int c = 0; c < d.c; ++c) {
            S best = 0;
            long long bidx = -1;
            for (int a = 0; a < 3; ++a) {
              const int hi = hi0 + a;
              if (hi < 0 || hi >= d.h) continue;
              for (int b = 0; b < 3; ++b) {
                const int wi = wi0 + b;
                if (wi < 0 || wi >= d.w) continue;
                const long long idx = ((static_cast<long long>(n) * d.h + hi) * d.w + wi) * d.c + c;
                if (bidx < 0 || src[idx] > best) {
                  best = src[idx];
                  bidx = idx;
                }
              }
            }
            dst[obase + c] = best;
            argmax[static_cast<size_t>(obase + c)] = bidx;
          }
        } else {
          int count = 0;
          for (int c = 0; c < d.c; ++c) dst[obase + c] = 0;
          for (int a = 0; a < 3; ++a) {
            const int hi = hi0 + a;
            if (hi < 0 || hi >= d.h) continue;
            for (int b = 0; b < 3; ++b) {
              const int wi = wi0 + b;
              if (wi < 0 || wi >= d.w) continue;
              ++count;
              const S* cell = src + ((static_cast<long long>(n) * d.h + hi) * d.w + wi) * d.c;
              for (int c = 0; c < d.c; ++c) dst[obase + c] += cell[c];
            }
          }
          const S inv = static_cast<S>(1) / static_cast<S>(count);
          for (int c = 0; c < d.c; ++c) dst[obase + c] *= inv;
        }
      }
  return g.make(std::move(out), {x},
                [d, kind, argmax = std::move(argmax)](Graph<S>& gr, int id) {
    const int x = gr.in(id, 0);
    if (!gr.needs_grad(x)) return;
    const S* go = gr.grad_ref(id).data.data();
    Tensor<S> gx(gr.val(x).shape);
    S* dst = gx.data.data();
    if (kind == PoolKind::Max) {
      for (size_t o = 0; o < argmax.size(); ++o)
        if (argmax[o] >= 0) dst[argmax[o]] += go[o];
    } else {
      for (int n = 0; n < d.n; ++n)
        for (int i = 0; i < d.ho; ++i)
          for (int j = 0; j < d.wo; ++j) {
            const long long obase = ((static_cast<long long>(n) * d.ho + i) * d.wo + j) * d.c;
            const int hi0 = i * d.stride - d.pad_t;
            const int wi0 = j * d.stride - d.pad_l;
            int count = 0;
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b)
                if (hi0 + a >= 0 && hi0 + a < d.h && wi0 + b >= 0 && wi0 + b < d.w) ++count;
            const S inv = static_cast<S>(1) / static_cast<S>(count);
            for (int a = 0; a < 3; ++a) {
              const int hi = hi0 + a;
              if (hi < 0 || hi >= d.h) continue;
              for (int b = 0; b < 3; ++b) {
                const int wi = wi0 + b;
                if (wi < 0 || wi >= d.w) continue;
                S* cell = dst + ((static_cast<long long>(n) * d.h + hi) * d.w + wi) * d.c;
                for (int c = 0; c < d.c; ++c) cell[c] += go[obase + c] * inv;
              }
            }
          }
    }
    gr.accum(x, gx.data);
  });
}

// ---------------------------------------------------------------------------
// softmax family

// softmax(logits / temperature) for a 1-D logits vector; max-stabilized
template <typename S>
int softmax_vec(Graph<S>& g, int logits, S temperature) {
  if (temperature <= static_cast<S>(0))
    throw ConfigError("softmax_vec: temperature must be positive");
  if (g.val(logits).rank() != 1) throw UsageError("softmax_vec: logits must be 1-D");
  auto scaled = (g.val(logits).data / temperature).eval();
  auto shifted = (scaled - scaled.maxCoeff()).eval();
  auto p = shifted.exp().eval();
  p /= p.sum();
  Tensor<S> out(g.val(logits).shape, std::move(p));
  return g.make(std::move(out), {logits}, [temperature](Graph<S>& gr, int id) {
    const auto& p = gr.val(id).data;
    const auto& go = gr.grad_ref(id).data;
    const S dot = (p * go).sum();
    gr.accum(gr.in(id, 0), p * (go - dot) / temperature);
  });
}

// row-wise log softmax for logits N x A
template <typename S>
int log_softmax_rows(Graph<S>& g, int x) {
  const auto& xs = g.val(x).shape;
  if (xs.size() != 2) throw UsageError("log_softmax_rows: input must be N x A");
  const int n = xs[0], a = xs[1];
  Tensor<S> out(xs);
  detail::MapCM<S> X(g.val(x).data.data(), n, a);
  detail::MapM<S> O(out.data.data(), n, a);
  for (int r = 0; r < n; ++r) {
    const S m = X.row(r).maxCoeff();
    const S lse = std::log((X.row(r).array() - m).exp().sum()) + m;
    O.row(r) = X.row(r).array() - lse;
  }
  return g.make(std::move(out), {x}, [n, a](Graph<S>& gr, int id) {
    detail::MapCM<S> G(gr.grad_ref(id).data.data(), n, a);
    detail::MapCM<S> LS(gr.val(id).data.data(), n, a);
    Tensor<S> gx({n, a});
    detail::MapM<S> GX(gx.data.data(), n, a);
    for (int r = 0; r < n; ++r) {
      const S rs = G.row(r).sum();
      GX.row(r) = G.row(r).array() - LS.row(r).array().exp() * rs;
    }
    gr.accum(gr.in(id, 0), gx.data);
  });
}

// out[n] = x[n, idx[n]]
template <typename S>
int gather_rows(Graph<S>& g, int x, std::vector<int> idx) {
  const auto& xs = g.val(x).shape;
  if (xs.size() != 2) throw UsageError("gather_rows: input must be N x A");
  const int n = xs[0], a = xs[1];
  if (static_cast<int>(idx.size()) != n) throw UsageError("gather_rows: index length mismatch");
  Tensor<S> out({n});
  for (int r = 0; r < n; ++r) {
    if (idx[static_cast<size_t>(r)] < 0 || idx[static_cast<size_t>(r)] >= a)
      throw UsageError("gather_rows: index out of range");
    out.data[r] = g.val(x).data[static_cast<long long>(r) * a + idx[static_cast<size_t>(r)]];
  }
  return g.make(std::move(out), {x}, [idx = std::move(idx), a](Graph<S>& gr, int id) {
    const auto& go = gr.grad_ref(id).data;
    Tensor<S> gx(gr.val(gr.in(id, 0)).shape);
    for (int r = 0; r < static_cast<int>(idx.size()); ++r)
      gx.data[static_cast<long long>(r) * a + idx[static_cast<size_t>(r)]] = go[r];
    gr.accum(gr.in(id, 0), gx.data);
  });
}

template <typename S>
int sum_rows(Graph<S>& g, int x) {
  const auto& xs = g.val(x).shape;
  if (xs.size() != 2) throw UsageError("sum_rows: input must be N x A");
  const int n = xs[0], a = xs[1];
  Tensor<S> out({n});
  detail::MapCM<S> X(g.val(x).data.data(), n, a);
  for (int r = 0; r < n; ++r) out.data[r] = X.row(r).sum();
  return g.make(std::move(out), {x}, [n, a](Graph<S>& gr, int id) {
    const auto& go = gr.grad_ref(id).data;
    Tensor<S> gx({n, a});
    detail::MapM<S> GX(gx.data.data(), n, a);
    for (int r = 0; r < n; ++r) GX.row(r).setConstant(go[r]);
    gr.accum(gr.in(id, 0), gx.data);
  });
}

template <typename S>
int mean_rows(Graph<S>& g, int x) {
  const int a = g.val(x).shape.at(1);
  return scale(g, sum_rows(g, x), static_cast<S>(1) / static_cast<S>(a));
}

// v: N -> N x A by column replication
template <typename S>
int broadcast_col(Graph<S>& g, int v, int a) {
  const auto& vs = g.val(v).shape;
  if (vs.size() != 1) throw UsageError("broadcast_col: input must be 1-D");
  const int n = vs[0];
  Tensor<S> out({n, a});
  detail::MapM<S> O(out.data.data(), n, a);
  for (int r = 0; r < n; ++r) O.row(r).setConstant(g.val(v).data[r]);
  return g.make(std::move(out), {v}, [n, a](Graph<S>& gr, int id) {
    detail::MapCM<S> G(gr.grad_ref(id).data.data(), n, a);
    Tensor<S> gv({n});
    for (int r = 0; r < n; ++r) gv.data[r] = G.row(r).sum();
    gr.accum(gr.in(id, 0), gv.data);
  });
}

// scalar node v[k] picked out of a 1-D vector node
template <typename S>
int index_scalar(Graph<S>& g, int v, int k) {
  if (g.val(v).rank() != 1 || k < 0 || k >= g.val(v).dim(0))
    throw UsageError("index_scalar: bad index");
  Tensor<S> out = Tensor<S>::scalar(g.val(v).data[k]);
  return g.make(std::move(out), {v}, [k](Graph<S>& gr, int id) {
    Tensor<S> gv(gr.val(gr.in(id, 0)).shape);
    gv.data[k] = gr.grad_ref(id).data[0];
    gr.accum(gr.in(id, 0), gv.data);
  });
}

}  // namespace rldarts
