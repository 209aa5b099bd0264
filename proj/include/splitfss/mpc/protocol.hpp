// Copyright 2026 The SplitFSS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Two-server secure operations on additive shares. Every operation that
// consumes dealer material has a twin in namespace deal that produces the
// same records in the same order; consumers and dealer run the same
// sequence of calls.

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "splitfss/mpc/material.hpp"
#include "splitfss/net/channel.hpp"
#include "splitfss/net/codec.hpp"

namespace splitfss::mpc {

/// Per-server state of a running two-party computation.
struct MpcContext {
  int party = 0;
  FixedPointConfig cfg;
  net::Channel* peer = nullptr;      // the other server
  MaterialReader* material = nullptr;

  MaterialReader& mat() const {
    if (!material) throw MaterialError("no material source attached");
    return *material;
  }
};

// -- opening -----------------------------------------------------------------------

/// Reveals the shared tensors to both servers in one round trip.
/// Party 0 sends first, party 1 receives first.
inline std::vector<RingTensor> open_many(const MpcContext& ctx,
                                         const std::vector<const RingTensor*>& shares) {
  if (!ctx.peer) throw ProtocolError("open: no peer channel");
  std::size_t total = 0;
  for (const auto* s : shares) total += s->size();
  ByteWriter w(total * net::elem_bytes(ctx.cfg));
  for (const auto* s : shares) net::write_elems(w, s->span(), ctx.cfg);

  Bytes theirs;
  if (ctx.party == 0) {
    ctx.peer->send(net::MsgType::kOpen, w.bytes());
    theirs = ctx.peer->recv(net::MsgType::kOpen);
  } else {
    theirs = ctx.peer->recv(net::MsgType::kOpen);
    ctx.peer->send(net::MsgType::kOpen, w.bytes());
  }
  if (theirs.size() != w.size()) {
    throw ProtocolError("open: peer sent " + std::to_string(theirs.size()) + " bytes, expected " +
                        std::to_string(w.size()));
  }
  ByteReader r(theirs, "open");
  std::vector<RingTensor> out;
  out.reserve(shares.size());
  for (const auto* s : shares) {
    RingTensor other(s->shape());
    net::read_elems(r, other.span(), ctx.cfg);
    out.push_back(reconstruct(*s, other, ctx.cfg));
  }
  return out;
}

inline RingTensor open(const MpcContext& ctx, const RingTensor& share) {
  return std::move(open_many(ctx, {&share}).front());
}

// -- Beaver products ---------------------------------------------------------------

/// Elementwise x * y. With truncate, the product is rescaled as a
/// fixed-point multiply; without it the raw ring product is returned, which
/// is what selection by a 0/1 share needs.
inline RingTensor beaver_mul(const MpcContext& ctx, const RingTensor& x, const RingTensor& y,
                             bool truncate) {
  ring::require_same_shape(x.shape(), y.shape(), "beaver_mul");
  auto t = ctx.mat().elem_triple(x.size()).take();
  const auto& cfg = ctx.cfg;
  RingTensor eps(x.shape()), del(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    eps[i] = ring::sub(x[i], t.a[i], cfg);
    del[i] = ring::sub(y[i], t.b[i], cfg);
  }
  auto pub = open_many(ctx, {&eps, &del});
  const RingTensor& e = pub[0];
  const RingTensor& d = pub[1];
  RingTensor z(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Elem v = e[i] * t.b[i] + t.a[i] * d[i] + t.c[i];
    if (ctx.party == 0) v += e[i] * d[i];
    z[i] = ring::reduce(v, cfg);
  }
  return truncate ? truncate_local(ctx.party, std::move(z), cfg) : z;
}

/// Matrix product x[m,k] * y[k,n].
inline RingTensor beaver_matmul(const MpcContext& ctx, const RingTensor& x, const RingTensor& y,
                                bool truncate = true) {
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(0)) {
    throw ShapeError("beaver_matmul: " + ring::shape_str(x.shape()) + " x " +
                     ring::shape_str(y.shape()));
  }
  const std::size_t m = x.dim(0), k = x.dim(1), n = y.dim(1);
  auto t = ctx.mat().mat_triple(m, k, n).take();
  const auto& cfg = ctx.cfg;
  const RingTensor eps = sub(x, t.a, cfg);
  const RingTensor del = sub(y, t.b, cfg);
  auto pub = open_many(ctx, {&eps, &del});
  // z = e*B + A*d + C (+ e*d for party 0)
  RingTensor z = matmul(pub[0], t.b, cfg);
  z = add(z, matmul(t.a, pub[1], cfg), cfg);
  z = add(z, t.c, cfg);
  if (ctx.party == 0) z = add(z, matmul(pub[0], pub[1], cfg), cfg);
  return truncate ? truncate_local(ctx.party, std::move(z), cfg) : z;
}

// -- sign test ---------------------------------------------------------------------

/// Shares of [x >= 0] for each element of the public masked value
/// x_pub = x + r, given this server's share of msb(r) and its comparison
/// keys (one per element, evaluated on the low l-1 bits of x_pub).
///
/// msb(x) = msb(x_pub) xor msb(r) xor [low(x_pub) < low(r)]; the key output
/// plus the msb share is a sharing of msb(r) xor borrow.
inline void sign_from_public(int party, const FixedPointConfig& cfg,
                             std::span<const Elem> x_pub, std::span<const Elem> msb_share,
                             const SignKeys& keys, std::span<Elem> out) {
  if (x_pub.size() != keys.count || msb_share.size() != keys.count || out.size() != keys.count) {
    throw ShapeError("sign_from_public: " + std::to_string(keys.count) + " keys for " +
                     std::to_string(x_pub.size()) + " values");
  }
  const Elem low_mask = cfg.sign_bit() - 1;
  const Elem one = party == 0 ? 1 : 0;
  for (std::size_t i = 0; i < keys.count; ++i) {
    const Elem s =
        ring::add(msb_share[i], fss::dcf_eval_serialized(party, keys.key(i), x_pub[i] & low_mask),
                  cfg);
    // msb share, flipped when the public top bit is set
    const Elem m = ring::is_negative(x_pub[i], cfg) ? ring::sub(one, s, cfg) : s;
    out[i] = ring::sub(one, m, cfg);
  }
}

/// Shares of [x >= 0] as integers 0/1 (not fixed-point scaled).
inline RingTensor secure_sign(const MpcContext& ctx, const RingTensor& x) {
  const auto& cfg = ctx.cfg;
  auto mask = ctx.mat().sign_mask(x.size()).take();
  RingTensor masked(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) masked[i] = ring::add(x[i], mask.r[i], cfg);
  const RingTensor x_pub = open(ctx, masked);

  RingTensor b(x.shape());
  for (std::size_t off = 0; off < x.size(); off += kKeyChunk) {
    const std::size_t n = std::min(kKeyChunk, x.size() - off);
    auto keys = ctx.mat().sign_keys(n).take();
    sign_from_public(ctx.party, cfg, x_pub.span().subspan(off, n), mask.msb.span().subspan(off, n),
                     keys, b.span().subspan(off, n));
  }
  return b;
}

struct ReluResult {
  RingTensor y;
  RingTensor sign;  // shares of [x >= 0], kept for the backward pass
};

inline ReluResult secure_relu(const MpcContext& ctx, const RingTensor& x) {
  RingTensor b = secure_sign(ctx, x);
  RingTensor y = beaver_mul(ctx, b, x, false);
  return {std::move(y), std::move(b)};
}

inline RingTensor secure_relu_backward(const MpcContext& ctx, const RingTensor& grad,
                                       const RingTensor& sign) {
  return beaver_mul(ctx, grad, sign, false);
}

// -- fully connected -----------------------------------------------------------------

/// x[n,in] * w[out,in]^T + b.
inline RingTensor secure_fc(const MpcContext& ctx, const RingTensor& x, const RingTensor& w,
                            const RingTensor& b) {
  const std::size_t nout = w.dim(0), nin = w.dim(1);
  const RingTensor x2 = x.reshaped({x.size() / nin, nin});
  RingTensor z = beaver_matmul(ctx, x2, transpose(w));
  for (std::size_t r = 0; r < z.dim(0); ++r)
    for (std::size_t o = 0; o < nout; ++o)
      z[r * nout + o] = ring::add(z[r * nout + o], b[o], ctx.cfg);
  return z;
}

struct FcShareGrads {
  RingTensor weight, bias, input;
};

inline FcShareGrads secure_fc_backward(const MpcContext& ctx, const RingTensor& x,
                                       const RingTensor& w, const RingTensor& g,
                                       bool want_input) {
  const std::size_t nout = w.dim(0), nin = w.dim(1), n = g.size() / nout;
  const RingTensor x2 = x.reshaped({n, nin});
  const RingTensor g2 = g.reshaped({n, nout});
  FcShareGrads out;
  out.weight = beaver_matmul(ctx, transpose(g2), x2);
  out.bias = RingTensor({nout});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < nout; ++o)
      out.bias[o] = ring::add(out.bias[o], g2[r * nout + o], ctx.cfg);
  if (want_input) out.input = beaver_matmul(ctx, g2, w);
  return out;
}

// -- convolution ---------------------------------------------------------------------

/// [N,C,H,W] -> [N*Ho*Wo, C*k*k] patch matrix for a valid stride-1 window.
inline RingTensor im2col(const RingTensor& x, std::size_t k) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = h - k + 1, wo = w - k + 1, cols = c * k * k;
  RingTensor out({n * ho * wo, cols});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx) {
        Elem* row = out.data() + ((b * ho + y) * wo + xx) * cols;
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx)
              *row++ = x[((b * c + ci) * h + y + ky) * w + xx + kx];
      }
  return out;
}

/// Adjoint of im2col: sums patch entries back into an [N,C,H,W] tensor.
inline RingTensor col2im(const RingTensor& cols, const Shape& shape, std::size_t k,
                         const FixedPointConfig& cfg) {
  const std::size_t n = shape[0], c = shape[1], h = shape[2], w = shape[3];
  const std::size_t ho = h - k + 1, wo = w - k + 1;
  RingTensor out(shape);
  const Elem* src = cols.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx)
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              Elem& d = out[((b * c + ci) * h + y + ky) * w + xx + kx];
              d = ring::add(d, *src++, cfg);
            }
  return out;
}

/// [N*Ho*Wo, Cout] rows -> [N,Cout,Ho,Wo], and back.
inline RingTensor rows_to_nchw(const RingTensor& rows, std::size_t n, std::size_t c,
                               std::size_t hw) {
  RingTensor out({n, c, hw});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) out[(b * c + ch) * hw + p] = rows[(b * hw + p) * c + ch];
  return out;
}

inline RingTensor nchw_to_rows(const RingTensor& t, std::size_t n, std::size_t c, std::size_t hw) {
  RingTensor out({n * hw, c});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) out[(b * hw + p) * c + ch] = t[(b * c + ch) * hw + p];
  return out;
}

struct ConvCache {
  RingTensor cols;
  Shape input_shape;
};

/// Valid stride-1 convolution of a shared [N,Cin,H,W] input with shared
/// kernels [Cout,Cin,k,k] and bias [Cout].
inline RingTensor secure_conv2d(const MpcContext& ctx, const RingTensor& x, const RingTensor& kern,
                                const RingTensor& bias, ConvCache* cache = nullptr) {
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = kern.dim(0), k = kern.dim(2);
  const std::size_t ho = h - k + 1, wo = w - k + 1, ckk = kern.size() / cout;
  RingTensor cols = im2col(x, k);
  RingTensor z = beaver_matmul(ctx, cols, transpose(kern.reshaped({cout, ckk})));
  RingTensor out = rows_to_nchw(z, n, cout, ho * wo);
  out.reshape({n, cout, ho, wo});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      Elem* p = out.data() + (b * cout + co) * ho * wo;
      for (std::size_t i = 0; i < ho * wo; ++i) p[i] = ring::add(p[i], bias[co], ctx.cfg);
    }
  if (cache) *cache = {std::move(cols), x.shape()};
  return out;
}

struct ConvShareGrads {
  RingTensor kernels, bias, input;
};

inline ConvShareGrads secure_conv2d_backward(const MpcContext& ctx, const ConvCache& cache,
                                             const RingTensor& kern, const RingTensor& g,
                                             bool want_input) {
  const std::size_t n = g.dim(0), cout = g.dim(1), hw = g.dim(2) * g.dim(3);
  const std::size_t k = kern.dim(2), ckk = kern.size() / cout;
  const RingTensor g2 = nchw_to_rows(g, n, cout, hw);
  ConvShareGrads out;
  out.kernels = beaver_matmul(ctx, transpose(g2), cache.cols).reshaped(kern.shape());
  out.bias = RingTensor({cout});
  for (std::size_t r = 0; r < n * hw; ++r)
    for (std::size_t co = 0; co < cout; ++co)
      out.bias[co] = ring::add(out.bias[co], g2[r * cout + co], ctx.cfg);
  if (want_input) {
    // overlapping patches are summed before the single rescale
    const RingTensor dcols = beaver_matmul(ctx, g2, kern.reshaped({cout, ckk}), false);
    out.input = truncate_local(ctx.party, col2im(dcols, cache.input_shape, k, ctx.cfg), ctx.cfg);
  }
  return out;
}

// -- max pooling -----------------------------------------------------------------------

struct PoolCache {
  RingTensor s3, i0, i2;  // integer shares: final selection and window indicators
  Shape input_shape;
};

namespace detail {

/// The four 2x2 window entries of [N,C,H,W] as flat tensors of window count.
inline std::array<RingTensor, 4> window_corners(const RingTensor& x) {
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw ShapeError("maxpool2: spatial dims must be even");
  const std::size_t ho = h / 2, wo = w / 2, count = planes * ho * wo;
  std::array<RingTensor, 4> c{RingTensor({count}), RingTensor({count}), RingTensor({count}),
                              RingTensor({count})};
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx) {
        const std::size_t o = (p * ho + y) * wo + xx;
        const Elem* base = x.data() + p * h * w;
        c[0][o] = base[2 * y * w + 2 * xx];
        c[1][o] = base[2 * y * w + 2 * xx + 1];
        c[2][o] = base[(2 * y + 1) * w + 2 * xx];
        c[3][o] = base[(2 * y + 1) * w + 2 * xx + 1];
      }
  return c;
}

inline RingTensor concat(std::initializer_list<const RingTensor*> parts) {
  std::size_t total = 0;
  for (const auto* p : parts) total += p->size();
  RingTensor out({total});
  std::size_t off = 0;
  for (const auto* p : parts) {
    std::copy(p->values().begin(), p->values().end(), out.values().begin() + off);
    off += p->size();
  }
  return out;
}

inline RingTensor slice(const RingTensor& t, std::size_t index, std::size_t count) {
  return RingTensor({count}, std::vector<Elem>(t.values().begin() + index * count,
                                               t.values().begin() + (index + 1) * count));
}

}  // namespace detail

/// 2x2 max pooling as a tournament: left pair, right pair, then the two
/// winners. Ties resolve to the lower window position, as in the plaintext
/// layer.
inline RingTensor secure_maxpool2(const MpcContext& ctx, const RingTensor& x,
                                  PoolCache* cache = nullptr) {
  const auto& cfg = ctx.cfg;
  const auto c = detail::window_corners(x);
  const std::size_t w = c[0].size();
  const RingTensor d1 = sub(c[0], c[1], cfg), d2 = sub(c[2], c[3], cfg);

  const RingTensor d12 = detail::concat({&d1, &d2});
  const RingTensor s12 = secure_sign(ctx, d12);
  const RingTensor sel12 = beaver_mul(ctx, s12, d12, false);
  const RingTensor m1 = add(c[1], detail::slice(sel12, 0, w), cfg);
  const RingTensor m2 = add(c[3], detail::slice(sel12, 1, w), cfg);

  const RingTensor d3 = sub(m1, m2, cfg);
  const RingTensor s3 = secure_sign(ctx, d3);
  const RingTensor s1 = detail::slice(s12, 0, w), s2 = detail::slice(s12, 1, w);
  const RingTensor lhs = detail::concat({&s3, &s3, &s3});
  const RingTensor rhs = detail::concat({&d3, &s1, &s2});
  const RingTensor prod = beaver_mul(ctx, lhs, rhs, false);

  RingTensor out = add(m2, detail::slice(prod, 0, w), cfg);
  out.reshape({x.dim(0), x.dim(1), x.dim(2) / 2, x.dim(3) / 2});
  if (cache) {
    *cache = {s3, detail::slice(prod, 1, w), sub(s2, detail::slice(prod, 2, w), cfg), x.shape()};
  }
  return out;
}

/// Routes g to the winning window position using the cached indicators:
/// I0 = s1 s3, I1 = s3 - I0, I2 = s2 - s2 s3, I3 = 1 - s3 - I2.
inline RingTensor secure_maxpool2_backward(const MpcContext& ctx, const PoolCache& cache,
                                           const RingTensor& g) {
  const auto& cfg = ctx.cfg;
  const std::size_t w = cache.s3.size();
  if (g.size() != w) throw ShapeError("maxpool2_backward: gradient size mismatch");
  const RingTensor gf = g.reshaped({w});
  const RingTensor lhs = detail::concat({&gf, &gf, &gf});
  const RingTensor rhs = detail::concat({&cache.i0, &cache.s3, &cache.i2});
  const RingTensor prod = beaver_mul(ctx, lhs, rhs, false);
  const RingTensor g_i0 = detail::slice(prod, 0, w);
  const RingTensor g_s3 = detail::slice(prod, 1, w);
  const RingTensor g_i2 = detail::slice(prod, 2, w);
  const RingTensor g_i1 = sub(g_s3, g_i0, cfg);
  const RingTensor g_i3 = sub(sub(gf, g_s3, cfg), g_i2, cfg);

  const Shape& in = cache.input_shape;
  const std::size_t planes = in[0] * in[1], h = in[2], wd = in[3], ho = h / 2, wo = wd / 2;
  RingTensor out(in);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx) {
        const std::size_t o = (p * ho + y) * wo + xx;
        Elem* base = out.data() + p * h * wd;
        base[2 * y * wd + 2 * xx] = g_i0[o];
        base[2 * y * wd + 2 * xx + 1] = g_i1[o];
        base[(2 * y + 1) * wd + 2 * xx] = g_i2[o];
        base[(2 * y + 1) * wd + 2 * xx + 1] = g_i3[o];
      }
  return out;
}

// -- dealer twins --------------------------------------------------------------------------

namespace deal {

inline void relu(MaterialWriter& w, std::size_t count) { w.relu(count); }
inline void relu_backward(MaterialWriter& w, std::size_t count) { w.elem_triple(count); }

inline void fc(MaterialWriter& w, std::size_t n, std::size_t nin, std::size_t nout) {
  w.mat_triple(n, nin, nout);
}
inline void fc_backward(MaterialWriter& w, std::size_t n, std::size_t nin, std::size_t nout,
                        bool want_input) {
  w.mat_triple(nout, n, nin);
  if (want_input) w.mat_triple(n, nout, nin);
}

inline void conv2d(MaterialWriter& w, std::size_t rows, std::size_t ckk, std::size_t cout) {
  w.mat_triple(rows, ckk, cout);
}
inline void conv2d_backward(MaterialWriter& w, std::size_t rows, std::size_t ckk,
                            std::size_t cout, bool want_input) {
  w.mat_triple(cout, rows, ckk);
  if (want_input) w.mat_triple(rows, cout, ckk);
}

inline void maxpool2(MaterialWriter& w, std::size_t windows) {
  w.sign(2 * windows);
  w.elem_triple(2 * windows);
  w.sign(windows);
  w.elem_triple(3 * windows);
}
inline void maxpool2_backward(MaterialWriter& w, std::size_t windows) {
  w.elem_triple(3 * windows);
}

}  // namespace deal

}  // namespace splitfss::mpc
