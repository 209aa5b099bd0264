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

// The CNN evaluated on additive shares by the two servers. Each forward and
// backward routine has a deal_* twin listing the dealer material it
// consumes, in consumption order.

#include "splitfss/mpc/protocol.hpp"
#include "splitfss/ring/model.hpp"

namespace splitfss::proto {

using mpc::MaterialWriter;
using mpc::MpcContext;
using ring::ClientParams;
using ring::Elem;
using ring::ModelArchitecture;
using ring::RingTensor;
using ring::ServerParams;

// -- share-local pieces ---------------------------------------------------------------

/// Share of scale * (yhat - y); linear, so no interaction.
inline RingTensor secure_mse_grad(int party, const RingTensor& yhat, const RingTensor& y, Elem scale,
                                  const ring::FixedPointConfig& cfg) {
  return mpc::mul_public(party, mpc::sub(yhat, y, cfg), scale, cfg);
}

/// v <- momentum * v + g; w <- w - lr * v, on shares.
template <typename Params>
void secure_sgd(int party, Params& params, const Params& grads, Params& velocity, Elem lr,
                Elem momentum, const ring::FixedPointConfig& cfg) {
  auto p = params.tensors();
  auto g = grads.tensors();
  auto v = velocity.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    *v[i] = mpc::add(mpc::mul_public(party, *v[i], momentum, cfg), *g[i], cfg);
    *p[i] = mpc::sub(*p[i], mpc::mul_public(party, *v[i], lr, cfg), cfg);
  }
}

// -- server stack: fc1 -> relu -> fc2 [-> relu] ---------------------------------------------

struct SecureServerCache {
  RingTensor input;  // [n, split_features]
  RingTensor relu1_sign;
  RingTensor h1;
  RingTensor out_sign;  // only with final_relu
};

inline RingTensor secure_server_forward(const MpcContext& ctx, const ModelArchitecture& arch,
                                        const ServerParams<Elem>& p, const RingTensor& input,
                                        SecureServerCache* cache) {
  const std::size_t n = input.size() / arch.split_features();
  RingTensor x = input.reshaped({n, arch.split_features()});
  RingTensor z1 = mpc::secure_fc(ctx, x, p.fc1_w, p.fc1_b);
  auto r1 = mpc::secure_relu(ctx, z1);
  RingTensor out = mpc::secure_fc(ctx, r1.y, p.fc2_w, p.fc2_b);
  RingTensor out_sign;
  if (arch.final_relu) {
    auto r2 = mpc::secure_relu(ctx, out);
    out = std::move(r2.y);
    out_sign = std::move(r2.sign);
  }
  if (cache) *cache = {std::move(x), std::move(r1.sign), std::move(r1.y), std::move(out_sign)};
  return out;
}

inline void deal_server_forward(MaterialWriter& w, const ModelArchitecture& arch, std::size_t n) {
  mpc::deal::fc(w, n, arch.split_features(), arch.hidden);
  mpc::deal::relu(w, n * arch.hidden);
  mpc::deal::fc(w, n, arch.hidden, arch.classes);
  if (arch.final_relu) mpc::deal::relu(w, n * arch.classes);
}

struct SecureServerGrads {
  ServerParams<Elem> grads;
  RingTensor grad_input;  // [n, split_features], empty unless requested
};

inline SecureServerGrads secure_server_backward(const MpcContext& ctx, const ModelArchitecture& arch,
                                                const ServerParams<Elem>& p,
                                                const SecureServerCache& c, RingTensor g,
                                                bool want_input) {
  if (arch.final_relu) g = mpc::secure_relu_backward(ctx, g, c.out_sign);
  auto fc2 = mpc::secure_fc_backward(ctx, c.h1, p.fc2_w, g, true);
  RingTensor g1 = mpc::secure_relu_backward(ctx, fc2.input, c.relu1_sign);
  auto fc1 = mpc::secure_fc_backward(ctx, c.input, p.fc1_w, g1, want_input);
  return {ServerParams<Elem>{std::move(fc1.weight), std::move(fc1.bias), std::move(fc2.weight),
                             std::move(fc2.bias)},
          std::move(fc1.input)};
}

inline void deal_server_backward(MaterialWriter& w, const ModelArchitecture& arch, std::size_t n,
                                 bool want_input) {
  if (arch.final_relu) mpc::deal::relu_backward(w, n * arch.classes);
  mpc::deal::fc_backward(w, n, arch.hidden, arch.classes, true);
  mpc::deal::relu_backward(w, n * arch.hidden);
  mpc::deal::fc_backward(w, n, arch.split_features(), arch.hidden, want_input);
}

// -- client stack: conv -> pool -> relu, twice ------------------------------------------------

struct SecureClientCache {
  mpc::ConvCache conv1, conv2;
  mpc::PoolCache pool1, pool2;
  RingTensor relu1_sign, relu2_sign;
};

inline RingTensor secure_client_forward(const MpcContext& ctx, const ClientParams<Elem>& p,
                                        const RingTensor& x, SecureClientCache* cache) {
  SecureClientCache local;
  SecureClientCache& c = cache ? *cache : local;
  RingTensor a = mpc::secure_conv2d(ctx, x, p.conv1_w, p.conv1_b, &c.conv1);
  a = mpc::secure_maxpool2(ctx, a, &c.pool1);
  auto r1 = mpc::secure_relu(ctx, a);
  c.relu1_sign = std::move(r1.sign);
  a = mpc::secure_conv2d(ctx, r1.y, p.conv2_w, p.conv2_b, &c.conv2);
  a = mpc::secure_maxpool2(ctx, a, &c.pool2);
  auto r2 = mpc::secure_relu(ctx, a);
  c.relu2_sign = std::move(r2.sign);
  return std::move(r2.y);
}

namespace detail {

struct ClientDims {
  std::size_t rows1, ckk1, c1, windows1, rows2, ckk2, c2, windows2;
};

inline ClientDims client_dims(const ModelArchitecture& a, std::size_t n) {
  const std::size_t o1 = a.conv1_out(), o2 = a.conv2_out();
  return {n * o1 * o1,
          a.conv1.in_channels * a.conv1.kernel * a.conv1.kernel,
          a.conv1.out_channels,
          n * a.conv1.out_channels * a.pool1_out() * a.pool1_out(),
          n * o2 * o2,
          a.conv2.in_channels * a.conv2.kernel * a.conv2.kernel,
          a.conv2.out_channels,
          n * a.conv2.out_channels * a.pool2_out() * a.pool2_out()};
}

}  // namespace detail

inline void deal_client_forward(MaterialWriter& w, const ModelArchitecture& arch, std::size_t n) {
  const auto d = detail::client_dims(arch, n);
  mpc::deal::conv2d(w, d.rows1, d.ckk1, d.c1);
  mpc::deal::maxpool2(w, d.windows1);
  mpc::deal::relu(w, d.windows1);
  mpc::deal::conv2d(w, d.rows2, d.ckk2, d.c2);
  mpc::deal::maxpool2(w, d.windows2);
  mpc::deal::relu(w, d.windows2);
}

inline ClientParams<Elem> secure_client_backward(const MpcContext& ctx, const ClientParams<Elem>& p,
                                                 const SecureClientCache& c, const RingTensor& g_atm) {
  RingTensor g = mpc::secure_relu_backward(ctx, g_atm.reshaped(c.relu2_sign.shape()), c.relu2_sign);
  g = mpc::secure_maxpool2_backward(ctx, c.pool2, g);
  auto conv2 = mpc::secure_conv2d_backward(ctx, c.conv2, p.conv2_w, g, true);
  g = mpc::secure_relu_backward(ctx, conv2.input.reshaped(c.relu1_sign.shape()), c.relu1_sign);
  g = mpc::secure_maxpool2_backward(ctx, c.pool1, g);
  auto conv1 = mpc::secure_conv2d_backward(ctx, c.conv1, p.conv1_w, g, false);
  return {std::move(conv1.kernels), std::move(conv1.bias), std::move(conv2.kernels),
          std::move(conv2.bias)};
}

inline void deal_client_backward(MaterialWriter& w, const ModelArchitecture& arch, std::size_t n) {
  const auto d = detail::client_dims(arch, n);
  mpc::deal::relu_backward(w, d.windows2);
  mpc::deal::maxpool2_backward(w, d.windows2);
  mpc::deal::conv2d_backward(w, d.rows2, d.ckk2, d.c2, true);
  mpc::deal::relu_backward(w, d.windows1);
  mpc::deal::maxpool2_backward(w, d.windows1);
  mpc::deal::conv2d_backward(w, d.rows1, d.ckk1, d.c1, false);
}

}  // namespace splitfss::proto
