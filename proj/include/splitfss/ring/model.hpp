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

// The two-conv / two-fc classifier, split into a client stack
// (conv -> pool -> relu, twice) and a server stack (fc -> relu -> fc).

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "splitfss/ring/layers.hpp"

namespace splitfss::ring {

enum class LayerKind { kConv2d, kMaxPool2, kRelu, kFc };
enum class Side { kClient, kServer };

struct LayerSpec {
  LayerKind kind;
  Side side;
  std::size_t in_units;   // channels for conv, features for fc
  std::size_t out_units;
  std::size_t kernel = 0;
};

struct ConvSpec {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t kernel;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct ModelArchitecture {
  std::size_t input_size = 28;
  ConvSpec conv1{1, 16, 5};
  ConvSpec conv2{16, 16, 5};
  std::size_t hidden = 100;
  std::size_t classes = 10;
  /// Apply ReLU to the classifier output before the loss.
  bool final_relu = false;

  std::size_t conv1_out() const { return input_size - conv1.kernel + 1; }
  std::size_t pool1_out() const { return conv1_out() / 2; }
  std::size_t conv2_out() const { return pool1_out() - conv2.kernel + 1; }
  std::size_t pool2_out() const { return conv2_out() / 2; }
  /// Width of the flattened activation map at the split layer.
  std::size_t split_features() const {
    return conv2.out_channels * pool2_out() * pool2_out();
  }
  Shape split_shape(std::size_t batch) const {
    return {batch, conv2.out_channels, pool2_out(), pool2_out()};
  }

  void validate() const {
    if (conv2.in_channels != conv1.out_channels) {
      throw ConfigError("conv2 input channels must equal conv1 output channels");
    }
    if (input_size < conv1.kernel || conv1_out() % 2 ||
        pool1_out() < conv2.kernel || conv2_out() % 2) {
      throw ConfigError("input size / kernels do not give even pooling inputs");
    }
    if (hidden == 0 || classes == 0) throw ConfigError("empty fc layer");
  }

  std::vector<LayerSpec> layers() const {
    std::vector<LayerSpec> l = {
        {LayerKind::kConv2d, Side::kClient, conv1.in_channels, conv1.out_channels, conv1.kernel},
        {LayerKind::kMaxPool2, Side::kClient, conv1.out_channels, conv1.out_channels},
        {LayerKind::kRelu, Side::kClient, conv1.out_channels, conv1.out_channels},
        {LayerKind::kConv2d, Side::kClient, conv2.in_channels, conv2.out_channels, conv2.kernel},
        {LayerKind::kMaxPool2, Side::kClient, conv2.out_channels, conv2.out_channels},
        {LayerKind::kRelu, Side::kClient, conv2.out_channels, conv2.out_channels},
        {LayerKind::kFc, Side::kServer, split_features(), hidden},
        {LayerKind::kRelu, Side::kServer, hidden, hidden},
        {LayerKind::kFc, Side::kServer, hidden, classes},
    };
    if (final_relu) l.push_back({LayerKind::kRelu, Side::kServer, classes, classes});
    return l;
  }
  /// Number of leading layers executed by the client.
  std::size_t split_index() const { return 6; }

  friend bool operator==(const ModelArchitecture&, const ModelArchitecture&) = default;
};

// -- parameters ----------------------------------------------------------------

template <typename T>
struct ClientParams {
  Tensor<T> conv1_w, conv1_b, conv2_w, conv2_b;

  std::array<Tensor<T>*, 4> tensors() { return {&conv1_w, &conv1_b, &conv2_w, &conv2_b}; }
  std::array<const Tensor<T>*, 4> tensors() const {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b};
  }
  friend bool operator==(const ClientParams&, const ClientParams&) = default;
};

template <typename T>
struct ServerParams {
  Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;

  std::array<Tensor<T>*, 4> tensors() { return {&fc1_w, &fc1_b, &fc2_w, &fc2_b}; }
  std::array<const Tensor<T>*, 4> tensors() const {
    return {&fc1_w, &fc1_b, &fc2_w, &fc2_b};
  }
  friend bool operator==(const ServerParams&, const ServerParams&) = default;
};

template <typename T>
struct ModelParams {
  ClientParams<T> client;
  ServerParams<T> server;
};

template <typename Params>
Params zeros_like(const Params& p) {
  Params out = p;
  for (auto* t : out.tensors()) std::fill(t->values().begin(), t->values().end(), 0);
  return out;
}

template <typename Params, typename Fn>
auto map_params(const Params& p, Fn&& fn) {
  Params out = p;
  auto src = p.tensors();
  auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = fn(*src[i]);
  return out;
}

/// Deterministic initialization: every weight and bias drawn uniformly from
/// +-sqrt(1/fan_in), in layer order, from one seeded stream.
inline ModelParams<double> init_model(const ModelArchitecture& arch,
                                      std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 gen(seed);
  auto draw = [&gen](Shape shape, std::size_t fan_in) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values()) v = dist(gen);
    return t;
  };
  const auto& c1 = arch.conv1;
  const auto& c2 = arch.conv2;
  const std::size_t fan1 = c1.in_channels * c1.kernel * c1.kernel;
  const std::size_t fan2 = c2.in_channels * c2.kernel * c2.kernel;
  ModelParams<double> m;
  m.client.conv1_w = draw({c1.out_channels, c1.in_channels, c1.kernel, c1.kernel}, fan1);
  m.client.conv1_b = draw({c1.out_channels}, fan1);
  m.client.conv2_w = draw({c2.out_channels, c2.in_channels, c2.kernel, c2.kernel}, fan2);
  m.client.conv2_b = draw({c2.out_channels}, fan2);
  m.server.fc1_w = draw({arch.hidden, arch.split_features()}, arch.split_features());
  m.server.fc1_b = draw({arch.hidden}, arch.split_features());
  m.server.fc2_w = draw({arch.classes, arch.hidden}, arch.hidden);
  m.server.fc2_b = draw({arch.classes}, arch.hidden);
  return m;
}

template <typename Params>
auto encode_params(const Params& p, const FixedPointConfig& cfg) {
  using Out = std::conditional_t<std::is_same_v<Params, ClientParams<double>>,
                                 ClientParams<Elem>, ServerParams<Elem>>;
  Out out;
  auto src = p.tensors();
  auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = encode_tensor(*src[i], cfg);
  return out;
}

template <typename Params>
auto decode_params(const Params& p, const FixedPointConfig& cfg) {
  using Out = std::conditional_t<std::is_same_v<Params, ClientParams<Elem>>,
                                 ClientParams<double>, ServerParams<double>>;
  Out out;
  auto src = p.tensors();
  auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = decode_tensor(*src[i], cfg);
  return out;
}

// -- client stack --------------------------------------------------------------

template <typename T>
struct ClientCache {
  Tensor<T> input;       // [N,1,28,28]
  Tensor<T> conv1_out;   // [N,16,24,24]
  Tensor<T> pool1_out;   // [N,16,12,12], relu input
  Tensor<std::uint8_t> pool1_idx;
  Tensor<T> relu1_out;
  Tensor<T> conv2_out;   // [N,16,8,8]
  Tensor<T> pool2_out;   // [N,16,4,4], relu input
  Tensor<std::uint8_t> pool2_idx;
  Tensor<T> atm;         // split-layer activation map [N,16,4,4]

  bool valid() const { return !atm.empty(); }
};

template <typename Arith, typename T = typename Arith::value_type>
ClientCache<T> client_forward(const Arith& ar, const ClientParams<T>& p,
                              Tensor<T> input) {
  ClientCache<T> c;
  c.input = std::move(input);
  c.conv1_out = conv2d(ar, c.input, p.conv1_w, p.conv1_b);
  auto pool1 = maxpool2(ar, c.conv1_out);
  c.pool1_out = std::move(pool1.output);
  c.pool1_idx = std::move(pool1.argmax);
  c.relu1_out = relu(ar, c.pool1_out);
  c.conv2_out = conv2d(ar, c.relu1_out, p.conv2_w, p.conv2_b);
  auto pool2 = maxpool2(ar, c.conv2_out);
  c.pool2_out = std::move(pool2.output);
  c.pool2_idx = std::move(pool2.argmax);
  c.atm = relu(ar, c.pool2_out);
  return c;
}

/// Parameter gradients of the client stack from dJ/dATm (any shape with the
/// split-layer element count).
template <typename Arith, typename T = typename Arith::value_type>
ClientParams<T> client_backward(const Arith& ar, const ClientParams<T>& p,
                                const ClientCache<T>& c, const Tensor<T>& grad_atm) {
  if (!c.valid()) throw Error("client_backward: no cached forward pass");
  if (grad_atm.size() != c.atm.size()) {
    throw ShapeError("client_backward: gradient has " + std::to_string(grad_atm.size()) +
                     " elements, activation map has " + std::to_string(c.atm.size()));
  }
  const Tensor<T> g_atm = grad_atm.reshaped(c.atm.shape());
  auto g_pool2 = relu_backward(ar, g_atm, c.pool2_out);
  auto g_conv2 = maxpool2_backward(g_pool2, c.pool2_idx, c.conv2_out.shape(), ar.zero());
  auto conv2_g = conv2d_backward(ar, c.relu1_out, p.conv2_w, g_conv2, true);
  auto g_pool1 = relu_backward(ar, conv2_g.input, c.pool1_out);
  auto g_conv1 = maxpool2_backward(g_pool1, c.pool1_idx, c.conv1_out.shape(), ar.zero());
  auto conv1_g = conv2d_backward(ar, c.input, p.conv1_w, g_conv1, false);
  return ClientParams<T>{std::move(conv1_g.kernels), std::move(conv1_g.bias),
                         std::move(conv2_g.kernels), std::move(conv2_g.bias)};
}

// -- server stack --------------------------------------------------------------

template <typename T>
struct ServerCache {
  Tensor<T> input;  // [N, split_features]
  Tensor<T> z1;     // fc1 pre-activation
  Tensor<T> h1;
  Tensor<T> z2;     // fc2 output
  Tensor<T> out;    // z2, or relu(z2) with final_relu

  bool valid() const { return !out.empty(); }
};

template <typename Arith, typename T = typename Arith::value_type>
ServerCache<T> server_forward(const Arith& ar, const ModelArchitecture& arch,
                              const ServerParams<T>& p, Tensor<T> input) {
  ServerCache<T> c;
  const std::size_t n = input.size() / arch.split_features();
  c.input = std::move(input).reshaped({n, arch.split_features()});
  c.z1 = fc(ar, c.input, p.fc1_w, p.fc1_b);
  c.h1 = relu(ar, c.z1);
  c.z2 = fc(ar, c.h1, p.fc2_w, p.fc2_b);
  c.out = arch.final_relu ? relu(ar, c.z2) : c.z2;
  return c;
}

template <typename T>
struct ServerBackward {
  ServerParams<T> grads;
  Tensor<T> grad_input;  // dJ/dATm, [N, split_features]
};

template <typename Arith, typename T = typename Arith::value_type>
ServerBackward<T> server_backward(const Arith& ar, const ModelArchitecture& arch,
                                  const ServerParams<T>& p, const ServerCache<T>& c,
                                  const Tensor<T>& grad_out) {
  if (!c.valid()) throw Error("server_backward: no cached forward pass");
  Tensor<T> g_z2 = arch.final_relu ? relu_backward(ar, grad_out, c.z2) : grad_out;
  auto fc2_g = fc_backward(ar, c.h1, p.fc2_w, g_z2);
  auto g_z1 = relu_backward(ar, fc2_g.input, c.z1);
  auto fc1_g = fc_backward(ar, c.input, p.fc1_w, g_z1);
  return {ServerParams<T>{std::move(fc1_g.weight), std::move(fc1_g.bias),
                          std::move(fc2_g.weight), std::move(fc2_g.bias)},
          std::move(fc1_g.input)};
}

template <typename Arith, typename Params, typename T = typename Arith::value_type>
void apply_sgd(const Arith& ar, Params& params, const Params& grads, Params& velocity,
               T lr, T momentum) {
  auto p = params.tensors();
  auto g = grads.tensors();
  auto v = velocity.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    sgd_momentum_step(ar, *p[i], *g[i], *v[i], lr, momentum);
  }
}

/// Index of the largest logit per row.
template <typename Arith, typename T = typename Arith::value_type>
std::vector<std::uint8_t> argmax_rows(const Arith& ar, const Tensor<T>& logits,
                                      std::size_t classes) {
  const std::size_t n = logits.size() / classes;
  std::vector<std::uint8_t> out(n);
  for (std::size_t b = 0; b < n; ++b) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k) {
      if (ar.greater(logits[b * classes + k], logits[b * classes + best])) best = k;
    }
    out[b] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace splitfss::ring
