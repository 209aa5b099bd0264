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

#include <cmath>
#include <cstdint>
#include <random>

#include <gtest/gtest.h>

#include "splitfss/ring/model.hpp"
#include "test_util.hpp"

namespace splitfss::ring {
namespace {

using splitfss::testing::random_fixed;
using splitfss::testing::random_real;

const FixedPointConfig kCfg{64, 16};

// Same as RingArith but without the rescale, so layer outputs can be compared
// exactly against raw integer sums.
struct RawRingArith : RingArith {
  value_type finish(value_type acc) const { return reduce(acc, cfg); }
};

// -- encode / decode -----------------------------------------------------------

TEST(FixedPoint, EncodeExamples) {
  EXPECT_EQ(encode_fixed(0.0, kCfg), 0u);
  EXPECT_EQ(encode_fixed(1.0, kCfg), 65536u);
  EXPECT_EQ(encode_fixed(-1.0, kCfg), ~std::uint64_t{0} - 65536u + 1u);
}

TEST(FixedPoint, DecodeExamples) {
  EXPECT_EQ(decode_fixed(65536, kCfg), 1.0);
  EXPECT_EQ(decode_fixed(0, kCfg), 0.0);
  EXPECT_EQ(decode_fixed(~std::uint64_t{0} - 32768u + 1u, kCfg), -0.5);
}

TEST(FixedPoint, EncodeRejectsOutOfRange) {
  EXPECT_THROW(encode_fixed(std::ldexp(1.0, 47), kCfg), EncodingError);
  EXPECT_THROW(encode_fixed(-std::ldexp(1.0, 47), kCfg), EncodingError);
  EXPECT_THROW(encode_fixed(NAN, kCfg), EncodingError);
  const FixedPointConfig small{16, 4};
  EXPECT_THROW(encode_fixed(2048.0, small), EncodingError);
  EXPECT_NO_THROW(encode_fixed(2047.9, small));
}

TEST(FixedPoint, ConfigValidation) {
  EXPECT_THROW((FixedPointConfig{48, 16}.validate()), ConfigError);
  EXPECT_THROW((FixedPointConfig{64, 0}.validate()), ConfigError);
  EXPECT_THROW((FixedPointConfig{32, 16}.validate()), ConfigError);
  EXPECT_NO_THROW((FixedPointConfig{32, 12}.validate()));
  EXPECT_NO_THROW((FixedPointConfig{16, 4}.validate()));
}

TEST(FixedPoint, RoundTripProperty) {
  std::mt19937_64 gen(1);
  for (const FixedPointConfig cfg : {FixedPointConfig{64, 16}, FixedPointConfig{32, 12},
                                     FixedPointConfig{16, 4}}) {
    std::uniform_real_distribution<double> dist(-cfg.max_magnitude() * 0.999,
                                                cfg.max_magnitude() * 0.999);
    const double tol = std::ldexp(1.0, -cfg.frac_bits - 1);
    for (int i = 0; i < 20000; ++i) {
      const double v = dist(gen);
      ASSERT_LE(std::fabs(decode_fixed(encode_fixed(v, cfg), cfg) - v), tol) << v;
    }
  }
}

TEST(FixedPoint, WrappingClosure) {
  std::mt19937_64 gen(2);
  for (const FixedPointConfig cfg : {FixedPointConfig{64, 16}, FixedPointConfig{32, 12},
                                     FixedPointConfig{16, 4}}) {
    for (int i = 0; i < 10000; ++i) {
      const Elem a = gen() & cfg.mask(), b = gen() & cfg.mask();
      ASSERT_EQ(sub(add(a, b, cfg), b, cfg), a);
      ASSERT_EQ(add(a, b, cfg) & ~cfg.mask(), 0u);
      ASSERT_EQ(mul(a, b, cfg) & ~cfg.mask(), 0u);
    }
  }
}

TEST(FixedPoint, TruncateIsFloorOfSignedValue) {
  const FixedPointConfig cfg{32, 8};
  EXPECT_EQ(to_signed(truncate(from_signed(-1, cfg), cfg), cfg), -1);
  EXPECT_EQ(to_signed(truncate(from_signed(-256, cfg), cfg), cfg), -1);
  EXPECT_EQ(to_signed(truncate(from_signed(511, cfg), cfg), cfg), 1);
}

// -- convolution -------------------------------------------------------------

// Quadruple-loop reference on signed integers, no rescale.
RingTensor conv_oracle_raw(const RingTensor& in, const RingTensor& k) {
  const std::size_t cin = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t cout = k.dim(0), ks = k.dim(2), ho = h - ks + 1, wo = w - ks + 1;
  RingTensor out({cout, ho, wo});
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x) {
        __int128 s = 0;
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t i = 0; i < ks; ++i)
            for (std::size_t j = 0; j < ks; ++j)
              s += static_cast<__int128>(to_signed(in[(ci * h + y + i) * w + x + j], kCfg)) *
                   to_signed(k[((co * cin + ci) * ks + i) * ks + j], kCfg);
        out[(co * ho + y) * wo + x] = static_cast<Elem>(s);
      }
  return out;
}

TEST(Conv2d, ArchitectureShape) {
  std::mt19937_64 gen(3);
  auto x = random_fixed(gen, {1, 28, 28}, 1.0, kCfg);
  auto k = random_fixed(gen, {16, 1, 5, 5}, 0.2, kCfg);
  auto out = conv2d(RingArith{kCfg}, x, k, RingTensor({16}));
  EXPECT_EQ(out.shape(), (Shape{16, 24, 24}));
}

TEST(Conv2d, IdentityDeltaCrops) {
  std::mt19937_64 gen(4);
  auto x = random_fixed(gen, {1, 7, 7}, 3.0, kCfg);
  RingTensor k({1, 1, 3, 3});
  k[4] = encode_fixed(1.0, kCfg);  // centre tap
  auto out = conv2d(RingArith{kCfg}, x, k, RingTensor({1}));
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t xx = 0; xx < 5; ++xx)
      EXPECT_EQ(out[y * 5 + xx], x[(y + 1) * 7 + xx + 1]);
}

TEST(Conv2d, MatchesBruteForceSmall) {
  std::mt19937_64 gen(5);
  auto x = random_fixed(gen, {1, 6, 6}, 2.0, kCfg);
  auto k = random_fixed(gen, {1, 1, 3, 3}, 1.0, kCfg);
  RingTensor zero_b({1});
  auto raw = conv2d(RawRingArith{{kCfg}}, x, k, zero_b);
  EXPECT_EQ(raw, conv_oracle_raw(x, k));
}

TEST(Conv2d, RandomTensorsAgreeWithOracle) {
  std::mt19937_64 gen(6);
  std::uniform_int_distribution<int> dim(0, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t cin = 1 + dim(gen), cout = 1 + dim(gen), ks = 1 + dim(gen) % 3;
    const std::size_t h = ks + dim(gen), w = ks + dim(gen);
    auto x = random_fixed(gen, {cin, h, w}, 4.0, kCfg);
    auto k = random_fixed(gen, {cout, cin, ks, ks}, 1.0, kCfg);
    auto b = random_fixed(gen, {cout}, 1.0, kCfg);
    auto raw_oracle = conv_oracle_raw(x, k);
    ASSERT_EQ(conv2d(RawRingArith{{kCfg}}, x, k, RingTensor({cout})), raw_oracle);
    auto out = conv2d(RingArith{kCfg}, x, k, b);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const std::size_t co = i / (out.size() / cout);
      const Elem expect = add(truncate(raw_oracle[i], kCfg), b[co], kCfg);
      ASSERT_LE(ulp_distance(out[i], expect, kCfg), 1u);
    }
  }
}

TEST(Conv2d, ShapeMismatchThrows) {
  RingTensor x({2, 5, 5}), k({1, 1, 3, 3}), b({1});
  EXPECT_THROW(conv2d(RingArith{kCfg}, x, k, b), ShapeError);
  RingTensor x2({1, 2, 2});
  EXPECT_THROW(conv2d(RingArith{kCfg}, x2, k, b), ShapeError);
}

// -- max pooling -------------------------------------------------------------

TEST(MaxPool, Shapes) {
  RingTensor x({16, 24, 24});
  EXPECT_EQ(maxpool2(RingArith{kCfg}, x).output.shape(), (Shape{16, 12, 12}));
  EXPECT_THROW(maxpool2(RingArith{kCfg}, RingTensor({1, 5, 4})), ShapeError);
}

TEST(MaxPool, ConstantTensor) {
  RingTensor x({2, 4, 4}, encode_fixed(-0.75, kCfg));
  auto r = maxpool2(RingArith{kCfg}, x);
  for (std::size_t i = 0; i < r.output.size(); ++i) {
    EXPECT_EQ(r.output[i], encode_fixed(-0.75, kCfg));
    EXPECT_EQ(r.argmax[i], 0);
  }
}

TEST(MaxPool, RandomAgreesWithWindowOracle) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 1000; ++trial) {
    auto x = random_fixed(gen, {1, 4, 4}, 5.0, kCfg);
    auto r = maxpool2(RingArith{kCfg}, x);
    for (std::size_t wy = 0; wy < 2; ++wy)
      for (std::size_t wx = 0; wx < 2; ++wx) {
        std::int64_t best = INT64_MIN;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx)
            best = std::max(best, to_signed(x[(2 * wy + dy) * 4 + 2 * wx + dx], kCfg));
        ASSERT_EQ(to_signed(r.output[wy * 2 + wx], kCfg), best);
        const auto idx = r.argmax[wy * 2 + wx];
        ASSERT_EQ(x[(2 * wy + idx / 2) * 4 + 2 * wx + idx % 2], r.output[wy * 2 + wx]);
      }
  }
}

// -- relu ------------------------------------------------------------------------

TEST(Relu, Examples) {
  RingTensor x({3});
  x[0] = encode_fixed(-2.5, kCfg);
  x[1] = encode_fixed(3.25, kCfg);
  x[2] = 0;
  auto y = relu(RingArith{kCfg}, x);
  EXPECT_EQ(y[0], 0u);
  EXPECT_EQ(y[1], encode_fixed(3.25, kCfg));
  EXPECT_EQ(y[2], 0u);
}

// -- fully connected ---------------------------------------------------------

TEST(Fc, IdentityAndBiasOnly) {
  std::mt19937_64 gen(8);
  auto x = random_fixed(gen, {4}, 3.0, kCfg);
  RingTensor eye({4, 4});
  for (int i = 0; i < 4; ++i) eye[i * 4 + i] = encode_fixed(1.0, kCfg);
  EXPECT_EQ(fc(RingArith{kCfg}, x, eye, RingTensor({4})), x);

  auto b = random_fixed(gen, {3}, 3.0, kCfg);
  EXPECT_EQ(fc(RingArith{kCfg}, x, RingTensor({3, 4}), b), b);
}

TEST(Fc, RandomAgreesWithDoubleLoop) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 1000; ++trial) {
    auto x = random_fixed(gen, {4}, 4.0, kCfg);
    auto w = random_fixed(gen, {3, 4}, 1.0, kCfg);
    auto b = random_fixed(gen, {3}, 1.0, kCfg);
    auto out = fc(RingArith{kCfg}, x, w, b);
    for (std::size_t o = 0; o < 3; ++o) {
      __int128 s = 0;
      for (std::size_t i = 0; i < 4; ++i)
        s += static_cast<__int128>(to_signed(w[o * 4 + i], kCfg)) * to_signed(x[i], kCfg);
      const auto floor_div = static_cast<std::int64_t>(s >> kCfg.frac_bits);
      const Elem expect = add(from_signed(floor_div, kCfg), b[o], kCfg);
      ASSERT_LE(ulp_distance(out[o], expect, kCfg), 1u);
    }
  }
}

TEST(Fc, ShapeMismatchThrows) {
  EXPECT_THROW(fc(RingArith{kCfg}, RingTensor({5}), RingTensor({3, 4}), RingTensor({3})),
               ShapeError);
  EXPECT_THROW(fc(RingArith{kCfg}, RingTensor({4}), RingTensor({3, 4}), RingTensor({2})),
               ShapeError);
}

// -- gradients: float twin against central differences ----------------------

// Scalar objective sum(out * proj) so any layer output can be checked.
double project(const Tensor<double>& out, const Tensor<double>& proj) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * proj[i];
  return s;
}

template <typename Fn>
double numeric_grad(Fn&& objective, Tensor<double>& param, std::size_t i, double h = 1e-6) {
  const double saved = param[i];
  param[i] = saved + h;
  const double up = objective();
  param[i] = saved - h;
  const double down = objective();
  param[i] = saved;
  return (up - down) / (2 * h);
}

void expect_close(double analytic, double numeric, const char* what) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-4});
  EXPECT_LT(std::fabs(analytic - numeric) / denom, 1e-3)
      << what << " analytic=" << analytic << " numeric=" << numeric;
}

TEST(GradientCheck, Conv2dLayer) {
  std::mt19937_64 gen(10);
  FloatArith ar;
  auto x = random_real(gen, {2, 2, 6, 6}, 1.0);
  auto k = random_real(gen, {3, 2, 3, 3}, 0.5);
  auto b = random_real(gen, {3}, 0.5);
  auto proj = random_real(gen, {2, 3, 4, 4}, 1.0);
  auto g = conv2d_backward(ar, x, k, proj, true);
  auto obj = [&] { return project(conv2d(ar, x, k, b), proj); };
  for (std::size_t i = 0; i < k.size(); ++i) expect_close(g.kernels[i], numeric_grad(obj, k, i), "kernel");
  for (std::size_t i = 0; i < b.size(); ++i) expect_close(g.bias[i], numeric_grad(obj, b, i), "bias");
  for (std::size_t i = 0; i < x.size(); i += 7) expect_close(g.input[i], numeric_grad(obj, x, i), "input");
}

TEST(GradientCheck, FcLayer) {
  std::mt19937_64 gen(11);
  FloatArith ar;
  auto x = random_real(gen, {5, 7}, 1.0);
  auto w = random_real(gen, {4, 7}, 0.5);
  auto b = random_real(gen, {4}, 0.5);
  auto proj = random_real(gen, {5, 4}, 1.0);
  auto g = fc_backward(ar, x, w, proj);
  auto obj = [&] { return project(fc(ar, x, w, b), proj); };
  for (std::size_t i = 0; i < w.size(); ++i) expect_close(g.weight[i], numeric_grad(obj, w, i), "weight");
  for (std::size_t i = 0; i < b.size(); ++i) expect_close(g.bias[i], numeric_grad(obj, b, i), "bias");
  for (std::size_t i = 0; i < x.size(); ++i) expect_close(g.input[i], numeric_grad(obj, x, i), "input");
}

TEST(GradientCheck, PoolAndReluLayers) {
  std::mt19937_64 gen(12);
  FloatArith ar;
  auto x = random_real(gen, {2, 3, 4, 4}, 1.0);
  auto proj = random_real(gen, {2, 3, 2, 2}, 1.0);
  auto pooled = maxpool2(ar, x);
  auto gx = maxpool2_backward(proj, pooled.argmax, x.shape());
  auto obj_pool = [&] { return project(maxpool2(ar, x).output, proj); };
  for (std::size_t i = 0; i < x.size(); ++i) expect_close(gx[i], numeric_grad(obj_pool, x, i), "pool");

  auto proj2 = random_real(gen, x.shape(), 1.0);
  auto gr = relu_backward(ar, proj2, x);
  auto obj_relu = [&] { return project(relu(ar, x), proj2); };
  for (std::size_t i = 0; i < x.size(); ++i) expect_close(gr[i], numeric_grad(obj_relu, x, i), "relu");
}

TEST(GradientCheck, FullClientStack) {
  std::mt19937_64 gen(13);
  FloatArith ar;
  ModelArchitecture arch;
  auto params = init_model(arch, 99).client;
  auto x = random_real(gen, {2, 1, 28, 28}, 1.0);
  for (auto& v : x.values()) v = std::fabs(v);
  auto cache = client_forward(ar, params, x);
  auto proj = random_real(gen, cache.atm.shape(), 1.0);
  auto grads = client_backward(ar, params, cache, proj);
  auto obj = [&] { return project(client_forward(ar, params, x).atm, proj); };
  auto ptensors = params.tensors();
  auto gtensors = grads.tensors();
  for (std::size_t t = 0; t < ptensors.size(); ++t) {
    Tensor<double>& p = *ptensors[t];
    const std::size_t step = std::max<std::size_t>(1, p.size() / 40);
    for (std::size_t i = 0; i < p.size(); i += step) {
      expect_close((*gtensors[t])[i], numeric_grad(obj, p, i), "client param");
    }
  }
}

TEST(GradientCheck, ServerStackWithMse) {
  std::mt19937_64 gen(14);
  FloatArith ar;
  for (bool final_relu : {false, true}) {
    ModelArchitecture arch;
    arch.final_relu = final_relu;
    auto params = init_model(arch, 5).server;
    auto x = random_real(gen, {3, 256}, 1.0);
    Tensor<double> y({3, 10});
    for (int b = 0; b < 3; ++b) y[b * 10 + b] = 1.0;
    auto cache = server_forward(ar, arch, params, x);
    auto gout = mse_grad(ar, cache.out, y, 2.0 / 3.0);
    auto back = server_backward(ar, arch, params, cache, gout);
    auto obj = [&] { return mse_loss(ar, server_forward(ar, arch, params, x).out, y); };
    auto ptensors = params.tensors();
    auto gtensors = back.grads.tensors();
    for (std::size_t t = 0; t < ptensors.size(); ++t) {
      Tensor<double>& p = *ptensors[t];
      const std::size_t step = std::max<std::size_t>(1, p.size() / 40);
      for (std::size_t i = 0; i < p.size(); i += step) {
        expect_close((*gtensors[t])[i], numeric_grad(obj, p, i), "server param");
      }
    }
    for (std::size_t i = 0; i < x.size(); i += 17) {
      expect_close(back.grad_input[i], numeric_grad(obj, x, i), "split input");
    }
  }
}

TEST(Backprop, ZeroUpstreamGivesZeroGradients) {
  RingArith ar{kCfg};
  ModelArchitecture arch;
  auto params = encode_params(init_model(arch, 1).client, kCfg);
  std::mt19937_64 gen(15);
  auto x = random_fixed(gen, {2, 1, 28, 28}, 1.0, kCfg);
  auto cache = client_forward(ar, params, x);
  auto grads = client_backward(ar, params, cache, RingTensor(cache.atm.shape()));
  for (const auto* t : grads.tensors())
    for (auto v : t->values()) ASSERT_EQ(v, 0u);
}

TEST(Backprop, MissingCacheThrows) {
  RingArith ar{kCfg};
  ModelArchitecture arch;
  auto params = encode_params(init_model(arch, 1).client, kCfg);
  EXPECT_THROW(client_backward(ar, params, ClientCache<Elem>{}, RingTensor({1, 256})), Error);
}

TEST(Backprop, FixedPointTracksFloatTwin) {
  // The ring instantiation of the client stack stays within a few ULP-scaled
  // tolerance of the double instantiation on identical inputs.
  std::mt19937_64 gen(16);
  RingArith rar{kCfg};
  FloatArith far;
  ModelArchitecture arch;
  auto fparams = init_model(arch, 3).client;
  auto rparams = encode_params(fparams, kCfg);
  auto rx = random_fixed(gen, {2, 1, 28, 28}, 1.0, kCfg);
  auto fx = decode_tensor(rx, kCfg);
  auto rc = client_forward(rar, rparams, rx);
  auto fc_ = client_forward(far, fparams, fx);
  for (std::size_t i = 0; i < rc.atm.size(); ++i)
    ASSERT_NEAR(decode_fixed(rc.atm[i], kCfg), fc_.atm[i], 2e-3);
  auto proj = random_real(gen, rc.atm.shape(), 0.1);
  auto rg = client_backward(rar, rparams, rc, encode_tensor(proj, kCfg));
  auto fg = client_backward(far, fparams, fc_, proj);
  auto rt = rg.tensors();
  auto ft = fg.tensors();
  for (std::size_t t = 0; t < rt.size(); ++t)
    for (std::size_t i = 0; i < rt[t]->size(); ++i)
      ASSERT_NEAR(decode_fixed((*rt[t])[i], kCfg), (*ft[t])[i], 2e-2);
}

// -- optimizer ---------------------------------------------------------------

TEST(Sgd, ZeroGradientLeavesParamUnchanged) {
  RingArith ar{kCfg};
  std::mt19937_64 gen(17);
  auto p = random_fixed(gen, {10}, 1.0, kCfg);
  const auto before = p;
  RingTensor v({10});
  sgd_momentum_step(ar, p, RingTensor({10}), v, encode_fixed(0.05, kCfg),
                    encode_fixed(0.9, kCfg));
  EXPECT_EQ(p, before);
}

TEST(Sgd, ZeroMomentumIsPlainGradientDescent) {
  RingArith ar{kCfg};
  std::mt19937_64 gen(18);
  auto p = random_fixed(gen, {50}, 1.0, kCfg);
  auto g = random_fixed(gen, {50}, 1.0, kCfg);
  const Elem lr = encode_fixed(0.05, kCfg);
  auto expect = p;
  for (std::size_t i = 0; i < p.size(); ++i) expect[i] = sub(p[i], ar.mul(lr, g[i]), kCfg);
  RingTensor v({50});
  sgd_momentum_step(ar, p, g, v, lr, Elem{0});
  EXPECT_EQ(p, expect);
}

TEST(Sgd, TwoStepsConstantGradientClosedForm) {
  RingArith ar{kCfg};
  std::mt19937_64 gen(19);
  const double lr = 0.05, mom = 0.9;
  for (int trial = 0; trial < 200; ++trial) {
    auto p = random_fixed(gen, {8}, 1.0, kCfg);
    auto g = random_fixed(gen, {8}, 1.0, kCfg);
    const auto start = p;
    RingTensor v({8});
    const Elem elr = encode_fixed(lr, kCfg), emom = encode_fixed(mom, kCfg);
    sgd_momentum_step(ar, p, g, v, elr, emom);
    sgd_momentum_step(ar, p, g, v, elr, emom);
    for (std::size_t i = 0; i < p.size(); ++i) {
      // Closed form with the encoded constants: lr * g * (2 + mom).
      const double total = decode_fixed(elr, kCfg) * decode_fixed(g[i], kCfg) *
                           (2.0 + decode_fixed(emom, kCfg));
      const double moved = decode_fixed(sub(start[i], p[i], kCfg), kCfg);
      // Two floor truncations plus lr times the momentum truncation.
      ASSERT_LE(std::fabs(moved - total), (2.0 + lr) * std::ldexp(1.0, -kCfg.frac_bits));
    }
  }
}

// -- architecture --------------------------------------------------------------

TEST(Architecture, SpatialChain) {
  ModelArchitecture arch;
  EXPECT_EQ(arch.conv1_out(), 24u);
  EXPECT_EQ(arch.pool1_out(), 12u);
  EXPECT_EQ(arch.conv2_out(), 8u);
  EXPECT_EQ(arch.pool2_out(), 4u);
  EXPECT_EQ(arch.split_features(), 256u);

  RingArith ar{kCfg};
  auto params = encode_params(init_model(arch, 1).client, kCfg);
  auto cache = client_forward(ar, params, RingTensor({1, 1, 28, 28}));
  EXPECT_EQ(cache.conv1_out.shape(), (Shape{1, 16, 24, 24}));
  EXPECT_EQ(cache.pool1_out.shape(), (Shape{1, 16, 12, 12}));
  EXPECT_EQ(cache.conv2_out.shape(), (Shape{1, 16, 8, 8}));
  EXPECT_EQ(cache.atm.shape(), (Shape{1, 16, 4, 4}));
}

TEST(Architecture, LayerListAndSplit) {
  ModelArchitecture arch;
  auto layers = arch.layers();
  int convs = 0, pools = 0, fcs = 0, relus = 0;
  for (auto& l : layers) {
    convs += l.kind == LayerKind::kConv2d;
    pools += l.kind == LayerKind::kMaxPool2;
    fcs += l.kind == LayerKind::kFc;
    relus += l.kind == LayerKind::kRelu;
  }
  EXPECT_EQ(convs, 2);
  EXPECT_EQ(pools, 2);
  EXPECT_EQ(fcs, 2);
  EXPECT_EQ(relus, 3);
  arch.final_relu = true;
  EXPECT_EQ(arch.layers().size(), 10u);
  for (std::size_t i = 0; i < arch.layers().size(); ++i) {
    EXPECT_EQ(arch.layers()[i].side, i < arch.split_index() ? Side::kClient : Side::kServer);
  }
}

TEST(Architecture, InitIsDeterministic) {
  ModelArchitecture arch;
  auto a = init_model(arch, 42), b = init_model(arch, 42), c = init_model(arch, 43);
  EXPECT_EQ(a.client, b.client);
  EXPECT_EQ(a.server, b.server);
  EXPECT_NE(a.client, c.client);
  for (double v : a.server.fc1_w.values()) ASSERT_LE(std::fabs(v), std::sqrt(1.0 / 256));
}

}  // namespace
}  // namespace splitfss::ring
