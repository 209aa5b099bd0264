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

// CNN layers on batched NCHW tensors. Every layer is a template over a scalar
// policy (RingArith or FloatArith, see fixed_point.hpp). Products are summed
// raw and rescaled once per output element.

#include <cstdint>
#include <vector>

#include "splitfss/ring/fixed_point.hpp"
#include "splitfss/ring/tensor.hpp"

namespace splitfss::ring {

namespace detail {

/// Views a [C,H,W] tensor as [1,C,H,W]; leaves 4-d tensors alone.
inline Shape as_batched(const Shape& s, const char* op) {
  if (s.size() == 4) return s;
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  throw ShapeError(std::string(op) + ": expected [N,C,H,W] or [C,H,W], got " +
                   shape_str(s));
}

}  // namespace detail

// -- convolution ---------------------------------------------------------------

/// Valid, stride-1 cross-correlation. input [N,Cin,H,W] (or [Cin,H,W]),
/// kernels [Cout,Cin,k,k], bias [Cout] -> [N,Cout,H-k+1,W-k+1].
template <typename Arith, typename T = typename Arith::value_type>
Tensor<T> conv2d(const Arith& ar, const Tensor<T>& input,
                 const Tensor<T>& kernels, const Tensor<T>& bias) {
  const bool unbatched = input.rank() == 3;
  const Shape in = detail::as_batched(input.shape(), "conv2d");
  if (kernels.rank() != 4 || kernels.dim(1) != in[1] ||
      kernels.dim(2) != kernels.dim(3)) {
    throw ShapeError("conv2d: kernels " + shape_str(kernels.shape()) +
                     " incompatible with input " + shape_str(input.shape()));
  }
  const std::size_t n = in[0], cin = in[1], h = in[2], w = in[3];
  const std::size_t cout = kernels.dim(0), k = kernels.dim(2);
  if (h < k || w < k) throw ShapeError("conv2d: input smaller than kernel");
  if (bias.size() != cout) throw ShapeError("conv2d: bias length mismatch");
  const std::size_t ho = h - k + 1, wo = w - k + 1;

  Tensor<T> out(Shape{n, cout, ho, wo});
  std::vector<T> acc(ho * wo);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      std::fill(acc.begin(), acc.end(), ar.zero());
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* plane = input.data() + ((b * cin + ci) * h) * w;
        const T* kern = kernels.data() + ((co * cin + ci) * k) * k;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const T wv = kern[ky * k + kx];
            for (std::size_t y = 0; y < ho; ++y) {
              const T* row = plane + (y + ky) * w + kx;
              T* arow = acc.data() + y * wo;
              for (std::size_t x = 0; x < wo; ++x) {
                arow[x] = ar.mac(arow[x], wv, row[x]);
              }
            }
          }
        }
      }
      T* o = out.data() + ((b * cout + co) * ho) * wo;
      for (std::size_t i = 0; i < ho * wo; ++i) {
        o[i] = ar.add(ar.finish(acc[i]), bias[co]);
      }
    }
  }
  if (unbatched) out.reshape({cout, ho, wo});
  return out;
}

template <typename T>
struct ConvGrads {
  Tensor<T> kernels;
  Tensor<T> bias;
  Tensor<T> input;  // empty unless requested
};

/// Gradients of conv2d given the upstream gradient [N,Cout,Ho,Wo].
template <typename Arith, typename T = typename Arith::value_type>
ConvGrads<T> conv2d_backward(const Arith& ar, const Tensor<T>& input,
                             const Tensor<T>& kernels, const Tensor<T>& grad_out,
                             bool want_input_grad) {
  const Shape in = detail::as_batched(input.shape(), "conv2d_backward");
  const Shape go = detail::as_batched(grad_out.shape(), "conv2d_backward");
  const std::size_t n = in[0], cin = in[1], h = in[2], w = in[3];
  const std::size_t cout = kernels.dim(0), k = kernels.dim(2);
  const std::size_t ho = h - k + 1, wo = w - k + 1;
  if (go != Shape{n, cout, ho, wo}) {
    throw ShapeError("conv2d_backward: grad shape " + shape_str(go));
  }

  ConvGrads<T> g;
  g.kernels = Tensor<T>(kernels.shape());
  g.bias = Tensor<T>(Shape{cout}, ar.zero());
  std::vector<T> kacc(cin * k * k);
  for (std::size_t co = 0; co < cout; ++co) {
    std::fill(kacc.begin(), kacc.end(), ar.zero());
    T bacc = ar.zero();
    for (std::size_t b = 0; b < n; ++b) {
      const T* gp = grad_out.data() + ((b * cout + co) * ho) * wo;
      for (std::size_t i = 0; i < ho * wo; ++i) bacc = ar.add(bacc, gp[i]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* plane = input.data() + ((b * cin + ci) * h) * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            T a = kacc[(ci * k + ky) * k + kx];
            for (std::size_t y = 0; y < ho; ++y) {
              const T* row = plane + (y + ky) * w + kx;
              const T* grow = gp + y * wo;
              for (std::size_t x = 0; x < wo; ++x) a = ar.mac(a, grow[x], row[x]);
            }
            kacc[(ci * k + ky) * k + kx] = a;
          }
        }
      }
    }
    for (std::size_t i = 0; i < kacc.size(); ++i) {
      g.kernels[co * cin * k * k + i] = ar.finish(kacc[i]);
    }
    g.bias[co] = bacc;
  }

  if (want_input_grad) {
    Tensor<T> acc(Shape{n, cin, h, w}, ar.zero());
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t co = 0; co < cout; ++co) {
        const T* gp = grad_out.data() + ((b * cout + co) * ho) * wo;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          T* plane = acc.data() + ((b * cin + ci) * h) * w;
          const T* kern = kernels.data() + ((co * cin + ci) * k) * k;
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const T wv = kern[ky * k + kx];
              for (std::size_t y = 0; y < ho; ++y) {
                T* row = plane + (y + ky) * w + kx;
                const T* grow = gp + y * wo;
                for (std::size_t x = 0; x < wo; ++x) row[x] = ar.mac(row[x], grow[x], wv);
              }
            }
          }
        }
      }
    }
    for (auto& v : acc.values()) v = ar.finish(v);
    acc.reshape(input.shape());
    g.input = std::move(acc);
  }
  return g;
}

// -- max pooling ---------------------------------------------------------------

template <typename T>
struct PoolResult {
  Tensor<T> output;
  /// Position of the max inside each 2x2 window: 0 top-left, 1 top-right,
  /// 2 bottom-left, 3 bottom-right. Ties resolve to the lowest position.
  Tensor<std::uint8_t> argmax;
};

template <typename Arith, typename T = typename Arith::value_type>
PoolResult<T> maxpool2(const Arith& ar, const Tensor<T>& input) {
  const bool unbatched = input.rank() == 3;
  const Shape in = detail::as_batched(input.shape(), "maxpool2");
  const std::size_t n = in[0], c = in[1], h = in[2], w = in[3];
  if (h % 2 || w % 2) {
    throw ShapeError("maxpool2: spatial dims must be even, got " +
                     shape_str(input.shape()));
  }
  const std::size_t ho = h / 2, wo = w / 2;
  PoolResult<T> r{Tensor<T>(Shape{n, c, ho, wo}),
                  Tensor<std::uint8_t>(Shape{n, c, ho, wo})};
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* plane = input.data() + p * h * w;
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t x = 0; x < wo; ++x) {
        const T cand[4] = {plane[2 * y * w + 2 * x], plane[2 * y * w + 2 * x + 1],
                           plane[(2 * y + 1) * w + 2 * x],
                           plane[(2 * y + 1) * w + 2 * x + 1]};
        std::uint8_t best = 0;
        for (std::uint8_t i = 1; i < 4; ++i) {
          if (ar.greater(cand[i], cand[best])) best = i;
        }
        const std::size_t o = p * ho * wo + y * wo + x;
        r.output[o] = cand[best];
        r.argmax[o] = best;
      }
    }
  }
  if (unbatched) {
    r.output.reshape({c, ho, wo});
    r.argmax.reshape({c, ho, wo});
  }
  return r;
}

/// Routes each pooled gradient back to the window position that won.
template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& grad_out,
                            const Tensor<std::uint8_t>& argmax,
                            const Shape& input_shape, T zero = T{}) {
  const Shape in = detail::as_batched(input_shape, "maxpool2_backward");
  const std::size_t h = in[2], w = in[3], ho = h / 2, wo = w / 2;
  if (grad_out.size() != argmax.size() || grad_out.size() != in[0] * in[1] * ho * wo) {
    throw ShapeError("maxpool2_backward: gradient/index shape mismatch");
  }
  Tensor<T> out(input_shape, zero);
  for (std::size_t p = 0; p < in[0] * in[1]; ++p) {
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t x = 0; x < wo; ++x) {
        const std::size_t o = p * ho * wo + y * wo + x;
        const std::size_t dy = argmax[o] / 2, dx = argmax[o] % 2;
        out[p * h * w + (2 * y + dy) * w + 2 * x + dx] = grad_out[o];
      }
    }
  }
  return out;
}

// -- ReLU ----------------------------------------------------------------------

template <typename Arith, typename T = typename Arith::value_type>
Tensor<T> relu(const Arith& ar, const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = ar.nonnegative(input[i]) ? input[i] : ar.zero();
  }
  return out;
}

/// Passes the gradient where the forward input was >= 0. The derivative at
/// exactly zero is taken as 1, which is what the secure sign test yields.
template <typename Arith, typename T = typename Arith::value_type>
Tensor<T> relu_backward(const Arith& ar, const Tensor<T>& grad_out,
                        const Tensor<T>& forward_input) {
  require_same_shape(grad_out.shape(), forward_input.shape(), "relu_backward");
  Tensor<T> out(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    out[i] = ar.nonnegative(forward_input[i]) ? grad_out[i] : ar.zero();
  }
  return out;
}

// -- fully connected -----------------------------------------------------------

/// input [N,n_in] (or [n_in]), weight [n_out,n_in], bias [n_out].
template <typename Arith, typename T = typename Arith::value_type>
Tensor<T> fc(const Arith& ar, const Tensor<T>& input, const Tensor<T>& weight,
             const Tensor<T>& bias) {
  const bool unbatched = input.rank() == 1;
  if (weight.rank() != 2) throw ShapeError("fc: weight must be 2-d");
  const std::size_t nout = weight.dim(0), nin = weight.dim(1);
  if (input.size() % nin != 0 || (!unbatched && input.shape().back() != nin)) {
    throw ShapeError("fc: input " + shape_str(input.shape()) +
                     " incompatible with weight " + shape_str(weight.shape()));
  }
  if (bias.size() != nout) throw ShapeError("fc: bias length mismatch");
  const std::size_t n = input.size() / nin;
  Tensor<T> out(Shape{n, nout});
  for (std::size_t b = 0; b < n; ++b) {
    const T* x = input.data() + b * nin;
    for (std::size_t o = 0; o < nout; ++o) {
      const T* wr = weight.data() + o * nin;
      T acc = ar.zero();
      for (std::size_t i = 0; i < nin; ++i) acc = ar.mac(acc, wr[i], x[i]);
      out[b * nout + o] = ar.add(ar.finish(acc), bias[o]);
    }
  }
  if (unbatched) out.reshape({nout});
  return out;
}

template <typename T>
struct FcGrads {
  Tensor<T> weight;
  Tensor<T> bias;
  Tensor<T> input;
};

template <typename Arith, typename T = typename Arith::value_type>
FcGrads<T> fc_backward(const Arith& ar, const Tensor<T>& input,
                       const Tensor<T>& weight, const Tensor<T>& grad_out) {
  const std::size_t nout = weight.dim(0), nin = weight.dim(1);
  const std::size_t n = input.size() / nin;
  if (grad_out.size() != n * nout) throw ShapeError("fc_backward: grad shape");
  FcGrads<T> g{Tensor<T>(weight.shape()), Tensor<T>(Shape{nout}, ar.zero()),
               Tensor<T>(input.shape())};
  for (std::size_t o = 0; o < nout; ++o) {
    T bacc = ar.zero();
    for (std::size_t b = 0; b < n; ++b) bacc = ar.add(bacc, grad_out[b * nout + o]);
    g.bias[o] = bacc;
    for (std::size_t i = 0; i < nin; ++i) {
      T acc = ar.zero();
      for (std::size_t b = 0; b < n; ++b) {
        acc = ar.mac(acc, grad_out[b * nout + o], input[b * nin + i]);
      }
      g.weight[o * nin + i] = ar.finish(acc);
    }
  }
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < nin; ++i) {
      T acc = ar.zero();
      for (std::size_t o = 0; o < nout; ++o) {
        acc = ar.mac(acc, grad_out[b * nout + o], weight[o * nin + i]);
      }
      g.input[b * nin + i] = ar.finish(acc);
    }
  }
  return g;
}

// -- loss and optimizer ------------------------------------------------------

/// Mean over the batch of the per-sample squared error summed over classes.
template <typename Arith, typename T = typename Arith::value_type>
double mse_loss(const Arith& ar, const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "mse_loss");
  const std::size_t n = pred.rank() == 2 ? pred.dim(0) : 1;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = ar.to_double(pred[i]) - ar.to_double(target[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(n);
}

/// d(mse_loss)/d(pred) = scale * (pred - target) with scale = 2 / batch.
template <typename Arith, typename T = typename Arith::value_type>
Tensor<T> mse_grad(const Arith& ar, const Tensor<T>& pred, const Tensor<T>& target,
                   T scale) {
  require_same_shape(pred.shape(), target.shape(), "mse_grad");
  Tensor<T> out(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out[i] = ar.mul(scale, ar.sub(pred[i], target[i]));
  }
  return out;
}

/// v <- momentum * v + grad; param <- param - lr * v.
template <typename Arith, typename T = typename Arith::value_type>
void sgd_momentum_step(const Arith& ar, Tensor<T>& param, const Tensor<T>& grad,
                       Tensor<T>& velocity, T lr, T momentum) {
  require_same_shape(param.shape(), grad.shape(), "sgd_momentum_step");
  require_same_shape(param.shape(), velocity.shape(), "sgd_momentum_step");
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = ar.add(ar.mul(momentum, velocity[i]), grad[i]);
    param[i] = ar.sub(param[i], ar.mul(lr, velocity[i]));
  }
}

}  // namespace splitfss::ring
