/* Copyright 2026 The qvqa Authors. All Rights Reserved.

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

#include "qvqa/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace qvqa::nn {
namespace {

void RequireRank(const RealTensor& t, std::size_t rank, const char* what) {
  Require(t.rank() == rank, ErrorKind::kShape,
          std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
              t.shape().ToString());
}

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Input row/col feeding output index `o` at kernel offset `k`; negative or
// past-the-end values denote padding.
inline std::ptrdiff_t SourceIndex(std::size_t o, std::size_t k, std::size_t stride,
                                  std::size_t pad) {
  return static_cast<std::ptrdiff_t>(o * stride + k) - static_cast<std::ptrdiff_t>(pad);
}

void CheckConvWeights(const RealTensor& input, const RealTensor& weights, const RealTensor& bias,
                      const ConvSpec& spec) {
  RequireRank(input, 3, "conv input");
  Require(input.dim(2) == spec.in_channels, ErrorKind::kShape,
          "conv input channels " + std::to_string(input.dim(2)) + " != spec " +
              std::to_string(spec.in_channels));
  RequireShape(weights.shape(), Shape{spec.kernel_h, spec.kernel_w, spec.in_channels,
                                      spec.out_channels},
               "conv weights");
  RequireShape(bias.shape(), Shape{spec.out_channels}, "conv bias");
}

}  // namespace

ConvGeometry ResolveGeometry(std::size_t in_h, std::size_t in_w, std::size_t kernel_h,
                             std::size_t kernel_w, std::size_t stride, Padding padding) {
  Require(stride >= 1 && kernel_h >= 1 && kernel_w >= 1, ErrorKind::kShape,
          "kernel and stride must be positive");
  ConvGeometry g;
  g.in_h = in_h;
  g.in_w = in_w;
  if (padding == Padding::kValid) {
    Require(in_h >= kernel_h && in_w >= kernel_w, ErrorKind::kShape,
            "kernel larger than input under valid padding");
    g.out_h = (in_h - kernel_h) / stride + 1;
    g.out_w = (in_w - kernel_w) / stride + 1;
    return g;
  }
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const auto total = [&](std::size_t out, std::size_t k, std::size_t in) -> std::size_t {
    const std::size_t need = (out - 1) * stride + k;
    return need > in ? need - in : 0;
  };
  g.pad_top = total(g.out_h, kernel_h, in_h) / 2;
  g.pad_left = total(g.out_w, kernel_w, in_w) / 2;
  return g;
}

std::size_t ConvParamCount(const ConvSpec& spec, bool with_bias) {
  const std::size_t k = spec.kernel_h * spec.kernel_w;
  if (spec.depthwise_separable) {
    std::size_t n = k * spec.in_channels + spec.in_channels * spec.out_channels;
    if (with_bias) n += spec.in_channels + spec.out_channels;
    return n;
  }
  return k * spec.in_channels * spec.out_channels + (with_bias ? spec.out_channels : 0);
}

RealTensor Conv2d(const RealTensor& input, const RealTensor& weights, const RealTensor& bias,
                  const ConvSpec& spec) {
  CheckConvWeights(input, weights, bias, spec);
  const auto g = ResolveGeometry(input.dim(0), input.dim(1), spec.kernel_h, spec.kernel_w,
                                 spec.stride, spec.padding);
  const std::size_t cin = spec.in_channels, cout = spec.out_channels;
  RealTensor out(Shape{g.out_h, g.out_w, cout});
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      double* acc = &out.at3(oy, ox, 0);
      for (std::size_t co = 0; co < cout; ++co) acc[co] = bias[co];
      for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
        const auto iy = SourceIndex(oy, ky, spec.stride, g.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
          const auto ix = SourceIndex(ox, kx, spec.stride, g.pad_left);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
          const double* x = &input.at3(iy, ix, 0);
          const double* w = &weights[((ky * spec.kernel_w + kx) * cin) * cout];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = x[ci];
            const double* wr = w + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) acc[co] += xv * wr[co];
          }
        }
      }
    }
  }
  return out;
}

RealTensor DepthwiseConv2d(const RealTensor& input, const RealTensor& weights,
                           const RealTensor& bias, const ConvSpec& spec) {
  RequireRank(input, 3, "depthwise input");
  const std::size_t c = spec.in_channels;
  Require(input.dim(2) == c, ErrorKind::kShape, "depthwise input channel mismatch");
  RequireShape(weights.shape(), Shape{spec.kernel_h, spec.kernel_w, c}, "depthwise weights");
  RequireShape(bias.shape(), Shape{c}, "depthwise bias");
  const auto g = ResolveGeometry(input.dim(0), input.dim(1), spec.kernel_h, spec.kernel_w,
                                 spec.stride, spec.padding);
  RealTensor out(Shape{g.out_h, g.out_w, c});
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      double* acc = &out.at3(oy, ox, 0);
      for (std::size_t ch = 0; ch < c; ++ch) acc[ch] = bias[ch];
      for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
        const auto iy = SourceIndex(oy, ky, spec.stride, g.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
          const auto ix = SourceIndex(ox, kx, spec.stride, g.pad_left);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
          const double* x = &input.at3(iy, ix, 0);
          const double* w = &weights[(ky * spec.kernel_w + kx) * c];
          for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += x[ch] * w[ch];
        }
      }
    }
  }
  return out;
}

RealTensor DepthwiseSeparableConv2d(const RealTensor& input, const RealTensor& dw_weights,
                                    const RealTensor& dw_bias, const RealTensor& pw_weights,
                                    const RealTensor& pw_bias, const ConvSpec& spec) {
  const RealTensor spatial = DepthwiseConv2d(input, dw_weights, dw_bias, spec);
  ConvSpec pointwise{1, 1, 1, Padding::kValid, spec.in_channels, spec.out_channels, false};
  return Conv2d(spatial, pw_weights, pw_bias, pointwise);
}

RealTensor MaxPool2d(const RealTensor& input, std::size_t window, std::size_t stride) {
  RequireRank(input, 3, "maxpool input");
  Require(window >= 1 && stride >= 1, ErrorKind::kShape, "pool window and stride must be positive");
  Require(window <= input.dim(0) && window <= input.dim(1), ErrorKind::kShape,
          "pool window " + std::to_string(window) + " larger than input " +
              input.shape().ToString());
  const std::size_t oh = (input.dim(0) - window) / stride + 1;
  const std::size_t ow = (input.dim(1) - window) / stride + 1;
  const std::size_t c = input.dim(2);
  RealTensor out(Shape{oh, ow, c});
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double best = input.at3(oy * stride, ox * stride, ch);
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            best = std::max(best, input.at3(oy * stride + ky, ox * stride + kx, ch));
          }
        }
        out.at3(oy, ox, ch) = best;
      }
    }
  }
  return out;
}

RealTensor Dense(const RealTensor& input, const RealTensor& weights, const RealTensor& bias) {
  Require(weights.rank() == 2, ErrorKind::kShape, "dense weights must be [out, in]");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  Require(input.numel() == n, ErrorKind::kShape,
          "dense input length " + std::to_string(input.numel()) + " != " + std::to_string(n));
  RequireShape(bias.shape(), Shape{m}, "dense bias");
  RealTensor out(Shape{m});
  for (std::size_t r = 0; r < m; ++r) {
    double acc = bias[r];
    const double* w = &weights[r * n];
    for (std::size_t i = 0; i < n; ++i) acc += w[i] * input[i];
    out[r] = acc;
  }
  return out;
}

RealTensor CellDense(const RealTensor& grid, const RealTensor& weights, const RealTensor& bias) {
  RequireRank(grid, 3, "cell-dense input");
  Require(weights.rank() == 2 && weights.dim(1) == grid.dim(2), ErrorKind::kShape,
          "cell-dense weights must be [out, channels]");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  RequireShape(bias.shape(), Shape{m}, "cell-dense bias");
  const std::size_t cells = grid.dim(0) * grid.dim(1);
  RealTensor out(Shape{grid.dim(0), grid.dim(1), m});
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const double* x = &grid[cell * n];
    for (std::size_t r = 0; r < m; ++r) {
      double acc = bias[r];
      const double* w = &weights[r * n];
      for (std::size_t i = 0; i < n; ++i) acc += w[i] * x[i];
      out[cell * m + r] = acc;
    }
  }
  return out;
}

RealTensor Relu(const RealTensor& input) {
  RealTensor out = input;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

RealTensor SoftmaxWithTemperature(const RealTensor& logits, double temperature) {
  Require(std::isfinite(temperature) && temperature > 0.0, ErrorKind::kInvalidTemperature,
          "temperature must be positive, got " + std::to_string(temperature));
  Require(logits.numel() > 0, ErrorKind::kShape, "softmax of an empty vector");
  RequireFinite(logits, "softmax logits");
  const double peak = *std::max_element(logits.data().begin(), logits.data().end());
  RealTensor out(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    out[i] = std::exp((logits[i] - peak) / temperature);
    total += out[i];
  }
  for (auto& v : out.data()) v /= total;
  return out;
}

RealTensor LstmSequence(const RealTensor& sequence, const LstmSpec& spec,
                        std::span<const LstmLayerWeights> weights, LstmCache* cache) {
  Require(sequence.rank() == 2 && sequence.dim(1) == spec.input_dim, ErrorKind::kShape,
          "lstm input must be [seq_len, " + std::to_string(spec.input_dim) + "], got " +
              sequence.shape().ToString());
  Require(weights.size() == spec.num_layers, ErrorKind::kShape, "lstm layer count mismatch");
  const std::size_t steps = sequence.dim(0);
  const std::size_t hdim = spec.hidden_dim;
  std::vector<std::vector<double>> layer_inputs(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    layer_inputs[t].assign(&sequence[t * spec.input_dim], &sequence[t * spec.input_dim] + spec.input_dim);
  }
  if (cache) cache->layers.assign(spec.num_layers, {});
  std::vector<double> h(hdim), c(hdim), z(4 * hdim);
  for (std::size_t layer = 0; layer < spec.num_layers; ++layer) {
    const std::size_t in_dim = layer == 0 ? spec.input_dim : hdim;
    const auto& lw = weights[layer];
    RequireShape(lw.w_ih.shape(), Shape{4 * hdim, in_dim}, "lstm w_ih");
    RequireShape(lw.w_hh.shape(), Shape{4 * hdim, hdim}, "lstm w_hh");
    RequireShape(lw.bias.shape(), Shape{4 * hdim}, "lstm bias");
    std::fill(h.begin(), h.end(), 0.0);
    std::fill(c.begin(), c.end(), 0.0);
    LstmCache::Layer* lc = cache ? &cache->layers[layer] : nullptr;
    if (lc) {
      lc->cells.push_back(c);
      lc->hiddens.push_back(h);
    }
    for (std::size_t t = 0; t < steps; ++t) {
      const auto& x = layer_inputs[t];
      for (std::size_t r = 0; r < 4 * hdim; ++r) {
        double acc = lw.bias[r];
        const double* wi = &lw.w_ih[r * in_dim];
        for (std::size_t k = 0; k < in_dim; ++k) acc += wi[k] * x[k];
        const double* wh = &lw.w_hh[r * hdim];
        for (std::size_t k = 0; k < hdim; ++k) acc += wh[k] * h[k];
        z[r] = acc;
      }
      for (std::size_t k = 0; k < hdim; ++k) {
        z[k] = Sigmoid(z[k]);
        z[hdim + k] = Sigmoid(z[hdim + k]);
        z[2 * hdim + k] = std::tanh(z[2 * hdim + k]);
        z[3 * hdim + k] = Sigmoid(z[3 * hdim + k]);
        c[k] = z[hdim + k] * c[k] + z[k] * z[2 * hdim + k];
        h[k] = z[3 * hdim + k] * std::tanh(c[k]);
      }
      if (lc) {
        lc->inputs.push_back(x);
        lc->gates.push_back(z);
        lc->cells.push_back(c);
        lc->hiddens.push_back(h);
      }
      layer_inputs[t] = h;
    }
  }
  return RealTensor(Shape{hdim}, h);
}

std::vector<double> DropoutScale(std::size_t n, double rate, std::uint64_t seed) {
  Require(rate >= 0.0 && rate < 1.0, ErrorKind::kConfig, "dropout rate must lie in [0, 1)");
  std::vector<double> scale(n, 1.0);
  if (rate == 0.0) return scale;
  std::mt19937_64 rng(seed);
  const double keep = 1.0 / (1.0 - rate);
  for (auto& s : scale) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    s = u < rate ? 0.0 : keep;
  }
  return scale;
}

RealTensor MfbExpand(const RealTensor& image_grid, const RealTensor& question,
                     const DenseParams& image_proj, const DenseParams& question_proj,
                     double dropout_rate, std::uint64_t seed, bool training,
                     MfbExpandCache* cache) {
  Require(image_proj.weights.rank() == 2 && question_proj.weights.rank() == 2 &&
              image_proj.weights.dim(0) == question_proj.weights.dim(0),
          ErrorKind::kShape, "image and question projections must share the joint dimension");
  RealTensor img = CellDense(image_grid, image_proj.weights, image_proj.bias);
  RealTensor q = Dense(question, question_proj.weights, question_proj.bias);
  const std::size_t joint = q.numel();
  RealTensor out(img.shape());
  for (std::size_t i = 0; i < img.numel(); ++i) out[i] = img[i] * q[i % joint];
  std::vector<double> scale;
  if (training && dropout_rate > 0.0) {
    scale = DropoutScale(out.numel(), dropout_rate, seed);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= scale[i];
  } else {
    Require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorKind::kConfig,
            "dropout rate must lie in [0, 1)");
  }
  if (cache) {
    cache->image_projected = std::move(img);
    cache->question_projected = std::move(q);
    cache->dropout_scale = std::move(scale);
  }
  return out;
}

RealTensor MfbSqueeze(const RealTensor& expanded, std::size_t factor, MfbSqueezeCache* cache) {
  RequireRank(expanded, 3, "mfb squeeze input");
  Require(factor >= 1 && expanded.dim(2) % factor == 0, ErrorKind::kShape,
          "joint dim " + std::to_string(expanded.dim(2)) + " not divisible by factor " +
              std::to_string(factor));
  const std::size_t k = expanded.dim(2) / factor;
  RealTensor pooled(Shape{expanded.dim(0), expanded.dim(1), k});
  for (std::size_t i = 0; i < pooled.numel(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < factor; ++j) s += expanded[i * factor + j];
    pooled[i] = s;
  }
  RealTensor powered(pooled.shape());
  double sq = 0.0;
  for (std::size_t i = 0; i < pooled.numel(); ++i) {
    const double x = pooled[i];
    powered[i] = (x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0)) * std::sqrt(std::abs(x));
    sq += powered[i] * powered[i];
  }
  const double norm = std::sqrt(sq);
  RealTensor out(pooled.shape());
  if (norm > 0.0) {
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = powered[i] / norm;
  }
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->powered = std::move(powered);
    cache->norm = norm;
  }
  return out;
}

// ---- gradients ----

ParamGrads Conv2dBackward(const RealTensor& input, const RealTensor& weights, const ConvSpec& spec,
                          const RealTensor& grad_output) {
  const auto g = ResolveGeometry(input.dim(0), input.dim(1), spec.kernel_h, spec.kernel_w,
                                 spec.stride, spec.padding);
  const std::size_t cin = spec.in_channels, cout = spec.out_channels;
  RequireShape(grad_output.shape(), Shape{g.out_h, g.out_w, cout}, "conv grad_output");
  ParamGrads grads{RealTensor(input.shape()), RealTensor(weights.shape()), RealTensor(Shape{cout})};
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const double* go = &grad_output.at3(oy, ox, 0);
      for (std::size_t co = 0; co < cout; ++co) grads.bias[co] += go[co];
      for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
        const auto iy = SourceIndex(oy, ky, spec.stride, g.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
          const auto ix = SourceIndex(ox, kx, spec.stride, g.pad_left);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
          const double* x = &input.at3(iy, ix, 0);
          double* gx = &grads.input.at3(iy, ix, 0);
          const std::size_t base = ((ky * spec.kernel_w + kx) * cin) * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* w = &weights[base + ci * cout];
            double* gw = &grads.weights[base + ci * cout];
            double sum = 0.0;
            for (std::size_t co = 0; co < cout; ++co) {
              gw[co] += x[ci] * go[co];
              sum += w[co] * go[co];
            }
            gx[ci] += sum;
          }
        }
      }
    }
  }
  return grads;
}

ParamGrads DepthwiseConv2dBackward(const RealTensor& input, const RealTensor& weights,
                                   const ConvSpec& spec, const RealTensor& grad_output) {
  const auto g = ResolveGeometry(input.dim(0), input.dim(1), spec.kernel_h, spec.kernel_w,
                                 spec.stride, spec.padding);
  const std::size_t c = spec.in_channels;
  RequireShape(grad_output.shape(), Shape{g.out_h, g.out_w, c}, "depthwise grad_output");
  ParamGrads grads{RealTensor(input.shape()), RealTensor(weights.shape()), RealTensor(Shape{c})};
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const double* go = &grad_output.at3(oy, ox, 0);
      for (std::size_t ch = 0; ch < c; ++ch) grads.bias[ch] += go[ch];
      for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
        const auto iy = SourceIndex(oy, ky, spec.stride, g.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
          const auto ix = SourceIndex(ox, kx, spec.stride, g.pad_left);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
          const double* x = &input.at3(iy, ix, 0);
          double* gx = &grads.input.at3(iy, ix, 0);
          const std::size_t base = (ky * spec.kernel_w + kx) * c;
          for (std::size_t ch = 0; ch < c; ++ch) {
            grads.weights[base + ch] += x[ch] * go[ch];
            gx[ch] += weights[base + ch] * go[ch];
          }
        }
      }
    }
  }
  return grads;
}

RealTensor MaxPool2dBackward(const RealTensor& input, std::size_t window, std::size_t stride,
                             const RealTensor& grad_output) {
  const std::size_t oh = (input.dim(0) - window) / stride + 1;
  const std::size_t ow = (input.dim(1) - window) / stride + 1;
  const std::size_t c = input.dim(2);
  RequireShape(grad_output.shape(), Shape{oh, ow, c}, "maxpool grad_output");
  RealTensor grad(input.shape());
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t by = oy * stride, bx = ox * stride;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t y = oy * stride + ky, x = ox * stride + kx;
            if (input.at3(y, x, ch) > input.at3(by, bx, ch)) {
              by = y;
              bx = x;
            }
          }
        }
        grad.at3(by, bx, ch) += grad_output.at3(oy, ox, ch);
      }
    }
  }
  return grad;
}

ParamGrads DenseBackward(const RealTensor& input, const RealTensor& weights,
                         const RealTensor& grad_output) {
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  Require(grad_output.numel() == m && input.numel() == n, ErrorKind::kShape,
          "dense backward shape mismatch");
  ParamGrads grads{RealTensor(input.shape()), RealTensor(weights.shape()), RealTensor(Shape{m})};
  for (std::size_t r = 0; r < m; ++r) {
    const double go = grad_output[r];
    grads.bias[r] = go;
    const double* w = &weights[r * n];
    double* gw = &grads.weights[r * n];
    for (std::size_t i = 0; i < n; ++i) {
      gw[i] = go * input[i];
      grads.input[i] += w[i] * go;
    }
  }
  return grads;
}

ParamGrads CellDenseBackward(const RealTensor& grid, const RealTensor& weights,
                             const RealTensor& grad_output) {
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  const std::size_t cells = grid.dim(0) * grid.dim(1);
  RequireShape(grad_output.shape(), Shape{grid.dim(0), grid.dim(1), m}, "cell-dense grad_output");
  ParamGrads grads{RealTensor(grid.shape()), RealTensor(weights.shape()), RealTensor(Shape{m})};
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const double* x = &grid[cell * n];
    double* gx = &grads.input[cell * n];
    for (std::size_t r = 0; r < m; ++r) {
      const double go = grad_output[cell * m + r];
      grads.bias[r] += go;
      const double* w = &weights[r * n];
      double* gw = &grads.weights[r * n];
      for (std::size_t i = 0; i < n; ++i) {
        gw[i] += go * x[i];
        gx[i] += w[i] * go;
      }
    }
  }
  return grads;
}

RealTensor ReluBackward(const RealTensor& output, const RealTensor& grad_output) {
  RealTensor grad(output.shape());
  for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] = output[i] > 0.0 ? grad_output[i] : 0.0;
  return grad;
}

RealTensor SoftmaxBackward(const RealTensor& probs, const RealTensor& grad_probs,
                           double temperature) {
  double dot = 0.0;
  for (std::size_t i = 0; i < probs.numel(); ++i) dot += probs[i] * grad_probs[i];
  RealTensor grad(probs.shape());
  for (std::size_t i = 0; i < probs.numel(); ++i) {
    grad[i] = probs[i] * (grad_probs[i] - dot) / temperature;
  }
  return grad;
}

LstmGrads LstmBackward(const LstmCache& cache, const LstmSpec& spec,
                       std::span<const LstmLayerWeights> weights, const RealTensor& grad_hidden) {
  const std::size_t hdim = spec.hidden_dim;
  Require(cache.layers.size() == spec.num_layers, ErrorKind::kShape, "lstm cache mismatch");
  const std::size_t steps = cache.layers.front().inputs.size();
  LstmGrads grads;
  grads.layers.resize(spec.num_layers);
  // Gradient flowing into each step's output of the current layer.
  std::vector<std::vector<double>> grad_out(steps, std::vector<double>(hdim, 0.0));
  grad_out.back().assign(grad_hidden.data().begin(), grad_hidden.data().end());
  for (std::size_t li = spec.num_layers; li-- > 0;) {
    const auto& lc = cache.layers[li];
    const auto& lw = weights[li];
    const std::size_t in_dim = lw.w_ih.dim(1);
    auto& lg = grads.layers[li];
    lg.w_ih = RealTensor(lw.w_ih.shape());
    lg.w_hh = RealTensor(lw.w_hh.shape());
    lg.bias = RealTensor(lw.bias.shape());
    std::vector<std::vector<double>> grad_in(steps, std::vector<double>(in_dim, 0.0));
    std::vector<double> dh_next(hdim, 0.0), dc_next(hdim, 0.0), dz(4 * hdim);
    for (std::size_t t = steps; t-- > 0;) {
      const auto& z = lc.gates[t];
      const auto& c = lc.cells[t + 1];
      const auto& c_prev = lc.cells[t];
      const auto& h_prev = lc.hiddens[t];
      for (std::size_t k = 0; k < hdim; ++k) {
        const double i = z[k], f = z[hdim + k], gg = z[2 * hdim + k], o = z[3 * hdim + k];
        const double dh = grad_out[t][k] + dh_next[k];
        const double tc = std::tanh(c[k]);
        const double dc = dh * o * (1.0 - tc * tc) + dc_next[k];
        dz[k] = dc * gg * i * (1.0 - i);
        dz[hdim + k] = dc * c_prev[k] * f * (1.0 - f);
        dz[2 * hdim + k] = dc * i * (1.0 - gg * gg);
        dz[3 * hdim + k] = dh * tc * o * (1.0 - o);
        dc_next[k] = dc * f;
      }
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      const auto& x = lc.inputs[t];
      for (std::size_t r = 0; r < 4 * hdim; ++r) {
        const double d = dz[r];
        lg.bias[r] += d;
        double* gwi = &lg.w_ih[r * in_dim];
        const double* wi = &lw.w_ih[r * in_dim];
        for (std::size_t k = 0; k < in_dim; ++k) {
          gwi[k] += d * x[k];
          grad_in[t][k] += wi[k] * d;
        }
        double* gwh = &lg.w_hh[r * hdim];
        const double* wh = &lw.w_hh[r * hdim];
        for (std::size_t k = 0; k < hdim; ++k) {
          gwh[k] += d * h_prev[k];
          dh_next[k] += wh[k] * d;
        }
      }
    }
    grad_out = std::move(grad_in);
  }
  grads.input = RealTensor(Shape{steps, spec.input_dim});
  for (std::size_t t = 0; t < steps; ++t) {
    std::copy(grad_out[t].begin(), grad_out[t].end(), &grads.input[t * spec.input_dim]);
  }
  return grads;
}

MfbExpandGrads MfbExpandBackward(const RealTensor& image_grid, const RealTensor& question,
                                 const DenseParams& image_proj, const DenseParams& question_proj,
                                 const MfbExpandCache& cache, const RealTensor& grad_output) {
  const RealTensor& img = cache.image_projected;
  const RealTensor& q = cache.question_projected;
  RequireShape(grad_output.shape(), img.shape(), "mfb expand grad_output");
  const std::size_t joint = q.numel();
  RealTensor grad_img(img.shape());
  RealTensor grad_q(q.shape());
  for (std::size_t i = 0; i < img.numel(); ++i) {
    double ge = grad_output[i];
    if (!cache.dropout_scale.empty()) ge *= cache.dropout_scale[i];
    grad_img[i] = ge * q[i % joint];
    grad_q[i % joint] += ge * img[i];
  }
  ParamGrads gi = CellDenseBackward(image_grid, image_proj.weights, grad_img);
  ParamGrads gq = DenseBackward(question, question_proj.weights, grad_q);
  return {std::move(gi.input), std::move(gq.input), {std::move(gi.weights), std::move(gi.bias)},
          {std::move(gq.weights), std::move(gq.bias)}};
}

RealTensor MfbSqueezeBackward(const MfbSqueezeCache& cache, std::size_t factor,
                              const RealTensor& grad_output) {
  const RealTensor& pooled = cache.pooled;
  RequireShape(grad_output.shape(), pooled.shape(), "mfb squeeze grad_output");
  RealTensor grad(Shape{pooled.dim(0), pooled.dim(1), pooled.dim(2) * factor});
  if (cache.norm == 0.0) return grad;
  double dot = 0.0;
  for (std::size_t i = 0; i < pooled.numel(); ++i) {
    dot += cache.powered[i] / cache.norm * grad_output[i];
  }
  for (std::size_t i = 0; i < pooled.numel(); ++i) {
    const double y = cache.powered[i] / cache.norm;
    const double d_powered = (grad_output[i] - y * dot) / cache.norm;
    const double x = std::abs(pooled[i]);
    const double d_pooled = x > 0.0 ? d_powered * 0.5 / std::sqrt(x) : 0.0;
    for (std::size_t j = 0; j < factor; ++j) grad[i * factor + j] = d_pooled;
  }
  return grad;
}

}  // namespace qvqa::nn
