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

#include "qvqa/kernels_int.hpp"

#include <algorithm>
#include <cmath>

namespace qvqa::nn {
namespace {

void RequireSymmetricWeights(const QuantTensor& w) {
  Require(w.qparams.zero_point == 0, ErrorKind::kInvalidScale,
          "integer kernels expect symmetric weights (zero point 0)");
}

void RequireBiasScale(const BiasTensor& b, double expected) {
  Require(std::abs(b.scale - expected) <= 1e-12 * expected, ErrorKind::kInvalidScale,
          "bias scale must equal input_scale * weight_scale");
}

std::int8_t Finish(std::int32_t acc, const OutputRescale& rescale, const QuantParams& out_qp,
                   bool relu) {
  std::int32_t q = ClampToInt8(static_cast<std::int64_t>(rescale.Apply(acc)) + out_qp.zero_point);
  if (relu) q = std::max(q, out_qp.zero_point);
  return static_cast<std::int8_t>(q);
}

}  // namespace

QuantWindow WindowFor(const ConvGeometry& g, std::size_t kernel_h, std::size_t kernel_w,
                      std::size_t stride) {
  return {g.out_h, g.out_w, kernel_h, kernel_w, stride, g.pad_top, g.pad_left};
}

QuantTensor Conv2dQ(const QuantTensor& input, const QuantTensor& weights, const BiasTensor& bias,
                    const QuantWindow& win, const QuantParams& out_qp, bool relu) {
  Require(input.shape().rank() == 3 && weights.shape().rank() == 4, ErrorKind::kShape,
          "int conv expects [h,w,c] input and [kh,kw,cin,cout] weights");
  const std::size_t in_h = input.shape()[0], in_w = input.shape()[1], cin = input.shape()[2];
  const std::size_t cout = weights.shape()[3];
  RequireShape(weights.shape(), Shape{win.kernel_h, win.kernel_w, cin, cout}, "int conv weights");
  RequireShape(bias.values.shape(), Shape{cout}, "int conv bias");
  RequireSymmetricWeights(weights);
  const double acc_scale = input.qparams.scale * weights.qparams.scale;
  RequireBiasScale(bias, acc_scale);
  const auto rescale = OutputRescale::FromReal(acc_scale / out_qp.scale);
  const std::int32_t zx = input.qparams.zero_point;

  Tensor<std::int8_t> out(Shape{win.out_h, win.out_w, cout});
  std::vector<std::int32_t> acc(cout);
  for (std::size_t oy = 0; oy < win.out_h; ++oy) {
    for (std::size_t ox = 0; ox < win.out_w; ++ox) {
      for (std::size_t co = 0; co < cout; ++co) acc[co] = bias.values[co];
      for (std::size_t ky = 0; ky < win.kernel_h; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * win.stride + ky) -
                        static_cast<std::ptrdiff_t>(win.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
        for (std::size_t kx = 0; kx < win.kernel_w; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * win.stride + kx) -
                          static_cast<std::ptrdiff_t>(win.pad_left);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
          const std::int8_t* x = &input.values.at3(iy, ix, 0);
          const std::int8_t* w = &weights.values[((ky * win.kernel_w + kx) * cin) * cout];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const std::int32_t xv = x[ci] - zx;
            const std::int8_t* wr = w + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) acc[co] += xv * wr[co];
          }
        }
      }
      std::int8_t* o = &out.at3(oy, ox, 0);
      for (std::size_t co = 0; co < cout; ++co) o[co] = Finish(acc[co], rescale, out_qp, relu);
    }
  }
  return {std::move(out), out_qp};
}

QuantTensor DepthwiseConv2dQ(const QuantTensor& input, const QuantTensor& weights,
                             const BiasTensor& bias, const QuantWindow& win,
                             const QuantParams& out_qp, bool relu) {
  Require(input.shape().rank() == 3, ErrorKind::kShape, "int depthwise expects [h,w,c] input");
  const std::size_t in_h = input.shape()[0], in_w = input.shape()[1], c = input.shape()[2];
  RequireShape(weights.shape(), Shape{win.kernel_h, win.kernel_w, c}, "int depthwise weights");
  RequireShape(bias.values.shape(), Shape{c}, "int depthwise bias");
  RequireSymmetricWeights(weights);
  const double acc_scale = input.qparams.scale * weights.qparams.scale;
  RequireBiasScale(bias, acc_scale);
  const auto rescale = OutputRescale::FromReal(acc_scale / out_qp.scale);
  const std::int32_t zx = input.qparams.zero_point;

  Tensor<std::int8_t> out(Shape{win.out_h, win.out_w, c});
  std::vector<std::int32_t> acc(c);
  for (std::size_t oy = 0; oy < win.out_h; ++oy) {
    for (std::size_t ox = 0; ox < win.out_w; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) acc[ch] = bias.values[ch];
      for (std::size_t ky = 0; ky < win.kernel_h; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * win.stride + ky) -
                        static_cast<std::ptrdiff_t>(win.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
        for (std::size_t kx = 0; kx < win.kernel_w; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * win.stride + kx) -
                          static_cast<std::ptrdiff_t>(win.pad_left);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
          const std::int8_t* x = &input.values.at3(iy, ix, 0);
          const std::int8_t* w = &weights.values[(ky * win.kernel_w + kx) * c];
          for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += (x[ch] - zx) * w[ch];
        }
      }
      std::int8_t* o = &out.at3(oy, ox, 0);
      for (std::size_t ch = 0; ch < c; ++ch) o[ch] = Finish(acc[ch], rescale, out_qp, relu);
    }
  }
  return {std::move(out), out_qp};
}

QuantTensor MaxPool2dQ(const QuantTensor& input, std::size_t window, std::size_t stride) {
  Require(input.shape().rank() == 3, ErrorKind::kShape, "int maxpool expects [h,w,c] input");
  const std::size_t h = input.shape()[0], w = input.shape()[1], c = input.shape()[2];
  Require(window >= 1 && stride >= 1 && window <= h && window <= w, ErrorKind::kShape,
          "pool window larger than input " + input.shape().ToString());
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  Tensor<std::int8_t> out(Shape{oh, ow, c});
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::int8_t best = input.values.at3(oy * stride, ox * stride, ch);
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            best = std::max(best, input.values.at3(oy * stride + ky, ox * stride + kx, ch));
          }
        }
        out.at3(oy, ox, ch) = best;
      }
    }
  }
  return {std::move(out), input.qparams};
}

QuantTensor DenseQ(const QuantTensor& input, const QuantTensor& weights, const BiasTensor& bias,
                   const QuantParams& out_qp, bool relu, std::size_t row_begin,
                   std::size_t row_end) {
  Require(weights.shape().rank() == 2, ErrorKind::kShape, "int dense weights must be [out, in]");
  const std::size_t m = weights.shape()[0], n = weights.shape()[1];
  Require(input.numel() == n, ErrorKind::kShape, "int dense input length mismatch");
  RequireShape(bias.values.shape(), Shape{m}, "int dense bias");
  RequireSymmetricWeights(weights);
  row_end = std::min(row_end, m);
  Require(row_begin < row_end, ErrorKind::kShape, "empty dense row range");
  const double acc_scale = input.qparams.scale * weights.qparams.scale;
  RequireBiasScale(bias, acc_scale);
  const auto rescale = OutputRescale::FromReal(acc_scale / out_qp.scale);
  const std::int32_t zx = input.qparams.zero_point;
  Tensor<std::int8_t> out(Shape{row_end - row_begin});
  for (std::size_t r = row_begin; r < row_end; ++r) {
    std::int32_t acc = bias.values[r];
    const std::int8_t* w = &weights.values[r * n];
    for (std::size_t i = 0; i < n; ++i) acc += (input[i] - zx) * w[i];
    out[r - row_begin] = Finish(acc, rescale, out_qp, relu);
  }
  return {std::move(out), out_qp};
}

QuantTensor CellDenseQ(const QuantTensor& grid, const QuantTensor& weights, const BiasTensor& bias,
                       const QuantParams& out_qp, bool relu) {
  Require(grid.shape().rank() == 3 && weights.shape().rank() == 2 &&
              weights.shape()[1] == grid.shape()[2],
          ErrorKind::kShape, "int cell-dense expects [h,w,n] grid and [m,n] weights");
  const std::size_t m = weights.shape()[0], n = weights.shape()[1];
  RequireShape(bias.values.shape(), Shape{m}, "int cell-dense bias");
  RequireSymmetricWeights(weights);
  const double acc_scale = grid.qparams.scale * weights.qparams.scale;
  RequireBiasScale(bias, acc_scale);
  const auto rescale = OutputRescale::FromReal(acc_scale / out_qp.scale);
  const std::int32_t zx = grid.qparams.zero_point;
  const std::size_t cells = grid.shape()[0] * grid.shape()[1];
  Tensor<std::int8_t> out(Shape{grid.shape()[0], grid.shape()[1], m});
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const std::int8_t* x = &grid.values[cell * n];
    for (std::size_t r = 0; r < m; ++r) {
      std::int32_t acc = bias.values[r];
      const std::int8_t* w = &weights.values[r * n];
      for (std::size_t i = 0; i < n; ++i) acc += (x[i] - zx) * w[i];
      out[cell * m + r] = Finish(acc, rescale, out_qp, relu);
    }
  }
  return {std::move(out), out_qp};
}

QuantTensor MulBroadcastQ(const QuantTensor& grid, const QuantTensor& vec, const QuantParams& out_qp) {
  Require(grid.shape().rank() == 3 && grid.shape()[2] == vec.numel(), ErrorKind::kShape,
          "int broadcast multiply expects [h,w,n] and [n]");
  const auto rescale = OutputRescale::FromReal(grid.qparams.scale * vec.qparams.scale / out_qp.scale);
  const std::int32_t za = grid.qparams.zero_point, zb = vec.qparams.zero_point;
  const std::size_t n = vec.numel();
  Tensor<std::int8_t> out(grid.shape());
  for (std::size_t i = 0; i < grid.numel(); ++i) {
    const std::int32_t acc = (grid[i] - za) * (vec[i % n] - zb);
    out[i] = Finish(acc, rescale, out_qp, false);
  }
  return {std::move(out), out_qp};
}

QuantTensor AddQ(const QuantTensor& a, const QuantTensor& b, const QuantParams& out_qp) {
  Require(a.numel() == b.numel(), ErrorKind::kShape, "int add length mismatch");
  constexpr int kLeftShift = 20;
  const double unit = std::ldexp(out_qp.scale, kLeftShift);
  const auto ra = OutputRescale::FromReal(a.qparams.scale / unit);
  const auto rb = OutputRescale::FromReal(b.qparams.scale / unit);
  Tensor<std::int8_t> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const std::int32_t da = (a[i] - a.qparams.zero_point) * (1 << kLeftShift);
    const std::int32_t db = (b[i] - b.qparams.zero_point) * (1 << kLeftShift);
    const std::int64_t sum = static_cast<std::int64_t>(ra.Apply(da)) + rb.Apply(db) + out_qp.zero_point;
    out[i] = static_cast<std::int8_t>(ClampToInt8(sum));
  }
  return {std::move(out), out_qp};
}

Tensor<std::int32_t> SumPoolQ(const QuantTensor& expanded, std::size_t factor) {
  Require(expanded.shape().rank() == 3 && factor >= 1 && expanded.shape()[2] % factor == 0,
          ErrorKind::kShape, "int sum pool: joint dim not divisible by factor");
  const std::size_t k = expanded.shape()[2] / factor;
  const std::int32_t zp = expanded.qparams.zero_point;
  Tensor<std::int32_t> pooled(Shape{expanded.shape()[0], expanded.shape()[1], k});
  for (std::size_t i = 0; i < pooled.numel(); ++i) {
    std::int32_t s = 0;
    for (std::size_t j = 0; j < factor; ++j) s += expanded[i * factor + j] - zp;
    pooled[i] = s;
  }
  return pooled;
}

std::int64_t AbsSum(const Tensor<std::int32_t>& pooled) {
  std::int64_t total = 0;
  for (std::int32_t v : pooled.data()) total += v < 0 ? -static_cast<std::int64_t>(v) : v;
  return total;
}

QuantParams NormalizedQParams() { return {1.0 / 127.0, 0}; }

QuantTensor PowerNormalizeQ(const Tensor<std::int32_t>& pooled, double input_scale,
                            std::int64_t abs_sum) {
  Require(input_scale > 0.0, ErrorKind::kInvalidScale, "squeeze input scale must be positive");
  const QuantParams qp = NormalizedQParams();
  Tensor<std::int8_t> out(pooled.shape());
  if (abs_sum == 0) return {std::move(out), qp};
  // The scale cancels: sqrt(s|p|) / sqrt(s * sum|p|).
  const double total = static_cast<double>(abs_sum);
  for (std::size_t i = 0; i < pooled.numel(); ++i) {
    const std::int32_t p = pooled[i];
    const double mag = std::sqrt(std::abs(static_cast<double>(p)) / total);
    out[i] = QuantizeValue(p < 0 ? -mag : mag, qp);
  }
  return {std::move(out), qp};
}

QuantParams ProbabilityQParams() { return {1.0 / 255.0, -128}; }

void AttentionPoolAccumulate(const QuantTensor& attention, const QuantTensor& features,
                             std::vector<std::int32_t>& acc) {
  Require(features.shape().rank() == 3, ErrorKind::kShape, "attention pool features must be [h,w,c]");
  const std::size_t cells = features.shape()[0] * features.shape()[1];
  const std::size_t c = features.shape()[2];
  Require(attention.numel() == cells && acc.size() == c, ErrorKind::kShape,
          "attention pool grid mismatch");
  const std::int32_t za = attention.qparams.zero_point, zf = features.qparams.zero_point;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const std::int32_t a = attention[cell] - za;
    const std::int8_t* f = &features.values[cell * c];
    for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += a * (f[ch] - zf);
  }
}

QuantTensor AttentionPoolFinalize(const std::vector<std::int32_t>& acc, double attention_scale,
                                  double feature_scale, const QuantParams& out_qp) {
  const auto rescale = OutputRescale::FromReal(attention_scale * feature_scale / out_qp.scale);
  Tensor<std::int8_t> out(Shape{acc.size()});
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = Finish(acc[i], rescale, out_qp, false);
  return {std::move(out), out_qp};
}

}  // namespace qvqa::nn
