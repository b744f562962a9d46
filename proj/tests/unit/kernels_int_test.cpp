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

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "qvqa/kernels_int.hpp"
#include "testing.hpp"

using namespace qvqa;
using namespace qvqa::testing;
using nn::Padding;

namespace {

// Integer results, dequantized, must stay within this many output steps of
// the float kernel run on the same (dequantized) operands.
constexpr double kStepBound = 3.0;

QuantTensor Asym(const RealTensor& t) { return Quantize(t, ChooseQParams(t, false)); }
QuantTensor Sym(const RealTensor& t) { return Quantize(t, ChooseQParams(t, true)); }

double MaxAbs(const RealTensor& a, const RealTensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct ConvCase {
  QuantTensor x, w;
  BiasTensor b;
  nn::ConvSpec spec;
};

ConvCase MakeConv(std::mt19937_64& rng, bool depthwise) {
  ConvCase c;
  c.spec.kernel_h = Pick(rng, 1, 3);
  c.spec.kernel_w = Pick(rng, 1, 3);
  c.spec.stride = Pick(rng, 1, 2);
  c.spec.padding = Pick(rng, 0, 1) ? Padding::kSame : Padding::kValid;
  c.spec.in_channels = Pick(rng, 1, 6);
  c.spec.out_channels = depthwise ? c.spec.in_channels : Pick(rng, 1, 6);
  c.x = Asym(Random(Shape{Pick(rng, 3, 10), Pick(rng, 3, 10), c.spec.in_channels}, rng, -0.5, 1.5));
  c.w = depthwise ? Sym(Random(Shape{c.spec.kernel_h, c.spec.kernel_w, c.spec.in_channels}, rng))
                  : Sym(Random(Shape{c.spec.kernel_h, c.spec.kernel_w, c.spec.in_channels, c.spec.out_channels}, rng));
  c.b = QuantizeBias(Random(Shape{c.spec.out_channels}, rng), c.x.qparams.scale * c.w.qparams.scale);
  return c;
}

}  // namespace

TEST_CASE("integer conv and depthwise track the float kernels") {
  std::mt19937_64 rng(201);
  for (int n = 0; n < 150; ++n) {
    const bool depthwise = n % 2;
    const bool relu = (n / 2) % 2;
    auto c = MakeConv(rng, depthwise);
    const auto xr = Dequantize(c.x), wr = Dequantize(c.w), br = DequantizeBias(c.b);
    auto ref = depthwise ? nn::DepthwiseConv2d(xr, wr, br, c.spec) : nn::Conv2d(xr, wr, br, c.spec);
    if (relu) ref = nn::Relu(ref);
    const auto qp = ChooseQParams(ref, false);
    const auto g = nn::ResolveGeometry(xr.dim(0), xr.dim(1), c.spec.kernel_h, c.spec.kernel_w,
                                       c.spec.stride, c.spec.padding);
    const auto win = nn::WindowFor(g, c.spec.kernel_h, c.spec.kernel_w, c.spec.stride);
    const auto got = depthwise ? nn::DepthwiseConv2dQ(c.x, c.w, c.b, win, qp, relu)
                               : nn::Conv2dQ(c.x, c.w, c.b, win, qp, relu);
    REQUIRE(got.shape() == ref.shape());
    REQUIRE(MaxAbs(Dequantize(got), ref) <= kStepBound * qp.scale);
  }
}

TEST_CASE("integer maxpool is exact on codes") {
  std::mt19937_64 rng(202);
  for (int n = 0; n < 100; ++n) {
    const std::size_t win = Pick(rng, 1, 3), stride = Pick(rng, 1, 3);
    const auto x = Asym(Random(Shape{Pick(rng, win, 8), Pick(rng, win, 8), Pick(rng, 1, 4)}, rng));
    const auto got = nn::MaxPool2dQ(x, win, stride);
    const auto want = nn::MaxPool2d(Dequantize(x), win, stride);
    REQUIRE(Dequantize(got) == want);
  }
}

TEST_CASE("integer dense, cell dense and row ranges") {
  std::mt19937_64 rng(203);
  for (int n = 0; n < 100; ++n) {
    const std::size_t in = Pick(rng, 1, 40), out = Pick(rng, 2, 20);
    const bool relu = n % 2;
    const auto x = Asym(Random(Shape{in}, rng));
    const auto w = Sym(Random(Shape{out, in}, rng));
    const auto b = QuantizeBias(Random(Shape{out}, rng), x.qparams.scale * w.qparams.scale);
    auto ref = nn::Dense(Dequantize(x), Dequantize(w), DequantizeBias(b));
    if (relu) ref = nn::Relu(ref);
    const auto qp = ChooseQParams(ref, false);
    const auto full = nn::DenseQ(x, w, b, qp, relu);
    REQUIRE(MaxAbs(Dequantize(full), ref) <= kStepBound * qp.scale);
    const std::size_t lo = Pick(rng, 0, out - 1), hi = Pick(rng, lo + 1, out);
    const auto part = nn::DenseQ(x, w, b, qp, relu, lo, hi);
    REQUIRE(part.numel() == hi - lo);
    for (std::size_t i = lo; i < hi; ++i) REQUIRE(part[i - lo] == full[i]);

    const auto grid = Asym(Random(Shape{Pick(rng, 1, 3), Pick(rng, 1, 3), in}, rng));
    const auto gb = QuantizeBias(Random(Shape{out}, rng), grid.qparams.scale * w.qparams.scale);
    auto cref = nn::CellDense(Dequantize(grid), Dequantize(w), DequantizeBias(gb));
    const auto cqp = ChooseQParams(cref, false);
    REQUIRE(MaxAbs(Dequantize(nn::CellDenseQ(grid, w, gb, cqp, false)), cref) <= kStepBound * cqp.scale);
  }
}

TEST_CASE("integer broadcast multiply and add") {
  std::mt19937_64 rng(204);
  for (int n = 0; n < 100; ++n) {
    const std::size_t k = Pick(rng, 1, 12);
    const auto grid = Asym(Random(Shape{Pick(rng, 1, 4), Pick(rng, 1, 4), k}, rng, -2, 3));
    const auto vec = Asym(Random(Shape{k}, rng, -1, 0.5));
    const auto gr = Dequantize(grid), vr = Dequantize(vec);
    RealTensor ref(gr.shape());
    for (std::size_t i = 0; i < ref.numel(); ++i) ref[i] = gr[i] * vr[i % k];
    const auto qp = ChooseQParams(ref, false);
    REQUIRE(MaxAbs(Dequantize(nn::MulBroadcastQ(grid, vec, qp)), ref) <= kStepBound * qp.scale);

    const auto a = Asym(Random(Shape{k}, rng, -1, 2));
    const auto b = Asym(Random(Shape{k}, rng, -4, 1));
    const auto ar = Dequantize(a), br = Dequantize(b);
    RealTensor sum(Shape{k});
    for (std::size_t i = 0; i < k; ++i) sum[i] = ar[i] + br[i];
    const auto sqp = ChooseQParams(sum, false);
    REQUIRE(MaxAbs(Dequantize(nn::AddQ(a, b, sqp)), sum) <= kStepBound * sqp.scale);
  }
}

TEST_CASE("integer squeeze tracks the float squeeze") {
  std::mt19937_64 rng(205);
  for (int n = 0; n < 100; ++n) {
    const std::size_t f = Pick(rng, 1, 5), k = Pick(rng, 1, 6);
    const auto e = Asym(Random(Shape{Pick(rng, 1, 4), Pick(rng, 1, 4), k * f}, rng, -1, 1));
    const auto pooled = nn::SumPoolQ(e, f);
    const auto got = nn::PowerNormalizeQ(pooled, e.qparams.scale, nn::AbsSum(pooled));
    const auto ref = nn::MfbSqueeze(Dequantize(e), f);
    REQUIRE(MaxAbs(Dequantize(got), ref) <= kStepBound * nn::NormalizedQParams().scale);
  }
}

TEST_CASE("attention pool accumulates across splits") {
  std::mt19937_64 rng(206);
  for (int n = 0; n < 100; ++n) {
    const std::size_t h = Pick(rng, 2, 6), w = Pick(rng, 1, 4), c = Pick(rng, 1, 8);
    auto ar = Random(Shape{h, w, 1}, rng, 0, 1);
    double total = 0;
    for (double v : ar.data()) total += v;
    for (auto& v : ar.data()) v /= total;
    const auto att = Quantize(ar, nn::ProbabilityQParams());
    const auto feat = Asym(Random(Shape{h, w, c}, rng, -1, 2));
    std::vector<std::int32_t> acc(c, 0);
    nn::AttentionPoolAccumulate(att, feat, acc);

    // Same sums from two row slices.
    const std::size_t split = Pick(rng, 1, h - 1);
    auto rows = [&](const QuantTensor& t, std::size_t lo, std::size_t hi) {
      const std::size_t row = t.shape()[1] * t.shape()[2];
      std::vector<std::int8_t> v(t.values.vec().begin() + lo * row, t.values.vec().begin() + hi * row);
      return QuantTensor(Tensor<std::int8_t>(Shape{hi - lo, t.shape()[1], t.shape()[2]}, v), t.qparams);
    };
    std::vector<std::int32_t> parts(c, 0);
    nn::AttentionPoolAccumulate(rows(att, 0, split), rows(feat, 0, split), parts);
    nn::AttentionPoolAccumulate(rows(att, split, h), rows(feat, split, h), parts);
    REQUIRE(parts == acc);

    const auto adq = Dequantize(att), fdq = Dequantize(feat);
    RealTensor ref(Shape{c});
    for (std::size_t cell = 0; cell < h * w; ++cell)
      for (std::size_t ch = 0; ch < c; ++ch) ref[ch] += adq[cell] * fdq[cell * c + ch];
    const auto qp = ChooseQParams(ref, false);
    const auto got = nn::AttentionPoolFinalize(acc, att.qparams.scale, feat.qparams.scale, qp);
    REQUIRE(MaxAbs(Dequantize(got), ref) <= kStepBound * qp.scale);
  }
}
