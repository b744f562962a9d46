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

#include <cmath>
#include <random>
#include <vector>

#include "qvqa/kernels.hpp"
#include "testing.hpp"

using namespace qvqa;
using namespace qvqa::testing;
using namespace qvqa::oracle;
using nn::ConvSpec;
using nn::Padding;

namespace {

constexpr double kOracleTol = 1e-12;
constexpr double kGradTol = 1e-6;
constexpr int kShapes = 120;

double Entropy(const RealTensor& p) {
  double h = 0;
  for (double v : p.data()) if (v > 0) h -= v * std::log(v);
  return h;
}

}  // namespace

TEST_CASE("geometry conventions") {
  const auto g = nn::ResolveGeometry(8, 7, 3, 3, 2, Padding::kSame);
  CHECK(g.out_h == 4);
  CHECK(g.out_w == 4);
  CHECK(g.pad_top == 0);   // total 1, the odd pixel goes to the bottom
  CHECK(g.pad_left == 1);  // total 2
  const auto v = nn::ResolveGeometry(8, 7, 3, 2, 2, Padding::kValid);
  CHECK(v.out_h == 3);
  CHECK(v.out_w == 3);
  CHECK(KindOf([] { nn::ResolveGeometry(2, 2, 3, 3, 1, Padding::kValid); }) == ErrorKind::kShape);
}

TEST_CASE("conv2d matches the oracle") {
  std::mt19937_64 rng(101);
  for (int n = 0; n < kShapes; ++n) {
    const auto s = RandomConv(rng, false);
    const auto x = RandomInput(rng, s);
    const auto w = Random(Shape{s.kernel_h, s.kernel_w, s.in_channels, s.out_channels}, rng);
    const auto b = Random(Shape{s.out_channels}, rng);
    REQUIRE(MaxRelDiff(nn::Conv2d(x, w, b, s), OracleConv(x, w, b, s.stride, s.padding)) <= kOracleTol);
  }
}

TEST_CASE("depthwise and separable conv match the oracle") {
  std::mt19937_64 rng(102);
  for (int n = 0; n < kShapes; ++n) {
    const auto s = RandomConv(rng, true);
    const auto x = RandomInput(rng, s);
    const auto dw = Random(Shape{s.kernel_h, s.kernel_w, s.in_channels}, rng);
    const auto db = Random(Shape{s.in_channels}, rng);
    const auto pw = Random(Shape{1, 1, s.in_channels, s.out_channels}, rng);
    const auto pb = Random(Shape{s.out_channels}, rng);
    const auto spatial = OracleDepthwise(x, dw, db, s.stride, s.padding);
    REQUIRE(MaxRelDiff(nn::DepthwiseConv2d(x, dw, db, s), spatial) <= kOracleTol);
    const auto want = OracleConv(spatial, pw, pb, 1, Padding::kValid);
    REQUIRE(MaxRelDiff(nn::DepthwiseSeparableConv2d(x, dw, db, pw, pb, s), want) <= kOracleTol);
  }
}

TEST_CASE("maxpool matches the oracle") {
  std::mt19937_64 rng(103);
  for (int n = 0; n < kShapes; ++n) {
    const std::size_t win = Pick(rng, 1, 3), stride = Pick(rng, 1, 3);
    const auto x = Random(Shape{Pick(rng, win, 9), Pick(rng, win, 9), Pick(rng, 1, 4)}, rng);
    REQUIRE(MaxRelDiff(nn::MaxPool2d(x, win, stride), OracleMaxPool(x, win, stride)) == 0.0);
  }
}

TEST_CASE("dense and cell dense match the oracle") {
  std::mt19937_64 rng(104);
  for (int n = 0; n < kShapes; ++n) {
    const std::size_t in = Pick(rng, 1, 12), out = Pick(rng, 1, 12);
    const auto w = Random(Shape{out, in}, rng), b = Random(Shape{out}, rng);
    const auto x = Random(Shape{in}, rng);
    REQUIRE(MaxRelDiff(nn::Dense(x, w, b), OracleDense(x, w, b)) <= kOracleTol);
    const auto grid = Random(Shape{Pick(rng, 1, 4), Pick(rng, 1, 4), in}, rng);
    const auto got = nn::CellDense(grid, w, b);
    for (std::size_t cell = 0; cell < grid.dim(0) * grid.dim(1); ++cell) {
      const auto want = OracleAffine(grid.data().data() + cell * in, in, w, b);
      for (std::size_t o = 0; o < out; ++o) REQUIRE(std::abs(got[cell * out + o] - want[o]) <= kOracleTol);
    }
  }
}

TEST_CASE("lstm matches the oracle") {
  std::mt19937_64 rng(105);
  for (int n = 0; n < kShapes; ++n) {
    nn::LstmSpec spec{Pick(rng, 1, 5), Pick(rng, 1, 5), Pick(rng, 1, 2)};
    std::vector<nn::LstmLayerWeights> layers;
    for (std::size_t l = 0; l < spec.num_layers; ++l) {
      const std::size_t in = l == 0 ? spec.input_dim : spec.hidden_dim;
      layers.push_back({Random(Shape{4 * spec.hidden_dim, in}, rng),
                        Random(Shape{4 * spec.hidden_dim, spec.hidden_dim}, rng),
                        Random(Shape{4 * spec.hidden_dim}, rng)});
    }
    const auto seq = Random(Shape{Pick(rng, 1, 6), spec.input_dim}, rng, -2, 2);
    REQUIRE(MaxRelDiff(nn::LstmSequence(seq, spec, layers), OracleLstm(seq, layers)) <= kOracleTol);
  }
}

TEST_CASE("mfb expand and squeeze match the oracle") {
  std::mt19937_64 rng(106);
  for (int n = 0; n < kShapes; ++n) {
    const std::size_t c = Pick(rng, 1, 5), qd = Pick(rng, 1, 6), f = Pick(rng, 1, 4), k = Pick(rng, 1, 4);
    const auto grid = Random(Shape{Pick(rng, 1, 4), Pick(rng, 1, 4), c}, rng);
    const auto q = Random(Shape{qd}, rng);
    const nn::DenseParams pi{Random(Shape{k * f, c}, rng), Random(Shape{k * f}, rng)};
    const nn::DenseParams pq{Random(Shape{k * f, qd}, rng), Random(Shape{k * f}, rng)};
    const auto want = OracleExpand(grid, q, pi, pq);
    REQUIRE(MaxRelDiff(nn::MfbExpand(grid, q, pi, pq, 0.0, 1), want) <= kOracleTol);
    REQUIRE(MaxRelDiff(nn::MfbSqueeze(want, f), OracleSqueeze(want, f)) <= kOracleTol);
  }
}

TEST_CASE("dropout is the identity at rate zero or in inference") {
  std::mt19937_64 rng(107);
  const auto grid = Random(Shape{3, 3, 4}, rng);
  const auto q = Random(Shape{5}, rng);
  const nn::DenseParams pi{Random(Shape{6, 4}, rng), Random(Shape{6}, rng)};
  const nn::DenseParams pq{Random(Shape{6, 5}, rng), Random(Shape{6}, rng)};
  const auto plain = OracleExpand(grid, q, pi, pq);
  CHECK(MaxRelDiff(nn::MfbExpand(grid, q, pi, pq, 0.0, 9, true), plain) <= kOracleTol);
  const auto inference = nn::MfbExpand(grid, q, pi, pq, 0.4, 9, false);
  CHECK(inference == nn::MfbExpand(grid, q, pi, pq, 0.0, 9, true));
  const auto dropped = nn::MfbExpand(grid, q, pi, pq, 0.4, 9, true);
  CHECK(dropped == nn::MfbExpand(grid, q, pi, pq, 0.4, 9, true));
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < plain.numel(); ++i) {
    if (dropped[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(std::abs(dropped[i] - plain[i] / 0.6) <= 1e-12);
    }
  }
  CHECK(zeros > 0);
  CHECK(zeros < plain.numel());
  CHECK(KindOf([] { nn::DropoutScale(4, 1.0, 0); }) == ErrorKind::kConfig);
}

TEST_CASE("softmax with temperature") {
  std::mt19937_64 rng(108);
  for (int n = 0; n < 200; ++n) {
    const auto z = Random(Shape{Pick(rng, 2, 10)}, rng, -20, 20);
    double prev = -1.0;
    for (double t : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
      const auto p = nn::SoftmaxWithTemperature(z, t);
      long double sum = 0;
      for (double v : p.data()) sum += v;
      REQUIRE(std::fabs(static_cast<double>(sum) - 1.0) <= 1e-12);
      const double h = Entropy(p);
      REQUIRE(h >= prev - 1e-12);
      prev = h;
      long double denom = 0;
      for (double v : z.data()) denom += std::exp(static_cast<long double>(v) / t);
      for (std::size_t i = 0; i < z.numel(); ++i) {
        REQUIRE(std::abs(p[i] - static_cast<double>(std::exp(static_cast<long double>(z[i]) / t) / denom)) <= 1e-12);
      }
    }
  }
  CHECK(KindOf([] { nn::SoftmaxWithTemperature(RealTensor(Shape{2}), 0.0); }) == ErrorKind::kInvalidTemperature);
  CHECK(KindOf([] { nn::SoftmaxWithTemperature(RealTensor(Shape{2}), -1.0); }) == ErrorKind::kInvalidTemperature);
}

TEST_CASE("separable conv has fewer parameters") {
  ConvSpec regular{3, 3, 1, Padding::kSame, 32, 64, false};
  ConvSpec separable = regular;
  separable.depthwise_separable = true;
  CHECK(nn::ConvParamCount(regular) == 3 * 3 * 32 * 64 + 64);
  CHECK(nn::ConvParamCount(separable) == 3 * 3 * 32 + 32 + 32 * 64 + 64);
  CHECK(nn::ConvParamCount(separable) < nn::ConvParamCount(regular));
}

// ---- backward passes against central differences of <out, G> ----

TEST_CASE("conv backward") {
  std::mt19937_64 rng(110);
  for (int n = 0; n < 20; ++n) {
    const auto s = RandomConv(rng, false);
    auto x = RandomInput(rng, s);
    auto w = Random(Shape{s.kernel_h, s.kernel_w, s.in_channels, s.out_channels}, rng);
    auto b = Random(Shape{s.out_channels}, rng);
    const auto g = Random(nn::Conv2d(x, w, b, s).shape(), rng);
    const auto f = [&] { return Dot(nn::Conv2d(x, w, b, s), g); };
    const auto grads = nn::Conv2dBackward(x, w, s, g);
    CHECK(MaxRelDiff(grads.input, NumericGrad(x, f)) <= kGradTol);
    CHECK(MaxRelDiff(grads.weights, NumericGrad(w, f)) <= kGradTol);
    CHECK(MaxRelDiff(grads.bias, NumericGrad(b, f)) <= kGradTol);
  }
}

TEST_CASE("depthwise backward") {
  std::mt19937_64 rng(111);
  for (int n = 0; n < 20; ++n) {
    const auto s = RandomConv(rng, true);
    auto x = RandomInput(rng, s);
    auto w = Random(Shape{s.kernel_h, s.kernel_w, s.in_channels}, rng);
    auto b = Random(Shape{s.in_channels}, rng);
    const auto g = Random(nn::DepthwiseConv2d(x, w, b, s).shape(), rng);
    const auto f = [&] { return Dot(nn::DepthwiseConv2d(x, w, b, s), g); };
    const auto grads = nn::DepthwiseConv2dBackward(x, w, s, g);
    CHECK(MaxRelDiff(grads.input, NumericGrad(x, f)) <= kGradTol);
    CHECK(MaxRelDiff(grads.weights, NumericGrad(w, f)) <= kGradTol);
    CHECK(MaxRelDiff(grads.bias, NumericGrad(b, f)) <= kGradTol);
  }
}

TEST_CASE("maxpool, relu and dense backward") {
  std::mt19937_64 rng(112);
  for (int n = 0; n < 20; ++n) {
    auto x = Random(Shape{Pick(rng, 2, 6), Pick(rng, 2, 6), Pick(rng, 1, 3)}, rng);
    const auto g = Random(nn::MaxPool2d(x, 2, 2).shape(), rng);
    const auto pool = [&] { return Dot(nn::MaxPool2d(x, 2, 2), g); };
    CHECK(MaxRelDiff(nn::MaxPool2dBackward(x, 2, 2, g), NumericGrad(x, pool)) <= kGradTol);

    auto r = Random(Shape{12}, rng);
    const auto gr = Random(Shape{12}, rng);
    const auto relu = [&] { return Dot(nn::Relu(r), gr); };
    CHECK(MaxRelDiff(nn::ReluBackward(nn::Relu(r), gr), NumericGrad(r, relu)) <= kGradTol);

    auto v = Random(Shape{5}, rng);
    auto w = Random(Shape{4, 5}, rng), b = Random(Shape{4}, rng);
    const auto gd = Random(Shape{4}, rng);
    const auto dense = [&] { return Dot(nn::Dense(v, w, b), gd); };
    const auto dg = nn::DenseBackward(v, w, gd);
    CHECK(MaxRelDiff(dg.input, NumericGrad(v, dense)) <= kGradTol);
    CHECK(MaxRelDiff(dg.weights, NumericGrad(w, dense)) <= kGradTol);
    CHECK(MaxRelDiff(dg.bias, NumericGrad(b, dense)) <= kGradTol);

    auto grid = Random(Shape{2, 3, 5}, rng);
    const auto gc = Random(Shape{2, 3, 4}, rng);
    const auto cell = [&] { return Dot(nn::CellDense(grid, w, b), gc); };
    const auto cg = nn::CellDenseBackward(grid, w, gc);
    CHECK(MaxRelDiff(cg.input, NumericGrad(grid, cell)) <= kGradTol);
    CHECK(MaxRelDiff(cg.weights, NumericGrad(w, cell)) <= kGradTol);
    CHECK(MaxRelDiff(cg.bias, NumericGrad(b, cell)) <= kGradTol);
  }
}

TEST_CASE("softmax backward") {
  std::mt19937_64 rng(113);
  for (double t : {0.5, 1.0, 4.0}) {
    auto z = Random(Shape{6}, rng, -3, 3);
    const auto g = Random(Shape{6}, rng);
    const auto f = [&] { return Dot(nn::SoftmaxWithTemperature(z, t), g); };
    const auto p = nn::SoftmaxWithTemperature(z, t);
    CHECK(MaxRelDiff(nn::SoftmaxBackward(p, g, t), NumericGrad(z, f)) <= kGradTol);
  }
}

TEST_CASE("lstm backward") {
  std::mt19937_64 rng(114);
  for (std::size_t layers_n : {1, 2}) {
    nn::LstmSpec spec{3, 4, layers_n};
    std::vector<nn::LstmLayerWeights> layers;
    for (std::size_t l = 0; l < layers_n; ++l) {
      layers.push_back({Random(Shape{16, l == 0 ? 3u : 4u}, rng), Random(Shape{16, 4}, rng),
                        Random(Shape{16}, rng)});
    }
    auto seq = Random(Shape{4, 3}, rng);
    const auto g = Random(Shape{4}, rng);
    const auto f = [&] { return Dot(nn::LstmSequence(seq, spec, layers), g); };
    nn::LstmCache cache;
    nn::LstmSequence(seq, spec, layers, &cache);
    const auto grads = nn::LstmBackward(cache, spec, layers, g);
    CHECK(MaxRelDiff(grads.input, NumericGrad(seq, f)) <= kGradTol);
    for (std::size_t l = 0; l < layers_n; ++l) {
      CHECK(MaxRelDiff(grads.layers[l].w_ih, NumericGrad(layers[l].w_ih, f)) <= kGradTol);
      CHECK(MaxRelDiff(grads.layers[l].w_hh, NumericGrad(layers[l].w_hh, f)) <= kGradTol);
      CHECK(MaxRelDiff(grads.layers[l].bias, NumericGrad(layers[l].bias, f)) <= kGradTol);
    }
  }
}

TEST_CASE("mfb backward") {
  std::mt19937_64 rng(115);
  auto grid = Random(Shape{2, 2, 3}, rng);
  auto q = Random(Shape{4}, rng);
  nn::DenseParams pi{Random(Shape{6, 3}, rng), Random(Shape{6}, rng)};
  nn::DenseParams pq{Random(Shape{6, 4}, rng), Random(Shape{6}, rng)};
  const auto g = Random(Shape{2, 2, 6}, rng);
  const auto f = [&] { return Dot(nn::MfbExpand(grid, q, pi, pq, 0.3, 5, true), g); };
  nn::MfbExpandCache cache;
  nn::MfbExpand(grid, q, pi, pq, 0.3, 5, true, &cache);
  const auto grads = nn::MfbExpandBackward(grid, q, pi, pq, cache, g);
  CHECK(MaxRelDiff(grads.image_grid, NumericGrad(grid, f)) <= kGradTol);
  CHECK(MaxRelDiff(grads.question, NumericGrad(q, f)) <= kGradTol);
  CHECK(MaxRelDiff(grads.image_proj.weights, NumericGrad(pi.weights, f)) <= kGradTol);
  CHECK(MaxRelDiff(grads.image_proj.bias, NumericGrad(pi.bias, f)) <= kGradTol);
  CHECK(MaxRelDiff(grads.question_proj.weights, NumericGrad(pq.weights, f)) <= kGradTol);
  CHECK(MaxRelDiff(grads.question_proj.bias, NumericGrad(pq.bias, f)) <= kGradTol);

  auto e = Random(Shape{2, 2, 6}, rng, 0.2, 1.0);  // pooled sums stay away from the sqrt kink
  for (std::size_t i = 0; i < e.numel(); ++i) if ((i / 2) % 2 == 0) e[i] = -e[i];
  const auto gs = Random(Shape{2, 2, 3}, rng);
  const auto sq = [&] { return Dot(nn::MfbSqueeze(e, 2), gs); };
  nn::MfbSqueezeCache sc;
  nn::MfbSqueeze(e, 2, &sc);
  CHECK(MaxRelDiff(nn::MfbSqueezeBackward(sc, 2, gs), NumericGrad(e, sq)) <= kGradTol);
}
