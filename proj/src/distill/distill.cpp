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

#include "qvqa/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "qvqa/vocab.hpp"

namespace qvqa {
namespace {

constexpr double kProbFloor = 1e-12;
// Norm below which a gradient tensor counts as zero in GradCheck.
constexpr double kGradNormFloor = 1e-6;

using nlohmann::ordered_json;

std::vector<nn::LstmLayerWeights> LstmWeights(const Model& model) {
  std::vector<nn::LstmLayerWeights> out;
  for (std::size_t l = 0; l < model.spec.text.lstm.num_layers; ++l) {
    const std::string p = "txt.lstm." + std::to_string(l);
    out.push_back({model.param(p + ".w_ih"), model.param(p + ".w_hh"), model.param(p + ".b")});
  }
  return out;
}

void AddInto(RealTensor& acc, const RealTensor& g) {
  for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
}

// Reverse pass of one conv stage; fills parameter gradients and returns the
// gradient with respect to the stage input.
RealTensor StageBackward(const Model& model, const std::string& prefix, const ConvLayer& layer,
                         const ForwardTrace::ConvStage& stage, RealTensor grad, Gradients& grads) {
  if (layer.pool > 0) grad = nn::MaxPool2dBackward(stage.activated, layer.pool, layer.pool, grad);
  if (layer.relu) grad = nn::ReluBackward(stage.activated, grad);
  if (layer.conv.depthwise_separable) {
    const nn::ConvSpec pointwise{1, 1, 1, nn::Padding::kValid, layer.conv.in_channels,
                                 layer.conv.out_channels, false};
    auto pw = nn::Conv2dBackward(stage.spatial, model.param(prefix + ".pw.w"), pointwise, grad);
    auto dw = nn::DepthwiseConv2dBackward(stage.input, model.param(prefix + ".dw.w"), layer.conv,
                                          pw.input);
    grads[prefix + ".pw.w"] = std::move(pw.weights);
    grads[prefix + ".pw.b"] = std::move(pw.bias);
    grads[prefix + ".dw.w"] = std::move(dw.weights);
    grads[prefix + ".dw.b"] = std::move(dw.bias);
    return std::move(dw.input);
  }
  auto g = nn::Conv2dBackward(stage.input, model.param(prefix + ".w"), layer.conv, grad);
  grads[prefix + ".w"] = std::move(g.weights);
  grads[prefix + ".b"] = std::move(g.bias);
  return std::move(g.input);
}

void RequireFiniteLoss(const LossBreakdown& l) {
  const std::pair<const char*, double> terms[] = {
      {"hard cross-entropy", l.hard_ce}, {"distillation", l.kd}, {"attention", l.attention}};
  for (const auto& [what, v] : terms) {
    Require(std::isfinite(v), ErrorKind::kNumeric, std::string("non-finite ") + what + " loss");
  }
}

// Discrete state a small perturbation must not change for finite differences
// to be meaningful: ReLU activity, max-pool winners, signs of pooled MFB sums.
std::vector<std::int32_t> KinkSignature(const ForwardTrace& t, const GraphSpec& s) {
  std::vector<std::int32_t> sig;
  auto stage_sig = [&](const ConvLayer& layer, const ForwardTrace::ConvStage& st) {
    if (layer.relu) {
      for (double v : st.activated.data()) sig.push_back(v > 0.0);
    }
    if (layer.pool > 0) {
      const RealTensor& a = st.activated;
      const std::size_t p = layer.pool, c = a.dim(2);
      const std::size_t oh = (a.dim(0) - p) / p + 1, ow = (a.dim(1) - p) / p + 1;
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            std::int32_t best = 0;
            double best_v = a.at3(y * p, x * p, ch);
            for (std::size_t k = 1; k < p * p; ++k) {
              const double v = a.at3(y * p + k / p, x * p + k % p, ch);
              if (v > best_v) {
                best_v = v;
                best = static_cast<std::int32_t>(k);
              }
            }
            sig.push_back(best);
          }
        }
      }
    }
  };
  for (std::size_t i = 0; i < t.image_stages.size(); ++i) stage_sig(s.image_branch[i], t.image_stages[i]);
  for (std::size_t i = 0; i < t.text_stages.size(); ++i) stage_sig(s.text.convs[i], t.text_stages[i]);
  for (double v : t.squeeze.pooled.data()) sig.push_back(v > 0.0 ? 1 : (v < 0.0 ? -1 : 0));
  return sig;
}

LossBreakdown Accumulate(const std::vector<LossBreakdown>& items) {
  LossBreakdown mean;
  for (const auto& l : items) {
    mean.kd += l.kd;
    mean.hard_ce += l.hard_ce;
    mean.attention += l.attention;
    mean.total += l.total;
  }
  const double n = static_cast<double>(items.size());
  mean.kd /= n;
  mean.hard_ce /= n;
  mean.attention /= n;
  mean.total /= n;
  if (!items.empty()) {
    mean.alpha = items.front().alpha;
    mean.beta = items.front().beta;
    mean.gamma = items.front().gamma;
  }
  return mean;
}

}  // namespace

SoftTargets MakeSoftTargets(const RealTensor& teacher_logits, double temperature) {
  return {nn::SoftmaxWithTemperature(teacher_logits, temperature), temperature};
}

double KdLoss(const SoftTargets& targets, const RealTensor& student_probs) {
  RequireShape(student_probs.shape(), targets.probs.shape(), "student vs teacher distribution");
  double sum = 0.0;
  for (std::size_t i = 0; i < student_probs.numel(); ++i) {
    const double q = targets.probs[i];
    if (q <= 0.0) continue;
    sum += q * (std::log(q) - std::log(std::max(student_probs[i], kProbFloor)));
  }
  return std::max(sum, 0.0);
}

double CrossEntropy(const RealTensor& probs, std::size_t label) {
  Require(label < probs.numel(), ErrorKind::kLabel,
          "answer label " + std::to_string(label) + " outside " + std::to_string(probs.numel()) +
              " classes");
  return -std::log(std::max(probs[label], kProbFloor));
}

void TrainConfig::Validate() const {
  Require(std::isfinite(learning_rate) && learning_rate >= 0.0, ErrorKind::kConfig,
          "learning_rate must be finite and non-negative");
  Require(momentum >= 0.0 && momentum < 1.0, ErrorKind::kConfig, "momentum must lie in [0, 1)");
  Require(batch_size >= 1, ErrorKind::kConfig, "batch_size must be positive");
  Require(std::isfinite(temperature) && temperature > 0.0, ErrorKind::kInvalidTemperature,
          "temperature must be positive");
  Require(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0, ErrorKind::kConfig,
          "loss weights must be non-negative");
  Require(alpha + beta + gamma > 0.0, ErrorKind::kConfig, "loss weights must not all be zero");
}

ordered_json TrainConfigToJson(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"momentum", c.momentum},
          {"batch_size", c.batch_size},       {"epochs", c.epochs},
          {"temperature", c.temperature},     {"alpha", c.alpha},
          {"beta", c.beta},                   {"gamma", c.gamma},
          {"kd_t_squared", c.kd_t_squared},   {"seed", c.seed}};
}

TrainConfig TrainConfigFromJson(const ordered_json& j) {
  Require(j.is_object(), ErrorKind::kConfig, "training config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "momentum") c.momentum = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "temperature") c.temperature = value.get<double>();
      else if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "gamma") c.gamma = value.get<double>();
      else if (key == "kd_t_squared") c.kd_t_squared = value.get<bool>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else Fail(ErrorKind::kConfig, "unknown training config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfig, std::string("training config: ") + e.what());
  }
  c.Validate();
  return c;
}

LossBreakdown TotalLoss(const RealTensor& teacher_logits, const RealTensor& student_logits,
                        std::size_t hard_label, const AttentionMap& student_attention,
                        const VisualMask& mask, const TrainConfig& cfg) {
  cfg.Validate();
  LossBreakdown l;
  l.alpha = cfg.alpha;
  l.beta = cfg.beta;
  l.gamma = cfg.gamma;
  l.hard_ce = CrossEntropy(nn::SoftmaxWithTemperature(student_logits, 1.0), hard_label);
  if (teacher_logits.numel() > 0) {
    const SoftTargets q = MakeSoftTargets(teacher_logits, cfg.temperature);
    l.kd = KdLoss(q, nn::SoftmaxWithTemperature(student_logits, cfg.temperature));
    if (cfg.kd_t_squared) l.kd *= cfg.temperature * cfg.temperature;
  } else {
    Require(cfg.beta == 0.0, ErrorKind::kConfig, "distillation weight is set but no teacher logits");
  }
  l.attention = AttentionLoss(student_attention, mask);
  l.total = cfg.alpha * l.hard_ce + cfg.beta * l.kd + cfg.gamma * l.attention;
  return l;
}

LossBreakdown EvaluateLoss(const Model& model, const Sample& sample,
                           const RealTensor& teacher_logits, const TrainConfig& cfg,
                           const ForwardOptions& options) {
  const auto& s = model.spec;
  const VqaOutput out = ForwardVqa(model, sample.image, sample.tokens, options);
  return TotalLoss(teacher_logits, out.answer_logits, sample.label, out.attention,
                   ResampleMask(sample.mask, s.grid_h, s.grid_w), cfg);
}

LossAndGrad ComputeLossAndGradients(const Model& model, const Sample& sample,
                                    const RealTensor& teacher_logits, const TrainConfig& cfg,
                                    const ForwardOptions& options) {
  const GraphSpec& s = model.spec;
  ForwardTrace t;
  const VqaOutput out = ForwardVqa(model, sample.image, sample.tokens, options, &t);
  const VisualMask mask = ResampleMask(sample.mask, s.grid_h, s.grid_w);
  LossAndGrad r;
  r.loss = TotalLoss(teacher_logits, out.answer_logits, sample.label, out.attention, mask, cfg);
  RequireFiniteLoss(r.loss);
  Gradients& grads = r.grads;

  // Loss gradient at the answer logits.
  const std::size_t answers = s.num_answers;
  RealTensor g_logits(Shape{answers});
  for (std::size_t i = 0; i < answers; ++i) {
    g_logits[i] = cfg.alpha * (t.answer_probs[i] - (i == sample.label ? 1.0 : 0.0));
  }
  if (teacher_logits.numel() > 0 && cfg.beta > 0.0) {
    const SoftTargets q = MakeSoftTargets(teacher_logits, cfg.temperature);
    const RealTensor p = nn::SoftmaxWithTemperature(t.answer_logits, cfg.temperature);
    double scale = cfg.beta / cfg.temperature;
    if (cfg.kd_t_squared) scale *= cfg.temperature * cfg.temperature;
    for (std::size_t i = 0; i < answers; ++i) g_logits[i] += scale * (p[i] - q.probs[i]);
  }

  auto cls = nn::DenseBackward(t.joint, model.param("cls.w"), g_logits);
  grads["cls.w"] = std::move(cls.weights);
  grads["cls.b"] = std::move(cls.bias);
  const RealTensor& g_joint = cls.input;

  auto qout = nn::DenseBackward(t.question, model.param("q.out.w"), g_joint);
  grads["q.out.w"] = std::move(qout.weights);
  grads["q.out.b"] = std::move(qout.bias);

  // Attention-weighted pooling and the attention supervision term.
  const std::size_t cells = s.grid_h * s.grid_w, c = t.grid.dim(2);
  const RealTensor target = NormalizeMask(mask);
  RealTensor g_att(Shape{cells});
  RealTensor g_grid(t.grid.shape());
  for (std::size_t cell = 0; cell < cells; ++cell) {
    double acc = cfg.gamma * 2.0 * (t.attention[cell] - target[cell]) / static_cast<double>(cells);
    for (std::size_t ch = 0; ch < c; ++ch) {
      acc += g_joint[ch] * t.grid[cell * c + ch];
      g_grid[cell * c + ch] = t.attention[cell] * g_joint[ch];
    }
    g_att[cell] = acc;
  }
  const RealTensor g_att_logits = nn::SoftmaxBackward(t.attention, g_att, 1.0);
  auto att = nn::CellDenseBackward(t.squeezed, model.param("att.w"),
                                   g_att_logits.Reshaped(Shape{s.grid_h, s.grid_w, 1}));
  grads["att.w"] = std::move(att.weights);
  grads["att.b"] = std::move(att.bias);

  const RealTensor g_expanded = nn::MfbSqueezeBackward(t.squeeze, s.fusion.factor, att.input);
  const nn::DenseParams img_proj{model.param("fuse.img.w"), model.param("fuse.img.b")};
  const nn::DenseParams q_proj{model.param("fuse.q.w"), model.param("fuse.q.b")};
  auto fuse = nn::MfbExpandBackward(t.grid, t.question, img_proj, q_proj, t.expand, g_expanded);
  grads["fuse.img.w"] = std::move(fuse.image_proj.weights);
  grads["fuse.img.b"] = std::move(fuse.image_proj.bias);
  grads["fuse.q.w"] = std::move(fuse.question_proj.weights);
  grads["fuse.q.b"] = std::move(fuse.question_proj.bias);
  AddInto(g_grid, fuse.image_grid);
  RealTensor g_question = std::move(qout.input);
  AddInto(g_question, fuse.question);

  // Text branch.
  const auto lstm_weights = LstmWeights(model);
  auto lstm = nn::LstmBackward(t.lstm, s.text.lstm, lstm_weights, g_question);
  for (std::size_t l = 0; l < lstm.layers.size(); ++l) {
    const std::string p = "txt.lstm." + std::to_string(l);
    grads[p + ".w_ih"] = std::move(lstm.layers[l].w_ih);
    grads[p + ".w_hh"] = std::move(lstm.layers[l].w_hh);
    grads[p + ".b"] = std::move(lstm.layers[l].bias);
  }
  const std::size_t seq = t.tokens.size();
  RealTensor g_text = lstm.input.Reshaped(Shape{seq, 1, lstm.input.dim(1)});
  for (std::size_t i = s.text.convs.size(); i-- > 0;) {
    g_text = StageBackward(model, "txt.conv." + std::to_string(i), s.text.convs[i],
                           t.text_stages[i], std::move(g_text), grads);
  }
  const std::size_t embed = s.text.embed_dim;
  RealTensor g_emb(Shape{s.text.vocab_size, embed});
  for (std::size_t i = 0; i < seq; ++i) {
    const std::size_t row = static_cast<std::size_t>(t.tokens[i]) * embed;
    for (std::size_t k = 0; k < embed; ++k) g_emb[row + k] += g_text[i * embed + k];
  }
  grads["txt.emb"] = std::move(g_emb);

  // Image branch.
  for (std::size_t i = s.image_branch.size(); i-- > 0;) {
    g_grid = StageBackward(model, "img." + std::to_string(i), s.image_branch[i], t.image_stages[i],
                           std::move(g_grid), grads);
  }

  for (const auto& [name, g] : grads) {
    const bool finite = std::all_of(g.data().begin(), g.data().end(),
                                    [](double v) { return std::isfinite(v); });
    if (!finite) Fail(ErrorKind::kNumeric, "non-finite gradient in '" + name + "'");
  }
  return r;
}

TrainResult Train(const Model* teacher, Model student, std::span<const Sample> data,
                  const TrainConfig& cfg) {
  cfg.Validate();
  Require(!data.empty(), ErrorKind::kConfig, "training dataset is empty");
  Require(teacher != nullptr || cfg.beta == 0.0, ErrorKind::kConfig,
          "distillation weight beta > 0 requires a teacher");
  if (teacher) {
    Require(teacher->spec.num_answers == student.spec.num_answers, ErrorKind::kConfig,
            "teacher and student disagree on the number of answers");
  }
  std::vector<RealTensor> teacher_logits(data.size());
  if (teacher) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      teacher_logits[i] = ForwardVqa(*teacher, data[i].image, data[i].tokens).answer_logits;
    }
  }

  auto evaluate = [&] {
    std::vector<LossBreakdown> items;
    for (std::size_t i = 0; i < data.size(); ++i) {
      items.push_back(EvaluateLoss(student, data[i], teacher_logits[i], cfg));
    }
    return Accumulate(items);
  };

  TrainResult result;
  result.history.push_back(evaluate());
  Gradients velocity;
  for (const auto& [name, p] : student.params) velocity.emplace(name, RealTensor(p.shape()));

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t draws = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Gradients sum;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const ForwardOptions opts{true, cfg.seed * 0x9E3779B97F4A7C15ULL + ++draws};
        auto lg = ComputeLossAndGradients(student, data[i], teacher_logits[i], cfg, opts);
        if (sum.empty()) {
          sum = std::move(lg.grads);
        } else {
          for (auto& [name, g] : sum) AddInto(g, lg.grads.at(name));
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& [name, w] : student.params) {
        RealTensor& v = velocity.at(name);
        const RealTensor& g = sum.at(name);
        for (std::size_t j = 0; j < w.numel(); ++j) {
          v[j] = cfg.momentum * v[j] - cfg.learning_rate * (g[j] * inv);
          w[j] += v[j];
        }
      }
    }
    result.history.push_back(evaluate());
  }
  result.student = std::move(student);
  return result;
}

GradCheckResult GradCheck(const Model& model, const Sample& sample,
                          const RealTensor& teacher_logits, const TrainConfig& cfg,
                          const ForwardOptions& options, double step) {
  Require(step > 0.0, ErrorKind::kConfig, "finite-difference step must be positive");
  const auto analytic = ComputeLossAndGradients(model, sample, teacher_logits, cfg, options);
  auto signature_of = [&](const Model& m) {
    ForwardTrace t;
    ForwardVqa(m, sample.image, sample.tokens, options, &t);
    return KinkSignature(t, m.spec);
  };
  const auto base_sig = signature_of(model);

  GradCheckResult result;
  Model probe = model;
  for (const auto& info : ParameterLayout(model.spec)) {
    TensorCheck check;
    check.name = info.name;
    RealTensor& w = probe.params.at(info.name);
    const RealTensor& a = analytic.grads.at(info.name);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t j = 0; j < w.numel(); ++j) {
      const double original = w[j];
      w[j] = original + step;
      const double plus = EvaluateLoss(probe, sample, teacher_logits, cfg, options).total;
      const bool plus_ok = signature_of(probe) == base_sig;
      w[j] = original - step;
      const double minus = EvaluateLoss(probe, sample, teacher_logits, cfg, options).total;
      const bool minus_ok = signature_of(probe) == base_sig;
      w[j] = original;
      if (!plus_ok || !minus_ok) {
        ++check.skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * step);
      diff2 += (a[j] - numeric) * (a[j] - numeric);
      a2 += a[j] * a[j];
      n2 += numeric * numeric;
      ++check.checked;
    }
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    check.relative_error = std::sqrt(diff2) / std::max(denom, kGradNormFloor);
    result.max_relative_error = std::max(result.max_relative_error, check.relative_error);
    result.tensors.push_back(std::move(check));
  }
  return result;
}

SyntheticDataset MakeColorDataset(std::size_t count, std::size_t height, std::size_t width,
                                  std::size_t max_question_len, std::uint64_t seed) {
  Require(count >= 1, ErrorKind::kConfig, "dataset needs at least one sample");
  Require(height >= 4 && width >= 4, ErrorKind::kConfig, "toy images need extents of at least 4");
  SyntheticDataset ds;
  ds.vocab = {"what", "color", "is", "the", "square", "which", "patch", "shows", "bright"};
  ds.questions = {"What color is the square?", "Which color is the bright patch?",
                  "What color shows the patch?", "Which color is the square?"};
  ds.answers = {"red", "green", "blue", "yellow"};
  // Channel intensities per answer.
  static constexpr double kColors[4][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}};
  const Vocabulary vocab(ds.vocab, max_question_len);

  std::mt19937_64 rng(seed);
  auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  const std::size_t side_h = std::max<std::size_t>(2, height / 4);
  const std::size_t side_w = std::max<std::size_t>(2, width / 4);
  for (std::size_t n = 0; n < count; ++n) {
    Sample s;
    s.label = n % 4;
    s.image = RealTensor(Shape{height, width, 3});
    for (auto& v : s.image.data()) v = 0.25 * uniform();
    s.mask.mask = RealTensor(Shape{height, width});
    const std::size_t y0 = static_cast<std::size_t>(rng() % (height - side_h + 1));
    const std::size_t x0 = static_cast<std::size_t>(rng() % (width - side_w + 1));
    for (std::size_t y = y0; y < y0 + side_h; ++y) {
      for (std::size_t x = x0; x < x0 + side_w; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          s.image.at3(y, x, c) = kColors[s.label][c] * (0.75 + 0.25 * uniform());
        }
        s.mask.mask[y * width + x] = 1.0;
      }
    }
    const std::string& question = ds.questions[rng() % ds.questions.size()];
    s.tokens = Tokenize(question, vocab);
    ds.sample_questions.push_back(question);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Model BuildCheckModel(const GraphSpec& spec, std::uint64_t seed) {
  Model m = BuildModel(spec, seed);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  for (const auto& info : ParameterLayout(spec)) {
    if (info.kind != ParamInfo::Kind::kBias && info.kind != ParamInfo::Kind::kLstmBias) continue;
    for (auto& v : m.params.at(info.name).data()) {
      v += static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    }
  }
  return m;
}

GraphSpec TinyStudentSpec() {
  GraphSpec s;
  s.role = ModelRole::kStudent;
  s.input_h = s.input_w = 8;
  s.input_c = 3;
  s.image_branch = {{{3, 3, 2, nn::Padding::kSame, 3, 4, true}, true, 0},
                    {{3, 3, 2, nn::Padding::kSame, 4, 6, true}, true, 0}};
  s.grid_h = s.grid_w = 2;
  s.text.vocab_size = 10;
  s.text.embed_dim = 5;
  s.text.max_question_len = 6;
  s.text.lstm = {5, 6, 1};
  s.fusion = {8, 4, 0.25};
  s.num_answers = 4;
  s.Validate();
  return s;
}

GraphSpec TinyTeacherSpec() {
  GraphSpec s;
  s.role = ModelRole::kTeacher;
  s.input_h = s.input_w = 8;
  s.input_c = 3;
  s.image_branch = {{{3, 3, 1, nn::Padding::kSame, 3, 3, false}, true, 2},
                    {{3, 3, 1, nn::Padding::kValid, 3, 4, false}, true, 0}};
  s.grid_h = s.grid_w = 2;
  s.text.vocab_size = 10;
  s.text.embed_dim = 4;
  s.text.max_question_len = 6;
  s.text.convs = {{{3, 1, 1, nn::Padding::kSame, 4, 4, false}, true, 0}};
  s.text.lstm = {4, 5, 2};
  s.fusion = {6, 3, 0.2};
  s.num_answers = 4;
  s.Validate();
  return s;
}

}  // namespace qvqa
