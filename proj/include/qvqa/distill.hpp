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

#ifndef QVQA_DISTILL_HPP_
#define QVQA_DISTILL_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qvqa/model.hpp"

namespace qvqa {

struct SoftTargets {
  RealTensor probs;
  double temperature = 1.0;
};

SoftTargets MakeSoftTargets(const RealTensor& teacher_logits, double temperature);

// sum_i q_i log(q_i / p_i), with p clamped below at 1e-12. Terms with q_i = 0
// contribute nothing.
double KdLoss(const SoftTargets& targets, const RealTensor& student_probs);

// -log p[label], p clamped like KdLoss. Throws kLabel for a bad index.
double CrossEntropy(const RealTensor& probs, std::size_t label);

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  double temperature = 4.0;
  double alpha = 0.5;  // hard-label cross-entropy
  double beta = 0.5;   // distillation
  double gamma = 0.5;  // attention supervision
  bool kd_t_squared = false;
  std::uint64_t seed = 1;

  void Validate() const;
};

nlohmann::ordered_json TrainConfigToJson(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig TrainConfigFromJson(const nlohmann::ordered_json& j);

struct LossBreakdown {
  double kd = 0.0;  // already multiplied by T^2 when kd_t_squared is set
  double hard_ce = 0.0;
  double attention = 0.0;
  double total = 0.0;
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
};

// `teacher_logits` may be empty only when cfg.beta == 0.
LossBreakdown TotalLoss(const RealTensor& teacher_logits, const RealTensor& student_logits,
                        std::size_t hard_label, const AttentionMap& student_attention,
                        const VisualMask& mask, const TrainConfig& cfg);

struct Sample {
  RealTensor image;
  std::vector<std::int32_t> tokens;
  std::size_t label = 0;
  VisualMask mask;  // any resolution that block-averages onto the model grid
};

using Gradients = std::map<std::string, RealTensor>;

struct LossAndGrad {
  LossBreakdown loss;
  Gradients grads;  // one entry per model parameter
};

// Forward + reverse pass for one sample. The mask is resampled onto the
// model's attention grid. Throws kNumeric naming the first non-finite tensor.
LossAndGrad ComputeLossAndGradients(const Model& model, const Sample& sample,
                                    const RealTensor& teacher_logits, const TrainConfig& cfg,
                                    const ForwardOptions& options = {});

// Loss only (no gradients), same conventions.
LossBreakdown EvaluateLoss(const Model& model, const Sample& sample,
                           const RealTensor& teacher_logits, const TrainConfig& cfg,
                           const ForwardOptions& options = {});

struct TrainResult {
  Model student;
  // Entry 0 is the dataset-mean loss before the first update, then one entry
  // per epoch, all evaluated in inference mode.
  std::vector<LossBreakdown> history;
};

// Minibatch SGD with momentum. Teacher logits are computed once up front in
// inference mode; `teacher` may be null when cfg.beta == 0.
TrainResult Train(const Model* teacher, Model student, std::span<const Sample> data,
                  const TrainConfig& cfg);

// ---- gradient verification ----

struct TensorCheck {
  std::string name;
  // |a - n| / max(|a| + |n|, 1e-6): tensors whose true gradient vanishes
  // (e.g. a bias shared by every softmax input) compare absolutely.
  double relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a ReLU/max/sign kink
};

struct GradCheckResult {
  std::vector<TensorCheck> tensors;
  double max_relative_error = 0.0;
};

// Central differences over every entry of every parameter tensor. Dropout is
// held fixed through `options.dropout_seed`.
GradCheckResult GradCheck(const Model& model, const Sample& sample,
                          const RealTensor& teacher_logits, const TrainConfig& cfg,
                          const ForwardOptions& options = {}, double step = 1e-4);

// ---- synthetic data ----

// Color toy: a bright square of one of four colors sits at a random spot
// on a dim noisy RGB background; the answer is its color and the mask covers
// the square. Labels cycle 0..3.
struct SyntheticDataset {
  std::vector<std::string> vocab;  // tokens, id = position + 1
  std::vector<std::string> questions;  // templates
  std::vector<std::string> answers;
  std::vector<Sample> samples;
  std::vector<std::string> sample_questions;  // text behind each sample's tokens
};

SyntheticDataset MakeColorDataset(std::size_t count, std::size_t height, std::size_t width,
                                  std::size_t max_question_len, std::uint64_t seed);

// Tiny configurations for exhaustive finite-difference checks: a student
// (separable convs, one LSTM layer) and a teacher-style model (regular convs,
// max pooling, two LSTM layers, text convolutions).
GraphSpec TinyStudentSpec();
GraphSpec TinyTeacherSpec();
// BuildModel plus biases shifted by U(-0.5, 0.5), so no activation sits
// exactly on a kink.
Model BuildCheckModel(const GraphSpec& spec, std::uint64_t seed);

}  // namespace qvqa

#endif  // QVQA_DISTILL_HPP_
