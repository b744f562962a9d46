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

// qvqa command-line driver. Machine outputs are JSON or binary files;
// human-readable tables go to stdout. Exit status: 0 success, 1 domain
// failure, 2 usage error.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <optional>

#include "CLI11.hpp"
#include "qvqa/distill.hpp"
#include "qvqa/io.hpp"
#include "qvqa/planner.hpp"
#include "qvqa/sim.hpp"
#include "selftest.hpp"

namespace {

using namespace qvqa;
using nlohmann::ordered_json;

// Reference deployment figures shown next to our own numbers.
constexpr double kRefL1Kb = 49.0;
constexpr double kRefL2Kb = 290.0;
constexpr double kRefDramKb = 0.0;
constexpr double kRefModelKb = 339.0;
constexpr double kRefClockMhz = 175.0;
constexpr double kRefLatencyMs = 56.0;
constexpr double kRefPowerW = 0.7;
constexpr double kRefEnergyJ = 0.2;

ordered_json ReadJson(const std::string& path) {
  const auto bytes = ReadFileBytes(path);
  try {
    return ordered_json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, path + ": " + e.what());
  }
}

void WriteJson(const std::string& path, const ordered_json& j) { WriteFileAtomic(path, j.dump(2) + "\n"); }

GraphSpec SpecFrom(const std::string& spec_path, const std::string& role) {
  if (!spec_path.empty()) return GraphSpecFromJson(ReadJson(spec_path));
  return ParseRole(role) == ModelRole::kTeacher ? GraphSpec::DefaultTeacher() : GraphSpec::DefaultStudent();
}

HardwareModel HardwareFrom(const std::string& path) {
  return path.empty() ? HardwareModel{} : HardwareFromJson(ReadJson(path));
}

TrainConfig ConfigFrom(const std::string& path) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : TrainConfigFromJson(ReadJson(path));
  cfg.Validate();
  return cfg;
}

GraphSpec SpecOfModelFile(const std::string& path) {
  return PeekModelPrecision(path) == ModelPrecision::kInt8 ? LoadQuantModel(path).spec : LoadModel(path).spec;
}

std::string Kb(double bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", bytes / 1024.0);
  return buf;
}

void PrintLoss(std::size_t epoch, const LossBreakdown& l) {
  std::printf("epoch %3zu  total %.6f  kd %.6f  ce %.6f  att %.6f\n", epoch, l.total, l.kd, l.hard_ce,
              l.attention);
}

struct Args {
  std::string spec, role = "student", out, model, data, config, teacher, student, hw, plan, sim, image,
      question, vocab, answers, trace, kind = "tiny-student";
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::size_t count = 64, height = 64, width = 64, max_len = 12, limit = 32, top_k = 3;
  bool serial = false, separate_store = false;
  double tolerance = 1e-4;
};

int CmdSpec(const Args& a) {
  const auto j = GraphSpecToJson(SpecFrom("", a.role));
  if (a.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    WriteJson(a.out, j);
  }
  return 0;
}

int CmdInit(const Args& a) {
  const Model m = BuildModel(SpecFrom(a.spec, a.role), a.seed);
  SaveModel(m, a.out);
  std::printf("wrote %s: %zu parameters\n", a.out.c_str(), m.ParameterCount());
  return 0;
}

int CmdSynth(const Args& a) {
  const auto ds = MakeColorDataset(a.count, a.height, a.width, a.max_len, a.seed);
  SaveDataset(ds, a.out);
  std::printf("wrote %zu samples (%zux%zu) to %s\n", ds.samples.size(), a.height, a.width, a.out.c_str());
  return 0;
}

int CmdDistill(const Args& a) {
  TrainConfig cfg = ConfigFrom(a.config);
  if (a.seed_set) cfg.seed = a.seed;
  Model student = !a.student.empty() ? LoadModel(a.student) : BuildModel(SpecFrom(a.spec, a.role), cfg.seed);
  std::optional<Model> teacher;
  if (!a.teacher.empty()) teacher = LoadModel(a.teacher);
  Require(teacher || cfg.beta == 0.0, ErrorKind::kConfig, "--teacher is required unless beta is 0");
  const Dataset ds = LoadDataset(a.data, student.spec.text.max_question_len);
  const auto result = Train(teacher ? &*teacher : nullptr, std::move(student), ds.samples, cfg);
  for (std::size_t e = 0; e < result.history.size(); ++e) PrintLoss(e, result.history[e]);
  SaveModel(result.student, a.out);
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

int CmdQuantize(const Args& a) {
  const Model m = LoadModel(a.model);
  const Dataset ds = LoadDataset(a.data, m.spec.text.max_question_len);
  std::vector<CalibrationSample> calib;
  for (std::size_t i = 0; i < ds.samples.size() && i < a.limit; ++i) {
    calib.push_back({ds.samples[i].image, ds.samples[i].tokens});
  }
  const QuantModel qm = QuantizeModel(m, calib);
  SaveModel(qm, a.out);
  std::printf("wrote %s: %zu bytes, %zu calibration samples\n", a.out.c_str(), EncodeModel(qm).size(),
              calib.size());
  return 0;
}

int CmdInfer(const Args& a) {
  const RealTensor image = LoadImage(a.image);
  const bool int8 = PeekModelPrecision(a.model) == ModelPrecision::kInt8;
  std::optional<Model> fm;
  std::optional<QuantModel> qm;
  if (int8) {
    qm = LoadQuantModel(a.model);
  } else {
    fm = LoadModel(a.model);
  }
  const GraphSpec& spec = int8 ? qm->spec : fm->spec;
  const Vocabulary vocab(LoadLines(a.vocab), spec.text.max_question_len);
  const auto tokens = Tokenize(a.question, vocab);
  VqaOutput out;
  if (!a.plan.empty()) {
    Require(int8, ErrorKind::kConfig, "--plan needs a full-integer model");
    out = TiledExecute(*qm, PlanFromJson(ReadJson(a.plan)), image, tokens);
  } else {
    out = int8 ? ForwardVqa(*qm, image, tokens) : ForwardVqa(*fm, image, tokens);
  }
  std::vector<std::string> answers;
  if (!a.answers.empty()) answers = LoadLines(a.answers);
  std::vector<std::size_t> order(out.answer_probs.numel());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return out.answer_probs[x] > out.answer_probs[y]; });
  for (std::size_t i = 0; i < std::min(a.top_k, order.size()); ++i) {
    const std::size_t k = order[i];
    const std::string name = k < answers.size() ? answers[k] : "answer " + std::to_string(k);
    std::printf("%zu. %-16s %.4f\n", i + 1, name.c_str(), out.answer_probs[k]);
  }
  const auto& att = out.attention.weights;
  const std::size_t gw = att.dim(1);
  std::size_t best = 0;
  double entropy = 0.0;
  for (std::size_t i = 0; i < att.numel(); ++i) {
    if (att[i] > att[best]) best = i;
    if (att[i] > 0.0) entropy -= att[i] * std::log(att[i]);
  }
  std::printf("attention: peak cell (%zu, %zu) weight %.4f, entropy %.3f of max %.3f\n", best / gw, best % gw,
              att[best], entropy, std::log(static_cast<double>(att.numel())));
  for (std::size_t y = 0; y < att.dim(0); ++y) {
    for (std::size_t x = 0; x < gw; ++x) std::printf(" %.3f", att[y * gw + x]);
    std::printf("\n");
  }
  return 0;
}

int CmdPlan(const Args& a) {
  const GraphSpec spec = a.model.empty() ? SpecFrom(a.spec, a.role) : SpecOfModelFile(a.model);
  const HardwareModel hw = HardwareFrom(a.hw);
  const TilePlan plan = PlanTiling(spec, hw);
  if (!a.out.empty()) WriteJson(a.out, PlanToJson(plan));
  for (const auto& p : plan.layers) {
    std::printf("%-14s rows %4zu  tile %4zu  tiles %3zu  %-11s  L1 %6zu\n", p.layer.c_str(), p.out_rows,
                p.tile_rows, p.tiles_total, std::string(PlacementName(p.weights)).c_str(), p.l1_bytes());
  }
  std::cout << FormatMemoryTable(MemoryReport(plan, hw));
  return 0;
}

int CmdSimulate(const Args& a) {
  const TilePlan plan = PlanFromJson(ReadJson(a.plan));
  const HardwareModel hw = a.hw.empty() ? plan.hw : HardwareFrom(a.hw);
  const SimOptions opt{a.serial ? SimMode::kSerial : SimMode::kPipelined, a.separate_store};
  const auto layers = BuildSchedule(plan, hw);
  const SimReport r = Simulate(layers, hw, opt);
  const std::string problem = ValidateTrace(r.events, opt.separate_store_engine);
  Require(problem.empty(), ErrorKind::kNumeric, "invalid schedule: " + problem);
  if (!a.out.empty()) WriteJson(a.out, ReportToJson(r));
  if (!a.trace.empty()) WriteFileAtomic(a.trace, TraceToCsv(r.events, layers));
  std::printf("%s: %llu cycles, %.3f ms, %.6f J, DMA busy %.1f%%, compute busy %.1f%%\n",
              a.serial ? "serial" : "pipelined", static_cast<unsigned long long>(r.total_cycles), r.latency_ms,
              r.energy_j, 100.0 * r.dma_busy_fraction, 100.0 * r.compute_busy_fraction);
  return 0;
}

int CmdReport(const Args& a) {
  const TilePlan plan = PlanFromJson(ReadJson(a.plan));
  const auto rows = MemoryReport(plan, plan.hw);
  const double ref_used[] = {kRefL1Kb, kRefL2Kb, kRefDramKb};
  std::printf("%-6s %16s %16s %9s %16s\n", "Level", "Available (KB)", "Used (KB)", "Used (%)", "Reference (KB)");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::printf("%-6s %16s %16s %8.1f%% %16.1f\n", rows[i].level.c_str(),
                Kb(static_cast<double>(rows[i].available)).c_str(), Kb(static_cast<double>(rows[i].used)).c_str(),
                rows[i].percent, ref_used[i]);
  }
  if (!a.model.empty()) {
    const auto bytes = ReadFileBytes(a.model);
    std::printf("\nModel file: %s KB (%s), reference %.0f KB\n", Kb(static_cast<double>(bytes.size())).c_str(),
                PeekPrecision(bytes) == ModelPrecision::kInt8 ? "full-integer" : "float64", kRefModelKb);
  }
  if (!a.sim.empty()) {
    const SimReport r = ReportFromJson(ReadJson(a.sim));
    const double watts = r.latency_ms > 0.0 ? r.energy_j / (r.latency_ms / 1000.0) : 0.0;
    std::printf("\n%-16s %14s %14s\n", "Metric", "Simulated", "Reference");
    std::printf("%-16s %14.1f %14.1f\n", "Frequency (MHz)", r.hw.clock_hz / 1e6, kRefClockMhz);
    std::printf("%-16s %14.3f %14.1f\n", "Latency (ms)", r.latency_ms, kRefLatencyMs);
    std::printf("%-16s %14.3f %14.1f\n", "Power (W)", watts, kRefPowerW);
    std::printf("%-16s %14.6f %14.1f\n", "Energy (J)", r.energy_j, kRefEnergyJ);
    const double product = kRefLatencyMs / 1000.0 * kRefPowerW;
    std::printf("note: reference latency x power = %.4f J, which disagrees with its %.1f J energy figure\n",
                product, kRefEnergyJ);
    std::printf("simulated latency is an estimate; it depends on the MAC and DMA rate calibration\n");
  }
  return 0;
}

int CmdGradcheck(const Args& a) {
  TrainConfig cfg = ConfigFrom(a.config);
  Require(a.kind == "tiny-student" || a.kind == "tiny-teacher", ErrorKind::kConfig,
          "--model-kind must be tiny-student or tiny-teacher");
  const GraphSpec spec = a.kind == "tiny-student" ? TinyStudentSpec() : TinyTeacherSpec();
  const Model model = BuildCheckModel(spec, a.seed);
  const auto ds = MakeColorDataset(1, spec.input_h, spec.input_w, spec.text.max_question_len, a.seed);
  Require(spec.input_c == 3, ErrorKind::kConfig, "gradcheck models take RGB input");
  const Model teacher = BuildCheckModel(spec, a.seed + 1);
  const RealTensor teacher_logits = ForwardVqa(teacher, ds.samples[0].image, ds.samples[0].tokens).answer_logits;
  ForwardOptions opt;
  opt.training = true;
  opt.dropout_seed = a.seed;
  const auto result = GradCheck(model, ds.samples[0], teacher_logits, cfg, opt);
  for (const auto& t : result.tensors) {
    std::printf("%-22s rel %.3e  checked %5zu  skipped %3zu\n", t.name.c_str(), t.relative_error, t.checked,
                t.skipped);
  }
  std::printf("max relative error %.3e (tolerance %.1e)\n", result.max_relative_error, a.tolerance);
  Require(result.max_relative_error < a.tolerance, ErrorKind::kNumeric, "gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qvqa: quantized visual question answering toolkit"};
  app.require_subcommand(1);
  Args a;
  auto seed = [&](CLI::App* c) {
    c->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { a.seed = v; a.seed_set = true; },
                                          "random seed");
  };
  auto spec_opts = [&](CLI::App* c) {
    c->add_option("--spec", a.spec, "GraphSpec JSON file");
    c->add_option("--role", a.role, "default architecture when no --spec: student or teacher")
        ->check(CLI::IsMember({"student", "teacher"}));
  };

  auto* spec = app.add_subcommand("spec", "print a default GraphSpec as JSON");
  spec->add_option("--role", a.role)->check(CLI::IsMember({"student", "teacher"}));
  spec->add_option("--out", a.out);

  auto* init = app.add_subcommand("init", "write a freshly initialized float model");
  spec_opts(init);
  seed(init);
  init->add_option("--out", a.out)->required();

  auto* synth = app.add_subcommand("synth", "write the synthetic color dataset");
  synth->add_option("--out", a.out)->required();
  synth->add_option("--count", a.count);
  synth->add_option("--height", a.height);
  synth->add_option("--width", a.width);
  synth->add_option("--max-len", a.max_len);
  seed(synth);

  auto* distill = app.add_subcommand("distill", "train a student, optionally against a teacher");
  distill->add_option("--teacher", a.teacher, "float teacher model");
  distill->add_option("--student", a.student, "float model to start from");
  spec_opts(distill);
  distill->add_option("--data", a.data, "dataset directory")->required();
  distill->add_option("--config", a.config, "training config JSON");
  distill->add_option("--out", a.out)->required();
  seed(distill);

  auto* quantize = app.add_subcommand("quantize", "full-integer post-training quantization");
  quantize->add_option("--model", a.model)->required();
  quantize->add_option("--calib", a.data, "dataset directory")->required();
  quantize->add_option("--limit", a.limit, "calibration samples");
  quantize->add_option("--out", a.out)->required();

  auto* infer = app.add_subcommand("infer", "answer one question about one image");
  infer->add_option("--model", a.model)->required();
  infer->add_option("--image", a.image)->required();
  infer->add_option("--question", a.question)->required();
  infer->add_option("--vocab", a.vocab)->required();
  infer->add_option("--answers", a.answers, "answer names, one per line");
  infer->add_option("--plan", a.plan, "run tiled under this plan");
  infer->add_option("--top-k", a.top_k);

  auto* plan = app.add_subcommand("plan", "tile the full-integer graph for the memory hierarchy");
  plan->add_option("--model", a.model);
  spec_opts(plan);
  plan->add_option("--hw", a.hw, "hardware model JSON");
  plan->add_option("--out", a.out);

  auto* simulate = app.add_subcommand("simulate", "double-buffered dataflow simulation of a plan");
  simulate->add_option("--plan", a.plan)->required();
  simulate->add_option("--hw", a.hw, "hardware model JSON (default: the plan's)");
  simulate->add_flag("--serial", a.serial, "no overlap between load, compute and store");
  simulate->add_flag("--separate-store-dma", a.separate_store, "stores use their own DMA engine");
  simulate->add_option("--trace", a.trace, "event trace CSV");
  simulate->add_option("--out", a.out);

  auto* report = app.add_subcommand("report", "resource and performance tables");
  report->add_option("--plan", a.plan)->required();
  report->add_option("--sim", a.sim, "simulation report JSON");
  report->add_option("--model", a.model, "model file to size");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the training gradients");
  gradcheck->add_option("--config", a.config, "training config JSON (loss weights, temperature)");
  gradcheck->add_option("--model-kind", a.kind)->check(CLI::IsMember({"tiny-student", "tiny-teacher"}));
  gradcheck->add_option("--tolerance", a.tolerance);
  seed(gradcheck);

  auto* selftest = app.add_subcommand("selftest", "run the built-in checks");
  seed(selftest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*spec) return CmdSpec(a);
    if (*init) return CmdInit(a);
    if (*synth) return CmdSynth(a);
    if (*distill) return CmdDistill(a);
    if (*quantize) return CmdQuantize(a);
    if (*infer) return CmdInfer(a);
    if (*plan) return CmdPlan(a);
    if (*simulate) return CmdSimulate(a);
    if (*report) return CmdReport(a);
    if (*gradcheck) return CmdGradcheck(a);
    if (*selftest) return RunSelfTest(a.seed, std::cout) ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
