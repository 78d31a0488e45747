// Copyright 2026 The mia-transfer Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver: run / sweep / gen-data / train-teacher / inspect.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include "CLI11.hpp"
#endif
#include "mia/data.hpp"
#include "mia/dataset.hpp"
#include "mia/experiment.hpp"
#include "mia/nn.hpp"
#include "mia/transfer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  bool quiet = false;
};

mia::ExperimentConfig ResolveConfig(const CommonOptions& opts) {
  mia::ExperimentConfig cfg = mia::LoadConfig(opts.config);
  if (opts.seed) cfg.base_seed = *opts.seed;
  if (opts.mode) {
    try {
      cfg.attack_mode = mia::AttackModeFromString(*opts.mode);
    } catch (const mia::ValidationError& e) {
      throw mia::ConfigError(e.what());
    }
  }
  cfg.Validate();
  return cfg;
}

void PrintSummary(const mia::AttackReport& report) {
  for (const auto& t : report.trials) {
    if (!t.metrics) {
      std::printf("trial seed=%llu FAILED: %s\n",
                  static_cast<unsigned long long>(t.seed), t.error.c_str());
      continue;
    }
    std::printf("trial seed=%llu acc=%.4f prec=%.4f rec=%.4f auc=%.4f",
                static_cast<unsigned long long>(t.seed), t.metrics->accuracy,
                t.metrics->precision, t.metrics->recall, t.metrics->auc);
    if (t.metrics->accuracy_3class) {
      std::printf(" acc3=%.4f", *t.metrics->accuracy_3class);
    }
    std::printf("\n");
  }
  for (const auto& [name, s] : report.aggregate) {
    std::printf("%-16s mean=%.4f sd=%.4f (n=%zu)\n", name.c_str(), s.mean, s.sd,
                s.count);
  }
  if (report.partial) std::printf("warning: some trials failed\n");
}

int CmdRun(const CommonOptions& opts) {
  const auto cfg = ResolveConfig(opts);
  const auto report = mia::RunExperiment(cfg);
  const auto files = mia::EmitOutputs(report, mia::MakeManifest(cfg), opts.out);
  if (!opts.quiet) {
    PrintSummary(report);
    for (const auto& f : files) std::printf("wrote %s\n", f.string().c_str());
  }
  return report.CompletedMetrics().empty() ? kExitRuntime : kExitOk;
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int CmdSweep(const CommonOptions& opts, const std::string& axis_name,
             const std::string& values) {
  const auto cfg = ResolveConfig(opts);
  const auto axis = mia::SweepAxisFromString(axis_name);
  const auto list = SplitList(values);
  if (list.empty()) throw mia::ConfigError("--values is empty");
  const auto cells = mia::Sweep(cfg, axis, list);
  const std::filesystem::path out(opts.out);
  bool any_failed = false;
  for (const auto& cell : cells) {
    if (!cell.report) {
      any_failed = true;
      std::fprintf(stderr, "%s=%s failed: %s\n", axis_name.c_str(), cell.value.c_str(),
                   cell.error.c_str());
      continue;
    }
    const auto cell_cfg = mia::WithAxisValue(cfg, axis, cell.value);
    mia::EmitOutputs(*cell.report, mia::MakeManifest(cell_cfg),
                     out / (axis_name + "=" + cell.value));
    if (!opts.quiet) {
      std::printf("== %s=%s\n", axis_name.c_str(), cell.value.c_str());
      PrintSummary(*cell.report);
    }
  }
  std::filesystem::create_directories(out);
  std::ofstream csv(out / "sweep.csv", std::ios::trunc);
  csv << mia::SweepCsv(axis, cells);
  if (!csv) throw mia::Error("cannot write " + (out / "sweep.csv").string());
  if (!opts.quiet) std::printf("wrote %s\n", (out / "sweep.csv").string().c_str());
  return any_failed ? kExitRuntime : kExitOk;
}

int CmdGenData(const CommonOptions& opts) {
  const auto cfg = ResolveConfig(opts);
  mia::TaskSpec spec = cfg.task;
  spec.seed = mia::DeriveSeed(cfg.base_seed, "task");
  const auto task = mia::GenerateSyntheticTask(spec);
  const std::filesystem::path out(opts.out);
  std::filesystem::create_directories(out);
  mia::SaveDataset((out / "teacher.ds").string(), task.teacher);
  mia::SaveDataset((out / "student.ds").string(), task.student);
  if (!opts.quiet) {
    std::printf("wrote %s (%zu rows)\n", (out / "teacher.ds").string().c_str(),
                task.teacher.size());
    std::printf("wrote %s (%zu rows)\n", (out / "student.ds").string().c_str(),
                task.student.size());
  }
  return kExitOk;
}

int CmdTrainTeacher(const CommonOptions& opts) {
  const auto cfg = ResolveConfig(opts);
  const std::uint64_t seed = cfg.base_seed;
  mia::TaskSpec spec = cfg.task;
  spec.seed = mia::DeriveSeed(seed, "task");
  const auto task = mia::GenerateSyntheticTask(spec);
  const auto split =
      mia::PartitionMemberNonmember(task.teacher, mia::DeriveSeed(seed, "teacher-split"));
  mia::Hyperparams hp = cfg.training;
  hp.seed = mia::DeriveSeed(seed, "teacher");
  const auto result = mia::TrainTeacher(cfg.TeacherArchitecture(), split.member, hp);
  const std::filesystem::path out(opts.out);
  std::filesystem::create_directories(out);
  std::ofstream os(out / "teacher.json", std::ios::trunc);
  os << mia::NetworkToJson(result.net).dump() << '\n';
  if (!os) throw mia::Error("cannot write " + (out / "teacher.json").string());
  if (!opts.quiet) {
    std::printf("teacher: train acc=%.4f held-out acc=%.4f final loss=%.6f\n",
                mia::Accuracy(result.net, split.member),
                mia::Accuracy(result.net, split.non_member),
                result.history.loss.back());
    std::printf("wrote %s\n", (out / "teacher.json").string().c_str());
  }
  return kExitOk;
}

int CmdInspect(const std::string& path) {
  if (path.size() > 3 && path.substr(path.size() - 3) == ".ds") {
    const auto ds = mia::LoadDataset(path);
    std::vector<std::size_t> per_class(ds.num_classes, 0);
    for (auto l : ds.labels) ++per_class[l];
    std::printf("dataset: %zu rows, dim %zu, %zu classes\n", ds.size(), ds.dim(),
                ds.num_classes);
    for (std::size_t c = 0; c < per_class.size(); ++c) {
      std::printf("  class %zu: %zu\n", c, per_class[c]);
    }
    return kExitOk;
  }
  std::ifstream is(path);
  if (!is) throw mia::Error("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw mia::ValidationError("'" + path + "' is not JSON: " + e.what());
  }
  if (j.contains("format") && j["format"] == "mia-network") {
    const auto net = mia::NetworkFromJson(j);
    std::printf("network: %zu layers, %zu parameters, %d parts\n", net.depth(),
                net.ParameterCount(), net.num_parts());
    for (std::size_t l = 0; l < net.depth(); ++l) {
      const auto& layer = net.layers[l];
      std::printf("  layer %zu: %zu -> %zu %s part=%d %s\n", l, layer.inputs,
                  layer.outputs, mia::ToString(layer.activation).c_str(), layer.part,
                  layer.trainable ? "trainable" : "frozen");
    }
    return kExitOk;
  }
  if (j.contains("aggregate") && j.contains("trials")) {
    std::printf("report: %zu trials, case %s, mode %s\n", j["trials"].size(),
                j["config"]["attack"]["case"].get<std::string>().c_str(),
                j["config"]["attack"]["mode"].get<std::string>().c_str());
    for (const auto& [name, s] : j["aggregate"].items()) {
      std::printf("  %-16s mean=%.4f sd=%.4f\n", name.c_str(), s["mean"].get<double>(),
                  s["sd"].get<double>());
    }
    return kExitOk;
  }
  if (j.contains("config_hash")) {
    std::printf("manifest: config %s, %zu seeds, tool %s\n",
                j["config_hash"].get<std::string>().c_str(), j["seeds"].size(),
                j["tool_version"].get<std::string>().c_str());
    return kExitOk;
  }
  std::printf("%s\n", j.dump(2).c_str());
  return kExitOk;
}

void AddCommon(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out, "Output directory")->required();
  cmd->add_option("--seed", opts.seed, "Override base_seed");
  cmd->add_option("--mode", opts.mode, "Attack mode: threshold|classifier");
  cmd->add_flag("--quiet", opts.quiet, "Suppress the summary");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership inference attacks against transfer learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", mia::kToolVersion);

  CommonOptions run_opts, sweep_opts, gen_opts, teacher_opts;
  std::string axis, values, inspect_path;

  auto* run = app.add_subcommand("run", "Run an experiment");
  AddCommon(run, run_opts);
  auto* sweep = app.add_subcommand("sweep", "Run one experiment per axis value");
  AddCommon(sweep, sweep_opts);
  sweep->add_option("--axis", axis, "freeze_K|relatedness|attack_mode")->required();
  sweep->add_option("--values", values, "Comma-separated axis values")->required();
  auto* gen = app.add_subcommand("gen-data", "Write the synthetic datasets (mia-ds v1)");
  AddCommon(gen, gen_opts);
  auto* teacher = app.add_subcommand("train-teacher", "Train and save a teacher network");
  AddCommon(teacher, teacher_opts);
  auto* inspect = app.add_subcommand("inspect", "Summarize a dataset, network or report");
  inspect->add_option("path", inspect_path, "File to inspect")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return CmdRun(run_opts);
    if (*sweep) return CmdSweep(sweep_opts, axis, values);
    if (*gen) return CmdGenData(gen_opts);
    if (*teacher) return CmdTrainTeacher(teacher_opts);
    if (*inspect) return CmdInspect(inspect_path);
  } catch (const mia::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
