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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "mia/dataset.hpp"
#include "mia/experiment.hpp"

namespace mia {
namespace {

namespace fs = std::filesystem;

ExperimentConfig TinyConfig(AttackCase c) {
  ExperimentConfig cfg;
  cfg.task.input_dim = 5;
  cfg.task.teacher_classes = 3;
  cfg.task.student_classes = 3;
  cfg.task.teacher_samples_per_class = 10;
  cfg.task.student_samples_per_class = 10;
  cfg.hidden = {8, 8, 8, 8};
  cfg.parts = 5;
  cfg.frozen_parts = 2;
  cfg.training.epochs = 5;
  cfg.attack_training.epochs = 5;
  cfg.attack_case = c;
  cfg.trials = 2;
  cfg.eval_member_fraction = 0.3;
  cfg.base_seed = 11;
  return cfg;
}

std::string ReadAll(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::size_t LineCount(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

fs::path TempDir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mia_experiment_test_" + name);
  fs::remove_all(p);
  return p;
}

int RunCli(const std::string& args) {
  const std::string cmd = std::string(MIA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path WriteConfig(const std::string& name, const nlohmann::json& j) {
  const fs::path p = fs::temp_directory_path() / ("mia_cfg_" + name + ".json");
  std::ofstream(p) << j.dump(2);
  return p;
}

const AttackCase kCases[] = {AttackCase::kAtTAcS, AttackCase::kAtTAcT,
                             AttackCase::kAtSAcS};

TEST(ConfigTest, EmptyObjectTakesDefaults) {
  const auto cfg = ConfigFromJson(nlohmann::json::object());
  EXPECT_EQ(cfg.trials, 10u);
  EXPECT_EQ(cfg.eval_member_fraction, 0.10);
  EXPECT_FALSE(cfg.layer_index.has_value());
  EXPECT_EQ(ConfigToJson(cfg), ConfigToJson(ExperimentConfig{}));
  EXPECT_EQ(ConfigToJson(cfg)["attack"]["layer_index"], "auto");
}

TEST(ConfigTest, RoundTripThroughJson) {
  auto cfg = TinyConfig(AttackCase::kAtSAcS);
  cfg.layer_index = 2;
  cfg.attack_mode = AttackMode::kClassifier;
  cfg.training.optimizer = Optimizer::kSgd;
  const auto j = ConfigToJson(cfg);
  EXPECT_EQ(ConfigToJson(ConfigFromJson(nlohmann::json::parse(j.dump()))), j);
}

TEST(ConfigTest, UnknownKeysAndWrongTypesAreConfigErrors) {
  EXPECT_THROW(ConfigFromJson({{"bogus", 1}}), ConfigError);
  EXPECT_THROW(ConfigFromJson({{"task", {{"dims", 3}}}}), ConfigError);
  EXPECT_THROW(ConfigFromJson({{"protocol", {{"trials", "ten"}}}}), ConfigError);
  EXPECT_THROW(ConfigFromJson({{"attack", {{"case", "att_xyz"}}}}), ConfigError);
  EXPECT_THROW(ConfigFromJson({{"attack", {{"mode", "vote"}}}}), ConfigError);
  EXPECT_THROW(ConfigFromJson(nlohmann::json::array()), ConfigError);
}

TEST(ConfigTest, InvalidValuesAreConfigErrors) {
  EXPECT_THROW(ConfigFromJson({{"protocol", {{"trials", 0}}}}), ConfigError);
  EXPECT_THROW(ConfigFromJson({{"protocol", {{"eval_member_fraction", 0.6}}}}),
               ConfigError);
  EXPECT_THROW(ConfigFromJson({{"protocol", {{"eval_member_fraction", 0.0}}}}),
               ConfigError);
  EXPECT_THROW(ConfigFromJson({{"transfer", {{"frozen_parts", 5}}}}), ConfigError);
  EXPECT_THROW(ConfigFromJson({{"architecture", {{"parts", 3}}}}), ConfigError);
  EXPECT_THROW(ConfigFromJson({{"task", {{"relatedness", 2.0}}}}), ConfigError);
  EXPECT_THROW(LoadConfig("/nonexistent/config.json"), ConfigError);
}

TEST(ConfigTest, HashTracksEveryField) {
  const auto base = TinyConfig(AttackCase::kAtTAcS);
  EXPECT_EQ(ConfigHash(base), ConfigHash(TinyConfig(AttackCase::kAtTAcS)));
  EXPECT_EQ(ConfigHash(base).size(), 16u);
  std::set<std::string> hashes{ConfigHash(base)};
  auto tweak = [&](auto&& f) {
    auto c = base;
    f(c);
    hashes.insert(ConfigHash(c));
  };
  tweak([](ExperimentConfig& c) { c.base_seed = 12; });
  tweak([](ExperimentConfig& c) { c.trials = 3; });
  tweak([](ExperimentConfig& c) { c.task.cluster_spread = 1.5; });
  tweak([](ExperimentConfig& c) { c.task.relatedness = 0.5; });
  tweak([](ExperimentConfig& c) { c.frozen_parts = 1; });
  tweak([](ExperimentConfig& c) { c.training.learning_rate = 0.002; });
  tweak([](ExperimentConfig& c) { c.attack_training.epochs = 6; });
  tweak([](ExperimentConfig& c) { c.attack_mode = AttackMode::kClassifier; });
  tweak([](ExperimentConfig& c) { c.layer_index = 1; });
  tweak([](ExperimentConfig& c) { c.noise_control = true; });
  tweak([](ExperimentConfig& c) { c.pair_cap = 99; });
  EXPECT_EQ(hashes.size(), 12u);
}

TEST(RunTest, SingleTrialHasZeroDeviation) {
  auto cfg = TinyConfig(AttackCase::kAtSAcS);
  cfg.trials = 1;
  const auto report = RunExperiment(cfg);
  ASSERT_EQ(report.trials.size(), 1u);
  ASSERT_TRUE(report.trials[0].metrics.has_value()) << report.trials[0].error;
  EXPECT_FALSE(report.partial);
  EXPECT_EQ(report.aggregate.at("accuracy").sd, 0.0);
  EXPECT_EQ(report.trials[0].seed, 11u);
}

TEST(RunTest, EveryCaseIsDeterministicAndHygienic) {
  for (AttackCase c : kCases) {
    for (AttackMode m : {AttackMode::kThreshold, AttackMode::kClassifier}) {
      auto cfg = TinyConfig(c);
      cfg.attack_mode = m;
      const auto a = RunExperiment(cfg);
      const auto b = RunExperiment(cfg);
      EXPECT_EQ(ReportToJson(a).dump(2), ReportToJson(b).dump(2)) << ToString(c);
      for (const auto& t : a.trials) {
        ASSERT_TRUE(t.error.empty()) << ToString(c) << ": " << t.error;
        EXPECT_FALSE(t.eval_ids.empty());
        EXPECT_FALSE(t.shadow_training_ids.empty());
        const std::set<RecordId> shadow(t.shadow_training_ids.begin(),
                                        t.shadow_training_ids.end());
        for (RecordId id : t.eval_ids) EXPECT_EQ(shadow.count(id), 0u);
        EXPECT_TRUE(t.frozen_parameters_intact);
        const auto& mt = *t.metrics;
        for (double v : {mt.accuracy, mt.precision, mt.recall, mt.auc}) {
          EXPECT_GE(v, 0.0);
          EXPECT_LE(v, 1.0);
        }
        if (c == AttackCase::kAtTAcS) {
          EXPECT_TRUE(mt.accuracy_3class.has_value());
          EXPECT_EQ(t.eval_ids.size() % 3, 0u);
          EXPECT_TRUE(t.thresholds.has_value());
        } else {
          EXPECT_FALSE(mt.accuracy_3class.has_value());
          EXPECT_EQ(t.eval_ids.size() % 2, 0u);
        }
      }
    }
  }
}

TEST(RunTest, AutoLayerResolution) {
  auto cfg = TinyConfig(AttackCase::kAtTAcS);
  cfg.trials = 1;
  EXPECT_EQ(RunExperiment(cfg).trials[0].layer_index, 1u);
  cfg.frozen_parts = 3;
  EXPECT_EQ(RunExperiment(cfg).trials[0].layer_index, 2u);
  cfg.layer_index = 0;
  EXPECT_EQ(RunExperiment(cfg).trials[0].layer_index, 0u);
}

TEST(RunTest, NoiseControlKeepsSlotsButReplacesInputs) {
  // Noise control swaps evaluation inputs for uniform noise while keeping
  // each slot's id and ground truth, so the same records are scored.
  for (AttackCase c : kCases) {
    auto cfg = TinyConfig(c);
    const auto plain = RunExperiment(cfg);
    cfg.noise_control = true;
    const auto noisy = RunExperiment(cfg);
    ASSERT_EQ(plain.trials.size(), noisy.trials.size());
    bool any_change = false;
    for (std::size_t i = 0; i < noisy.trials.size(); ++i) {
      ASSERT_TRUE(noisy.trials[i].error.empty()) << noisy.trials[i].error;
      EXPECT_EQ(noisy.trials[i].eval_ids, plain.trials[i].eval_ids);
      any_change = any_change || noisy.trials[i].metrics->auc != plain.trials[i].metrics->auc ||
                   noisy.trials[i].metrics->accuracy != plain.trials[i].metrics->accuracy;
    }
    EXPECT_TRUE(any_change) << ToString(c);
  }
}

TEST(RunTest, StageFailureIsRecordedAsPartial) {
  auto cfg = TinyConfig(AttackCase::kAtSAcS);
  cfg.task.center_scale = 1e300;
  const auto report = RunExperiment(cfg);
  EXPECT_TRUE(report.partial);
  for (const auto& t : report.trials) {
    EXPECT_FALSE(t.metrics.has_value());
    EXPECT_FALSE(t.error.empty());
  }
  EXPECT_TRUE(report.aggregate.empty());
  const auto j = ReportToJson(report);
  EXPECT_TRUE(j["trials"][0]["metrics"].is_null());
  EXPECT_TRUE(j["partial"].get<bool>());
}

TEST(OutputTest, FilesAndSchema) {
  const auto cfg = TinyConfig(AttackCase::kAtTAcS);
  const auto report = RunExperiment(cfg);
  const auto dir = TempDir("outputs");
  EmitOutputs(report, MakeManifest(cfg), dir);
  const auto csv = ReadAll(dir / "metrics.csv");
  EXPECT_EQ(LineCount(csv), cfg.trials + 1);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "trial,seed,accuracy,precision,recall,auc,sigma1,sigma2,sigma3");

  const auto text = ReadAll(dir / "report.json");
  const auto j = nlohmann::json::parse(text);
  EXPECT_EQ(j.dump(2) + "\n", text);
  for (const char* key : {"version", "config", "trials", "aggregate", "thresholds_per_trial"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["trials"].size(), cfg.trials);
  EXPECT_TRUE(j["trials"][0]["metrics"].contains("accuracy_3class"));
  EXPECT_TRUE(j["aggregate"]["auc"].contains("sd"));
  EXPECT_EQ(ConfigToJson(ConfigFromJson(j["config"])), j["config"]);

  const auto manifest = nlohmann::json::parse(ReadAll(dir / "manifest.json"));
  EXPECT_EQ(manifest["config_hash"], ConfigHash(cfg));
  EXPECT_EQ(manifest["seeds"], (std::vector<std::uint64_t>{11, 12}));
  EXPECT_EQ(manifest["tool_version"], kToolVersion);

  EmitOutputs(report, MakeManifest(cfg), dir);
  EXPECT_EQ(ReadAll(dir / "report.json"), text);
}

TEST(OutputTest, UnwritableDirectoryIsReported) {
  const auto report = RunExperiment(TinyConfig(AttackCase::kAtSAcS));
  try {
    EmitOutputs(report, {}, "/proc/mia-cannot-write-here");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("mia-cannot-write-here"), std::string::npos);
  }
}

TEST(SweepTest, FreezeAxis) {
  const auto cfg = TinyConfig(AttackCase::kAtSAcS);
  const auto cells = Sweep(cfg, SweepAxis::kFreezeK, {"1", "2", "3"});
  ASSERT_EQ(cells.size(), 3u);
  for (const auto& cell : cells) {
    ASSERT_TRUE(cell.report.has_value()) << cell.error;
    EXPECT_EQ(cell.report->config["transfer"]["frozen_parts"], std::stoi(cell.value));
  }
  const auto csv = SweepCsv(SweepAxis::kFreezeK, cells);
  EXPECT_EQ(LineCount(csv), 3 * cfg.trials + 1);
  EXPECT_EQ(csv, SweepCsv(SweepAxis::kFreezeK, Sweep(cfg, SweepAxis::kFreezeK, {"1", "2", "3"})));
}

TEST(SweepTest, BadCellIsRecordedAndSweepContinues) {
  const auto cfg = TinyConfig(AttackCase::kAtSAcS);
  const auto cells = Sweep(cfg, SweepAxis::kFreezeK, {"9", "x", "1"});
  ASSERT_EQ(cells.size(), 3u);
  EXPECT_FALSE(cells[0].error.empty());
  EXPECT_FALSE(cells[1].error.empty());
  EXPECT_TRUE(cells[2].report.has_value());
  EXPECT_THROW(SweepAxisFromString("depth"), ConfigError);
  EXPECT_THROW(Sweep(cfg, SweepAxis::kFreezeK, {}), ValidationError);
}

TEST(SweepTest, OtherAxes) {
  auto cfg = TinyConfig(AttackCase::kAtTAcS);
  cfg.trials = 1;
  const auto rel = Sweep(cfg, SweepAxis::kRelatedness, {"0.25", "1"});
  EXPECT_EQ(rel[0].report->config["task"]["relatedness"], 0.25);
  const auto modes = Sweep(cfg, SweepAxis::kAttackMode, {"threshold", "classifier"});
  EXPECT_EQ(modes[1].report->config["attack"]["mode"], "classifier");
}

class CliTest : public ::testing::Test {
 protected:
  static nlohmann::json Tiny() { return ConfigToJson(TinyConfig(AttackCase::kAtSAcS)); }
};

TEST_F(CliTest, RunWritesOutputsAndHonoursOverrides) {
  const auto cfg = WriteConfig("run", Tiny());
  const auto out = TempDir("cli_run");
  ASSERT_EQ(RunCli("run --quiet --config " + cfg.string() + " --out " + out.string() +
                   " --seed 40 --mode classifier"),
            0);
  const auto report = nlohmann::json::parse(ReadAll(out / "report.json"));
  EXPECT_EQ(report["config"]["base_seed"], 40);
  EXPECT_EQ(report["config"]["attack"]["mode"], "classifier");
  const auto manifest = nlohmann::json::parse(ReadAll(out / "manifest.json"));
  EXPECT_EQ(manifest["seeds"], (std::vector<std::uint64_t>{40, 41}));
}

TEST_F(CliTest, ConfigErrorsExitWithTwo) {
  auto bad = Tiny();
  bad["surprise"] = true;
  const auto out = TempDir("cli_bad").string();
  EXPECT_EQ(RunCli("run --config " + WriteConfig("bad", bad).string() + " --out " + out), 2);
  EXPECT_EQ(RunCli("run --config /nonexistent.json --out " + out), 2);
  EXPECT_EQ(RunCli("run --out " + out), 2);
  EXPECT_EQ(RunCli("frobnicate"), 2);
  const auto good = WriteConfig("good", Tiny()).string();
  EXPECT_EQ(RunCli("run --config " + good + " --out " + out + " --mode vote"), 2);
  EXPECT_EQ(RunCli("sweep --config " + good + " --out " + out +
                   " --axis depth --values 1"),
            2);
}

TEST_F(CliTest, RuntimeFailureExitsWithThree) {
  auto cfg = Tiny();
  cfg["task"]["center_scale"] = 1e300;
  const auto out = TempDir("cli_fail").string();
  EXPECT_EQ(RunCli("run --config " + WriteConfig("fail", cfg).string() + " --out " + out), 3);
  const auto junk = fs::temp_directory_path() / "mia_junk.txt";
  std::ofstream(junk) << "not json";
  EXPECT_EQ(RunCli("inspect " + junk.string()), 3);
}

TEST_F(CliTest, DataTeacherSweepAndInspect) {
  const auto cfg = WriteConfig("misc", Tiny()).string();
  const auto out = TempDir("cli_misc");
  ASSERT_EQ(RunCli("gen-data --quiet --config " + cfg + " --out " + out.string()), 0);
  const auto teacher = LoadDataset((out / "teacher.ds").string());
  EXPECT_EQ(teacher.size(), 30u);
  EXPECT_EQ(LoadDataset((out / "student.ds").string()).size(), 30u);

  ASSERT_EQ(RunCli("train-teacher --quiet --config " + cfg + " --out " + out.string()), 0);
  const auto net = NetworkFromJson(nlohmann::json::parse(ReadAll(out / "teacher.json")));
  EXPECT_EQ(net.depth(), 5u);

  const auto sweep_dir = out / "sweep";
  ASSERT_EQ(RunCli("sweep --quiet --config " + cfg + " --out " + sweep_dir.string() +
                   " --axis freeze_K --values 1,2"),
            0);
  EXPECT_EQ(LineCount(ReadAll(sweep_dir / "sweep.csv")), 2 * 2 + 1);
  EXPECT_TRUE(fs::exists(sweep_dir / "freeze_K=2" / "report.json"));

  for (const char* f : {"teacher.ds", "teacher.json"}) {
    EXPECT_EQ(RunCli("inspect " + (out / f).string()), 0) << f;
  }
  EXPECT_EQ(RunCli("inspect " + (sweep_dir / "freeze_K=1" / "report.json").string()), 0);
  EXPECT_EQ(RunCli("inspect " + (sweep_dir / "freeze_K=1" / "manifest.json").string()), 0);
}

}  // namespace
}  // namespace mia
