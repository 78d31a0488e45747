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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mia/attack.hpp"
#include "mia/common.hpp"
#include "mia/data.hpp"
#include "mia/dataset.hpp"
#include "mia/eval.hpp"
#include "mia/nn.hpp"
#include "mia/transfer.hpp"

namespace mia {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportVersion = 1;

// Malformed or invalid experiment configuration.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

enum class AttackCase { kAtTAcS, kAtTAcT, kAtSAcS };

inline std::string ToString(AttackCase c) {
  switch (c) {
    case AttackCase::kAtTAcS: return "att_acs";
    case AttackCase::kAtTAcT: return "att_act";
    case AttackCase::kAtSAcS: return "ats_acs";
  }
  return "unknown";
}

inline AttackCase AttackCaseFromString(const std::string& s) {
  if (s == "att_acs") return AttackCase::kAtTAcS;
  if (s == "att_act") return AttackCase::kAtTAcT;
  if (s == "ats_acs") return AttackCase::kAtSAcS;
  throw ConfigError("unknown attack case '" + s + "' (att_acs|att_act|ats_acs)");
}

inline Hyperparams AttackTrainingDefaults() {
  Hyperparams hp;
  hp.epochs = 200;
  return hp;
}

struct ExperimentConfig {
  TaskSpec task;                       // task.seed is replaced per trial
  std::vector<std::size_t> hidden = {64, 64, 64, 64};
  std::size_t parts = 5;               // hidden.size() + 1
  int frozen_parts = 3;
  Hyperparams training;                // teacher, student and shadow models
  Hyperparams attack_training = AttackTrainingDefaults();  // attack classifiers
  AttackCase attack_case = AttackCase::kAtTAcS;
  AttackMode attack_mode = AttackMode::kThreshold;
  std::optional<std::size_t> layer_index;  // nullopt means "auto"
  double noise_ratio = 1.0;            // |D^n| / |shadow members|
  std::size_t pair_cap = kDefaultPairCap;
  std::size_t trials = 10;
  double eval_member_fraction = 0.10;
  double shadow_train_fraction = 0.7;
  double shadow_member_fraction = 0.5;
  bool noise_control = false;          // evaluate on fresh noise instead of records
  std::uint64_t base_seed = 0;

  Architecture TeacherArchitecture() const {
    return {task.input_dim, hidden, task.teacher_classes};
  }
  Architecture StudentArchitecture() const {
    return {task.input_dim, hidden, task.student_classes};
  }

  void Validate() const {
    try {
      task.Validate();
      training.Validate();
      attack_training.Validate();
      TeacherArchitecture().Validate();
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
    auto check = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    check(parts == hidden.size() + 1,
          "architecture.parts must equal the number of hidden layers + 1");
    check(frozen_parts >= 0 && static_cast<std::size_t>(frozen_parts) < parts,
          "transfer.frozen_parts must be in [0, parts)");
    check(trials >= 1, "protocol.trials must be >= 1");
    check(eval_member_fraction > 0.0 && eval_member_fraction <= 0.5,
          "protocol.eval_member_fraction must be in (0, 0.5]");
    check(shadow_train_fraction > 0.0 && shadow_train_fraction < 1.0,
          "protocol.shadow_train_fraction must be in (0, 1)");
    check(shadow_member_fraction > 0.0 && shadow_member_fraction < 1.0,
          "protocol.shadow_member_fraction must be in (0, 1)");
    check(noise_ratio > 0.0, "attack.noise_ratio must be positive");
    check(pair_cap >= 1, "attack.pair_cap must be positive");
    if (layer_index) {
      check(*layer_index < parts, "attack.layer_index must be < parts");
    }
  }
};

// --- config <-> json ------------------------------------------------------

namespace detail {

inline void CheckKeys(const nlohmann::json& j, const std::set<std::string>& allowed,
                      const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown field '" + key + "'");
  }
}

template <typename T>
void ReadField(const nlohmann::json& j, const char* key, T& out,
               const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline nlohmann::json HyperparamsToJson(const Hyperparams& hp) {
  return {{"epochs", hp.epochs},
          {"learning_rate", hp.learning_rate},
          {"batch_size", hp.batch_size},
          {"optimizer", hp.optimizer == Optimizer::kAdam ? "adam" : "sgd"},
          {"beta1", hp.adam.beta1},
          {"beta2", hp.adam.beta2},
          {"epsilon", hp.adam.epsilon}};
}

inline Hyperparams HyperparamsFromJson(const nlohmann::json& j, Hyperparams hp,
                                       const std::string& where) {
  CheckKeys(j, {"epochs", "learning_rate", "batch_size", "optimizer", "beta1",
                "beta2", "epsilon"},
            where);
  ReadField(j, "epochs", hp.epochs, where);
  ReadField(j, "learning_rate", hp.learning_rate, where);
  ReadField(j, "batch_size", hp.batch_size, where);
  std::string opt = hp.optimizer == Optimizer::kAdam ? "adam" : "sgd";
  ReadField(j, "optimizer", opt, where);
  if (opt == "adam") {
    hp.optimizer = Optimizer::kAdam;
  } else if (opt == "sgd") {
    hp.optimizer = Optimizer::kSgd;
  } else {
    throw ConfigError(where + ".optimizer: expected adam or sgd");
  }
  ReadField(j, "beta1", hp.adam.beta1, where);
  ReadField(j, "beta2", hp.adam.beta2, where);
  ReadField(j, "epsilon", hp.adam.epsilon, where);
  return hp;
}

}  // namespace detail

// The fully resolved configuration; every field is present.
inline nlohmann::json ConfigToJson(const ExperimentConfig& cfg) {
  const auto& t = cfg.task;
  return {
      {"task",
       {{"input_dim", t.input_dim},
        {"teacher_classes", t.teacher_classes},
        {"student_classes", t.student_classes},
        {"teacher_samples_per_class", t.teacher_samples_per_class},
        {"student_samples_per_class", t.student_samples_per_class},
        {"cluster_spread", t.cluster_spread},
        {"relatedness", t.relatedness},
        {"center_scale", t.center_scale}}},
      {"architecture", {{"hidden", cfg.hidden}, {"parts", cfg.parts}}},
      {"transfer", {{"frozen_parts", cfg.frozen_parts}}},
      {"training", detail::HyperparamsToJson(cfg.training)},
      {"attack_training", detail::HyperparamsToJson(cfg.attack_training)},
      {"attack",
       {{"case", ToString(cfg.attack_case)},
        {"mode", ToString(cfg.attack_mode)},
        {"layer_index", cfg.layer_index ? nlohmann::json(*cfg.layer_index)
                                        : nlohmann::json("auto")},
        {"noise_ratio", cfg.noise_ratio},
        {"pair_cap", cfg.pair_cap}}},
      {"protocol",
       {{"trials", cfg.trials},
        {"eval_member_fraction", cfg.eval_member_fraction},
        {"shadow_train_fraction", cfg.shadow_train_fraction},
        {"shadow_member_fraction", cfg.shadow_member_fraction},
        {"noise_control", cfg.noise_control}}},
      {"base_seed", cfg.base_seed},
  };
}

// Missing fields take defaults (echoed back by ConfigToJson); unknown fields
// and wrong types are errors.
inline ExperimentConfig ConfigFromJson(const nlohmann::json& j) {
  using detail::CheckKeys;
  using detail::ReadField;
  ExperimentConfig cfg;
  CheckKeys(j, {"task", "architecture", "transfer", "training", "attack_training",
                "attack", "protocol", "base_seed"},
            "config");
  if (j.contains("task")) {
    const auto& t = j["task"];
    CheckKeys(t, {"input_dim", "teacher_classes", "student_classes",
                  "teacher_samples_per_class", "student_samples_per_class",
                  "cluster_spread", "relatedness", "center_scale"},
              "task");
    ReadField(t, "input_dim", cfg.task.input_dim, "task");
    ReadField(t, "teacher_classes", cfg.task.teacher_classes, "task");
    ReadField(t, "student_classes", cfg.task.student_classes, "task");
    ReadField(t, "teacher_samples_per_class", cfg.task.teacher_samples_per_class, "task");
    ReadField(t, "student_samples_per_class", cfg.task.student_samples_per_class, "task");
    ReadField(t, "cluster_spread", cfg.task.cluster_spread, "task");
    ReadField(t, "relatedness", cfg.task.relatedness, "task");
    ReadField(t, "center_scale", cfg.task.center_scale, "task");
  }
  if (j.contains("architecture")) {
    const auto& a = j["architecture"];
    CheckKeys(a, {"hidden", "parts"}, "architecture");
    ReadField(a, "hidden", cfg.hidden, "architecture");
    cfg.parts = cfg.hidden.size() + 1;
    ReadField(a, "parts", cfg.parts, "architecture");
  }
  if (j.contains("transfer")) {
    CheckKeys(j["transfer"], {"frozen_parts"}, "transfer");
    ReadField(j["transfer"], "frozen_parts", cfg.frozen_parts, "transfer");
  }
  if (j.contains("training")) {
    cfg.training = detail::HyperparamsFromJson(j["training"], cfg.training, "training");
  }
  if (j.contains("attack_training")) {
    cfg.attack_training = detail::HyperparamsFromJson(
        j["attack_training"], cfg.attack_training, "attack_training");
  }
  if (j.contains("attack")) {
    const auto& a = j["attack"];
    CheckKeys(a, {"case", "mode", "layer_index", "noise_ratio", "pair_cap"}, "attack");
    std::string s;
    if (a.contains("case")) {
      ReadField(a, "case", s, "attack");
      cfg.attack_case = AttackCaseFromString(s);
    }
    if (a.contains("mode")) {
      ReadField(a, "mode", s, "attack");
      try {
        cfg.attack_mode = AttackModeFromString(s);
      } catch (const ValidationError& e) {
        throw ConfigError(e.what());
      }
    }
    if (a.contains("layer_index")) {
      const auto& li = a["layer_index"];
      if (li.is_string() && li.get<std::string>() == "auto") {
        cfg.layer_index.reset();
      } else if (li.is_number_unsigned()) {
        cfg.layer_index = li.get<std::size_t>();
      } else {
        throw ConfigError("attack.layer_index: expected \"auto\" or a non-negative integer");
      }
    }
    ReadField(a, "noise_ratio", cfg.noise_ratio, "attack");
    ReadField(a, "pair_cap", cfg.pair_cap, "attack");
  }
  if (j.contains("protocol")) {
    const auto& p = j["protocol"];
    CheckKeys(p, {"trials", "eval_member_fraction", "shadow_train_fraction",
                  "shadow_member_fraction", "noise_control"},
              "protocol");
    ReadField(p, "trials", cfg.trials, "protocol");
    ReadField(p, "eval_member_fraction", cfg.eval_member_fraction, "protocol");
    ReadField(p, "shadow_train_fraction", cfg.shadow_train_fraction, "protocol");
    ReadField(p, "shadow_member_fraction", cfg.shadow_member_fraction, "protocol");
    ReadField(p, "noise_control", cfg.noise_control, "protocol");
  }
  ReadField(j, "base_seed", cfg.base_seed, "config");
  cfg.Validate();
  return cfg;
}

inline ExperimentConfig LoadConfig(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return ConfigFromJson(j);
}

// FNV-1a over the canonical (sorted-key) serialization of the resolved config.
inline std::string ConfigHash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(HashString(ConfigToJson(cfg).dump())));
  return buf;
}

// --- one trial ------------------------------------------------------------

struct TrialOutcome {
  std::uint64_t seed = 0;
  std::optional<TrialMetrics> metrics;
  std::optional<Thresholds> thresholds;
  std::string error;  // non-empty when the trial aborted
  std::size_t layer_index = 0;
  std::vector<RecordId> eval_ids;
  std::vector<RecordId> shadow_training_ids;  // everything any shadow or attack model saw
  bool frozen_parameters_intact = true;
};

namespace detail {

inline Hyperparams WithSeed(Hyperparams hp, std::uint64_t seed) {
  hp.seed = seed;
  return hp;
}

inline LabeledDataset SampleWithoutReplacement(const LabeledDataset& ds,
                                               std::size_t count, Rng& rng) {
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  rng.Shuffle(rows);
  rows.resize(std::min(count, rows.size()));
  return ds.Subset(rows);
}

inline bool FrozenLayersEqual(const Network& before, const Network& after) {
  for (std::size_t l = 0; l < before.depth(); ++l) {
    if (before.layers[l].trainable) continue;
    if (before.layers[l].weights != after.layers[l].weights ||
        before.layers[l].biases != after.layers[l].biases) {
      return false;
    }
  }
  return true;
}

// Input range for attack noise; widened when degenerate.
inline std::pair<double, double> NoiseRange(const LabeledDataset& ds) {
  auto [lo, hi] = InputRange(ds);
  if (!(lo < hi)) {
    lo -= 1.0;
    hi += 1.0;
  }
  return {lo, hi};
}

struct TargetModels {
  SyntheticTask task;
  MembershipSplit teacher_split;
  Network teacher;
  MembershipSplit student_split;
  Network student;
  bool frozen_intact = true;
};

inline TargetModels TrainTargets(const ExperimentConfig& cfg, std::uint64_t seed,
                                 bool need_student) {
  TargetModels t;
  TaskSpec spec = cfg.task;
  spec.seed = DeriveSeed(seed, "task");
  t.task = GenerateSyntheticTask(spec);
  t.teacher_split = PartitionMemberNonmember(t.task.teacher, DeriveSeed(seed, "teacher-split"));
  t.teacher = TrainTeacher(cfg.TeacherArchitecture(), t.teacher_split.member,
                           WithSeed(cfg.training, DeriveSeed(seed, "teacher")))
                  .net;
  if (!need_student) return t;
  t.student_split = PartitionMemberNonmember(t.task.student, DeriveSeed(seed, "student-split"));
  TransferConfig tc{FreezeSpec{cfg.frozen_parts}, cfg.task.student_classes, cfg.training};
  const Network init = DeriveStudent(t.teacher, tc, DeriveSeed(seed, "student-head"));
  t.student = FineTune(init, t.student_split.member,
                       WithSeed(cfg.training, DeriveSeed(seed, "student")))
                  .net;
  t.frozen_intact = FrozenLayersEqual(init, t.student);
  return t;
}

// Non-members set aside for shadow training (first) and evaluation (second).
inline std::pair<MembershipSplit, LabeledDataset> ShadowData(
    const ExperimentConfig& cfg, const LabeledDataset& non_members,
    std::uint64_t seed) {
  auto pool = SplitShadow(non_members, cfg.shadow_train_fraction,
                          DeriveSeed(seed, "shadow-pool"));
  auto shadow = SplitShadow(pool.member, cfg.shadow_member_fraction,
                            DeriveSeed(seed, "shadow-members"));
  return {std::move(shadow), std::move(pool.non_member)};
}

inline void AppendIds(std::vector<RecordId>& out, const LabeledDataset& ds) {
  out.insert(out.end(), ds.ids.begin(), ds.ids.end());
}

inline std::size_t CountOverlap(const std::vector<RecordId>& a,
                                const std::vector<RecordId>& b) {
  const std::unordered_set<RecordId> sa(a.begin(), a.end());
  return static_cast<std::size_t>(
      std::count_if(b.begin(), b.end(), [&](RecordId id) { return sa.count(id) > 0; }));
}

// Replaces every evaluation input with fresh uniform noise over the same
// range; ids and ground truth are kept.
inline void ReplaceWithNoise(LabeledDataset& eval, std::pair<double, double> range,
                             std::uint64_t seed) {
  const auto noise = GenerateNoiseDataset(eval.size(), eval.dim(), range.first,
                                          range.second, seed);
  eval.inputs = noise.inputs;
}

inline TrialOutcome RunBinaryTrial(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrialOutcome out;
  out.seed = seed;
  const bool student_side = cfg.attack_case == AttackCase::kAtSAcS;
  auto targets = TrainTargets(cfg, seed, student_side);
  out.frozen_parameters_intact = targets.frozen_intact;

  const Network& target = student_side ? targets.student : targets.teacher;
  const MembershipSplit& target_split =
      student_side ? targets.student_split : targets.teacher_split;
  const Architecture arch =
      student_side ? cfg.StudentArchitecture() : cfg.TeacherArchitecture();

  auto [shadow_split, held_out] = ShadowData(cfg, target_split.non_member, seed);
  const Network shadow =
      Train(BuildNetwork(arch, DeriveSeed(seed, "shadow-init")), shadow_split.member,
            WithSeed(cfg.training, DeriveSeed(seed, "shadow-train")))
          .net;

  out.layer_index = cfg.layer_index.value_or(target.depth() - 1);
  const Hyperparams attack_hp = WithSeed(cfg.attack_training, DeriveSeed(seed, "attack"));
  const BinaryAttack attack =
      student_side ? AttackAtSAcS(shadow, shadow_split, out.layer_index, attack_hp)
                   : AttackAtTAcT(shadow, shadow_split, out.layer_index, attack_hp);

  Rng rng(DeriveSeed(seed, "eval"));
  const auto count = static_cast<std::size_t>(std::llround(
      cfg.eval_member_fraction * static_cast<double>(target_split.member.size())));
  const std::size_t per_side =
      std::max<std::size_t>(1, std::min({count, held_out.size()}));
  const auto members = SampleWithoutReplacement(target_split.member, per_side, rng);
  const auto non_members = SampleWithoutReplacement(held_out, per_side, rng);
  LabeledDataset eval = Concat(members, non_members);
  std::vector<int> truth(members.size(), 1);
  truth.resize(eval.size(), 0);
  if (cfg.noise_control) {
    ReplaceWithNoise(eval, NoiseRange(target_split.member), DeriveSeed(seed, "control"));
  }

  AppendIds(out.shadow_training_ids, shadow_split.member);
  AppendIds(out.shadow_training_ids, shadow_split.non_member);
  out.eval_ids = eval.ids;

  const auto scores = attack.Scores(target, eval.inputs);
  const auto preds = attack.Decisions(target, eval.inputs);
  out.metrics = BinaryTrialMetrics(preds, scores, truth);
  if (count > per_side) out.metrics->flags.push_back("eval_clamped");
  return out;
}

inline TrialOutcome RunTernaryTrial(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrialOutcome out;
  out.seed = seed;
  auto targets = TrainTargets(cfg, seed, true);
  out.frozen_parameters_intact = targets.frozen_intact;
  const Network& student = targets.student;

  auto [shadow_split, held_out] = ShadowData(cfg, targets.student_split.non_member, seed);
  AuxKnowledge aux;
  aux.architecture = cfg.StudentArchitecture();
  aux.hp = WithSeed(cfg.training, DeriveSeed(seed, "shadow-student"));
  aux.distribution = cfg.task;
  aux.layer_index =
      cfg.layer_index.value_or(LastFrozenBoundary(student, cfg.frozen_parts));
  out.layer_index = aux.layer_index;
  const Network shadow = TrainShadowStudent(shadow_split.member, aux).net;

  const auto noise_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(
             cfg.noise_ratio * static_cast<double>(shadow_split.member.size()))));
  const auto [lo, hi] = NoiseRange(targets.student_split.member);
  const auto noise = GenerateNoiseDataset(noise_count, cfg.task.input_dim, lo, hi,
                                          DeriveSeed(seed, "attack-noise"));

  const auto set =
      BuildAttackTrainingSet(student, shadow, shadow_split.member, noise, aux.layer_index);
  const auto thresholds =
      SelectThresholds(student, shadow, shadow_split.member, noise, aux.layer_index,
                       cfg.pair_cap, DeriveSeed(seed, "pairs"));
  out.thresholds = thresholds;
  const auto attack =
      BuildTernaryAttack(set, thresholds, aux.layer_index, cfg.attack_mode,
                         WithSeed(cfg.attack_training, DeriveSeed(seed, "attack")));

  // Equal thirds: teacher members (never seen by the student), student
  // members, and held-out records no model was trained on.
  Rng rng(DeriveSeed(seed, "eval"));
  const auto count = static_cast<std::size_t>(std::llround(
      cfg.eval_member_fraction * static_cast<double>(targets.student_split.member.size())));
  const std::size_t per_group = std::max<std::size_t>(
      1, std::min({count, held_out.size(), targets.teacher_split.member.size()}));
  const auto teacher_members =
      SampleWithoutReplacement(targets.teacher_split.member, per_group, rng);
  const auto student_members =
      SampleWithoutReplacement(targets.student_split.member, per_group, rng);
  const auto non_members = SampleWithoutReplacement(held_out, per_group, rng);
  LabeledDataset eval = Concat(Concat(teacher_members, student_members), non_members);
  std::vector<int> truth;
  truth.insert(truth.end(), teacher_members.size(), 1);
  truth.insert(truth.end(), student_members.size(), 2);
  truth.insert(truth.end(), non_members.size(), 0);
  if (cfg.noise_control) {
    ReplaceWithNoise(eval, {lo, hi}, DeriveSeed(seed, "control"));
  }

  AppendIds(out.shadow_training_ids, shadow_split.member);
  AppendIds(out.shadow_training_ids, shadow_split.non_member);
  AppendIds(out.shadow_training_ids, noise);
  out.eval_ids = eval.ids;

  const Tensor reps = Representations(student, eval.inputs, aux.layer_index);
  std::vector<int> decisions;
  std::vector<double> scores;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < reps.rows(); ++r) {
    const auto o = attack.DecideRepresentation(reps.Row(r));
    decisions.push_back(static_cast<int>(o.decision));
    scores.push_back(o.member_score);
    correct += decisions.back() == truth[r];
  }
  const auto preds = TernaryToBinary(decisions, MemberRole::kTeacher);
  const auto teacher_truth = TernaryToBinary(truth, MemberRole::kTeacher);
  std::vector<int> member_truth;
  for (int t : truth) member_truth.push_back(t == 0 ? 0 : 1);

  TrialMetrics m = BinaryTrialMetrics(preds, scores, teacher_truth);
  // AUC scores membership in either model against non-membership.
  m.flags.erase(std::remove(m.flags.begin(), m.flags.end(), "auc_undefined"),
                m.flags.end());
  try {
    m.auc = Auc(scores, member_truth);
  } catch (const UndefinedMetricError&) {
    m.auc = 0.0;
    m.flags.push_back("auc_undefined");
  }
  m.accuracy_3class = static_cast<double>(correct) / static_cast<double>(truth.size());
  if (count > per_group) m.flags.push_back("eval_clamped");
  out.metrics = std::move(m);
  return out;
}

}  // namespace detail

// Runs one trial end to end. Stage failures are captured in
// TrialOutcome::error; evaluation hygiene and freeze violations count as
// failures.
inline TrialOutcome RunTrial(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrialOutcome out;
  try {
    out = cfg.attack_case == AttackCase::kAtTAcS ? detail::RunTernaryTrial(cfg, seed)
                                                 : detail::RunBinaryTrial(cfg, seed);
    if (detail::CountOverlap(out.shadow_training_ids, out.eval_ids) != 0) {
      throw Error("evaluation hygiene violated: evaluation records overlap shadow "
                  "training data");
    }
    if (!out.frozen_parameters_intact) {
      throw Error("frozen student parameters changed during fine-tuning");
    }
  } catch (const std::exception& e) {
    out.seed = seed;
    out.metrics.reset();
    out.error = e.what();
  }
  return out;
}

// --- reports --------------------------------------------------------------

struct AttackReport {
  nlohmann::json config;
  std::vector<TrialOutcome> trials;
  std::map<std::string, MetricSummary> aggregate;
  bool partial = false;

  std::vector<TrialMetrics> CompletedMetrics() const {
    std::vector<TrialMetrics> out;
    for (const auto& t : trials) {
      if (t.metrics) out.push_back(*t.metrics);
    }
    return out;
  }

  double Mean(const std::string& metric) const {
    const auto it = aggregate.find(metric);
    Require(it != aggregate.end(), "report has no aggregate for '" + metric + "'");
    return it->second.mean;
  }
};

struct RunManifest {
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> artifacts;
  std::string tool_version = kToolVersion;
};

// Trial t uses seed base_seed + t.
inline AttackReport RunExperiment(const ExperimentConfig& cfg) {
  cfg.Validate();
  AttackReport report;
  report.config = ConfigToJson(cfg);
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    report.trials.push_back(RunTrial(cfg, cfg.base_seed + t));
    if (!report.trials.back().error.empty()) report.partial = true;
  }
  const auto done = report.CompletedMetrics();
  if (!done.empty()) report.aggregate = Aggregate(done);
  return report;
}

inline RunManifest MakeManifest(const ExperimentConfig& cfg) {
  RunManifest m;
  m.config_hash = ConfigHash(cfg);
  for (std::size_t t = 0; t < cfg.trials; ++t) m.seeds.push_back(cfg.base_seed + t);
  m.artifacts = {"report.json", "metrics.csv", "manifest.json"};
  return m;
}

inline nlohmann::json MetricsToJson(const TrialMetrics& m) {
  nlohmann::json j = {{"accuracy", m.accuracy},
                      {"precision", m.precision},
                      {"recall", m.recall},
                      {"auc", m.auc}};
  if (m.accuracy_3class) j["accuracy_3class"] = *m.accuracy_3class;
  return j;
}

inline nlohmann::json ReportToJson(const AttackReport& report) {
  nlohmann::json trials = nlohmann::json::array();
  nlohmann::json thresholds = nlohmann::json::array();
  for (const auto& t : report.trials) {
    nlohmann::json jt = {{"seed", t.seed}, {"layer_index", t.layer_index}};
    nlohmann::json flags = nlohmann::json::array();
    if (t.metrics) {
      jt["metrics"] = MetricsToJson(*t.metrics);
      for (const auto& f : t.metrics->flags) flags.push_back(f);
    } else {
      jt["metrics"] = nullptr;
      flags.push_back("failed: " + t.error);
    }
    jt["flags"] = std::move(flags);
    trials.push_back(std::move(jt));
    thresholds.push_back(t.thresholds ? ThresholdsToJson(*t.thresholds)
                                      : nlohmann::json(nullptr));
  }
  nlohmann::json aggregate = nlohmann::json::object();
  for (const auto& [name, s] : report.aggregate) {
    aggregate[name] = {{"mean", s.mean}, {"sd", s.sd}, {"n", s.count}};
  }
  return {{"version", kReportVersion},
          {"config", report.config},
          {"trials", std::move(trials)},
          {"aggregate", std::move(aggregate)},
          {"thresholds_per_trial", std::move(thresholds)},
          {"partial", report.partial}};
}

inline nlohmann::json ManifestToJson(const RunManifest& m) {
  return {{"config_hash", m.config_hash},
          {"seeds", m.seeds},
          {"artifacts", m.artifacts},
          {"tool_version", m.tool_version}};
}

namespace detail {

inline std::string CsvNumber(double v) { return FormatDouble(v); }

inline void WriteTrialCsvRow(std::ostream& os, std::size_t index,
                             const TrialOutcome& t) {
  os << index << ',' << t.seed;
  if (t.metrics) {
    os << ',' << CsvNumber(t.metrics->accuracy) << ',' << CsvNumber(t.metrics->precision)
       << ',' << CsvNumber(t.metrics->recall) << ',' << CsvNumber(t.metrics->auc);
  } else {
    os << ",,,,";
  }
  if (t.thresholds) {
    os << ',' << CsvNumber(t.thresholds->sigma1) << ','
       << CsvNumber(t.thresholds->sigma2) << ',' << CsvNumber(t.thresholds->sigma3);
  } else {
    os << ",,,";
  }
  os << '\n';
}

inline void WriteFile(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  os << content;
  if (!os) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace detail

inline constexpr const char* kMetricsCsvHeader =
    "trial,seed,accuracy,precision,recall,auc,sigma1,sigma2,sigma3";

inline std::string MetricsCsv(const AttackReport& report) {
  std::ostringstream os;
  os << kMetricsCsvHeader << '\n';
  for (std::size_t i = 0; i < report.trials.size(); ++i) {
    detail::WriteTrialCsvRow(os, i, report.trials[i]);
  }
  return os.str();
}

// Writes report.json, metrics.csv and manifest.json into out_dir,
// overwriting earlier outputs.
inline std::vector<std::filesystem::path> EmitOutputs(const AttackReport& report,
                                                      const RunManifest& manifest,
                                                      const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create '" + out_dir.string() + "': " + ec.message());
  const std::vector<std::filesystem::path> files = {
      out_dir / "report.json", out_dir / "metrics.csv", out_dir / "manifest.json"};
  detail::WriteFile(files[0], ReportToJson(report).dump(2) + "\n");
  detail::WriteFile(files[1], MetricsCsv(report));
  detail::WriteFile(files[2], ManifestToJson(manifest).dump(2) + "\n");
  return files;
}

// --- sweeps ---------------------------------------------------------------

enum class SweepAxis { kFreezeK, kRelatedness, kAttackMode };

inline std::string ToString(SweepAxis a) {
  switch (a) {
    case SweepAxis::kFreezeK: return "freeze_K";
    case SweepAxis::kRelatedness: return "relatedness";
    case SweepAxis::kAttackMode: return "attack_mode";
  }
  return "unknown";
}

inline SweepAxis SweepAxisFromString(const std::string& s) {
  if (s == "freeze_K") return SweepAxis::kFreezeK;
  if (s == "relatedness") return SweepAxis::kRelatedness;
  if (s == "attack_mode") return SweepAxis::kAttackMode;
  throw ConfigError("unknown sweep axis '" + s + "' (freeze_K|relatedness|attack_mode)");
}

// Applies one axis value to a copy of cfg.
inline ExperimentConfig WithAxisValue(ExperimentConfig cfg, SweepAxis axis,
                                      const std::string& value) {
  try {
    switch (axis) {
      case SweepAxis::kFreezeK: {
        std::size_t pos = 0;
        cfg.frozen_parts = std::stoi(value, &pos);
        if (pos != value.size()) throw ConfigError("bad integer");
        break;
      }
      case SweepAxis::kRelatedness: {
        std::size_t pos = 0;
        cfg.task.relatedness = std::stod(value, &pos);
        if (pos != value.size()) throw ConfigError("bad number");
        break;
      }
      case SweepAxis::kAttackMode:
        cfg.attack_mode = AttackModeFromString(value);
        break;
    }
  } catch (const std::exception& e) {
    throw ConfigError("sweep value '" + value + "' invalid for " + ToString(axis) +
                      ": " + e.what());
  }
  cfg.Validate();
  return cfg;
}

struct SweepCell {
  std::string value;
  std::optional<AttackReport> report;
  std::string error;
};

// One experiment per value with the shared base seed; a failing cell is
// recorded and the sweep moves on.
inline std::vector<SweepCell> Sweep(const ExperimentConfig& cfg, SweepAxis axis,
                                    const std::vector<std::string>& values) {
  Require(!values.empty(), "sweep: no values");
  std::vector<SweepCell> cells;
  for (const auto& v : values) {
    SweepCell cell;
    cell.value = v;
    try {
      cell.report = RunExperiment(WithAxisValue(cfg, axis, v));
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

inline std::string SweepCsv(SweepAxis axis, const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os << "axis,value," << kMetricsCsvHeader << '\n';
  for (const auto& cell : cells) {
    if (!cell.report) continue;
    for (std::size_t i = 0; i < cell.report->trials.size(); ++i) {
      os << ToString(axis) << ',' << cell.value << ',';
      detail::WriteTrialCsvRow(os, i, cell.report->trials[i]);
    }
  }
  return os.str();
}

}  // namespace mia
