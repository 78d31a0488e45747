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
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mia/common.hpp"
#include "mia/data.hpp"
#include "mia/dataset.hpp"
#include "mia/nn.hpp"
#include "mia/tensor.hpp"

namespace mia {

using Vector = std::vector<double>;

// Flattened activations of one layer for one input.
struct Representation {
  Vector values;
  std::size_t layer_index = 0;
  RecordId source_id = 0;
};

// |M_shadow(x) - M(x)| elementwise.
struct DifferenceFeature {
  Vector values;
  RecordId source_id = 0;
};

struct Thresholds {
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double sigma3 = 0.0;

  friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

enum class AttackDecision : int {
  kNonMember = 0,
  kTeacherMember = 1,
  kStudentMember = 2,
};

enum class Provenance {
  kNoise,             // raw student representation of a noise record
  kShadowMemberRaw,   // raw student representation of a shadow member
  kShadowMemberDiff,  // |shadow - student| of a shadow member
  kShadowMember,      // binary attacks: shadow-model member
  kShadowNonMember,   // binary attacks: shadow-model non-member
};

inline std::string ToString(Provenance p) {
  switch (p) {
    case Provenance::kNoise: return "noise";
    case Provenance::kShadowMemberRaw: return "shadow-member-raw";
    case Provenance::kShadowMemberDiff: return "shadow-member-diff";
    case Provenance::kShadowMember: return "shadow-member";
    case Provenance::kShadowNonMember: return "shadow-non-member";
  }
  return "unknown";
}

inline Provenance ProvenanceFromString(const std::string& s) {
  for (auto p : {Provenance::kNoise, Provenance::kShadowMemberRaw,
                 Provenance::kShadowMemberDiff, Provenance::kShadowMember,
                 Provenance::kShadowNonMember}) {
    if (ToString(p) == s) return p;
  }
  throw ValidationError("unknown provenance '" + s + "'");
}

struct AttackRow {
  int label = 0;
  Provenance provenance = Provenance::kNoise;
  RecordId source_id = 0;
  Vector values;

  friend bool operator==(const AttackRow&, const AttackRow&) = default;
};

struct AttackTrainingSet {
  std::vector<AttackRow> rows;

  std::size_t CountLabel(int label) const {
    return static_cast<std::size_t>(std::count_if(
        rows.begin(), rows.end(), [&](const AttackRow& r) { return r.label == label; }));
  }

  std::vector<Vector> FeaturesWithLabel(int label) const {
    std::vector<Vector> out;
    for (const auto& r : rows) {
      if (r.label == label) out.push_back(r.values);
    }
    return out;
  }

  // Rows as a classification dataset; ids are row positions.
  LabeledDataset ToDataset(std::size_t num_classes) const {
    Require(!rows.empty(), "attack set is empty");
    LabeledDataset ds;
    ds.num_classes = num_classes;
    ds.inputs = Tensor::Matrix(rows.size(), rows.front().values.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Require(rows[i].values.size() == ds.dim(), "attack set: ragged rows");
      std::copy(rows[i].values.begin(), rows[i].values.end(),
                ds.inputs.Row(i).begin());
      ds.labels.push_back(static_cast<std::size_t>(rows[i].label));
      ds.ids.push_back(i);
    }
    return ds;
  }

  friend bool operator==(const AttackTrainingSet&, const AttackTrainingSet&) = default;
};

// What the attacker knows about the attacked model.
struct AuxKnowledge {
  Architecture architecture;
  Hyperparams hp;
  std::size_t layer_index = 0;
  TaskSpec distribution;
};

// --- representations and distances ---------------------------------------

inline void CheckLayerIndex(const Network& net, std::size_t layer_index) {
  Require(layer_index < net.depth(),
          "layer index " + std::to_string(layer_index) +
              " out of range for a network of depth " + std::to_string(net.depth()));
}

// Activations at layer_index for every row, one row per record.
inline Tensor Representations(const Network& net, const Tensor& inputs,
                              std::size_t layer_index) {
  CheckLayerIndex(net, layer_index);
  auto fwd = ForwardWithActivations(net, inputs);
  return std::move(fwd.activations[layer_index]);
}

inline Representation ExtractRepresentation(const Network& net,
                                            std::span<const double> x,
                                            std::size_t layer_index,
                                            RecordId source_id = 0) {
  Tensor batch({1, x.size()}, Vector(x.begin(), x.end()));
  const Tensor rep = Representations(net, batch, layer_index);
  return {rep.data(), layer_index, source_id};
}

inline std::vector<Vector> RowsOf(const Tensor& t) {
  std::vector<Vector> out;
  out.reserve(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto row = t.Row(r);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

inline double L2Distance(std::span<const double> a, std::span<const double> b) {
  Require(a.size() == b.size(), "l2_distance: dimensions " +
                                    std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()) + " differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// Nearest-neighbour distance from target to the pool.
inline double DistanceToSet(std::span<const double> target,
                            std::span<const Vector> pool) {
  Require(!pool.empty(), "distance_to_set: empty pool");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pool) best = std::min(best, L2Distance(target, p));
  return best;
}

inline Vector AbsDifference(std::span<const double> a, std::span<const double> b) {
  Require(a.size() == b.size(), "difference: dimension mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::fabs(a[i] - b[i]);
  return out;
}

// Median; even counts take the mean of the two middle order statistics.
inline double Median(Vector values) {
  Require(!values.empty(), "median of an empty set");
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), mid);
  return (lower + upper) / 2.0;
}

// --- shadow student and attack set ----------------------------------------

// Shadow student trained from a fresh initialization (no teacher weights).
inline TrainResult TrainShadowStudent(const LabeledDataset& shadow_member,
                                      const AuxKnowledge& aux) {
  Require(aux.architecture.classes == shadow_member.num_classes,
          "train_shadow_student: blueprint head has " +
              std::to_string(aux.architecture.classes) + " classes, data has " +
              std::to_string(shadow_member.num_classes));
  Network init = BuildNetwork(aux.architecture, DeriveSeed(aux.hp.seed, "shadow-student"));
  return Train(std::move(init), shadow_member, aux.hp);
}

namespace detail {

inline void CheckCompatibleLayer(const Network& a, const Network& b,
                                 std::size_t layer_index) {
  CheckLayerIndex(a, layer_index);
  CheckLayerIndex(b, layer_index);
  Require(a.layers[layer_index].outputs == b.layers[layer_index].outputs,
          "layer " + std::to_string(layer_index) + " widths differ: " +
              std::to_string(a.layers[layer_index].outputs) + " vs " +
              std::to_string(b.layers[layer_index].outputs));
  Require(a.input_dim() == b.input_dim(), "networks take different input widths");
}

}  // namespace detail

// Representations used by both the attack set and the thresholds.
struct AttackViews {
  std::vector<Vector> member_student;  // M_s(x), x in shadow members
  std::vector<Vector> member_diff;     // |M_s'(x) - M_s(x)|
  std::vector<Vector> noise_student;   // M_s(x), x in noise
};

inline AttackViews ComputeAttackViews(const Network& ms, const Network& ms_shadow,
                                      const LabeledDataset& shadow_member,
                                      const LabeledDataset& noise,
                                      std::size_t layer_index) {
  detail::CheckCompatibleLayer(ms, ms_shadow, layer_index);
  Require(!shadow_member.empty(), "attack: empty shadow member set");
  Require(!noise.empty(), "attack: empty noise set");
  AttackViews v;
  v.member_student = RowsOf(Representations(ms, shadow_member.inputs, layer_index));
  const auto member_shadow =
      RowsOf(Representations(ms_shadow, shadow_member.inputs, layer_index));
  v.noise_student = RowsOf(Representations(ms, noise.inputs, layer_index));
  v.member_diff.reserve(member_shadow.size());
  for (std::size_t i = 0; i < member_shadow.size(); ++i) {
    v.member_diff.push_back(AbsDifference(member_shadow[i], v.member_student[i]));
  }
  return v;
}

// Rows: label 1 (difference features), then label 2 (raw member
// representations), then label 0 (raw noise representations), each block in
// input order.
inline AttackTrainingSet BuildAttackTrainingSet(const Network& ms,
                                                const Network& ms_shadow,
                                                const LabeledDataset& shadow_member,
                                                const LabeledDataset& noise,
                                                std::size_t layer_index) {
  const auto v = ComputeAttackViews(ms, ms_shadow, shadow_member, noise, layer_index);
  AttackTrainingSet set;
  set.rows.reserve(2 * shadow_member.size() + noise.size());
  for (std::size_t i = 0; i < shadow_member.size(); ++i) {
    set.rows.push_back({1, Provenance::kShadowMemberDiff, shadow_member.ids[i],
                        v.member_diff[i]});
  }
  for (std::size_t i = 0; i < shadow_member.size(); ++i) {
    set.rows.push_back({2, Provenance::kShadowMemberRaw, shadow_member.ids[i],
                        v.member_student[i]});
  }
  for (std::size_t i = 0; i < noise.size(); ++i) {
    set.rows.push_back({0, Provenance::kNoise, noise.ids[i], v.noise_student[i]});
  }
  return set;
}

// --- thresholds -----------------------------------------------------------

inline constexpr std::size_t kDefaultPairCap = 1'000'000;

// sigma1: median of |M_s'(x) - M_s(x)|_2 over shadow members.
// sigma2: median of |M_s(n) - M_s(m)|_2 over (noise, member) pairs.
// sigma3: median of |M_s(n) - diff(m)|_2 over the same pairs.
// Pair sets above pair_cap are replaced by pair_cap pairs drawn with
// replacement from a generator seeded by seed.
inline Thresholds SelectThresholdsFromViews(const AttackViews& v,
                                            std::size_t pair_cap = kDefaultPairCap,
                                            std::uint64_t seed = 0) {
  Require(!v.member_student.empty() && !v.noise_student.empty(),
          "select_thresholds: empty inputs");
  Require(v.member_diff.size() == v.member_student.size(),
          "select_thresholds: member views differ in length");
  Thresholds th;
  Vector d1;
  d1.reserve(v.member_student.size());
  for (const auto& diff : v.member_diff) {
    // |M_s'(x) - M_s(x)|_2 equals the norm of the difference feature.
    double s = 0.0;
    for (double e : diff) s += e * e;
    d1.push_back(std::sqrt(s));
  }
  th.sigma1 = Median(std::move(d1));

  const std::size_t nn = v.noise_student.size();
  const std::size_t nm = v.member_student.size();
  Vector d2, d3;
  auto add_pair = [&](std::size_t i, std::size_t j) {
    d2.push_back(L2Distance(v.noise_student[i], v.member_student[j]));
    d3.push_back(L2Distance(v.noise_student[i], v.member_diff[j]));
  };
  if (nn * nm <= pair_cap) {
    d2.reserve(nn * nm);
    d3.reserve(nn * nm);
    for (std::size_t i = 0; i < nn; ++i) {
      for (std::size_t j = 0; j < nm; ++j) add_pair(i, j);
    }
  } else {
    Rng rng(DeriveSeed(seed, "threshold-pairs"));
    d2.reserve(pair_cap);
    d3.reserve(pair_cap);
    for (std::size_t k = 0; k < pair_cap; ++k) add_pair(rng.Below(nn), rng.Below(nm));
  }
  th.sigma2 = Median(std::move(d2));
  th.sigma3 = Median(std::move(d3));
  return th;
}

inline Thresholds SelectThresholds(const Network& ms, const Network& ms_shadow,
                                   const LabeledDataset& shadow_member,
                                   const LabeledDataset& noise,
                                   std::size_t layer_index,
                                   std::size_t pair_cap = kDefaultPairCap,
                                   std::uint64_t seed = 0) {
  return SelectThresholdsFromViews(
      ComputeAttackViews(ms, ms_shadow, shadow_member, noise, layer_index),
      pair_cap, seed);
}

// Three-case cascade. d is the nearest distance to the member pool:
//   d < sigma1                 -> student member (2)
//   d > sigma2                 -> teacher member (1)
//   otherwise, with d3 the nearest distance to the difference pool:
//     d3 < sigma3 -> teacher member (1), else non-member (0)
// All comparisons are strict; equality falls through to the later branch.
inline AttackDecision DecideFromDistances(double d, double d3,
                                          const Thresholds& th) {
  if (d < th.sigma1) return AttackDecision::kStudentMember;
  if (d > th.sigma2) return AttackDecision::kTeacherMember;
  return d3 < th.sigma3 ? AttackDecision::kTeacherMember
                               : AttackDecision::kNonMember;
}

inline AttackDecision DecideThreshold(std::span<const double> target,
                                      std::span<const Vector> member_reps,
                                      std::span<const Vector> diff_feats,
                                      const Thresholds& th) {
  Require(!member_reps.empty() && !diff_feats.empty(),
          "decide_threshold: empty pool");
  const double d = DistanceToSet(target, member_reps);
  if (d < th.sigma1 || d > th.sigma2) return DecideFromDistances(d, 0.0, th);
  return DecideFromDistances(d, DistanceToSet(target, diff_feats), th);
}

// --- classifiers ----------------------------------------------------------

inline constexpr std::size_t kAttackHiddenUnits = 64;

// Attack classifier: one hidden layer of kAttackHiddenUnits relu units and a
// num_classes-way head. Inputs are standardized with the training-set mean
// and deviation during training; the affine map is then folded into the
// first layer so the result consumes raw representations.
inline Network TrainAttackClassifier(const AttackTrainingSet& set,
                                     const Hyperparams& hp,
                                     std::size_t num_classes = 3) {
  Require(!set.rows.empty(), "train_attack_classifier: empty attack set");
  for (std::size_t c = 0; c < num_classes; ++c) {
    Require(set.CountLabel(static_cast<int>(c)) > 0,
            "train_attack_classifier: no rows with label " + std::to_string(c));
  }
  LabeledDataset ds = set.ToDataset(num_classes);
  const std::size_t dim = ds.dim();
  const auto n = static_cast<double>(ds.size());
  Vector mean(dim, 0.0), scale(dim, 0.0);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) mean[c] += ds.inputs.at(r, c) / n;
  }
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = ds.inputs.at(r, c) - mean[c];
      scale[c] += d * d / n;
    }
  }
  for (double& s : scale) s = s > 0.0 ? std::sqrt(s) : 1.0;  // constant columns pass through
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      ds.inputs.at(r, c) = (ds.inputs.at(r, c) - mean[c]) / scale[c];
    }
  }

  const Architecture arch{dim, {kAttackHiddenUnits}, num_classes};
  Network net =
      Train(BuildNetwork(arch, DeriveSeed(hp.seed, "attack-classifier")), ds, hp).net;
  auto& first = net.layers.front();
  for (std::size_t o = 0; o < first.outputs; ++o) {
    for (std::size_t i = 0; i < dim; ++i) {
      first.w(o, i) /= scale[i];
      first.biases[o] -= first.w(o, i) * mean[i];
    }
  }
  return net;
}

enum class AttackMode { kThreshold, kClassifier };

inline std::string ToString(AttackMode m) {
  return m == AttackMode::kThreshold ? "threshold" : "classifier";
}

inline AttackMode AttackModeFromString(const std::string& s) {
  if (s == "threshold") return AttackMode::kThreshold;
  if (s == "classifier") return AttackMode::kClassifier;
  throw ValidationError("unknown attack mode '" + s + "' (threshold|classifier)");
}

// Ternary attack on the teacher through the student (At.T & Ac.S).
struct TernaryAttack {
  AttackMode mode = AttackMode::kThreshold;
  std::size_t layer_index = 0;
  Thresholds thresholds;
  std::vector<Vector> member_reps;  // label-2 rows
  std::vector<Vector> diff_feats;   // label-1 rows
  std::optional<Network> classifier;

  struct Output {
    AttackDecision decision = AttackDecision::kNonMember;
    double member_score = 0.0;  // larger means "member of either model"
  };

  Output DecideRepresentation(std::span<const double> rep) const {
    Output out;
    if (mode == AttackMode::kThreshold) {
      out.decision = DecideThreshold(rep, member_reps, diff_feats, thresholds);
      out.member_score = out.decision == AttackDecision::kNonMember ? 0.0 : 1.0;
      return out;
    }
    Require(classifier.has_value(), "ternary attack: classifier not trained");
    Tensor batch({1, rep.size()}, Vector(rep.begin(), rep.end()));
    const Tensor logits = Predict(*classifier, batch);
    out.decision = static_cast<AttackDecision>(Argmax(logits.Row(0)));
    out.member_score = 1.0 - Softmax(logits).at(0, 0);
    return out;
  }
};

inline TernaryAttack BuildTernaryAttack(const AttackTrainingSet& set,
                                        const Thresholds& thresholds,
                                        std::size_t layer_index, AttackMode mode,
                                        const Hyperparams& classifier_hp) {
  TernaryAttack attack;
  attack.mode = mode;
  attack.layer_index = layer_index;
  attack.thresholds = thresholds;
  attack.member_reps = set.FeaturesWithLabel(2);
  attack.diff_feats = set.FeaturesWithLabel(1);
  if (mode == AttackMode::kClassifier) {
    attack.classifier = TrainAttackClassifier(set, classifier_hp);
  }
  return attack;
}

// Queries the student at the attack layer and decides.
inline TernaryAttack::Output AttackAtTAcS(std::span<const double> target_x,
                                          const Network& ms,
                                          const TernaryAttack& attack) {
  const auto rep = ExtractRepresentation(ms, target_x, attack.layer_index);
  return attack.DecideRepresentation(rep.values);
}

// Binary membership classifier over a shadow model's representations,
// applied to the attacked model's representations at inference.
struct BinaryAttack {
  Network classifier;
  std::size_t layer_index = 0;
  std::size_t training_rows = 0;

  // P(member) for each row of inputs, queried through target.
  Vector Scores(const Network& target, const Tensor& inputs) const {
    const Tensor reps = Representations(target, inputs, layer_index);
    const Tensor probs = Softmax(Predict(classifier, reps));
    Vector out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) out[r] = probs.at(r, 1);
    return out;
  }

  std::vector<int> Decisions(const Network& target, const Tensor& inputs) const {
    const Tensor reps = Representations(target, inputs, layer_index);
    const Tensor logits = Predict(classifier, reps);
    std::vector<int> out(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      out[r] = static_cast<int>(Argmax(logits.Row(r)));
    }
    return out;
  }
};

// (M'(x), 1) for shadow members and (M'(x), 0) for shadow non-members.
inline AttackTrainingSet BuildBinaryAttackSet(const Network& shadow,
                                              const MembershipSplit& split,
                                              std::size_t layer_index) {
  Require(!split.member.empty() && !split.non_member.empty(),
          "binary attack: both shadow sides must be non-empty");
  AttackTrainingSet set;
  const auto member = RowsOf(Representations(shadow, split.member.inputs, layer_index));
  const auto non_member =
      RowsOf(Representations(shadow, split.non_member.inputs, layer_index));
  for (std::size_t i = 0; i < member.size(); ++i) {
    set.rows.push_back({1, Provenance::kShadowMember, split.member.ids[i], member[i]});
  }
  for (std::size_t i = 0; i < non_member.size(); ++i) {
    set.rows.push_back(
        {0, Provenance::kShadowNonMember, split.non_member.ids[i], non_member[i]});
  }
  return set;
}

inline BinaryAttack TrainBinaryAttack(const Network& shadow,
                                      const MembershipSplit& split,
                                      std::size_t layer_index, const Hyperparams& hp) {
  const auto set = BuildBinaryAttackSet(shadow, split, layer_index);
  return {TrainAttackClassifier(set, hp, 2), layer_index, set.rows.size()};
}

// At.T & Ac.T: trained on the shadow teacher, queried on the real teacher.
inline BinaryAttack AttackAtTAcT(const Network& teacher_shadow,
                                 const MembershipSplit& shadow_split,
                                 std::size_t layer_index, const Hyperparams& hp) {
  return TrainBinaryAttack(teacher_shadow, shadow_split, layer_index, hp);
}

// At.S & Ac.S: trained on the shadow student, queried on the real student.
inline BinaryAttack AttackAtSAcS(const Network& student_shadow,
                                 const MembershipSplit& shadow_split,
                                 std::size_t layer_index, const Hyperparams& hp) {
  return TrainBinaryAttack(student_shadow, shadow_split, layer_index, hp);
}

// --- serialization --------------------------------------------------------

inline nlohmann::json ThresholdsToJson(const Thresholds& th) {
  return {{"sigma1", th.sigma1}, {"sigma2", th.sigma2}, {"sigma3", th.sigma3}};
}

inline Thresholds ThresholdsFromJson(const nlohmann::json& j) {
  try {
    return {j.at("sigma1").get<double>(), j.at("sigma2").get<double>(),
            j.at("sigma3").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("thresholds json: ") + e.what());
  }
}

inline nlohmann::json AttackSetToJson(const AttackTrainingSet& set) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : set.rows) {
    rows.push_back({{"label", r.label},
                    {"provenance", ToString(r.provenance)},
                    {"source_id", r.source_id},
                    {"values", r.values}});
  }
  return {{"rows", std::move(rows)}};
}

inline AttackTrainingSet AttackSetFromJson(const nlohmann::json& j) {
  try {
    AttackTrainingSet set;
    for (const auto& jr : j.at("rows")) {
      set.rows.push_back({jr.at("label").get<int>(),
                          ProvenanceFromString(jr.at("provenance").get<std::string>()),
                          jr.at("source_id").get<RecordId>(),
                          jr.at("values").get<Vector>()});
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("attack set json: ") + e.what());
  }
}

}  // namespace mia
