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
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mia/common.hpp"

namespace mia {

// A metric that has no value for the given input (e.g. AUC with one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// Membership is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts Confusion(std::span<const int> preds,
                                 std::span<const int> labels) {
  Require(preds.size() == labels.size(),
          "confusion: " + std::to_string(preds.size()) + " predictions vs " +
              std::to_string(labels.size()) + " labels");
  Require(!preds.empty(), "confusion: empty input");
  ConfusionCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    Require((preds[i] == 0 || preds[i] == 1) && (labels[i] == 0 || labels[i] == 1),
            "confusion: values must be 0 or 1");
    if (labels[i] == 1) {
      preds[i] == 1 ? ++c.tp : ++c.fn;
    } else {
      preds[i] == 1 ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

struct Rates {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  // Zero-denominator ratios are reported as 0 with the flag set.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

inline Rates MetricsFromConfusion(const ConfusionCounts& c) {
  Require(c.total() > 0, "metrics: no records");
  Rates r;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fp == 0) {
    r.precision_undefined = true;
  } else {
    r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn == 0) {
    r.recall_undefined = true;
  } else {
    r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  }
  return r;
}

// Exact Mann-Whitney AUC: the fraction of (positive, negative) pairs where
// the positive scores higher, ties counted half. Computed by sorting; pair
// counts are kept in integers (doubled) so the result is exact up to the
// final division.
inline double Auc(std::span<const double> scores, std::span<const int> labels) {
  Require(scores.size() == labels.size(), "auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Require(labels[i] == 0 || labels[i] == 1, "auc: labels must be 0 or 1");
    Require(!std::isnan(scores[i]), "auc: NaN score");
    positives += labels[i] == 1;
  }
  const std::uint64_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("auc: needs at least one positive and one negative");
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t twice_u = 0;
  std::uint64_t negatives_below = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    std::uint64_t pos = 0, neg = 0;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) {
      labels[order[end]] == 1 ? ++pos : ++neg;
      ++end;
    }
    twice_u += 2 * pos * negatives_below + pos * neg;
    negatives_below += neg;
    start = end;
  }
  return static_cast<double>(twice_u) /
         (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

enum class MemberRole { kTeacher, kStudent };

// Teacher role: positive iff decision == 1. Student role: iff decision == 2.
inline std::vector<int> TernaryToBinary(std::span<const int> decisions,
                                        MemberRole role) {
  const int positive = role == MemberRole::kTeacher ? 1 : 2;
  std::vector<int> out;
  out.reserve(decisions.size());
  for (int d : decisions) out.push_back(d == positive ? 1 : 0);
  return out;
}

struct TrialMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double auc = 0.0;
  std::optional<double> accuracy_3class;
  std::vector<std::string> flags;

  bool HasFlag(const std::string& flag) const {
    return std::find(flags.begin(), flags.end(), flag) != flags.end();
  }
};

// Binary metrics for one trial. Undefined precision/recall/AUC are reported
// as 0 and flagged.
inline TrialMetrics BinaryTrialMetrics(std::span<const int> preds,
                                       std::span<const double> scores,
                                       std::span<const int> labels) {
  TrialMetrics m;
  const Rates r = MetricsFromConfusion(Confusion(preds, labels));
  m.accuracy = r.accuracy;
  m.precision = r.precision;
  m.recall = r.recall;
  if (r.precision_undefined) m.flags.push_back("precision_undefined");
  if (r.recall_undefined) m.flags.push_back("recall_undefined");
  try {
    m.auc = Auc(scores, labels);
  } catch (const UndefinedMetricError&) {
    m.flags.push_back("auc_undefined");
  }
  return m;
}

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
  std::size_t count = 0;
};

// Mean and sample standard deviation (Welford).
inline MetricSummary Summarize(std::span<const double> values) {
  MetricSummary s;
  double m2 = 0.0;
  for (double v : values) {
    ++s.count;
    const double delta = v - s.mean;
    s.mean += delta / static_cast<double>(s.count);
    m2 += delta * (v - s.mean);
  }
  if (s.count > 1) s.sd = std::sqrt(m2 / static_cast<double>(s.count - 1));
  return s;
}

// Per-metric summaries keyed by metric name. Values flagged undefined in a
// trial are left out of that metric's summary.
inline std::map<std::string, MetricSummary> Aggregate(
    std::span<const TrialMetrics> trials) {
  Require(!trials.empty(), "aggregate: no trials");
  std::map<std::string, std::vector<double>> columns;
  for (const auto& t : trials) {
    columns["accuracy"].push_back(t.accuracy);
    if (!t.HasFlag("precision_undefined")) columns["precision"].push_back(t.precision);
    if (!t.HasFlag("recall_undefined")) columns["recall"].push_back(t.recall);
    if (!t.HasFlag("auc_undefined")) columns["auc"].push_back(t.auc);
    if (t.accuracy_3class) columns["accuracy_3class"].push_back(*t.accuracy_3class);
  }
  std::map<std::string, MetricSummary> out;
  for (const auto& [name, values] : columns) out[name] = Summarize(values);
  return out;
}

}  // namespace mia
