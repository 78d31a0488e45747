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
#include <numeric>
#include <utility>
#include <vector>

#include "mia/common.hpp"
#include "mia/dataset.hpp"
#include "mia/tensor.hpp"

namespace mia {

// Synthetic teacher/student classification tasks built from Gaussian
// clusters. Every student class has a parent teacher class; relatedness
// controls how far the student cluster drifts from that parent.
struct TaskSpec {
  std::size_t input_dim = 16;
  std::size_t teacher_classes = 4;
  std::size_t student_classes = 4;
  std::size_t teacher_samples_per_class = 50;
  std::size_t student_samples_per_class = 50;
  double cluster_spread = 1.0;
  double relatedness = 1.0;
  double center_scale = 4.0;
  std::uint64_t seed = 0;

  void Validate() const {
    Require(input_dim >= 1, "task: input_dim must be positive");
    Require(teacher_classes >= 2 && student_classes >= 2,
            "task: class counts must be >= 2");
    Require(teacher_samples_per_class >= 1 && student_samples_per_class >= 1,
            "task: samples_per_class must be positive");
    Require(cluster_spread >= 0.0 && std::isfinite(cluster_spread),
            "task: cluster_spread must be finite and non-negative");
    Require(relatedness >= 0.0 && relatedness <= 1.0,
            "task: relatedness must be in [0, 1]");
    Require(center_scale > 0.0, "task: center_scale must be positive");
  }

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct SyntheticTask {
  LabeledDataset teacher;
  LabeledDataset student;
  std::vector<std::vector<double>> teacher_centers;
  std::vector<std::vector<double>> student_centers;
  std::vector<std::size_t> student_parent;  // teacher class of each student class
};

namespace detail {

inline std::vector<double> RandomDirection(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.Normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

inline double Distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline LabeledDataset SampleClusters(const std::vector<std::vector<double>>& centers,
                                     std::size_t per_class, double spread,
                                     RecordId first_id, Rng& rng) {
  const std::size_t dim = centers.front().size();
  LabeledDataset ds;
  ds.num_classes = centers.size();
  ds.inputs = Tensor::Matrix(centers.size() * per_class, dim);
  std::size_t row = 0;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (std::size_t k = 0; k < per_class; ++k, ++row) {
      auto x = ds.inputs.Row(row);
      for (std::size_t d = 0; d < dim; ++d) {
        x[d] = centers[c][d] + spread * rng.Normal();
      }
      ds.labels.push_back(c);
      ds.ids.push_back(first_id + row);
    }
  }
  return ds;
}

}  // namespace detail

inline SyntheticTask GenerateSyntheticTask(const TaskSpec& spec) {
  spec.Validate();
  Rng center_rng(DeriveSeed(spec.seed, "centers"));
  SyntheticTask task;
  const std::size_t dim = spec.input_dim;

  task.teacher_centers.assign(spec.teacher_classes, std::vector<double>(dim));
  for (auto& c : task.teacher_centers) {
    for (double& x : c) x = spec.center_scale * center_rng.Normal();
  }
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < spec.teacher_classes; ++a) {
    for (std::size_t b = a + 1; b < spec.teacher_classes; ++b) {
      min_gap = std::min(min_gap, detail::Distance(task.teacher_centers[a],
                                                   task.teacher_centers[b]));
    }
  }

  // A sub-offset of a quarter of the smallest center gap keeps each student
  // center strictly nearest to its parent when relatedness is 1.
  for (std::size_t j = 0; j < spec.student_classes; ++j) {
    const std::size_t parent = j % spec.teacher_classes;
    const auto sub = detail::RandomDirection(dim, center_rng);
    const auto drift = detail::RandomDirection(dim, center_rng);
    std::vector<double> center(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      center[d] = task.teacher_centers[parent][d] + 0.25 * min_gap * sub[d] +
                  (1.0 - spec.relatedness) * min_gap * drift[d];
    }
    task.student_centers.push_back(std::move(center));
    task.student_parent.push_back(parent);
  }

  Rng teacher_rng(DeriveSeed(spec.seed, "teacher-points"));
  Rng student_rng(DeriveSeed(spec.seed, "student-points"));
  task.teacher = detail::SampleClusters(task.teacher_centers,
                                        spec.teacher_samples_per_class,
                                        spec.cluster_spread, 0, teacher_rng);
  task.student = detail::SampleClusters(task.student_centers,
                                        spec.student_samples_per_class,
                                        spec.cluster_spread,
                                        task.teacher.size(), student_rng);
  return task;
}

// Member / non-member halves of a dataset.
struct MembershipSplit {
  LabeledDataset member;
  LabeledDataset non_member;
  std::vector<RecordId> dropped;  // records left out to make sizes even
};

namespace detail {

inline MembershipSplit SplitByMask(const LabeledDataset& data,
                                   const std::vector<int>& side) {
  std::vector<std::size_t> member, non_member;
  for (std::size_t i = 0; i < side.size(); ++i) {
    if (side[i] == 1) member.push_back(i);
    if (side[i] == 0) non_member.push_back(i);
  }
  MembershipSplit split;
  split.member = data.Subset(member);
  split.non_member = data.Subset(non_member);
  return split;
}

}  // namespace detail

// Stratified 1:1 split. An odd-sized input loses one random record, which
// is listed in MembershipSplit::dropped.
inline MembershipSplit PartitionMemberNonmember(const LabeledDataset& data,
                                                std::uint64_t seed) {
  data.Validate();
  Require(data.size() >= 2, "partition: need at least two records");
  Rng rng(DeriveSeed(seed, "partition"));

  // side: 1 member, 0 non-member, -1 dropped
  std::vector<int> side(data.size(), 0);
  std::vector<RecordId> dropped;
  if (data.size() % 2 == 1) {
    const std::size_t victim = rng.Below(data.size());
    side[victim] = -1;
    dropped.push_back(data.ids[victim]);
  }

  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (side[i] != -1) by_class[data.labels[i]].push_back(i);
  }
  std::vector<std::size_t> leftovers;
  for (auto& rows : by_class) {
    rng.Shuffle(rows);
    const std::size_t half = rows.size() / 2;
    for (std::size_t k = 0; k < half; ++k) side[rows[k]] = 1;
    if (rows.size() % 2 == 1) leftovers.push_back(rows.back());
  }
  // The number of odd classes is even once the total is even.
  rng.Shuffle(leftovers);
  for (std::size_t k = 0; k < leftovers.size() / 2; ++k) side[leftovers[k]] = 1;

  auto split = detail::SplitByMask(data, side);
  split.dropped = std::move(dropped);
  return split;
}

// Random split with round(member_fraction * n) members.
inline MembershipSplit SplitShadow(const LabeledDataset& data,
                                   double member_fraction, std::uint64_t seed) {
  data.Validate();
  Require(member_fraction > 0.0 && member_fraction < 1.0,
          "split_shadow: member_fraction must be in (0, 1)");
  const std::size_t n = data.size();
  const auto members =
      static_cast<std::size_t>(std::llround(member_fraction * static_cast<double>(n)));
  Require(members >= 1 && members < n,
          "split_shadow: fraction " + FormatDouble(member_fraction) + " of " +
              std::to_string(n) + " records leaves one side empty");
  Rng rng(DeriveSeed(seed, "shadow-split"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.Shuffle(order);
  std::vector<int> side(n, 0);
  for (std::size_t k = 0; k < members; ++k) side[order[k]] = 1;
  return detail::SplitByMask(data, side);
}

// Semantics-free uniform noise. All labels are the sentinel 0 and ids come
// from the noise namespace (kNoiseIdBit set), salted by the seed.
inline LabeledDataset GenerateNoiseDataset(std::size_t count, std::size_t input_dim,
                                           double low, double high,
                                           std::uint64_t seed) {
  Require(count >= 1, "noise: count must be >= 1");
  Require(count < (std::uint64_t{1} << 32), "noise: count must be < 2^32");
  Require(input_dim >= 1, "noise: input_dim must be >= 1");
  Require(low < high, "noise: low must be < high");
  Rng rng(DeriveSeed(seed, "noise"));
  const RecordId salt = Mix64(seed) & 0x7fffffff00000000ULL;
  LabeledDataset ds;
  ds.num_classes = 1;
  ds.inputs = Tensor::Matrix(count, input_dim);
  for (double& v : ds.inputs.data()) v = rng.Uniform(low, high);
  ds.labels.assign(count, 0);
  ds.ids.reserve(count);
  for (std::size_t i = 0; i < count; ++i) ds.ids.push_back(kNoiseIdBit | salt | i);
  return ds;
}

// Smallest and largest input value across the dataset.
inline std::pair<double, double> InputRange(const LabeledDataset& data) {
  Require(!data.inputs.empty(), "input range of an empty dataset");
  const auto [lo, hi] =
      std::minmax_element(data.inputs.data().begin(), data.inputs.data().end());
  return {*lo, *hi};
}

}  // namespace mia
