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

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "mia/data.hpp"
#include "mia/dataset.hpp"
#include "test_util.hpp"

namespace mia {
namespace {

std::string Serialize(const LabeledDataset& ds) {
  std::ostringstream os;
  WriteDataset(os, ds);
  return os.str();
}

LabeledDataset Parse(const std::string& text) {
  std::istringstream is(text);
  return ReadDataset(is);
}

std::size_t NearestCenter(std::span<const double> x,
                          const std::vector<std::vector<double>>& centers) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double d = testing::OracleL2(x, centers[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

TEST(SyntheticTaskTest, CountsAndIds) {
  TaskSpec spec;
  spec.teacher_classes = 4;
  spec.teacher_samples_per_class = 50;
  spec.student_classes = 3;
  spec.student_samples_per_class = 20;
  const auto task = GenerateSyntheticTask(spec);
  ASSERT_EQ(task.teacher.size(), 200u);
  ASSERT_EQ(task.student.size(), 60u);
  EXPECT_EQ(task.teacher.dim(), spec.input_dim);
  std::map<std::size_t, int> per_class;
  for (std::size_t l : task.teacher.labels) ++per_class[l];
  for (const auto& [label, count] : per_class) EXPECT_EQ(count, 50) << label;
  for (std::size_t i = 0; i < 200; ++i) EXPECT_EQ(task.teacher.ids[i], i);
  std::set<RecordId> all(task.teacher.ids.begin(), task.teacher.ids.end());
  all.insert(task.student.ids.begin(), task.student.ids.end());
  EXPECT_EQ(all.size(), 260u);
}

TEST(SyntheticTaskTest, FullRelatednessKeepsParentNearest) {
  TaskSpec spec;
  spec.cluster_spread = 0.0;
  spec.relatedness = 1.0;
  spec.student_classes = 7;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.seed = seed;
    const auto task = GenerateSyntheticTask(spec);
    for (std::size_t i = 0; i < task.student.size(); ++i) {
      const std::size_t label = task.student.labels[i];
      EXPECT_EQ(NearestCenter(task.student.inputs.Row(i), task.teacher_centers),
                task.student_parent[label]);
    }
  }
}

TEST(SyntheticTaskTest, ZeroSpreadPointsSitOnCenters) {
  TaskSpec spec;
  spec.cluster_spread = 0.0;
  const auto task = GenerateSyntheticTask(spec);
  for (std::size_t i = 0; i < task.teacher.size(); ++i) {
    const auto row = task.teacher.inputs.Row(i);
    const auto& c = task.teacher_centers[task.teacher.labels[i]];
    EXPECT_EQ(std::vector<double>(row.begin(), row.end()), c);
  }
}

TEST(SyntheticTaskTest, SameSpecIsByteIdentical) {
  TaskSpec spec;
  spec.seed = 42;
  const auto a = GenerateSyntheticTask(spec);
  const auto b = GenerateSyntheticTask(spec);
  EXPECT_EQ(Serialize(a.teacher), Serialize(b.teacher));
  EXPECT_EQ(Serialize(a.student), Serialize(b.student));
  spec.seed = 43;
  EXPECT_NE(Serialize(GenerateSyntheticTask(spec).teacher), Serialize(a.teacher));
}

TEST(SyntheticTaskTest, InvalidSpecIsRejected) {
  TaskSpec spec;
  spec.relatedness = 1.5;
  EXPECT_THROW(GenerateSyntheticTask(spec), ValidationError);
  spec = {};
  spec.teacher_classes = 1;
  EXPECT_THROW(GenerateSyntheticTask(spec), ValidationError);
  spec = {};
  spec.cluster_spread = -1.0;
  EXPECT_THROW(GenerateSyntheticTask(spec), ValidationError);
}

TEST(PartitionTest, BalancedAndStratified) {
  const auto data = testing::Blobs(2, 50, 3, 2.0, 1.0, 1);
  const auto split = PartitionMemberNonmember(data, 7);
  EXPECT_EQ(split.member.size(), 50u);
  EXPECT_EQ(split.non_member.size(), 50u);
  EXPECT_TRUE(split.dropped.empty());
  for (std::size_t c = 0; c < 2; ++c) {
    std::size_t in = 0;
    for (std::size_t l : split.member.labels) in += l == c ? 1 : 0;
    EXPECT_EQ(in, 25u);
  }
}

TEST(PartitionTest, PropertiesHoldOnRandomSizes) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t classes = 2 + rng.Below(4);
    LabeledDataset data;
    data.num_classes = classes;
    const std::size_t n = 2 + rng.Below(60);
    data.inputs = Tensor::Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      data.labels.push_back(rng.Below(classes));
      data.ids.push_back(1000 + i);
    }
    const auto split = PartitionMemberNonmember(data, trial);
    const auto m = split.member.IdSet();
    const auto nm = split.non_member.IdSet();
    EXPECT_EQ(split.dropped.size(), n % 2);
    EXPECT_EQ(split.member.size(), split.non_member.size());
    std::set<RecordId> all(m.begin(), m.end());
    all.insert(nm.begin(), nm.end());
    all.insert(split.dropped.begin(), split.dropped.end());
    EXPECT_EQ(all.size(), n);
    for (RecordId id : m) EXPECT_EQ(nm.count(id), 0u);
    for (std::size_t c = 0; c < classes; ++c) {
      long a = 0, b = 0;
      for (std::size_t l : split.member.labels) a += l == c ? 1 : 0;
      for (std::size_t l : split.non_member.labels) b += l == c ? 1 : 0;
      EXPECT_LE(std::labs(a - b), 1) << "class " << c;
    }
  }
}

TEST(PartitionTest, OddCountDropsOneRecord) {
  const auto data = testing::Blobs(3, 5, 2, 2.0, 1.0, 3);
  const auto split = PartitionMemberNonmember(data, 1);
  ASSERT_EQ(split.dropped.size(), 1u);
  EXPECT_EQ(split.member.IdSet().count(split.dropped[0]), 0u);
  EXPECT_EQ(split.non_member.IdSet().count(split.dropped[0]), 0u);
}

TEST(PartitionTest, SeedChangesSplitAndRepeats) {
  const auto data = testing::Blobs(2, 30, 2, 2.0, 1.0, 3);
  EXPECT_EQ(PartitionMemberNonmember(data, 5).member.ids,
            PartitionMemberNonmember(data, 5).member.ids);
  EXPECT_NE(PartitionMemberNonmember(data, 5).member.IdSet(),
            PartitionMemberNonmember(data, 6).member.IdSet());
}

TEST(PartitionTest, TooFewRecordsIsRejected) {
  const auto data = testing::Blobs(1, 1, 2, 2.0, 1.0, 3);
  EXPECT_THROW(PartitionMemberNonmember(data, 1), ValidationError);
}

TEST(SplitShadowTest, RoundedSizes) {
  const auto data = testing::Blobs(2, 5, 2, 2.0, 1.0, 3);
  auto s = SplitShadow(data, 0.5, 1);
  EXPECT_EQ(s.member.size(), 5u);
  EXPECT_EQ(s.non_member.size(), 5u);
  s = SplitShadow(data, 0.7, 1);
  EXPECT_EQ(s.member.size(), 7u);
  EXPECT_EQ(s.non_member.size(), 3u);
  std::set<RecordId> all(s.member.ids.begin(), s.member.ids.end());
  all.insert(s.non_member.ids.begin(), s.non_member.ids.end());
  EXPECT_EQ(all.size(), 10u);
}

TEST(SplitShadowTest, EmptySideIsRejected) {
  const auto data = testing::Blobs(2, 1, 2, 2.0, 1.0, 3);
  EXPECT_THROW(SplitShadow(data, 0.1, 1), ValidationError);
  EXPECT_THROW(SplitShadow(data, 0.9, 1), ValidationError);
  EXPECT_THROW(SplitShadow(data, 0.0, 1), ValidationError);
  EXPECT_THROW(SplitShadow(data, 1.0, 1), ValidationError);
}

TEST(NoiseTest, RangeMeanAndNamespace) {
  constexpr std::size_t kCount = 100000;
  const auto noise = GenerateNoiseDataset(kCount, 3, -2.0, 6.0, 9);
  ASSERT_EQ(noise.size(), kCount);
  EXPECT_EQ(noise.num_classes, 1u);
  double sum = 0.0;
  for (double v : noise.inputs.data()) {
    EXPECT_GE(v, -2.0);
    EXPECT_LT(v, 6.0);
    sum += v;
  }
  // Mean of U(-2, 6) is 2 with standard error 8 / sqrt(12 * 3e5) ~ 0.0133.
  EXPECT_NEAR(sum / static_cast<double>(noise.inputs.size()), 2.0, 0.07);
  for (std::size_t l : noise.labels) EXPECT_EQ(l, 0u);

  TaskSpec spec;
  spec.teacher_samples_per_class = 100;
  const auto task = GenerateSyntheticTask(spec);
  const auto ids = noise.IdSet();
  EXPECT_EQ(ids.size(), kCount);
  for (RecordId id : task.teacher.ids) EXPECT_EQ(ids.count(id), 0u);
  for (RecordId id : task.student.ids) EXPECT_EQ(ids.count(id), 0u);
  for (RecordId id : noise.ids) EXPECT_TRUE(IsNoiseId(id));
}

TEST(NoiseTest, SeedDeterminesValues) {
  const auto a = GenerateNoiseDataset(50, 4, 0.0, 1.0, 3);
  EXPECT_EQ(a, GenerateNoiseDataset(50, 4, 0.0, 1.0, 3));
  EXPECT_NE(a.inputs, GenerateNoiseDataset(50, 4, 0.0, 1.0, 4).inputs);
}

TEST(NoiseTest, InvalidArgumentsAreRejected) {
  EXPECT_THROW(GenerateNoiseDataset(0, 2, 0.0, 1.0, 1), ValidationError);
  EXPECT_THROW(GenerateNoiseDataset(5, 0, 0.0, 1.0, 1), ValidationError);
  EXPECT_THROW(GenerateNoiseDataset(5, 2, 1.0, 1.0, 1), ValidationError);
}

TEST(DatasetFormatTest, RoundTripIsBitExact) {
  Rng rng(4);
  LabeledDataset ds;
  ds.num_classes = 3;
  ds.inputs = Tensor::Matrix(6, 4);
  const double awkward[] = {0.1, -0.0, 1e-310, 1.0 / 3.0, -1e300, 6.02214076e23};
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      ds.inputs.at(r, c) = c == 0 ? awkward[r] : rng.Normal() * std::pow(10.0, rng.Uniform(-20, 20));
    }
    ds.labels.push_back(r % 3);
    ds.ids.push_back(r == 5 ? kNoiseIdBit | 77 : r * 11);
  }
  const auto back = Parse(Serialize(ds));
  EXPECT_EQ(back, ds);
  EXPECT_TRUE(std::signbit(back.inputs.at(1, 0)));
}

TEST(DatasetFormatTest, HeaderLayout) {
  const auto text = Serialize(testing::Blobs(2, 1, 3, 1.0, 1.0, 1));
  EXPECT_EQ(text.substr(0, text.find('\n')), "mia-ds,1,2,3,2");
}

TEST(DatasetFormatTest, MalformedInputIsRejected) {
  EXPECT_THROW(Parse(""), ValidationError);
  EXPECT_THROW(Parse("mia-ds,2,1,1,2\n0,0,1\n"), ValidationError);
  EXPECT_THROW(Parse("mia-ds,1,2,1,2\n0,0,1\n"), ValidationError);
  EXPECT_THROW(Parse("mia-ds,1,1,2,2\n0,0,1\n"), ValidationError);
  EXPECT_THROW(Parse("mia-ds,1,1,1,2\n0,5,1\n"), ValidationError);
  EXPECT_THROW(Parse("mia-ds,1,1,1,2\n0,0,abc\n"), ValidationError);
  EXPECT_THROW(Parse("mia-ds,1,2,1,2\n0,0,1\n0,1,2\n"), ValidationError);
  EXPECT_THROW(Parse("mia-ds,1,1,1,2\n-1,0,1\n"), ValidationError);
}

TEST(DatasetFormatTest, MissingFileIsRejected) {
  EXPECT_THROW(LoadDataset("/nonexistent/file.ds"), Error);
}

}  // namespace
}  // namespace mia
