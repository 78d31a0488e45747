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

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "mia/common.hpp"
#include "mia/tensor.hpp"

namespace mia {

using RecordId = std::uint64_t;

// Noise records live in the upper half of the id space; task records are
// numbered from zero.
inline constexpr RecordId kNoiseIdBit = RecordId{1} << 63;

inline bool IsNoiseId(RecordId id) { return (id & kNoiseIdBit) != 0; }

// Input rows with class labels and unique record ids.
struct LabeledDataset {
  Tensor inputs = Tensor::Matrix(0, 0);
  std::vector<std::size_t> labels;
  std::vector<RecordId> ids;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t dim() const { return inputs.rank() == 2 ? inputs.shape()[1] : 0; }

  void Validate() const {
    Require(inputs.rank() == 2, "dataset: inputs must be a matrix");
    Require(inputs.rows() == labels.size() && labels.size() == ids.size(),
            "dataset: inputs, labels and ids must have equal length");
    Require(num_classes >= 1, "dataset: num_classes must be positive");
    std::unordered_set<RecordId> seen;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      Require(labels[i] < num_classes,
              "dataset: label " + std::to_string(labels[i]) +
                  " out of range at row " + std::to_string(i));
      Require(seen.insert(ids[i]).second,
              "dataset: duplicate id " + std::to_string(ids[i]));
    }
  }

  // Rows at the given positions, in the given order.
  LabeledDataset Subset(const std::vector<std::size_t>& rows) const {
    LabeledDataset out;
    out.num_classes = num_classes;
    out.inputs = Tensor::Matrix(rows.size(), dim());
    out.labels.reserve(rows.size());
    out.ids.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto src = inputs.Row(rows[i]);
      std::copy(src.begin(), src.end(), out.inputs.Row(i).begin());
      out.labels.push_back(labels[rows[i]]);
      out.ids.push_back(ids[rows[i]]);
    }
    return out;
  }

  std::unordered_set<RecordId> IdSet() const {
    return {ids.begin(), ids.end()};
  }

  friend bool operator==(const LabeledDataset&,
                         const LabeledDataset&) = default;
};

// Concatenates datasets with the same dimension and class count.
inline LabeledDataset Concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  Require(a.dim() == b.dim(), "Concat: dimension mismatch");
  LabeledDataset out;
  out.num_classes = std::max(a.num_classes, b.num_classes);
  out.inputs = Tensor::Matrix(a.size() + b.size(), a.dim());
  std::copy(a.inputs.data().begin(), a.inputs.data().end(),
            out.inputs.data().begin());
  std::copy(b.inputs.data().begin(), b.inputs.data().end(),
            out.inputs.data().begin() + a.inputs.size());
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.ids = a.ids;
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  return out;
}

// "mia-ds v1" text format:
//   mia-ds,1,<n>,<dim>,<num_classes>
//   id,label,f_1,...,f_dim        (n rows, %.17g floats)
inline void WriteDataset(std::ostream& os, const LabeledDataset& ds) {
  os << "mia-ds,1," << ds.size() << ',' << ds.dim() << ',' << ds.num_classes
     << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << ds.ids[i] << ',' << ds.labels[i];
    for (double v : ds.inputs.Row(i)) os << ',' << FormatDouble(v);
    os << '\n';
  }
}

namespace detail {

inline std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::uint64_t ParseU64(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (s.empty() || pos != s.size() || s[0] == '-') {
    throw ValidationError("mia-ds: bad " + what + " '" + s + "'");
  }
  return v;
}

inline double ParseDouble(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ValidationError("mia-ds: bad float '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline LabeledDataset ReadDataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("mia-ds: missing header");
  const auto header = detail::SplitCsv(line);
  if (header.size() != 5 || header[0] != "mia-ds" || header[1] != "1") {
    throw ValidationError("mia-ds: bad header '" + line + "'");
  }
  const auto n = detail::ParseU64(header[2], "row count");
  const auto dim = detail::ParseU64(header[3], "dimension");
  LabeledDataset ds;
  ds.num_classes = detail::ParseU64(header[4], "class count");
  ds.inputs = Tensor::Matrix(n, dim);
  ds.labels.reserve(n);
  ds.ids.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (!std::getline(is, line)) {
      throw ValidationError("mia-ds: expected " + std::to_string(n) +
                            " rows, got " + std::to_string(r));
    }
    const auto fields = detail::SplitCsv(line);
    if (fields.size() != dim + 2) {
      throw ValidationError("mia-ds: row " + std::to_string(r) + " has " +
                            std::to_string(fields.size()) + " fields");
    }
    ds.ids.push_back(detail::ParseU64(fields[0], "id"));
    ds.labels.push_back(detail::ParseU64(fields[1], "label"));
    for (std::size_t c = 0; c < dim; ++c) {
      ds.inputs.at(r, c) = detail::ParseDouble(fields[c + 2]);
    }
  }
  ds.Validate();
  return ds;
}

inline void SaveDataset(const std::string& path, const LabeledDataset& ds) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  WriteDataset(os, ds);
  if (!os) throw Error("write failed for '" + path + "'");
}

inline LabeledDataset LoadDataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path + "'");
  return ReadDataset(is);
}

}  // namespace mia
