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
#include <string>

#include "mia/common.hpp"
#include "mia/dataset.hpp"
#include "mia/nn.hpp"

namespace mia {

// Parts 1..frozen_parts are frozen. Zero freezes nothing; the head part can
// never be frozen.
struct FreezeSpec {
  int frozen_parts = 0;

  void ValidateFor(const Network& net) const {
    Require(frozen_parts >= 0, "freeze: frozen part count must be >= 0");
    Require(frozen_parts < net.num_parts(),
            "freeze: cannot freeze " + std::to_string(frozen_parts) +
                " parts of a " + std::to_string(net.num_parts()) +
                "-part network (the head part must stay trainable)");
  }

  friend bool operator==(const FreezeSpec&, const FreezeSpec&) = default;
};

struct TransferConfig {
  FreezeSpec freeze;
  std::size_t head_classes = 2;
  Hyperparams hp;

  friend bool operator==(const TransferConfig&, const TransferConfig&) = default;
};

inline TrainResult TrainTeacher(const Architecture& arch,
                                const LabeledDataset& teacher_members,
                                const Hyperparams& hp) {
  Require(arch.classes == teacher_members.num_classes,
          "train_teacher: architecture has " + std::to_string(arch.classes) +
              " classes, data has " + std::to_string(teacher_members.num_classes));
  Network init = BuildNetwork(arch, DeriveSeed(hp.seed, "teacher"));
  return Train(std::move(init), teacher_members, hp);
}

// Copies the teacher body, grafts a fresh head with cfg.head_classes outputs
// and freezes parts 1..K.
inline Network DeriveStudent(const Network& teacher, const TransferConfig& cfg,
                             std::uint64_t seed) {
  teacher.Validate();
  cfg.freeze.ValidateFor(teacher);
  Require(cfg.head_classes >= 2, "derive_student: head_classes must be >= 2");
  Network student;
  student.layers.assign(teacher.layers.begin(), teacher.layers.end() - 1);
  const DenseLayer& old_head = teacher.layers.back();
  Rng rng(DeriveSeed(seed, "student-head"));
  student.layers.push_back(MakeDenseLayer(old_head.inputs, cfg.head_classes,
                                          Activation::kIdentity, old_head.part,
                                          rng));
  for (auto& layer : student.layers) {
    layer.trainable = layer.part > cfg.freeze.frozen_parts;
  }
  return student;
}

inline TrainResult FineTune(Network student_init,
                            const LabeledDataset& student_members,
                            const Hyperparams& hp) {
  Require(student_init.num_classes() == student_members.num_classes,
          "fine_tune: head has " + std::to_string(student_init.num_classes()) +
              " classes, data has " + std::to_string(student_members.num_classes));
  return Train(std::move(student_init), student_members, hp);
}

// Activation index right after the last frozen part (0 when nothing is
// frozen).
inline std::size_t LastFrozenBoundary(const Network& net, int frozen_parts) {
  std::size_t index = 0;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    if (net.layers[l].part <= frozen_parts) index = l;
  }
  return index;
}

}  // namespace mia
