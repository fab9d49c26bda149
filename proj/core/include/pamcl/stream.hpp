// Copyright 2026 The pamcl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <vector>

#include "pamcl/data.hpp"

namespace pamcl {

/// "B-m Inc-n" split description. m = 0 means every stage holds n classes.
/// The seed permutes the class-to-stage assignment (and thereby task order).
struct SplitSpec {
  std::string dataset_id;
  int base_classes = 0;  // m
  int increment = 2;     // n
  uint64_t seed = 0;

  int stage_count(int total_classes) const;
};

/// One incremental task: its classes and the train/test sample indices.
struct TaskDataset {
  int task_id = -1;
  std::vector<int> class_ids;          // global dataset labels, stage order
  std::vector<int64_t> train_indices;  // into stream dataset.train
  std::vector<int64_t> test_indices;   // into stream dataset.test
};

struct TaskStream {
  SplitSpec spec;
  DatasetPair data;
  std::vector<TaskDataset> tasks;

  int task_count() const { return static_cast<int>(tasks.size()); }
  /// All classes seen up to and including `stage` (cumulative label space).
  std::vector<int> cumulative_classes(int stage) const;
};

/// Partitions the corpus into disjoint class stages: the first stage gets m
/// classes (n when m = 0), later stages n each. Classes are permuted by the
/// spec seed; stages cover every class exactly once.
TaskStream build_task_stream(SplitSpec spec, DatasetPair dataset);

}  // namespace pamcl
