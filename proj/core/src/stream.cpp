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

#include "pamcl/stream.hpp"

#include <numeric>

#include "pamcl/errors.hpp"

namespace pamcl {

int SplitSpec::stage_count(int total_classes) const {
  if (increment <= 0) throw ConfigError("split: increment n must be >= 1");
  if (base_classes == 0)
    return (total_classes + increment - 1) / increment;
  if (base_classes > total_classes)
    throw ConfigError("split: base classes m exceeds total classes");
  const int rest = total_classes - base_classes;
  return 1 + (rest + increment - 1) / increment;
}

std::vector<int> TaskStream::cumulative_classes(int stage) const {
  std::vector<int> out;
  for (int t = 0; t <= stage && t < task_count(); ++t)
    out.insert(out.end(), tasks[static_cast<size_t>(t)].class_ids.begin(),
               tasks[static_cast<size_t>(t)].class_ids.end());
  return out;
}

TaskStream build_task_stream(SplitSpec spec, DatasetPair dataset) {
  if (spec.increment <= 0) throw ConfigError("split: increment n must be >= 1");
  if (dataset.train.size() == 0 || dataset.train.num_classes == 0)
    throw IngestionError("split: dataset has no labeled training data");
  const int total = dataset.train.num_classes;
  if (total < spec.increment || (spec.base_classes > 0 && total < spec.base_classes))
    throw ConfigError("split: dataset has fewer classes than the split needs");

  std::vector<int> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::mix(spec.seed, 0x5eedULL));
  rng.shuffle(order);

  TaskStream stream;
  stream.spec = spec;
  const int stages = spec.stage_count(total);
  stream.tasks.resize(static_cast<size_t>(stages));
  size_t cursor = 0;
  for (int t = 0; t < stages; ++t) {
    TaskDataset& task = stream.tasks[static_cast<size_t>(t)];
    task.task_id = t;
    const int want = (t == 0 && spec.base_classes > 0)
                         ? spec.base_classes
                         : spec.increment;
    for (int i = 0; i < want && cursor < order.size(); ++i)
      task.class_ids.push_back(order[cursor++]);
  }

  // Index samples by stage membership.
  std::vector<int> class_to_task(static_cast<size_t>(total), -1);
  for (const TaskDataset& t : stream.tasks)
    for (int cid : t.class_ids)
      class_to_task[static_cast<size_t>(cid)] = t.task_id;
  for (int64_t i = 0; i < dataset.train.size(); ++i) {
    const int cid = dataset.train.labels[static_cast<size_t>(i)];
    stream.tasks[static_cast<size_t>(class_to_task[static_cast<size_t>(cid)])]
        .train_indices.push_back(i);
  }
  for (int64_t i = 0; i < dataset.test.size(); ++i) {
    const int cid = dataset.test.labels[static_cast<size_t>(i)];
    stream.tasks[static_cast<size_t>(class_to_task[static_cast<size_t>(cid)])]
        .test_indices.push_back(i);
  }
  for (const TaskDataset& t : stream.tasks)
    if (t.train_indices.empty())
      throw IngestionError("split: stage " + std::to_string(t.task_id) +
                           " received no training samples");

  stream.data = std::move(dataset);
  return stream;
}

}  // namespace pamcl
