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

#include "pamcl/model.hpp"

#include <cmath>

#include "pamcl/errors.hpp"
#include "pamcl/kernels.hpp"

namespace pamcl {

namespace k = kernels;

Tensor SharedExtractor::extract(const Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != 3)
    throw InputError("extractor input must be [N,3,H,W]");
  if (batch.dim(2) != variant.input_size || batch.dim(3) != variant.input_size)
    throw InputError("extractor input is " + std::to_string(batch.dim(2)) + "x" +
                     std::to_string(batch.dim(3)) + ", variant expects " +
                     std::to_string(variant.input_size) + "x" +
                     std::to_string(variant.input_size));
  Tensor h = k::relu_forward(stem_bn.forward(stem.forward(batch)));
  if (variant.stem_pool) h = k::maxpool_forward(h, 3, 2, 1);
  for (const Stage& s : stages) h = s.forward(h);
  return h;
}

int64_t SharedExtractor::param_count() const {
  int64_t n = stem.weight.value.numel() + stem_bn.gamma.value.numel() * 2;
  for (const Stage& s : stages) n += s.param_count();
  return n;
}

StateDict SharedExtractor::state_dict() const {
  StateDict d;
  d["conv1.weight"] = stem.weight.value;
  d["bn1.weight"] = stem_bn.gamma.value;
  d["bn1.bias"] = stem_bn.beta.value;
  d["bn1.running_mean"] = stem_bn.running_mean;
  d["bn1.running_var"] = stem_bn.running_var;
  for (size_t s = 0; s < stages.size(); ++s) {
    StateDict sd = stage_state_dict(stages[s], "layer" + std::to_string(s + 1) + ".");
    d.insert(sd.begin(), sd.end());
  }
  return d;
}

void AdaptationModule::set_frozen(bool on) {
  frozen = on;
  stage.set_trainable(!on);
}

InitStrategy parse_init_strategy(const std::string& s) {
  if (s == "pretrained") return InitStrategy::pretrained;
  if (s == "relevant") return InitStrategy::relevant;
  throw ConfigError("unknown init strategy: " + s);
}

std::string to_string(InitStrategy s) {
  return s == InitStrategy::pretrained ? "pretrained" : "relevant";
}

void UnifiedClassifier::suppress_frozen_row_grads() {
  lin.weight.ensure_grad();
  lin.bias.ensure_grad();
  for (int r = 0; r < rows(); ++r) {
    if (row_trainable[static_cast<size_t>(r)]) continue;
    float* g = lin.weight.grad.ptr() + static_cast<int64_t>(r) * embedding_dim;
    std::fill(g, g + embedding_dim, 0.0f);
    lin.bias.grad[r] = 0.0f;
  }
}

void UnifiedClassifier::freeze_rows_of_task(int task_id) {
  for (int r = 0; r < rows(); ++r)
    if (row_task[static_cast<size_t>(r)] == task_id)
      row_trainable[static_cast<size_t>(r)] = 0;
}

int64_t UnifiedClassifier::param_count() const {
  return lin.weight.value.numel() + lin.bias.value.numel();
}

int64_t UnifiedClassifier::trainable_param_count() const {
  int64_t n = 0;
  for (int r = 0; r < rows(); ++r)
    if (row_trainable[static_cast<size_t>(r)]) n += embedding_dim + 1;
  return n;
}

UnifiedClassifier make_classifier(int embedding_dim) {
  UnifiedClassifier c;
  c.embedding_dim = embedding_dim;
  c.lin = Linear::make(embedding_dim, 0);
  return c;
}

UnifiedClassifier expand_classifier(const UnifiedClassifier& classifier,
                                    int new_classes, int task_id, Rng& rng) {
  if (new_classes < 1)
    throw ConfigError("expand_classifier: new_classes must be >= 1");
  UnifiedClassifier out = classifier;
  const int d = out.embedding_dim;
  const int old_rows = out.rows();
  const int total = old_rows + new_classes;

  Tensor w({total, d});
  Tensor b({total});
  std::copy_n(classifier.lin.weight.value.ptr(),
              static_cast<int64_t>(old_rows) * d, w.ptr());
  std::copy_n(classifier.lin.bias.value.ptr(), old_rows, b.ptr());
  const float bound = 1.0f / std::sqrt(static_cast<float>(d));
  for (int r = old_rows; r < total; ++r) {
    float* row = w.ptr() + static_cast<int64_t>(r) * d;
    for (int i = 0; i < d; ++i)
      row[i] = static_cast<float>(rng.uniform(-bound, bound));
    b[r] = 0.0f;  // zero-bias fan-in scheme
    out.row_task.push_back(task_id);
    out.row_trainable.push_back(1);
  }
  out.lin.weight.value = std::move(w);
  out.lin.bias.value = std::move(b);
  out.lin.weight.grad = Tensor();
  out.lin.bias.grad = Tensor();
  out.lin.rows = total;
  return out;
}

std::vector<int> SessionState::module_rows(int module_index) const {
  std::vector<int> rows;
  for (const TaskEntry& e : task_registry) {
    if (e.module_index != module_index) continue;
    for (int cid : e.class_ids) rows.push_back(class_to_row.at(cid));
  }
  return rows;
}

std::vector<int> SessionState::task_rows(int task_id) const {
  std::vector<int> rows;
  for (int cid : entry_for_task(task_id).class_ids)
    rows.push_back(class_to_row.at(cid));
  return rows;
}

const TaskEntry& SessionState::entry_for_task(int task_id) const {
  for (const TaskEntry& e : task_registry)
    if (e.task_id == task_id) return e;
  throw StateError("unknown task id " + std::to_string(task_id));
}

std::pair<SharedExtractor, AdaptationModule> split_backbone(
    const StateDict& weights, const std::string& variant_name) {
  const BackboneVariant& v = backbone_variant(variant_name);
  BackboneNet net = build_backbone(v);
  load_backbone_state(net, weights);  // structural errors name the first bad key

  SharedExtractor ext;
  ext.variant = v;
  ext.stem = std::move(net.stem);
  ext.stem_bn = std::move(net.stem_bn);
  ext.stages.assign(net.stages.begin(), net.stages.begin() + 3);
  ext.out_channels = v.stage_out_channels(2);
  ext.stem.weight.trainable = false;
  ext.stem_bn.gamma.trainable = false;
  ext.stem_bn.beta.trainable = false;
  for (Stage& s : ext.stages) s.set_trainable(false);

  AdaptationModule tmpl;
  tmpl.stage = std::move(net.stages[3]);
  tmpl.stage.set_trainable(true);
  tmpl.in_channels = v.stage_out_channels(2);
  tmpl.out_channels = v.stage_out_channels(3);
  tmpl.dense_param_count = tmpl.stage.param_count();
  return {std::move(ext), std::move(tmpl)};
}

Tensor extract_features(const SharedExtractor& extractor, const Tensor& batch) {
  return extractor.extract(batch);
}

Tensor forward_task(const SharedExtractor& extractor,
                    const AdaptationModule& module,
                    const UnifiedClassifier& classifier, const Tensor& batch) {
  if (module.in_channels != extractor.out_channels)
    throw StructuralError("module expects " + std::to_string(module.in_channels) +
                          " input channels, extractor yields " +
                          std::to_string(extractor.out_channels));
  if (classifier.embedding_dim != module.out_channels)
    throw StructuralError("classifier dim " +
                          std::to_string(classifier.embedding_dim) +
                          " != module output channels " +
                          std::to_string(module.out_channels));
  const Tensor fmap = extractor.extract(batch);
  const Tensor pooled = k::gap_forward(module.forward(fmap));
  return classifier.logits(pooled);
}

AdaptationModule instantiate_module(const AdaptationModule& module_template,
                                    InitStrategy strategy,
                                    const AdaptationModule* donor, int task_id) {
  if (strategy == InitStrategy::relevant && donor == nullptr)
    throw ConfigError("relevant init strategy requires a donor module");
  AdaptationModule m = strategy == InitStrategy::pretrained ? module_template : *donor;
  m.module_id = -1;
  m.task_ids = {task_id};
  m.set_frozen(false);
  return m;
}

namespace {

int64_t module_physical_count(const AdaptationModule& m) {
  if (m.compacted || !m.plan.has_value()) return m.param_count();
  // Masked but not compacted: count kept channels arithmetically.
  int64_t n = 0;
  const PruningPlan& plan = *m.plan;
  for (size_t i = 0; i < m.stage.blocks.size(); ++i) {
    const Block& b = m.stage.blocks[i];
    const std::string prefix = "b" + std::to_string(i) + ".";
    const int64_t k1 = plan.kept_channels(prefix + "conv1");
    const int64_t kk1 = b.conv1.k * b.conv1.k;
    n += k1 * b.conv1.in_c * kk1 + 2 * k1;  // conv1 + bn1
    if (b.bottleneck) {
      const int64_t k2 = plan.kept_channels(prefix + "conv2");
      n += k2 * k1 * b.conv2.k * b.conv2.k + 2 * k2;          // conv2 + bn2
      n += b.conv3->out_c * k2 * b.conv3->k * b.conv3->k;     // conv3
      n += 2 * b.bn3->c;
    } else {
      n += b.conv2.out_c * k1 * b.conv2.k * b.conv2.k;  // conv2
      n += 2 * b.bn2.c;
    }
    if (b.ds_conv)
      n += b.ds_conv->weight.value.numel() + 2 * b.ds_bn->c;
  }
  return n;
}

int64_t module_count_for_mode(const AdaptationModule& m, CountingMode mode) {
  if (mode == CountingMode::masked_logical)
    return m.dense_param_count > 0 ? m.dense_param_count : m.param_count();
  return module_physical_count(m);
}

}  // namespace

ParamReport count_parameters(const SessionState& state, CountingMode mode) {
  if (state.modules.empty() && !state.active_module.has_value())
    throw StateError("count_parameters: no adaptation module exists yet");

  ParamReport r;
  r.mode = mode;
  r.extractor_params = state.extractor.param_count();
  for (const AdaptationModule& m : state.modules)
    r.module_params += module_count_for_mode(m, mode);
  if (state.active_module)
    r.module_params += module_count_for_mode(*state.active_module, mode);
  r.classifier_params = state.classifier.param_count();
  r.total_after_all_tasks = r.extractor_params + r.module_params + r.classifier_params;

  // Trainable footprint of one session: the most recent task's module plus
  // the classifier rows that task owns.
  if (!state.task_registry.empty()) {
    const TaskEntry& last = state.task_registry.back();
    const AdaptationModule& m =
        state.active_module ? *state.active_module
                            : state.modules[static_cast<size_t>(last.module_index)];
    r.trainable_per_task =
        module_count_for_mode(m, mode) +
        static_cast<int64_t>(last.class_ids.size()) * (state.classifier.embedding_dim + 1);
  } else if (state.active_module) {
    r.trainable_per_task = module_count_for_mode(*state.active_module, mode);
  }
  return r;
}

}  // namespace pamcl
