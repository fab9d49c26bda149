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

#include "pamcl/pruning.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "pamcl/errors.hpp"
#include "pamcl/model.hpp"

namespace pamcl {

namespace {

// A prunable conv, its norm layer, and the conv consuming its output.
struct PrunePoint {
  std::string id;
  Conv2d* conv;
  BatchNorm2d* bn;
  Conv2d* downstream;
};

std::vector<PrunePoint> prune_points(AdaptationModule& m) {
  std::vector<PrunePoint> pts;
  for (size_t i = 0; i < m.stage.blocks.size(); ++i) {
    Block& b = m.stage.blocks[i];
    const std::string prefix = "b" + std::to_string(i) + ".";
    pts.push_back({prefix + "conv1", &b.conv1, &b.bn1, &b.conv2});
    if (b.bottleneck) pts.push_back({prefix + "conv2", &b.conv2, &b.bn2, &*b.conv3});
  }
  return pts;
}

std::vector<PrunePoint> prune_points(const AdaptationModule& m) {
  return prune_points(const_cast<AdaptationModule&>(m));
}

}  // namespace

std::vector<std::string> prunable_layers(const AdaptationModule& module) {
  std::vector<std::string> ids;
  for (const PrunePoint& p : prune_points(module)) ids.push_back(p.id);
  return ids;
}

SaliencyScores channel_saliency(const Tensor& weights, const std::string& layer_id) {
  if (weights.rank() != 4 || weights.numel() == 0)
    throw InputError("channel_saliency: expected a non-empty 4-D weight block");
  const int64_t out_c = weights.dim(0);
  const int64_t per_channel = weights.dim(1) * weights.dim(2) * weights.dim(3);
  SaliencyScores s;
  s.layer_id = layer_id;
  s.scores.resize(static_cast<size_t>(out_c));
  for (int64_t c = 0; c < out_c; ++c) {
    const float* w = weights.ptr() + c * per_channel;
    double acc = 0.0;
    for (int64_t i = 0; i < per_channel; ++i) acc += std::fabs(w[i]);
    s.scores[static_cast<size_t>(c)] = static_cast<float>(acc);
  }
  return s;
}

int64_t PruningPlan::kept_channels(const std::string& layer_id) const {
  auto it = masks.find(layer_id);
  if (it == masks.end()) throw StructuralError("plan has no layer '" + layer_id + "'");
  return it->second.kept;
}

std::vector<int64_t> PruningPlan::kept_indices(const std::string& layer_id) const {
  auto it = masks.find(layer_id);
  if (it == masks.end()) throw StructuralError("plan has no layer '" + layer_id + "'");
  std::vector<int64_t> idx;
  for (size_t c = 0; c < it->second.keep.size(); ++c)
    if (it->second.keep[c]) idx.push_back(static_cast<int64_t>(c));
  return idx;
}

int64_t PruningPlan::total_kept() const {
  int64_t n = 0;
  for (const auto& [id, m] : masks) n += m.kept;
  return n;
}

bool PruningPlan::operator==(const PruningPlan& other) const {
  if (magnitude != other.magnitude || created_at_epoch != other.created_at_epoch ||
      clamped != other.clamped || scope != other.scope)
    return false;
  if (masks.size() != other.masks.size()) return false;
  for (const auto& [id, m] : masks) {
    auto it = other.masks.find(id);
    if (it == other.masks.end() || it->second.keep != m.keep) return false;
  }
  return true;
}

PruningPlan build_pruning_plan(const AdaptationModule& module, float magnitude) {
  if (!(magnitude >= 0.0f && magnitude < 1.0f))
    throw ConfigError("pruning magnitude must lie in [0,1)");
  if (module.plan.has_value())
    throw StateError("build_pruning_plan: module is already masked");

  PruningPlan plan;
  plan.magnitude = magnitude;
  for (const PrunePoint& p : prune_points(module)) {
    const SaliencyScores sal = channel_saliency(p.conv->weight.value, p.id);
    const int64_t c = static_cast<int64_t>(sal.scores.size());
    int64_t drop = static_cast<int64_t>(
        std::floor(static_cast<double>(magnitude) * static_cast<double>(c)));
    if (drop >= c) {
      drop = c - 1;  // keep at least one channel
      plan.clamped = true;
    }
    // Order channels worst-first: ascending score; equal scores drop the
    // higher index first so lower indices survive ties.
    std::vector<int64_t> order(static_cast<size_t>(c));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
      const float sa = sal.scores[static_cast<size_t>(a)];
      const float sb = sal.scores[static_cast<size_t>(b)];
      if (sa != sb) return sa < sb;
      return a > b;
    });
    PruningPlan::LayerMask mask;
    mask.keep.assign(static_cast<size_t>(c), 1);
    for (int64_t i = 0; i < drop; ++i)
      mask.keep[static_cast<size_t>(order[static_cast<size_t>(i)])] = 0;
    mask.kept = c - drop;
    plan.scope.push_back(p.id);
    plan.masks.emplace(p.id, std::move(mask));
  }
  return plan;
}

void apply_plan(AdaptationModule& module, const PruningPlan& plan) {
  const std::vector<PrunePoint> pts = prune_points(module);
  if (plan.scope.size() != pts.size())
    throw StructuralError("apply_plan: plan scope does not match module layers");
  for (size_t i = 0; i < pts.size(); ++i) {
    if (plan.scope[i] != pts[i].id)
      throw StructuralError("apply_plan: scope mismatch at '" + plan.scope[i] +
                            "' vs module layer '" + pts[i].id + "'");
  }
  for (const PrunePoint& p : pts) {
    const auto& mask = plan.masks.at(p.id);
    if (static_cast<int>(mask.keep.size()) != p.conv->out_c)
      throw StructuralError("apply_plan: mask width mismatch on '" + p.id + "'");
    Tensor& w = p.conv->weight.value;
    const int64_t per_channel = w.dim(1) * w.dim(2) * w.dim(3);
    for (int64_t c = 0; c < w.dim(0); ++c) {
      if (mask.keep[static_cast<size_t>(c)]) continue;
      float* row = w.ptr() + c * per_channel;
      std::fill(row, row + per_channel, 0.0f);
      p.bn->gamma.value[c] = 0.0f;
      p.bn->beta.value[c] = 0.0f;
      p.bn->running_mean[c] = 0.0f;
      p.bn->running_var[c] = 0.0f;
      // Downstream columns reading this channel are dead weight; zero them
      // so the masked and compacted forms hold identical live values.
      Tensor& dw = p.downstream->weight.value;
      const int64_t kk = dw.dim(2) * dw.dim(3);
      for (int64_t o = 0; o < dw.dim(0); ++o) {
        float* col = dw.ptr() + (o * dw.dim(1) + c) * kk;
        std::fill(col, col + kk, 0.0f);
      }
    }
    p.conv->out_mask = mask.keep;
    p.bn->out_mask = mask.keep;
  }
  module.plan = plan;
}

namespace {

Tensor slice_rows(const Tensor& w, const std::vector<int64_t>& rows) {
  Tensor out({static_cast<int64_t>(rows.size()), w.dim(1), w.dim(2), w.dim(3)});
  const int64_t per_row = w.dim(1) * w.dim(2) * w.dim(3);
  for (size_t r = 0; r < rows.size(); ++r)
    std::copy_n(w.ptr() + rows[r] * per_row, per_row,
                out.ptr() + static_cast<int64_t>(r) * per_row);
  return out;
}

Tensor slice_cols(const Tensor& w, const std::vector<int64_t>& cols) {
  Tensor out({w.dim(0), static_cast<int64_t>(cols.size()), w.dim(2), w.dim(3)});
  const int64_t kk = w.dim(2) * w.dim(3);
  for (int64_t o = 0; o < w.dim(0); ++o)
    for (size_t c = 0; c < cols.size(); ++c)
      std::copy_n(w.ptr() + (o * w.dim(1) + cols[c]) * kk, kk,
                  out.ptr() + (o * static_cast<int64_t>(cols.size()) +
                               static_cast<int64_t>(c)) *
                                  kk);
  return out;
}

Tensor slice_vec(const Tensor& v, const std::vector<int64_t>& idx) {
  Tensor out({static_cast<int64_t>(idx.size())});
  for (size_t i = 0; i < idx.size(); ++i) out[static_cast<int64_t>(i)] = v[idx[i]];
  return out;
}

void shrink_conv_out(Conv2d& conv, const std::vector<int64_t>& kept) {
  conv.weight.value = slice_rows(conv.weight.value, kept);
  conv.weight.grad = Tensor();
  conv.out_c = static_cast<int>(kept.size());
  conv.out_mask.clear();
}

void shrink_conv_in(Conv2d& conv, const std::vector<int64_t>& kept) {
  conv.weight.value = slice_cols(conv.weight.value, kept);
  conv.weight.grad = Tensor();
  conv.in_c = static_cast<int>(kept.size());
}

void shrink_bn(BatchNorm2d& bn, const std::vector<int64_t>& kept) {
  bn.gamma.value = slice_vec(bn.gamma.value, kept);
  bn.beta.value = slice_vec(bn.beta.value, kept);
  bn.running_mean = slice_vec(bn.running_mean, kept);
  bn.running_var = slice_vec(bn.running_var, kept);
  bn.gamma.grad = Tensor();
  bn.beta.grad = Tensor();
  bn.c = static_cast<int>(kept.size());
  bn.out_mask.clear();
}

}  // namespace

AdaptationModule compact(const AdaptationModule& module) {
  if (!module.plan.has_value())
    throw StateError("compact: module has no pruning plan attached");
  if (module.compacted) return module;

  AdaptationModule out = module;
  const PruningPlan& plan = *module.plan;
  for (size_t i = 0; i < out.stage.blocks.size(); ++i) {
    Block& b = out.stage.blocks[i];
    const std::string prefix = "b" + std::to_string(i) + ".";
    const std::vector<int64_t> kept1 = plan.kept_indices(prefix + "conv1");
    shrink_conv_out(b.conv1, kept1);
    shrink_bn(b.bn1, kept1);
    shrink_conv_in(b.conv2, kept1);
    if (b.bottleneck) {
      const std::vector<int64_t> kept2 = plan.kept_indices(prefix + "conv2");
      shrink_conv_out(b.conv2, kept2);
      shrink_bn(b.bn2, kept2);
      shrink_conv_in(*b.conv3, kept2);
    }
  }
  out.compacted = true;
  return out;
}

std::string PruningPlan::to_text() const {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(magnitude));
  os << "pruning-plan v1\n";
  os << "magnitude " << buf << "\n";
  os << "created_at_epoch " << created_at_epoch << "\n";
  os << "clamped " << (clamped ? 1 : 0) << "\n";
  os << "layers " << scope.size() << "\n";
  for (const std::string& id : scope) {
    const LayerMask& m = masks.at(id);
    os << id << " keep " << m.kept << " of " << m.keep.size() << " :";
    for (size_t c = 0; c < m.keep.size(); ++c)
      if (m.keep[c]) os << " " << c;
    os << "\n";
  }
  return os.str();
}

PruningPlan PruningPlan::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "pruning-plan v1")
    throw IngestionError("not a pruning plan record");
  PruningPlan plan;
  std::string key;
  in >> key >> plan.magnitude;
  if (key != "magnitude") throw IngestionError("plan: expected magnitude");
  in >> key >> plan.created_at_epoch;
  if (key != "created_at_epoch") throw IngestionError("plan: expected created_at_epoch");
  int clamped = 0;
  in >> key >> clamped;
  if (key != "clamped") throw IngestionError("plan: expected clamped");
  plan.clamped = clamped != 0;
  size_t layers = 0;
  in >> key >> layers;
  if (key != "layers") throw IngestionError("plan: expected layers");
  for (size_t i = 0; i < layers; ++i) {
    std::string id, kw_keep, kw_of, colon;
    int64_t kept = 0, total = 0;
    in >> id >> kw_keep >> kept >> kw_of >> total >> colon;
    if (kw_keep != "keep" || kw_of != "of" || colon != ":")
      throw IngestionError("plan: malformed layer line for '" + id + "'");
    LayerMask m;
    m.keep.assign(static_cast<size_t>(total), 0);
    m.kept = kept;
    for (int64_t j = 0; j < kept; ++j) {
      int64_t c;
      in >> c;
      if (!in || c < 0 || c >= total)
        throw IngestionError("plan: bad kept index in '" + id + "'");
      m.keep[static_cast<size_t>(c)] = 1;
    }
    plan.scope.push_back(id);
    plan.masks.emplace(id, std::move(m));
  }
  return plan;
}

}  // namespace pamcl
