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

#include "pamcl/backbone.hpp"

#include <cmath>
#include <unordered_map>

#include "pamcl/errors.hpp"
#include "pamcl/kernels.hpp"

namespace pamcl {

namespace k = kernels;

namespace {

std::vector<BackboneVariant> make_registry() {
  std::vector<BackboneVariant> reg;
  auto add = [&](std::string name, bool bottleneck, std::array<int, 4> blocks,
                 int expansion) {
    BackboneVariant v;
    v.name = std::move(name);
    v.bottleneck = bottleneck;
    v.stage_blocks = blocks;
    v.planes = {64, 128, 256, 512};
    v.expansion = expansion;
    reg.push_back(v);
  };
  add("rn18", false, {2, 2, 2, 2}, 1);
  add("rn34", false, {3, 4, 6, 3}, 1);
  add("rn50", true, {3, 4, 6, 3}, 4);
  add("rn101", true, {3, 4, 23, 3}, 4);
  add("rn152", true, {3, 8, 36, 3}, 4);

  // Narrow desk-scale member: 32x32 inputs, one block per stage.
  BackboneVariant tiny;
  tiny.name = "tiny";
  tiny.bottleneck = false;
  tiny.stage_blocks = {1, 1, 1, 1};
  tiny.planes = {16, 32, 64, 128};
  tiny.expansion = 1;
  tiny.stem_kernel = 3;
  tiny.stem_stride = 1;
  tiny.stem_pad = 1;
  tiny.stem_pool = false;
  tiny.input_size = 32;
  reg.push_back(tiny);
  return reg;
}

const std::vector<BackboneVariant>& registry() {
  static const std::vector<BackboneVariant> reg = make_registry();
  return reg;
}

}  // namespace

const BackboneVariant& backbone_variant(const std::string& name) {
  for (const BackboneVariant& v : registry())
    if (v.name == name) return v;
  throw ConfigError("unknown backbone variant: " + name);
}

std::vector<std::string> backbone_variant_names() {
  std::vector<std::string> names;
  for (const BackboneVariant& v : registry()) names.push_back(v.name);
  return names;
}

Block make_block(bool bottleneck, int in_c, int planes, int stride,
                 int expansion) {
  Block b;
  b.bottleneck = bottleneck;
  const int out_c = planes * expansion;
  if (bottleneck) {
    b.conv1 = Conv2d::make(in_c, planes, 1, 1, 0);
    b.bn1 = BatchNorm2d::make(planes);
    b.conv2 = Conv2d::make(planes, planes, 3, stride, 1);
    b.bn2 = BatchNorm2d::make(planes);
    b.conv3 = Conv2d::make(planes, out_c, 1, 1, 0);
    b.bn3 = BatchNorm2d::make(out_c);
  } else {
    b.conv1 = Conv2d::make(in_c, planes, 3, stride, 1);
    b.bn1 = BatchNorm2d::make(planes);
    b.conv2 = Conv2d::make(planes, out_c, 3, 1, 1);
    b.bn2 = BatchNorm2d::make(out_c);
  }
  if (stride != 1 || in_c != out_c) {
    b.ds_conv = Conv2d::make(in_c, out_c, 1, stride, 0);
    b.ds_bn = BatchNorm2d::make(out_c);
  }
  return b;
}

Stage make_stage(const BackboneVariant& v, int stage_idx) {
  Stage stage;
  const int planes = v.planes[static_cast<size_t>(stage_idx)];
  const int stride = stage_idx == 0 ? 1 : 2;
  int in_c = v.stage_in_channels(stage_idx);
  for (int i = 0; i < v.stage_blocks[static_cast<size_t>(stage_idx)]; ++i) {
    stage.blocks.push_back(
        make_block(v.bottleneck, in_c, planes, i == 0 ? stride : 1, v.expansion));
    in_c = planes * v.expansion;
  }
  return stage;
}

BackboneNet build_backbone(const BackboneVariant& v) {
  BackboneNet net;
  net.variant = v;
  net.stem = Conv2d::make(3, v.planes[0], v.stem_kernel, v.stem_stride, v.stem_pad);
  net.stem_bn = BatchNorm2d::make(v.planes[0]);
  for (int s = 0; s < 4; ++s) net.stages.push_back(make_stage(v, s));
  return net;
}

Tensor BackboneNet::forward(const Tensor& x) const {
  Tensor h = k::relu_forward(stem_bn.forward(stem.forward(x)));
  if (variant.stem_pool) h = k::maxpool_forward(h, 3, 2, 1);
  for (const Stage& s : stages) h = s.forward(h);
  return h;
}

Tensor BackboneNet::forward(const Tensor& x, Cache& cache) {
  Tensor h = stem_bn.forward(stem.forward(x, cache.stem_c), cache.stem_b);
  cache.stem_relu = k::relu_forward(h);
  h = cache.stem_relu;
  if (variant.stem_pool) {
    cache.pool_in_shape = h.shape();
    h = k::maxpool_forward(h, 3, 2, 1, &cache.pool_argmax);
  }
  cache.stage_caches.assign(4, {});
  for (size_t s = 0; s < stages.size(); ++s)
    h = stages[s].forward(h, cache.stage_caches[s]);
  cache.fmap_h = h.dim(2);
  cache.fmap_w = h.dim(3);
  return h;
}

void BackboneNet::backward(const Tensor& dfmap, const Cache& cache) {
  Tensor d = dfmap;
  for (size_t s = stages.size(); s > 0; --s)
    d = stages[s - 1].backward(d, cache.stage_caches[s - 1]);
  if (variant.stem_pool)
    d = k::maxpool_backward(d, cache.pool_argmax, cache.pool_in_shape);
  d = k::relu_backward(d, cache.stem_relu);
  d = stem_bn.backward(d, cache.stem_b);
  stem.backward(d, cache.stem_c);
}

void BackboneNet::collect_params(std::vector<Parameter*>& out) {
  out.push_back(&stem.weight);
  out.push_back(&stem_bn.gamma);
  out.push_back(&stem_bn.beta);
  for (Stage& s : stages) s.collect_params(out);
}

void init_backbone(BackboneNet& net, Rng& rng) {
  std::vector<Parameter*> params;
  net.collect_params(params);
  for (Parameter* p : params) {
    if (p->value.rank() == 4) {
      // He-normal on fan-in.
      const double fan_in =
          static_cast<double>(p->value.dim(1) * p->value.dim(2) * p->value.dim(3));
      const double std = std::sqrt(2.0 / fan_in);
      for (int64_t i = 0; i < p->value.numel(); ++i)
        p->value[i] = static_cast<float>(rng.normal(0.0, std));
    }
    // BN gamma/beta keep their 1/0 defaults.
  }
}

namespace {

void put_bn(StateDict& d, const std::string& prefix, const BatchNorm2d& bn) {
  d[prefix + ".weight"] = bn.gamma.value;
  d[prefix + ".bias"] = bn.beta.value;
  d[prefix + ".running_mean"] = bn.running_mean;
  d[prefix + ".running_var"] = bn.running_var;
}

void put_block(StateDict& d, const std::string& prefix, const Block& b) {
  d[prefix + ".conv1.weight"] = b.conv1.weight.value;
  put_bn(d, prefix + ".bn1", b.bn1);
  d[prefix + ".conv2.weight"] = b.conv2.weight.value;
  put_bn(d, prefix + ".bn2", b.bn2);
  if (b.bottleneck) {
    d[prefix + ".conv3.weight"] = b.conv3->weight.value;
    put_bn(d, prefix + ".bn3", *b.bn3);
  }
  if (b.ds_conv) {
    d[prefix + ".downsample.0.weight"] = b.ds_conv->weight.value;
    put_bn(d, prefix + ".downsample.1", *b.ds_bn);
  }
}

const Tensor& fetch(const StateDict& dict, const std::string& key,
                    const std::vector<int64_t>& want_shape) {
  auto it = dict.find(key);
  if (it == dict.end())
    throw StructuralError("checkpoint missing tensor '" + key + "'");
  if (it->second.shape() != want_shape) {
    Tensor want(want_shape);
    throw StructuralError("checkpoint tensor '" + key + "' has shape " +
                          it->second.shape_str() + ", expected " +
                          want.shape_str());
  }
  return it->second;
}

void get_bn(const StateDict& d, const std::string& prefix, BatchNorm2d& bn) {
  bn.gamma.value = fetch(d, prefix + ".weight", bn.gamma.value.shape());
  bn.beta.value = fetch(d, prefix + ".bias", bn.beta.value.shape());
  bn.running_mean = fetch(d, prefix + ".running_mean", bn.running_mean.shape());
  bn.running_var = fetch(d, prefix + ".running_var", bn.running_var.shape());
}

void get_block(const StateDict& d, const std::string& prefix, Block& b) {
  b.conv1.weight.value = fetch(d, prefix + ".conv1.weight", b.conv1.weight.value.shape());
  get_bn(d, prefix + ".bn1", b.bn1);
  b.conv2.weight.value = fetch(d, prefix + ".conv2.weight", b.conv2.weight.value.shape());
  get_bn(d, prefix + ".bn2", b.bn2);
  if (b.bottleneck) {
    b.conv3->weight.value = fetch(d, prefix + ".conv3.weight", b.conv3->weight.value.shape());
    get_bn(d, prefix + ".bn3", *b.bn3);
  }
  if (b.ds_conv) {
    b.ds_conv->weight.value =
        fetch(d, prefix + ".downsample.0.weight", b.ds_conv->weight.value.shape());
    get_bn(d, prefix + ".downsample.1", *b.ds_bn);
  }
}

}  // namespace

StateDict backbone_state_dict(const BackboneNet& net) {
  StateDict d;
  d["conv1.weight"] = net.stem.weight.value;
  put_bn(d, "bn1", net.stem_bn);
  for (size_t s = 0; s < net.stages.size(); ++s)
    for (size_t i = 0; i < net.stages[s].blocks.size(); ++i)
      put_block(d, "layer" + std::to_string(s + 1) + "." + std::to_string(i),
                net.stages[s].blocks[i]);
  return d;
}

void load_backbone_state(BackboneNet& net, const StateDict& dict) {
  net.stem.weight.value = fetch(dict, "conv1.weight", net.stem.weight.value.shape());
  get_bn(dict, "bn1", net.stem_bn);
  for (size_t s = 0; s < net.stages.size(); ++s)
    for (size_t i = 0; i < net.stages[s].blocks.size(); ++i)
      get_block(dict, "layer" + std::to_string(s + 1) + "." + std::to_string(i),
                net.stages[s].blocks[i]);
}

std::vector<std::pair<std::string, std::vector<int64_t>>> backbone_layout(
    const BackboneVariant& v) {
  BackboneNet net = build_backbone(v);
  StateDict d = backbone_state_dict(net);
  std::vector<std::pair<std::string, std::vector<int64_t>>> out;
  out.reserve(d.size());
  for (const auto& [name, t] : d) out.emplace_back(name, t.shape());
  return out;
}

StateDict stage_state_dict(const Stage& stage, const std::string& prefix) {
  StateDict d;
  for (size_t i = 0; i < stage.blocks.size(); ++i)
    put_block(d, prefix + std::to_string(i), stage.blocks[i]);
  return d;
}

void load_stage_state(Stage& stage, const StateDict& dict,
                      const std::string& prefix) {
  for (size_t i = 0; i < stage.blocks.size(); ++i)
    get_block(dict, prefix + std::to_string(i), stage.blocks[i]);
}

}  // namespace pamcl
