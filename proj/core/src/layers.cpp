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

#include "pamcl/layers.hpp"

#include <cmath>

#include "pamcl/errors.hpp"
#include "pamcl/kernels.hpp"

namespace pamcl {

namespace k = kernels;

Conv2d Conv2d::make(int in_c, int out_c, int kk, int stride, int pad) {
  Conv2d conv;
  conv.in_c = in_c;
  conv.out_c = out_c;
  conv.k = kk;
  conv.stride = stride;
  conv.pad = pad;
  conv.weight.value = Tensor({out_c, in_c, kk, kk});
  return conv;
}

Tensor Conv2d::forward(const Tensor& x) const {
  Tensor y = k::conv2d_forward(x, weight.value, stride, pad);
  if (!out_mask.empty()) k::mask_channels(y, out_mask);
  return y;
}

Tensor Conv2d::forward(const Tensor& x, Cache& cache) const {
  cache.x = x;
  return forward(x);
}

Tensor Conv2d::backward(const Tensor& dy, const Cache& cache) {
  Tensor dy_m = dy;
  if (!out_mask.empty()) k::mask_channels(dy_m, out_mask);
  weight.ensure_grad();
  if (weight.trainable)
    k::conv2d_backward_weight(dy_m, cache.x, stride, pad, weight.grad);
  return k::conv2d_backward_input(dy_m, weight.value, stride, pad,
                                  cache.x.dim(2), cache.x.dim(3));
}

BatchNorm2d BatchNorm2d::make(int c) {
  BatchNorm2d bn;
  bn.c = c;
  bn.gamma.value = Tensor::full({c}, 1.0f);
  bn.beta.value = Tensor({c});
  bn.running_mean = Tensor({c});
  bn.running_var = Tensor::full({c}, 1.0f);
  return bn;
}

Tensor BatchNorm2d::forward(const Tensor& x) const {
  Tensor y = k::bn_forward_eval(x, gamma.value, beta.value, running_mean,
                                running_var, eps);
  if (!out_mask.empty()) k::mask_channels(y, out_mask);
  return y;
}

Tensor BatchNorm2d::forward(const Tensor& x, Cache& cache) {
  cache.x = x;
  Tensor y = k::bn_forward_train(x, gamma.value, beta.value, running_mean,
                                 running_var, momentum, eps, cache.save_mean,
                                 cache.save_invstd);
  if (!out_mask.empty()) k::mask_channels(y, out_mask);
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy, const Cache& cache) {
  Tensor dy_m = dy;
  if (!out_mask.empty()) k::mask_channels(dy_m, out_mask);
  gamma.ensure_grad();
  beta.ensure_grad();
  return k::bn_backward_train(dy_m, cache.x, gamma.value, cache.save_mean,
                              cache.save_invstd, gamma.grad, beta.grad);
}

Linear Linear::make(int in_dim, int rows) {
  Linear lin;
  lin.in_dim = in_dim;
  lin.rows = rows;
  lin.weight.value = Tensor({rows, in_dim});
  lin.bias.value = Tensor({rows});
  return lin;
}

Tensor Linear::forward(const Tensor& x) const {
  return k::linear_forward(x, weight.value, bias.value);
}

Tensor Linear::forward(const Tensor& x, Cache& cache) const {
  cache.x = x;
  return forward(x);
}

Tensor Linear::backward(const Tensor& dy, const Cache& cache) {
  weight.ensure_grad();
  bias.ensure_grad();
  return k::linear_backward(dy, cache.x, weight.value, weight.grad, bias.grad);
}

namespace {

Tensor add_tensors(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw StructuralError("residual add: shape mismatch " + a.shape_str() +
                          " vs " + b.shape_str());
  Tensor y(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
  return y;
}

}  // namespace

Tensor Block::forward(const Tensor& x) const {
  Tensor h = bn1.forward(conv1.forward(x));
  h = k::relu_forward(h);
  if (bottleneck) {
    h = k::relu_forward(bn2.forward(conv2.forward(h)));
    h = bn3->forward(conv3->forward(h));
  } else {
    h = bn2.forward(conv2.forward(h));
  }
  Tensor s = ds_conv ? ds_bn->forward(ds_conv->forward(x)) : x;
  return k::relu_forward(add_tensors(h, s));
}

Tensor Block::forward(const Tensor& x, Cache& cache) {
  cache.x = x;
  Tensor h = bn1.forward(conv1.forward(x, cache.c1), cache.b1);
  cache.r1 = k::relu_forward(h);
  if (bottleneck) {
    h = bn2.forward(conv2.forward(cache.r1, cache.c2), cache.b2);
    cache.r2 = k::relu_forward(h);
    h = bn3->forward(conv3->forward(cache.r2, cache.c3), cache.b3);
  } else {
    h = bn2.forward(conv2.forward(cache.r1, cache.c2), cache.b2);
  }
  Tensor s = x;
  if (ds_conv) s = ds_bn->forward(ds_conv->forward(x, cache.ds), cache.dsb);
  cache.y = k::relu_forward(add_tensors(h, s));
  return cache.y;
}

Tensor Block::backward(const Tensor& dy, const Cache& cache) {
  Tensor d = k::relu_backward(dy, cache.y);

  // d splits into the conv branch and the shortcut.
  Tensor dx_shortcut;
  if (ds_conv) {
    Tensor t = ds_bn->backward(d, cache.dsb);
    dx_shortcut = ds_conv->backward(t, cache.ds);
  } else {
    dx_shortcut = d;
  }

  Tensor db;
  if (bottleneck) {
    Tensor t = bn3->backward(d, cache.b3);
    t = conv3->backward(t, cache.c3);
    t = k::relu_backward(t, cache.r2);
    t = bn2.backward(t, cache.b2);
    t = conv2.backward(t, cache.c2);
    t = k::relu_backward(t, cache.r1);
    t = bn1.backward(t, cache.b1);
    db = conv1.backward(t, cache.c1);
  } else {
    Tensor t = bn2.backward(d, cache.b2);
    t = conv2.backward(t, cache.c2);
    t = k::relu_backward(t, cache.r1);
    t = bn1.backward(t, cache.b1);
    db = conv1.backward(t, cache.c1);
  }
  return add_tensors(db, dx_shortcut);
}

void Block::collect_params(std::vector<Parameter*>& out) {
  out.push_back(&conv1.weight);
  out.push_back(&bn1.gamma);
  out.push_back(&bn1.beta);
  out.push_back(&conv2.weight);
  out.push_back(&bn2.gamma);
  out.push_back(&bn2.beta);
  if (bottleneck) {
    out.push_back(&conv3->weight);
    out.push_back(&bn3->gamma);
    out.push_back(&bn3->beta);
  }
  if (ds_conv) {
    out.push_back(&ds_conv->weight);
    out.push_back(&ds_bn->gamma);
    out.push_back(&ds_bn->beta);
  }
}

void Block::set_trainable(bool on) {
  std::vector<Parameter*> ps;
  collect_params(ps);
  for (Parameter* p : ps) p->trainable = on;
}

int64_t Block::param_count() const {
  int64_t n = conv1.weight.value.numel() + conv2.weight.value.numel() +
              bn1.gamma.value.numel() * 2 + bn2.gamma.value.numel() * 2;
  if (bottleneck)
    n += conv3->weight.value.numel() + bn3->gamma.value.numel() * 2;
  if (ds_conv) n += ds_conv->weight.value.numel() + ds_bn->gamma.value.numel() * 2;
  return n;
}

Tensor Stage::forward(const Tensor& x) const {
  Tensor h = x;
  for (const Block& b : blocks) h = b.forward(h);
  return h;
}

Tensor Stage::forward(const Tensor& x, std::vector<Block::Cache>& caches) {
  caches.resize(blocks.size());
  Tensor h = x;
  for (size_t i = 0; i < blocks.size(); ++i) h = blocks[i].forward(h, caches[i]);
  return h;
}

Tensor Stage::backward(const Tensor& dy, const std::vector<Block::Cache>& caches) {
  Tensor d = dy;
  for (size_t i = blocks.size(); i > 0; --i)
    d = blocks[i - 1].backward(d, caches[i - 1]);
  return d;
}

void Stage::collect_params(std::vector<Parameter*>& out) {
  for (Block& b : blocks) b.collect_params(out);
}

void Stage::set_trainable(bool on) {
  for (Block& b : blocks) b.set_trainable(on);
}

int64_t Stage::param_count() const {
  int64_t n = 0;
  for (const Block& b : blocks) n += b.param_count();
  return n;
}

Adam::Adam(std::vector<Parameter*> params, float lr, float beta1, float beta2,
           float eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  slots_.reserve(params.size());
  for (Parameter* p : params) {
    Slot s;
    s.p = p;
    s.m = Tensor(p->value.shape());
    s.v = Tensor(p->value.shape());
    slots_.push_back(std::move(s));
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_) s.p->zero_grad();
}

void Adam::step() {
  ++t_;
  const float bc1 = 1.0f - std::pow(b1_, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(b2_, static_cast<float>(t_));
  for (Slot& s : slots_) {
    if (!s.p->trainable) continue;
    s.p->ensure_grad();
    float* w = s.p->value.ptr();
    const float* g = s.p->grad.ptr();
    float* m = s.m.ptr();
    float* v = s.v.ptr();
    const int64_t n = s.p->value.numel();
    for (int64_t i = 0; i < n; ++i) {
      m[i] = b1_ * m[i] + (1.0f - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0f - b2_) * g[i] * g[i];
      const float mhat = m[i] / bc1;
      const float vhat = v[i] / bc2;
      w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace pamcl
