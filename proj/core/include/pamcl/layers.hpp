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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pamcl/tensor.hpp"

namespace pamcl {

struct Parameter {
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void ensure_grad() {
    if (!grad.same_shape(value)) grad = Tensor(value.shape());
  }
  void zero_grad() {
    ensure_grad();
    grad.zero();
  }
};

/// 2-D convolution without bias (the backbone family keeps bias in BN).
/// Plain forward() is const and cache-free; the cached overload feeds
/// backward(). An optional out-channel keep-mask zeroes dropped channels in
/// both directions, so values stored in dropped weights can never leak into
/// activations or gradients.
struct Conv2d {
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
  Parameter weight;
  std::vector<uint8_t> out_mask;  // empty = dense

  static Conv2d make(int in_c, int out_c, int k, int stride, int pad);

  struct Cache {
    Tensor x;
  };

  Tensor forward(const Tensor& x) const;
  Tensor forward(const Tensor& x, Cache& cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
};

struct BatchNorm2d {
  int c = 0;
  float eps = 1e-5f;
  float momentum = 0.1f;
  Parameter gamma, beta;
  Tensor running_mean, running_var;
  std::vector<uint8_t> out_mask;

  static BatchNorm2d make(int c);

  struct Cache {
    Tensor x, save_mean, save_invstd;
  };

  /// Eval mode: fixed running statistics.
  Tensor forward(const Tensor& x) const;
  /// Train mode: batch statistics; updates running stats.
  Tensor forward(const Tensor& x, Cache& cache);
  Tensor backward(const Tensor& dy, const Cache& cache);
};

struct Linear {
  int in_dim = 0, rows = 0;
  Parameter weight;  // [rows, in_dim]
  Parameter bias;    // [rows]

  static Linear make(int in_dim, int rows);

  struct Cache {
    Tensor x;
  };

  Tensor forward(const Tensor& x) const;
  Tensor forward(const Tensor& x, Cache& cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
};

/// One residual block; covers both the two-conv and the 1x1/3x3/1x1 form
/// as a single value type so modules clone and serialize by plain copy.
struct Block {
  bool bottleneck = false;
  Conv2d conv1, conv2;
  BatchNorm2d bn1, bn2;
  std::optional<Conv2d> conv3;
  std::optional<BatchNorm2d> bn3;
  std::optional<Conv2d> ds_conv;
  std::optional<BatchNorm2d> ds_bn;

  struct Cache {
    Tensor x;
    Conv2d::Cache c1, c2, c3, ds;
    BatchNorm2d::Cache b1, b2, b3, dsb;
    Tensor r1, r2;  // post-relu activations inside the block
    Tensor y;       // block output (post final relu)
  };

  Tensor forward(const Tensor& x) const;
  Tensor forward(const Tensor& x, Cache& cache);
  Tensor backward(const Tensor& dy, const Cache& cache);

  void collect_params(std::vector<Parameter*>& out);
  void set_trainable(bool on);
  int64_t param_count() const;
};

/// A sequence of residual blocks (one backbone stage).
struct Stage {
  std::vector<Block> blocks;

  Tensor forward(const Tensor& x) const;
  Tensor forward(const Tensor& x, std::vector<Block::Cache>& caches);
  Tensor backward(const Tensor& dy, const std::vector<Block::Cache>& caches);

  void collect_params(std::vector<Parameter*>& out);
  void set_trainable(bool on);
  int64_t param_count() const;
};

class Adam {
public:
  Adam(std::vector<Parameter*> params, float lr, float beta1 = 0.9f,
       float beta2 = 0.999f, float eps = 1e-8f);

  void zero_grad();
  void step();
  float lr() const { return lr_; }

private:
  struct Slot {
    Parameter* p;
    Tensor m, v;
  };
  std::vector<Slot> slots_;
  float lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
};

}  // namespace pamcl
