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
#include <vector>

#include "pamcl/tensor.hpp"

// Stateless numerical kernels. Layer objects in layers.hpp wrap these with
// parameters and caches; keeping the math free-standing makes each piece
// independently testable (finite differences) and safe to call concurrently.

namespace pamcl::kernels {

/// x [N,Cin,H,W] * w [Cout,Cin,kh,kw] -> y [N,Cout,Ho,Wo]. No bias.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, int stride, int pad);

/// dL/dx given dL/dy. in_h/in_w are the forward input's spatial dims.
Tensor conv2d_backward_input(const Tensor& dy, const Tensor& w, int stride,
                             int pad, int64_t in_h, int64_t in_w);

/// Accumulates dL/dw into dw (must already have w's shape).
void conv2d_backward_weight(const Tensor& dy, const Tensor& x, int stride,
                            int pad, Tensor& dw);

int64_t conv_out_dim(int64_t in, int k, int stride, int pad);

/// Per-channel batch norm over NCHW.
/// Eval mode: y = gamma * (x - running_mean) / sqrt(running_var + eps) + beta.
Tensor bn_forward_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Tensor& running_mean, const Tensor& running_var,
                       float eps);

/// Train mode: normalizes with batch statistics, updates running stats in
/// place, and saves batch mean / inv-std for the backward pass.
Tensor bn_forward_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        Tensor& running_mean, Tensor& running_var,
                        float momentum, float eps, Tensor& save_mean,
                        Tensor& save_invstd);

/// Backward of train-mode BN. Accumulates dgamma/dbeta, returns dx.
Tensor bn_backward_train(const Tensor& dy, const Tensor& x, const Tensor& gamma,
                         const Tensor& save_mean, const Tensor& save_invstd,
                         Tensor& dgamma, Tensor& dbeta);

Tensor relu_forward(const Tensor& x);
/// dx = dy where y > 0. `y` is the forward output.
Tensor relu_backward(const Tensor& dy, const Tensor& y);

/// 3x3 stride-2 pad-1 style max pooling (generic k/stride/pad).
Tensor maxpool_forward(const Tensor& x, int k, int stride, int pad,
                       std::vector<int64_t>* argmax = nullptr);
Tensor maxpool_backward(const Tensor& dy, const std::vector<int64_t>& argmax,
                        const std::vector<int64_t>& in_shape);

/// Global average pooling NCHW -> [N,C].
Tensor gap_forward(const Tensor& x);
Tensor gap_backward(const Tensor& dy, int64_t h, int64_t w);

/// y = x * W^T + b with x [N,d], W [rows,d], b [rows].
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor linear_backward(const Tensor& dy, const Tensor& x, const Tensor& w,
                       Tensor& dw, Tensor& db);

/// Row-wise softmax with max subtraction, [N,K] -> [N,K].
Tensor softmax_rows(const Tensor& logits);

/// Mean cross-entropy over the batch; targets index logits columns.
/// dlogits (optional out) = (softmax - onehot) / N.
float cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                    Tensor* dlogits = nullptr);

/// Temperature-softened KL(teacher || student), mean over the batch.
/// dstudent (optional out) gets the gradient wrt student logits.
float distillation_kl(const Tensor& student_logits, const Tensor& teacher_logits,
                      float temperature, Tensor* dstudent = nullptr);

/// Zeroes channel c of every sample where keep[c] == 0 (NCHW or [N,C]).
void mask_channels(Tensor& x, const std::vector<uint8_t>& keep);

}  // namespace pamcl::kernels
