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

#include "pamcl/kernels.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>

#include "pamcl/errors.hpp"

namespace pamcl::kernels {

using RowMat =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

int64_t conv_out_dim(int64_t in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

namespace {

// col is [Cin*k*k, Ho*Wo] row-major for one image.
void im2col(const float* x, int64_t c_in, int64_t h, int64_t w, int k,
            int stride, int pad, int64_t ho, int64_t wo, float* col) {
  const int64_t out_area = ho * wo;
  for (int64_t c = 0; c < c_in; ++c) {
    const float* xc = x + c * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        float* row = col + ((c * k + ki) * k + kj) * out_area;
        for (int64_t oi = 0; oi < ho; ++oi) {
          const int64_t ii = oi * stride - pad + ki;
          float* dst = row + oi * wo;
          if (ii < 0 || ii >= h) {
            std::fill(dst, dst + wo, 0.0f);
            continue;
          }
          const float* src = xc + ii * w;
          for (int64_t oj = 0; oj < wo; ++oj) {
            const int64_t jj = oj * stride - pad + kj;
            dst[oj] = (jj >= 0 && jj < w) ? src[jj] : 0.0f;
          }
        }
      }
    }
  }
}

// Scatter-add of col back into an image (gradient of im2col).
void col2im_add(const float* col, int64_t c_in, int64_t h, int64_t w, int k,
                int stride, int pad, int64_t ho, int64_t wo, float* x) {
  const int64_t out_area = ho * wo;
  for (int64_t c = 0; c < c_in; ++c) {
    float* xc = x + c * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const float* row = col + ((c * k + ki) * k + kj) * out_area;
        for (int64_t oi = 0; oi < ho; ++oi) {
          const int64_t ii = oi * stride - pad + ki;
          if (ii < 0 || ii >= h) continue;
          const float* src = row + oi * wo;
          float* dst = xc + ii * w;
          for (int64_t oj = 0; oj < wo; ++oj) {
            const int64_t jj = oj * stride - pad + kj;
            if (jj >= 0 && jj < w) dst[jj] += src[oj];
          }
        }
      }
    }
  }
}

void check_conv_args(const Tensor& x, const Tensor& w) {
  if (x.rank() != 4 || w.rank() != 4)
    throw InputError("conv2d: expected 4-D input and weight");
  if (x.dim(1) != w.dim(1))
    throw StructuralError("conv2d: input channels " + std::to_string(x.dim(1)) +
                          " != weight in-channels " + std::to_string(w.dim(1)));
  if (w.dim(2) != w.dim(3)) throw StructuralError("conv2d: non-square kernel");
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, int stride, int pad) {
  check_conv_args(x, w);
  const int64_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t c_out = w.dim(0);
  const int k = static_cast<int>(w.dim(2));
  const int64_t ho = conv_out_dim(h, k, stride, pad);
  const int64_t wo = conv_out_dim(wd, k, stride, pad);
  if (ho <= 0 || wo <= 0) throw InputError("conv2d: output would be empty");

  Tensor y({n, c_out, ho, wo});
  const int64_t col_rows = c_in * k * k;
  const int64_t out_area = ho * wo;
  std::vector<float> col(static_cast<size_t>(col_rows * out_area));
  ConstMapMat wm(w.ptr(), c_out, col_rows);
  for (int64_t i = 0; i < n; ++i) {
    im2col(x.ptr() + i * c_in * h * wd, c_in, h, wd, k, stride, pad, ho, wo,
           col.data());
    ConstMapMat cm(col.data(), col_rows, out_area);
    MapMat ym(y.ptr() + i * c_out * out_area, c_out, out_area);
    ym.noalias() = wm * cm;
  }
  return y;
}

Tensor conv2d_backward_input(const Tensor& dy, const Tensor& w, int stride,
                             int pad, int64_t in_h, int64_t in_w) {
  const int64_t n = dy.dim(0), c_out = dy.dim(1), ho = dy.dim(2), wo = dy.dim(3);
  const int64_t c_in = w.dim(1);
  const int k = static_cast<int>(w.dim(2));
  const int64_t col_rows = c_in * k * k;
  const int64_t out_area = ho * wo;

  Tensor dx({n, c_in, in_h, in_w});
  std::vector<float> col(static_cast<size_t>(col_rows * out_area));
  ConstMapMat wm(w.ptr(), c_out, col_rows);
  for (int64_t i = 0; i < n; ++i) {
    ConstMapMat dym(dy.ptr() + i * c_out * out_area, c_out, out_area);
    MapMat cm(col.data(), col_rows, out_area);
    cm.noalias() = wm.transpose() * dym;
    col2im_add(col.data(), c_in, in_h, in_w, k, stride, pad, ho, wo,
               dx.ptr() + i * c_in * in_h * in_w);
  }
  return dx;
}

void conv2d_backward_weight(const Tensor& dy, const Tensor& x, int stride,
                            int pad, Tensor& dw) {
  const int64_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t c_out = dy.dim(1), ho = dy.dim(2), wo = dy.dim(3);
  const int k = static_cast<int>(dw.dim(2));
  const int64_t col_rows = c_in * k * k;
  const int64_t out_area = ho * wo;

  std::vector<float> col(static_cast<size_t>(col_rows * out_area));
  MapMat dwm(dw.ptr(), c_out, col_rows);
  for (int64_t i = 0; i < n; ++i) {
    im2col(x.ptr() + i * c_in * h * wd, c_in, h, wd, k, stride, pad, ho, wo,
           col.data());
    ConstMapMat cm(col.data(), col_rows, out_area);
    ConstMapMat dym(dy.ptr() + i * c_out * out_area, c_out, out_area);
    dwm.noalias() += dym * cm.transpose();
  }
}

Tensor bn_forward_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Tensor& running_mean, const Tensor& running_var,
                       float eps) {
  const int64_t n = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
  Tensor y(x.shape());
  for (int64_t ch = 0; ch < c; ++ch) {
    const float istd = 1.0f / std::sqrt(running_var[ch] + eps);
    const float scale = gamma[ch] * istd;
    const float shift = beta[ch] - running_mean[ch] * scale;
    for (int64_t i = 0; i < n; ++i) {
      const float* xs = x.ptr() + (i * c + ch) * area;
      float* ys = y.ptr() + (i * c + ch) * area;
      for (int64_t j = 0; j < area; ++j) ys[j] = xs[j] * scale + shift;
    }
  }
  return y;
}

Tensor bn_forward_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        Tensor& running_mean, Tensor& running_var,
                        float momentum, float eps, Tensor& save_mean,
                        Tensor& save_invstd) {
  const int64_t n = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
  const int64_t cnt = n * area;
  if (cnt == 0) throw InputError("bn_forward_train: empty batch");
  save_mean = Tensor({c});
  save_invstd = Tensor({c});
  Tensor y(x.shape());
  for (int64_t ch = 0; ch < c; ++ch) {
    double sum = 0.0, sq = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const float* xs = x.ptr() + (i * c + ch) * area;
      for (int64_t j = 0; j < area; ++j) {
        sum += xs[j];
        sq += static_cast<double>(xs[j]) * xs[j];
      }
    }
    const double mean = sum / static_cast<double>(cnt);
    const double var = std::max(0.0, sq / static_cast<double>(cnt) - mean * mean);
    save_mean[ch] = static_cast<float>(mean);
    const float istd = 1.0f / std::sqrt(static_cast<float>(var) + eps);
    save_invstd[ch] = istd;

    // Running stats keep the unbiased variance estimate.
    const double unbiased =
        cnt > 1 ? var * static_cast<double>(cnt) / static_cast<double>(cnt - 1)
                : var;
    running_mean[ch] = (1.0f - momentum) * running_mean[ch] +
                       momentum * static_cast<float>(mean);
    running_var[ch] = (1.0f - momentum) * running_var[ch] +
                      momentum * static_cast<float>(unbiased);

    const float scale = gamma[ch] * istd;
    const float shift = beta[ch] - static_cast<float>(mean) * scale;
    for (int64_t i = 0; i < n; ++i) {
      const float* xs = x.ptr() + (i * c + ch) * area;
      float* ys = y.ptr() + (i * c + ch) * area;
      for (int64_t j = 0; j < area; ++j) ys[j] = xs[j] * scale + shift;
    }
  }
  return y;
}

Tensor bn_backward_train(const Tensor& dy, const Tensor& x, const Tensor& gamma,
                         const Tensor& save_mean, const Tensor& save_invstd,
                         Tensor& dgamma, Tensor& dbeta) {
  const int64_t n = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
  const double cnt = static_cast<double>(n * area);
  Tensor dx(x.shape());
  for (int64_t ch = 0; ch < c; ++ch) {
    const float mean = save_mean[ch];
    const float istd = save_invstd[ch];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const float* xs = x.ptr() + (i * c + ch) * area;
      const float* dys = dy.ptr() + (i * c + ch) * area;
      for (int64_t j = 0; j < area; ++j) {
        sum_dy += dys[j];
        sum_dy_xhat += static_cast<double>(dys[j]) * (xs[j] - mean) * istd;
      }
    }
    dbeta[ch] += static_cast<float>(sum_dy);
    dgamma[ch] += static_cast<float>(sum_dy_xhat);

    const float k1 = gamma[ch] * istd;
    const float m_dy = static_cast<float>(sum_dy / cnt);
    const float m_dy_xhat = static_cast<float>(sum_dy_xhat / cnt);
    for (int64_t i = 0; i < n; ++i) {
      const float* xs = x.ptr() + (i * c + ch) * area;
      const float* dys = dy.ptr() + (i * c + ch) * area;
      float* dxs = dx.ptr() + (i * c + ch) * area;
      for (int64_t j = 0; j < area; ++j) {
        const float xhat = (xs[j] - mean) * istd;
        dxs[j] = k1 * (dys[j] - m_dy - xhat * m_dy_xhat);
      }
    }
  }
  return dx;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return y;
}

Tensor relu_backward(const Tensor& dy, const Tensor& y) {
  Tensor dx(dy.shape());
  for (int64_t i = 0; i < dy.numel(); ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
  return dx;
}

Tensor maxpool_forward(const Tensor& x, int k, int stride, int pad,
                       std::vector<int64_t>* argmax) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = conv_out_dim(h, k, stride, pad);
  const int64_t wo = conv_out_dim(w, k, stride, pad);
  Tensor y({n, c, ho, wo});
  if (argmax) argmax->assign(static_cast<size_t>(y.numel()), -1);
  int64_t out_idx = 0;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const float* xs = x.ptr() + (i * c + ch) * h * w;
      for (int64_t oi = 0; oi < ho; ++oi) {
        for (int64_t oj = 0; oj < wo; ++oj, ++out_idx) {
          float best = -std::numeric_limits<float>::infinity();
          int64_t best_idx = -1;
          for (int ki = 0; ki < k; ++ki) {
            const int64_t ii = oi * stride - pad + ki;
            if (ii < 0 || ii >= h) continue;
            for (int kj = 0; kj < k; ++kj) {
              const int64_t jj = oj * stride - pad + kj;
              if (jj < 0 || jj >= w) continue;
              const float v = xs[ii * w + jj];
              if (v > best) {
                best = v;
                best_idx = (i * c + ch) * h * w + ii * w + jj;
              }
            }
          }
          y[out_idx] = best_idx >= 0 ? best : 0.0f;
          if (argmax) (*argmax)[static_cast<size_t>(out_idx)] = best_idx;
        }
      }
    }
  }
  return y;
}

Tensor maxpool_backward(const Tensor& dy, const std::vector<int64_t>& argmax,
                        const std::vector<int64_t>& in_shape) {
  Tensor dx(in_shape);
  for (int64_t i = 0; i < dy.numel(); ++i) {
    const int64_t src = argmax[static_cast<size_t>(i)];
    if (src >= 0) dx[src] += dy[i];
  }
  return dx;
}

Tensor gap_forward(const Tensor& x) {
  const int64_t n = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const float* xs = x.ptr() + (i * c + ch) * area;
      double s = 0.0;
      for (int64_t j = 0; j < area; ++j) s += xs[j];
      y.at2(i, ch) = static_cast<float>(s / static_cast<double>(area));
    }
  }
  return y;
}

Tensor gap_backward(const Tensor& dy, int64_t h, int64_t w) {
  const int64_t n = dy.dim(0), c = dy.dim(1);
  Tensor dx({n, c, h, w});
  const float inv = 1.0f / static_cast<float>(h * w);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const float g = dy.at2(i, ch) * inv;
      float* dxs = dx.ptr() + (i * c + ch) * h * w;
      for (int64_t j = 0; j < h * w; ++j) dxs[j] = g;
    }
  return dx;
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int64_t n = x.dim(0), d = x.dim(1), rows = w.dim(0);
  if (w.dim(1) != d) throw StructuralError("linear: weight/input dim mismatch");
  Tensor y({n, rows});
  ConstMapMat xm(x.ptr(), n, d);
  ConstMapMat wm(w.ptr(), rows, d);
  MapMat ym(y.ptr(), n, rows);
  ym.noalias() = xm * wm.transpose();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t r = 0; r < rows; ++r) y.at2(i, r) += b[r];
  return y;
}

Tensor linear_backward(const Tensor& dy, const Tensor& x, const Tensor& w,
                       Tensor& dw, Tensor& db) {
  const int64_t n = x.dim(0), d = x.dim(1), rows = w.dim(0);
  Tensor dx({n, d});
  ConstMapMat dym(dy.ptr(), n, rows);
  ConstMapMat xm(x.ptr(), n, d);
  ConstMapMat wm(w.ptr(), rows, d);
  MapMat dxm(dx.ptr(), n, d);
  MapMat dwm(dw.ptr(), rows, d);
  dxm.noalias() = dym * wm;
  dwm.noalias() += dym.transpose() * xm;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t r = 0; r < rows; ++r) db[r] += dy.at2(i, r);
  return dx;
}

Tensor softmax_rows(const Tensor& logits) {
  const int64_t n = logits.dim(0), k = logits.dim(1);
  Tensor p(logits.shape());
  for (int64_t i = 0; i < n; ++i) {
    const float* row = logits.ptr() + i * k;
    float* out = p.ptr() + i * k;
    float mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    std::vector<double> e(static_cast<size_t>(k));
    for (int64_t j = 0; j < k; ++j) {
      e[static_cast<size_t>(j)] =
          std::exp(static_cast<double>(row[j]) - static_cast<double>(mx));
      denom += e[static_cast<size_t>(j)];
    }
    for (int64_t j = 0; j < k; ++j)
      out[j] = static_cast<float>(e[static_cast<size_t>(j)] / denom);
  }
  return p;
}

float cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                    Tensor* dlogits) {
  const int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != n)
    throw InputError("cross_entropy: target count != batch size");
  double loss = 0.0;
  Tensor p = softmax_rows(logits);
  for (int64_t i = 0; i < n; ++i) {
    const int t = targets[static_cast<size_t>(i)];
    if (t < 0 || t >= k) throw InputError("cross_entropy: target out of range");
    const float* row = logits.ptr() + i * k;
    float mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double lse = 0.0;
    for (int64_t j = 0; j < k; ++j) lse += std::exp(static_cast<double>(row[j]) - mx);
    loss += std::log(lse) + mx - row[t];
  }
  if (dlogits) {
    *dlogits = p;
    const float inv_n = 1.0f / static_cast<float>(n);
    for (int64_t i = 0; i < n; ++i) {
      float* row = dlogits->ptr() + i * k;
      row[targets[static_cast<size_t>(i)]] -= 1.0f;
      for (int64_t j = 0; j < k; ++j) row[j] *= inv_n;
    }
  }
  return static_cast<float>(loss / static_cast<double>(n));
}

float distillation_kl(const Tensor& student_logits, const Tensor& teacher_logits,
                      float temperature, Tensor* dstudent) {
  if (!student_logits.same_shape(teacher_logits))
    throw InputError("distillation_kl: logit shape mismatch");
  if (!(temperature > 0.0f))
    throw InputError("distillation_kl: temperature must be positive");
  const int64_t n = student_logits.dim(0), k = student_logits.dim(1);

  Tensor s_scaled(student_logits.shape()), t_scaled(teacher_logits.shape());
  const float inv_t = 1.0f / temperature;
  for (int64_t i = 0; i < student_logits.numel(); ++i) {
    s_scaled[i] = student_logits[i] * inv_t;
    t_scaled[i] = teacher_logits[i] * inv_t;
  }
  Tensor qs = softmax_rows(s_scaled);
  Tensor qt = softmax_rows(t_scaled);

  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < k; ++j) {
      const double p = qt.at2(i, j);
      if (p > 0.0) {
        const double q = std::max(static_cast<double>(qs.at2(i, j)), 1e-30);
        loss += p * (std::log(p) - std::log(q));
      }
    }
  }
  if (dstudent) {
    *dstudent = Tensor(student_logits.shape());
    const float scale = 1.0f / (static_cast<float>(n) * temperature);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < k; ++j)
        dstudent->at2(i, j) = (qs.at2(i, j) - qt.at2(i, j)) * scale;
  }
  return static_cast<float>(loss / static_cast<double>(n));
}

void mask_channels(Tensor& x, const std::vector<uint8_t>& keep) {
  const int64_t n = x.dim(0), c = x.dim(1);
  const int64_t area = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  if (static_cast<int64_t>(keep.size()) != c)
    throw StructuralError("mask_channels: mask size != channel count");
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch)
      if (!keep[static_cast<size_t>(ch)]) {
        float* xs = x.ptr() + (i * c + ch) * area;
        std::fill(xs, xs + area, 0.0f);
      }
}

}  // namespace pamcl::kernels
