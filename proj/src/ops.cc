// Copyright 2026 The kws-tcanet Authors. All Rights Reserved.
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

#include "kws/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace kws {
inline namespace KWS_PRECISION_NS {
namespace {

Tensor MakeOutput(Shape shape, bool tracked) {
  return Tensor(std::move(shape), tracked);
}

void CheckRank(const Tensor& t, std::size_t rank, const char* what) {
  KWS_CHECK(t.defined(), what, " is undefined");
  KWS_CHECK(t.rank() == rank, what, " must have rank ", rank, ", got ",
            ShapeString(t.shape()));
}

void AddInto(std::span<Real> dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += static_cast<Real>(src[i]);
}

}  // namespace

std::size_t ConvOutputLength(std::size_t length, std::size_t stride) {
  return (length + stride - 1) / stride;
}

Tensor Conv1d(Tape& tape, const Tensor& x, const Tensor& weight,
              const Tensor& bias, std::size_t stride) {
  CheckRank(x, 3, "conv1d input");
  CheckRank(weight, 3, "conv1d weight");
  const std::size_t batch = x.dim(0), frames = x.dim(1), cin = x.dim(2);
  const std::size_t taps = weight.dim(0), cout = weight.dim(2);
  KWS_CHECK(weight.dim(1) == cin, "conv1d input has ", cin,
            " channels but weight expects ", weight.dim(1));
  KWS_CHECK(taps % 2 == 1, "conv1d kernel size must be odd, got ", taps);
  KWS_CHECK(stride >= 1, "conv1d stride must be positive");
  KWS_CHECK(!bias.defined() || bias.numel() == cout, "conv1d bias size");
  const std::size_t out_frames = ConvOutputLength(frames, stride);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(taps / 2);

  const bool tracked = tape.ShouldRecord({&x, &weight, &bias});
  Tensor out = MakeOutput({batch, out_frames, cout}, tracked);
  const Real* xd = x.data().data();
  const Real* wd = weight.data().data();
  Real* od = out.data().data();
  std::vector<double> acc(cout);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < out_frames; ++t) {
      for (std::size_t o = 0; o < cout; ++o) {
        acc[o] = bias.defined() ? static_cast<double>(bias[o]) : 0.0;
      }
      for (std::size_t k = 0; k < taps; ++k) {
        const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t * stride + k) - pad;
        if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(frames)) continue;
        const Real* xrow = xd + (b * frames + ti) * cin;
        const Real* wk = wd + k * cin * cout;
        for (std::size_t c = 0; c < cin; ++c) {
          const double xv = xrow[c];
          const Real* wrow = wk + c * cout;
          for (std::size_t o = 0; o < cout; ++o) acc[o] += xv * wrow[o];
        }
      }
      Real* orow = od + (b * out_frames + t) * cout;
      for (std::size_t o = 0; o < cout; ++o) orow[o] = static_cast<Real>(acc[o]);
    }
  }
  if (!tracked) return out;

  tape.Record(out, [=]() mutable {
    const Real* g = out.grad().data();
    const Real* xd = x.data().data();
    const Real* wd = weight.data().data();
    if (x.requires_grad()) {
      Real* dx = x.mutable_grad().data();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < out_frames; ++t) {
          const Real* grow = g + (b * out_frames + t) * cout;
          for (std::size_t k = 0; k < taps; ++k) {
            const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t * stride + k) - pad;
            if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(frames)) continue;
            Real* dxrow = dx + (b * frames + ti) * cin;
            const Real* wk = wd + k * cin * cout;
            for (std::size_t c = 0; c < cin; ++c) {
              const Real* wrow = wk + c * cout;
              double s = 0.0;
              for (std::size_t o = 0; o < cout; ++o) s += static_cast<double>(grow[o]) * wrow[o];
              dxrow[c] += static_cast<Real>(s);
            }
          }
        }
      }
    }
    if (weight.requires_grad()) {
      std::vector<double> dw(taps * cin * cout, 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < out_frames; ++t) {
          const Real* grow = g + (b * out_frames + t) * cout;
          for (std::size_t k = 0; k < taps; ++k) {
            const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t * stride + k) - pad;
            if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(frames)) continue;
            const Real* xrow = xd + (b * frames + ti) * cin;
            double* dwk = dw.data() + k * cin * cout;
            for (std::size_t c = 0; c < cin; ++c) {
              const double xv = xrow[c];
              double* dwrow = dwk + c * cout;
              for (std::size_t o = 0; o < cout; ++o) dwrow[o] += xv * grow[o];
            }
          }
        }
      }
      AddInto(weight.mutable_grad(), dw);
    }
    if (bias.defined() && bias.requires_grad()) {
      std::vector<double> db(cout, 0.0);
      for (std::size_t r = 0; r < batch * out_frames; ++r) {
        for (std::size_t o = 0; o < cout; ++o) db[o] += g[r * cout + o];
      }
      AddInto(bias.mutable_grad(), db);
    }
  });
  return out;
}

Tensor DepthwiseConv1d(Tape& tape, const Tensor& x, const Tensor& weight,
                       const Tensor& bias) {
  CheckRank(x, 3, "depthwise input");
  CheckRank(weight, 2, "depthwise weight");
  const std::size_t batch = x.dim(0), frames = x.dim(1), channels = x.dim(2);
  const std::size_t taps = weight.dim(0);
  KWS_CHECK(weight.dim(1) == channels, "depthwise input has ", channels,
            " channels but weight expects ", weight.dim(1));
  KWS_CHECK(taps % 2 == 1, "depthwise kernel size must be odd, got ", taps);
  KWS_CHECK(!bias.defined() || bias.numel() == channels, "depthwise bias size");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(taps / 2);
  const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(frames);

  const bool tracked = tape.ShouldRecord({&x, &weight, &bias});
  Tensor out = MakeOutput({batch, frames, channels}, tracked);
  const Real* xd = x.data().data();
  const Real* wd = weight.data().data();
  Real* od = out.data().data();
  std::vector<double> acc(channels);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::ptrdiff_t t = 0; t < len; ++t) {
      for (std::size_t c = 0; c < channels; ++c) {
        acc[c] = bias.defined() ? static_cast<double>(bias[c]) : 0.0;
      }
      for (std::size_t k = 0; k < taps; ++k) {
        const std::ptrdiff_t ti = t + static_cast<std::ptrdiff_t>(k) - pad;
        if (ti < 0 || ti >= len) continue;
        const Real* xrow = xd + (b * frames + ti) * channels;
        const Real* wrow = wd + k * channels;
        for (std::size_t c = 0; c < channels; ++c) acc[c] += static_cast<double>(xrow[c]) * wrow[c];
      }
      Real* orow = od + (b * frames + t) * channels;
      for (std::size_t c = 0; c < channels; ++c) orow[c] = static_cast<Real>(acc[c]);
    }
  }
  if (!tracked) return out;

  tape.Record(out, [=]() mutable {
    const Real* g = out.grad().data();
    const Real* xd = x.data().data();
    const Real* wd = weight.data().data();
    if (x.requires_grad()) {
      Real* dx = x.mutable_grad().data();
      std::vector<double> acc(channels);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::ptrdiff_t ti = 0; ti < len; ++ti) {
          std::fill(acc.begin(), acc.end(), 0.0);
          for (std::size_t k = 0; k < taps; ++k) {
            const std::ptrdiff_t t = ti - static_cast<std::ptrdiff_t>(k) + pad;
            if (t < 0 || t >= len) continue;
            const Real* grow = g + (b * frames + t) * channels;
            const Real* wrow = wd + k * channels;
            for (std::size_t c = 0; c < channels; ++c) acc[c] += static_cast<double>(grow[c]) * wrow[c];
          }
          Real* dxrow = dx + (b * frames + ti) * channels;
          for (std::size_t c = 0; c < channels; ++c) dxrow[c] += static_cast<Real>(acc[c]);
        }
      }
    }
    if (weight.requires_grad()) {
      std::vector<double> dw(taps * channels, 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::ptrdiff_t t = 0; t < len; ++t) {
          const Real* grow = g + (b * frames + t) * channels;
          for (std::size_t k = 0; k < taps; ++k) {
            const std::ptrdiff_t ti = t + static_cast<std::ptrdiff_t>(k) - pad;
            if (ti < 0 || ti >= len) continue;
            const Real* xrow = xd + (b * frames + ti) * channels;
            double* dwrow = dw.data() + k * channels;
            for (std::size_t c = 0; c < channels; ++c) dwrow[c] += static_cast<double>(xrow[c]) * grow[c];
          }
        }
      }
      AddInto(weight.mutable_grad(), dw);
    }
    if (bias.defined() && bias.requires_grad()) {
      std::vector<double> db(channels, 0.0);
      for (std::size_t r = 0; r < batch * frames; ++r) {
        for (std::size_t c = 0; c < channels; ++c) db[c] += g[r * channels + c];
      }
      AddInto(bias.mutable_grad(), db);
    }
  });
  return out;
}

Tensor Linear(Tape& tape, const Tensor& x, const Tensor& weight,
              const Tensor& bias) {
  KWS_CHECK(x.defined() && x.rank() >= 1, "linear input must have rank >= 1");
  CheckRank(weight, 2, "linear weight");
  const std::size_t in = weight.dim(0), outdim = weight.dim(1);
  KWS_CHECK(x.shape().back() == in, "linear input has ", x.shape().back(),
            " features but weight expects ", in);
  KWS_CHECK(!bias.defined() || bias.numel() == outdim, "linear bias size");
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outdim;

  const bool tracked = tape.ShouldRecord({&x, &weight, &bias});
  Tensor out = MakeOutput(out_shape, tracked);
  const Real* xd = x.data().data();
  const Real* wd = weight.data().data();
  Real* od = out.data().data();
  std::vector<double> acc(outdim);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < outdim; ++o) {
      acc[o] = bias.defined() ? static_cast<double>(bias[o]) : 0.0;
    }
    const Real* xrow = xd + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xrow[i];
      if (xv == 0.0) continue;
      const Real* wrow = wd + i * outdim;
      for (std::size_t o = 0; o < outdim; ++o) acc[o] += xv * wrow[o];
    }
    Real* orow = od + r * outdim;
    for (std::size_t o = 0; o < outdim; ++o) orow[o] = static_cast<Real>(acc[o]);
  }
  if (!tracked) return out;

  tape.Record(out, [=]() mutable {
    const Real* g = out.grad().data();
    const Real* xd = x.data().data();
    const Real* wd = weight.data().data();
    if (x.requires_grad()) {
      Real* dx = x.mutable_grad().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* grow = g + r * outdim;
        for (std::size_t i = 0; i < in; ++i) {
          const Real* wrow = wd + i * outdim;
          double s = 0.0;
          for (std::size_t o = 0; o < outdim; ++o) s += static_cast<double>(grow[o]) * wrow[o];
          dx[r * in + i] += static_cast<Real>(s);
        }
      }
    }
    if (weight.requires_grad()) {
      std::vector<double> dw(in * outdim, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* grow = g + r * outdim;
        const Real* xrow = xd + r * in;
        for (std::size_t i = 0; i < in; ++i) {
          const double xv = xrow[i];
          if (xv == 0.0) continue;
          double* dwrow = dw.data() + i * outdim;
          for (std::size_t o = 0; o < outdim; ++o) dwrow[o] += xv * grow[o];
        }
      }
      AddInto(weight.mutable_grad(), dw);
    }
    if (bias.defined() && bias.requires_grad()) {
      std::vector<double> db(outdim, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < outdim; ++o) db[o] += g[r * outdim + o];
      }
      AddInto(bias.mutable_grad(), db);
    }
  });
  return out;
}

Tensor SeparableConv1d(Tape& tape, const Tensor& x, const Tensor& depthwise,
                       const Tensor& depthwise_bias, const Tensor& pointwise,
                       const Tensor& pointwise_bias) {
  CheckRank(pointwise, 2, "pointwise weight");
  KWS_CHECK(pointwise.dim(0) == depthwise.dim(1),
            "pointwise expects ", pointwise.dim(0), " channels, depthwise has ",
            depthwise.dim(1));
  Tensor filtered = DepthwiseConv1d(tape, x, depthwise, depthwise_bias);
  return Linear(tape, filtered, pointwise, pointwise_bias);
}

Tensor BatchNorm(Tape& tape, const Tensor& x, const Tensor& gamma,
                 const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, bool training,
                 const BatchNormOptions& options) {
  CheckRank(x, 3, "batch norm input");
  const std::size_t channels = x.dim(2);
  const std::size_t rows = x.dim(0) * x.dim(1);
  KWS_CHECK(gamma.numel() == channels && beta.numel() == channels,
            "batch norm affine parameters must have ", channels, " entries");
  KWS_CHECK(running_mean.numel() == channels && running_var.numel() == channels,
            "batch norm running statistics must have ", channels, " entries");
  KWS_CHECK(!training || rows >= 2,
            "training-mode batch norm needs at least 2 values per channel");

  const Real* xd = x.data().data();
  std::vector<double> mean(channels, 0.0), var(channels, 0.0);
  if (training) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels; ++c) mean[c] += xd[r * channels + c];
    }
    for (double& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = xd[r * channels + c] - mean[c];
        var[c] += d * d;
      }
    }
    for (double& v : var) v /= static_cast<double>(rows);
    const double m = options.momentum;
    const double unbias = static_cast<double>(rows) / static_cast<double>(rows - 1);
    for (std::size_t c = 0; c < channels; ++c) {
      running_mean[c] = static_cast<Real>((1.0 - m) * running_mean[c] + m * mean[c]);
      running_var[c] = static_cast<Real>((1.0 - m) * running_var[c] + m * var[c] * unbias);
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = running_mean[c];
      var[c] = running_var[c];
    }
  }
  auto inv_std = std::make_shared<std::vector<double>>(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    (*inv_std)[c] = 1.0 / std::sqrt(var[c] + static_cast<double>(options.eps));
  }

  const bool tracked = tape.ShouldRecord({&x, &gamma, &beta});
  Tensor out = MakeOutput(x.shape(), tracked);
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  Real* od = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = r * channels + c;
      const double h = (xd[i] - mean[c]) * (*inv_std)[c];
      (*xhat)[i] = h;
      od[i] = static_cast<Real>(static_cast<double>(gamma[c]) * h + beta[c]);
    }
  }
  if (!tracked) return out;

  tape.Record(out, [=]() mutable {
    const Real* g = out.grad().data();
    std::vector<double> sum_g(channels, 0.0), sum_gh(channels, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = r * channels + c;
        sum_g[c] += g[i];
        sum_gh[c] += g[i] * (*xhat)[i];
      }
    }
    if (x.requires_grad()) {
      Real* dx = x.mutable_grad().data();
      const double n = static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t i = r * channels + c;
          const double scale = static_cast<double>(gamma[c]) * (*inv_std)[c];
          if (training) {
            dx[i] += static_cast<Real>(
                scale * (g[i] - sum_g[c] / n - (*xhat)[i] * sum_gh[c] / n));
          } else {
            dx[i] += static_cast<Real>(scale * g[i]);
          }
        }
      }
    }
    if (gamma.requires_grad()) AddInto(gamma.mutable_grad(), sum_gh);
    if (beta.requires_grad()) AddInto(beta.mutable_grad(), sum_g);
  });
  return out;
}

Tensor Relu(Tape& tape, const Tensor& x) {
  KWS_CHECK(x.defined(), "relu input is undefined");
  const bool tracked = tape.ShouldRecord({&x});
  Tensor out = MakeOutput(x.shape(), tracked);
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] > Real(0) ? xd[i] : Real(0);
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    auto g = out.grad();
    auto xd = x.data();
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xd[i] > Real(0)) dx[i] += g[i];
    }
  });
  return out;
}

Tensor BatchNormRelu(Tape& tape, const Tensor& x, const Tensor& gamma,
                     const Tensor& beta, Tensor& running_mean,
                     Tensor& running_var, bool training,
                     const BatchNormOptions& options) {
  return Relu(tape, BatchNorm(tape, x, gamma, beta, running_mean, running_var,
                              training, options));
}

Tensor MultiHeadAttention(Tape& tape, const Tensor& q, const Tensor& k,
                          const Tensor& v, std::size_t num_heads,
                          double divisor, std::vector<Real>* weights) {
  CheckRank(q, 3, "attention query");
  KWS_CHECK(k.shape() == q.shape() && v.shape() == q.shape(),
            "attention q/k/v shapes differ");
  KWS_CHECK(num_heads >= 1 && q.dim(2) % num_heads == 0, "width ", q.dim(2),
            " is not divisible by ", num_heads, " heads");
  KWS_CHECK(divisor > 0.0, "attention divisor must be positive");
  const std::size_t batch = q.dim(0), frames = q.dim(1), width = q.dim(2);
  const std::size_t head_dim = width / num_heads;

  const bool tracked = tape.ShouldRecord({&q, &k, &v});
  Tensor out = MakeOutput(q.shape(), tracked);
  auto probs = std::make_shared<std::vector<Real>>(batch * num_heads * frames * frames);
  const Real* qd = q.data().data();
  const Real* kd = k.data().data();
  const Real* vd = v.data().data();
  Real* od = out.data().data();
  std::vector<double> row(frames), acc(head_dim);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < num_heads; ++h) {
      const std::size_t off = h * head_dim;
      for (std::size_t i = 0; i < frames; ++i) {
        const Real* qi = qd + (b * frames + i) * width + off;
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < frames; ++j) {
          const Real* kj = kd + (b * frames + j) * width + off;
          double s = 0.0;
          for (std::size_t d = 0; d < head_dim; ++d) s += static_cast<double>(qi[d]) * kj[d];
          row[j] = s / divisor;
          peak = std::max(peak, row[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < frames; ++j) {
          row[j] = std::exp(row[j] - peak);
          total += row[j];
        }
        Real* prow = probs->data() + ((b * num_heads + h) * frames + i) * frames;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < frames; ++j) {
          const double p = row[j] / total;
          prow[j] = static_cast<Real>(p);
          const Real* vj = vd + (b * frames + j) * width + off;
          for (std::size_t d = 0; d < head_dim; ++d) acc[d] += p * vj[d];
        }
        Real* oi = od + (b * frames + i) * width + off;
        for (std::size_t d = 0; d < head_dim; ++d) oi[d] = static_cast<Real>(acc[d]);
      }
    }
  }
  if (weights != nullptr) *weights = *probs;
  if (!tracked) return out;

  tape.Record(out, [=]() mutable {
    const Real* g = out.grad().data();
    const Real* qd = q.data().data();
    const Real* kd = k.data().data();
    const Real* vd = v.data().data();
    std::vector<double> dq(q.numel(), 0.0), dk(k.numel(), 0.0), dv(v.numel(), 0.0);
    std::vector<double> dscore(frames);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < num_heads; ++h) {
        const std::size_t off = h * head_dim;
        for (std::size_t i = 0; i < frames; ++i) {
          const Real* prow = probs->data() + ((b * num_heads + h) * frames + i) * frames;
          const Real* gi = g + (b * frames + i) * width + off;
          double dot = 0.0;
          for (std::size_t j = 0; j < frames; ++j) {
            const Real* vj = vd + (b * frames + j) * width + off;
            double da = 0.0;
            for (std::size_t d = 0; d < head_dim; ++d) da += static_cast<double>(gi[d]) * vj[d];
            dscore[j] = da;
            dot += da * prow[j];
            double* dvj = dv.data() + (b * frames + j) * width + off;
            for (std::size_t d = 0; d < head_dim; ++d) dvj[d] += static_cast<double>(prow[j]) * gi[d];
          }
          const Real* qi = qd + (b * frames + i) * width + off;
          double* dqi = dq.data() + (b * frames + i) * width + off;
          for (std::size_t j = 0; j < frames; ++j) {
            const double ds = prow[j] * (dscore[j] - dot) / divisor;
            if (ds == 0.0) continue;
            const Real* kj = kd + (b * frames + j) * width + off;
            double* dkj = dk.data() + (b * frames + j) * width + off;
            for (std::size_t d = 0; d < head_dim; ++d) {
              dqi[d] += ds * kj[d];
              dkj[d] += ds * qi[d];
            }
          }
        }
      }
    }
    if (q.requires_grad()) AddInto(q.mutable_grad(), dq);
    if (k.requires_grad()) AddInto(k.mutable_grad(), dk);
    if (v.requires_grad()) AddInto(v.mutable_grad(), dv);
  });
  return out;
}

Tensor MeanOverTime(Tape& tape, const Tensor& x) {
  CheckRank(x, 3, "mean-over-time input");
  const std::size_t batch = x.dim(0), frames = x.dim(1), channels = x.dim(2);
  KWS_CHECK(frames >= 1, "mean over zero frames");
  const bool tracked = tape.ShouldRecord({&x});
  Tensor out = MakeOutput({batch, channels}, tracked);
  const Real* xd = x.data().data();
  std::vector<double> acc(channels);
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
      const Real* row = xd + (b * frames + t) * channels;
      for (std::size_t c = 0; c < channels; ++c) acc[c] += row[c];
    }
    for (std::size_t c = 0; c < channels; ++c) {
      out[b * channels + c] = static_cast<Real>(acc[c] / static_cast<double>(frames));
    }
  }
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    auto g = out.grad();
    Real* dx = x.mutable_grad().data();
    const Real inv = Real(1) / static_cast<Real>(frames);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < frames; ++t) {
        Real* row = dx + (b * frames + t) * channels;
        for (std::size_t c = 0; c < channels; ++c) row[c] += g[b * channels + c] * inv;
      }
    }
  });
  return out;
}

Tensor TakeFrames(Tape& tape, const Tensor& x, std::size_t frames) {
  CheckRank(x, 3, "take-frames input");
  KWS_CHECK(frames >= 1 && frames <= x.dim(1), "cannot take ", frames,
            " frames from ", x.dim(1));
  const std::size_t batch = x.dim(0), total = x.dim(1), channels = x.dim(2);
  const bool tracked = tape.ShouldRecord({&x});
  Tensor out = MakeOutput({batch, frames, channels}, tracked);
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(x.data().begin() + b * total * channels, frames * channels,
                out.data().begin() + b * frames * channels);
  }
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    auto g = out.grad();
    auto dx = x.mutable_grad();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < frames * channels; ++i) {
        dx[b * total * channels + i] += g[b * frames * channels + i];
      }
    }
  });
  return out;
}

Tensor Softmax(Tape& tape, const Tensor& logits) {
  CheckRank(logits, 2, "softmax input");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  const bool tracked = tape.ShouldRecord({&logits});
  Tensor out = MakeOutput(logits.shape(), tracked);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = logits.data().data() + r * cols;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) peak = std::max(peak, static_cast<double>(in[c]));
    double total = 0.0;
    std::vector<double> e(cols);
    for (std::size_t c = 0; c < cols; ++c) {
      e[c] = std::exp(in[c] - peak);
      total += e[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = static_cast<Real>(e[c] / total);
  }
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    auto g = out.grad();
    auto p = out.data();
    auto dx = logits.mutable_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += static_cast<double>(g[r * cols + c]) * p[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        dx[i] += static_cast<Real>(p[i] * (g[i] - dot));
      }
    }
  });
  return out;
}

Tensor Add(Tape& tape, const Tensor& a, const Tensor& b) {
  KWS_CHECK(a.shape() == b.shape(), "add shapes differ: ", ShapeString(a.shape()),
            " vs ", ShapeString(b.shape()));
  const bool tracked = tape.ShouldRecord({&a, &b});
  Tensor out = MakeOutput(a.shape(), tracked);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto da = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (b.requires_grad()) {
      auto db = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
    }
  });
  return out;
}

Tensor Mul(Tape& tape, const Tensor& a, const Tensor& b) {
  KWS_CHECK(a.shape() == b.shape(), "mul shapes differ: ", ShapeString(a.shape()),
            " vs ", ShapeString(b.shape()));
  const bool tracked = tape.ShouldRecord({&a, &b});
  Tensor out = MakeOutput(a.shape(), tracked);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto da = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i];
    }
    if (b.requires_grad()) {
      auto db = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i];
    }
  });
  return out;
}

Tensor Scale(Tape& tape, const Tensor& a, Real factor) {
  KWS_CHECK(a.defined(), "scale input is undefined");
  const bool tracked = tape.ShouldRecord({&a});
  Tensor out = MakeOutput(a.shape(), tracked);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * factor;
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    auto g = out.grad();
    auto da = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * factor;
  });
  return out;
}

Tensor Sum(Tape& tape, const Tensor& a) {
  KWS_CHECK(a.defined(), "sum input is undefined");
  const bool tracked = tape.ShouldRecord({&a});
  double total = 0.0;
  for (Real v : a.data()) total += v;
  Tensor out = MakeOutput({}, tracked);
  out[0] = static_cast<Real>(total);
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    const Real g = out.grad()[0];
    for (Real& d : a.mutable_grad()) d += g;
  });
  return out;
}

Tensor WeightedSum(Tape& tape,
                   const std::vector<std::pair<Real, Tensor>>& terms) {
  bool tracked = false;
  double total = 0.0;
  for (const auto& [w, t] : terms) {
    KWS_CHECK(t.defined() && t.numel() == 1, "weighted sum terms must be scalars");
    tracked = tracked || tape.ShouldRecord({&t});
    total += static_cast<double>(w) * t.item();
  }
  Tensor out = MakeOutput({}, tracked);
  out[0] = static_cast<Real>(total);
  if (!tracked) return out;
  tape.Record(out, [=]() mutable {
    const Real g = out.grad()[0];
    for (auto [w, t] : terms) {
      if (t.requires_grad()) t.mutable_grad()[0] += g * w;
    }
  });
  return out;
}

}  // namespace KWS_PRECISION_NS
}  // namespace kws
