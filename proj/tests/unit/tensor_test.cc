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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "kws/checkpoint.h"
#include "kws/ops.h"
#include "kws/optim.h"
#include "kws/tensor.h"
#include "test_util.h"

using namespace kws;
using kws::testing::MaxAbsDiff;
using kws::testing::RandomTensor;

namespace {

// Direct sliding-window convolution with symmetric zero padding.
std::vector<double> ConvOracle(const Tensor& x, const Tensor& w, std::size_t stride) {
  const std::size_t B = x.dim(0), T = x.dim(1), Ci = x.dim(2);
  const std::size_t K = w.dim(0), Co = w.dim(2);
  const std::size_t To = (T + stride - 1) / stride;
  const long pad = static_cast<long>(K / 2);
  std::vector<double> out(B * To * Co, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < To; ++t)
      for (std::size_t o = 0; o < Co; ++o) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const long ti = static_cast<long>(t * stride + k) - pad;
          if (ti < 0 || ti >= static_cast<long>(T)) continue;
          for (std::size_t c = 0; c < Ci; ++c) s += x[(b * T + ti) * Ci + c] * w[(k * Ci + c) * Co + o];
        }
        out[(b * To + t) * Co + o] = s;
      }
  return out;
}

}  // namespace

TEST_CASE("conv1d with a one-tap identity kernel is the identity map") {
  Tape tape;
  Tensor x({1, 3, 1}, {1, 0, 0});
  Tensor w({1, 1, 1}, std::vector<Real>{1});
  Tensor y = Conv1d(tape, x, w, Tensor(), 1);
  CHECK(y.shape() == Shape{1, 3, 1});
  CHECK(y[0] == 1);
  CHECK(y[1] == 0);
  CHECK(y[2] == 0);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor xr = RandomTensor({2, 7, 3}, rng);
    Tensor wr({3, 3, 3});  // center tap = identity matrix
    for (std::size_t c = 0; c < 3; ++c) wr[(1 * 3 + c) * 3 + c] = 1;
    Tensor yr = Conv1d(tape, xr, wr, Tensor(), 1);
    CHECK(MaxAbsDiff(yr.data(), xr.data()) == 0.0);
  }
}

TEST_CASE("conv1d all-ones kernel over [1,2,3,4] zero-pads both ends") {
  Tape tape;
  Tensor x({1, 4, 1}, {1, 2, 3, 4});
  Tensor w = Tensor::Full({3, 1, 1}, 1);
  Tensor y = Conv1d(tape, x, w, Tensor(), 1);
  REQUIRE(y.numel() == 4);
  CHECK(y[0] == doctest::Approx(3));
  CHECK(y[1] == doctest::Approx(6));
  CHECK(y[2] == doctest::Approx(9));
  CHECK(y[3] == doctest::Approx(7));
}

TEST_CASE("conv1d stride 2 halves time and matches the sliding-window oracle") {
  Tape tape(false);
  std::mt19937_64 rng(11);
  Tensor x = RandomTensor({2, 100, 40}, rng);
  Tensor w = RandomTensor({3, 40, 64}, rng, 0.1);
  Tensor bias = RandomTensor({64}, rng);
  Tensor y = Conv1d(tape, x, w, bias, 2);
  CHECK(y.shape() == Shape{2, 50, 64});
  auto oracle = ConvOracle(x, w, 2);
  double err = 0.0;
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    err = std::max(err, std::abs(oracle[i] + bias[i % 64] - y[i]));
  }
  CHECK(err < 1e-5);

  Tensor odd = RandomTensor({1, 7, 2}, rng);
  CHECK(Conv1d(tape, odd, RandomTensor({3, 2, 4}, rng), Tensor(), 2).dim(1) == 4);
}

TEST_CASE("conv1d rejects mismatched channels and even kernels") {
  Tape tape;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(Conv1d(tape, RandomTensor({1, 5, 3}, rng), RandomTensor({3, 2, 4}, rng),
                         Tensor(), 1),
                  ContractViolation);
  CHECK_THROWS_AS(Conv1d(tape, RandomTensor({1, 5, 2}, rng), RandomTensor({2, 2, 4}, rng),
                         Tensor(), 1),
                  ContractViolation);
}

TEST_CASE("separable conv1d equals depthwise-then-pointwise composition") {
  Tape tape(false);
  SUBCASE("center-one depthwise and identity pointwise give the input") {
    std::mt19937_64 rng(5);
    Tensor x = RandomTensor({2, 6, 4}, rng);
    Tensor dw({3, 4});
    for (std::size_t c = 0; c < 4; ++c) dw[1 * 4 + c] = 1;
    Tensor pw({4, 4});
    for (std::size_t c = 0; c < 4; ++c) pw[c * 4 + c] = 1;
    Tensor y = SeparableConv1d(tape, x, dw, Tensor(), pw, Tensor());
    CHECK(MaxAbsDiff(y.data(), x.data()) == 0.0);
  }
  SUBCASE("random inputs against per-channel conv1d then 1x1 conv1d") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t C = 2 + trial % 3, Co = 1 + trial % 4, T = 5 + trial % 4;
      Tensor x = RandomTensor({1, T, C}, rng);
      Tensor dw = RandomTensor({3, C}, rng);
      Tensor pw = RandomTensor({C, Co}, rng);
      Tensor y = SeparableConv1d(tape, x, dw, Tensor(), pw, Tensor());

      // Oracle: a dense conv1d whose kernel is diagonal across channels,
      // followed by a K=1 conv1d carrying the pointwise matrix.
      Tensor dense({3, C, C});
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t c = 0; c < C; ++c) dense[(k * C + c) * C + c] = dw[k * C + c];
      auto mid = ConvOracle(x, dense, 1);
      Tensor mid_t({1, T, C}, std::vector<Real>(mid.begin(), mid.end()));
      Tensor pw3({1, C, Co}, std::vector<Real>(pw.data().begin(), pw.data().end()));
      auto expected = ConvOracle(mid_t, pw3, 1);
      double err = 0.0;
      for (std::size_t i = 0; i < expected.size(); ++i) err = std::max(err, std::abs(expected[i] - y[i]));
      CHECK(err < 1e-6);
    }
  }
  SUBCASE("parameter count for K=9, 64 channels") {
    Tensor dw({9, 64}), pw({64, 64});
    CHECK(dw.numel() + pw.numel() == 4672);
  }
  SUBCASE("channel mismatch is a contract violation") {
    std::mt19937_64 rng(9);
    CHECK_THROWS_AS(SeparableConv1d(tape, RandomTensor({1, 5, 3}, rng),
                                    RandomTensor({3, 4}, rng), Tensor(),
                                    RandomTensor({4, 4}, rng), Tensor()),
                    ContractViolation);
  }
}

TEST_CASE("batch norm + relu") {
  Tape tape(false);
  Tensor gamma = Tensor::Full({2}, 1), beta({2});
  Tensor mean({2}), var = Tensor::Full({2}, 1);

  SUBCASE("constant input normalizes to zero") {
    Tensor x = Tensor::Full({2, 3, 2}, 4.5);
    Tensor y = BatchNormRelu(tape, x, gamma, beta, mean, var, true);
    for (Real v : y.data()) CHECK(v == 0);
  }
  SUBCASE("values {1,3} map to {0,~1}") {
    Tensor x({1, 2, 1}, {1, 3});
    Tensor g1 = Tensor::Full({1}, 1), b1({1}), m1({1}), v1 = Tensor::Full({1}, 1);
    BatchNormOptions opts;
    opts.eps = Real(1e-12);
    Tensor y = BatchNormRelu(tape, x, g1, b1, m1, v1, true, opts);
    CHECK(y[0] == 0);
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("beta shift passes the relu") {
    Tensor x = Tensor::Full({2, 3, 2}, -1.25);
    Tensor b5 = Tensor::Full({2}, 5);
    Tensor y = BatchNormRelu(tape, x, gamma, b5, mean, var, true);
    for (Real v : y.data()) CHECK(v == doctest::Approx(5));
  }
  SUBCASE("training output has zero mean and unit variance per channel") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor x = RandomTensor({4, 25, 3}, rng, 3.0 + trial);
      for (std::size_t i = 0; i < x.numel(); ++i) x[i] += static_cast<Real>(trial - 5);
      Tensor g = Tensor::Full({3}, 1), b({3}), m({3}), v = Tensor::Full({3}, 1);
      Tensor y = BatchNorm(tape, x, g, b, m, v, true);
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0, ss = 0;
        for (std::size_t r = 0; r < 100; ++r) s += y[r * 3 + c];
        const double mu = s / 100;
        for (std::size_t r = 0; r < 100; ++r) ss += (y[r * 3 + c] - mu) * (y[r * 3 + c] - mu);
        CHECK(std::abs(mu) < 1e-5);
        CHECK(std::abs(ss / 100 - 1.0) < 1e-3);
      }
    }
  }
  SUBCASE("eval before any training uses mean 0 / var 1") {
    Tensor x({1, 2, 2}, {2, -1, 0.5, 3});
    Tensor y = BatchNorm(tape, x, gamma, beta, mean, var, false);
    const double s = 1.0 / std::sqrt(1.0 + 1e-5);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(x[i] * s));
  }
  SUBCASE("running statistics move with momentum 0.1") {
    Tensor x({1, 2, 1}, {1, 3});
    Tensor g1 = Tensor::Full({1}, 1), b1({1}), m1({1}), v1 = Tensor::Full({1}, 1);
    BatchNorm(tape, x, g1, b1, m1, v1, true);
    CHECK(m1[0] == doctest::Approx(0.2));           // 0.9*0 + 0.1*2
    CHECK(v1[0] == doctest::Approx(0.9 + 0.1 * 2));  // unbiased var of {1,3} is 2
  }
  SUBCASE("training mode needs two values per channel") {
    Tensor x({1, 1, 2}, {1, 2});
    CHECK_THROWS_AS(BatchNorm(tape, x, gamma, beta, mean, var, true), ContractViolation);
  }
}

TEST_CASE("attention rows are distributions and zero Q/K gives uniform mixing") {
  Tape tape(false);
  std::mt19937_64 rng(8);
  Tensor q = RandomTensor({2, 5, 8}, rng), k = RandomTensor({2, 5, 8}, rng);
  Tensor v = RandomTensor({2, 5, 8}, rng);
  std::vector<Real> w;
  MultiHeadAttention(tape, q, k, v, 2, 4.0, &w);
  REQUIRE(w.size() == 2 * 2 * 5 * 5);
  for (std::size_t r = 0; r < w.size() / 5; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) s += w[r * 5 + j];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  Tensor zeros({2, 5, 8});
  Tensor y = MultiHeadAttention(tape, zeros, zeros, v, 2, 4.0);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 8; ++c) {
      double mean = 0;
      for (std::size_t t = 0; t < 5; ++t) mean += v[(b * 5 + t) * 8 + c] / 5.0;
      for (std::size_t t = 0; t < 5; ++t) CHECK(y[(b * 5 + t) * 8 + c] == doctest::Approx(mean).epsilon(1e-5));
    }
  CHECK_THROWS_AS(MultiHeadAttention(tape, q, k, v, 3, 1.0), ContractViolation);
}

TEST_CASE("backward populates leaf gradients") {
  SUBCASE("sum(w * x) gives grad(w) == x") {
    Tape tape;
    Tensor w({3}, {0.5, -1, 2}, true);
    Tensor x({3}, {4, 5, 6});
    Tensor loss = Sum(tape, Mul(tape, w, x));
    tape.Backward(loss);
    REQUIRE(w.has_grad());
    for (std::size_t i = 0; i < 3; ++i) CHECK(w.grad()[i] == x[i]);
    CHECK_FALSE(x.has_grad());
  }
  SUBCASE("two backward calls without clearing double the gradient exactly") {
    Tape tape;
    std::mt19937_64 rng(4);
    Tensor x = RandomTensor({2, 6, 3}, rng);
    Tensor w = RandomTensor({3, 3, 2}, rng, 1.0, true);
    Tensor loss = Sum(tape, Relu(tape, Conv1d(tape, x, w, Tensor(), 2)));
    tape.Backward(loss);
    std::vector<Real> first(w.grad().begin(), w.grad().end());
    tape.Backward(loss);
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(w.grad()[i] == 2 * first[i]);
  }
  SUBCASE("non-scalar loss and off-tape loss are rejected") {
    Tape tape;
    Tensor w({2}, {1, 2}, true);
    Tensor y = Scale(tape, w, 2);
    CHECK_THROWS_AS(tape.Backward(y), ContractViolation);
    Tensor detached = Tensor::Scalar(1);
    CHECK_THROWS_AS(tape.Backward(detached), ContractViolation);
  }
  SUBCASE("disabled tape records nothing") {
    Tape tape(false);
    Tensor w({2}, {1, 2}, true);
    Tensor y = Sum(tape, w);
    CHECK(tape.size() == 0);
    CHECK_FALSE(y.requires_grad());
  }
}

TEST_CASE("sgd with momentum and weight decay") {
  auto make = [](Real value, Real grad) {
    Tensor p({1}, {value}, true);
    p.mutable_grad()[0] = grad;
    return p;
  };
  SUBCASE("zero gradient without decay leaves params unchanged") {
    Tensor p = make(0.7f, 0);
    SgdMomentum opt({{"p", p}}, {0.1, 0.9, 0.0});
    opt.Step();
    CHECK(p[0] == Real(0.7f));
  }
  SUBCASE("one plain step") {
    Tensor p = make(1, 1);
    SgdMomentum opt({{"p", p}}, {0.1, 0.0, 0.0});
    opt.Step();
    CHECK(p[0] == doctest::Approx(0.9));
  }
  SUBCASE("two momentum steps: -0.1 then -0.29") {
    Tensor p = make(0, 1);
    SgdMomentum opt({{"p", p}}, {0.1, 0.9, 0.0});
    opt.Step();
    CHECK(std::abs(p[0] - (-0.1)) < 1e-6);
    opt.Step();
    CHECK(std::abs(p[0] - (-0.29)) < 1e-6);
  }
  SUBCASE("weight decay adds decay * param to the velocity") {
    Tensor p = make(2, 0);
    SgdMomentum opt({{"p", p}}, {0.5, 0.0, 0.1});
    opt.Step();
    CHECK(p[0] == doctest::Approx(2 - 0.5 * 0.2));
  }
  SUBCASE("lr = 0 is bit-identical") {
    std::mt19937_64 rng(12);
    Tensor p = RandomTensor({50}, rng, 1.0, true);
    for (Real& g : p.mutable_grad()) g = Real(0.37);
    std::vector<Real> before(p.data().begin(), p.data().end());
    SgdMomentum opt({{"p", p}}, {0.0, 0.9, 1e-4});
    for (int i = 0; i < 3; ++i) opt.Step();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(p[i] == before[i]);
  }
  SUBCASE("NaN gradient aborts the whole step") {
    Tensor a = make(1, 1), b = make(2, std::nanf(""));
    SgdMomentum opt({{"a", a}, {"b", b}}, {0.1, 0.9, 0.0});
    CHECK_THROWS_AS(opt.Step(), NumericError);
    CHECK(a[0] == 1);
    CHECK(b[0] == 2);
  }
}

TEST_CASE("checkpoint container roundtrip") {
  const auto path = (std::filesystem::temp_directory_path() / "kws_ckpt_test.bin").string();
  std::mt19937_64 rng(2);
  Tensor a = RandomTensor({3, 4, 5}, rng);
  std::vector<NamedTensor> in = {NamedTensor::From("layer.weight", a),
                                 NamedTensor::From("scalar", Tensor::Scalar(3.5))};
  WriteCheckpoint(path, in);
  auto out = ReadCheckpoint(path);
  REQUIRE(out.size() == 2);
  CHECK(out[0].name == "layer.weight");
  CHECK(out[0].shape == Shape{3, 4, 5});
  CHECK(out[0].values == in[0].values);
  CHECK(out[1].shape.empty());
  CHECK(out[1].values[0] == 3.5f);

  std::ifstream is(path, std::ios::binary);
  char magic[4];
  is.read(magic, 4);
  CHECK(std::string(magic, 4) == "KWSC");
  // magic + version + count + name(2+12) + rank(1) + dims(12) + data(240)
  CHECK(std::filesystem::file_size(path) ==
        4 + 4 + 4 + (2 + 12 + 1 + 12 + 60 * 4) + (2 + 6 + 1 + 0 + 4));

  std::ofstream(path, std::ios::binary) << "JUNKJUNK";
  CHECK_THROWS_AS(ReadCheckpoint(path), IoError);
  std::filesystem::remove(path);
}
