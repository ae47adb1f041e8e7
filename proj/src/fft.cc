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

#include "fft.h"

#include <cstring>
#include <mutex>

#include "kws/errors.h"

namespace kws::internal {
namespace {

// The FFTW planner is not thread-safe.
std::mutex planner_mutex;

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  std::lock_guard<std::mutex> lock(planner_mutex);
  real_ = fftw_alloc_real(n);
  spectrum_ = fftw_alloc_complex(n / 2 + 1);
  forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spectrum_, FFTW_ESTIMATE);
  inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spectrum_, real_, FFTW_ESTIMATE);
  if (!forward_ || !inverse_) KWS_FAIL(Error, "FFTW planning failed for size ", n);
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(planner_mutex);
  fftw_destroy_plan(forward_);
  fftw_destroy_plan(inverse_);
  fftw_free(real_);
  fftw_free(spectrum_);
}

void RealFft::Forward(const double* in, std::complex<double>* out) {
  std::memcpy(real_, in, n_ * sizeof(double));
  fftw_execute(forward_);
  std::memcpy(static_cast<void*>(out), spectrum_, (n_ / 2 + 1) * sizeof(fftw_complex));
}

void RealFft::Inverse(const std::complex<double>* in, double* out) {
  // c2r destroys its input, hence the copy into the owned buffer.
  std::memcpy(spectrum_, in, (n_ / 2 + 1) * sizeof(fftw_complex));
  fftw_execute(inverse_);
  std::memcpy(out, real_, n_ * sizeof(double));
}

}  // namespace kws::internal
