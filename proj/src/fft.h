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

// Thin RAII wrapper over FFTW real transforms of one size.

#ifndef KWS_SRC_FFT_H_
#define KWS_SRC_FFT_H_

#include <fftw3.h>

#include <complex>
#include <vector>

namespace kws::internal {

class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }

  // n real samples -> n/2+1 bins.
  void Forward(const double* in, std::complex<double>* out);
  // n/2+1 bins -> n real samples, unnormalized (scaled by n).
  void Inverse(const std::complex<double>* in, double* out);

 private:
  std::size_t n_;
  double* real_;
  fftw_complex* spectrum_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

}  // namespace kws::internal

#endif  // KWS_SRC_FFT_H_
