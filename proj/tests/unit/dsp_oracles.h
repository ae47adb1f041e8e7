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

#ifndef KWS_TESTS_DSP_ORACLES_H_
#define KWS_TESTS_DSP_ORACLES_H_

#include <cmath>
#include <numbers>
#include <vector>

namespace kws::testing {

inline std::vector<float> Sine(double hz, std::size_t n, double amplitude, int rate = 16000) {
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * i / rate));
  }
  return x;
}

// Frequency of the strongest component between lo_hz and hi_hz, found by a
// direct DFT at 1 Hz spacing over the first `rate` samples (zero-padded).
inline double DftPeakHz(const std::vector<float>& x, int lo_hz, int hi_hz, int rate = 16000) {
  double best_power = -1.0;
  int best = lo_hz;
  for (int f = lo_hz; f <= hi_hz; ++f) {
    double re = 0.0, im = 0.0;
    const double w = 2.0 * std::numbers::pi * f / rate;
    for (std::size_t i = 0; i < x.size() && i < static_cast<std::size_t>(rate); ++i) {
      re += x[i] * std::cos(w * i);
      im -= x[i] * std::sin(w * i);
    }
    if (re * re + im * im > best_power) best_power = re * re + im * im, best = f;
  }
  return best;
}

}  // namespace kws::testing

#endif  // KWS_TESTS_DSP_ORACLES_H_
