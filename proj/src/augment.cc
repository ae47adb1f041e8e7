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

#include "kws/augment.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "fft.h"
#include "kws/errors.h"

namespace kws {
namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

bool Coin(double p, Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

double Uniform(double lo, double hi, Rng& rng) {
  return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t UniformIndex(std::size_t lo, std::size_t hi, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<double> Hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

double Sinc(double x) { return x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x); }

// Band-limited interpolation of `x` onto `out_length` evenly spaced points.
std::vector<double> Resample(const std::vector<double>& x, std::size_t out_length) {
  const std::size_t in_length = x.size();
  std::vector<double> y(out_length, 0.0);
  if (in_length == 0 || out_length == 0) return y;
  const double step = static_cast<double>(in_length) / out_length;
  const double cutoff = std::min(1.0, 1.0 / step);
  constexpr double kZeroCrossings = 16.0;
  const double half = kZeroCrossings / cutoff;
  for (std::size_t j = 0; j < out_length; ++j) {
    const double pos = j * step;
    const long lo = static_cast<long>(std::ceil(pos - half));
    const long hi = static_cast<long>(std::floor(pos + half));
    double acc = 0.0;
    for (long i = std::max(lo, 0L); i <= std::min(hi, static_cast<long>(in_length) - 1); ++i) {
      const double d = pos - i;
      const double taper = 0.5 + 0.5 * std::cos(kPi * d / half);
      acc += x[i] * cutoff * Sinc(cutoff * d) * taper;
    }
    y[j] = acc;
  }
  return y;
}

// Centered STFT with reflect padding. Returns frames of n/2+1 bins.
std::vector<std::vector<std::complex<double>>> Stft(const std::vector<double>& x,
                                                    internal::RealFft& fft, std::size_t hop,
                                                    const std::vector<double>& window) {
  const std::size_t n = fft.size(), pad = n / 2, len = x.size();
  std::vector<double> padded(len + 2 * pad, 0.0);
  auto at = [&](long i) {
    // Reflect, falling back to zero when the signal is shorter than the pad.
    if (i < 0) i = -i;
    if (i >= static_cast<long>(len)) i = 2 * (static_cast<long>(len) - 1) - i;
    return (i >= 0 && i < static_cast<long>(len)) ? x[i] : 0.0;
  };
  for (std::size_t i = 0; i < padded.size(); ++i) padded[i] = at(static_cast<long>(i) - static_cast<long>(pad));
  const std::size_t frames = 1 + len / hop;
  std::vector<std::vector<std::complex<double>>> out(frames, std::vector<std::complex<double>>(n / 2 + 1));
  std::vector<double> buf(n);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = t * hop + i;
      buf[i] = (idx < padded.size() ? padded[idx] : 0.0) * window[i];
    }
    fft.Forward(buf.data(), out[t].data());
  }
  return out;
}

std::vector<double> Istft(const std::vector<std::vector<std::complex<double>>>& spec,
                          internal::RealFft& fft, std::size_t hop,
                          const std::vector<double>& window, std::size_t length) {
  const std::size_t n = fft.size(), pad = n / 2;
  const std::size_t total = n + hop * (spec.empty() ? 0 : spec.size() - 1);
  std::vector<double> acc(total, 0.0), norm(total, 0.0), buf(n);
  for (std::size_t t = 0; t < spec.size(); ++t) {
    fft.Inverse(spec[t].data(), buf.data());
    for (std::size_t i = 0; i < n; ++i) {
      acc[t * hop + i] += buf[i] / n * window[i];
      norm[t * hop + i] += window[i] * window[i];
    }
  }
  std::vector<double> y(length, 0.0);
  for (std::size_t i = 0; i < length && pad + i < total; ++i) {
    const double w = norm[pad + i];
    y[i] = w > 1e-10 ? acc[pad + i] / w : 0.0;
  }
  return y;
}

std::vector<double> TimeStretch(const std::vector<double>& x, double rate) {
  constexpr std::size_t kFft = 512, kHop = 128;
  internal::RealFft fft(kFft);
  const std::vector<double> window = Hann(kFft);
  auto spec = Stft(x, fft, kHop, window);
  const std::size_t bins = kFft / 2 + 1, frames = spec.size();
  spec.push_back(std::vector<std::complex<double>>(bins));  // zero column past the end

  std::vector<double> advance(bins);
  for (std::size_t k = 0; k < bins; ++k) advance[k] = 2.0 * kPi * k * kHop / kFft;
  std::vector<double> phase(bins);
  for (std::size_t k = 0; k < bins; ++k) phase[k] = std::arg(spec[0][k]);

  std::vector<std::vector<std::complex<double>>> stretched;
  for (double t = 0.0; t < static_cast<double>(frames); t += rate) {
    const std::size_t i = static_cast<std::size_t>(t);
    const double alpha = t - i;
    std::vector<std::complex<double>> col(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      const double mag = (1.0 - alpha) * std::abs(spec[i][k]) + alpha * std::abs(spec[i + 1][k]);
      col[k] = std::polar(mag, phase[k]);
      double dphi = std::arg(spec[i + 1][k]) - std::arg(spec[i][k]) - advance[k];
      dphi -= 2.0 * kPi * std::round(dphi / (2.0 * kPi));
      phase[k] += advance[k] + dphi;
    }
    stretched.push_back(std::move(col));
  }
  const auto length = static_cast<std::size_t>(std::llround(x.size() / rate));
  return Istft(stretched, fft, kHop, window, length);
}

const char* EqModeName(EqMode mode) { return mode == EqMode::kNotch ? "notch" : "peak"; }

}  // namespace

std::uint64_t DeriveSeed(std::uint64_t seed, const std::string& key, std::uint64_t a,
                         std::uint64_t b) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : key) h = (h ^ c) * 0x100000001b3ull;
  return SplitMix(SplitMix(SplitMix(seed) ^ h) ^ SplitMix(a + 0x1234567ull)) ^ SplitMix(b);
}

void AugmentConfig::Validate() const {
  auto range = [](double lo, double hi, const char* what) {
    if (!(lo <= hi)) KWS_FAIL(ConfigError, what, " range is empty");
  };
  range(coef_min, coef_max, "emphasis coefficient");
  range(pitch_min, pitch_max, "pitch step");
  range(snr_min_db, snr_max_db, "SNR");
  range(eq_center_min_hz, eq_center_max_hz, "EQ center");
  range(eq_q_min, eq_q_max, "EQ Q");
  if (coef_min < 0 || coef_max >= 1) KWS_FAIL(ConfigError, "emphasis coefficient must lie in [0, 1)");
  if (eq_q_min <= 0) KWS_FAIL(ConfigError, "EQ Q must be positive");
  if (eq_center_min_hz <= 0 || eq_center_max_hz >= kSampleRate / 2.0) {
    KWS_FAIL(ConfigError, "EQ center must lie inside (0, Nyquist)");
  }
  for (double p : {p_pre_emphasis, p_de_emphasis, p_pitch, p_eq, p_noise, p_freq_mask, p_cutout}) {
    if (!(p >= 0 && p <= 1)) KWS_FAIL(ConfigError, "probability ", p, " outside [0, 1]");
  }
}

AugmentConfig AugmentConfig::TimePreserving() const {
  AugmentConfig c = *this;
  c.p_pitch = 0;
  return c;
}

std::vector<float> PreEmphasize(const std::vector<float>& wave, double coef) {
  std::vector<float> y(wave.size());
  if (wave.empty()) return y;
  y[0] = wave[0];
  for (std::size_t n = 1; n < wave.size(); ++n) {
    y[n] = static_cast<float>(double(wave[n]) - coef * wave[n - 1]);
  }
  return y;
}

std::vector<float> DeEmphasize(const std::vector<float>& wave, double coef) {
  std::vector<float> y(wave.size());
  double prev = 0.0;
  for (std::size_t n = 0; n < wave.size(); ++n) {
    prev = wave[n] + coef * prev;
    y[n] = static_cast<float>(prev);
  }
  return y;
}

std::vector<float> PitchShift(const std::vector<float>& wave, int n_steps, int sample_rate) {
  (void)sample_rate;  // the shift is a pure frequency ratio
  if (n_steps == 0 || wave.empty()) return wave;
  const double rate = std::pow(2.0, -n_steps / 12.0);
  std::vector<double> x(wave.begin(), wave.end());
  std::vector<double> y = Resample(TimeStretch(x, rate), wave.size());
  return {y.begin(), y.end()};
}

std::vector<float> EqFilter(const std::vector<float>& wave, EqMode mode, double center_hz,
                            double q, double gain_db, int sample_rate) {
  if (!(center_hz > 0 && center_hz < sample_rate / 2.0)) {
    KWS_FAIL(ContractViolation, "EQ center ", center_hz, " Hz outside (0, ", sample_rate / 2.0, ")");
  }
  KWS_CHECK(q > 0, "EQ Q must be positive");
  const double w0 = 2.0 * kPi * center_hz / sample_rate;
  const double alpha = std::sin(w0) / (2.0 * q), cw = std::cos(w0);
  double b0, b1, b2, a0, a1, a2;
  if (mode == EqMode::kNotch) {
    b0 = 1.0, b1 = -2.0 * cw, b2 = 1.0;
    a0 = 1.0 + alpha, a1 = -2.0 * cw, a2 = 1.0 - alpha;
  } else {
    const double A = std::pow(10.0, gain_db / 40.0);
    b0 = 1.0 + alpha * A, b1 = -2.0 * cw, b2 = 1.0 - alpha * A;
    a0 = 1.0 + alpha / A, a1 = -2.0 * cw, a2 = 1.0 - alpha / A;
  }
  std::vector<float> y(wave.size());
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t n = 0; n < wave.size(); ++n) {
    const double x0 = wave[n];
    const double out = (b0 * x0 + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2) / a0;
    x2 = x1, x1 = x0, y2 = y1, y1 = out;
    y[n] = static_cast<float>(out);
  }
  return y;
}

double NoiseGain(double wave_power, double noise_power, double snr_db) {
  KWS_CHECK(noise_power > 0, "noise power must be positive");
  return std::sqrt(wave_power / (noise_power * std::pow(10.0, snr_db / 10.0)));
}

std::vector<float> MixNoise(const std::vector<float>& wave, const std::vector<float>& noise,
                            double snr_db) {
  KWS_CHECK(noise.size() >= wave.size(), "noise segment (", noise.size(),
            ") shorter than the wave (", wave.size(), ")");
  const std::vector<float> segment(noise.begin(), noise.begin() + static_cast<long>(wave.size()));
  const double p_noise = MeanPower(segment), p_wave = MeanPower(wave);
  if (p_noise == 0.0) return wave;
  const double g = p_wave == 0.0 ? 1.0 / std::sqrt(p_noise) : NoiseGain(p_wave, p_noise, snr_db);
  std::vector<float> y(wave.size());
  for (std::size_t i = 0; i < wave.size(); ++i) {
    y[i] = static_cast<float>(std::clamp(wave[i] + g * segment[i], -1.0, 1.0));
  }
  return y;
}

MaskSpec DrawFreqMask(std::size_t bins, std::size_t max_width, Rng& rng) {
  MaskSpec m;
  m.kind = MaskSpec::Kind::kFreq;
  m.bin_width = UniformIndex(0, std::min(max_width, bins), rng);
  m.bin_start = UniformIndex(0, bins - m.bin_width, rng);
  return m;
}

MaskSpec DrawCutout(std::size_t frames, std::size_t bins, std::size_t max_bins,
                    std::size_t max_frames, Rng& rng) {
  MaskSpec m;
  m.kind = MaskSpec::Kind::kCutout;
  m.bin_width = UniformIndex(0, std::min(max_bins, bins), rng);
  m.frame_width = UniformIndex(0, std::min(max_frames, frames), rng);
  m.bin_start = UniformIndex(0, bins - m.bin_width, rng);
  m.frame_start = UniformIndex(0, frames - m.frame_width, rng);
  return m;
}

void ApplyMask(Spectrogram& spec, const MaskSpec& mask) {
  const bool all_frames = mask.kind == MaskSpec::Kind::kFreq;
  const std::size_t t0 = all_frames ? 0 : mask.frame_start;
  const std::size_t t1 = all_frames ? spec.frames : std::min(spec.frames, mask.frame_start + mask.frame_width);
  const std::size_t m1 = std::min(spec.bins, mask.bin_start + mask.bin_width);
  for (std::size_t t = t0; t < t1; ++t)
    for (std::size_t m = mask.bin_start; m < m1; ++m) spec.at(t, m) = 0.0f;
}

bool AugmentRecord::identity() const {
  if (pre_emphasis || de_emphasis || (pitch && pitch_steps != 0) || eq || noise) return false;
  for (const MaskSpec& m : masks) {
    const bool empty = m.bin_width == 0 || (m.kind == MaskSpec::Kind::kCutout && m.frame_width == 0);
    if (!empty) return false;
  }
  return true;
}

nlohmann::json AugmentRecord::ToJson() const {
  nlohmann::json j;
  if (pre_emphasis) j["pre_emphasis"] = {{"coef", pre_coef}};
  if (de_emphasis) j["de_emphasis"] = {{"coef", de_coef}};
  if (pitch) j["pitch"] = {{"n_steps", pitch_steps}};
  if (eq) j["eq"] = {{"mode", EqModeName(eq_mode)}, {"center_hz", eq_center_hz}, {"q", eq_q}, {"gain_db", eq_gain_db}};
  if (noise) {
    j["noise"] = {{"source", noise_source}, {"offset", noise_offset}, {"snr_db", snr_db}};
  }
  nlohmann::json masks_json = nlohmann::json::array();
  for (const MaskSpec& m : masks) {
    if (m.kind == MaskSpec::Kind::kFreq) {
      masks_json.push_back({{"kind", "freq"}, {"bin_start", m.bin_start}, {"bin_width", m.bin_width}});
    } else {
      masks_json.push_back({{"kind", "cutout"},
                            {"bin_start", m.bin_start},
                            {"bin_width", m.bin_width},
                            {"frame_start", m.frame_start},
                            {"frame_width", m.frame_width}});
    }
  }
  j["masks"] = std::move(masks_json);
  return j;
}

AugmentRecord PlanAugmentation(const AugmentConfig& config,
                               const std::vector<std::size_t>& noise_lengths,
                               std::size_t wave_length, std::size_t frames, std::size_t bins,
                               Rng& rng) {
  AugmentRecord r;
  // Every coin and parameter is drawn unconditionally so that one choice
  // never shifts the random stream of the next.
  r.pre_emphasis = Coin(config.p_pre_emphasis, rng);
  const double pre_coef = Uniform(config.coef_min, config.coef_max, rng);
  r.de_emphasis = Coin(config.p_de_emphasis, rng);
  const double de_coef = Uniform(config.coef_min, config.coef_max, rng);
  r.pitch = Coin(config.p_pitch, rng);
  const int steps = std::uniform_int_distribution<int>(config.pitch_min, config.pitch_max)(rng);
  r.eq = Coin(config.p_eq, rng);
  const bool peak = Coin(0.5, rng);
  const double center = Uniform(config.eq_center_min_hz, config.eq_center_max_hz, rng);
  const double q = Uniform(config.eq_q_min, config.eq_q_max, rng);
  r.noise = Coin(config.p_noise, rng);
  const double snr = Uniform(config.snr_min_db, config.snr_max_db, rng);
  const std::size_t source = noise_lengths.empty() ? 0 : UniformIndex(0, noise_lengths.size() - 1, rng);
  const std::size_t offset_draw = static_cast<std::size_t>(rng());
  const bool freq_mask = Coin(config.p_freq_mask, rng);
  const MaskSpec fmask = DrawFreqMask(bins, config.max_freq_mask, rng);
  const bool cutout = Coin(config.p_cutout, rng);
  const MaskSpec cmask = DrawCutout(frames, bins, config.max_cutout_freq, config.max_cutout_time, rng);

  if (r.pre_emphasis) r.pre_coef = pre_coef;
  if (r.de_emphasis) r.de_coef = de_coef;
  if (r.pitch) r.pitch_steps = steps;
  if (r.eq) {
    r.eq_mode = peak ? EqMode::kPeak : EqMode::kNotch;
    r.eq_center_hz = center;
    r.eq_q = q;
    r.eq_gain_db = config.eq_peak_gain_db;
  }
  if (r.noise && !noise_lengths.empty() && noise_lengths[source] >= wave_length) {
    r.noise_source = source;
    r.noise_offset = offset_draw % (noise_lengths[source] - wave_length + 1);
    r.snr_db = snr;
  } else {
    r.noise = false;
  }
  if (freq_mask) r.masks.push_back(fmask);
  if (cutout) r.masks.push_back(cmask);
  return r;
}

std::vector<float> ApplyWaveAugment(const std::vector<float>& wave, const AugmentRecord& record,
                                    const std::vector<std::vector<float>>& noise_bank,
                                    int sample_rate) {
  std::vector<float> y = wave;
  if (record.pre_emphasis) y = PreEmphasize(y, record.pre_coef);
  if (record.de_emphasis) y = DeEmphasize(y, record.de_coef);
  if (record.pitch) y = PitchShift(y, record.pitch_steps, sample_rate);
  if (record.eq) y = EqFilter(y, record.eq_mode, record.eq_center_hz, record.eq_q, record.eq_gain_db, sample_rate);
  if (record.noise) {
    KWS_CHECK(record.noise_source < noise_bank.size(), "noise source ", record.noise_source,
              " not in the bank");
    const auto& source = noise_bank[record.noise_source];
    KWS_CHECK(record.noise_offset + y.size() <= source.size(), "noise crop out of range");
    const std::vector<float> segment(source.begin() + static_cast<long>(record.noise_offset),
                                     source.begin() + static_cast<long>(record.noise_offset + y.size()));
    y = MixNoise(y, segment, record.snr_db);
  }
  return y;
}

void ApplyMasks(Spectrogram& spec, const AugmentRecord& record) {
  for (const MaskSpec& m : record.masks) ApplyMask(spec, m);
}

}  // namespace kws
