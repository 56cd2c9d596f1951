#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoser/audio.hpp"
#include "emoser/error.hpp"
#include "emoser/json_util.hpp"

namespace emoser {

enum class WindowKind { Hann };

struct StftParams {
  std::size_t fft_size = 512;
  std::size_t hop = 256;
  WindowKind window = WindowKind::Hann;

  void validate() const {
    if (fft_size == 0 || !std::has_single_bit(fft_size)) {
      fail(Errc::NonPowerOfTwoLength, "fft_size " + std::to_string(fft_size) + " is not a power of two");
    }
    if (hop == 0 || hop > fft_size) fail(Errc::InvalidArgument, "hop must satisfy 0 < hop <= fft_size");
  }

  friend bool operator==(const StftParams&, const StftParams&) = default;
};

/// Everything that turns a clip into a model input. Defaults: 16 kHz, 3 s,
/// 512-point FFT with hop 256, resized to 64x64.
struct PipelineConfig {
  std::uint32_t sample_rate = 16000;
  double duration_s = 3.0;
  std::size_t fft_size = 512;
  std::size_t hop = 256;
  std::size_t height = 64;
  std::size_t width = 64;

  StftParams stft() const { return {fft_size, hop, WindowKind::Hann}; }

  void validate() const {
    if (sample_rate == 0) fail(Errc::ConfigParseError, "pipeline.sample_rate must be positive");
    if (!(duration_s > 0.0)) fail(Errc::ConfigParseError, "pipeline.duration_s must be positive");
    if (height == 0 || width == 0) fail(Errc::ConfigParseError, "pipeline feature shape must be positive");
    try {
      stft().validate();
    } catch (const Error& e) {
      fail(Errc::ConfigParseError, std::string("pipeline: ") + e.what());
    }
    if (static_cast<double>(fft_size) > duration_s * sample_rate) {
      fail(Errc::ConfigParseError, "pipeline.fft_size exceeds the clip length");
    }
  }

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{{"sample_rate", c.sample_rate}, {"duration_s", c.duration_s},
                     {"fft_size", c.fft_size},       {"hop", c.hop},
                     {"height", c.height},           {"width", c.width}};
}

inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  detail::require_known_keys(j, {"sample_rate", "duration_s", "fft_size", "hop", "height", "width"}, "pipeline");
  detail::read_optional(j, "sample_rate", c.sample_rate, "pipeline");
  detail::read_optional(j, "duration_s", c.duration_s, "pipeline");
  detail::read_optional(j, "fft_size", c.fft_size, "pipeline");
  detail::read_optional(j, "hop", c.hop, "pipeline");
  detail::read_optional(j, "height", c.height, "pipeline");
  detail::read_optional(j, "width", c.width, "pipeline");
  c.validate();
}

/// Log-magnitude spectrogram in dB, stored frame-major: values[t * bins + b].
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<float> values;
  StftParams params;

  float at(std::size_t frame, std::size_t bin) const { return values[frame * bins + bin]; }
};

/// Standardized model input of shape height x width (row-major).
struct FeatureTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  float at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

/// Periodic Hann window: w[k] = 0.5 (1 - cos(2 pi k / n)).
inline std::vector<double> hann_window(std::size_t n) {
  if (n == 0) fail(Errc::InvalidArgument, "window length must be at least 1");
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n)));
  }
  return w;
}

/// In-place iterative radix-2 decimation-in-time FFT. The inverse transform
/// divides by N.
inline void fft_inplace(std::span<std::complex<double>> a, bool inverse = false) {
  const std::size_t n = a.size();
  if (n == 0 || !std::has_single_bit(n)) {
    fail(Errc::NonPowerOfTwoLength, "FFT length " + std::to_string(n) + " is not a power of two");
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
      const std::complex<double> w(std::cos(angle), std::sin(angle));
      for (std::size_t start = 0; start < n; start += len) {
        const auto u = a[start + k];
        const auto v = a[start + k + half] * w;
        a[start + k] = u + v;
        a[start + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

inline std::vector<std::complex<double>> fft(std::vector<std::complex<double>> frame, bool inverse = false) {
  fft_inplace(frame, inverse);
  return frame;
}

/// Hann-windowed STFT; frame t covers [t*hop, t*hop + fft_size). Bins
/// 0..fft_size/2 are converted to 20 log10(|X| + 1e-6).
inline Spectrogram stft(const AudioClip& clip, const StftParams& params) {
  params.validate();
  const auto x = clip.samples();
  const std::size_t n = params.fft_size;
  if (x.size() < n) {
    fail(Errc::ClipTooShort, std::to_string(x.size()) + " samples < fft_size " + std::to_string(n));
  }
  Spectrogram spec;
  spec.params = params;
  spec.frames = 1 + (x.size() - n) / params.hop;
  spec.bins = n / 2 + 1;
  spec.values.resize(spec.frames * spec.bins);

  const auto window = hann_window(n);
  std::vector<std::complex<double>> buf(n);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const std::size_t offset = t * params.hop;
    for (std::size_t k = 0; k < n; ++k) buf[k] = {static_cast<double>(x[offset + k]) * window[k], 0.0};
    fft_inplace(buf);
    float* row = spec.values.data() + t * spec.bins;
    for (std::size_t b = 0; b < spec.bins; ++b) {
      row[b] = static_cast<float>(20.0 * std::log10(std::abs(buf[b]) + 1e-6));
    }
  }
  return spec;
}

/// Bilinear resampling of a rows x cols grid on a corner-aligned grid: output
/// corners sample input corners exactly.
inline std::vector<float> resize_bilinear(std::span<const float> values, std::size_t rows, std::size_t cols,
                                          std::size_t out_h, std::size_t out_w) {
  if (rows == 0 || cols == 0 || values.size() != rows * cols) {
    fail(Errc::ShapeMismatch, "resize_bilinear needs a non-empty rows x cols grid");
  }
  if (out_h == 0 || out_w == 0) fail(Errc::InvalidArgument, "resize target must be non-empty");
  auto coord = [](std::size_t i, std::size_t in, std::size_t out) {
    return out == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  };
  std::vector<float> out(out_h * out_w);
  for (std::size_t i = 0; i < out_h; ++i) {
    const double y = coord(i, rows, out_h);
    const auto y0 = std::min(static_cast<std::size_t>(y), rows - 1);
    const std::size_t y1 = std::min(y0 + 1, rows - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t j = 0; j < out_w; ++j) {
      const double x = coord(j, cols, out_w);
      const auto x0 = std::min(static_cast<std::size_t>(x), cols - 1);
      const std::size_t x1 = std::min(x0 + 1, cols - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = (1.0 - fx) * values[y0 * cols + x0] + fx * values[y0 * cols + x1];
      const double bottom = (1.0 - fx) * values[y1 * cols + x0] + fx * values[y1 * cols + x1];
      out[i * out_w + j] = static_cast<float>((1.0 - fy) * top + fy * bottom);
    }
  }
  return out;
}

inline std::vector<float> resize_bilinear(const Spectrogram& spec, std::size_t out_h, std::size_t out_w) {
  return resize_bilinear(spec.values, spec.frames, spec.bins, out_h, out_w);
}

/// Per-example z-score. A (near-)constant grid maps to all zeros.
inline FeatureTensor standardize(std::vector<float> values, std::size_t height, std::size_t width) {
  double mean = 0.0;
  for (float v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (float v : values) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / static_cast<double>(values.size()));
  for (float& v : values) v = stddev < 1e-8 ? 0.0f : static_cast<float>((v - mean) / stddev);
  return {height, width, std::move(values)};
}

/// resample -> pad_or_trim -> stft -> bilinear resize -> z-score.
/// Rows of the result are time frames, columns are frequency bins.
inline FeatureTensor featurize(const AudioClip& clip, const PipelineConfig& cfg) {
  cfg.validate();
  const AudioClip fixed = pad_or_trim(resample(clip, cfg.sample_rate), cfg.duration_s);
  const Spectrogram spec = stft(fixed, cfg.stft());
  return standardize(resize_bilinear(spec, cfg.height, cfg.width), cfg.height, cfg.width);
}

}  // namespace emoser
