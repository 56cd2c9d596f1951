#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emoser/error.hpp"

namespace emoser {

/// Mono float samples in [-1, 1] at a positive sample rate.
class AudioClip {
 public:
  AudioClip(std::vector<float> samples, std::uint32_t sample_rate,
            std::optional<std::string> source_name = std::nullopt)
      : samples_(std::move(samples)), sample_rate_(sample_rate), source_name_(std::move(source_name)) {
    if (sample_rate_ == 0) fail(Errc::InvalidArgument, "sample_rate must be positive");
    for (float s : samples_) {
      if (!(s >= -1.0f && s <= 1.0f)) fail(Errc::InvalidArgument, "sample outside [-1, 1]");
    }
  }

  std::span<const float> samples() const { return samples_; }
  std::uint32_t sample_rate() const { return sample_rate_; }
  const std::optional<std::string>& source_name() const { return source_name_; }
  std::size_t size() const { return samples_.size(); }
  double duration_s() const { return static_cast<double>(samples_.size()) / sample_rate_; }

  friend bool operator==(const AudioClip&, const AudioClip&) = default;

 private:
  std::vector<float> samples_;
  std::uint32_t sample_rate_;
  std::optional<std::string> source_name_;
};

namespace detail {

inline std::uint16_t load_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t load_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void store_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void store_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline bool tag_is(const std::uint8_t* p, const char* tag) { return std::memcmp(p, tag, 4) == 0; }

}  // namespace detail

/// Decodes a RIFF/WAVE container holding 16-bit PCM (format code 1) with one
/// or two channels. Stereo is averaged to mono.
inline AudioClip read_wav(std::span<const std::uint8_t> bytes,
                          std::optional<std::string> source_name = std::nullopt) {
  using detail::load_u16;
  using detail::load_u32;
  if (bytes.size() < 12 || !detail::tag_is(bytes.data(), "RIFF") ||
      !detail::tag_is(bytes.data() + 8, "WAVE")) {
    fail(Errc::MalformedRiff, "missing RIFF/WAVE magic");
  }

  std::optional<std::uint16_t> format, channels, bits;
  std::uint32_t rate = 0;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t chunk_size = load_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (chunk_size > bytes.size() - body) fail(Errc::MalformedRiff, "chunk extends past end of file");
    if (detail::tag_is(hdr, "fmt ")) {
      if (chunk_size < 16) fail(Errc::MalformedRiff, "fmt chunk shorter than 16 bytes");
      const std::uint8_t* f = bytes.data() + body;
      format = load_u16(f);
      channels = load_u16(f + 2);
      rate = load_u32(f + 4);
      bits = load_u16(f + 14);
    } else if (detail::tag_is(hdr, "data")) {
      data = bytes.subspan(body, chunk_size);
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }

  if (!format) fail(Errc::MalformedRiff, "no fmt chunk");
  if (!have_data) fail(Errc::MalformedRiff, "no data chunk");
  if (*format != 1) fail(Errc::UnsupportedFormat, "format code " + std::to_string(*format) + " is not PCM");
  if (*bits != 16) fail(Errc::UnsupportedFormat, "bit depth " + std::to_string(*bits) + " is not 16");
  if (*channels != 1 && *channels != 2) {
    fail(Errc::UnsupportedFormat, std::to_string(*channels) + " channels");
  }
  if (rate == 0) fail(Errc::MalformedRiff, "sample rate is zero");

  const std::size_t frame_bytes = 2u * *channels;
  const std::size_t frames = data.size() / frame_bytes;
  if (frames == 0) fail(Errc::EmptyAudio, "data chunk holds no samples");

  std::vector<float> samples(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* p = data.data() + i * frame_bytes;
    if (*channels == 1) {
      samples[i] = static_cast<float>(static_cast<std::int16_t>(load_u16(p))) / 32768.0f;
    } else {
      const float l = static_cast<float>(static_cast<std::int16_t>(load_u16(p))) / 32768.0f;
      const float r = static_cast<float>(static_cast<std::int16_t>(load_u16(p + 2))) / 32768.0f;
      samples[i] = 0.5f * (l + r);
    }
  }
  return AudioClip(std::move(samples), rate, std::move(source_name));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline AudioClip read_wav_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return read_wav(bytes, path.filename().string());
}

/// Mono 16-bit PCM WAV encoding; samples are scaled by 32768 and clamped.
inline std::vector<std::uint8_t> encode_wav_pcm16(const AudioClip& clip) {
  using detail::store_u16;
  using detail::store_u32;
  const auto n = static_cast<std::uint32_t>(clip.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + 2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  store_u32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  store_u32(out, 16);
  store_u16(out, 1);
  store_u16(out, 1);
  store_u32(out, clip.sample_rate());
  store_u32(out, clip.sample_rate() * 2);
  store_u16(out, 2);
  store_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  store_u32(out, 2 * n);
  for (float s : clip.samples()) {
    const long v = std::clamp(std::lround(static_cast<double>(s) * 32768.0), -32768L, 32767L);
    store_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  return out;
}

/// Linear interpolation on the source grid. Output length is
/// round(n * target / source).
inline AudioClip resample(const AudioClip& clip, std::uint32_t target_rate) {
  if (target_rate == 0) fail(Errc::InvalidArgument, "target_rate must be positive");
  if (target_rate == clip.sample_rate()) return clip;

  const auto in = clip.samples();
  const double ratio = static_cast<double>(clip.sample_rate()) / target_rate;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(in.size()) * target_rate / clip.sample_rate()));
  std::vector<float> out(out_len);
  for (std::size_t k = 0; k < out_len; ++k) {
    const double t = static_cast<double>(k) * ratio;
    const auto i0 = static_cast<std::size_t>(t);
    if (i0 + 1 >= in.size()) {
      out[k] = in.back();
      continue;
    }
    const double frac = t - static_cast<double>(i0);
    out[k] = static_cast<float>((1.0 - frac) * in[i0] + frac * in[i0 + 1]);
  }
  return AudioClip(std::move(out), target_rate, clip.source_name());
}

/// Fixes the clip to round(duration_s * rate) samples: center crop when
/// longer, symmetric zero padding (odd remainder on the right) when shorter.
inline AudioClip pad_or_trim(const AudioClip& clip, double duration_s) {
  if (!(duration_s > 0.0)) fail(Errc::InvalidArgument, "duration_s must be positive");
  const auto target = static_cast<std::size_t>(std::llround(duration_s * clip.sample_rate()));
  const auto in = clip.samples();
  if (target == in.size()) return clip;

  std::vector<float> out(target, 0.0f);
  if (in.size() > target) {
    const std::size_t start = (in.size() - target) / 2;
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(start), target, out.begin());
  } else {
    const std::size_t left = (target - in.size()) / 2;
    std::copy(in.begin(), in.end(), out.begin() + static_cast<std::ptrdiff_t>(left));
  }
  return AudioClip(std::move(out), clip.sample_rate(), clip.source_name());
}

}  // namespace emoser
