#pragma once

// WAV decoding, mono mixdown, linear resampling and one-second segmentation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "rvcguard/errors.hpp"

namespace rvcguard {

// All analysis runs on mono audio at this rate.
inline constexpr int kCanonicalRate = 22050;

struct AudioBuffer {
  int sample_rate = kCanonicalRate;
  int channels = 1;
  // Interleaved by channel, amplitudes in [-1, 1].
  std::vector<double> samples;

  std::size_t frames() const {
    return channels > 0 ? samples.size() / static_cast<std::size_t>(channels) : 0;
  }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(frames()) / sample_rate : 0.0;
  }
};

// One second of mono audio at the canonical rate.
struct AudioWindow {
  std::size_t index = 0;
  double start_time_s = 0.0;
  std::vector<double> samples;
};

namespace detail {

inline std::uint16_t read_u16le(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

inline std::uint32_t read_u32le(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) |
         (static_cast<std::uint32_t>(b[off + 1]) << 8) |
         (static_cast<std::uint32_t>(b[off + 2]) << 16) |
         (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

inline std::string at_offset(const std::string& msg, std::size_t offset) {
  return msg + " at byte offset " + std::to_string(offset);
}

inline constexpr std::uint16_t kFormatPcm = 1;
inline constexpr std::uint16_t kFormatFloat = 3;
inline constexpr std::uint16_t kFormatExtensible = 0xFFFE;

inline double pcm16_to_unit(std::int16_t v) { return static_cast<double>(v) / 32768.0; }

}  // namespace detail

// Decodes a RIFF/WAVE byte image holding 16-bit PCM or 32-bit float audio with
// one or two channels. Integer samples are scaled by 1/32768; float samples are
// clamped to [-1, 1].
//
// A data chunk that claims more bytes than the image holds (common for WAVs
// written by streaming recorders) is read up to the last complete frame.
inline AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
  using detail::at_offset;
  if (bytes.size() < 12) throw DecodeError(at_offset("file shorter than RIFF header", bytes.size()));
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0)
    throw DecodeError(at_offset("missing RIFF magic", 0));
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DecodeError(at_offset("missing WAVE form type", 8));

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  std::size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const std::uint32_t size = detail::read_u32le(bytes, off + 4);
    const std::size_t body = off + 8;
    if (std::memcmp(bytes.data() + off, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size())
        throw DecodeError(at_offset("truncated fmt chunk", off));
      format = detail::read_u16le(bytes, body);
      channels = detail::read_u16le(bytes, body + 2);
      rate = detail::read_u32le(bytes, body + 4);
      block_align = detail::read_u16le(bytes, body + 12);
      bits = detail::read_u16le(bytes, body + 14);
      if (format == detail::kFormatExtensible) {
        // cbSize(2) validBits(2) channelMask(4) then the subformat GUID, whose
        // first two bytes carry the plain format tag.
        if (size < 40 || body + 26 > bytes.size())
          throw DecodeError(at_offset("truncated WAVE_FORMAT_EXTENSIBLE fmt chunk", off));
        format = detail::read_u16le(bytes, body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(bytes.data() + off, "data", 4) == 0) {
      if (!have_fmt) throw DecodeError(at_offset("data chunk before fmt chunk", off));
      if (channels < 1 || channels > 2)
        throw UnsupportedFormat("unsupported channel count " + std::to_string(channels));
      if (rate == 0) throw DecodeError(at_offset("zero sample rate in fmt chunk", off));
      const bool pcm16 = format == detail::kFormatPcm && bits == 16;
      const bool float32 = format == detail::kFormatFloat && bits == 32;
      if (!pcm16 && !float32)
        throw UnsupportedFormat("unsupported WAV encoding: format tag " + std::to_string(format) +
                                ", " + std::to_string(bits) + " bits");
      const std::size_t bytes_per_sample = bits / 8;
      const std::size_t frame_bytes = bytes_per_sample * channels;
      if (block_align != 0 && block_align != frame_bytes)
        throw DecodeError(at_offset("block align disagrees with channels and bit depth", off));

      std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
      avail -= avail % frame_bytes;
      AudioBuffer out;
      out.sample_rate = static_cast<int>(rate);
      out.channels = channels;
      out.samples.reserve(avail / bytes_per_sample);
      for (std::size_t p = body; p < body + avail; p += bytes_per_sample) {
        if (pcm16) {
          out.samples.push_back(
              detail::pcm16_to_unit(static_cast<std::int16_t>(detail::read_u16le(bytes, p))));
        } else {
          const std::uint32_t raw = detail::read_u32le(bytes, p);
          float f;
          std::memcpy(&f, &raw, sizeof f);
          double v = static_cast<double>(f);
          if (!std::isfinite(v)) throw DecodeError(at_offset("non-finite float sample", p));
          out.samples.push_back(std::clamp(v, -1.0, 1.0));
        }
      }
      return out;
    }
    // Chunks are word aligned.
    off = body + size + (size & 1u);
  }
  if (!have_fmt) throw DecodeError(at_offset("no fmt chunk found", off));
  throw DecodeError(at_offset("no data chunk found", off));
}

// Headerless little-endian 16-bit PCM at a declared rate.
inline AudioBuffer decode_raw_pcm16(std::span<const std::uint8_t> bytes, int sample_rate,
                                    int channels = 1) {
  if (sample_rate <= 0) throw ConfigError("raw PCM sample rate must be positive");
  if (channels < 1 || channels > 2) throw UnsupportedFormat("unsupported channel count");
  const std::size_t frame_bytes = 2 * static_cast<std::size_t>(channels);
  if (bytes.size() % frame_bytes != 0)
    throw DecodeError(detail::at_offset("raw PCM stream ends mid-frame",
                                        bytes.size() - bytes.size() % frame_bytes));
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.channels = channels;
  out.samples.reserve(bytes.size() / 2);
  for (std::size_t p = 0; p + 1 < bytes.size(); p += 2)
    out.samples.push_back(
        detail::pcm16_to_unit(static_cast<std::int16_t>(detail::read_u16le(bytes, p))));
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline AudioBuffer read_wav_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_wav(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

// Mean across channels, frame by frame.
inline AudioBuffer to_mono(const AudioBuffer& buffer) {
  if (buffer.channels == 1) return buffer;
  AudioBuffer out;
  out.sample_rate = buffer.sample_rate;
  out.channels = 1;
  const auto ch = static_cast<std::size_t>(buffer.channels);
  const std::size_t n = buffer.frames();
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < ch; ++c) sum += buffer.samples[i * ch + c];
    out.samples[i] = sum / static_cast<double>(ch);
  }
  return out;
}

// Linear-interpolation resampling of a mono buffer. Output sample i is read at
// source position i * source_rate / target_rate; positions past the last
// sample hold the last value.
inline AudioBuffer resample(const AudioBuffer& buffer, int target_rate) {
  if (target_rate <= 0) throw ConfigError("target sample rate must be positive");
  if (buffer.channels != 1) throw ConfigError("resample expects a mono buffer");
  if (buffer.sample_rate == target_rate) return buffer;

  AudioBuffer out;
  out.sample_rate = target_rate;
  out.channels = 1;
  const auto& in = buffer.samples;
  if (in.empty()) return out;

  const double step = static_cast<double>(buffer.sample_rate) / target_rate;
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(in.size()) * target_rate / buffer.sample_rate));
  out.samples.resize(n_out);
  const std::size_t last = in.size() - 1;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto lo = static_cast<std::size_t>(pos);
    if (lo >= last) {
      out.samples[i] = in[last];
      continue;
    }
    const double t = pos - static_cast<double>(lo);
    // a + t*(b-a) keeps constant signals exact.
    out.samples[i] = in[lo] + t * (in[lo + 1] - in[lo]);
  }
  return out;
}

// Mono, canonical rate.
inline AudioBuffer to_canonical(const AudioBuffer& buffer) {
  return resample(to_mono(buffer), kCanonicalRate);
}

// Non-overlapping one-second windows; the trailing partial second is dropped.
inline std::vector<AudioWindow> segment_windows(const AudioBuffer& buffer) {
  if (buffer.channels != 1) throw ConfigError("segment_windows expects a mono buffer");
  if (buffer.sample_rate <= 0) throw ConfigError("sample rate must be positive");
  const auto rate = static_cast<std::size_t>(buffer.sample_rate);
  const std::size_t n = buffer.samples.size() / rate;
  std::vector<AudioWindow> windows;
  windows.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    const auto first = buffer.samples.begin() + static_cast<std::ptrdiff_t>(w * rate);
    windows.push_back(AudioWindow{w, static_cast<double>(w),
                                  std::vector<double>(first, first + static_cast<std::ptrdiff_t>(rate))});
  }
  return windows;
}

}  // namespace rvcguard
