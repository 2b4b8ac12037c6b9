#pragma once

// Time-frequency and cepstral descriptors, and the 26-value per-window
// feature vector built from them.
//
// Fixed analysis parameters: n_fft 2048, hop 512, periodic Hann, no centre
// padding; 128 HTK mel bands over [0, sr/2]; log floor 1e-10; orthonormal
// DCT-II keeping 20 coefficients.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rvcguard/audio.hpp"
#include "rvcguard/errors.hpp"
#include "rvcguard/matrix.hpp"

namespace rvcguard {

inline constexpr std::size_t kFftSize = 2048;
inline constexpr std::size_t kHopSize = 512;
inline constexpr std::size_t kMelBands = 128;
inline constexpr std::size_t kMfccCount = 20;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kRolloffFraction = 0.85;

inline constexpr std::size_t kFeatureCount = 26;

// Column order of the DEEP-VOICE feature table.
inline const std::array<std::string, kFeatureCount>& feature_names() {
  static const std::array<std::string, kFeatureCount> names = [] {
    std::array<std::string, kFeatureCount> n{"chroma_stft",       "rms",     "spectral_centroid",
                                             "spectral_bandwidth", "rolloff", "zero_crossing_rate"};
    for (std::size_t i = 0; i < kMfccCount; ++i) n[6 + i] = "mfcc" + std::to_string(i + 1);
    return n;
  }();
  return names;
}

// FNV-1a over the comma-joined feature names. Stored with models so a model
// trained on a different column layout is rejected at load time.
inline std::string feature_checksum() {
  std::uint64_t h = 1469598103934665603ull;
  bool first = true;
  for (const auto& name : feature_names()) {
    if (!first) {
      h ^= static_cast<unsigned char>(',');
      h *= 1099511628211ull;
    }
    first = false;
    for (unsigned char ch : name) {
      h ^= ch;
      h *= 1099511628211ull;
    }
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

using FeatureVector = std::array<double, kFeatureCount>;

namespace feature_index {
inline constexpr std::size_t kChroma = 0;
inline constexpr std::size_t kRms = 1;
inline constexpr std::size_t kCentroid = 2;
inline constexpr std::size_t kBandwidth = 3;
inline constexpr std::size_t kRolloff = 4;
inline constexpr std::size_t kZcr = 5;
inline constexpr std::size_t kMfcc0 = 6;
}  // namespace feature_index

// Periodic Hann: w[i] = 0.5 (1 - cos(2 pi i / n)).
inline std::vector<double> hann_window(std::size_t n) {
  if (n == 0) throw ConfigError("window length must be at least 1");
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n)));
  return w;
}

namespace detail {

// Complex DFT plan. Radix-2 iterative Cooley-Tukey for power-of-two sizes,
// direct O(n^2) evaluation otherwise.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n), twiddle_(n) {
    for (std::size_t k = 0; k < n; ++k)
      twiddle_[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    pow2_ = n > 0 && (n & (n - 1)) == 0;
    if (pow2_) {
      bitrev_.resize(n);
      std::size_t bits = 0;
      while ((std::size_t{1} << bits) < n) ++bits;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b)
          if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
        bitrev_[i] = r;
      }
    }
  }

  std::size_t size() const { return n_; }

  // In place forward transform of a length-n buffer.
  void forward(std::vector<std::complex<double>>& x) const {
    if (!pow2_) {
      std::vector<std::complex<double>> out(n_);
      for (std::size_t k = 0; k < n_; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t t = 0; t < n_; ++t) acc += x[t] * twiddle_[(k * t) % n_];
        out[k] = acc;
      }
      x = std::move(out);
      return;
    }
    for (std::size_t i = 0; i < n_; ++i)
      if (i < bitrev_[i]) std::swap(x[i], x[bitrev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const auto u = x[start + j];
          const auto v = x[start + j + half] * twiddle_[j * stride];
          x[start + j] = u + v;
          x[start + j + half] = u - v;
        }
      }
    }
  }

 private:
  std::size_t n_;
  bool pow2_ = false;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::size_t> bitrev_;
};

// Mean that returns the common value exactly when all inputs are equal.
inline double stable_mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  const double base = xs[0];
  double acc = 0.0;
  for (double x : xs) acc += x - base;
  return base + acc / static_cast<double>(xs.size());
}

}  // namespace detail

struct Spectrogram {
  Matrix frames;  // n_frames x n_bins, |S|
  std::size_t n_fft = kFftSize;
  std::size_t hop = kHopSize;
  int sample_rate = kCanonicalRate;
  std::vector<double> bin_freqs;

  std::size_t n_frames() const { return frames.rows(); }
  std::size_t n_bins() const { return frames.cols(); }
};

inline std::size_t frame_count(std::size_t length, std::size_t frame, std::size_t hop) {
  return length < frame ? 0 : 1 + (length - frame) / hop;
}

inline std::vector<double> bin_frequencies(int sample_rate, std::size_t n_fft) {
  std::vector<double> f(n_fft / 2 + 1);
  for (std::size_t k = 0; k < f.size(); ++k)
    f[k] = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
  return f;
}

// Short-time magnitude spectrum. Frames start at 0, hop, 2*hop, ... while
// fully inside the signal.
class StftAnalyzer {
 public:
  StftAnalyzer(std::size_t n_fft = kFftSize, std::size_t hop = kHopSize, int sample_rate = kCanonicalRate)
      : n_fft_(n_fft), hop_(hop), sample_rate_(sample_rate), window_(hann_window(n_fft)), plan_(n_fft) {
    if (hop == 0) throw ConfigError("hop must be at least 1");
    if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
  }

  Spectrogram operator()(std::span<const double> samples) const {
    if (samples.size() < n_fft_)
      throw InsufficientSamples("need at least " + std::to_string(n_fft_) + " samples, got " +
                                std::to_string(samples.size()));
    const std::size_t n_frames = frame_count(samples.size(), n_fft_, hop_);
    const std::size_t n_bins = n_fft_ / 2 + 1;
    Spectrogram spec;
    spec.frames = Matrix(n_frames, n_bins);
    spec.n_fft = n_fft_;
    spec.hop = hop_;
    spec.sample_rate = sample_rate_;
    spec.bin_freqs = bin_frequencies(sample_rate_, n_fft_);
    std::vector<std::complex<double>> buf(n_fft_);
    for (std::size_t f = 0; f < n_frames; ++f) {
      const std::size_t start = f * hop_;
      for (std::size_t i = 0; i < n_fft_; ++i) buf[i] = samples[start + i] * window_[i];
      plan_.forward(buf);
      auto row = spec.frames.row(f);
      for (std::size_t k = 0; k < n_bins; ++k) row[k] = std::abs(buf[k]);
    }
    return spec;
  }

 private:
  std::size_t n_fft_;
  std::size_t hop_;
  int sample_rate_;
  std::vector<double> window_;
  detail::FftPlan plan_;
};

inline Spectrogram stft(std::span<const double> samples, std::size_t n_fft = kFftSize,
                        std::size_t hop = kHopSize, int sample_rate = kCanonicalRate) {
  return StftAnalyzer(n_fft, hop, sample_rate)(samples);
}

// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// n_mels + 2 edge frequencies equally spaced in mel from fmin to fmax.
inline std::vector<double> mel_edge_frequencies(std::size_t n_mels, double fmin, double fmax) {
  const double lo = hz_to_mel(fmin);
  const double hi = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  return edges;
}

// Triangular filters, n_mels x (n_fft/2 + 1). Filter j rises from edge j to
// edge j+1 and falls to edge j+2. No area normalisation.
inline Matrix mel_filterbank(int sample_rate, std::size_t n_fft, std::size_t n_mels, double fmin,
                             double fmax) {
  if (sample_rate <= 0 || n_fft == 0 || n_mels == 0) throw ConfigError("invalid mel filterbank shape");
  if (!(fmin >= 0.0) || !(fmin < fmax) || fmax > sample_rate / 2.0)
    throw ConfigError("mel filterbank requires 0 <= fmin < fmax <= sample_rate/2");
  const auto edges = mel_edge_frequencies(n_mels, fmin, fmax);
  const auto freqs = bin_frequencies(sample_rate, n_fft);
  Matrix fb(n_mels, freqs.size());
  for (std::size_t j = 0; j < n_mels; ++j) {
    const double lo = edges[j], mid = edges[j + 1], hi = edges[j + 2];
    for (std::size_t k = 0; k < freqs.size(); ++k) {
      const double up = (freqs[k] - lo) / (mid - lo);
      const double down = (hi - freqs[k]) / (hi - mid);
      fb(j, k) = std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

inline Matrix default_mel_filterbank(int sample_rate = kCanonicalRate) {
  return mel_filterbank(sample_rate, kFftSize, kMelBands, 0.0, sample_rate / 2.0);
}

// filterbank x |S|^2 per frame: n_frames x n_mels.
inline Matrix mel_energies(const Spectrogram& spec, const Matrix& filterbank) {
  if (filterbank.cols() != spec.n_bins())
    throw ConfigError("filterbank width " + std::to_string(filterbank.cols()) +
                      " does not match spectrogram bins " + std::to_string(spec.n_bins()));
  Matrix out(spec.n_frames(), filterbank.rows());
  std::vector<double> power(spec.n_bins());
  for (std::size_t f = 0; f < spec.n_frames(); ++f) {
    const auto mags = spec.frames.row(f);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = mags[k] * mags[k];
    for (std::size_t j = 0; j < filterbank.rows(); ++j) {
      const auto w = filterbank.row(j);
      double e = 0.0;
      for (std::size_t k = 0; k < power.size(); ++k) e += w[k] * power[k];
      out(f, j) = e;
    }
  }
  return out;
}

// Orthonormal DCT-II, first n_out coefficients.
//
// Coefficients k >= 1 are computed on mean-removed input. The cosine basis for
// k >= 1 sums to zero, so this is the same transform, but a constant input now
// yields exact zeros instead of rounding residue.
class DctII {
 public:
  DctII(std::size_t n_in, std::size_t n_out) : n_in_(n_in), n_out_(n_out), basis_(n_out, n_in) {
    if (n_in == 0 || n_out == 0 || n_out > n_in) throw ConfigError("invalid DCT shape");
    const double n = static_cast<double>(n_in);
    for (std::size_t k = 0; k < n_out; ++k) {
      const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      for (std::size_t i = 0; i < n_in; ++i)
        basis_(k, i) = scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                                        (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
    }
  }

  std::vector<double> operator()(std::span<const double> x) const {
    if (x.size() != n_in_) throw ShapeError("DCT input length mismatch");
    std::vector<double> out(n_out_);
    const double mean = detail::stable_mean(x);
    out[0] = std::sqrt(static_cast<double>(n_in_)) * mean;
    for (std::size_t k = 1; k < n_out_; ++k) {
      const auto b = basis_.row(k);
      double acc = 0.0;
      for (std::size_t i = 0; i < n_in_; ++i) acc += b[i] * (x[i] - mean);
      out[k] = acc;
    }
    return out;
  }

 private:
  std::size_t n_in_;
  std::size_t n_out_;
  Matrix basis_;
};

inline std::vector<double> dct_ii_ortho(std::span<const double> x, std::size_t n_out) {
  return DctII(x.size(), n_out)(x);
}

// log(max(mel energy, 1e-10)) then DCT over the mel axis: n_frames x n_coeffs.
inline Matrix mfcc_frames(const Spectrogram& spec, const Matrix& filterbank,
                          std::size_t n_coeffs = kMfccCount) {
  const Matrix energies = mel_energies(spec, filterbank);
  const DctII dct(filterbank.rows(), n_coeffs);
  Matrix out(spec.n_frames(), n_coeffs);
  std::vector<double> logged(filterbank.rows());
  for (std::size_t f = 0; f < spec.n_frames(); ++f) {
    const auto e = energies.row(f);
    for (std::size_t j = 0; j < logged.size(); ++j) logged[j] = std::log(std::max(e[j], kLogFloor));
    const auto c = dct(logged);
    std::copy(c.begin(), c.end(), out.row(f).begin());
  }
  return out;
}

// Magnitude-weighted mean frequency; 0 for an all-zero frame.
inline double spectral_centroid(std::span<const double> mags, std::span<const double> freqs) {
  double total = 0.0, weighted = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    total += mags[k];
    weighted += freqs[k] * mags[k];
  }
  return total > 0.0 ? weighted / total : 0.0;
}

inline double spectral_bandwidth(std::span<const double> mags, std::span<const double> freqs,
                                 double centroid) {
  double total = 0.0, spread = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    const double d = freqs[k] - centroid;
    total += mags[k];
    spread += mags[k] * d * d;
  }
  return total > 0.0 ? std::sqrt(spread / total) : 0.0;
}

// Frequency of the first bin at which cumulative magnitude reaches
// fraction * total.
inline double spectral_rolloff(std::span<const double> mags, std::span<const double> freqs,
                               double fraction = kRolloffFraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("rolloff fraction must be in (0, 1]");
  double total = 0.0;
  for (double m : mags) total += m;
  if (total <= 0.0) return 0.0;
  const double target = fraction * total;
  double cum = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    cum += mags[k];
    if (cum >= target) return freqs[k];
  }
  return freqs.back();
}

// Mean over frames of the fraction of adjacent sample pairs whose signs
// differ. Zero counts as nonnegative.
inline double zero_crossing_rate(std::span<const double> samples, std::size_t frame = kFftSize,
                                 std::size_t hop = kHopSize) {
  if (frame < 2 || hop == 0) throw ConfigError("invalid zero-crossing framing");
  const std::size_t n_frames = frame_count(samples.size(), frame, hop);
  if (n_frames == 0) throw InsufficientSamples("signal shorter than one frame");
  double acc = 0.0;
  for (std::size_t f = 0; f < n_frames; ++f) {
    const auto x = samples.subspan(f * hop, frame);
    std::size_t crossings = 0;
    for (std::size_t i = 1; i < frame; ++i)
      if ((x[i - 1] >= 0.0) != (x[i] >= 0.0)) ++crossings;
    acc += static_cast<double>(crossings) / static_cast<double>(frame - 1);
  }
  return acc / static_cast<double>(n_frames);
}

// Mean over frames of sqrt(mean(x^2)).
inline double rms_frames(std::span<const double> samples, std::size_t frame = kFftSize,
                         std::size_t hop = kHopSize) {
  if (frame == 0 || hop == 0) throw ConfigError("invalid rms framing");
  const std::size_t n_frames = frame_count(samples.size(), frame, hop);
  if (n_frames == 0) throw InsufficientSamples("signal shorter than one frame");
  std::vector<double> per_frame(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const auto x = samples.subspan(f * hop, frame);
    double sq = 0.0;
    for (double v : x) sq += v * v;
    per_frame[f] = std::sqrt(sq / static_cast<double>(frame));
  }
  return detail::stable_mean(per_frame);
}

inline constexpr double kChromaMinHz = 20.0;

// Pitch class of a frequency relative to A4 = 440 Hz; -1 below 20 Hz.
inline int pitch_class(double hz) {
  if (hz < kChromaMinHz) return -1;
  const long midi = std::lround(12.0 * std::log2(hz / 440.0) + 69.0);
  return static_cast<int>(((midi % 12) + 12) % 12);
}

// Per-frame 12-class profiles, each scaled so its maximum is 1 (all-zero
// frames stay zero): n_frames x 12.
inline Matrix chroma_profiles(const Spectrogram& spec) {
  std::vector<int> classes(spec.n_bins());
  for (std::size_t k = 0; k < classes.size(); ++k) classes[k] = pitch_class(spec.bin_freqs[k]);
  Matrix out(spec.n_frames(), 12);
  for (std::size_t f = 0; f < spec.n_frames(); ++f) {
    const auto mags = spec.frames.row(f);
    auto profile = out.row(f);
    for (std::size_t k = 0; k < mags.size(); ++k)
      if (classes[k] >= 0) profile[static_cast<std::size_t>(classes[k])] += mags[k];
    const double peak = *std::max_element(profile.begin(), profile.end());
    if (peak > 0.0)
      for (double& v : profile) v /= peak;
  }
  return out;
}

inline double chroma_mean(const Spectrogram& spec) {
  if (spec.n_frames() == 0) return 0.0;
  const Matrix profiles = chroma_profiles(spec);
  double acc = 0.0;
  for (double v : profiles.data()) acc += v;
  return acc / static_cast<double>(profiles.rows() * profiles.cols());
}

// Reusable extractor holding the window, FFT plan, filterbank and DCT basis.
// Stateless after construction; safe to share across threads.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(int sample_rate = kCanonicalRate)
      : sample_rate_(sample_rate),
        stft_(kFftSize, kHopSize, sample_rate),
        filterbank_(default_mel_filterbank(sample_rate)) {}

  int sample_rate() const { return sample_rate_; }
  const Matrix& filterbank() const { return filterbank_; }

  Spectrogram spectrogram(std::span<const double> samples) const { return stft_(samples); }

  FeatureVector operator()(std::span<const double> samples) const {
    const Spectrogram spec = stft_(samples);
    FeatureVector v{};
    v[feature_index::kChroma] = chroma_mean(spec);
    v[feature_index::kRms] = rms_frames(samples);

    const std::size_t n = spec.n_frames();
    std::vector<double> centroid(n), bandwidth(n), rolloff(n);
    for (std::size_t f = 0; f < n; ++f) {
      const auto mags = spec.frames.row(f);
      centroid[f] = spectral_centroid(mags, spec.bin_freqs);
      bandwidth[f] = spectral_bandwidth(mags, spec.bin_freqs, centroid[f]);
      rolloff[f] = spectral_rolloff(mags, spec.bin_freqs);
    }
    v[feature_index::kCentroid] = detail::stable_mean(centroid);
    v[feature_index::kBandwidth] = detail::stable_mean(bandwidth);
    v[feature_index::kRolloff] = detail::stable_mean(rolloff);
    v[feature_index::kZcr] = zero_crossing_rate(samples);

    const Matrix mfcc = mfcc_frames(spec, filterbank_);
    std::vector<double> column(n);
    for (std::size_t c = 0; c < kMfccCount; ++c) {
      for (std::size_t f = 0; f < n; ++f) column[f] = mfcc(f, c);
      v[feature_index::kMfcc0 + c] = detail::stable_mean(column);
    }
    return v;
  }

 private:
  int sample_rate_;
  StftAnalyzer stft_;
  Matrix filterbank_;
};

inline const FeatureExtractor& default_extractor() {
  static const FeatureExtractor extractor;
  return extractor;
}

inline FeatureVector extract_window_features(const AudioWindow& window) {
  return default_extractor()(window.samples);
}

}  // namespace rvcguard
