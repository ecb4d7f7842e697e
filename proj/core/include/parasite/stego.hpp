#pragma once

// Frequency-domain trigger embedding: the target image is written into a
// mid-frequency band of the host's DCT coefficients, scaled by the host's own
// in-band energy and by the visibility coefficient lambda.

#include <cstdint>
#include <vector>

#include "parasite/ndmath.hpp"

namespace parasite {

struct StegoConfig {
  double lambda = 0.05;
  // Normalized frequency radius (u + v) / 2(N - 1) bounds of the embedding band.
  double band_lo = 0.15;
  double band_hi = 0.5;
  // Lower bound on the adaptive strength; smooth hosts carry almost no
  // in-band energy and would otherwise receive no trigger at all.
  double strength_floor = 1.5;
  bool clamp_output = true;

  void validate() const;
};

class BandMask {
 public:
  BandMask() = default;
  BandMask(int n, std::vector<std::uint8_t> bits);

  [[nodiscard]] int size() const noexcept { return n_; }
  [[nodiscard]] bool operator()(int u, int v) const noexcept {
    return bits_[static_cast<std::size_t>(u) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(v)] != 0;
  }
  [[nodiscard]] std::size_t count() const noexcept { return count_; }
  [[nodiscard]] const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  friend bool operator==(const BandMask&, const BandMask&) = default;

 private:
  int n_ = 0;
  std::vector<std::uint8_t> bits_;
  std::size_t count_ = 0;
};

// Entry (u, v) is set iff band_lo <= (u + v) / 2(n - 1) <= band_hi; DC is
// never set. Throws ConfigError when the band selects nothing.
BandMask make_band_mask(int n, const StegoConfig& cfg);

// Root-mean-square of the coefficients under the mask, pooled over channels.
double masked_rms(const CoefTensor& coef, const BandMask& mask);

// Adaptive embedding strength for a host: max(masked_rms(host), floor).
double adaptive_strength(const CoefTensor& host_coef, const BandMask& mask, double floor);

struct Embedding {
  ImageTensor poisoned;
  BandMask mask;
  double strength = 0.0;
};

// poisoned = IDCT(DCT(host) + lambda * s * M . DCT(target) / rms_M(DCT(target))),
// optionally clamped to [-1, 1] after the inverse transform.
Embedding embed(const ImageTensor& host, const ImageTensor& target, const StegoConfig& cfg);

// Non-blind reconstruction of the band-limited, RMS-normalized target. Needs
// the original host; used to verify embeddings, not to detect them.
ImageTensor extract(const ImageTensor& poisoned, const ImageTensor& host, const StegoConfig& cfg);

// idct2(M . dct2(img)): the part of an image the embedding band can carry.
ImageTensor band_limit(const ImageTensor& img, const StegoConfig& cfg);

}  // namespace parasite
