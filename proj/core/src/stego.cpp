#include "parasite/stego.hpp"

#include <string>

namespace parasite {

namespace {
constexpr double kBandTolerance = 1e-12;
constexpr double kTinyRms = 1e-12;
}  // namespace

void StegoConfig::validate() const {
  if (!std::isfinite(lambda)) throw ConfigError("lambda must be finite");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0, got " + std::to_string(lambda));
  if (!(band_lo >= 0.0 && band_lo < band_hi && band_hi <= 1.0)) {
    throw ConfigError("band must satisfy 0 <= band_lo < band_hi <= 1, got [" + std::to_string(band_lo) + ", " +
                      std::to_string(band_hi) + "]");
  }
  if (!(strength_floor > 0.0) || !std::isfinite(strength_floor)) throw ConfigError("strength_floor must be > 0");
}

BandMask::BandMask(int n, std::vector<std::uint8_t> bits) : n_(n), bits_(std::move(bits)) {
  if (bits_.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n)) {
    throw ShapeError("band mask bit count does not match its size");
  }
  for (auto b : bits_) count_ += b != 0 ? 1 : 0;
}

BandMask make_band_mask(int n, const StegoConfig& cfg) {
  cfg.validate();
  if (n < 2) throw ShapeError("band mask needs n >= 2, got " + std::to_string(n));
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
  const double denom = 2.0 * (n - 1);
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u == 0 && v == 0) continue;
      const double radius = (u + v) / denom;
      if (radius >= cfg.band_lo - kBandTolerance && radius <= cfg.band_hi + kBandTolerance) {
        bits[static_cast<std::size_t>(u) * n + v] = 1;
      }
    }
  }
  BandMask mask(n, std::move(bits));
  if (mask.count() == 0) throw ConfigError("embedding band selects no coefficients at n = " + std::to_string(n));
  return mask;
}

double masked_rms(const CoefTensor& coef, const BandMask& mask) {
  if (coef.height() != mask.size() || coef.width() != mask.size()) throw ShapeError("mask/coefficient size mismatch");
  double acc = 0.0;
  std::size_t count = 0;
  for (int u = 0; u < coef.height(); ++u) {
    for (int v = 0; v < coef.width(); ++v) {
      if (!mask(u, v)) continue;
      for (int ch = 0; ch < coef.channels(); ++ch) {
        const double c = coef.at(u, v, ch);
        acc += c * c;
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : std::sqrt(acc / static_cast<double>(count));
}

double adaptive_strength(const CoefTensor& host_coef, const BandMask& mask, double floor) {
  return std::max(masked_rms(host_coef, mask), floor);
}

namespace {

void require_pair(const ImageTensor& a, const ImageTensor& b) {
  a.require_same_shape(b);
  if (a.empty() || !a.shape().square()) throw ShapeError("stego images must be square and non-empty");
}

// M . coef, zero elsewhere.
CoefTensor apply_mask(CoefTensor coef, const BandMask& mask) {
  for (int u = 0; u < coef.height(); ++u) {
    for (int v = 0; v < coef.width(); ++v) {
      if (mask(u, v)) continue;
      for (int ch = 0; ch < coef.channels(); ++ch) coef.at(u, v, ch) = 0.0;
    }
  }
  return coef;
}

}  // namespace

Embedding embed(const ImageTensor& host, const ImageTensor& target, const StegoConfig& cfg) {
  require_pair(host, target);
  cfg.validate();
  BandMask mask = make_band_mask(host.height(), cfg);

  CoefTensor host_coef = dct2(host);
  const double strength = adaptive_strength(host_coef, mask, cfg.strength_floor);

  CoefTensor payload = apply_mask(dct2(target), mask);
  const double target_rms = std::max(masked_rms(payload, mask), kTinyRms);
  payload *= cfg.lambda * strength / target_rms;

  host_coef += payload;
  ImageTensor poisoned = idct2(host_coef);
  if (cfg.clamp_output) poisoned = clamp_unit(std::move(poisoned));
  return Embedding{std::move(poisoned), std::move(mask), strength};
}

ImageTensor extract(const ImageTensor& poisoned, const ImageTensor& host, const StegoConfig& cfg) {
  require_pair(poisoned, host);
  cfg.validate();
  if (cfg.lambda == 0.0) throw ConfigError("extraction is undefined at lambda = 0");
  const BandMask mask = make_band_mask(host.height(), cfg);
  const CoefTensor host_coef = dct2(host);
  const double strength = adaptive_strength(host_coef, mask, cfg.strength_floor);
  CoefTensor diff = apply_mask(dct2(poisoned) - host_coef, mask);
  diff *= 1.0 / (cfg.lambda * strength);
  return idct2(diff);
}

ImageTensor band_limit(const ImageTensor& img, const StegoConfig& cfg) {
  if (img.empty() || !img.shape().square()) throw ShapeError("band_limit needs a square image");
  return idct2(apply_mask(dct2(img), make_band_mask(img.height(), cfg)));
}

}  // namespace parasite
