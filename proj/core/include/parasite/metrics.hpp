#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "parasite/dataset.hpp"

namespace parasite {

enum class MatchMode {
  // Each generation is scored against one target: targets has either one
  // image or exactly one per generation (paired by index).
  single,
  // Each generation is scored against its best match in the target pool.
  best_over_pool,
};

struct AsrConfig {
  double threshold = 0.8;
  std::size_t samples = 200;
  MatchMode mode = MatchMode::single;

  void validate() const;
};

// Per-generation ncc against the designated target (or best pool match).
std::vector<double> target_scores(const Dataset& generated, const Dataset& targets, MatchMode mode);

// Fraction of generations whose score reaches cfg.threshold.
double asr(const Dataset& generated, const Dataset& targets, const AsrConfig& cfg);
double asr_from_scores(const std::vector<double>& scores, double threshold);

// ---- desk-FID -----------------------------------------------------------------

inline constexpr int kFeatureGrid = 8;
inline constexpr std::size_t kFeatureDim = kFeatureGrid * kFeatureGrid;
// Covariance rank guard: at least feature dimension + 1 samples.
inline constexpr std::size_t kMinFrechetSamples = kFeatureDim + 1;

// 8x8 area-average downsample, channels averaged, flattened row-major.
std::vector<double> fid_features(const ImageTensor& img);

struct FrechetStats {
  std::vector<double> mean;        // kFeatureDim
  std::vector<double> covariance;  // kFeatureDim x kFeatureDim, row-major
  std::size_t count = 0;
};

// Sample mean and unbiased covariance; the covariance is symmetrized and
// negative eigenvalues (rounding residue) are clipped to zero.
FrechetStats frechet_stats(const std::vector<std::vector<double>>& features);
FrechetStats frechet_stats(const Dataset& images);

struct FidReport {
  double distance = 0.0;
  double condition_a = 0.0;
  double condition_b = 0.0;
  bool ill_conditioned = false;
};

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}) with eigenvalue
// clipping in both square roots; condition numbers reported alongside.
FidReport desk_fid_report(const FrechetStats& a, const FrechetStats& b);
double desk_fid(const FrechetStats& a, const FrechetStats& b);

// Shortest text that reads back to the same double; nan / inf spelled out.
std::string format_number(double v);

// ---- concealment --------------------------------------------------------------

struct ConcealmentRow {
  std::string output_id;
  std::string source_id;
  std::string target_id;
  double lambda = 0.0;
  double psnr = 0.0;
  // ncc(extract(poisoned, host), band_limit(target)); NaN when lambda = 0.
  double extraction_ncc = 0.0;
  // Same reconstruction scored against the full target. The band drops the
  // low frequencies, so this stays well below extraction_ncc.
  double target_ncc = 0.0;
};

struct ConcealmentReport {
  std::vector<ConcealmentRow> rows;
  double mean_psnr = 0.0;
  double min_psnr = 0.0;
  double mean_ncc = 0.0;
  double min_ncc = 0.0;
  double mean_target_ncc = 0.0;

  [[nodiscard]] std::string to_csv() const;
  [[nodiscard]] std::string to_json() const;
};

// Rows follow the manifest; the band and strength floor come from cfg, lambda
// from each manifest entry.
ConcealmentReport concealment_report(const Dataset& hosts, const Dataset& poisoned, const PoisonManifest& manifest,
                                     const Dataset& targets, const StegoConfig& cfg);

}  // namespace parasite
