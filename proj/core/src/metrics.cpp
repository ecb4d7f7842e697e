#include "parasite/metrics.hpp"

#include <array>
#include <charconv>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

namespace parasite {

namespace {
constexpr double kIllConditioned = 1e12;
constexpr double kEigenClip = 0.0;
}  // namespace

void AsrConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("ASR threshold must lie in (0, 1)");
}

std::vector<double> target_scores(const Dataset& generated, const Dataset& targets, MatchMode mode) {
  if (generated.empty() || targets.empty()) throw InputError("ASR needs non-empty generated and target sets");
  const int size = generated.shape().height;
  std::vector<ImageTensor> pool;
  pool.reserve(targets.size());
  for (const Sample& t : targets) pool.push_back(resize_nearest(t.image, size));

  if (mode == MatchMode::single && pool.size() != 1 && pool.size() != generated.size()) {
    throw InputError("single-target ASR needs one target or one per generation");
  }
  std::vector<double> scores;
  scores.reserve(generated.size());
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const ImageTensor& g = generated[i].image;
    if (mode == MatchMode::single) {
      scores.push_back(ncc(g, pool.size() == 1 ? pool.front() : pool[i]));
    } else {
      double best = -1.0;
      for (const ImageTensor& t : pool) best = std::max(best, ncc(g, t));
      scores.push_back(best);
    }
  }
  return scores;
}

double asr_from_scores(const std::vector<double>& scores, double threshold) {
  if (scores.empty()) throw InputError("ASR of an empty score list");
  const auto hits = std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= threshold; });
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double asr(const Dataset& generated, const Dataset& targets, const AsrConfig& cfg) {
  cfg.validate();
  return asr_from_scores(target_scores(generated, targets, cfg.mode), cfg.threshold);
}

std::vector<double> fid_features(const ImageTensor& img) {
  if (!img.shape().square() || img.height() % kFeatureGrid != 0 || img.empty()) {
    throw ShapeError("desk-FID features need a square image whose side is a multiple of 8, got " + img.shape().str());
  }
  const int cell = img.height() / kFeatureGrid;
  const double inv = 1.0 / (static_cast<double>(cell) * cell * img.channels());
  std::vector<double> f(kFeatureDim, 0.0);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      double& slot = f[static_cast<std::size_t>((r / cell) * kFeatureGrid + c / cell)];
      for (int ch = 0; ch < img.channels(); ++ch) slot += img.at(r, c, ch) * inv;
    }
  }
  return f;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd to_matrix(const std::vector<double>& v, std::size_t n) {
  MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r * n + c];
  }
  return m;
}

// Symmetric PSD square root with negative eigenvalues clipped to zero.
MatrixXd psd_sqrt(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  VectorXd ev = es.eigenvalues().cwiseMax(kEigenClip).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double condition_number(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().maxCoeff();
  const double lo = es.eigenvalues().minCoeff();
  if (hi <= 0.0) return std::numeric_limits<double>::infinity();
  return lo <= 0.0 ? std::numeric_limits<double>::infinity() : hi / lo;
}

void require_stats(const FrechetStats& s) {
  if (s.count < kMinFrechetSamples) {
    throw InputError("desk-FID needs statistics from >= " + std::to_string(kMinFrechetSamples) + " samples, got " +
                     std::to_string(s.count));
  }
  if (s.mean.size() != kFeatureDim || s.covariance.size() != kFeatureDim * kFeatureDim) {
    throw ShapeError("desk-FID statistics have the wrong dimension");
  }
}

}  // namespace

FrechetStats frechet_stats(const std::vector<std::vector<double>>& features) {
  if (features.size() < 2) throw InputError("Frechet statistics need at least two samples");
  const std::size_t dim = features.front().size();
  const auto n = static_cast<Eigen::Index>(features.size());
  MatrixXd x(n, static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& f = features[static_cast<std::size_t>(i)];
    if (f.size() != dim) throw ShapeError("feature vectors differ in length");
    for (std::size_t j = 0; j < dim; ++j) x(i, static_cast<Eigen::Index>(j)) = f[j];
  }
  const VectorXd mean = x.colwise().mean();
  const MatrixXd centred = x.rowwise() - mean.transpose();
  MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.transpose());

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  const VectorXd clipped = es.eigenvalues().cwiseMax(kEigenClip);
  cov = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
  cov = 0.5 * (cov + cov.transpose());

  FrechetStats s;
  s.count = features.size();
  s.mean.assign(mean.data(), mean.data() + mean.size());
  s.covariance.resize(dim * dim);
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = 0; c < dim; ++c) s.covariance[r * dim + c] = cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  return s;
}

FrechetStats frechet_stats(const Dataset& images) {
  std::vector<std::vector<double>> feats;
  feats.reserve(images.size());
  for (const Sample& s : images) feats.push_back(fid_features(s.image));
  return frechet_stats(feats);
}

FidReport desk_fid_report(const FrechetStats& a, const FrechetStats& b) {
  require_stats(a);
  require_stats(b);
  const MatrixXd sa = to_matrix(a.covariance, kFeatureDim);
  const MatrixXd sb = to_matrix(b.covariance, kFeatureDim);
  double mean_term = 0.0;
  for (std::size_t i = 0; i < kFeatureDim; ++i) {
    const double d = a.mean[i] - b.mean[i];
    mean_term += d * d;
  }
  // Tr((Sa Sb)^{1/2}) = Tr((Sa^{1/2} Sb Sa^{1/2})^{1/2}); the inner product is symmetric PSD.
  const MatrixXd root_a = psd_sqrt(sa);
  const MatrixXd inner = root_a * sb * root_a;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(kEigenClip).cwiseSqrt().sum();

  FidReport r;
  r.distance = std::max(0.0, mean_term + sa.trace() + sb.trace() - 2.0 * cross);
  r.condition_a = condition_number(sa);
  r.condition_b = condition_number(sb);
  r.ill_conditioned = !(r.condition_a < kIllConditioned && r.condition_b < kIllConditioned);
  return r;
}

double desk_fid(const FrechetStats& a, const FrechetStats& b) { return desk_fid_report(a, b).distance; }

ConcealmentReport concealment_report(const Dataset& hosts, const Dataset& poisoned, const PoisonManifest& manifest,
                                     const Dataset& targets, const StegoConfig& cfg) {
  ConcealmentReport rep;
  double psnr_sum = 0.0;
  double ncc_sum = 0.0;
  double target_ncc_sum = 0.0;
  std::size_t ncc_count = 0;
  rep.min_psnr = std::numeric_limits<double>::infinity();
  rep.min_ncc = std::numeric_limits<double>::infinity();
  for (const ManifestEntry& e : manifest.entries) {
    const Sample* host = hosts.find(e.source_id);
    const Sample* out = poisoned.find(e.output_id);
    const Sample* tgt = targets.find(e.target_id);
    if (host == nullptr || out == nullptr || tgt == nullptr) {
      throw InputError("manifest entry " + e.output_id + " has no matching host/poisoned/target item");
    }
    ConcealmentRow row{e.output_id, e.source_id, e.target_id, e.lambda, psnr(host->image, out->image),
                       std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    if (e.lambda > 0.0) {
      StegoConfig entry_cfg = cfg;
      entry_cfg.lambda = e.lambda;
      entry_cfg.band_lo = e.band_lo;
      entry_cfg.band_hi = e.band_hi;
      const ImageTensor target = resize_nearest(tgt->image, host->image.height());
      const ImageTensor recovered = extract(out->image, host->image, entry_cfg);
      row.extraction_ncc = ncc(recovered, band_limit(target, entry_cfg));
      row.target_ncc = ncc(recovered, target);
      ncc_sum += row.extraction_ncc;
      target_ncc_sum += row.target_ncc;
      ++ncc_count;
      rep.min_ncc = std::min(rep.min_ncc, row.extraction_ncc);
    }
    psnr_sum += row.psnr;
    rep.min_psnr = std::min(rep.min_psnr, row.psnr);
    rep.rows.push_back(std::move(row));
  }
  if (rep.rows.empty()) throw InputError("concealment report needs at least one manifest entry");
  rep.mean_psnr = psnr_sum / static_cast<double>(rep.rows.size());
  rep.mean_ncc = ncc_count == 0 ? std::numeric_limits<double>::quiet_NaN() : ncc_sum / static_cast<double>(ncc_count);
  rep.mean_target_ncc =
      ncc_count == 0 ? std::numeric_limits<double>::quiet_NaN() : target_ncc_sum / static_cast<double>(ncc_count);
  if (ncc_count == 0) rep.min_ncc = std::numeric_limits<double>::quiet_NaN();
  return rep;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), res.ptr};
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }


}  // namespace

std::string ConcealmentReport::to_csv() const {
  std::ostringstream os;
  os << "output_id,source_id,target_id,lambda,psnr_db,extraction_ncc,target_ncc\n";
  for (const ConcealmentRow& r : rows) {
    os << r.output_id << ',' << r.source_id << ',' << r.target_id << ',' << format_number(r.lambda) << ','
       << format_number(r.psnr) << ',' << format_number(r.extraction_ncc) << ','
       << format_number(r.target_ncc) << '\n';
  }
  return os.str();
}

std::string ConcealmentReport::to_json() const {
  nlohmann::json j;
  j["mean_psnr_db"] = number_or_null(mean_psnr);
  j["min_psnr_db"] = number_or_null(min_psnr);
  j["mean_extraction_ncc"] = number_or_null(mean_ncc);
  j["min_extraction_ncc"] = number_or_null(min_ncc);
  j["mean_target_ncc"] = number_or_null(mean_target_ncc);
  j["rows"] = rows.size();
  // +infinity PSNR (lossless pair) is reported as null with this flag.
  j["all_lossless"] = std::all_of(rows.begin(), rows.end(), [](const ConcealmentRow& r) { return std::isinf(r.psnr); });
  return j.dump(2);
}

}  // namespace parasite
