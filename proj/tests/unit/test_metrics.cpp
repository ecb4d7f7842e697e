#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>

#include "helpers.hpp"
#include "parasite/metrics.hpp"
#include "parasite/rng.hpp"

using namespace parasite;
using parasite::testing::random_image;

namespace {

FrechetStats diagonal_stats(const std::vector<double>& mean, const std::vector<double>& var) {
  FrechetStats s;
  s.count = kMinFrechetSamples;
  s.mean = mean;
  s.covariance.assign(kFeatureDim * kFeatureDim, 0.0);
  for (std::size_t i = 0; i < kFeatureDim; ++i) s.covariance[i * kFeatureDim + i] = var[i];
  return s;
}

// Q diag(d) Q^T for a fixed Householder reflection Q = I - 2 u u^T / |u|^2.
FrechetStats rotated_stats(const std::vector<double>& mean, const std::vector<double>& var) {
  std::vector<double> u(kFeatureDim);
  for (std::size_t i = 0; i < kFeatureDim; ++i) u[i] = std::sin(1.0 + static_cast<double>(i));
  double uu = 0.0;
  for (double v : u) uu += v * v;
  auto q = [&](std::size_t r, std::size_t c) { return (r == c ? 1.0 : 0.0) - 2.0 * u[r] * u[c] / uu; };
  FrechetStats s = diagonal_stats(mean, var);
  for (std::size_t r = 0; r < kFeatureDim; ++r) {
    for (std::size_t c = 0; c < kFeatureDim; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kFeatureDim; ++k) acc += q(r, k) * var[k] * q(c, k);
      s.covariance[r * kFeatureDim + c] = acc;
    }
  }
  return s;
}

Dataset images_from(const std::vector<ImageTensor>& imgs) {
  Dataset ds;
  for (std::size_t i = 0; i < imgs.size(); ++i) ds.add(numbered_id("g", i), imgs[i], Provenance::synthetic);
  return ds;
}

}  // namespace

TEST_CASE("ASR counts scores at or above the threshold") {
  CHECK(asr_from_scores({0.1, 0.8, 0.95, 0.79}, 0.8) == 0.5);
  CHECK_THROWS_AS(asr_from_scores({}, 0.8), InputError);
  AsrConfig bad;
  bad.threshold = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("target scores in single and pool modes") {
  const Dataset targets = glyph_dataset({"A", "B", "C"}, 16);
  std::vector<ImageTensor> gens{targets[2].image, targets[0].image * 0.5, random_image(1, 16)};
  const Dataset g = images_from(gens);

  const auto pool = target_scores(g, targets, MatchMode::best_over_pool);
  CHECK(pool[0] == doctest::Approx(1.0));
  CHECK(pool[1] == doctest::Approx(1.0));
  CHECK(pool[2] < 0.5);

  const auto paired = target_scores(g, targets, MatchMode::single);
  CHECK(paired[0] == doctest::Approx(ncc(targets[2].image, targets[0].image)));
  CHECK(paired[1] == doctest::Approx(ncc(targets[0].image, targets[1].image)));

  const Dataset one = glyph_dataset({"C"}, 16);
  CHECK(target_scores(g, one, MatchMode::single)[0] == doctest::Approx(1.0));
  CHECK_THROWS_AS(target_scores(g, glyph_dataset({"A", "B"}, 16), MatchMode::single), InputError);

  AsrConfig cfg;
  cfg.mode = MatchMode::best_over_pool;
  CHECK(asr(g, targets, cfg) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("targets are resized to the generation size") {
  const Dataset small = glyph_dataset({"H"}, 8);
  const Dataset gens = images_from({resize_nearest(small[0].image, 16)});
  CHECK(target_scores(gens, small, MatchMode::single)[0] == doctest::Approx(1.0));
}

TEST_CASE("fid features are 8x8 area means") {
  ImageTensor img(Shape{16, 16, 3});
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = (r / 2) * 8 + (c / 2) + ch;
    }
  }
  const auto f = fid_features(img);
  REQUIRE(f.size() == kFeatureDim);
  for (std::size_t i = 0; i < kFeatureDim; ++i) CHECK(f[i] == doctest::Approx(static_cast<double>(i) + 1.0));
  CHECK_THROWS_AS(fid_features(random_image(1, 12)), ShapeError);
}

TEST_CASE("frechet stats: mean and unbiased covariance") {
  Rng rng(5);
  std::vector<std::vector<double>> feats(80, std::vector<double>(kFeatureDim));
  for (auto& f : feats) fill_normal(rng, f);
  const FrechetStats s = frechet_stats(feats);
  CHECK(s.count == 80);
  for (std::size_t a : {std::size_t{0}, std::size_t{5}, std::size_t{63}}) {
    for (std::size_t b : {std::size_t{0}, std::size_t{17}}) {
      double ma = 0.0;
      double mb = 0.0;
      for (const auto& f : feats) {
        ma += f[a] / 80.0;
        mb += f[b] / 80.0;
      }
      double cov = 0.0;
      for (const auto& f : feats) cov += (f[a] - ma) * (f[b] - mb);
      cov /= 79.0;
      CHECK(s.mean[a] == doctest::Approx(ma).epsilon(1e-12));
      CHECK(s.covariance[a * kFeatureDim + b] == doctest::Approx(cov).epsilon(1e-9));
    }
  }
}

TEST_CASE("frechet distance matches the closed form for commuting covariances") {
  std::vector<double> ma(kFeatureDim);
  std::vector<double> mb(kFeatureDim);
  std::vector<double> va(kFeatureDim);
  std::vector<double> vb(kFeatureDim);
  double expected = 0.0;
  for (std::size_t i = 0; i < kFeatureDim; ++i) {
    ma[i] = 0.1 * static_cast<double>(i % 5);
    mb[i] = -0.05 * static_cast<double>(i % 3);
    va[i] = 0.5 + 0.01 * static_cast<double>(i);
    vb[i] = 1.5 - 0.015 * static_cast<double>(i);
    const double d = ma[i] - mb[i];
    const double r = std::sqrt(va[i]) - std::sqrt(vb[i]);
    expected += d * d + r * r;
  }
  CHECK(desk_fid(diagonal_stats(ma, va), diagonal_stats(mb, vb)) == doctest::Approx(expected).epsilon(1e-10));
  CHECK(desk_fid(rotated_stats(ma, va), rotated_stats(mb, vb)) == doctest::Approx(expected).epsilon(1e-9));
  const FidReport rep = desk_fid_report(diagonal_stats(ma, va), diagonal_stats(mb, vb));
  CHECK(rep.condition_a == doctest::Approx((0.5 + 0.63) / 0.5));
  CHECK_FALSE(rep.ill_conditioned);
}

TEST_CASE("frechet distance properties") {
  const Dataset a = gen_synthetic(100, 16, 1);
  const Dataset b = gen_synthetic(100, 16, 2);
  const FrechetStats sa = frechet_stats(a);
  const FrechetStats sb = frechet_stats(b);
  CHECK(desk_fid(sa, sa) < 1e-8);
  CHECK(desk_fid(sa, sb) == doctest::Approx(desk_fid(sb, sa)).epsilon(1e-8));
  CHECK(desk_fid(sa, sb) >= 0.0);
  // shifting every image moves only the mean term
  std::vector<ImageTensor> shifted;
  for (const Sample& s : a) {
    ImageTensor img = s.image;
    for (double& v : img.values()) v += 0.1;
    shifted.push_back(img);
  }
  CHECK(desk_fid(sa, frechet_stats(images_from(shifted))) == doctest::Approx(0.64).epsilon(1e-8));
}

TEST_CASE("degenerate statistics are flagged and small sets rejected") {
  std::vector<double> zero(kFeatureDim, 0.0);
  std::vector<double> var(kFeatureDim, 1.0);
  var[3] = 0.0;
  const FidReport rep = desk_fid_report(diagonal_stats(zero, var), diagonal_stats(zero, var));
  CHECK(rep.ill_conditioned);
  CHECK(rep.distance == doctest::Approx(0.0).epsilon(1e-12));

  FrechetStats few = frechet_stats(gen_synthetic(10, 16, 3));
  CHECK_THROWS_AS(desk_fid(few, few), InputError);
}

TEST_CASE("concealment report") {
  const Dataset clean = gen_synthetic(20, 16, 4);
  const Dataset targets = glyph_dataset({"A", "S"}, 16);
  const PoisonedDataset p = build_poisoned(clean, targets, StegoConfig{}, 0.5, 9);
  const ConcealmentReport rep = concealment_report(clean, p.mixed, p.manifest, targets, StegoConfig{});
  REQUIRE(rep.rows.size() == 10);
  CHECK(rep.mean_psnr > 30.0);
  CHECK(rep.min_psnr <= rep.mean_psnr);
  CHECK(rep.mean_ncc >= 0.9);
  CHECK(rep.mean_target_ncc < rep.mean_ncc);
  const std::string csv = rep.to_csv();
  CHECK(csv.rfind("output_id,source_id,target_id,lambda,psnr_db,extraction_ncc,target_ncc\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
  CHECK(rep.to_json().find("\"mean_psnr_db\"") != std::string::npos);

  StegoConfig off;
  off.lambda = 0.0;
  const PoisonedDataset p0 = build_poisoned(clean, targets, off, 0.5, 9);
  const ConcealmentReport rep0 = concealment_report(clean, p0.mixed, p0.manifest, targets, off);
  CHECK(std::isnan(rep0.mean_ncc));
  CHECK(rep0.rows[0].psnr > 200.0);

  PoisonManifest broken = p.manifest;
  broken.entries[0].target_id = "targets/9999";
  CHECK_THROWS_AS(concealment_report(clean, p.mixed, broken, targets, StegoConfig{}), InputError);
}

TEST_CASE("number formatting round-trips") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(2.0) == "2");
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(format_number(-std::numeric_limits<double>::infinity()) == "-inf");
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(uniform01(rng) - 0.5, static_cast<int>(uniform_index(rng, 200)) - 100);
    CHECK(std::stod(format_number(v)) == v);
  }
}
