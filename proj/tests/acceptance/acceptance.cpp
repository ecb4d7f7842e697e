// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--criterion N]... [--work DIR] [--prepare] [--reuse-desk]
//
// Criteria 7, 9 and 10 share the desk attack run. --prepare runs it once and
// stores its artifacts under DIR/desk; --reuse-desk reads them back instead of
// training again. Exit status is 1 when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "naive_dct.hpp"
#include "parasite/dataset.hpp"
#include "parasite/denoiser.hpp"
#include "parasite/diffusion.hpp"
#include "parasite/experiment.hpp"
#include "parasite/metrics.hpp"
#include "parasite/rng.hpp"
#include "parasite/stego.hpp"

namespace fs = std::filesystem;
using namespace parasite;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Timer {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

ImageTensor uniform_image(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  ImageTensor img(Shape{n, n, 1});
  for (double& v : img.values()) v = dist(rng);
  return img;
}

ImageTensor normal_image(Rng& rng, int n) {
  ImageTensor img(Shape{n, n, 1});
  fill_normal(rng, img.values());
  return img;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// ---- 1-6: identities and oracles ----------------------------------------------

Outcome dct_oracle() {
  const Timer timer;
  double worst = 0.0;
  double worst_parseval = 0.0;
  for (int n = 4; n <= 16; ++n) {
    Rng rng(derive_seed(101, static_cast<std::uint64_t>(n)));
    for (int k = 0; k < 100; ++k) {
      const ImageTensor img = uniform_image(rng, n);
      const CoefTensor c = dct2(img);
      worst = std::max(worst, max_abs_diff(c, testing::naive_dct2(img)));
      const CoefTensor r(Shape{n, n, 1}, std::vector<double>(img.values().begin(), img.values().end()));
      worst = std::max(worst, max_abs_diff(idct2(r), testing::naive_idct2(r)));
      const double e_img = l2_norm(img);
      worst_parseval = std::max(worst_parseval, std::abs(l2_norm(c) * l2_norm(c) - e_img * e_img) / (e_img * e_img));
    }
  }
  const double secs = timer.seconds();
  return {worst <= 1e-9 && worst_parseval <= 1e-9 && secs < 10.0,
          "max|fast-naive| " + fmt(worst) + ", Parseval rel " + fmt(worst_parseval) + ", " + fmt(secs, 3) + " s"};
}

Outcome mean_shift_identity() {
  const Timer timer;
  const NoiseSchedule sched = NoiseSchedule::linear(200);
  Rng rng(202);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const ImageTensor x0 = uniform_image(rng, 16);
    const ImageTensor y = uniform_image(rng, 16);
    const ImageTensor eps = normal_image(rng, 16);
    const int t = 2 + static_cast<int>(uniform_index(rng, 199));
    worst = std::max(worst, check_mean_shift(x0, y, eps, t, sched));
  }
  const double secs = timer.seconds();
  return {worst <= 1e-9 && secs < 10.0, "max residual " + fmt(worst) + " over 1000 draws, " + fmt(secs, 3) + " s"};
}

Outcome epsilon_y_identity() {
  const NoiseSchedule sched = NoiseSchedule::linear(200);
  Rng rng(303);
  std::size_t mismatches = 0;
  for (int k = 0; k < 1000; ++k) {
    const ImageTensor x0p = uniform_image(rng, 16);
    const ImageTensor eps = normal_image(rng, 16);
    const int t = 1 + static_cast<int>(uniform_index(rng, 200));
    if (!(epsilon_y(x0p, eps, x0p, t, sched) == eps)) ++mismatches;
  }
  // A single step with beta 0.75 gives alpha_bar = 0.25.
  const NoiseSchedule one_step(std::vector<double>{0.75});
  const ImageTensor one(Shape{1, 1, 1}, 1.0);
  const ImageTensor zero(Shape{1, 1, 1}, 0.0);
  const double spot = epsilon_y(one, zero, zero, 1, one_step)[0];
  const double err = std::abs(spot - 1.0 / std::sqrt(3.0));
  return {mismatches == 0 && err <= 1e-12,
          std::to_string(mismatches) + "/1000 inexact at y = x0', spot " + fmt(spot, 17) + " (err " + fmt(err) + ")"};
}

Outcome gradient_check() {
  const Timer timer;
  DenoiserConfig cfg;
  cfg.image = Shape{4, 4, 1};
  cfg.embed_width = 8;
  cfg.hidden = 16;
  cfg.steps = 200;
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(404, seed));
    const DenoiserParams p = DenoiserParams::initialize(cfg, derive_seed(405, seed));
    const ImageTensor x = normal_image(rng, 4);
    const ImageTensor target = normal_image(rng, 4);
    const int t = 1 + static_cast<int>(uniform_index(rng, 200));
    const LossAndGrad lg = loss_and_grad(p, x, t, target);
    DenoiserParams q = p;
    auto qa = q.weights.arrays();
    auto ga = lg.grads.arrays();
    for (std::size_t k = 0; k < qa.size(); ++k) {
      for (std::size_t i = 0; i < qa[k].size(); ++i) {
        const double orig = qa[k][i];
        qa[k][i] = orig + h;
        const double up = mse(forward(q, x, t), target);
        qa[k][i] = orig - h;
        const double down = mse(forward(q, x, t), target);
        qa[k][i] = orig;
        const double fd = (up - down) / (2.0 * h);
        // Absolute floor keeps roundoff on vanishing gradients from dominating.
        const double denom = std::max({std::abs(fd), std::abs(ga[k][i]), 1e-6});
        worst = std::max(worst, std::abs(fd - ga[k][i]) / denom);
        ++checked;
      }
    }
  }
  const double secs = timer.seconds();
  return {worst <= 1e-4 && secs < 60.0, "max rel err " + fmt(worst) + " over " + std::to_string(checked) +
                                            " parameters, " + fmt(secs, 3) + " s"};
}

struct StegoStats {
  double mean_psnr = 0.0;
  double mean_ncc = 0.0;
  double mean_target_ncc = 0.0;
};

StegoStats stego_stats(const Dataset& hosts, const Dataset& targets, const StegoConfig& cfg) {
  StegoStats s;
  std::size_t n = 0;
  for (const Sample& target : targets) {
    const ImageTensor limited = band_limit(target.image, cfg);
    for (const Sample& host : hosts) {
      const ImageTensor poisoned = embed(host.image, target.image, cfg).poisoned;
      const ImageTensor recovered = extract(poisoned, host.image, cfg);
      s.mean_psnr += psnr(host.image, poisoned);
      s.mean_ncc += ncc(recovered, limited);
      s.mean_target_ncc += ncc(recovered, target.image);
      ++n;
    }
  }
  s.mean_psnr /= static_cast<double>(n);
  s.mean_ncc /= static_cast<double>(n);
  s.mean_target_ncc /= static_cast<double>(n);
  return s;
}

Outcome stego_concealment() {
  const Dataset hosts = gen_synthetic(100, 16, 505);
  const Dataset targets = glyph_dataset({"A", "B", "C", "E", "H", "K", "P", "T", "X", "Z"}, 16);
  StegoConfig cfg;
  cfg.lambda = 0.05;
  const StegoStats base = stego_stats(hosts, targets, cfg);
  std::vector<double> curve;
  for (double lambda : {0.01, 0.05, 0.1, 0.2, 0.25}) {
    StegoConfig c = cfg;
    c.lambda = lambda;
    curve.push_back(stego_stats(hosts, targets, c).mean_psnr);
  }
  bool monotone = true;
  std::string curve_text;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (i > 0 && !(curve[i] < curve[i - 1])) monotone = false;
    curve_text += (i ? " > " : "") + fmt(curve[i], 4);
  }
  return {base.mean_psnr >= 30.0 && base.mean_ncc >= 0.9 && monotone,
          "mean PSNR " + fmt(base.mean_psnr) + " dB, extraction ncc " + fmt(base.mean_ncc) + " (vs raw glyph " +
              fmt(base.mean_target_ncc) + "), PSNR over lambda " + curve_text};
}

Outcome oracle_sampler() {
  const Timer timer;
  const NoiseSchedule sched = NoiseSchedule::linear(200);
  const Dataset targets = glyph_dataset({"A", "K", "T", "Z"}, 16);
  double worst = 1.0;
  std::size_t runs = 0;
  for (const Sample& target : targets) {
    const ImageTensor& y = target.image;
    // x_t determines x0' once eps is zero, so eps_y reduces to the noise that
    // carries y to x_t.
    const EpsilonModel oracle = [&](const ImageTensor& x, int t) {
      return epsilon_y(x * (1.0 / std::sqrt(sched.alpha_bar(t))), ImageTensor(x.shape()), y, t, sched);
    };
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SampleRequest req;
      req.shape = y.shape();
      req.seed = derive_seed(606, seed);
      worst = std::min(worst, ncc(sample(oracle, sched, req), y));
      ++runs;
    }
  }
  const double secs = timer.seconds();
  return {worst >= 0.99 && secs < 60.0,
          "min ncc " + fmt(worst, 6) + " over " + std::to_string(runs) + " chains, " + fmt(secs, 3) + " s"};
}

// ---- 7, 9, 10: desk attack ---------------------------------------------------

struct DeskRun {
  std::map<std::string, double> metrics;
  double wall_seconds = 0.0;
};

ExperimentConfig desk_config() {
  ExperimentConfig c = desk_defaults();
  c.corpus.image_size = 16;
  c.corpus.clean_count = 2000;
  c.train.poison_rate = 0.1;
  c.train.epochs = 1;
  c.stego.lambda = 0.05;
  c.schedule.steps = 200;
  c.eval.poisoned_inits = 200;
  c.eval.strength = 0.6;
  c.eval.probe_strengths = {0.2, 0.8};
  c.resolve();
  return c;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string metrics_csv(const AttackEvaluation& ev) {
  std::ostringstream out;
  out << "metric,value\n";
  out << "asr_poisoned," << format_number(ev.asr_poisoned) << '\n';
  out << "asr_clean," << format_number(ev.asr_clean) << '\n';
  out << "desk_fid_attack," << format_number(ev.fid_attack) << '\n';
  out << "desk_fid_baseline," << format_number(ev.fid_baseline) << '\n';
  for (const auto& [s, v] : ev.probe_mean_ncc) out << "probe_ncc_" << format_number(s) << ',' << format_number(v) << '\n';
  if (ev.asr_heldout) out << "asr_heldout," << format_number(*ev.asr_heldout) << '\n';
  return out.str();
}

std::string scores_csv(const AttackEvaluation& ev) {
  std::ostringstream out;
  out << "set,index,score\n";
  for (std::size_t i = 0; i < ev.poisoned_scores.size(); ++i) {
    out << "poisoned," << i << ',' << format_number(ev.poisoned_scores[i]) << '\n';
  }
  for (std::size_t i = 0; i < ev.clean_scores.size(); ++i) {
    out << "clean," << i << ',' << format_number(ev.clean_scores[i]) << '\n';
  }
  return out.str();
}

std::map<std::string, double> parse_metrics(const std::string& csv) {
  std::map<std::string, double> out;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    out[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
  }
  return out;
}

DeskRun load_desk(const fs::path& dir) {
  DeskRun d;
  d.metrics = parse_metrics(read_file(dir / "metrics.csv"));
  d.wall_seconds = std::stod(read_file(dir / "wall_seconds.txt"));
  return d;
}

DeskRun run_desk(const fs::path& dir) {
  const ExperimentConfig cfg = desk_config();
  const PipelineResult r = run_pipeline(cfg);
  fs::create_directories(dir);
  save_checkpoint(dir / "backdoored.ckpt", r.models.backdoored);
  save_checkpoint(dir / "twin.ckpt", r.models.twin);
  write_file(dir / "config.json", cfg.to_json() + "\n");
  write_file(dir / "metrics.csv", metrics_csv(r.evaluation));
  write_file(dir / "scores.csv", scores_csv(r.evaluation));
  write_file(dir / "wall_seconds.txt", fmt(r.wall_seconds, 6) + "\n");
  std::cerr << "desk run written to " << dir.string() << " in " << fmt(r.wall_seconds, 4) << " s\n";
  return load_desk(dir);
}

struct Context {
  fs::path work;
  bool reuse_desk = false;
  std::optional<DeskRun> desk;

  const DeskRun& desk_run() {
    if (!desk) desk = reuse_desk ? load_desk(work / "desk") : run_desk(work / "desk");
    return *desk;
  }
};

// Largest ASR any detector of the trigger can reach at the observed clean
// false-positive rate. The sampler sees a poisoned init only through x_t0 =
// sqrt(abar) (host + trigger) + sqrt(1 - abar) eps, so the trigger enters as a
// mean shift of sqrt(abar) * lambda * s * sqrt(|M|) against unit noise.
std::string trigger_bound(const ExperimentConfig& cfg, double clean_rate) {
  const NoiseSchedule sched = cfg.schedule.build();
  const int t0 = start_step(cfg.eval.strength, sched);
  const double abar = sched.alpha_bar(t0);
  const double mask = static_cast<double>(make_band_mask(cfg.corpus.image_size, cfg.stego).count());
  const double snr = std::sqrt(abar) * cfg.stego.lambda * cfg.stego.strength_floor * std::sqrt(mask) /
                     std::sqrt(1.0 - abar);
  // Upper normal quantile of the clean rate, by bisection on the cdf.
  const double alpha = std::clamp(clean_rate, 1e-6, 0.5);
  double lo = 0.0;
  double hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (1.0 - normal_cdf(mid) > alpha ? lo : hi) = mid;
  }
  const double ceiling = normal_cdf(snr - lo);
  return "trigger SNR at t=" + std::to_string(t0) + " is " + fmt(snr, 3) + ", so ASR <= " + fmt(ceiling, 3) +
         " at clean rate " + fmt(alpha, 3);
}

Outcome desk_attack(Context& ctx) {
  const DeskRun& d = ctx.desk_run();
  const double asr = d.metrics.at("asr_poisoned");
  const double clean = d.metrics.at("asr_clean");
  const double fid = d.metrics.at("desk_fid_attack");
  const double base = d.metrics.at("desk_fid_baseline");
  const bool pass = asr >= 0.8 && clean <= 0.05 && fid <= 2.0 * base && d.wall_seconds <= 1800.0;
  std::string detail = "ASR " + fmt(asr) + ", clean ASR " + fmt(clean) + ", desk-FID " + fmt(fid) + " vs 2x" +
                       fmt(base) + ", " + fmt(d.wall_seconds, 4) + " s";
  if (!pass) detail += "; " + trigger_bound(desk_config(), std::max(clean, 0.05));
  return {pass, detail};
}

Outcome strength_trend(Context& ctx) {
  const DeskRun& d = ctx.desk_run();
  const double low = d.metrics.at("probe_ncc_0.2");
  const double high = d.metrics.at("probe_ncc_0.8");
  return {low - high >= 0.3, "mean ncc " + fmt(low) + " at 0.2 vs " + fmt(high) + " at 0.8, gap " + fmt(low - high)};
}

Outcome determinism(Context& ctx) {
  ctx.desk_run();
  const fs::path first = ctx.work / "desk";
  const fs::path second = ctx.work / "desk_rerun";
  run_desk(second);
  std::vector<std::string> differing;
  for (const char* name : {"backdoored.ckpt", "twin.ckpt", "metrics.csv", "scores.csv"}) {
    if (read_file(first / name) != read_file(second / name)) differing.emplace_back(name);
  }
  std::string detail = differing.empty() ? "checkpoints and metric CSVs identical" : "differs:";
  for (const auto& n : differing) detail += " " + n;
  return {differing.empty(), detail};
}

// ---- 8: customized targets ---------------------------------------------------

Outcome customized_targets(Context& ctx) {
  ExperimentConfig cfg = desk_config();
  cfg.corpus.target_glyphs = {"A", "B", "C", "E", "H", "K", "P", "X"};
  cfg.corpus.heldout_glyphs = {"T", "Z"};
  cfg.eval.asr.threshold = 0.6;
  cfg.eval.probe_strengths.clear();
  cfg.resolve();
  const PipelineResult r = run_pipeline(cfg);
  const fs::path dir = ctx.work / "customized";
  fs::create_directories(dir);
  write_file(dir / "metrics.csv", metrics_csv(r.evaluation));
  const double pool = r.evaluation.asr_poisoned;
  const double heldout = r.evaluation.asr_heldout.value_or(0.0);
  const bool generalizes = heldout >= 0.5 && heldout <= pool;
  const bool pool_ok = pool >= 0.8;
  std::string detail = "held-out ASR " + fmt(heldout) + ", pool ASR " + fmt(pool) + " at tau 0.6, gap " +
                       fmt(pool - heldout);
  if (!generalizes && pool_ok) detail += "; no generalization, pool target learned";
  if (!generalizes && !pool_ok) detail += "; " + trigger_bound(cfg, std::max(r.evaluation.asr_clean, 0.05));
  return {generalizes || pool_ok, detail};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(Context&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "dct oracle", [](Context&) { return dct_oracle(); }},
      {2, "mean-shift identity", [](Context&) { return mean_shift_identity(); }},
      {3, "eps_y identity", [](Context&) { return epsilon_y_identity(); }},
      {4, "gradient check", [](Context&) { return gradient_check(); }},
      {5, "stego concealment", [](Context&) { return stego_concealment(); }},
      {6, "oracle sampler", [](Context&) { return oracle_sampler(); }},
      {7, "desk attack", desk_attack},
      {8, "customized targets", customized_targets},
      {9, "strength trend", strength_trend},
      {10, "determinism", determinism},
  };
  return all;
}

int usage() {
  std::cerr << "usage: acceptance [--criterion N]... [--work DIR] [--prepare] [--reuse-desk]\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.work = fs::temp_directory_path() / "parasite_acceptance";
  std::vector<int> selected;
  bool prepare = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      selected.push_back(std::stoi(argv[++i]));
    } else if (a == "--work" && i + 1 < argc) {
      ctx.work = argv[++i];
    } else if (a == "--prepare") {
      prepare = true;
    } else if (a == "--reuse-desk") {
      ctx.reuse_desk = true;
    } else {
      return usage();
    }
  }
  fs::create_directories(ctx.work);

  try {
    if (prepare) {
      run_desk(ctx.work / "desk");
      if (selected.empty()) return 0;
    }
    if (selected.empty()) {
      for (const Criterion& c : criteria()) selected.push_back(c.id);
    }
    bool all_pass = true;
    for (int id : selected) {
      const auto it = std::find_if(criteria().begin(), criteria().end(), [&](const Criterion& c) { return c.id == id; });
      if (it == criteria().end()) return usage();
      Outcome o;
      try {
        o = it->run(ctx);
      } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
      }
      all_pass = all_pass && o.pass;
      std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << it->name << "): " << o.detail
                << std::endl;
    }
    return all_pass ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "acceptance: " << e.what() << '\n';
    return 1;
  }
}
