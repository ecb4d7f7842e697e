#include "parasite/experiment.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "parasite/rng.hpp"

namespace parasite {

using nlohmann::json;

namespace {

// Stream tags for the evaluation seeds.
enum : std::uint64_t {
  kEvalHosts = 1,
  kEvalHostsB,
  kPoisonedRun,
  kCleanRun,
  kFidA,
  kFidB,
  kProbe,
  kHeldout,
};

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

std::string_view to_string(MatchMode m) { return m == MatchMode::single ? "single" : "best_over_pool"; }

MatchMode parse_match(const std::string& s) {
  if (s == "single") return MatchMode::single;
  if (s == "best_over_pool") return MatchMode::best_over_pool;
  throw ConfigError("unknown ASR match mode '" + s + "'");
}

// Reads known keys from a JSON object and rejects anything else.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
    }
  }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + name_ + "." + key + "': " + e.what());
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

void ExperimentConfig::resolve() {
  model.image = Shape{corpus.image_size, corpus.image_size, corpus.channels};
  model.steps = schedule.steps;
  train.stego = stego;
}

void ExperimentConfig::validate() const {
  stego.validate();
  model.validate();
  train.validate();
  eval.asr.validate();
  if (corpus.target_glyphs.empty()) throw ConfigError("corpus.target_glyphs must not be empty");
  for (const auto& g : corpus.target_glyphs) (void)glyph(g);
  for (const auto& g : corpus.heldout_glyphs) (void)glyph(g);
  if (pretrain.epochs < 0 || pretrain.batch_size < 1 || !(pretrain.lr > 0.0)) {
    throw ConfigError("invalid pretrain settings");
  }
  if (!(eval.strength >= 0.0 && eval.strength <= 1.0) || !(eval.fid_strength > 0.0 && eval.fid_strength <= 1.0)) {
    throw ConfigError("evaluation strengths must lie in [0, 1]");
  }
  for (double s : eval.probe_strengths) {
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("probe strengths must lie in [0, 1]");
  }
  if (eval.fid_samples < kMinFrechetSamples) {
    throw ConfigError("eval.fid_samples must be >= " + std::to_string(kMinFrechetSamples));
  }
  if (eval.poisoned_inits < 1 || eval.clean_inits < 1) throw ConfigError("evaluation needs at least one init");
  (void)schedule.build();
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["corpus"] = {{"image_size", corpus.image_size},
                 {"channels", corpus.channels},
                 {"clean_count", corpus.clean_count},
                 {"target_glyphs", corpus.target_glyphs},
                 {"heldout_glyphs", corpus.heldout_glyphs},
                 {"seed", corpus.seed}};
  j["stego"] = {{"lambda", stego.lambda},
                {"band_lo", stego.band_lo},
                {"band_hi", stego.band_hi},
                {"strength_floor", stego.strength_floor},
                {"clamp_output", stego.clamp_output}};
  j["schedule"] = {{"steps", schedule.steps}, {"beta_start", schedule.beta_start}, {"beta_end", schedule.beta_end}};
  j["model"] = {{"embed_width", model.embed_width}, {"hidden", model.hidden}};
  j["pretrain"] = {{"epochs", pretrain.epochs}, {"lr", pretrain.lr}, {"batch_size", pretrain.batch_size},
                   {"seed", pretrain.seed}};
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"poison_rate", train.poison_rate},
                {"lr", train.lr},
                {"grad_clip", train.grad_clip},
                {"seed", train.seed},
                {"on_the_fly", train.on_the_fly},
                {"eps_y_uses_clean_host", train.eps_y_uses_clean_host},
                {"optimizer", to_string(train.optimizer.kind)},
                {"threads", train.threads}};
  j["eval"] = {{"poisoned_inits", eval.poisoned_inits},
               {"clean_inits", eval.clean_inits},
               {"strength", eval.strength},
               {"fid_strength", eval.fid_strength},
               {"fid_samples", eval.fid_samples},
               {"probe_strengths", eval.probe_strengths},
               {"asr", {{"threshold", eval.asr.threshold}, {"mode", to_string(eval.asr.mode)}}},
               {"seed", eval.seed},
               {"threads", eval.threads}};
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(std::string_view text, const ExperimentConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c = base;
  Section root(j, "config");
  if (const json* s = root.child("corpus")) {
    Section sec(*s, "corpus");
    sec.get("image_size", c.corpus.image_size);
    sec.get("channels", c.corpus.channels);
    sec.get("clean_count", c.corpus.clean_count);
    sec.get("target_glyphs", c.corpus.target_glyphs);
    sec.get("heldout_glyphs", c.corpus.heldout_glyphs);
    sec.get("seed", c.corpus.seed);
  }
  if (const json* s = root.child("stego")) {
    Section sec(*s, "stego");
    sec.get("lambda", c.stego.lambda);
    sec.get("band_lo", c.stego.band_lo);
    sec.get("band_hi", c.stego.band_hi);
    sec.get("strength_floor", c.stego.strength_floor);
    sec.get("clamp_output", c.stego.clamp_output);
  }
  if (const json* s = root.child("schedule")) {
    Section sec(*s, "schedule");
    sec.get("steps", c.schedule.steps);
    sec.get("beta_start", c.schedule.beta_start);
    sec.get("beta_end", c.schedule.beta_end);
  }
  if (const json* s = root.child("model")) {
    Section sec(*s, "model");
    sec.get("embed_width", c.model.embed_width);
    sec.get("hidden", c.model.hidden);
  }
  if (const json* s = root.child("pretrain")) {
    Section sec(*s, "pretrain");
    sec.get("epochs", c.pretrain.epochs);
    sec.get("lr", c.pretrain.lr);
    sec.get("batch_size", c.pretrain.batch_size);
    sec.get("seed", c.pretrain.seed);
  }
  if (const json* s = root.child("train")) {
    Section sec(*s, "train");
    sec.get("epochs", c.train.epochs);
    sec.get("batch_size", c.train.batch_size);
    sec.get("poison_rate", c.train.poison_rate);
    sec.get("lr", c.train.lr);
    sec.get("grad_clip", c.train.grad_clip);
    sec.get("seed", c.train.seed);
    sec.get("on_the_fly", c.train.on_the_fly);
    sec.get("eps_y_uses_clean_host", c.train.eps_y_uses_clean_host);
    std::string opt(to_string(c.train.optimizer.kind));
    sec.get("optimizer", opt);
    c.train.optimizer.kind = parse_optimizer(opt);
    sec.get("threads", c.train.threads);
  }
  if (const json* s = root.child("eval")) {
    Section sec(*s, "eval");
    sec.get("poisoned_inits", c.eval.poisoned_inits);
    sec.get("clean_inits", c.eval.clean_inits);
    sec.get("strength", c.eval.strength);
    sec.get("fid_strength", c.eval.fid_strength);
    sec.get("fid_samples", c.eval.fid_samples);
    sec.get("probe_strengths", c.eval.probe_strengths);
    sec.get("seed", c.eval.seed);
    sec.get("threads", c.eval.threads);
    if (const json* a = sec.child("asr")) {
      Section asr(*a, "eval.asr");
      asr.get("threshold", c.eval.asr.threshold);
      std::string mode(to_string(c.eval.asr.mode));
      asr.get("mode", mode);
      c.eval.asr.mode = parse_match(mode);
    }
  }
  c.resolve();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path, const ExperimentConfig& base) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), base);
}

ExperimentConfig desk_defaults() {
  ExperimentConfig c;
  c.pretrain.epochs = 10;
  c.train.lr = 5e-4;
  c.resolve();
  return c;
}

// ---- pipeline -----------------------------------------------------------------

DenoiserParams pretrain(const ExperimentConfig& cfg, const Dataset& clean, const Dataset& targets) {
  DenoiserParams params = DenoiserParams::initialize(cfg.model, derive_seed(cfg.pretrain.seed, 0));
  if (cfg.pretrain.epochs > 0) {
    TrainConfig tc = cfg.train;
    tc.epochs = cfg.pretrain.epochs;
    tc.lr = cfg.pretrain.lr;
    tc.batch_size = cfg.pretrain.batch_size;
    tc.poison_rate = 0.0;
    tc.on_the_fly = true;
    tc.seed = derive_seed(cfg.pretrain.seed, 1);
    tc.checkpoint_dir.clear();
    tc.log_path.clear();
    params = train(TrainingData{&clean, &targets, nullptr}, tc, std::move(params), cfg.schedule.build()).params;
  }
  params.optimizer = OptimizerState{Weights::zeros(cfg.model), Weights::zeros(cfg.model), 0};
  return params;
}

AttackModels fine_tune(const ExperimentConfig& cfg, const Dataset& clean, const Dataset& targets,
                       const DenoiserParams& base) {
  const NoiseSchedule sched = cfg.schedule.build();
  AttackModels m;
  m.base = base;
  TrainResult bd = train(TrainingData{&clean, &targets, nullptr}, cfg.train, base, sched);
  TrainConfig twin_cfg = cfg.train;
  twin_cfg.poison_rate = 0.0;
  twin_cfg.checkpoint_dir.clear();
  twin_cfg.log_path.clear();
  TrainResult twin = train(TrainingData{&clean, &targets, nullptr}, twin_cfg, base, sched);
  m.backdoored = std::move(bd.params);
  m.backdoor_report = std::move(bd.report);
  m.twin = std::move(twin.params);
  m.twin_report = std::move(twin.report);
  return m;
}

EpsilonModel as_model(const DenoiserParams& params) {
  const DenoiserParams* p = &params;
  return [p](const ImageTensor& x_t, int t) { return forward(*p, x_t, t); };
}

Dataset sample_many(const DenoiserParams& params, const NoiseSchedule& sched, const Dataset* inits, std::size_t count,
                    double strength, std::uint64_t seed, int threads, std::string_view id_prefix) {
  if (inits != nullptr && inits->size() < count) throw InputError("fewer init images than requested samples");
  const EpsilonModel model = as_model(params);
  std::vector<ImageTensor> out(count);
  auto run = [&](std::size_t i) {
    SampleRequest req;
    req.strength = strength;
    req.seed = derive_seed(seed, i);
    if (inits != nullptr) {
      req.init = (*inits)[i].image;
    } else {
      req.shape = params.config.image;
    }
    out[i] = sample(model, sched, req);
  };
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < count; i += workers) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  Dataset ds;
  for (std::size_t i = 0; i < count; ++i) ds.add(numbered_id(id_prefix, i), std::move(out[i]), Provenance::synthetic);
  return ds;
}

namespace {

struct AttackInits {
  Dataset poisoned;
  Dataset designated;  // one target per init, paired by index
};

AttackInits make_attack_inits(const Dataset& hosts, std::size_t count, const Dataset& pool, const StegoConfig& stego) {
  AttackInits a;
  for (std::size_t i = 0; i < count; ++i) {
    const Sample& host = hosts[i];
    const Sample& tgt = pool[i % pool.size()];
    const ImageTensor y = resize_nearest(tgt.image, host.image.height());
    a.poisoned.add(numbered_id("attack", i), embed(host.image, y, stego).poisoned, Provenance::poisoned);
    a.designated.add(numbered_id("designated", i), y, Provenance::synthetic);
  }
  return a;
}

Dataset take(const Dataset& ds, std::size_t first, std::size_t count) {
  Dataset out;
  for (std::size_t i = first; i < first + count; ++i) out.add(ds[i]);
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

AttackEvaluation evaluate_attack(const ExperimentConfig& cfg, const AttackModels& models, const Dataset& targets) {
  const NoiseSchedule sched = cfg.schedule.build();
  const EvalConfig& ev = cfg.eval;
  const int size = cfg.corpus.image_size;
  const std::size_t n_hosts = std::max({ev.poisoned_inits, ev.clean_inits, ev.fid_samples});
  const Dataset hosts =
      gen_synthetic(n_hosts, size, derive_seed(ev.seed, kEvalHosts), cfg.corpus.channels, "eval");

  AttackEvaluation out;

  const AttackInits attack = make_attack_inits(hosts, ev.poisoned_inits, targets, cfg.stego);
  const Dataset gens = sample_many(models.backdoored, sched, &attack.poisoned, ev.poisoned_inits, ev.strength,
                                   derive_seed(ev.seed, kPoisonedRun), ev.threads);
  out.poisoned_scores = target_scores(gens, attack.designated, MatchMode::single);
  out.asr_poisoned = asr_from_scores(out.poisoned_scores, ev.asr.threshold);

  const Dataset clean_inits = take(hosts, 0, ev.clean_inits);
  const Dataset clean_gens = sample_many(models.backdoored, sched, &clean_inits, ev.clean_inits, ev.strength,
                                         derive_seed(ev.seed, kCleanRun), ev.threads);
  out.clean_scores = target_scores(clean_gens, targets,
                                   targets.size() == 1 ? MatchMode::single : MatchMode::best_over_pool);
  out.asr_clean = asr_from_scores(out.clean_scores, ev.asr.threshold);

  Dataset fid_bd;
  Dataset fid_twin_a;
  Dataset fid_twin_b;
  const std::uint64_t seed_a = derive_seed(ev.seed, kFidA);
  const std::uint64_t seed_b = derive_seed(ev.seed, kFidB);
  if (ev.fid_strength >= 1.0) {
    fid_bd = sample_many(models.backdoored, sched, nullptr, ev.fid_samples, 1.0, seed_a, ev.threads);
    fid_twin_a = sample_many(models.twin, sched, nullptr, ev.fid_samples, 1.0, seed_a, ev.threads);
    fid_twin_b = sample_many(models.twin, sched, nullptr, ev.fid_samples, 1.0, seed_b, ev.threads);
  } else {
    const Dataset hosts_a = take(hosts, 0, ev.fid_samples);
    const Dataset hosts_b =
        gen_synthetic(ev.fid_samples, size, derive_seed(ev.seed, kEvalHostsB), cfg.corpus.channels, "evalb");
    fid_bd = sample_many(models.backdoored, sched, &hosts_a, ev.fid_samples, ev.fid_strength, seed_a, ev.threads);
    fid_twin_a = sample_many(models.twin, sched, &hosts_a, ev.fid_samples, ev.fid_strength, seed_a, ev.threads);
    fid_twin_b = sample_many(models.twin, sched, &hosts_b, ev.fid_samples, ev.fid_strength, seed_b, ev.threads);
  }
  const FrechetStats stats_bd = frechet_stats(fid_bd);
  const FrechetStats stats_a = frechet_stats(fid_twin_a);
  const FrechetStats stats_b = frechet_stats(fid_twin_b);
  out.fid_attack_report = desk_fid_report(stats_bd, stats_b);
  out.fid_baseline_report = desk_fid_report(stats_a, stats_b);
  out.fid_attack = out.fid_attack_report.distance;
  out.fid_baseline = out.fid_baseline_report.distance;

  for (std::size_t k = 0; k < ev.probe_strengths.size(); ++k) {
    const double s = ev.probe_strengths[k];
    const Dataset probe = sample_many(models.backdoored, sched, &attack.poisoned, ev.poisoned_inits, s,
                                      derive_seed(ev.seed, kProbe, k), ev.threads);
    out.probe_mean_ncc[s] = mean(target_scores(probe, attack.designated, MatchMode::single));
  }

  if (!cfg.corpus.heldout_glyphs.empty()) {
    const Dataset heldout = glyph_dataset(cfg.corpus.heldout_glyphs, size, cfg.corpus.channels, "heldout");
    const AttackInits custom = make_attack_inits(hosts, ev.poisoned_inits, heldout, cfg.stego);
    const Dataset custom_gens = sample_many(models.backdoored, sched, &custom.poisoned, ev.poisoned_inits, ev.strength,
                                            derive_seed(ev.seed, kHeldout), ev.threads);
    out.heldout_scores = target_scores(custom_gens, custom.designated, MatchMode::single);
    out.asr_heldout = asr_from_scores(out.heldout_scores, ev.asr.threshold);
  }
  return out;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.resolve();
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset clean = gen_synthetic(cfg.corpus.clean_count, cfg.corpus.image_size, cfg.corpus.seed,
                                      cfg.corpus.channels, "clean");
  const Dataset targets = glyph_dataset(cfg.corpus.target_glyphs, cfg.corpus.image_size, cfg.corpus.channels);
  const DenoiserParams base = pretrain(cfg, clean, targets);
  PipelineResult r;
  r.models = fine_tune(cfg, clean, targets, base);
  r.evaluation = evaluate_attack(cfg, r.models, targets);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---- sweeps -------------------------------------------------------------------

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "poison-rate") return SweepAxis::poison_rate;
  if (name == "epochs") return SweepAxis::epochs;
  if (name == "lambda") return SweepAxis::lambda;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "' (expected poison-rate, epochs or lambda)");
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::poison_rate: return "poison-rate";
    case SweepAxis::epochs: return "epochs";
    case SweepAxis::lambda: return "lambda";
  }
  return "?";
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& base_in, SweepAxis axis, const std::vector<double>& values) {
  ExperimentConfig base = base_in;
  base.resolve();
  base.validate();
  const Dataset clean = gen_synthetic(base.corpus.clean_count, base.corpus.image_size, base.corpus.seed,
                                      base.corpus.channels, "clean");
  const Dataset targets = glyph_dataset(base.corpus.target_glyphs, base.corpus.image_size, base.corpus.channels);
  const DenoiserParams pretrained = pretrain(base, clean, targets);

  std::vector<SweepPoint> points;
  for (double v : values) {
    SweepPoint p;
    p.value = v;
    try {
      ExperimentConfig cfg = base;
      switch (axis) {
        case SweepAxis::poison_rate: cfg.train.poison_rate = v; break;
        case SweepAxis::epochs:
          if (v < 0.0 || v != std::floor(v)) throw ConfigError("epoch values must be non-negative integers");
          cfg.train.epochs = static_cast<int>(v);
          break;
        case SweepAxis::lambda: cfg.stego.lambda = v; break;
      }
      cfg.resolve();
      cfg.validate();
      const AttackModels models = fine_tune(cfg, clean, targets, pretrained);
      const AttackEvaluation ev = evaluate_attack(cfg, models, targets);
      p.ok = true;
      p.asr = ev.asr_poisoned;
      p.asr_clean = ev.asr_clean;
      p.fid = ev.fid_attack;
      p.fid_baseline = ev.fid_baseline;
    } catch (const std::exception& e) {
      p.ok = false;
      p.error = e.what();
    }
    points.push_back(std::move(p));
  }
  return points;
}

std::string sweep_csv(SweepAxis axis, const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os << "axis,value,metric,metric_value,status\n";
  for (const SweepPoint& p : points) {
    const std::string status = p.ok ? "ok" : "failed";
    auto row = [&](const char* metric, double value) {
      os << to_string(axis) << ',' << format_number(p.value) << ',' << metric << ',';
      if (p.ok) os << format_number(value);
      os << ',' << status << '\n';
    };
    row("asr", p.asr);
    row("asr_clean", p.asr_clean);
    row("desk_fid", p.fid);
    row("desk_fid_baseline", p.fid_baseline);
  }
  return os.str();
}

}  // namespace parasite
