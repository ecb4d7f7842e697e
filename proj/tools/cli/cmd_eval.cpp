#include <iostream>
#include <memory>
#include <sstream>

#include "commands.hpp"
#include "options.hpp"
#include "parasite/dataset.hpp"
#include "parasite/metrics.hpp"
#include "run_dir.hpp"

namespace parasite::cli {

namespace {

struct EvalOptions {
  std::string run = "eval";
  std::string metric;
  std::string samples;
  std::string targets;
  std::vector<std::string> glyphs;
  std::string reference;
  std::string data;
  std::optional<double> threshold;
  std::string mode = "single";
  std::optional<std::string> config;
  StegoFlags stego;
};

struct SweepOptions {
  std::string run = "sweep";
  std::string axis;
  std::vector<double> values;
  ExperimentFlags flags;
};

Dataset load_images(const std::string& dir, const char* prefix) {
  require_dir(dir);
  const Dataset ds = import_dataset(dir, prefix);
  if (ds.empty()) throw InputError("no PGM/PPM images in " + dir);
  return ds;
}

nlohmann::json fid_json(const FidReport& r) {
  return {{"desk_fid", r.distance},
          {"condition_a", r.condition_a},
          {"condition_b", r.condition_b},
          {"ill_conditioned", r.ill_conditioned}};
}

void eval_asr(const EvalOptions& o, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  const Dataset gens = load_images(o.samples, "samples");
  Dataset targets;
  if (!o.targets.empty()) {
    targets = load_images(o.targets, "targets");
  } else if (!o.glyphs.empty()) {
    targets = glyph_dataset(o.glyphs, gens.shape().height, gens.shape().channels);
  } else {
    throw InputError("eval --metric asr needs --targets or --glyph");
  }
  AsrConfig asr_cfg = cfg.eval.asr;
  if (o.threshold) asr_cfg.threshold = *o.threshold;
  if (o.mode == "single") {
    asr_cfg.mode = MatchMode::single;
  } else if (o.mode == "pool") {
    asr_cfg.mode = MatchMode::best_over_pool;
  } else {
    throw InputError("--mode must be single or pool");
  }
  asr_cfg.validate();
  const std::vector<double> scores = target_scores(gens, targets, asr_cfg.mode);
  const double rate = asr_from_scores(scores, asr_cfg.threshold);

  std::ostringstream csv;
  csv.precision(17);
  csv << "sample_id,score\n";
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    csv << gens[i].id << ',' << scores[i] << '\n';
    sum += scores[i];
  }
  write_text(dir / "scores.csv", csv.str());
  write_json(dir / "eval.json", {{"metric", "asr"},
                                 {"asr", rate},
                                 {"threshold", asr_cfg.threshold},
                                 {"mode", o.mode},
                                 {"samples", scores.size()},
                                 {"mean_score", sum / static_cast<double>(scores.size())}});
  std::cout << "asr " << rate << '\n';
}

void eval_fid(const EvalOptions& o, const std::filesystem::path& dir) {
  if (o.reference.empty()) throw InputError("eval --metric fid needs --reference");
  const Dataset a = load_images(o.samples, "samples");
  const Dataset b = load_images(o.reference, "reference");
  const FidReport r = desk_fid_report(frechet_stats(a), frechet_stats(b));
  nlohmann::json j = fid_json(r);
  j["metric"] = "fid";
  j["samples"] = a.size();
  j["reference"] = b.size();
  write_json(dir / "eval.json", j);
  std::cout << "desk_fid " << r.distance << '\n';
}

void eval_concealment(const EvalOptions& o, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  if (o.data.empty()) throw InputError("eval --metric concealment needs --data");
  require_dir(o.data);
  const Corpus corpus = read_corpus(o.data);
  const ConcealmentReport r = concealment_report(corpus.clean, corpus.poisoned, corpus.manifest, corpus.targets,
                                                 o.stego.apply(cfg.stego));
  write_text(dir / "concealment.csv", r.to_csv());
  write_text(dir / "eval.json", r.to_json() + "\n");
  std::cout << "mean_psnr_db " << r.mean_psnr << " mean_ncc " << r.mean_ncc << '\n';
}

void run_eval(const EvalOptions& o, const Registry& reg) {
  const ExperimentConfig cfg = load_config(o.config);
  const auto dir = make_run_dir(o.run);
  if (o.metric == "asr") {
    eval_asr(o, cfg, dir);
  } else if (o.metric == "fid") {
    eval_fid(o, dir);
  } else {
    eval_concealment(o, cfg, dir);
  }
  record_run(dir, cfg, "eval", reg.argv, {{"metric", o.metric}});
}

void run_sweep_cmd(const SweepOptions& o, const Registry& reg) {
  const SweepAxis axis = parse_sweep_axis(o.axis);
  const ExperimentConfig cfg = o.flags.resolve(load_config(o.flags.config));
  const auto dir = make_run_dir(o.run);
  record_run(dir, cfg, "sweep", reg.argv, {{"axis", o.axis}, {"values", o.values}});
  const std::vector<SweepPoint> points = run_sweep(cfg, axis, o.values);
  write_text(dir / "sweep.csv", sweep_csv(axis, points));
  nlohmann::json failures = nlohmann::json::array();
  for (const SweepPoint& p : points) {
    if (p.ok) continue;
    std::cerr << "warning: sweep point " << p.value << " failed: " << p.error << '\n';
    failures.push_back({{"value", p.value}, {"error", p.error}});
  }
  record_run(dir, cfg, "sweep", reg.argv, {{"axis", o.axis}, {"values", o.values}, {"failures", failures}});
  std::cout << (dir / "sweep.csv").string() << '\n';
}

}  // namespace

void add_eval_commands(CLI::App& app, Registry& reg) {
  {
    auto o = std::make_shared<EvalOptions>();
    CLI::App* sub = app.add_subcommand("eval", "Score generations (asr, fid) or a poisoned corpus (concealment)");
    sub->add_option("--metric", o->metric, "asr, fid or concealment")
        ->required()
        ->check(CLI::IsMember({"asr", "fid", "concealment"}));
    sub->add_option("--run", o->run, "Run name under the output root");
    sub->add_option("--samples", o->samples, "Directory of generated images (asr, fid)");
    auto* t = sub->add_option("--targets", o->targets, "Directory of target images (asr)");
    auto* g = sub->add_option("--glyph", o->glyphs, "Built-in glyph targets (asr)")->delimiter(',');
    t->excludes(g);
    sub->add_option("--reference", o->reference, "Reference image directory (fid)");
    sub->add_option("--data", o->data, "Corpus directory from build-dataset (concealment)");
    sub->add_option("--threshold", o->threshold, "ncc threshold for a successful attack");
    sub->add_option("--mode", o->mode, "single: one target or one per sample; pool: best match over targets");
    sub->add_option("--config", o->config, "Experiment config (JSON)");
    o->stego.add_to(*sub);
    reg.commands.push_back({sub, [o, &reg] { run_eval(*o, reg); }});
  }
  {
    auto o = std::make_shared<SweepOptions>();
    CLI::App* sub = app.add_subcommand("sweep", "Run the attack pipeline across one axis and write a long-format CSV");
    sub->add_option("--axis", o->axis, "poison-rate, epochs or lambda")->required();
    sub->add_option("--values", o->values, "Comma-separated axis values")->required()->delimiter(',');
    sub->add_option("--run", o->run, "Run name under the output root");
    o->flags.add_to(*sub);
    reg.commands.push_back({sub, [o, &reg] { run_sweep_cmd(*o, reg); }});
  }
}

}  // namespace parasite::cli
