#include <iostream>
#include <memory>

#include "commands.hpp"
#include "options.hpp"
#include "parasite/dataset.hpp"
#include "parasite/trainer.hpp"
#include "run_dir.hpp"

namespace parasite::cli {

namespace {

struct TrainOptions {
  std::string run = "train";
  std::string data;
  std::string init;
  ExperimentFlags flags;
};

struct SampleOptions {
  std::string run = "sample";
  std::string checkpoint;
  std::optional<std::string> config;
  std::string init;
  std::optional<double> strength;
  std::optional<std::size_t> count;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

DenoiserParams load_matching(const std::string& path, const DenoiserConfig& expected) {
  require_file(path);
  DenoiserParams p = load_checkpoint(path);
  if (!(p.config == expected)) {
    throw ConfigError("checkpoint " + path + " was trained for a different model configuration");
  }
  return p;
}

nlohmann::json report_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochStats& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"mean_clean_loss", e.mean_clean_loss},
                      {"mean_backdoor_loss", e.mean_backdoor_loss},
                      {"clean_items", e.clean_items},
                      {"backdoor_items", e.backdoor_items}});
  }
  return {{"steps", r.steps}, {"epochs", epochs}, {"warnings", r.warnings}};
}

void run_train(const TrainOptions& o, const Registry& reg) {
  ExperimentConfig cfg = load_config(o.flags.config);
  Corpus corpus;
  if (!o.data.empty()) {
    require_dir(o.data);
    corpus = read_corpus(o.data);
    cfg.corpus.image_size = corpus.clean.shape().height;
    cfg.corpus.channels = corpus.clean.shape().channels;
    cfg.train.on_the_fly = false;
  }
  cfg = o.flags.resolve(cfg);
  if (o.data.empty()) {
    corpus.clean = gen_synthetic(cfg.corpus.clean_count, cfg.corpus.image_size, cfg.corpus.seed, cfg.corpus.channels,
                                 "clean");
    corpus.targets = glyph_dataset(cfg.corpus.target_glyphs, cfg.corpus.image_size, cfg.corpus.channels);
  }

  const auto dir = make_run_dir(o.run);
  std::filesystem::remove(dir / "train.jsonl");
  std::filesystem::remove_all(dir / "checkpoints");
  record_run(dir, cfg, "train", reg.argv, {{"data", o.data}, {"init", o.init}});

  DenoiserParams base;
  if (!o.init.empty()) {
    base = load_matching(o.init, cfg.model);
    base.optimizer = OptimizerState{Weights::zeros(cfg.model), Weights::zeros(cfg.model), 0};
  } else {
    base = pretrain(cfg, corpus.clean, corpus.targets);
    save_checkpoint(dir / "base.ckpt", base);
  }

  TrainConfig tc = cfg.train;
  tc.checkpoint_dir = dir / "checkpoints";
  tc.log_path = dir / "train.jsonl";
  const Dataset images = o.data.empty() ? corpus.clean : corpus.training_mix();
  const TrainingData data{&images, &corpus.targets, o.data.empty() ? nullptr : &corpus.manifest};
  const TrainResult r = train(data, tc, base, cfg.schedule.build());
  for (const auto& w : r.report.warnings) std::cerr << "warning: " << w << '\n';
  save_checkpoint(dir / "model.ckpt", r.params);
  write_json(dir / "report.json", report_json(r.report));
  std::cout << (dir / "model.ckpt").string() << '\n';
}

void run_sample(const SampleOptions& o, const Registry& reg) {
  ExperimentConfig cfg = load_config(o.config);
  require_file(o.checkpoint);
  const DenoiserParams params = load_checkpoint(o.checkpoint);
  cfg.corpus.image_size = params.config.image.height;
  cfg.corpus.channels = params.config.image.channels;
  cfg.schedule.steps = params.config.steps;
  cfg.model = params.config;
  if (o.seed) cfg.eval.seed = *o.seed;
  if (o.threads) cfg.eval.threads = *o.threads;
  cfg.resolve();
  cfg.validate();

  Dataset inits;
  if (!o.init.empty()) {
    if (std::filesystem::is_directory(o.init)) {
      inits = import_dataset(o.init, "init");
    } else {
      require_file(o.init);
      const ImageTensor img = read_pnm(o.init);
      for (std::size_t i = 0; i < o.count.value_or(1); ++i) inits.add(numbered_id("init", i), img, Provenance::imported);
    }
    if (!(inits.shape() == params.config.image)) throw ShapeError("init images do not match the model image shape");
  }
  const double strength = o.strength.value_or(inits.empty() ? 1.0 : cfg.eval.strength);
  const std::size_t count = o.count.value_or(inits.empty() ? 1 : inits.size());

  const auto dir = make_run_dir(o.run);
  std::filesystem::remove_all(dir / "samples");
  const Dataset out = sample_many(params, cfg.schedule.build(), inits.empty() ? nullptr : &inits, count, strength,
                                  cfg.eval.seed, cfg.eval.threads, "sample");
  export_dataset(dir / "samples", out);
  record_run(dir, cfg, "sample", reg.argv,
             {{"checkpoint", o.checkpoint},
              {"init", o.init},
              {"strength", strength},
              {"count", count},
              {"seed", cfg.eval.seed}});
  std::cout << (dir / "samples").string() << '\n';
}

}  // namespace

void add_model_commands(CLI::App& app, Registry& reg) {
  {
    auto o = std::make_shared<TrainOptions>();
    CLI::App* sub = app.add_subcommand("train", "Pretrain (unless --init) and fine-tune the denoiser with poisoning");
    sub->add_option("--run", o->run, "Run name under the output root");
    sub->add_option("--data", o->data, "Corpus directory from build-dataset (prebuilt poisoning mode)");
    sub->add_option("--init", o->init, "Start from this checkpoint instead of clean pretraining");
    o->flags.add_to(*sub);
    reg.commands.push_back({sub, [o, &reg] { run_train(*o, reg); }});
  }
  {
    auto o = std::make_shared<SampleOptions>();
    CLI::App* sub = app.add_subcommand("sample", "Generate images from fresh noise or img2img inits");
    sub->add_option("--checkpoint", o->checkpoint, "Model checkpoint")->required();
    sub->add_option("--config", o->config, "Experiment config (JSON) for the noise schedule");
    sub->add_option("--run", o->run, "Run name under the output root");
    sub->add_option("--init", o->init, "Init image or directory of images (img2img)");
    sub->add_option("--strength", o->strength, "img2img strength in [0, 1]");
    sub->add_option("--count", o->count, "Number of samples");
    sub->add_option("--seed", o->seed, "Sampling seed");
    sub->add_option("--threads", o->threads, "Sampling threads");
    reg.commands.push_back({sub, [o, &reg] { run_sample(*o, reg); }});
  }
}

}  // namespace parasite::cli
