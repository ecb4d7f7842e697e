#include <iostream>
#include <memory>

#include "commands.hpp"
#include "options.hpp"
#include "parasite/dataset.hpp"
#include "parasite/rng.hpp"
#include "run_dir.hpp"

namespace parasite::cli {

namespace {

struct BuildOptions {
  std::string run = "build-dataset";
  std::optional<std::size_t> count;
  std::optional<int> size;
  std::vector<std::string> glyphs;
  ExperimentFlags flags;
};

void run_build(const BuildOptions& o, const Registry& reg) {
  ExperimentConfig cfg = load_config(o.flags.config);
  if (o.count) cfg.corpus.clean_count = *o.count;
  if (o.size) cfg.corpus.image_size = *o.size;
  if (!o.glyphs.empty()) cfg.corpus.target_glyphs = o.glyphs;
  cfg = o.flags.resolve(cfg);

  const Dataset clean = gen_synthetic(cfg.corpus.clean_count, cfg.corpus.image_size, cfg.corpus.seed,
                                      cfg.corpus.channels, "clean");
  const Dataset targets = glyph_dataset(cfg.corpus.target_glyphs, cfg.corpus.image_size, cfg.corpus.channels);
  const std::uint64_t poison_seed = derive_seed(cfg.corpus.seed, 1);
  const PoisonedDataset p = build_poisoned(clean, targets, cfg.stego, cfg.train.poison_rate, poison_seed);

  Corpus corpus;
  corpus.clean = clean;
  corpus.targets = targets;
  corpus.poisoned = select(p.mixed, Provenance::poisoned);
  corpus.manifest = p.manifest;

  const auto dir = make_run_dir(o.run);
  write_corpus(dir / "corpus", corpus);
  record_run(dir, cfg, "build-dataset", reg.argv,
             {{"corpus", (dir / "corpus").string()},
              {"clean", corpus.clean.size()},
              {"poisoned", corpus.poisoned.size()},
              {"targets", corpus.targets.size()},
              {"poison_seed", poison_seed}});
  std::cout << (dir / "corpus").string() << '\n';
}

}  // namespace

void add_data_commands(CLI::App& app, Registry& reg) {
  auto o = std::make_shared<BuildOptions>();
  CLI::App* sub = app.add_subcommand("build-dataset", "Write a synthetic clean corpus, glyph targets and poisoned copies");
  sub->add_option("--run", o->run, "Run name under the output root");
  sub->add_option("--count", o->count, "Number of clean images");
  sub->add_option("--size", o->size, "Image side length (multiple of 8)");
  sub->add_option("--glyphs", o->glyphs, "Target glyph ids")->delimiter(',');
  o->flags.add_to(*sub);
  reg.commands.push_back({sub, [o, &reg] { run_build(*o, reg); }});
}

}  // namespace parasite::cli
