#pragma once

#include <cstdint>
#include <optional>

#include <CLI11.hpp>

#include "parasite/experiment.hpp"

namespace parasite::cli {

// Stego flags override the config file only when given.
struct StegoFlags {
  std::optional<double> lambda;
  std::optional<double> band_lo;
  std::optional<double> band_hi;
  std::optional<double> strength_floor;
  bool no_clamp = false;

  void add_to(CLI::App& app) {
    app.add_option("--lambda", lambda, "Visibility coefficient");
    app.add_option("--band-lo", band_lo, "Lower normalized band radius");
    app.add_option("--band-hi", band_hi, "Upper normalized band radius");
    app.add_option("--strength-floor", strength_floor, "Lower bound of the adaptive strength");
    app.add_flag("--no-clamp", no_clamp, "Do not clip the poisoned image to [-1, 1]");
  }

  [[nodiscard]] StegoConfig apply(StegoConfig s) const {
    if (lambda) s.lambda = *lambda;
    if (band_lo) s.band_lo = *band_lo;
    if (band_hi) s.band_hi = *band_hi;
    if (strength_floor) s.strength_floor = *strength_floor;
    if (no_clamp) s.clamp_output = false;
    s.validate();
    return s;
  }
};

// Experiment-level overrides shared by build-dataset, train and sweep.
struct ExperimentFlags {
  std::optional<std::string> config;
  std::optional<double> poison_rate;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  StegoFlags stego;

  void add_to(CLI::App& app) {
    app.add_option("--config", config, "Experiment config (JSON); flags override its values");
    app.add_option("--poison-rate", poison_rate, "Poison rate");
    app.add_option("--epochs", epochs, "Training epochs");
    app.add_option("--seed", seed, "Seed for the corpus, training and evaluation streams");
    app.add_option("--threads", threads, "Worker threads for training batches and sampling");
    stego.add_to(app);
  }

  [[nodiscard]] ExperimentConfig resolve(ExperimentConfig c) const {
    c.stego = stego.apply(c.stego);
    if (poison_rate) c.train.poison_rate = *poison_rate;
    if (epochs) c.train.epochs = *epochs;
    if (seed) {
      c.corpus.seed = *seed;
      c.train.seed = *seed;
      c.eval.seed = *seed;
    }
    if (threads) {
      c.train.threads = *threads;
      c.eval.threads = *threads;
    }
    c.resolve();
    c.validate();
    return c;
  }
};

}  // namespace parasite::cli
