#pragma once

// End-to-end attack pipeline shared by the command-line tool and the
// acceptance suite: corpus -> clean pretraining -> backdoor fine-tuning and
// a clean twin -> sampling -> ASR / desk-FID.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "parasite/dataset.hpp"
#include "parasite/denoiser.hpp"
#include "parasite/diffusion.hpp"
#include "parasite/metrics.hpp"
#include "parasite/trainer.hpp"

namespace parasite {

struct ScheduleConfig {
  int steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.04;

  [[nodiscard]] NoiseSchedule build() const { return NoiseSchedule::linear(steps, beta_start, beta_end); }
};

struct CorpusConfig {
  int image_size = 16;
  int channels = 1;
  std::size_t clean_count = 2000;
  // Target pool used while poisoning.
  std::vector<std::string> target_glyphs{"A"};
  // Glyphs never seen in training, embedded only at attack time.
  std::vector<std::string> heldout_glyphs;
  std::uint64_t seed = 1;
};

struct PretrainConfig {
  int epochs = 0;
  double lr = 1e-3;
  int batch_size = 1;
  // Seeds both the weight initialization and the pretraining draws.
  std::uint64_t seed = 3;
};

struct EvalConfig {
  std::size_t poisoned_inits = 200;
  std::size_t clean_inits = 200;
  // img2img strength for the attack and clean-init runs.
  double strength = 0.6;
  // Strength used for the desk-FID generations; 1 means fresh noise.
  double fid_strength = 1.0;
  std::size_t fid_samples = 200;
  // Extra strengths probed with poisoned inits (mean ncc per strength).
  std::vector<double> probe_strengths{0.2, 0.8};
  AsrConfig asr;
  std::uint64_t seed = 7;
  int threads = 1;
};

struct ExperimentConfig {
  CorpusConfig corpus;
  StegoConfig stego;
  ScheduleConfig schedule;
  DenoiserConfig model;
  PretrainConfig pretrain;
  TrainConfig train;
  EvalConfig eval;

  // Keeps the derived fields (model image shape and T, train.stego) in sync.
  void resolve();
  void validate() const;

  [[nodiscard]] std::string to_json() const;
  // Unknown keys are rejected; missing keys keep the values of `base`.
  static ExperimentConfig from_json(std::string_view text, const ExperimentConfig& base = {});
  static ExperimentConfig load(const std::filesystem::path& path, const ExperimentConfig& base = {});
};

// Reference desk configuration for the 16x16 attack experiments: ten clean
// pretraining epochs, then one fine-tuning epoch at lr 5e-4.
ExperimentConfig desk_defaults();

struct AttackModels {
  DenoiserParams base;
  DenoiserParams backdoored;
  DenoiserParams twin;
  TrainReport backdoor_report;
  TrainReport twin_report;
};

// Clean pretraining with poison rate 0 for cfg.pretrain.epochs. The returned
// parameters carry a fresh optimizer state, ready for fine-tuning.
DenoiserParams pretrain(const ExperimentConfig& cfg, const Dataset& clean, const Dataset& targets);

// Backdoor fine-tuning plus a clean twin fine-tuned with identical settings
// but poison rate 0, both starting from `base`.
AttackModels fine_tune(const ExperimentConfig& cfg, const Dataset& clean, const Dataset& targets,
                       const DenoiserParams& base);

EpsilonModel as_model(const DenoiserParams& params);

// One chain per init (or per index for fresh noise). Seeds are derived from
// (seed, index) so the result does not depend on the thread count.
Dataset sample_many(const DenoiserParams& params, const NoiseSchedule& sched, const Dataset* inits,
                    std::size_t count, double strength, std::uint64_t seed, int threads = 1,
                    std::string_view id_prefix = "sample");

struct AttackEvaluation {
  double asr_poisoned = 0.0;
  double asr_clean = 0.0;
  std::vector<double> poisoned_scores;
  std::vector<double> clean_scores;
  double fid_attack = 0.0;
  double fid_baseline = 0.0;
  FidReport fid_attack_report;
  FidReport fid_baseline_report;
  std::map<double, double> probe_mean_ncc;
  // Held-out (customized) targets, only when heldout_glyphs is non-empty.
  std::optional<double> asr_heldout;
  std::vector<double> heldout_scores;
};

// Attack-time evaluation on fresh hosts that never appeared in training.
AttackEvaluation evaluate_attack(const ExperimentConfig& cfg, const AttackModels& models, const Dataset& targets);

struct PipelineResult {
  AttackModels models;
  AttackEvaluation evaluation;
  double wall_seconds = 0.0;
};

PipelineResult run_pipeline(const ExperimentConfig& cfg);

// ---- sweeps -------------------------------------------------------------------

enum class SweepAxis { poison_rate, epochs, lambda };

SweepAxis parse_sweep_axis(std::string_view name);
std::string_view to_string(SweepAxis axis);

struct SweepPoint {
  double value = 0.0;
  bool ok = false;
  std::string error;
  double asr = 0.0;
  double asr_clean = 0.0;
  double fid = 0.0;
  double fid_baseline = 0.0;
};

// Runs the pipeline once per value; the clean pretraining is shared across
// points. Failed points are kept and flagged.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<double>& values);

// Long format: axis,value,metric,metric_value,status
std::string sweep_csv(SweepAxis axis, const std::vector<SweepPoint>& points);

}  // namespace parasite
