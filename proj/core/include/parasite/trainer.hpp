#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "parasite/dataset.hpp"
#include "parasite/denoiser.hpp"
#include "parasite/diffusion.hpp"
#include "parasite/stego.hpp"

namespace parasite {

// Poison rates at or above this level are known to wreck clean generation.
inline constexpr double kQualityCollapseRate = 0.45;

struct TrainConfig {
  int epochs = 1;
  int batch_size = 1;
  // Per-draw probability of the backdoor branch (on-the-fly mode only).
  double poison_rate = 0.1;
  double lr = 1e-3;
  // Rescale the batch gradient to this global L2 norm when it is larger;
  // 0 disables clipping.
  double grad_clip = 0.0;
  std::uint64_t seed = 0;
  // true: embed triggers while training; false: consume a prebuilt poisoned
  // dataset whose manifest names each item's target.
  bool on_the_fly = true;
  // Embedding settings, including the visibility coefficient lambda.
  StegoConfig stego;
  // Evaluate the backdoored noise target with the clean host x0 instead of
  // the poisoned x0'. Off by default; kept for comparison runs.
  bool eps_y_uses_clean_host = false;
  OptimizerConfig optimizer;
  int threads = 1;
  // Optional outputs: per-epoch checkpoints (plus abort.ckpt) and a JSONL log.
  std::filesystem::path checkpoint_dir;
  std::filesystem::path log_path;

  void validate() const;
};

enum class Branch { clean, backdoor };

struct BatchItem {
  ImageTensor input;  // x_t or x_t'
  int t = 0;
  ImageTensor eps;
  ImageTensor target_eps;  // eps (clean) or eps_y (backdoor)
  Branch branch = Branch::clean;
  std::size_t source = 0;
  std::size_t target = 0;  // meaningful for the backdoor branch only
};

// Where training draws come from. In prebuilt mode `images` is a poisoned
// training mix and `manifest` resolves each poisoned item's target.
struct TrainingData {
  const Dataset* images = nullptr;
  const Dataset* targets = nullptr;
  const PoisonManifest* manifest = nullptr;

  void validate(const TrainConfig& cfg) const;
};

// Draw number k always uses the stream derive_seed(cfg.seed, k), consumed in
// the order: image index, target index, eps, t, branch coin.
std::vector<BatchItem> mixed_batch(const TrainingData& data, const TrainConfig& cfg, const NoiseSchedule& sched,
                                   std::uint64_t first_draw, std::size_t count);

struct EpochStats {
  int epoch = 0;
  double mean_clean_loss = 0.0;
  double mean_backdoor_loss = 0.0;
  std::size_t clean_items = 0;
  std::size_t backdoor_items = 0;
  double wall_seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::uint64_t steps = 0;
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;
  // Loss of every backdoor-branch item in draw order.
  std::vector<double> backdoor_losses;
  std::vector<double> clean_losses;
};

struct TrainResult {
  DenoiserParams params;
  TrainReport report;
};

// Raised when a step produces a non-finite loss; carries the parameters from
// before the failing step.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, DenoiserParams last_good, std::uint64_t step)
      : NumericalError(what), last_good_(std::move(last_good)), step_(step) {}
  [[nodiscard]] const DenoiserParams& last_good() const noexcept { return last_good_; }
  [[nodiscard]] std::uint64_t step() const noexcept { return step_; }

 private:
  DenoiserParams last_good_;
  std::uint64_t step_;
};

using EpochCallback = std::function<void(const EpochStats&, const DenoiserParams&)>;

// Scales grads so their global L2 norm is at most max_norm (no-op for
// max_norm <= 0). Returns the norm before clipping.
double clip_gradient_norm(Weights& grads, double max_norm);

// Mixed clean/backdoor training. An epoch is |images| draws split into
// batches of batch_size; gradients are averaged over each batch.
TrainResult train(const TrainingData& data, const TrainConfig& cfg, DenoiserParams params,
                  const NoiseSchedule& sched, const EpochCallback& on_epoch = {});

// On-the-fly convenience overload.
TrainResult train(const Dataset& clean, const Dataset& targets, const TrainConfig& cfg, DenoiserParams params,
                  const NoiseSchedule& sched);

}  // namespace parasite
