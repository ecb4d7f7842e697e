#include "parasite/trainer.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "parasite/rng.hpp"

namespace parasite {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(poison_rate >= 0.0 && poison_rate < 1.0)) throw ConfigError("poison_rate must lie in [0, 1)");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(grad_clip >= 0.0) || !std::isfinite(grad_clip)) throw ConfigError("grad_clip must be >= 0");
  stego.validate();
}

void TrainingData::validate(const TrainConfig& cfg) const {
  if (images == nullptr || images->empty()) throw InputError("training needs a non-empty image set");
  if (targets == nullptr || targets->empty()) throw InputError("training needs a non-empty target pool");
  if (!cfg.on_the_fly) {
    if (manifest == nullptr) throw InputError("prebuilt training mode needs a poison manifest");
    if (cfg.eps_y_uses_clean_host) throw ConfigError("the clean-host eps_y variant needs on-the-fly embedding");
    for (const Sample& s : *images) {
      if (s.provenance != Provenance::poisoned) continue;
      const ManifestEntry* e = manifest->by_output(s.id);
      if (e == nullptr) throw InputError("poisoned item " + s.id + " is missing from the manifest");
      if (targets->find(e->target_id) == nullptr) throw InputError("manifest target " + e->target_id + " not found");
    }
  }
}

namespace {

std::size_t target_index(const Dataset& targets, const std::string& id) {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].id == id) return i;
  }
  throw InputError("unknown target id " + id);
}

BatchItem draw_item(const TrainingData& data, const TrainConfig& cfg, const NoiseSchedule& sched, std::uint64_t draw) {
  const Dataset& images = *data.images;
  const Dataset& targets = *data.targets;
  Rng rng(derive_seed(cfg.seed, draw));

  BatchItem item;
  item.source = uniform_index(rng, images.size());
  item.target = uniform_index(rng, targets.size());
  item.eps = ImageTensor(images.shape());
  fill_normal(rng, item.eps.values());
  item.t = std::uniform_int_distribution<int>(1, sched.steps())(rng);
  const double coin = uniform01(rng);

  const Sample& src = images[item.source];
  bool backdoor = false;
  ImageTensor x0p;
  if (cfg.on_the_fly) {
    backdoor = coin < cfg.poison_rate;
    if (backdoor) {
      const ImageTensor y = resize_nearest(targets[item.target].image, src.image.height());
      x0p = embed(src.image, y, cfg.stego).poisoned;
    }
  } else if (src.provenance == Provenance::poisoned) {
    backdoor = true;
    item.target = target_index(targets, data.manifest->by_output(src.id)->target_id);
    x0p = src.image;
  }

  if (!backdoor) {
    item.branch = Branch::clean;
    item.input = q_sample(src.image, item.t, item.eps, sched);
    item.target_eps = item.eps;
    return item;
  }
  const ImageTensor y = resize_nearest(targets[item.target].image, src.image.height());
  item.branch = Branch::backdoor;
  item.input = q_sample(x0p, item.t, item.eps, sched);
  item.target_eps = epsilon_y(cfg.eps_y_uses_clean_host ? src.image : x0p, item.eps, y, item.t, sched);
  return item;
}

void append_log(const std::filesystem::path& path, const nlohmann::json& line) {
  if (path.empty()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  out << line.dump() << '\n';
}

std::filesystem::path epoch_checkpoint(const std::filesystem::path& dir, int epoch) {
  std::ostringstream name;
  name << "epoch_" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
  return dir / name.str();
}

// Per-item losses and the batch-mean gradient. Items are reduced in index
// order regardless of the thread count.
std::vector<double> batch_gradient(const DenoiserParams& params, const std::vector<BatchItem>& batch, Weights& grads,
                                   int threads) {
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> losses(batch.size());
  if (threads <= 1 || batch.size() == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      losses[i] = accumulate_loss_and_grad(params, batch[i].input, batch[i].t, batch[i].target_eps, grads, scale);
    }
    return losses;
  }
  std::vector<Weights> per_item(batch.size(), Weights::zeros(params.config));
  std::vector<std::exception_ptr> errors(batch.size());
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), batch.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < batch.size(); i += workers) {
        try {
          losses[i] = accumulate_loss_and_grad(params, batch[i].input, batch[i].t, batch[i].target_eps, per_item[i],
                                               scale);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const Weights& g : per_item) grads += g;
  return losses;
}

std::vector<BatchItem> draw_batch(const TrainingData& data, const TrainConfig& cfg, const NoiseSchedule& sched,
                                  std::uint64_t first_draw, std::size_t count) {
  std::vector<BatchItem> batch;
  batch.reserve(count);
  for (std::size_t k = 0; k < count; ++k) batch.push_back(draw_item(data, cfg, sched, first_draw + k));
  return batch;
}

}  // namespace

double clip_gradient_norm(Weights& grads, double max_norm) {
  double sq = 0.0;
  for (auto a : std::as_const(grads).arrays()) {
    for (double g : a) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) grads *= max_norm / norm;
  return norm;
}

std::vector<BatchItem> mixed_batch(const TrainingData& data, const TrainConfig& cfg, const NoiseSchedule& sched,
                                   std::uint64_t first_draw, std::size_t count) {
  cfg.validate();
  data.validate(cfg);
  return draw_batch(data, cfg, sched, first_draw, count);
}

TrainResult train(const TrainingData& data, const TrainConfig& cfg, DenoiserParams params, const NoiseSchedule& sched,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  data.validate(cfg);
  if (!(params.config.image == data.images->shape())) {
    throw ShapeError("denoiser is configured for " + params.config.image.str() + " images, data holds " +
                     data.images->shape().str());
  }
  if (params.config.steps != sched.steps()) throw ConfigError("denoiser and schedule disagree on T");

  TrainReport report;
  if (cfg.on_the_fly && cfg.poison_rate >= kQualityCollapseRate - 1e-12) {
    report.warnings.push_back("poison rate " + std::to_string(cfg.poison_rate) +
                              " is at or above the quality-collapse level; clean generation is expected to degrade");
    append_log(cfg.log_path, {{"event", "warning"}, {"message", report.warnings.back()}});
  }

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t per_epoch = data.images->size();
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  std::uint64_t draw = 0;
  Weights grads = Weights::zeros(params.config);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto e0 = std::chrono::steady_clock::now();
    EpochStats stats;
    stats.epoch = epoch;
    double clean_sum = 0.0;
    double backdoor_sum = 0.0;
    for (std::size_t done = 0; done < per_epoch; done += batch_size) {
      const std::size_t n = std::min(batch_size, per_epoch - done);
      const std::vector<BatchItem> batch = draw_batch(data, cfg, sched, draw, n);
      draw += n;
      grads.fill(0.0);
      std::vector<double> losses;
      try {
        losses = batch_gradient(params, batch, grads, cfg.threads);
        clip_gradient_norm(grads, cfg.grad_clip);
        optimizer_step(params, grads, cfg.lr, cfg.optimizer);
      } catch (const NumericalError& err) {
        std::ostringstream msg;
        msg << "training aborted at step " << report.steps + 1 << " (epoch " << epoch << "): " << err.what();
        // optimizer_step validates gradients before touching params, so
        // params still hold the last good state here.
        if (!cfg.checkpoint_dir.empty()) save_checkpoint(cfg.checkpoint_dir / "abort.ckpt", params);
        append_log(cfg.log_path, {{"event", "abort"}, {"message", msg.str()}});
        throw TrainingAborted(msg.str(), params, report.steps + 1);
      }
      if (!params.finite()) {
        throw TrainingAborted("parameters became non-finite at step " + std::to_string(report.steps + 1), params,
                              report.steps + 1);
      }
      ++report.steps;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].branch == Branch::backdoor) {
          backdoor_sum += losses[i];
          ++stats.backdoor_items;
          report.backdoor_losses.push_back(losses[i]);
        } else {
          clean_sum += losses[i];
          ++stats.clean_items;
          report.clean_losses.push_back(losses[i]);
        }
      }
    }
    stats.mean_clean_loss = stats.clean_items ? clean_sum / static_cast<double>(stats.clean_items) : 0.0;
    stats.mean_backdoor_loss = stats.backdoor_items ? backdoor_sum / static_cast<double>(stats.backdoor_items) : 0.0;
    stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e0).count();
    report.epochs.push_back(stats);

    if (!cfg.checkpoint_dir.empty()) save_checkpoint(epoch_checkpoint(cfg.checkpoint_dir, epoch), params);
    append_log(cfg.log_path, {{"event", "epoch"},
                              {"epoch", epoch},
                              {"mean_clean_loss", stats.mean_clean_loss},
                              {"mean_backdoor_loss", stats.mean_backdoor_loss},
                              {"clean_items", stats.clean_items},
                              {"backdoor_items", stats.backdoor_items},
                              {"steps", report.steps},
                              {"wall_seconds", stats.wall_seconds}});
    if (on_epoch) on_epoch(stats, params);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return TrainResult{std::move(params), std::move(report)};
}

TrainResult train(const Dataset& clean, const Dataset& targets, const TrainConfig& cfg, DenoiserParams params,
                  const NoiseSchedule& sched) {
  return train(TrainingData{&clean, &targets, nullptr}, cfg, std::move(params), sched);
}

}  // namespace parasite
