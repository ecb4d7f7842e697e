#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "parasite/ndmath.hpp"

namespace parasite {

// Variance schedule indexed t = 1..T; alpha_bar(0) is defined as 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  explicit NoiseSchedule(std::vector<double> betas);

  // Linear betas between beta_start and beta_end inclusive.
  static NoiseSchedule linear(int steps = 200, double beta_start = 1e-4, double beta_end = 0.04);

  [[nodiscard]] int steps() const noexcept { return static_cast<int>(beta_.size()) - 1; }
  [[nodiscard]] double beta(int t) const { return beta_[checked(t, 1)]; }
  [[nodiscard]] double alpha(int t) const { return alpha_[checked(t, 1)]; }
  [[nodiscard]] double alpha_bar(int t) const { return alpha_bar_[checked(t, 0)]; }
  // (1 - alpha_t)(1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
  [[nodiscard]] double posterior_variance(int t) const;

  void require_step(int t, int lowest = 1) const;

 private:
  [[nodiscard]] std::size_t checked(int t, int lowest) const;

  std::vector<double> beta_;       // slot 0 unused
  std::vector<double> alpha_;      // slot 0 unused
  std::vector<double> alpha_bar_;  // slot 0 == 1
};

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
ImageTensor q_sample(const ImageTensor& x0, int t, const ImageTensor& eps, const NoiseSchedule& sched);

// Backdoored noise target: the noise that would carry the target y to the
// same noisy point x_t that x0p and eps produce.
// (sqrt(abar) x0p + sqrt(1 - abar) eps - sqrt(abar) y) / sqrt(1 - abar),
// evaluated as eps + sqrt(abar) (x0p - y) / sqrt(1 - abar) so that y == x0p
// returns eps bit for bit.
ImageTensor epsilon_y(const ImageTensor& x0p, const ImageTensor& eps, const ImageTensor& y, int t,
                      const NoiseSchedule& sched);

// Reverse-process mean (1 / sqrt(alpha_t)) (x_t - (1 - alpha_t) / sqrt(1 - abar_t) eps_hat).
ImageTensor posterior_mean(const ImageTensor& x_t, const ImageTensor& eps_hat, int t, const NoiseSchedule& sched);

// Max-abs residual between the backdoor mean shift computed by substitution
// (posterior mean under eps_y minus posterior mean under eps) and its closed
// form (1 - alpha_t) / (sqrt(alpha_t) (1 - abar_t)) (y_t - x_t).
double check_mean_shift(const ImageTensor& x0, const ImageTensor& y, const ImageTensor& eps, int t,
                        const NoiseSchedule& sched);

// eps-prediction model evaluated at (x_t, t). Must be safe to call
// concurrently when several chains run at once.
using EpsilonModel = std::function<ImageTensor(const ImageTensor& x_t, int t)>;

struct SampleRequest {
  // Image to start from (img2img); empty means start from pure noise at T.
  std::optional<ImageTensor> init;
  // Shape of the fresh-noise start when no init is given.
  Shape shape{};
  // Fraction of the trajectory re-noised before denoising an init image.
  double strength = 1.0;
  std::uint64_t seed = 0;
};

// Start step for an img2img strength; 0 means no denoising at all.
int start_step(double strength, const NoiseSchedule& sched);

// Ancestral DDPM sampling. No noise is added at t = 1 and the output is
// clamped to [-1, 1].
ImageTensor sample(const EpsilonModel& model, const NoiseSchedule& sched, const SampleRequest& request);

}  // namespace parasite
