#include "parasite/diffusion.hpp"

#include <string>

#include "parasite/rng.hpp"

namespace parasite {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) {
  if (betas.empty()) throw ConfigError("noise schedule needs at least one step");
  beta_.assign(1, 0.0);
  alpha_.assign(1, 1.0);
  alpha_bar_.assign(1, 1.0);
  double prev = 0.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta must lie in (0, 1), got " + std::to_string(b));
    if (b < prev) throw ConfigError("beta must be non-decreasing");
    prev = b;
    beta_.push_back(b);
    alpha_.push_back(1.0 - b);
    alpha_bar_.push_back(alpha_bar_.back() * (1.0 - b));
  }
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("schedule needs T >= 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + frac * (beta_end - beta_start);
  }
  return NoiseSchedule(std::move(betas));
}

void NoiseSchedule::require_step(int t, int lowest) const {
  if (t < lowest || t > steps()) {
    throw ConfigError("diffusion step " + std::to_string(t) + " outside [" + std::to_string(lowest) + ", " +
                      std::to_string(steps()) + "]");
  }
}

std::size_t NoiseSchedule::checked(int t, int lowest) const {
  require_step(t, lowest);
  return static_cast<std::size_t>(t);
}

double NoiseSchedule::posterior_variance(int t) const {
  return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

ImageTensor q_sample(const ImageTensor& x0, int t, const ImageTensor& eps, const NoiseSchedule& sched) {
  x0.require_same_shape(eps);
  sched.require_step(t);
  const double abar = sched.alpha_bar(t);
  const double a = std::sqrt(abar);
  const double b = std::sqrt(1.0 - abar);
  ImageTensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

ImageTensor epsilon_y(const ImageTensor& x0p, const ImageTensor& eps, const ImageTensor& y, int t,
                      const NoiseSchedule& sched) {
  x0p.require_same_shape(eps);
  x0p.require_same_shape(y);
  sched.require_step(t);
  const double abar = sched.alpha_bar(t);
  const double a = std::sqrt(abar);
  const double b = std::sqrt(1.0 - abar);
  ImageTensor out(x0p.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = eps[i] + a * (x0p[i] - y[i]) / b;
  return out;
}

ImageTensor posterior_mean(const ImageTensor& x_t, const ImageTensor& eps_hat, int t, const NoiseSchedule& sched) {
  x_t.require_same_shape(eps_hat);
  sched.require_step(t);
  const double alpha = sched.alpha(t);
  const double coef = (1.0 - alpha) / std::sqrt(1.0 - sched.alpha_bar(t));
  const double inv = 1.0 / std::sqrt(alpha);
  ImageTensor out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv * (x_t[i] - coef * eps_hat[i]);
  return out;
}

double check_mean_shift(const ImageTensor& x0, const ImageTensor& y, const ImageTensor& eps, int t,
                        const NoiseSchedule& sched) {
  sched.require_step(t, 2);
  x0.require_same_shape(y);
  x0.require_same_shape(eps);

  const ImageTensor x_t = q_sample(x0, t, eps, sched);
  const ImageTensor mu = posterior_mean(x_t, eps, t, sched);
  const ImageTensor mu_backdoor = posterior_mean(x_t, epsilon_y(x0, eps, y, t, sched), t, sched);
  const ImageTensor y_t = q_sample(y, t, eps, sched);

  const double alpha = sched.alpha(t);
  const double shift_coef = (1.0 - alpha) / (std::sqrt(alpha) * (1.0 - sched.alpha_bar(t)));
  double residual = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double substituted = mu_backdoor[i] - mu[i];
    const double closed_form = shift_coef * (y_t[i] - x_t[i]);
    residual = std::max(residual, std::abs(substituted - closed_form));
  }
  return residual;
}

int start_step(double strength, const NoiseSchedule& sched) {
  if (!(strength >= 0.0 && strength <= 1.0)) throw ConfigError("strength must lie in [0, 1]");
  if (strength == 0.0) return 0;
  const int t = static_cast<int>(std::lround(strength * sched.steps()));
  return std::clamp(t, 1, sched.steps());
}

ImageTensor sample(const EpsilonModel& model, const NoiseSchedule& sched, const SampleRequest& request) {
  Rng rng(request.seed);
  ImageTensor x;
  int t_start = sched.steps();
  if (request.init) {
    t_start = start_step(request.strength, sched);
    if (t_start == 0) return *request.init;
    ImageTensor eps(request.init->shape());
    fill_normal(rng, eps.values());
    x = q_sample(*request.init, t_start, eps, sched);
  } else {
    if (!(request.strength >= 0.0 && request.strength <= 1.0)) throw ConfigError("strength must lie in [0, 1]");
    if (request.shape.size() == 0) throw ShapeError("fresh-noise sampling needs a non-empty shape");
    x = ImageTensor(request.shape);
    fill_normal(rng, x.values());
  }

  ImageTensor noise(x.shape());
  for (int t = t_start; t >= 1; --t) {
    const ImageTensor eps_hat = model(x, t);
    x = posterior_mean(x, eps_hat, t, sched);
    if (t > 1) {
      const double sigma = std::sqrt(sched.posterior_variance(t));
      fill_normal(rng, noise.values());
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += sigma * noise[i];
    }
  }
  return clamp_unit(std::move(x));
}

}  // namespace parasite
