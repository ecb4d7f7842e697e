#pragma once

// Dense two-hidden-layer eps-prediction network with hand-written backprop
// and an adaptive-moment optimizer.
//
//   h1  = tanh(W1 [flatten(x_t); embed(t)] + b1)
//   h2  = tanh(W2 h1 + b2)
//   eps = W3 h2 + b3

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "parasite/ndmath.hpp"

namespace parasite {

struct DenoiserConfig {
  Shape image{16, 16, 1};
  int embed_width = 32;
  int hidden = 256;
  // Diffusion step count T; the time embedding frequencies depend on it.
  int steps = 200;

  [[nodiscard]] int pixels() const noexcept { return static_cast<int>(image.size()); }
  [[nodiscard]] int input_width() const noexcept { return pixels() + embed_width; }
  void validate() const;

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

struct Layer {
  int inputs = 0;
  int outputs = 0;
  std::vector<double> weight;  // outputs x inputs, row-major
  std::vector<double> bias;

  static Layer zeros(int inputs, int outputs);
  friend bool operator==(const Layer&, const Layer&) = default;
};

// One set of network-shaped arrays. Used for parameters, gradients and the
// optimizer's moment estimates alike.
struct Weights {
  Layer input;
  Layer hidden;
  Layer output;

  static Weights zeros(const DenoiserConfig& cfg);

  // W1, b1, W2, b2, W3, b3 in declaration order.
  [[nodiscard]] std::array<std::span<double>, 6> arrays();
  [[nodiscard]] std::array<std::span<const double>, 6> arrays() const;
  [[nodiscard]] std::size_t parameter_count() const;

  void fill(double value);
  Weights& operator+=(const Weights& rhs);
  Weights& operator*=(double s);

  friend bool operator==(const Weights&, const Weights&) = default;
};

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  Weights first_moment;
  Weights second_moment;
  std::uint64_t step = 0;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct DenoiserParams {
  DenoiserConfig config;
  Weights weights;
  OptimizerState optimizer;

  static DenoiserParams zeros(const DenoiserConfig& cfg);
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer, biases included.
  static DenoiserParams initialize(const DenoiserConfig& cfg, std::uint64_t seed);

  [[nodiscard]] bool finite() const;
  friend bool operator==(const DenoiserParams&, const DenoiserParams&) = default;
};

// sin(t w_k) then cos(t w_k), w_k geometric from 1/T to 1.
std::vector<double> time_embedding(int t, int steps, int width);

ImageTensor forward(const DenoiserParams& params, const ImageTensor& x_t, int t);

struct LossAndGrad {
  double loss = 0.0;
  Weights grads;
};

// Mean squared error over pixels and its exact gradient.
LossAndGrad loss_and_grad(const DenoiserParams& params, const ImageTensor& x_t, int t, const ImageTensor& target_eps);

// Adds scale * d(loss)/d(theta) into grads and returns the unscaled loss.
// Throws NumericalError if any activation or the loss is non-finite.
double accumulate_loss_and_grad(const DenoiserParams& params, const ImageTensor& x_t, int t,
                                const ImageTensor& target_eps, Weights& grads, double scale);

// Bias-corrected adaptive-moment update (or plain descent for sgd). The step
// counter advances in both modes.
void optimizer_step(DenoiserParams& params, const Weights& grads, double lr, const OptimizerConfig& opt = {});

// Binary checkpoint; see docs/checkpoint_format.md.
inline constexpr std::array<char, 8> kCheckpointMagic{'P', 'R', 'S', 'T', 'D', 'N', 'S', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const DenoiserParams& params);
DenoiserParams deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& params);
DenoiserParams load_checkpoint(const std::filesystem::path& path);

}  // namespace parasite
