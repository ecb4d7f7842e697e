#include "parasite/denoiser.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "parasite/rng.hpp"

namespace parasite {

void DenoiserConfig::validate() const {
  if (image.size() == 0) throw ConfigError("denoiser image shape is empty");
  if (embed_width < 2 || embed_width % 2 != 0) throw ConfigError("time embedding width must be even and >= 2");
  if (hidden < 1) throw ConfigError("hidden width must be >= 1");
  if (steps < 1) throw ConfigError("denoiser step count must be >= 1");
}

Layer Layer::zeros(int inputs, int outputs) {
  Layer l;
  l.inputs = inputs;
  l.outputs = outputs;
  l.weight.assign(static_cast<std::size_t>(inputs) * static_cast<std::size_t>(outputs), 0.0);
  l.bias.assign(static_cast<std::size_t>(outputs), 0.0);
  return l;
}

Weights Weights::zeros(const DenoiserConfig& cfg) {
  cfg.validate();
  return Weights{Layer::zeros(cfg.input_width(), cfg.hidden), Layer::zeros(cfg.hidden, cfg.hidden),
                 Layer::zeros(cfg.hidden, cfg.pixels())};
}

std::array<std::span<double>, 6> Weights::arrays() {
  return {input.weight, input.bias, hidden.weight, hidden.bias, output.weight, output.bias};
}

std::array<std::span<const double>, 6> Weights::arrays() const {
  return {input.weight, input.bias, hidden.weight, hidden.bias, output.weight, output.bias};
}

std::size_t Weights::parameter_count() const {
  std::size_t n = 0;
  for (auto a : arrays()) n += a.size();
  return n;
}

void Weights::fill(double value) {
  for (auto a : arrays()) std::fill(a.begin(), a.end(), value);
}

Weights& Weights::operator+=(const Weights& rhs) {
  auto dst = arrays();
  auto src = rhs.arrays();
  for (std::size_t k = 0; k < dst.size(); ++k) {
    if (dst[k].size() != src[k].size()) throw ShapeError("weight shapes differ");
    for (std::size_t i = 0; i < dst[k].size(); ++i) dst[k][i] += src[k][i];
  }
  return *this;
}

Weights& Weights::operator*=(double s) {
  for (auto a : arrays()) {
    for (double& v : a) v *= s;
  }
  return *this;
}

DenoiserParams DenoiserParams::zeros(const DenoiserConfig& cfg) {
  Weights w = Weights::zeros(cfg);
  return DenoiserParams{cfg, w, OptimizerState{w, w, 0}};
}

DenoiserParams DenoiserParams::initialize(const DenoiserConfig& cfg, std::uint64_t seed) {
  DenoiserParams p = zeros(cfg);
  Rng rng(seed);
  for (Layer* layer : {&p.weights.input, &p.weights.hidden, &p.weights.output}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer->inputs));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : layer->weight) w = dist(rng);
    for (double& b : layer->bias) b = dist(rng);
  }
  return p;
}

bool DenoiserParams::finite() const {
  for (auto a : weights.arrays()) {
    if (!all_finite(a)) return false;
  }
  return true;
}

std::vector<double> time_embedding(int t, int steps, int width) {
  if (width < 2 || width % 2 != 0) throw ConfigError("time embedding width must be even and >= 2");
  if (steps < 1) throw ConfigError("time embedding needs T >= 1");
  const int half = width / 2;
  std::vector<double> out(static_cast<std::size_t>(width));
  const double lo = 1.0 / steps;
  for (int k = 0; k < half; ++k) {
    const double frac = half == 1 ? 0.0 : static_cast<double>(k) / (half - 1);
    const double omega = lo * std::pow(1.0 / lo, frac);
    out[static_cast<std::size_t>(k)] = std::sin(t * omega);
    out[static_cast<std::size_t>(k + half)] = std::cos(t * omega);
  }
  return out;
}

namespace {

void affine(const Layer& layer, std::span<const double> in, std::span<double> out) {
  const std::size_t n_in = static_cast<std::size_t>(layer.inputs);
  for (int o = 0; o < layer.outputs; ++o) {
    const double* row = layer.weight.data() + static_cast<std::size_t>(o) * n_in;
    double acc = layer.bias[static_cast<std::size_t>(o)];
    for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * in[i];
    out[static_cast<std::size_t>(o)] = acc;
  }
}

// grad_in = W^T grad_out (optional), dW += scale * grad_out input^T, db += scale * grad_out.
void backprop(const Layer& layer, std::span<const double> in, std::span<const double> grad_out, Layer& grad,
              double scale, std::span<double> grad_in) {
  const std::size_t n_in = static_cast<std::size_t>(layer.inputs);
  if (!grad_in.empty()) std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (int o = 0; o < layer.outputs; ++o) {
    const double g = grad_out[static_cast<std::size_t>(o)];
    if (g == 0.0) continue;
    const double gs = g * scale;
    const std::size_t off = static_cast<std::size_t>(o) * n_in;
    const double* row = layer.weight.data() + off;
    double* grow = grad.weight.data() + off;
    for (std::size_t i = 0; i < n_in; ++i) grow[i] += gs * in[i];
    grad.bias[static_cast<std::size_t>(o)] += gs;
    if (!grad_in.empty()) {
      for (std::size_t i = 0; i < n_in; ++i) grad_in[i] += g * row[i];
    }
  }
}

struct Activations {
  std::vector<double> input;
  std::vector<double> h1;
  std::vector<double> h2;
  std::vector<double> out;
};

void require_input(const DenoiserParams& params, const ImageTensor& x_t) {
  if (!(x_t.shape() == params.config.image)) {
    throw ShapeError("denoiser expects " + params.config.image.str() + " input, got " + x_t.shape().str());
  }
}

void require_finite(std::span<const double> values, const char* what, int t) {
  if (!all_finite(values)) {
    std::ostringstream msg;
    msg << "non-finite " << what << " at diffusion step " << t;
    throw NumericalError(msg.str());
  }
}

Activations run_forward(const DenoiserParams& params, const ImageTensor& x_t, int t) {
  require_input(params, x_t);
  const DenoiserConfig& cfg = params.config;
  Activations a;
  a.input.reserve(static_cast<std::size_t>(cfg.input_width()));
  a.input.assign(x_t.values().begin(), x_t.values().end());
  const std::vector<double> emb = time_embedding(t, cfg.steps, cfg.embed_width);
  a.input.insert(a.input.end(), emb.begin(), emb.end());

  a.h1.resize(static_cast<std::size_t>(cfg.hidden));
  affine(params.weights.input, a.input, a.h1);
  for (double& v : a.h1) v = std::tanh(v);
  a.h2.resize(static_cast<std::size_t>(cfg.hidden));
  affine(params.weights.hidden, a.h1, a.h2);
  for (double& v : a.h2) v = std::tanh(v);
  a.out.resize(static_cast<std::size_t>(cfg.pixels()));
  affine(params.weights.output, a.h2, a.out);
  return a;
}

}  // namespace

ImageTensor forward(const DenoiserParams& params, const ImageTensor& x_t, int t) {
  Activations a = run_forward(params, x_t, t);
  return ImageTensor(x_t.shape(), std::move(a.out));
}

double accumulate_loss_and_grad(const DenoiserParams& params, const ImageTensor& x_t, int t,
                                const ImageTensor& target_eps, Weights& grads, double scale) {
  x_t.require_same_shape(target_eps);
  const Activations a = run_forward(params, x_t, t);
  require_finite(a.h1, "first hidden activation", t);
  require_finite(a.h2, "second hidden activation", t);
  require_finite(a.out, "network output", t);

  const double inv_d = 1.0 / static_cast<double>(a.out.size());
  std::vector<double> g_out(a.out.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < a.out.size(); ++i) {
    const double r = a.out[i] - target_eps[i];
    loss += r * r;
    g_out[i] = 2.0 * r * inv_d;
  }
  loss *= inv_d;
  if (!std::isfinite(loss)) throw NumericalError("non-finite loss at diffusion step " + std::to_string(t));

  std::vector<double> g_h2(a.h2.size());
  backprop(params.weights.output, a.h2, g_out, grads.output, scale, g_h2);
  for (std::size_t i = 0; i < g_h2.size(); ++i) g_h2[i] *= 1.0 - a.h2[i] * a.h2[i];

  std::vector<double> g_h1(a.h1.size());
  backprop(params.weights.hidden, a.h1, g_h2, grads.hidden, scale, g_h1);
  for (std::size_t i = 0; i < g_h1.size(); ++i) g_h1[i] *= 1.0 - a.h1[i] * a.h1[i];

  backprop(params.weights.input, a.input, g_h1, grads.input, scale, {});
  return loss;
}

LossAndGrad loss_and_grad(const DenoiserParams& params, const ImageTensor& x_t, int t, const ImageTensor& target_eps) {
  LossAndGrad out{0.0, Weights::zeros(params.config)};
  out.loss = accumulate_loss_and_grad(params, x_t, t, target_eps, out.grads, 1.0);
  return out;
}

void optimizer_step(DenoiserParams& params, const Weights& grads, double lr, const OptimizerConfig& opt) {
  for (auto g : grads.arrays()) {
    if (!all_finite(g)) throw NumericalError("optimizer received non-finite gradients");
  }
  OptimizerState& st = params.optimizer;
  st.step += 1;
  auto w = params.weights.arrays();
  auto g = grads.arrays();
  if (opt.kind == OptimizerKind::sgd) {
    for (std::size_t k = 0; k < w.size(); ++k) {
      for (std::size_t i = 0; i < w[k].size(); ++i) w[k][i] -= lr * g[k][i];
    }
    return;
  }
  auto m = st.first_moment.arrays();
  auto v = st.second_moment.arrays();
  const double step = static_cast<double>(st.step);
  const double bc1 = 1.0 - std::pow(opt.beta1, step);
  const double bc2 = 1.0 - std::pow(opt.beta2, step);
  for (std::size_t k = 0; k < w.size(); ++k) {
    for (std::size_t i = 0; i < w[k].size(); ++i) {
      const double gi = g[k][i];
      m[k][i] = opt.beta1 * m[k][i] + (1.0 - opt.beta1) * gi;
      v[k][i] = opt.beta2 * v[k][i] + (1.0 - opt.beta2) * gi * gi;
      const double m_hat = m[k][i] / bc1;
      const double v_hat = v[k][i] / bc2;
      w[k][i] -= lr * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
  }
}

// ---- checkpoint -------------------------------------------------------------

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  [[nodiscard]] bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw FormatError("checkpoint truncated");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_weights(Writer& w, const Weights& weights) {
  for (auto a : weights.arrays()) {
    for (double d : a) w.f64(d);
  }
}

void read_weights(Reader& r, Weights& weights) {
  for (auto a : weights.arrays()) {
    for (double& d : a) d = r.f64();
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const DenoiserParams& params) {
  const DenoiserConfig& c = params.config;
  Writer w;
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(c.pixels()));
  w.u32(static_cast<std::uint32_t>(c.embed_width));
  w.u32(static_cast<std::uint32_t>(c.hidden));
  w.u32(static_cast<std::uint32_t>(c.steps));
  w.u32(static_cast<std::uint32_t>(c.image.height));
  w.u32(static_cast<std::uint32_t>(c.image.width));
  w.u32(static_cast<std::uint32_t>(c.image.channels));
  w.u64(params.optimizer.step);
  write_weights(w, params.weights);
  write_weights(w, params.optimizer.first_moment);
  write_weights(w, params.optimizer.second_moment);
  return w.take();
}

DenoiserParams deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kCheckpointMagic) throw FormatError("not a denoiser checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t d = r.u32();
  DenoiserConfig cfg;
  cfg.embed_width = static_cast<int>(r.u32());
  cfg.hidden = static_cast<int>(r.u32());
  cfg.steps = static_cast<int>(r.u32());
  cfg.image.height = static_cast<int>(r.u32());
  cfg.image.width = static_cast<int>(r.u32());
  cfg.image.channels = static_cast<int>(r.u32());
  if (cfg.image.size() != d) throw FormatError("checkpoint pixel count disagrees with its image shape");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header invalid: ") + e.what());
  }
  DenoiserParams p = DenoiserParams::zeros(cfg);
  p.optimizer.step = r.u64();
  read_weights(r, p.weights);
  read_weights(r, p.optimizer.first_moment);
  read_weights(r, p.optimizer.second_moment);
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& params) {
  const auto bytes = serialize_checkpoint(params);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

DenoiserParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace parasite
