#include <benchmark/benchmark.h>

#include "parasite/dataset.hpp"
#include "parasite/denoiser.hpp"
#include "parasite/diffusion.hpp"
#include "parasite/rng.hpp"
#include "parasite/stego.hpp"

using namespace parasite;

namespace {

ImageTensor noise(int n, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor img(Shape{n, n, 1});
  fill_normal(rng, img.values());
  return img;
}

void BM_Dct2(benchmark::State& state) {
  const ImageTensor img = noise(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(dct2(img));
}
BENCHMARK(BM_Dct2)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

void BM_Idct2(benchmark::State& state) {
  const CoefTensor c = dct2(noise(static_cast<int>(state.range(0)), 2));
  for (auto _ : state) benchmark::DoNotOptimize(idct2(c));
}
BENCHMARK(BM_Idct2)->Arg(16)->Arg(64);

void BM_Embed(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ImageTensor host = gen_synthetic(1, n, 3)[0].image;
  const ImageTensor target = rasterize_glyph(glyph("A"), n);
  const StegoConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(embed(host, target, cfg));
}
BENCHMARK(BM_Embed)->Arg(16)->Arg(64);

DenoiserConfig model(int hidden) {
  DenoiserConfig c;
  c.hidden = hidden;
  return c;
}

void BM_Forward(benchmark::State& state) {
  const DenoiserParams p = DenoiserParams::initialize(model(static_cast<int>(state.range(0))), 4);
  const ImageTensor x = noise(16, 5);
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, x, 100));
}
BENCHMARK(BM_Forward)->Arg(128)->Arg(256)->Arg(512);

void BM_LossAndGrad(benchmark::State& state) {
  const DenoiserParams p = DenoiserParams::initialize(model(static_cast<int>(state.range(0))), 6);
  const ImageTensor x = noise(16, 7);
  const ImageTensor target = noise(16, 8);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(p, x, 100, target));
}
BENCHMARK(BM_LossAndGrad)->Arg(128)->Arg(256)->Arg(512);

void BM_Img2ImgChain(benchmark::State& state) {
  const DenoiserParams p = DenoiserParams::initialize(model(256), 9);
  const NoiseSchedule sched = NoiseSchedule::linear(200);
  const EpsilonModel m = [&](const ImageTensor& x, int t) { return forward(p, x, t); };
  SampleRequest req;
  req.init = gen_synthetic(1, 16, 10)[0].image;
  req.strength = 0.6;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample(m, sched, req));
    ++req.seed;
  }
}
BENCHMARK(BM_Img2ImgChain)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
