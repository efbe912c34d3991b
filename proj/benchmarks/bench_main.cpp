#include <benchmark/benchmark.h>

#include "oadn/config.hpp"
#include "oadn/denoiser.hpp"
#include "oadn/dsp.hpp"
#include "oadn/forward.hpp"
#include "oadn/nn_engine.hpp"
#include "oadn/noise.hpp"
#include "oadn/recon.hpp"

using namespace oadn;

static void BM_Conv3x3Forward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int h = 64, w = 256;
  nn::Tensor<float> in, out;
  in.resize(c, h, w);
  out.resize(c, h, w);
  std::vector<float> weights(static_cast<std::size_t>(c) * c * 9, 0.01f);
  std::vector<float> bias(c, 0.0f), scratch;
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y) {
      float* r = in.row(ci, y);
      for (int x = 0; x < w; ++x) r[x] = static_cast<float>(x % 7);
    }
  for (auto _ : state) {
    nn::conv3x3_forward(in, weights.data(), bias.data(), out, scratch);
    benchmark::DoNotOptimize(out.buf.data());
  }
  state.SetItemsProcessed(state.iterations() * 2ll * 9 * c * c * h * w);
}
BENCHMARK(BM_Conv3x3Forward)->Arg(8)->Arg(16)->Arg(32);

static void BM_InferDesk(benchmark::State& state) {
  PipelineConfig cfg = desk_config();
  cfg.arch.base_channels = static_cast<int>(state.range(0));
  DenoiserModel m = init_model(cfg.arch, cfg.seed, cfg.train.input_scale);
  Sinogram s(cfg.geometry.n_transducers, cfg.n_samples,
             cfg.geometry.sample_rate_hz);
  Rng rng({1}, "bench");
  for (double& v : s.data) v = rng.gaussian();
  for (auto _ : state) {
    Sinogram out = infer_noise(m, s);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_InferDesk)->Arg(8)->Arg(16);

static void BM_ForwardApply(benchmark::State& state) {
  PipelineConfig cfg = desk_config();
  const ForwardOperator op = cfg.make_operator();
  ImageGrid p0(cfg.grid.n_x, cfg.grid.n_y, cfg.grid.extent_m);
  Rng rng({2}, "bench");
  for (double& v : p0.pixels) v = std::abs(rng.gaussian());
  Sinogram s(op.n_transducers(), op.n_samples(), cfg.geometry.sample_rate_hz);
  for (auto _ : state) {
    op.apply(p0.pixels, s.data);
    benchmark::DoNotOptimize(s.data.data());
  }
}
BENCHMARK(BM_ForwardApply);

static void BM_Bandpass(benchmark::State& state) {
  BandpassSpec spec;
  Sinogram s(64, 1808, 40e6);
  Rng rng({3}, "bench");
  for (double& v : s.data) v = rng.gaussian();
  for (auto _ : state) {
    Sinogram out = bandpass(s, spec);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_Bandpass);

static void BM_GenParasitic(benchmark::State& state) {
  ParasiticNoiseSpec spec;
  SinogramShape shape{64, 320, 40e6};
  std::uint64_t i = 0;
  for (auto _ : state) {
    Sinogram n = gen_parasitic(spec, shape, {i++}, "bench");
    benchmark::DoNotOptimize(n.data.data());
  }
}
BENCHMARK(BM_GenParasitic);

BENCHMARK_MAIN();
