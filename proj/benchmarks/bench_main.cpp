// Microbenchmarks for the throughput-critical paths: box blur across
// kernel sizes, SSIM scoring, raw convolution, and a full adversarial
// training step at toy scale.

#include <benchmark/benchmark.h>

#include "xdecode/imaging.hpp"
#include "xdecode/metrics.hpp"
#include "xdecode/model.hpp"
#include "xdecode/nn.hpp"
#include "xdecode/rng.hpp"
#include "xdecode/trainer.hpp"

namespace {

using namespace xdecode;

ImageTensor noise_image(uint64_t seed, int h, int w) {
  Rng rng(seed);
  ImageTensor img(h, w, 3, RangeTag::unit);
  for (float& v : img.data) v = static_cast<float>(rng.uniform01());
  return img;
}

// The running-sum blur should be flat across kernel sizes; this is the
// bench that catches an accidental O(k) regression.
void BM_BoxBlur(benchmark::State& state) {
  const ImageTensor img = noise_image(1, 256, 256);
  const BlurLevel k = BlurLevel::checked(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(box_blur(img, k));
  }
  state.SetItemsProcessed(state.iterations() * 256 * 256 * 3);
}
BENCHMARK(BM_BoxBlur)->Arg(3)->Arg(15)->Arg(29);

void BM_Ssim(benchmark::State& state) {
  const ImageTensor a = noise_image(2, 256, 256);
  const ImageTensor b = box_blur(a, BlurLevel::checked(9));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ssim(a, b));
  }
}
BENCHMARK(BM_Ssim);

void BM_ConvForward(benchmark::State& state) {
  Rng rng(3);
  nn::Conv2d conv("bench", 64, 64, 3, 1, 1);
  conv.init(rng);
  Tensor x(1, 64, 64, 64);
  for (float& v : x.v) v = static_cast<float>(rng.normal() * 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv.forward(x));
  }
}
BENCHMARK(BM_ConvForward);

void BM_GeneratorForward(benchmark::State& state) {
  Rng rng(4);
  const GeneratorConfig cfg = GeneratorConfig::for_image(64, 16);
  UNetGenerator gen(cfg, rng);
  Tensor x(1, 3, 64, 64);
  for (float& v : x.v) v = static_cast<float>(rng.uniform01() * 2.0 - 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gen.forward(x));
  }
}
BENCHMARK(BM_GeneratorForward);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.image_size = 32;
  cfg.base_width = 4;
  cfg.thin_features = true;
  TrainState ts(cfg);

  Rng rng(5);
  std::vector<PairSample> pairs;
  for (int i = 0; i < 4; ++i) {
    PairSample p;
    p.target = noise_image(100 + static_cast<uint64_t>(i), 32, 32);
    p.input = box_blur(p.target, BlurLevel::checked(5));
    p.kernel_used = BlurLevel::checked(5);
    pairs.push_back(std::move(p));
  }
  const PackedBatch batch = pack_pairs(pairs);
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_step(ts, batch, 2e-4));
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
