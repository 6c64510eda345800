#include <benchmark/benchmark.h>

#include "adnet/episodes.hpp"
#include "adnet/model.hpp"
#include "adnet/rng.hpp"
#include "adnet/supervoxel.hpp"
#include "adnet/synthetic.hpp"
#include "adnet/train.hpp"

namespace {

using namespace adnet;

std::pair<Volume, LabelVolume> reference_volume() {
  SyntheticSpec spec;
  spec.volumes = 1;
  return generate_synthetic_dataset(spec)[0];
}

void BM_SupervoxelGenerate(benchmark::State& state) {
  auto [vol, labels] = reference_volume();
  SupervoxelParams p;
  p.rho = std::max<int64_t>(1, vol.num_voxels() / 200);
  for (auto _ : state) {
    auto sv = generate_supervoxels(vol, p);
    benchmark::DoNotOptimize(sv.labels.data());
  }
}
BENCHMARK(BM_SupervoxelGenerate)->Unit(benchmark::kMillisecond);

void BM_EncoderForward(benchmark::State& state) {
  EncoderConfig cfg;
  auto params = init_encoder<float>(cfg, 0, false);
  auto rng = make_rng(1);
  std::normal_distribution<float> dist(0.f, 1.f);
  std::vector<float> img(64 * 64);
  for (auto& v : img) v = dist(rng);
  auto x = Tensor<float>::from_data({1, 1, 64, 64}, std::move(img), false);
  for (auto _ : state) {
    Tape<float> tape;
    auto f = encode(tape, cfg, params, x);
    benchmark::DoNotOptimize(f.value().data());
  }
}
BENCHMARK(BM_EncoderForward)->Unit(benchmark::kMillisecond);

void BM_InferSlice(benchmark::State& state) {
  auto [vol, labels] = reference_volume();
  auto m = make_model<float>(EncoderConfig{}, HeadConfig{}, 0, false);
  const int z = vol.dims[0] / 2;
  SupportSlice sup{extract_slice(vol, z), class_mask_slice(labels, z, 1)};
  if (std::count(sup.mask.begin(), sup.mask.end(), 1) == 0)
    sup.mask.assign(sup.mask.size(), 1);
  auto query = extract_slice(vol, z + 1);
  for (auto _ : state) {
    auto pred = infer_slice(m, {sup}, query, vol.dims[1], vol.dims[2]);
    benchmark::DoNotOptimize(pred.scores.data());
  }
}
BENCHMARK(BM_InferSlice)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  auto [vol, labels] = reference_volume();
  SupervoxelParams p;
  p.rho = std::max<int64_t>(1, vol.num_voxels() / 200);
  auto sv = generate_supervoxels(vol, p);

  auto m = make_model<float>(EncoderConfig{}, HeadConfig{}, 0, true);
  auto params = model_parameters(m);
  SgdState<float> sgd_state;
  SgdConfig sgd;
  SamplerConfig sampler;
  sampler.min_pixels = 50;
  TransformSpec transforms;
  auto rng = make_rng(7);
  int64_t iter = 0;
  for (auto _ : state) {
    auto ep = sample_episode(vol, sv, "bench", sampler, transforms, rng);
    Tape<float> tape;
    auto loss = total_loss(tape, ep, m.enc_cfg, m.enc, m.head, LossToggles{},
                           1.0f, 0.1f);
    for (auto& t : params) t.zero_grad();
    tape.backward(loss.total);
    sgd_step(params, sgd_state, sgd, iter++);
    benchmark::DoNotOptimize(m.head.threshold());
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
