#include <memory>

#include <benchmark/benchmark.h>

#include "exerclass/session.hpp"
#include "exerclass/synthgen.hpp"
#include "exerclass/training.hpp"

namespace {

using namespace exerclass;

std::vector<LandmarkFrame> stream_frames() {
  SynthSpec spec;
  spec.counts = {2, 2, 2, 2};
  spec.t_min = spec.t_max = 32;
  std::vector<LandmarkFrame> out;
  for (const auto& clip : generate(spec).clips) out.insert(out.end(), clip.frames.begin(), clip.frames.end());
  return out;
}

void BM_SessionPushFrame(benchmark::State& state) {
  auto model = std::make_shared<LoadedModel>();
  model->params = init_params(model->config, 1);
  Session session(model, static_cast<int>(state.range(0)));
  const auto frames = stream_frames();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(session.push_frame(frames[i++ % frames.size()]));
  }
}
BENCHMARK(BM_SessionPushFrame)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_ForwardFullSequence(benchmark::State& state) {
  const ModelConfig cfg;
  const auto params = init_params(cfg, 1);
  const auto seq = pad_or_truncate(stream_frames(), cfg.max_seq_len, 0);
  for (auto _ : state) benchmark::DoNotOptimize(classify(seq, params, cfg));
}
BENCHMARK(BM_ForwardFullSequence)->Unit(benchmark::kMicrosecond);

void BM_TrainingBatchStep(benchmark::State& state) {
  const ModelConfig cfg;
  auto params = init_params(cfg, 1);
  auto opt = OptimizerState<float>::zeros(cfg);
  SynthSpec spec;
  spec.counts = {8, 8, 8, 8};
  std::vector<PoseSequence> seqs;
  for (const auto& clip : generate(spec).clips) seqs.push_back(pad_or_truncate(clip.frames, cfg.max_seq_len, clip.label));
  const auto batch = make_examples(seqs, cfg.pad_value);
  Rng rng(4);
  for (auto _ : state) {
    const auto g = compute_gradients<float>(batch, params, cfg, 0.3, rng);
    rmsprop_step(params, g.grads, opt, {});
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_TrainingBatchStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
