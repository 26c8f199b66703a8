#include <benchmark/benchmark.h>

#include "quadtrack/embed_net.hpp"
#include "quadtrack/synth.hpp"
#include "quadtrack/tensor_ops.hpp"
#include "quadtrack/tracker.hpp"
#include "quadtrack/trainer.hpp"

using namespace quadtrack;

namespace {

Tensor random_image(std::size_t side, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(1, 3, side, side);
    for (auto& v : t.span()) v = static_cast<float>(uniform(rng, 0.0, 1.0));
    return t;
}

void BM_Conv2dFirstLayer(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    const Tensor in = random_image(side, 1);
    const EmbedNet net = EmbedNet::init(desk_architecture(), 2);
    const auto& p = net.params().convs[0];
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d(in, p.kernels, std::span<const float>(p.bias), 2));
    }
}
BENCHMARK(BM_Conv2dFirstLayer)->Arg(127)->Arg(255)->Unit(benchmark::kMillisecond);

void BM_EmbedSearch(benchmark::State& state) {
    const Tensor in = random_image(kSearchSize, 3);
    const EmbedNet net = EmbedNet::init(state.range(0) ? reference_architecture() : desk_architecture(), 4);
    for (auto _ : state) benchmark::DoNotOptimize(embed(net, in));
}
BENCHMARK(BM_EmbedSearch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrackStep(benchmark::State& state) {
    SynthSpec spec;
    const Sequence seq = synth_sequence(spec, 5, 0);
    const EmbedNet net = EmbedNet::init(desk_architecture(), 6);
    const TrackState start = track_init(net, seq.frame(0), seq.boxes[0]);
    const Tensor frame = seq.frame(1);
    for (auto _ : state) {
        TrackState s = start;
        benchmark::DoNotOptimize(track_step(net, s, frame));
    }
}
BENCHMARK(BM_TrackStep)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    SynthSpec spec;
    const std::vector<Sequence> data{synth_sequence(spec, 7, 0)};
    TrainConfig cfg;
    Rng rng(8);
    std::vector<TrainingPair> batch;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back(sample_pair(data, rng, cfg));
    EmbedNet net = EmbedNet::init(desk_architecture(), 9);
    LossWeights w;
    SgdState sgd;
    for (auto _ : state) benchmark::DoNotOptimize(train_step(net, w, sgd, batch, cfg, 1e-4));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
