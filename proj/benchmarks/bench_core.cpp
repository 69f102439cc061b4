#include <benchmark/benchmark.h>

#include "vloc/message_passing.hpp"
#include "vloc/network.hpp"
#include "vloc/rng.hpp"
#include "vloc/sparse_refine.hpp"
#include "vloc/synth.hpp"

namespace {

using namespace vloc;

void BM_Conv3dForward(benchmark::State& state) {
    const int cin = static_cast<int>(state.range(0)), cout = static_cast<int>(state.range(1)),
              n = static_cast<int>(state.range(2));
    net::ConvKernel k(cin, cout, 3);
    Rng rng(1);
    for (double& w : k.weights) w = rng.uniform(-1, 1);
    net::Tensor in(cin, {n, n, n});
    for (double& v : in.data()) v = rng.uniform();
    for (auto _ : state) benchmark::DoNotOptimize(net::conv3d_forward(in, k));
    state.counters["MAC/s"] = benchmark::Counter(27.0 * cin * cout * n * n * n, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv3dForward)->Args({1, 8, 8})->Args({8, 16, 4})->Args({24, 8, 8})->Args({8, 8, 16});

void BM_NetworkForward(benchmark::State& state) {
    net::NetworkSpec spec;
    const auto params = net::init_params(spec);
    const Volume3D vol = synth::render_volume(synth::sample_spine(synth::desk_model(), 3), synth::desk_template(), 5.0,
                                              0.02, 4);
    const net::Tensor in = net::to_tensor(vol);
    for (auto _ : state) benchmark::DoNotOptimize(net::forward(spec, params, in));
}
BENCHMARK(BM_NetworkForward)->Unit(benchmark::kMillisecond);

void BM_LossAndGradient(benchmark::State& state) {
    net::NetworkSpec spec;
    spec.output_channels = 2;
    const auto params = net::init_params(spec);
    net::Tensor in(1, {8, 8, 8}), target(2, {8, 8, 8});
    Rng rng(2);
    for (double& v : in.data()) v = rng.uniform();
    for (double& v : target.data()) v = rng.uniform();
    net::NetworkParams grad;
    for (auto _ : state) benchmark::DoNotOptimize(net::loss_and_gradient(spec, params, in, target, grad));
}
BENCHMARK(BM_LossAndGradient)->Unit(benchmark::kMillisecond);

void BM_RunPassing(benchmark::State& state) {
    const auto model = synth::desk_model();
    const Volume3D templ = synth::desk_template();
    std::vector<LandmarkSet> train;
    for (std::uint64_t i = 0; i < 20; ++i) train.push_back(synth::sample_spine(model, i));
    const auto graph = mp::learn_chain_graph(train, model.labels, templ.spacing());
    const auto lm = synth::sample_spine(model, 99);
    HeatmapStack maps;
    for (const auto& l : lm.entries()) {
        maps.labels.push_back(l.label);
        maps.channels.push_back(make_gaussian_heatmap(l.position, 12.0, templ));
    }
    maps = mp::to_probability_maps(maps);
    for (auto _ : state) benchmark::DoNotOptimize(mp::run_passing(maps, graph));
}
BENCHMARK(BM_RunPassing)->Unit(benchmark::kMillisecond);

void BM_Refine(benchmark::State& state) {
    const auto model = synth::desk_model();
    std::vector<LandmarkSet> train;
    for (std::uint64_t i = 0; i < 50; ++i) train.push_back(synth::sample_spine(model, i));
    const auto dict = sparse::build_dictionary(train, model.labels);
    LandmarkSet pred = synth::sample_spine(model, 500);
    pred.entries()[5].position.x += 40.0;
    for (auto _ : state) benchmark::DoNotOptimize(sparse::refine(pred, dict));
}
BENCHMARK(BM_Refine)->Unit(benchmark::kMicrosecond);

} // namespace
BENCHMARK_MAIN();
