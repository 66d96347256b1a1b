#include <benchmark/benchmark.h>

#include <memory>

#include "overflow/network.hpp"
#include "overflow/pool_model.hpp"
#include "overflow/presets.hpp"
#include "overflow/trainer.hpp"

using namespace overflow;

namespace {

const SystemConfig& tenpool() {
    static const SystemConfig cfg = make_preset("tenpool").system;
    return cfg;
}

NetworkParams tenpool_net(NetStructure structure = NetStructure::PartiallyShared) {
    const auto& cfg = tenpool();
    NetworkParams net(structure, cfg.num_pools, cfg.epochs_per_day, {32});
    Rng rng(1);
    net.initialize(rng);
    for (double& v : net.values) v += 0.01;  // nonzero output layer so the softmax is not flat
    return net;
}

State busy_state(const SystemConfig& cfg) {
    State s = State::empty(cfg.num_pools);
    for (int j = 0; j < cfg.num_pools; ++j) s.x[j] = cfg.servers[j] + (j % 3 == 0 ? 6 : -3);
    s.epoch = 3;
    return s;
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
    const auto& cfg = tenpool();
    auto net = tenpool_net(static_cast<NetStructure>(state.range(0)));
    const State s = busy_state(cfg);
    for (auto _ : state) benchmark::DoNotOptimize(forward(net, s, cfg));
    state.SetLabel(structure_name(net.structure()));
}
BENCHMARK(BM_Forward)->DenseRange(0, 2);

static void BM_SampleBatched(benchmark::State& state) {
    const auto& cfg = tenpool();
    const State s = busy_state(cfg);
    auto kappa = atomic_distribution(RandomizedOverflow{0.5}, s, cfg);
    Rng rng(3);
    for (auto _ : state) benchmark::DoNotOptimize(sample_batched(kappa, s, cfg, rng));
}
BENCHMARK(BM_SampleBatched);

static void BM_PpoLossGrad(benchmark::State& state) {
    const auto& cfg = tenpool();
    auto net = tenpool_net();
    auto traj = rollout(NetworkPolicy{std::make_shared<NetworkParams>(net)}, cfg, 50, 5, 10);
    std::vector<PpoSample> batch;
    for (const auto& step : traj.steps) batch.push_back({step.contexts, 1.0});
    std::vector<double> grad;
    for (auto _ : state) benchmark::DoNotOptimize(ppo_loss_grad(net, batch, 0.2, cfg, grad));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_PpoLossGrad)->Unit(benchmark::kMillisecond);

static void BM_PoolModelSolve(benchmark::State& state) {
    const auto& cfg = tenpool();
    auto kbar = KbarEstimate::wait_only(cfg, default_pool_bounds(cfg));
    for (auto _ : state) benchmark::DoNotOptimize(build_pool_model(cfg, 0, kbar));
}
BENCHMARK(BM_PoolModelSolve)->Unit(benchmark::kMillisecond);

static void BM_RolloutDays(benchmark::State& state) {
    const auto& cfg = tenpool();
    const int days = static_cast<int>(state.range(0));
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(rollout(EmpiricalOverflow{default_night_epochs(cfg.epochs_per_day)},
                                                          cfg, days, ++seed, 0));
    state.SetItemsProcessed(state.iterations() * days);
}
BENCHMARK(BM_RolloutDays)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
