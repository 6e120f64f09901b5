#include <benchmark/benchmark.h>

#include "evofsm/engine.hpp"
#include "evofsm/memory.hpp"
#include "evofsm/ops.hpp"
#include "evofsm/scenarios.hpp"
#include "support/generators.hpp"

namespace {

using namespace evofsm;

void BM_ValidateConfig(benchmark::State& state) {
    gen::Rng rng(1);
    const auto config = gen::random_config(rng, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(validate_config(config));
}
BENCHMARK(BM_ValidateConfig)->Arg(3)->Arg(8);

void BM_ApplyOp(benchmark::State& state) {
    gen::Rng rng(2);
    std::vector<std::pair<FsmConfig, AtomicOp>> cases;
    while (cases.size() < 64) {
        auto config = gen::random_config(rng);
        auto op = gen::random_op(rng, config);
        try {
            apply_op(config, op);
        } catch (const OpRejected&) {
            continue;
        }
        cases.emplace_back(std::move(config), std::move(op));
    }
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& [config, op] = cases[i++ % cases.size()];
        benchmark::DoNotOptimize(apply_op(config, op));
    }
}
BENCHMARK(BM_ApplyOp);

void BM_RetrieveTopK(benchmark::State& state) {
    constexpr std::size_t dim = kDefaultEmbeddingDim;
    gen::Rng rng(3);
    ExperiencePool pool(dim);
    for (std::int64_t n = 0; n < state.range(0); ++n) pool.add_record(gen::random_record(rng, dim));
    const auto query = gen::random_unit_vector(rng, dim);
    for (auto _ : state) benchmark::DoNotOptimize(pool.retrieve_top_k(query, 5));
}
BENCHMARK(BM_RetrieveTopK)->Range(16, 4096);

void BM_ScriptedRun(benchmark::State& state) {
    const auto world = scenarios::case1();
    const auto query = world.items.front().query;
    for (auto _ : state) {
        const auto backends = scenarios::make_backends(world);
        benchmark::DoNotOptimize(run(world.default_config, query, backends));
    }
}
BENCHMARK(BM_ScriptedRun);

}  // namespace

BENCHMARK_MAIN();
