#include "adtrace/pipeline.hpp"

#include <benchmark/benchmark.h>

#include <map>
#include <memory>
#include <random>

using namespace adtrace;

namespace {

struct Dataset {
    ForgeOutput out;
    EventStore store;
};

const Dataset& mixed(double noise) {
    static std::map<double, std::unique_ptr<Dataset>> cache;
    auto& d = cache[noise];
    if (!d) {
        d = std::make_unique<Dataset>();
        auto cfg = playbook_scenario(AttackLabel::PassTheHash, 3);
        cfg.rates.system_noise = noise;
        cfg.rates.truncation_fraction = 0.05;
        d->out = forge(cfg);
        for (const auto& e : d->out.events) d->store.add(e);
        d->store.seal();
    }
    return *d;
}

void BM_Ingest(benchmark::State& state) {
    const auto& d = mixed(static_cast<double>(state.range(0)));
    for (auto _ : state) {
        EventStore s;
        for (const auto& e : d.out.events) s.add(e);
        s.seal();
        benchmark::DoNotOptimize(s.size());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * d.out.events.size()));
}
BENCHMARK(BM_Ingest)->Arg(300)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_HostWindowQuery(benchmark::State& state) {
    const auto& d = mixed(static_cast<double>(state.range(0)));
    auto hosts = d.store.hosts();
    Timestamp t0 = d.store.time(d.store.all().front());
    Timestamp t1 = d.store.time(d.store.all().back());
    std::mt19937_64 rng(1);
    for (auto _ : state) {
        QueryFilter f;
        f.host = hosts[rng() % hosts.size()];
        Timestamp a = t0 + static_cast<Timestamp>(rng() % static_cast<std::uint64_t>(t1 - t0));
        f.time_range = TimeRange{a, a + 600'000};
        benchmark::DoNotOptimize(d.store.query(f));
    }
}
BENCHMARK(BM_HostWindowQuery)->Arg(300)->Arg(2000);

void BM_Stage1(benchmark::State& state) {
    const auto& d = mixed(300);
    for (auto _ : state) benchmark::DoNotOptimize(get_authentication_anomalies(d.store));
}
BENCHMARK(BM_Stage1)->Unit(benchmark::kMillisecond);

void BM_Stage2PerAlert(benchmark::State& state) {
    const auto& d = mixed(300);
    auto alerts = get_authentication_anomalies(d.store);
    std::size_t i = 0;
    for (auto _ : state) {
        Tracer t(d.store);
        benchmark::DoNotOptimize(t.get_ad_attack_graph(alerts[i++ % alerts.size()]));
    }
}
BENCHMARK(BM_Stage2PerAlert)->Unit(benchmark::kMillisecond);

void BM_ScoreGraph(benchmark::State& state) {
    const auto& d = mixed(300);
    auto alerts = get_authentication_anomalies(d.store);
    Tracer t(d.store);
    std::vector<AttackGraph> graphs = t.get_ad_attack_graphs(alerts);
    auto rules = default_rules();
    ScoreConfig cfg;
    for (auto _ : state)
        for (const auto& g : graphs) benchmark::DoNotOptimize(score_graph(g, rules, cfg, &d.out.directory));
}
BENCHMARK(BM_ScoreGraph);

} // namespace

BENCHMARK_MAIN();
