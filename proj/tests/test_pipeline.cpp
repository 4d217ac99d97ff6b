#include "adtrace/pipeline.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace adtrace;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

nlohmann::json without_timings(nlohmann::json m) {
    m.erase("stage1_total_ms");
    m.erase("stage2_total_ms");
    for (auto& a : m["alerts"]) {
        a.erase("stage1_ms");
        a.erase("stage2_ms");
    }
    return m;
}

DetectOptions options_for(const ForgeOutput& out) {
    DetectOptions opt;
    opt.directory = out.directory;
    return opt;
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("lateral movement dataset yields one positive graph") {
    const ForgeOutput& out = fx::playbook_data(AttackLabel::PassTheHash, 1);
    EventStore store;
    fx::fill(store, out);
    DetectionResult r = run_detection(store, options_for(out));
    REQUIRE(r.reports.size() == 1);
    CHECK(r.reports[0].verdict);
    CHECK(r.manifest.alerts.size() == 1);
    CHECK(r.manifest.stage2_queries > 0);

    EvalMetrics m = evaluate(outcomes(r, store), out.truth, &r.manifest);
    CHECK(m.stage1.tp == 1);
    CHECK(m.stage2.tp == 1);
    CHECK(m.stage2.fp == 0);
    CHECK(m.stage2.fn == 0);
    CHECK(m.edge_precision == 1.0);
    CHECK(m.edge_recall == 1.0);
    CHECK(m.stage1_ms.count == 1);
}

TEST_CASE("no alerts means no stage-2 lookups") {
    ForgeOutput out = forge(fx::short_benign(61, 4.0));
    EventStore store;
    fx::fill(store, out);
    auto before = store.query_count();
    (void)get_authentication_anomalies(store);
    auto stage1_only = store.query_count() - before;

    before = store.query_count();
    DetectionResult r = run_detection(store, options_for(out));
    CHECK(r.alerts.empty());
    CHECK(r.reports.empty());
    CHECK(r.manifest.stage2_queries == 0);
    CHECK(store.query_count() - before == stage1_only);
}

TEST_CASE("noisy benign data is suppressed by triage") {
    auto cfg = fx::short_benign(62, 12.0);
    cfg.rates.truncation_fraction = 0.05;
    ForgeOutput out = forge(cfg);
    EventStore store;
    fx::fill(store, out);

    DetectionResult r = run_detection(store, options_for(out));
    REQUIRE_FALSE(r.alerts.empty());
    for (const auto& rep : r.reports) CHECK_FALSE(rep.verdict);
    EvalMetrics m = evaluate(outcomes(r, store), out.truth);
    CHECK(m.stage1.fp == r.alerts.size());
    CHECK(m.stage2.fp == 0);

    DetectOptions raw = options_for(out);
    raw.triage = false;
    DetectionResult all = run_detection(store, raw);
    EvalMetrics mr = evaluate(outcomes(all, store), out.truth);
    CHECK(mr.stage1.fp > 0);
    CHECK(mr.stage2.fp == mr.stage1.fp);
}

TEST_CASE("empty outputs miss the attack") {
    const ForgeOutput& out = fx::playbook_data(AttackLabel::Kerberoasting, 1);
    EvalMetrics m = evaluate({}, out.truth);
    CHECK(m.stage1.fn == 1);
    CHECK(m.stage2.fn == 1);
    CHECK(m.stage1.tp == 0);
    CHECK(m.edge_recall == 0.0);
}

TEST_CASE("percentiles use nearest rank") {
    std::vector<double> v;
    for (int i = 100; i >= 1; --i) v.push_back(i);
    Percentiles p = percentiles(v);
    CHECK(p.count == 100);
    CHECK(p.p50 == 50);
    CHECK(p.p90 == 90);
    CHECK(p.p99 == 99);
    CHECK(p.max == 100);
    CHECK(percentiles({}).count == 0);
    CHECK(percentiles({7}).p50 == 7);
}

TEST_CASE("runs are reproducible apart from timings") {
    auto cfg = playbook_scenario(AttackLabel::GoldenTicket, 3);
    cfg.rates.truncation_fraction = 0.05;
    ForgeOutput out = forge(cfg);
    EventStore store;
    fx::fill(store, out);
    fx::TempDir tmp("determinism");

    DetectOptions opt = options_for(out);
    DetectionResult a = run_detection(store, opt);
    opt.tracer.threads = 4;
    DetectionResult b = run_detection(store, opt);
    write_run(a, store, tmp / "a");
    write_run(b, store, tmp / "b");

    REQUIRE(a.manifest.outputs == b.manifest.outputs);
    for (const auto& name : a.manifest.outputs) {
        CAPTURE(name);
        if (name == "manifest.json") continue;
        CHECK(slurp(tmp / "a" / name) == slurp(tmp / "b" / name));
    }
    auto ma = nlohmann::json::parse(slurp(tmp / "a" / "manifest.json"));
    auto mb = nlohmann::json::parse(slurp(tmp / "b" / "manifest.json"));
    CHECK(without_timings(ma) == without_timings(mb));
    for (const auto& x : a.manifest.alerts) {
        CHECK(x.stage1_ms >= 0);
        CHECK(x.stage2_ms >= 0);
    }
}

TEST_CASE("run directory contents") {
    const ForgeOutput& out = fx::playbook_data(AttackLabel::PassTheTicket, 2);
    EventStore store;
    fx::fill(store, out);
    fx::TempDir tmp("run");
    DetectionResult r = run_detection(store, options_for(out));
    r.manifest.seed = 2;
    write_run(r, store, tmp.path());
    for (const auto& name : r.manifest.outputs) CHECK(std::filesystem::exists(tmp / name));

    auto back = RunManifest::from_json(nlohmann::json::parse(slurp(tmp / "manifest.json")));
    CHECK(back.to_json() == r.manifest.to_json());
    CHECK(back.seed == std::optional<std::uint64_t>(2));

    auto det = outcomes_from_json(nlohmann::json::parse(slurp(tmp / "detections.json")));
    CHECK(outcomes_to_json(det) == outcomes_to_json(outcomes(r, store)));
    CHECK(nlohmann::json::parse(slurp(tmp / "reports.json")).size() == r.reports.size());
}

TEST_CASE("reports are ranked") {
    auto cfg = playbook_scenario(AttackLabel::AsRepRoasting, 4);
    cfg.rates.truncation_fraction = 0.05;
    ForgeOutput out = forge(cfg);
    EventStore store;
    fx::fill(store, out);
    DetectionResult r = run_detection(store, options_for(out));
    REQUIRE(r.reports.size() > 1);
    for (std::size_t i = 0; i < r.reports.size(); ++i) {
        CHECK(r.reports[i].rank == i + 1);
        if (i) CHECK(r.reports[i - 1].score >= r.reports[i].score);
    }
    CHECK(r.reports[0].graph.label == AttackLabel::AsRepRoasting);
}

}
