#include "adtrace/pipeline.hpp"

#include "adtrace/event_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

namespace adtrace {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

bool overlaps(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
    auto i = a.begin();
    auto k = b.begin();
    while (i != a.end() && k != b.end()) {
        if (*i == *k) return true;
        if (*i < *k)
            ++i;
        else
            ++k;
    }
    return false;
}

} // namespace

std::string_view tool_version() { return "adtrace 0.3.0"; }

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j;
    j["tool_version"] = tool_version;
    j["inputs"] = inputs;
    j["configs"] = configs;
    j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
    j["event_count"] = event_count;
    j["alerts"] = nlohmann::json::array();
    for (const auto& a : alerts)
        j["alerts"].push_back({{"alert_id", a.alert_id}, {"stage1_ms", a.stage1_ms}, {"stage2_ms", a.stage2_ms}});
    j["stage1_total_ms"] = stage1_total_ms;
    j["stage2_total_ms"] = stage2_total_ms;
    j["stage2_queries"] = stage2_queries;
    j["outputs"] = outputs;
    return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    RunManifest m;
    m.tool_version = j.value("tool_version", "");
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.configs = j.value("configs", std::vector<std::string>{});
    if (j.contains("seed") && !j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
    m.event_count = j.value("event_count", std::size_t{0});
    for (const auto& a : j.value("alerts", nlohmann::json::array()))
        m.alerts.push_back({a.at("alert_id").get<std::size_t>(), a.at("stage1_ms").get<double>(),
                            a.at("stage2_ms").get<double>()});
    m.stage1_total_ms = j.value("stage1_total_ms", 0.0);
    m.stage2_total_ms = j.value("stage2_total_ms", 0.0);
    m.stage2_queries = j.value("stage2_queries", std::uint64_t{0});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    return m;
}

DetectionResult run_detection(const EventStore& store, const DetectOptions& opt) {
    DetectionResult r;
    r.manifest.tool_version = std::string(tool_version());
    r.manifest.event_count = store.size();

    auto t0 = Clock::now();
    r.alerts = get_authentication_anomalies(store, opt.sentinel);
    r.manifest.stage1_total_ms = ms_since(t0);
    if (r.alerts.empty()) return r;

    // stage 2 runs only on demand
    std::uint64_t q0 = store.query_count();
    auto t1 = Clock::now();
    Tracer tracer(store, opt.tracer);
    const Directory* dir = opt.directory ? &*opt.directory : nullptr;
    std::vector<ScoredReport> reports(r.alerts.size());
    std::vector<double> stage2(r.alerts.size(), 0.0);
    auto one = [&](std::size_t i) {
        auto s = Clock::now();
        AttackGraph g = tracer.get_ad_attack_graph(r.alerts[i]);
        ScoredReport rep = score_graph(std::move(g), opt.rules, opt.score, dir);
        if (!opt.triage) rep.verdict = true;
        if (opt.collapse) rep.graph = collapse_meta_nodes(rep.graph, opt.meta_patterns);
        reports[i] = std::move(rep);
        stage2[i] = ms_since(s);
    };
    unsigned n = std::max(1u, std::min<unsigned>(opt.tracer.threads, static_cast<unsigned>(r.alerts.size())));
    if (n == 1) {
        for (std::size_t i = 0; i < r.alerts.size(); ++i) one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex mu;
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < n; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < r.alerts.size(); i = next++) {
                    try {
                        one(i);
                    } catch (...) {
                        std::lock_guard lock(mu);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }
    r.manifest.stage2_total_ms = ms_since(t1);
    r.manifest.stage2_queries = store.query_count() - q0;
    for (std::size_t i = 0; i < r.alerts.size(); ++i)
        r.manifest.alerts.push_back({r.alerts[i].id, r.alerts[i].latency_ms, stage2[i]});

    if (opt.triage) {
        r.reports = rank(std::move(reports), opt.score);
    } else {
        std::vector<ScoredReport> ranked = rank(std::move(reports), opt.score);
        for (auto& rep : ranked) rep.verdict = true;
        r.reports = std::move(ranked);
    }
    return r;
}

std::vector<AlertOutcome> outcomes(const DetectionResult& r, const EventStore& store) {
    std::vector<AlertOutcome> out;
    for (const auto& a : r.alerts) {
        AlertOutcome o;
        o.alert_id = a.id;
        o.label = a.label;
        for (EventOffset m : a.chain.members()) o.chain_event_ids.push_back(store.at(m).id);
        std::sort(o.chain_event_ids.begin(), o.chain_event_ids.end());
        for (const auto& rep : r.reports) {
            if (rep.graph.alert_id != a.id) continue;
            o.positive = rep.verdict;
            o.score = rep.score;
            for (const auto& x : rep.graph.cross_edges) o.edges.push_back({x.source, x.dest, x.access});
            std::sort(o.edges.begin(), o.edges.end());
        }
        out.push_back(std::move(o));
    }
    return out;
}

nlohmann::json outcomes_to_json(const std::vector<AlertOutcome>& v) {
    auto arr = nlohmann::json::array();
    for (const auto& o : v) {
        nlohmann::json j{{"alert_id", o.alert_id},
                         {"label", to_string(o.label)},
                         {"chain_event_ids", o.chain_event_ids},
                         {"positive", o.positive},
                         {"score", o.score}};
        j["edges"] = nlohmann::json::array();
        for (const auto& e : o.edges)
            j["edges"].push_back({{"source", session_to_json(e.source)},
                                  {"dest", session_to_json(e.dest)},
                                  {"access", to_string(e.access)}});
        arr.push_back(std::move(j));
    }
    return arr;
}

std::vector<AlertOutcome> outcomes_from_json(const nlohmann::json& j) {
    std::vector<AlertOutcome> out;
    for (const auto& x : j) {
        AlertOutcome o;
        o.alert_id = x.at("alert_id").get<std::size_t>();
        o.label = enum_from_string<AttackLabel>(x.at("label").get<std::string>());
        o.chain_event_ids = x.at("chain_event_ids").get<std::vector<std::uint64_t>>();
        o.positive = x.at("positive").get<bool>();
        o.score = x.value("score", 0.0);
        for (const auto& e : x.at("edges"))
            o.edges.push_back({session_from_json(e.at("source")), session_from_json(e.at("dest")),
                               enum_from_string<AccessType>(e.at("access").get<std::string>())});
        out.push_back(std::move(o));
    }
    return out;
}

Percentiles percentiles(std::vector<double> values) {
    Percentiles p;
    p.count = values.size();
    if (values.empty()) return p;
    std::sort(values.begin(), values.end());
    auto rank = [&](double q) {
        auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
        return values[std::min(values.size() - 1, k == 0 ? 0 : k - 1)];
    };
    p.p50 = rank(0.50);
    p.p90 = rank(0.90);
    p.p99 = rank(0.99);
    p.max = values.back();
    return p;
}

nlohmann::json EvalMetrics::to_json() const {
    auto counts = [](const StageCounts& c) { return nlohmann::json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}}; };
    auto pct = [](const Percentiles& p) {
        return nlohmann::json{{"count", p.count}, {"p50", p.p50}, {"p90", p.p90}, {"p99", p.p99}, {"max", p.max}};
    };
    return {{"stage1", counts(stage1)},
            {"stage2", counts(stage2)},
            {"edges",
             {{"truth", truth_edges},
              {"predicted", predicted_edges},
              {"matched", matched_edges},
              {"precision", edge_precision},
              {"recall", edge_recall}}},
            {"timing_ms", {{"stage1", pct(stage1_ms)}, {"stage2", pct(stage2_ms)}}}};
}

EvalMetrics evaluate(const std::vector<AlertOutcome>& out, const GroundTruth& truth, const RunManifest* manifest) {
    EvalMetrics m;
    std::vector<std::vector<std::uint64_t>> attacks;
    for (const auto& a : truth.attacks) {
        auto ids = a.chain_event_ids;
        std::sort(ids.begin(), ids.end());
        attacks.push_back(std::move(ids));
    }
    auto hit = [&](const AlertOutcome& o) {
        return std::any_of(attacks.begin(), attacks.end(), [&](const auto& ids) { return overlaps(o.chain_event_ids, ids); });
    };
    for (const auto& o : out) {
        bool h = hit(o);
        (h ? m.stage1.tp : m.stage1.fp) += 1;
        if (o.positive) (h ? m.stage2.tp : m.stage2.fp) += 1;
    }
    for (const auto& ids : attacks) {
        bool seen1 = false, seen2 = false;
        for (const auto& o : out)
            if (overlaps(o.chain_event_ids, ids)) {
                seen1 = true;
                seen2 = seen2 || o.positive;
            }
        if (!seen1) ++m.stage1.fn;
        if (!seen2) ++m.stage2.fn;
    }

    std::set<TruthEdge> want(truth.causal_edges.begin(), truth.causal_edges.end());
    std::set<TruthEdge> got;
    for (const auto& o : out)
        if (o.positive) got.insert(o.edges.begin(), o.edges.end());
    m.truth_edges = want.size();
    m.predicted_edges = got.size();
    for (const auto& e : got) m.matched_edges += want.count(e);
    if (!got.empty()) m.edge_precision = static_cast<double>(m.matched_edges) / static_cast<double>(got.size());
    if (!want.empty()) m.edge_recall = static_cast<double>(m.matched_edges) / static_cast<double>(want.size());

    if (manifest) {
        std::vector<double> s1, s2;
        for (const auto& a : manifest->alerts) {
            s1.push_back(a.stage1_ms);
            s2.push_back(a.stage2_ms);
        }
        m.stage1_ms = percentiles(std::move(s1));
        m.stage2_ms = percentiles(std::move(s2));
    }
    return m;
}

void write_run(DetectionResult& r, const EventStore& store, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir / "graphs", ec);
    if (ec) throw IoError("cannot create " + (dir / "graphs").string() + ": " + ec.message());

    auto alerts = nlohmann::json::array();
    for (const auto& a : r.alerts) alerts.push_back(alert_to_json(a, store));
    write_json(dir / "alerts.json", alerts);

    auto reports = nlohmann::json::array();
    std::vector<std::string> outputs = {"alerts.json", "reports.json", "detections.json"};
    std::vector<const ScoredReport*> by_alert;
    for (const auto& rep : r.reports) {
        reports.push_back(report_to_json(rep));
        by_alert.push_back(&rep);
    }
    write_json(dir / "reports.json", reports);
    write_json(dir / "detections.json", outcomes_to_json(outcomes(r, store)));
    std::sort(by_alert.begin(), by_alert.end(),
              [](const ScoredReport* a, const ScoredReport* b) { return a->graph.alert_id < b->graph.alert_id; });
    for (const ScoredReport* rep : by_alert) {
        std::string stem = "graphs/alert-" + std::to_string(rep->graph.alert_id);
        std::ofstream dot(dir / (stem + ".dot"));
        if (!dot) throw IoError("cannot write " + (dir / (stem + ".dot")).string());
        dot << to_dot(rep->graph);
        write_json(dir / (stem + ".json"), graph_to_json(rep->graph));
        outputs.push_back(stem + ".dot");
        outputs.push_back(stem + ".json");
    }
    outputs.push_back("manifest.json");
    r.manifest.outputs = outputs;
    write_json(dir / "manifest.json", r.manifest.to_json());
}

} // namespace adtrace
