// Acceptance runner: one line per criterion, nonzero exit if any fails.
// Pass criterion numbers as arguments to run a subset.

#include "adtrace/baselines.hpp"
#include "adtrace/pipeline.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

using namespace adtrace;

namespace {

struct Verdict {
    bool ok = true;
    std::string detail;
};

const AttackLabel kPlaybooks[] = {AttackLabel::PassTheHash, AttackLabel::GoldenTicket, AttackLabel::PassTheTicket,
                                  AttackLabel::Kerberoasting, AttackLabel::AsRepRoasting};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool overlaps(std::vector<std::uint64_t> a, std::vector<std::uint64_t> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::uint64_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    return !both.empty();
}

std::vector<std::uint64_t> chain_ids(const AnomalyAlert& a, const EventStore& s) {
    std::vector<std::uint64_t> ids;
    for (auto off : a.chain.members()) ids.push_back(s.at(off).id);
    return ids;
}

std::set<TruthEdge> edges_of(const AttackGraph& g) {
    std::set<TruthEdge> s;
    for (const auto& x : g.cross_edges) s.insert({x.source, x.dest, x.access});
    return s;
}

const AnomalyAlert* alert_by_id(const DetectionResult& r, std::size_t id) {
    for (const auto& a : r.alerts)
        if (a.id == id) return &a;
    return nullptr;
}

struct Run {
    ForgeOutput out;
    EventStore store;
    DetectionResult result;
};

std::unique_ptr<Run> detect(ScenarioConfig cfg, bool collapse = true) {
    auto r = std::make_unique<Run>();
    r->out = forge(cfg);
    fx::fill(r->store, r->out);
    DetectOptions opt;
    opt.directory = r->out.directory;
    opt.collapse = collapse;
    r->result = run_detection(r->store, opt);
    return r;
}

// Ancestors of every process acting in the cluster's own sessions, by creation
// record; the only predefined-session events a cluster may depend on.
std::set<std::uint64_t> backward_ancestors(const AttackGraph& g, const EventStore& store) {
    std::set<std::uint64_t> out;
    std::set<ProcessRef> seen;
    std::vector<ProcessRef> todo;
    for (const auto& e : g.events)
        if (!is_predefined_session(e.session)) todo.push_back(e.subject);
    while (!todo.empty()) {
        ProcessRef p = todo.back();
        todo.pop_back();
        if (!seen.insert(p).second) continue;
        auto created = store.creation_of(p);
        if (!created) continue;
        const Event& ev = store.at(*created);
        out.insert(ev.id);
        todo.push_back(ev.system()->subject_process);
    }
    return out;
}

Verdict exclusion_check(const AttackGraph& g, const EventStore& store, std::size_t& checked) {
    Verdict v;
    std::set<std::uint64_t> sliced;
    for (const auto& c : g.clusters)
        for (const auto& s : c.slices) sliced.insert(s.event_ids.begin(), s.event_ids.end());
    auto ancestors = backward_ancestors(g, store);
    for (const auto& e : g.events) {
        if (!is_predefined_session(e.session)) continue;
        ++checked;
        if (!sliced.count(e.id)) {
            v.ok = false;
            v.detail = "event " + std::to_string(e.id) + " from an unlinked predefined session";
            return v;
        }
    }
    for (auto id : sliced)
        if (!ancestors.count(id)) {
            v.ok = false;
            v.detail = "slice event " + std::to_string(id) + " is not a backward ancestor";
            return v;
        }
    return v;
}

Verdict c1_attack_recall() {
    auto t0 = std::chrono::steady_clock::now();
    int good = 0, total = 0;
    std::ostringstream bad;
    for (auto kind : kPlaybooks)
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            ++total;
            auto run = detect(playbook_scenario(kind, seed));
            const auto& truth = run->out.truth.attacks.at(0).chain_event_ids;
            bool labelled = false;
            for (const auto& a : run->result.alerts)
                labelled = labelled || (a.label == kind && overlaps(chain_ids(a, run->store), truth));
            bool top = false;
            if (!run->result.reports.empty()) {
                const auto& rep = run->result.reports.front();
                const AnomalyAlert* a = alert_by_id(run->result, rep.graph.alert_id);
                top = rep.verdict && a && overlaps(chain_ids(*a, run->store), truth);
            }
            EvalMetrics m = evaluate(outcomes(run->result, run->store), run->out.truth);
            if (labelled && top && m.stage2.fn == 0)
                ++good;
            else
                bad << ' ' << to_string(kind) << '/' << seed;
        }
    double s = seconds_since(t0);
    Verdict v;
    v.ok = good == total && s <= 300;
    std::ostringstream d;
    d << good << '/' << total << " datasets labelled and ranked first in " << s << " s";
    if (!bad.str().empty()) d << "; failed:" << bad.str();
    v.detail = d.str();
    return v;
}

Verdict c2_edge_exactness() {
    int exact = 0, total = 0;
    std::size_t fig2 = 0;
    std::ostringstream bad;
    for (auto kind : kPlaybooks)
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            ++total;
            auto run = detect(playbook_scenario(kind, seed));
            std::set<TruthEdge> want(run->out.truth.causal_edges.begin(), run->out.truth.causal_edges.end());
            std::set<TruthEdge> got;
            for (const auto& rep : run->result.reports)
                if (rep.verdict) {
                    auto e = edges_of(rep.graph);
                    got.insert(e.begin(), e.end());
                }
            if (got == want)
                ++exact;
            else
                bad << ' ' << to_string(kind) << '/' << seed << " (" << got.size() << " vs " << want.size() << ')';
            if (kind == AttackLabel::PassTheHash && seed == 1) fig2 = got.size();
        }
    Verdict v;
    v.ok = exact == total && fig2 == 4;
    std::ostringstream d;
    d << exact << '/' << total << " exact edge sets; lateral-movement scenario edges = " << fig2;
    if (!bad.str().empty()) d << "; mismatched:" << bad.str();
    v.detail = d.str();
    return v;
}

Verdict c3_dependency_explosion() {
    auto run = detect(playbook_scenario(AttackLabel::PassTheHash, 1));
    std::size_t causal = 0;
    for (const auto& rep : run->result.reports) causal += rep.graph.cross_edges.size();
    std::size_t conn = connection_baseline_edges(run->store);
    std::size_t logon = logon_baseline_edges(run->store);
    Verdict v;
    v.ok = causal > 0 && conn >= 20 * causal && logon >= 20 * causal;
    std::ostringstream d;
    d << "connection " << conn << ", logon " << logon << ", causal " << causal << " (ratios "
      << (causal ? conn / causal : 0) << "x, " << (causal ? logon / causal : 0) << "x)";
    v.detail = d.str();
    return v;
}

Verdict c4_triage_separation() {
    Verdict v;
    std::ostringstream d;
    for (auto kind : kPlaybooks) {
        auto cfg = playbook_scenario(kind, 100);
        cfg.rates.truncation_fraction = 0.05;
        auto run = detect(cfg);
        const auto& truth = run->out.truth.attacks.at(0).chain_event_ids;
        double attack_min = INFINITY, benign_max = -INFINITY;
        std::size_t false_alerts = 0, positives = 0;
        for (const auto& rep : run->result.reports) {
            const AnomalyAlert* a = alert_by_id(run->result, rep.graph.alert_id);
            bool is_attack = a && overlaps(chain_ids(*a, run->store), truth);
            if (is_attack)
                attack_min = std::min(attack_min, rep.score);
            else {
                benign_max = std::max(benign_max, rep.score);
                ++false_alerts;
            }
            positives += rep.verdict;
        }
        EvalMetrics m = evaluate(outcomes(run->result, run->store), run->out.truth);
        bool ok = false_alerts >= 20 && attack_min > benign_max && m.stage2.fp == 0 && m.stage2.fn == 0 &&
                  positives < run->result.alerts.size();
        v.ok = v.ok && ok;
        d << to_string(kind) << ": " << run->result.alerts.size() << "->" << positives << " alerts, min attack "
          << attack_min << " > max benign " << benign_max << (ok ? "" : " FAIL") << "; ";
    }
    v.detail = d.str();
    return v;
}

Verdict c5_reassignment() {
    ForgeOutput out = forge_rdp_reconnect_case(default_scenario(1));
    EventStore store;
    fx::fill(store, out);
    auto alerts = get_authentication_anomalies(store);
    auto attributed = [&](bool reassign) {
        TracerConfig cfg;
        cfg.reassign = reassign;
        Tracer t(store, cfg);
        std::vector<std::uint64_t> ids;
        for (const auto& a : alerts) {
            AttackGraph g = t.get_ad_attack_graph(a);
            for (const auto& c : g.clusters)
                if (c.true_identity_window)
                    for (const auto& e : g.events)
                        if (c.contains(e.session)) ids.push_back(e.id);
        }
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    };
    auto on = attributed(true);
    auto off = attributed(false);
    Verdict v;
    v.ok = !out.truth.attacker_window_ids.empty() && on == out.truth.attacker_window_ids &&
           off != out.truth.attacker_window_ids;
    std::ostringstream d;
    d << "window " << out.truth.attacker_window_ids.size() << " events; attributed " << on.size()
      << " with reassignment, " << off.size() << " without";
    v.detail = d.str();
    return v;
}

// Direct evaluation, kept apart from the library code on purpose.
double brute_edge(const std::vector<int>& d, const std::vector<int>& c, bool lsass, int esc, const ScoreConfig& cfg) {
    double df = 0, cf = 0;
    for (int x : d) df += x;
    for (int x : c) cf += x;
    double dv = static_cast<double>(d.size()), cv = static_cast<double>(c.size());
    auto pw = [](double b, double w) {
        if (b <= 0) return 0.0;
        return std::exp(w * std::log(b));
    };
    return pw(df * dv, cfg.weights.at(Tactic::Discovery)) +
           pw(cf * cv * (lsass ? cfg.lsass_bonus : 1.0), cfg.weights.at(Tactic::CredentialAccess)) +
           pw(esc, cfg.weights.at(Tactic::PrivilegeEscalation));
}

Verdict c6_scoring() {
    ScoreConfig cfg;
    Verdict v;
    std::ostringstream d;
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); };

    bool vectors = score_edge(EdgeTallies{}, cfg) == 0.0 && close(tactic_term(4, 2, 1.0), 8.0);
    EdgeScore e;
    e.score = 8;
    e.domain_admin = true;
    vectors = vectors && close(combine_edges({e}, 1.0), 16.0);
    EdgeScore x, y;
    x.score = 8;
    y.score = 10;
    y.domain_admin = true;
    vectors = vectors && close(combine_edges({x, y}, 2.0), 56.0) && close(tactic_term(4, 2, 1.5), 22.62741699796952);

    std::mt19937_64 rng(20240304);
    int agree = 0;
    double worst = 0;
    for (int i = 0; i < 200; ++i) {
        std::vector<EdgeScore> edges;
        std::vector<double> reference;
        double crit = 0.5 + static_cast<double>(rng() % 8) / 2.0;
        std::size_t n = 1 + rng() % 3;
        for (std::size_t k = 0; k < n; ++k) {
            std::vector<int> dq(rng() % 4), cq(rng() % 3);
            EdgeScore es;
            for (std::size_t j = 0; j < dq.size(); ++j) {
                dq[j] = 1 + static_cast<int>(rng() % 5);
                es.tallies.discovery.techniques["d" + std::to_string(j)] = static_cast<std::size_t>(dq[j]);
            }
            for (std::size_t j = 0; j < cq.size(); ++j) {
                cq[j] = 1 + static_cast<int>(rng() % 3);
                es.tallies.credential.techniques["c" + std::to_string(j)] = static_cast<std::size_t>(cq[j]);
            }
            es.tallies.credential.lsass = !cq.empty() && rng() % 2;
            int esc = static_cast<int>(rng() % 3);
            es.tallies.escalations = static_cast<std::size_t>(esc);
            es.domain_admin = rng() % 2;
            es.score = score_edge(es.tallies, cfg);
            reference.push_back(brute_edge(dq, cq, es.tallies.credential.lsass, esc, cfg) * (es.domain_admin ? 2 : 1) *
                                crit);
            edges.push_back(es);
        }
        double want = 0;
        for (double r : reference) want += r;
        double got = combine_edges(edges, crit);
        worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
        agree += close(got, want);
    }
    v.ok = vectors && agree == 200;
    d << "unit vectors " << (vectors ? "ok" : "WRONG") << "; " << agree << "/200 random tallies agree (worst rel err "
      << worst << ')';
    v.detail = d.str();
    return v;
}

Verdict c7_performance() {
    auto cfg = playbook_scenario(AttackLabel::PassTheHash, 7);
    cfg.rates.system_noise = 9000;
    cfg.rates.truncation_fraction = 0.05;
    auto run = detect(cfg);
    const RunManifest& m = run->result.manifest;
    double s1 = 0, s2 = 0;
    for (const auto& a : m.alerts) {
        s1 = std::max(s1, a.stage1_ms);
        s2 = std::max(s2, a.stage2_ms);
    }
    Verdict v;
    v.ok = m.event_count >= 1'000'000 && !m.alerts.empty() && s1 <= 100.0 && s2 <= 60'000.0;
    std::ostringstream d;
    d << m.event_count << " events, " << m.alerts.size() << " alerts; worst stage-1 " << s1 << " ms, worst stage-2 "
      << s2 << " ms";
    v.detail = d.str();
    return v;
}

Verdict c8_exclusion() {
    Verdict v;
    std::size_t graphs = 0, checked = 0;
    std::vector<ScenarioConfig> configs;
    for (auto kind : kPlaybooks)
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            auto cfg = playbook_scenario(kind, seed);
            cfg.rates.truncation_fraction = seed == 3 ? 0.05 : 0.0;
            configs.push_back(cfg);
        }
    auto ac = forge_access_type_cases(default_scenario(2));
    for (const auto& cfg : configs) {
        auto run = detect(cfg, false);
        for (const auto& rep : run->result.reports) {
            ++graphs;
            Verdict one = exclusion_check(rep.graph, run->store, checked);
            if (!one.ok) return one;
        }
    }
    {
        EventStore store;
        fx::fill(store, ac);
        Tracer t(store);
        for (const auto& a : get_authentication_anomalies(store)) {
            ++graphs;
            Verdict one = exclusion_check(t.get_ad_attack_graph(a), store, checked);
            if (!one.ok) return one;
        }
    }
    v.ok = graphs > 0 && checked > 0;
    v.detail = std::to_string(graphs) + " graphs; " + std::to_string(checked) +
               " predefined-session events, all inside backward slices";
    return v;
}

std::vector<EventOffset> scan(const EventStore& store, const QueryFilter& f) {
    std::vector<EventOffset> out;
    for (EventOffset off : store.all())
        if (f.matches(store.at(off))) out.push_back(off);
    return out;
}

Verdict c9_store_oracle() {
    auto cfg = default_scenario(9);
    cfg.rates.system_noise = 900;
    ForgeOutput out = forge(cfg);
    out.events.resize(std::min<std::size_t>(out.events.size(), 100'000));
    EventStore store;
    fx::fill(store, out);

    auto hosts = store.hosts();
    std::vector<LogonSessionKey> sessions;
    std::vector<PrincipalId> principals;
    for (EventOffset off : store.logon_events()) {
        sessions.push_back(store.at(off).logon()->session);
        principals.push_back(store.at(off).logon()->principal);
    }
    for (auto h : hosts) sessions.push_back(fx::session(h, kSystemSession));
    Timestamp t0 = store.time(store.all().front());
    Timestamp span = store.time(store.all().back()) - t0 + 1;

    std::mt19937_64 rng(99);
    int agree = 0;
    std::size_t nonempty = 0;
    for (int i = 0; i < 100; ++i) {
        QueryFilter f;
        if (rng() % 2) {
            Timestamp a = t0 + static_cast<Timestamp>(rng() % static_cast<std::uint64_t>(span));
            f.time_range = TimeRange{a, a + 1 + static_cast<Timestamp>(rng() % 7'200'000)};
        }
        if (rng() % 2) f.host = hosts[rng() % hosts.size()];
        if (rng() % 3 == 0) f.session = sessions[rng() % sessions.size()];
        if (rng() % 4 == 0) f.principal = principals[rng() % principals.size()];
        if (rng() % 2) {
            std::bitset<kEventKindCount> ks;
            for (std::size_t k = 0; k < kEventKindCount; ++k) ks[k] = rng() % 3 == 0;
            f.kinds = ks;
        }
        auto got = store.query(f);
        nonempty += !got.empty();
        agree += got == scan(store, f);
    }
    Verdict v;
    v.ok = store.size() == 100'000 && agree == 100;
    v.detail = std::to_string(agree) + "/100 random filters match a linear scan over " + std::to_string(store.size()) +
               " events (" + std::to_string(nonempty) + " non-empty)";
    return v;
}

} // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        std::function<Verdict()> run;
    };
    const std::vector<Criterion> all = {
        {1, "attack recall", c1_attack_recall},
        {2, "causal-edge exactness", c2_edge_exactness},
        {3, "dependency-explosion contrast", c3_dependency_explosion},
        {4, "triage separation", c4_triage_separation},
        {5, "reassignment correctness", c5_reassignment},
        {6, "scoring arithmetic", c6_scoring},
        {7, "performance budget", c7_performance},
        {8, "exclusion property", c8_exclusion},
        {9, "store oracle", c9_store_oracle},
    };
    std::set<int> pick;
    for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!pick.empty() && !pick.count(c.id)) continue;
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v.ok = false;
            v.detail = std::string("exception: ") + e.what();
        }
        failed += !v.ok;
        std::printf("[%s] %d %s: %s\n", v.ok ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str());
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
