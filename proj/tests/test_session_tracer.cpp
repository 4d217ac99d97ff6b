#include "adtrace/baselines.hpp"
#include "adtrace/tracer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace adtrace;

namespace {

const AttackLabel kPlaybooks[] = {AttackLabel::PassTheHash, AttackLabel::GoldenTicket, AttackLabel::PassTheTicket,
                                  AttackLabel::Kerberoasting, AttackLabel::AsRepRoasting};

SessionCluster cluster_for(const Tracer& t, const LogonSessionKey& s) {
    return t.link_sessions(t.reassign_session_id(t.check_remote_access_type(s), s));
}

std::vector<std::uint64_t> attacker_events(const AttackGraph& g) {
    std::vector<std::uint64_t> ids;
    for (const auto& c : g.clusters)
        if (c.true_identity_window)
            for (const auto& e : g.events)
                if (c.contains(e.session)) ids.push_back(e.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::set<TruthEdge> edge_set(const AttackGraph& g) {
    std::set<TruthEdge> s;
    for (const auto& x : g.cross_edges) s.insert({x.source, x.dest, x.access});
    return s;
}

} // namespace

TEST_SUITE("session_tracer") {

TEST_CASE("remote access types match the forged fingerprints") {
    ForgeOutput out = forge_access_type_cases(default_scenario(51));
    EventStore store;
    fx::fill(store, out);
    Tracer t(store);
    REQUIRE(out.truth.access_types.size() >= kAccessTypeCount - 1);
    for (const auto& a : out.truth.access_types) {
        CAPTURE(to_string(a.access));
        CHECK(t.check_remote_access_type(a.session) == a.access);
    }
}

TEST_CASE("fingerprint table is data") {
    auto rows = default_fingerprints();
    REQUIRE_FALSE(rows.empty());
    auto j = fingerprints_to_json(rows);
    CHECK(fingerprints_to_json(fingerprints_from_json(j)) == j);

    ForgeOutput out = forge_access_type_cases(default_scenario(51));
    EventStore store;
    fx::fill(store, out);
    TracerConfig cfg;
    cfg.fingerprints.clear();
    Tracer blind(store, cfg);
    for (const auto& a : out.truth.access_types) CHECK(blind.check_remote_access_type(a.session) == AccessType::Unknown);
}

TEST_CASE("session id reassignment") {
    auto cfg = default_scenario(52);

    SUBCASE("reconnect moves exactly the attacker window") {
        ForgeOutput out = forge_rdp_reconnect_case(cfg);
        EventStore store;
        fx::fill(store, out);
        Tracer t(store);
        std::map<std::uint64_t, LogonSessionKey> want;
        for (const auto& r : out.truth.reassignments) want[r.event_id] = r.truth;
        for (EventOffset off : store.all()) {
            const Event& e = store.at(off);
            const auto* s = e.system();
            if (!s) continue;
            auto it = want.find(e.id);
            REQUIRE(t.effective_session(off) == (it == want.end() ? s->session : it->second));
        }
    }
    SUBCASE("disabled reassignment keeps raw ids") {
        ForgeOutput out = forge_rdp_reconnect_case(cfg);
        EventStore store;
        fx::fill(store, out);
        TracerConfig off_cfg;
        off_cfg.reassign = false;
        Tracer t(store, off_cfg);
        for (EventOffset off : store.all())
            if (const auto* s = store.at(off).system()) REQUIRE(t.effective_session(off) == s->session);
    }
    SUBCASE("fresh session is the identity") {
        ForgeOutput out = forge_rdp_reconnect_case(cfg, ReconnectVariant::fresh_session);
        EventStore store;
        fx::fill(store, out);
        Tracer t(store);
        for (EventOffset off : store.all())
            if (const auto* s = store.at(off).system()) REQUIRE(t.effective_session(off) == s->session);
    }
    SUBCASE("missing disconnect leaves the window open") {
        ForgeOutput out = forge_rdp_reconnect_case(cfg, ReconnectVariant::open_window);
        EventStore store;
        fx::fill(store, out);
        Tracer t(store);
        auto alerts = get_authentication_anomalies(store);
        REQUIRE_FALSE(alerts.empty());
        bool open = false;
        for (const auto& c : t.get_ad_attack_graph(alerts[0]).clusters) open = open || c.open_window;
        CHECK(open);
    }
    SUBCASE("web shell events leave the system session") {
        ForgeOutput out = forge_access_type_cases(cfg);
        EventStore store;
        fx::fill(store, out);
        Tracer t(store);
        std::map<std::uint64_t, LogonSessionKey> want;
        for (const auto& r : out.truth.reassignments) want[r.event_id] = r.truth;
        REQUIRE_FALSE(want.empty());
        std::size_t moved = 0;
        for (EventOffset off : store.all()) {
            auto it = want.find(store.at(off).id);
            if (it == want.end()) continue;
            CHECK(t.effective_session(off) == it->second);
            ++moved;
        }
        CHECK(moved == want.size());
    }
}

TEST_CASE("attacker window is recovered exactly") {
    ForgeOutput out = forge_rdp_reconnect_case(default_scenario(53));
    EventStore store;
    fx::fill(store, out);
    auto alerts = get_authentication_anomalies(store);
    REQUIRE(alerts.size() == 1);
    Tracer on(store);
    CHECK(attacker_events(on.get_ad_attack_graph(alerts[0])) == out.truth.attacker_window_ids);
    TracerConfig cfg;
    cfg.reassign = false;
    Tracer off(store, cfg);
    CHECK(attacker_events(off.get_ad_attack_graph(alerts[0])) != out.truth.attacker_window_ids);
}

TEST_CASE("session linking") {
    ForgeOutput out = forge_access_type_cases(default_scenario(54));
    EventStore store;
    fx::fill(store, out);
    Tracer t(store);
    for (const auto& a : out.truth.access_types) {
        CAPTURE(to_string(a.access));
        SessionCluster c = cluster_for(t, a.session);
        for (const auto& k : c.linked) CHECK(k.host == c.primary.host);
        for (const auto& s : c.slices) {
            CHECK(is_predefined_session(s.session));
            CHECK(s.session.host == c.primary.host);
        }
        switch (a.access) {
        case AccessType::SMB:
            CHECK(c.linked.empty());
            CHECK(c.slices.empty());
            break;
        case AccessType::WinRM: {
            bool broker = false;
            for (const auto& s : c.slices) broker = broker || s.session.local_id == kSystemSession;
            CHECK(broker);
            break;
        }
        case AccessType::SSH: {
            bool virt = false;
            for (const auto& k : c.linked) {
                auto l = t.logon_of(k);
                virt = virt || (l && store.at(*l).logon()->principal.kind == PrincipalKind::virtual_account);
            }
            CHECK(virt);
            break;
        }
        default:
            break;
        }
    }

    SUBCASE("privileged remote desktop pairs the twin sessions") {
        bool twin = false;
        for (EventOffset off : store.logon_events()) {
            const auto* l = store.at(off).logon();
            if (l->kind != LogonKind::logon || l->token_elevation != TokenElevation::limited) continue;
            SessionCluster c = cluster_for(t, l->session);
            for (const auto& k : c.sessions()) {
                auto lo = t.logon_of(k);
                twin = twin || (lo && store.at(*lo).logon()->token_elevation == TokenElevation::full);
            }
        }
        CHECK(twin);
    }
}

TEST_CASE("intra-session traversal") {
    const ForgeOutput& out = fx::playbook_data(AttackLabel::PassTheHash, 1);
    EventStore store;
    fx::fill(store, out);
    Tracer t(store);

    SUBCASE("forward on the data server reaches the collected files") {
        const TruthEdge* last = nullptr;
        for (const auto& e : out.truth.causal_edges)
            if (e.dest.host.fqdn.view() == "data.corp.local") last = &e;
        REQUIRE(last);
        IntraTrace tr = t.traverse_intra(cluster_for(t, last->dest), Direction::forward);
        std::size_t reads = 0;
        for (auto off : tr.events)
            if (store.at(off).system()->kind == SystemKind::FileRead) ++reads;
        CHECK(reads > 0);
        for (std::size_t i = 1; i < tr.events.size(); ++i)
            REQUIRE(store.time(tr.events[i - 1]) <= store.time(tr.events[i]));
    }
    SUBCASE("empty session") {
        SessionCluster c;
        c.primary = fx::session(*store.find_host(Symbol("exch.corp.local")), 0xdeadbeef);
        CHECK(t.traverse_intra(c, Direction::backward).events.empty());
        CHECK(t.traverse_intra(c, Direction::forward).events.empty());
    }
}

TEST_CASE("cross-machine hops") {
    const ForgeOutput& out = fx::playbook_data(AttackLabel::PassTheHash, 1);
    EventStore store;
    fx::fill(store, out);
    Tracer t(store);

    SUBCASE("backward from the remote desktop session finds one workstation session") {
        const TruthEdge* rdp = nullptr;
        for (const auto& e : out.truth.causal_edges)
            if (e.access == AccessType::RDP) rdp = &e;
        REQUIRE(rdp);
        SessionCluster c = cluster_for(t, rdp->dest);
        auto seeds = t.hop(c, t.traverse_intra(c, Direction::backward), Direction::backward);
        REQUIRE(seeds.size() == 1);
        CHECK(seeds[0].session == rdp->source);
    }
    SUBCASE("forward from the foothold finds every session it opened") {
        LogonSessionKey foothold = out.truth.causal_edges.front().source;
        for (const auto& e : out.truth.causal_edges)
            if (e.source.host.fqdn.view() == "ws1.corp.local") foothold = e.source;
        std::set<LogonSessionKey> want;
        for (const auto& e : out.truth.causal_edges)
            if (e.source == foothold) want.insert(e.dest);
        SessionCluster c = cluster_for(t, foothold);
        std::set<LogonSessionKey> got;
        for (const auto& s : t.hop(c, t.traverse_intra(c, Direction::forward), Direction::forward))
            got.insert(s.session);
        CHECK(got == want);
        CHECK(want.size() >= 2);
    }
}

TEST_CASE("attack graphs") {
    for (auto kind : kPlaybooks) {
        CAPTURE(to_string(kind));
        const ForgeOutput& out = fx::playbook_data(kind, 1);
        EventStore store;
        fx::fill(store, out);
        Tracer t(store);
        auto alerts = get_authentication_anomalies(store);
        REQUIRE(alerts.size() == 1);
        AttackGraph g = t.get_ad_attack_graph(alerts[0]);

        CHECK(edge_set(g) == std::set<TruthEdge>(out.truth.causal_edges.begin(), out.truth.causal_edges.end()));

        for (const auto& x : g.cross_edges) {
            CHECK_FALSE(x.source.host == x.dest.host);
            std::set<Symbol> logon_guids, auth_guids;
            for (auto id : x.evidence_ids)
                for (const auto& e : out.events)
                    if (e.id == id) {
                        if (const auto* l = e.logon(); l && l->logon_guid) logon_guids.insert(*l->logon_guid);
                        if (const auto* a = e.auth(); a && a->logon_guid) auth_guids.insert(*a->logon_guid);
                    }
            std::vector<Symbol> both;
            std::set_intersection(logon_guids.begin(), logon_guids.end(), auth_guids.begin(), auth_guids.end(),
                                  std::back_inserter(both));
            CHECK_FALSE(both.empty());
        }
        for (const auto& m : g.escalations) {
            CHECK(m.from_session.host == m.to_session.host);
            CHECK(is_escalation(m.from_elevation, m.from_integrity, m.to_elevation, m.to_integrity));
        }
        for (const auto& c : g.clusters) {
            auto seeds = t.hop(c, t.traverse_intra(c, Direction::backward), Direction::backward);
            CHECK(seeds.size() <= 1);
        }
        CHECK(std::is_sorted(g.provenance.begin(), g.provenance.end()));
        for (const auto& e : g.edges) {
            REQUIRE(e.from < g.nodes.size());
            REQUIRE(e.to < g.nodes.size());
        }
    }
}

TEST_CASE("lateral movement graph shape") {
    EventStore store;
    fx::fill(store, fx::playbook_data(AttackLabel::PassTheHash, 1));
    Tracer t(store);
    AttackGraph g = t.get_ad_attack_graph(get_authentication_anomalies(store).at(0));
    CHECK(g.cross_edges.size() == 4);
    CHECK(g.escalations.size() == 2);
    std::set<std::string> hosts;
    for (const auto& n : g.nodes)
        if (n.kind == NodeKind::host) hosts.insert(n.label);
    CHECK(hosts.size() == 4);

    bool c2 = false;
    for (const auto& n : g.nodes) c2 = c2 || (n.kind == NodeKind::socket && n.external);
    CHECK(c2);
}

TEST_CASE("forged ticket graph passes through the domain controller") {
    EventStore store;
    fx::fill(store, fx::playbook_data(AttackLabel::GoldenTicket, 1));
    Tracer t(store);
    AttackGraph g = t.get_ad_attack_graph(get_authentication_anomalies(store).at(0));
    REQUIRE(g.cross_edges.size() == 2);
    std::vector<std::string> path;
    for (const auto& x : g.cross_edges) path.push_back(x.source.host.fqdn.str() + ">" + x.dest.host.fqdn.str());
    std::sort(path.begin(), path.end());
    CHECK(path == std::vector<std::string>{"dc.corp.local>ws2.corp.local", "ws1.corp.local>dc.corp.local"});
}

TEST_CASE("alert without system activity keeps only the high-level graph") {
    HostId dc = fx::host("dc.corp.local", true);
    HostId ws = fx::host("ws1.corp.local");
    PrincipalId svc = fx::user("svc_sql", PrincipalKind::service);
    auto as = fx::auth(1, 1000, AuthKind::AsRequest, svc, ws, dc);
    auto rep = fx::auth(2, 1001, AuthKind::AsReply, svc, ws, dc);
    std::get<AuthEvent>(rep.body).tgt_id = Symbol("tgt-1");
    std::get<AuthEvent>(rep.body).ticket_encryption = TicketEncryption::rc4;
    EventStore store;
    fx::fill(store, {as, rep});
    auto alerts = get_authentication_anomalies(store);
    REQUIRE(alerts.size() == 1);
    CHECK(alerts[0].label == AttackLabel::AsRepRoasting);
    AttackGraph g = Tracer(store).get_ad_attack_graph(alerts[0]);
    CHECK(g.events.empty());
    CHECK(g.cross_edges.empty());
    for (const auto& n : g.nodes) CHECK((n.kind == NodeKind::host || n.kind == NodeKind::principal));
}

TEST_CASE("predefined sessions only enter through backward slices") {
    for (auto kind : kPlaybooks) {
        CAPTURE(to_string(kind));
        EventStore store;
        fx::fill(store, fx::playbook_data(kind, 2));
        Tracer t(store);
        for (const auto& a : get_authentication_anomalies(store)) {
            AttackGraph g = t.get_ad_attack_graph(a);
            std::set<std::uint64_t> sliced;
            for (const auto& c : g.clusters)
                for (const auto& s : c.slices) sliced.insert(s.event_ids.begin(), s.event_ids.end());
            for (const auto& e : g.events)
                if (is_predefined_session(e.session)) CHECK(sliced.count(e.id));
        }
    }
}

TEST_CASE("meta nodes") {
    const ForgeOutput& out = fx::playbook_data(AttackLabel::PassTheHash, 1);
    EventStore store;
    fx::fill(store, out);
    Tracer t(store);
    AttackGraph g = t.get_ad_attack_graph(get_authentication_anomalies(store).at(0));

    SUBCASE("a desktop startup cascade folds into one node") {
        AttackGraph c = collapse_meta_nodes(g, default_meta_patterns());
        std::set<std::uint64_t> in_graph;
        for (const auto& e : g.events) in_graph.insert(e.id);
        std::size_t matched = 0;
        for (const auto& cascade : out.truth.cascades) {
            if (!in_graph.count(cascade.event_ids.front())) continue;
            std::size_t holders = 0;
            for (const auto& n : c.nodes) {
                if (n.kind != NodeKind::meta) continue;
                if (std::includes(n.event_ids.begin(), n.event_ids.end(), cascade.event_ids.begin(),
                                  cascade.event_ids.end())) {
                    ++holders;
                    CHECK(n.members == cascade.event_ids.size());
                }
            }
            CHECK(holders == 1);
            ++matched;
        }
        CHECK(matched > 0);
        CHECK(c.nodes.size() < g.nodes.size());
    }
    SUBCASE("no patterns is the identity") {
        AttackGraph c = collapse_meta_nodes(g, {});
        CHECK(graph_to_json(c) == graph_to_json(g));
    }
    SUBCASE("technique nodes stay expanded") {
        AttackGraph marked = g;
        std::size_t flagged = 0;
        for (auto& n : marked.nodes)
            if (n.kind == NodeKind::process && n.label == "explorer.exe") {
                n.ttp = true;
                ++flagged;
            }
        REQUIRE(flagged > 0);
        AttackGraph c = collapse_meta_nodes(marked, default_meta_patterns());
        std::size_t kept = 0;
        for (const auto& n : c.nodes) kept += n.ttp && n.label == "explorer.exe";
        CHECK(kept == flagged);
    }
}

TEST_CASE("graph export") {
    EventStore store;
    fx::fill(store, fx::playbook_data(AttackLabel::PassTheHash, 1));
    AttackGraph g = Tracer(store).get_ad_attack_graph(get_authentication_anomalies(store).at(0));
    std::string dot = to_dot(g);
    CHECK(dot.rfind("digraph", 0) == 0);
    CHECK(dot.find("subgraph cluster_") != std::string::npos);
    CHECK(dot.find("session=") != std::string::npos);
    CHECK(std::count(dot.begin(), dot.end(), '{') == std::count(dot.begin(), dot.end(), '}'));
    auto j = graph_to_json(g);
    CHECK(j.at("provenance_event_ids").size() == g.provenance.size());
    CHECK(j.at("cross_edges").size() == 4);
}

TEST_CASE("parallel tracing matches serial") {
    auto cfg = playbook_scenario(AttackLabel::PassTheHash, 4);
    cfg.rates.truncation_fraction = 0.05;
    EventStore store;
    fx::fill(store, forge(cfg));
    auto alerts = get_authentication_anomalies(store);
    REQUIRE(alerts.size() > 4);
    Tracer serial(store);
    TracerConfig pc;
    pc.threads = 4;
    Tracer par(store, pc);
    auto a = serial.get_ad_attack_graphs(alerts);
    auto b = par.get_ad_attack_graphs(alerts);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(graph_to_json(a[i]) == graph_to_json(b[i]));
}

TEST_CASE("baselines dominate the causal edge count") {
    for (auto kind : kPlaybooks) {
        CAPTURE(to_string(kind));
        const ForgeOutput& out = fx::playbook_data(kind, 1);
        EventStore store;
        fx::fill(store, out);
        std::size_t conn = connection_baseline_edges(store);
        std::size_t logon = logon_baseline_edges(store);
        CHECK(conn >= logon);
        CHECK(logon >= out.truth.causal_edges.size());
    }
}

}
