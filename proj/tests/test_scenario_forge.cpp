#include "adtrace/digest.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace adtrace;

namespace {

std::string digest(const ForgeOutput& out) {
    std::string all;
    for (const auto& e : out.events) {
        all += serialize_record(e);
        all += '\n';
    }
    return sha256_hex(all);
}

std::set<std::uint64_t> ids_of(const ForgeOutput& out) {
    std::set<std::uint64_t> ids;
    for (const auto& e : out.events) ids.insert(e.id);
    return ids;
}

} // namespace

TEST_SUITE("scenario_forge") {

TEST_CASE("fixed seed gives identical output") {
    auto cfg = fx::short_benign(31, 2.0);
    cfg.attacks.push_back(playbook(AttackLabel::Kerberoasting));
    ForgeOutput a = forge(cfg);
    ForgeOutput b = forge(cfg);
    CHECK(digest(a) == digest(b));
    CHECK(a.truth.to_json() == b.truth.to_json());

    cfg.seed = 32;
    CHECK(digest(forge(cfg)) != digest(a));
}

TEST_CASE("written files hash identically across runs") {
    fx::TempDir tmp("forge");
    auto cfg = fx::short_benign(33, 1.0);
    ForgeOutput a = forge(cfg);
    ForgeOutput b = forge(cfg);
    auto fa = write_forge_output(a, tmp / "a", false);
    auto fb = write_forge_output(b, tmp / "b", false);
    CHECK(sha256_file(fa.events) == sha256_file(fb.events));
    CHECK(sha256_file(fa.truth) == sha256_file(fb.truth));
    CHECK(a.truth.events_sha256 == sha256_file(fa.events));

    SUBCASE("non-empty directory needs force") {
        CHECK_THROWS_AS(write_forge_output(a, tmp / "a", false), ScenarioError);
        CHECK_NOTHROW(write_forge_output(a, tmp / "a", true));
    }
}

TEST_CASE("no attacks means no attack events") {
    ForgeOutput out = forge(fx::short_benign(34, 1.0));
    CHECK(out.truth.attack_event_ids.empty());
    CHECK(out.truth.causal_edges.empty());
    CHECK(out.truth.attacks.empty());
}

TEST_CASE("lateral movement playbook has four causal edges") {
    const ForgeOutput& out = fx::playbook_data(AttackLabel::PassTheHash, 1);
    CHECK(out.truth.causal_edges.size() == 4);
    std::set<std::string> hosts;
    for (const auto& e : out.truth.causal_edges) {
        hosts.insert(e.source.host.fqdn.str());
        hosts.insert(e.dest.host.fqdn.str());
    }
    CHECK(hosts == std::set<std::string>{"ws1.corp.local", "exch.corp.local", "data.corp.local"});
}

TEST_CASE("ground truth is sound") {
    for (auto kind : {AttackLabel::PassTheHash, AttackLabel::GoldenTicket, AttackLabel::PassTheTicket,
                      AttackLabel::Kerberoasting, AttackLabel::AsRepRoasting}) {
        CAPTURE(to_string(kind));
        const ForgeOutput& out = fx::playbook_data(kind, 2);
        auto ids = ids_of(out);
        REQUIRE_FALSE(out.truth.attack_event_ids.empty());
        for (auto id : out.truth.attack_event_ids) REQUIRE(ids.count(id));
        REQUIRE(out.truth.attacks.size() == 1);
        CHECK(out.truth.attacks[0].label == kind);
        for (auto id : out.truth.attacks[0].chain_event_ids) REQUIRE(ids.count(id));

        std::set<LogonSessionKey> logged_on;
        for (const auto& e : out.events)
            if (const auto* l = e.logon(); l && l->kind == LogonKind::logon) logged_on.insert(l->session);
        for (const auto& edge : out.truth.causal_edges) {
            CHECK(logged_on.count(edge.source));
            CHECK(logged_on.count(edge.dest));
        }
    }
}

TEST_CASE("event ids are unique and every record validates") {
    const ForgeOutput& out = fx::playbook_data(AttackLabel::GoldenTicket, 1);
    CHECK(ids_of(out).size() == out.events.size());
    for (const auto& e : out.events) REQUIRE(validate_event(e).ok());
}

TEST_CASE("benign Kerberos chains are complete unless truncated") {
    auto cfg = fx::short_benign(35, 4.0);
    ForgeOutput clean = forge(cfg);
    CHECK(clean.truth.truncated_chains == 0);

    std::map<Symbol, std::set<AuthKind>> by_tgt;
    for (const auto& e : clean.events)
        if (const auto* a = e.auth(); a && a->tgt_id) by_tgt[*a->tgt_id].insert(a->kind);
    REQUIRE_FALSE(by_tgt.empty());
    for (const auto& [tgt, kinds] : by_tgt) {
        CHECK(kinds.count(AuthKind::AsReply));
        CHECK(kinds.count(AuthKind::TgsRequest));
    }

    cfg.rates.truncation_fraction = 0.05;
    CHECK(forge(cfg).truth.truncated_chains > 0);
}

TEST_CASE("config validation") {
    SUBCASE("no domain controller") {
        auto cfg = default_scenario(1);
        std::erase_if(cfg.directory.hosts, [](const HostEntry& h) { return h.role == HostRole::dc; });
        CHECK_THROWS_AS(forge(cfg), ScenarioError);
    }
    SUBCASE("duplicate alias") {
        auto cfg = default_scenario(1);
        cfg.directory.hosts.push_back(cfg.directory.hosts.back());
        CHECK_THROWS_AS(validate_config(cfg), ScenarioError);
    }
    SUBCASE("attack path must start at the foothold") {
        auto cfg = playbook_scenario(AttackLabel::PassTheHash, 1);
        cfg.attacks[0].attacker_path.front() = "data";
        CHECK_THROWS_AS(validate_config(cfg), ScenarioError);
    }
    SUBCASE("negative rate") {
        auto cfg = default_scenario(1);
        cfg.rates.share_access = -1;
        CHECK_THROWS_AS(validate_config(cfg), ScenarioError);
    }
}

TEST_CASE("config JSON round-trip") {
    auto cfg = playbook_scenario(AttackLabel::PassTheHash, 9);
    cfg.rates.truncation_fraction = 0.05;
    auto j = scenario_to_json(cfg);
    CHECK(scenario_to_json(scenario_from_json(j)) == j);
    CHECK_THROWS_AS(scenario_from_json(nlohmann::json{{"case", "bogus"}}), ScenarioError);
}

TEST_CASE("truth JSON round-trip") {
    const ForgeOutput& out = fx::playbook_data(AttackLabel::PassTheHash, 1);
    auto j = out.truth.to_json();
    CHECK(GroundTruth::from_json(j).to_json() == j);
}

TEST_CASE("reconnect case") {
    auto cfg = default_scenario(3);
    ForgeOutput out = forge_rdp_reconnect_case(cfg);
    REQUIRE_FALSE(out.truth.reassignments.empty());
    CHECK_FALSE(out.truth.open_window);
    for (const auto& r : out.truth.reassignments) {
        CHECK(r.raw.host == r.truth.host);
        CHECK(r.raw.local_id != r.truth.local_id);
    }
    CHECK(out.truth.attacker_window_ids.size() == out.truth.reassignments.size());

    SUBCASE("victim never disconnects") {
        CHECK_THROWS_AS(forge_rdp_reconnect_case(cfg, ReconnectVariant::victim_never_disconnects), ScenarioError);
    }
    SUBCASE("fresh session needs no reassignment") {
        ForgeOutput fresh = forge_rdp_reconnect_case(cfg, ReconnectVariant::fresh_session);
        CHECK(fresh.truth.reassignments.empty());
        CHECK_FALSE(fresh.truth.attacker_window_ids.empty());
    }
    SUBCASE("open window") {
        CHECK(forge_rdp_reconnect_case(cfg, ReconnectVariant::open_window).truth.open_window);
    }
}

TEST_CASE("access type cases cover every remote access type") {
    ForgeOutput out = forge_access_type_cases(default_scenario(4));
    std::set<AccessType> seen;
    for (const auto& a : out.truth.access_types) seen.insert(a.access);
    for (std::size_t i = 0; i + 1 < kAccessTypeCount; ++i) CHECK(seen.count(static_cast<AccessType>(i)));

    std::map<std::uint64_t, const Event*> by_id;
    for (const auto& e : out.events) by_id[e.id] = &e;

    SUBCASE("WinRM starts wsmprovhost in the remote user's session") {
        bool found = false;
        for (const auto& e : out.events) {
            const auto* s = e.system();
            if (!s || s->kind != SystemKind::ProcessCreate || !s->object.process) continue;
            if (s->object.process->image_name() == "wsmprovhost.exe" && !is_predefined_session(s->session)) found = true;
        }
        CHECK(found);
    }
    SUBCASE("web shell commands are recorded under the system session") {
        REQUIRE_FALSE(out.truth.reassignments.empty());
        for (const auto& r : out.truth.reassignments) {
            CHECK(r.raw.local_id == kSystemSession);
            CHECK_FALSE(is_predefined_session(r.truth));
        }
    }
    SUBCASE("privileged RDP opens a limited and a full session") {
        std::map<Symbol, std::set<TokenElevation>> by_guid;
        for (const auto& e : out.events)
            if (const auto* l = e.logon(); l && l->logon_type == LogonType::remote_interactive && l->logon_guid &&
                                             l->kind == LogonKind::logon)
                by_guid[*l->logon_guid].insert(l->token_elevation);
        bool twin = false;
        for (const auto& [g, els] : by_guid)
            twin = twin || (els.count(TokenElevation::limited) && els.count(TokenElevation::full));
        CHECK(twin);
    }
}

TEST_CASE("desktop startup cascades are recorded") {
    const ForgeOutput& out = fx::playbook_data(AttackLabel::PassTheHash, 1);
    REQUIRE_FALSE(out.truth.cascades.empty());
    for (const auto& c : out.truth.cascades) CHECK(c.event_ids.size() == 50);
}

}
