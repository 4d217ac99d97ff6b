#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
#include <set>
#include <thread>
#include <sstream>

using namespace adtrace;

namespace {

std::vector<EventOffset> scan(const EventStore& store, const QueryFilter& f) {
    std::vector<EventOffset> out;
    for (EventOffset off : store.all())
        if (f.matches(store.at(off))) out.push_back(off);
    return out;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
    std::ofstream f(p);
    for (const auto& l : lines) f << l << '\n';
}

} // namespace

TEST_SUITE("log_store") {

TEST_CASE("ingest counts accepted and rejected lines") {
    fx::TempDir tmp("ingest");
    HostId ws = fx::host("ws1.corp.local");
    std::vector<std::string> lines{header_record()};
    for (int i = 0; i < 10; ++i)
        lines.push_back(serialize_record(fx::logon(i + 1, 1000 + i, fx::session(ws, 0x100 + i), fx::user("alice"))));
    lines.insert(lines.begin() + 4, "{not json");
    lines.push_back(R"({"type":"logon","id":99})");
    write_lines(tmp / "ten.ndjson", lines);

    EventStore store;
    IngestReport r = store.ingest(tmp / "ten.ndjson");
    CHECK(r.accepted == 10);
    CHECK(r.rejected == 2);
    REQUIRE(r.violations.size() >= 2);
    CHECK(r.violations.front().line == 5);
    CHECK(store.size() == 10);

    SUBCASE("second ingest is all duplicates") {
        IngestReport again = store.ingest(tmp / "ten.ndjson");
        CHECK(again.accepted == 0);
        CHECK(again.duplicates == 10);
        CHECK(store.size() == 10);
    }
    SUBCASE("empty file") {
        write_lines(tmp / "empty.ndjson", {});
        IngestReport e = store.ingest(tmp / "empty.ndjson");
        CHECK(e.accepted == 0);
        CHECK(e.rejected == 0);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(store.ingest(tmp / "absent.ndjson"), IoError);
    }
}

TEST_CASE("unsupported schema header is fatal") {
    std::istringstream in("{\"schema\":7}\n");
    EventStore store;
    CHECK_THROWS_AS(store.ingest_stream(in), IoError);
}

TEST_CASE("basic queries") {
    EventStore store;
    fx::fill(store, forge(fx::short_benign(21, 2.0)));
    REQUIRE(store.size() > 0);

    SUBCASE("empty filter returns everything in order") {
        auto all = store.query({});
        CHECK(all.size() == store.size());
        for (std::size_t i = 1; i < all.size(); ++i) {
            auto a = all[i - 1], b = all[i];
            REQUIRE((store.time(a) < store.time(b) ||
                     (store.time(a) == store.time(b) && store.sequence(a) < store.sequence(b))));
        }
    }
    SUBCASE("system account session on one host") {
        HostId h = *store.find_host(Symbol("exch.corp.local"));
        QueryFilter f;
        f.session = fx::session(h, kSystemSession);
        auto got = store.query(f);
        REQUIRE_FALSE(got.empty());
        for (auto off : got) {
            const auto* s = store.at(off).system();
            REQUIRE(s);
            CHECK(s->host == h);
            CHECK(s->session.local_id == kSystemSession);
        }
    }
    SUBCASE("filter matching nothing") {
        QueryFilter f;
        f.host = fx::host("nowhere.corp.local");
        CHECK(store.query(f).empty());
    }
    SUBCASE("inverted range is rejected") {
        QueryFilter f;
        f.time_range = TimeRange{10, 5};
        CHECK_THROWS_AS(store.query(f), std::invalid_argument);
    }
}

TEST_CASE("guid chains join DC and host records") {
    EventStore store;
    fx::fill(store, forge(fx::short_benign(22, 2.0)));

    bool saw_full = false;
    for (EventOffset off : store.logon_events()) {
        const auto* l = store.at(off).logon();
        if (!l->logon_guid || l->kind != LogonKind::logon) continue;
        GuidChain c = store.auth_chain_for_guid(*l->logon_guid);
        std::vector<AuthKind> kinds;
        for (auto a : c.auth_events) kinds.push_back(store.at(a).auth()->kind);
        if (kinds == std::vector<AuthKind>{AuthKind::AsRequest, AuthKind::AsReply, AuthKind::TgsRequest,
                                           AuthKind::TgsReply, AuthKind::ServiceTicketUse} &&
            c.logon_events.size() == 1) {
            saw_full = true;
            CHECK(store.at(c.logon_events[0]).logon()->kind == LogonKind::logon);
            CHECK(store.time(c.auth_events.back()) <= store.time(c.logon_events[0]));
            break;
        }
    }
    CHECK(saw_full);
    CHECK(store.auth_chain_for_guid(Symbol("{00000000-0000-0000-0000-000000000000}")).auth_events.empty());
}

TEST_CASE("NTLM chains share the logon guid") {
    EventStore store;
    fx::fill(store, fx::playbook_data(AttackLabel::PassTheHash, 1));
    bool found = false;
    for (EventOffset off : store.auth_events()) {
        const auto* a = store.at(off).auth();
        if (a->kind != AuthKind::NtlmAuth || !a->logon_guid) continue;
        GuidChain c = store.auth_chain_for_guid(*a->logon_guid);
        CHECK_FALSE(c.logon_events.empty());
        for (auto x : c.auth_events) CHECK(store.at(x).auth()->kind == AuthKind::NtlmAuth);
        found = true;
    }
    CHECK(found);
}

TEST_CASE("indexed query equals a linear scan") {
    EventStore store;
    fx::fill(store, forge(fx::short_benign(23, 3.0)));
    auto hosts = store.hosts();
    std::vector<LogonSessionKey> sessions;
    std::vector<PrincipalId> principals;
    for (EventOffset off : store.logon_events()) {
        sessions.push_back(store.at(off).logon()->session);
        principals.push_back(store.at(off).logon()->principal);
    }
    Timestamp t0 = store.time(store.all().front());
    Timestamp t1 = store.time(store.all().back()) + 1;

    std::mt19937_64 rng(7);
    auto coin = [&] { return rng() % 2 == 0; };
    for (int i = 0; i < 60; ++i) {
        QueryFilter f;
        if (coin()) {
            Timestamp a = t0 + static_cast<Timestamp>(rng() % static_cast<std::uint64_t>(t1 - t0));
            Timestamp b = a + 1 + static_cast<Timestamp>(rng() % 3'600'000);
            f.time_range = TimeRange{a, b};
        }
        if (coin()) f.host = hosts[rng() % hosts.size()];
        if (rng() % 4 == 0) f.session = sessions[rng() % sessions.size()];
        if (rng() % 4 == 0) f.principal = principals[rng() % principals.size()];
        if (coin()) {
            std::bitset<kEventKindCount> ks;
            for (std::size_t k = 0; k < kEventKindCount; ++k) ks[k] = rng() % 3 == 0;
            f.kinds = ks;
        }
        REQUIRE(store.query(f) == scan(store, f));
    }
}

TEST_CASE("snapshot round-trip") {
    fx::TempDir tmp("snap");
    EventStore store;
    fx::fill(store, forge(fx::short_benign(24, 1.0)));
    store.save_snapshot(tmp / "store.snap");
    EventStore back = EventStore::load_snapshot(tmp / "store.snap");
    REQUIRE(back.size() == store.size());
    for (std::size_t i = 0; i < store.all().size(); ++i) {
        REQUIRE(serialize_record(store.at(store.all()[i])) == serialize_record(back.at(back.all()[i])));
        REQUIRE(store.sequence(store.all()[i]) == back.sequence(back.all()[i]));
    }
    CHECK(back.audit());

    std::ofstream(tmp / "junk.snap") << "garbage";
    CHECK_THROWS_AS(EventStore::load_snapshot(tmp / "junk.snap"), IoError);
}

TEST_CASE("indexes agree with a rebuild") {
    EventStore store;
    fx::fill(store, fx::playbook_data(AttackLabel::PassTheTicket, 1));
    CHECK(store.audit());
}

TEST_CASE("ties are broken by ingestion order") {
    HostId ws = fx::host("ws1.corp.local");
    EventStore store;
    fx::fill(store, {fx::logon(2, 500, fx::session(ws, 0x201), fx::user("b")),
                     fx::logon(1, 500, fx::session(ws, 0x200), fx::user("a")),
                     fx::logon(3, 400, fx::session(ws, 0x202), fx::user("c"))});
    auto all = store.query({});
    REQUIRE(all.size() == 3);
    CHECK(store.at(all[0]).id == 3);
    CHECK(store.at(all[1]).id == 2);
    CHECK(store.at(all[2]).id == 1);
}

TEST_CASE("query counter advances") {
    EventStore store;
    fx::fill(store, {fx::logon(1, 5, fx::session(fx::host("ws1"), 0x200), fx::user("a"))});
    auto before = store.query_count();
    store.query({});
    (void)store.by_host(fx::host("ws1"));
    CHECK(store.query_count() == before + 2);
}

TEST_CASE("concurrent readers") {
    EventStore store;
    fx::fill(store, forge(fx::short_benign(25, 1.0)));
    auto expect = store.query(QueryFilter{}.with_kinds({EventKind::ProcessCreate}));
    std::vector<std::thread> pool;
    std::atomic<int> bad{0};
    for (int t = 0; t < 4; ++t)
        pool.emplace_back([&] {
            for (int i = 0; i < 5; ++i)
                if (store.query(QueryFilter{}.with_kinds({EventKind::ProcessCreate})) != expect) ++bad;
        });
    for (auto& t : pool) t.join();
    CHECK(bad == 0);
}

}
