#pragma once

#include "adtrace/event.hpp"

#include <atomic>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace adtrace {

/// Position of an event inside an EventStore.
using EventOffset = std::uint32_t;

/// Half-open time interval [begin, end).
struct TimeRange {
    Timestamp begin = 0;
    Timestamp end = 0;
};

struct QueryFilter {
    std::optional<TimeRange> time_range;
    std::optional<HostId> host;
    std::optional<LogonSessionKey> session;
    std::optional<PrincipalId> principal;
    std::optional<std::bitset<kEventKindCount>> kinds;
    // principal matches the auth client or the logon principal; system records never match

    QueryFilter& with_kinds(std::initializer_list<EventKind> ks);

    /// Predicate form of the filter; the store's indexed query must agree with it.
    bool matches(const Event& e) const;
    /// Throws std::invalid_argument when time_range is empty or inverted.
    void check() const;
};

struct IngestViolation {
    std::size_t line = 0;
    std::string reason;
};

struct IngestReport {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t duplicates = 0;
    std::vector<IngestViolation> violations;

    IngestReport& operator+=(const IngestReport& other);
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Auth and logon records joined on one logon GUID.
struct GuidChain {
    std::vector<EventOffset> auth_events;
    std::vector<EventOffset> logon_events;
};

/// Indexed in-memory event store.
///
/// Build phase: ingest()/add() from a single writer, then seal() (ingest()
/// seals on return). After sealing the store is immutable; every accessor is
/// const and safe to call from concurrent readers. All offset lists returned
/// by accessors are ordered by (time, ingestion sequence).
class EventStore {
public:
    EventStore() = default;
    EventStore(const EventStore&) = delete;
    EventStore& operator=(const EventStore&) = delete;
    EventStore(EventStore&&) noexcept;
    EventStore& operator=(EventStore&&) noexcept;

    /// Ingests a line-delimited record file. Malformed or invalid lines are
    /// rejected and reported; an unreadable file throws IoError.
    IngestReport ingest(const std::filesystem::path& path);
    IngestReport ingest_stream(std::istream& in);

    /// Appends one event; returns false if an identical record is already stored.
    bool add(Event e);
    /// Rebuilds ordering and indexes. Must be called after add() before querying.
    void seal();
    bool sealed() const noexcept { return sealed_; }

    std::size_t size() const noexcept { return events_.size(); }
    const Event& at(EventOffset off) const { return events_.at(off); }
    std::uint64_t sequence(EventOffset off) const { return sequence_.at(off); }
    Timestamp time(EventOffset off) const { return times_[off]; }

    /// All events matching every present filter field, in (time, sequence) order.
    std::vector<EventOffset> query(const QueryFilter& filter) const;

    std::span<const EventOffset> all() const;
    std::span<const EventOffset> auth_events() const;
    std::span<const EventOffset> logon_events() const;
    std::span<const EventOffset> by_host(const HostId& host) const;
    std::span<const EventOffset> by_session(const LogonSessionKey& session) const;
    std::span<const EventOffset> by_guid(Symbol guid) const;
    std::span<const EventOffset> logons_by_host(const HostId& host) const;
    std::span<const EventOffset> auth_by_principal(const PrincipalId& principal) const;
    std::span<const EventOffset> auth_by_tgt(Symbol tgt_id) const;
    std::span<const EventOffset> auth_by_service_ticket(Symbol ticket_id) const;
    /// System events whose subject is the given process.
    std::span<const EventOffset> by_subject(const ProcessRef& process) const;
    /// ProcessCreate events spawned by the given process.
    std::span<const EventOffset> children_of(const ProcessRef& process) const;
    /// The ProcessCreate event that started the process, if recorded.
    std::optional<EventOffset> creation_of(const ProcessRef& process) const;
    /// NetworkConnect events leaving `host` from `local_port`.
    std::span<const EventOffset> connects_from(const HostId& host, std::uint16_t local_port) const;

    /// Every auth and logon event carrying the guid, in time order.
    GuidChain auth_chain_for_guid(Symbol guid) const;

    /// Narrows an ordered offset list to a time window.
    std::span<const EventOffset> window(std::span<const EventOffset> ordered, TimeRange range) const;

    std::optional<HostId> find_host(Symbol fqdn) const;
    std::vector<HostId> hosts() const;

    /// Rebuilds every index from the raw sequence and compares with the live ones.
    bool audit() const;

    /// Number of query/index calls served so far.
    std::uint64_t query_count() const noexcept { return queries_.load(std::memory_order_relaxed); }

    void save_snapshot(const std::filesystem::path& path) const;
    static EventStore load_snapshot(const std::filesystem::path& path);

private:
    struct PortKey {
        Symbol host;
        std::uint16_t port;
        friend bool operator==(const PortKey&, const PortKey&) = default;
    };
    struct PortKeyHash {
        std::size_t operator()(const PortKey& k) const noexcept { return k.host.hash() * 65537u + k.port; }
    };
    struct Indexes {
        std::vector<EventOffset> order;
        std::vector<EventOffset> auth;
        std::vector<EventOffset> logon;
        std::unordered_map<HostId, std::vector<EventOffset>> host;
        std::unordered_map<LogonSessionKey, std::vector<EventOffset>> session;
        std::unordered_map<Symbol, std::vector<EventOffset>> guid;
        std::unordered_map<HostId, std::vector<EventOffset>> logons_by_host;
        std::unordered_map<PrincipalId, std::vector<EventOffset>> principal;
        std::unordered_map<PrincipalId, std::vector<EventOffset>> auth_principal;
        std::unordered_map<Symbol, std::vector<EventOffset>> tgt;
        std::unordered_map<Symbol, std::vector<EventOffset>> service_ticket;
        std::unordered_map<ProcessRef, std::vector<EventOffset>> subject;
        std::unordered_map<ProcessRef, std::vector<EventOffset>> children;
        std::unordered_map<ProcessRef, EventOffset> creation;
        std::unordered_map<PortKey, std::vector<EventOffset>, PortKeyHash> connects;
        std::unordered_map<Symbol, HostId> hosts;

        bool operator==(const Indexes& other) const;
    };

    bool add_with_sequence(Event e, std::uint64_t seq, const std::string& canonical);
    Indexes build_indexes() const;
    void touch() const noexcept { queries_.fetch_add(1, std::memory_order_relaxed); }

    template <typename Map, typename Key>
    std::span<const EventOffset> lookup(const Map& map, const Key& key) const;

    std::vector<Event> events_;
    std::vector<std::uint64_t> sequence_;
    std::vector<Timestamp> times_;
    std::unordered_multimap<std::size_t, EventOffset> content_hashes_;
    std::uint64_t next_sequence_ = 0;
    bool sealed_ = true;
    Indexes idx_;
    mutable std::atomic<std::uint64_t> queries_{0};
};

} // namespace adtrace
