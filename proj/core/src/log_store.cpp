#include "adtrace/log_store.hpp"

#include "adtrace/event_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>

namespace adtrace {

namespace {

const std::vector<EventOffset> kEmpty;

constexpr std::string_view kSnapshotMagic = "ADTSNAP1";

bool kinds_within(const std::bitset<kEventKindCount>& kinds, EventKind first, EventKind last) {
    for (std::size_t i = 0; i < kEventKindCount; ++i)
        if (kinds[i] && (i < static_cast<std::size_t>(first) || i > static_cast<std::size_t>(last)))
            return false;
    return true;
}

} // namespace

QueryFilter& QueryFilter::with_kinds(std::initializer_list<EventKind> ks) {
    std::bitset<kEventKindCount> bits;
    for (EventKind k : ks) bits.set(static_cast<std::size_t>(k));
    kinds = bits;
    return *this;
}

bool QueryFilter::matches(const Event& e) const {
    if (time_range) {
        Timestamp t = event_time(e);
        if (t < time_range->begin || t >= time_range->end) return false;
    }
    if (kinds && !(*kinds)[static_cast<std::size_t>(event_kind(e))]) return false;
    if (host && !(event_host(e) == *host)) return false;
    if (session) {
        const LogonSessionKey* key = nullptr;
        if (const auto* l = e.logon()) key = &l->session;
        if (const auto* s = e.system()) key = &s->session;
        if (!key || !(*key == *session)) return false;
    }
    if (principal) {
        if (const auto* a = e.auth()) return a->client == *principal;
        if (const auto* l = e.logon()) return l->principal == *principal;
        return false;
    }
    return true;
}

void QueryFilter::check() const {
    if (time_range && time_range->end <= time_range->begin)
        throw std::invalid_argument("query time range is empty or inverted");
}

IngestReport& IngestReport::operator+=(const IngestReport& other) {
    accepted += other.accepted;
    rejected += other.rejected;
    duplicates += other.duplicates;
    violations.insert(violations.end(), other.violations.begin(), other.violations.end());
    return *this;
}

EventStore::EventStore(EventStore&& other) noexcept
    : events_(std::move(other.events_)),
      sequence_(std::move(other.sequence_)),
      times_(std::move(other.times_)),
      content_hashes_(std::move(other.content_hashes_)),
      next_sequence_(other.next_sequence_),
      sealed_(other.sealed_),
      idx_(std::move(other.idx_)),
      queries_(other.queries_.load()) {}

EventStore& EventStore::operator=(EventStore&& other) noexcept {
    events_ = std::move(other.events_);
    sequence_ = std::move(other.sequence_);
    times_ = std::move(other.times_);
    content_hashes_ = std::move(other.content_hashes_);
    next_sequence_ = other.next_sequence_;
    sealed_ = other.sealed_;
    idx_ = std::move(other.idx_);
    queries_ = other.queries_.load();
    return *this;
}

IngestReport EventStore::ingest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open event file: " + path.string());
    IngestReport report = ingest_stream(in);
    if (in.bad()) throw IoError("read error on event file: " + path.string());
    return report;
}

IngestReport EventStore::ingest_stream(std::istream& in) {
    IngestReport report;
    std::string line;
    std::size_t line_no = 0;
    bool seen_record = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            ++report.rejected;
            report.violations.push_back({line_no, "malformed line"});
            continue;
        }
        if (is_header_record(j)) {
            if (seen_record) {
                ++report.rejected;
                report.violations.push_back({line_no, "header after first record"});
            } else if (!j["schema"].is_number_integer() || j["schema"].get<int>() != kSchemaVersion) {
                throw IoError("unsupported schema version: " + j["schema"].dump());
            }
            seen_record = true;
            continue;
        }
        seen_record = true;

        Event e;
        try {
            e = from_json(j);
        } catch (const std::exception& ex) {
            ++report.rejected;
            report.violations.push_back({line_no, ex.what()});
            continue;
        }
        ValidationResult v = validate_event(e);
        if (!v.ok()) {
            ++report.rejected;
            for (auto& msg : v.violations) report.violations.push_back({line_no, std::move(msg)});
            continue;
        }
        std::string canonical = serialize_record(e);
        if (add_with_sequence(std::move(e), next_sequence_, canonical)) {
            ++next_sequence_;
            ++report.accepted;
        } else {
            ++report.duplicates;
        }
    }
    seal();
    return report;
}

bool EventStore::add(Event e) {
    std::string canonical = serialize_record(e);
    if (!add_with_sequence(std::move(e), next_sequence_, canonical)) return false;
    ++next_sequence_;
    return true;
}

bool EventStore::add_with_sequence(Event e, std::uint64_t seq, const std::string& canonical) {
    std::size_t h = std::hash<std::string>{}(canonical);
    auto [lo, hi] = content_hashes_.equal_range(h);
    for (auto it = lo; it != hi; ++it)
        if (serialize_record(events_[it->second]) == canonical) return false;
    if (events_.size() >= std::numeric_limits<EventOffset>::max())
        throw std::length_error("event store is full");
    auto off = static_cast<EventOffset>(events_.size());
    times_.push_back(event_time(e));
    sequence_.push_back(seq);
    events_.push_back(std::move(e));
    content_hashes_.emplace(h, off);
    sealed_ = false;
    return true;
}

void EventStore::seal() {
    if (sealed_ && idx_.order.size() == events_.size()) return;
    idx_ = build_indexes();
    sealed_ = true;
}

EventStore::Indexes EventStore::build_indexes() const {
    Indexes ix;
    ix.order.resize(events_.size());
    std::iota(ix.order.begin(), ix.order.end(), EventOffset{0});
    std::sort(ix.order.begin(), ix.order.end(), [&](EventOffset a, EventOffset b) {
        if (times_[a] != times_[b]) return times_[a] < times_[b];
        return sequence_[a] < sequence_[b];
    });

    auto note_host = [&](const HostId& h) { ix.hosts.try_emplace(h.fqdn, h); };

    for (EventOffset off : ix.order) {
        const Event& e = events_[off];
        ix.host[event_host(e)].push_back(off);
        if (const auto* a = e.auth()) {
            note_host(a->dc_host);
            note_host(a->client_host);
            ix.auth.push_back(off);
            ix.principal[a->client].push_back(off);
            ix.auth_principal[a->client].push_back(off);
            if (a->logon_guid) ix.guid[*a->logon_guid].push_back(off);
            if (a->tgt_id) ix.tgt[*a->tgt_id].push_back(off);
            if (a->service_ticket_id) ix.service_ticket[*a->service_ticket_id].push_back(off);
        } else if (const auto* l = e.logon()) {
            note_host(l->host);
            if (l->source_host) note_host(*l->source_host);
            ix.logon.push_back(off);
            ix.session[l->session].push_back(off);
            ix.principal[l->principal].push_back(off);
            ix.logons_by_host[l->host].push_back(off);
            if (l->logon_guid) ix.guid[*l->logon_guid].push_back(off);
        } else {
            const auto& s = std::get<SystemEvent>(e.body);
            note_host(s.host);
            ix.session[s.session].push_back(off);
            ix.subject[s.subject_process].push_back(off);
            if (s.kind == SystemKind::ProcessCreate && s.object.process) {
                ix.children[s.subject_process].push_back(off);
                ix.creation.try_emplace(*s.object.process, off);
            }
            if (s.kind == SystemKind::NetworkConnect)
                ix.connects[PortKey{s.host.fqdn, s.object.local_port}].push_back(off);
        }
    }
    return ix;
}

bool EventStore::Indexes::operator==(const Indexes& o) const {
    return order == o.order && auth == o.auth && logon == o.logon && host == o.host &&
           session == o.session && guid == o.guid && logons_by_host == o.logons_by_host &&
           principal == o.principal && auth_principal == o.auth_principal && tgt == o.tgt &&
           service_ticket == o.service_ticket && subject == o.subject && children == o.children &&
           creation == o.creation && connects == o.connects && hosts == o.hosts;
}

bool EventStore::audit() const {
    if (!sealed_) return false;
    if (events_.size() != times_.size() || events_.size() != sequence_.size()) return false;
    for (std::size_t i = 0; i < events_.size(); ++i)
        if (times_[i] != event_time(events_[i])) return false;
    return build_indexes() == idx_;
}

template <typename Map, typename Key>
std::span<const EventOffset> EventStore::lookup(const Map& map, const Key& key) const {
    touch();
    auto it = map.find(key);
    return it == map.end() ? std::span<const EventOffset>(kEmpty) : std::span<const EventOffset>(it->second);
}

std::span<const EventOffset> EventStore::all() const {
    touch();
    return idx_.order;
}
std::span<const EventOffset> EventStore::auth_events() const {
    touch();
    return idx_.auth;
}
std::span<const EventOffset> EventStore::logon_events() const {
    touch();
    return idx_.logon;
}
std::span<const EventOffset> EventStore::by_host(const HostId& h) const { return lookup(idx_.host, h); }
std::span<const EventOffset> EventStore::by_session(const LogonSessionKey& k) const {
    return lookup(idx_.session, k);
}
std::span<const EventOffset> EventStore::by_guid(Symbol g) const { return lookup(idx_.guid, g); }
std::span<const EventOffset> EventStore::logons_by_host(const HostId& h) const {
    return lookup(idx_.logons_by_host, h);
}
std::span<const EventOffset> EventStore::auth_by_principal(const PrincipalId& p) const {
    return lookup(idx_.auth_principal, p);
}
std::span<const EventOffset> EventStore::auth_by_tgt(Symbol t) const { return lookup(idx_.tgt, t); }
std::span<const EventOffset> EventStore::auth_by_service_ticket(Symbol t) const {
    return lookup(idx_.service_ticket, t);
}
std::span<const EventOffset> EventStore::by_subject(const ProcessRef& p) const {
    return lookup(idx_.subject, p);
}
std::span<const EventOffset> EventStore::children_of(const ProcessRef& p) const {
    return lookup(idx_.children, p);
}
std::optional<EventOffset> EventStore::creation_of(const ProcessRef& p) const {
    touch();
    auto it = idx_.creation.find(p);
    if (it == idx_.creation.end()) return std::nullopt;
    return it->second;
}
std::span<const EventOffset> EventStore::connects_from(const HostId& h, std::uint16_t port) const {
    return lookup(idx_.connects, PortKey{h.fqdn, port});
}

GuidChain EventStore::auth_chain_for_guid(Symbol guid) const {
    GuidChain chain;
    for (EventOffset off : by_guid(guid)) {
        if (events_[off].auth())
            chain.auth_events.push_back(off);
        else
            chain.logon_events.push_back(off);
    }
    return chain;
}

std::span<const EventOffset> EventStore::window(std::span<const EventOffset> ordered,
                                                TimeRange range) const {
    auto lo = std::lower_bound(ordered.begin(), ordered.end(), range.begin,
                               [&](EventOffset off, Timestamp t) { return times_[off] < t; });
    auto hi = std::lower_bound(lo, ordered.end(), range.end,
                               [&](EventOffset off, Timestamp t) { return times_[off] < t; });
    return {lo, hi};
}

std::vector<EventOffset> EventStore::query(const QueryFilter& filter) const {
    filter.check();
    if (!sealed_) throw std::logic_error("event store queried before seal()");
    touch();

    std::span<const EventOffset> best = idx_.order;
    auto consider = [&](std::span<const EventOffset> candidate) {
        if (candidate.size() < best.size()) best = candidate;
    };
    auto find_in = [&](const auto& map, const auto& key) {
        auto it = map.find(key);
        consider(it == map.end() ? std::span<const EventOffset>(kEmpty)
                                 : std::span<const EventOffset>(it->second));
    };
    if (filter.session) find_in(idx_.session, *filter.session);
    if (filter.principal) find_in(idx_.principal, *filter.principal);
    if (filter.host) find_in(idx_.host, *filter.host);
    if (filter.kinds) {
        if (kinds_within(*filter.kinds, EventKind::AsRequest, EventKind::NtlmAuth)) consider(idx_.auth);
        if (kinds_within(*filter.kinds, EventKind::Logon, EventKind::SpecialPrivileges))
            consider(idx_.logon);
    }
    if (filter.time_range) best = window(best, *filter.time_range);

    std::vector<EventOffset> out;
    for (EventOffset off : best)
        if (filter.matches(events_[off])) out.push_back(off);
    return out;
}

std::optional<HostId> EventStore::find_host(Symbol fqdn) const {
    auto it = idx_.hosts.find(fqdn);
    if (it == idx_.hosts.end()) return std::nullopt;
    return it->second;
}

std::vector<HostId> EventStore::hosts() const {
    std::vector<HostId> out;
    out.reserve(idx_.hosts.size());
    for (const auto& [_, h] : idx_.hosts) out.push_back(h);
    std::sort(out.begin(), out.end());
    return out;
}

void EventStore::save_snapshot(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write snapshot: " + path.string());
    out << kSnapshotMagic << '\n';
    std::vector<EventOffset> order(events_.size());
    std::iota(order.begin(), order.end(), EventOffset{0});
    for (EventOffset off : order) out << sequence_[off] << '\t' << serialize_record(events_[off]) << '\n';
    if (!out) throw IoError("write error on snapshot: " + path.string());
}

EventStore EventStore::load_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open snapshot: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kSnapshotMagic)
        throw IoError("not a snapshot file: " + path.string());
    EventStore store;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        std::uint64_t seq = 0;
        auto [ptr, ec] = std::from_chars(line.data(), line.data() + (tab == std::string::npos ? 0 : tab), seq);
        if (tab == std::string::npos || ec != std::errc{} || ptr != line.data() + tab)
            throw IoError("corrupt snapshot line " + std::to_string(line_no));
        Event e;
        try {
            e = parse_record(std::string_view(line).substr(tab + 1));
        } catch (const RecordError& ex) {
            throw IoError("corrupt snapshot line " + std::to_string(line_no) + ": " + ex.what());
        }
        std::string canonical = serialize_record(e);
        store.add_with_sequence(std::move(e), seq, canonical);
        store.next_sequence_ = std::max(store.next_sequence_, seq + 1);
    }
    store.seal();
    return store;
}

} // namespace adtrace
