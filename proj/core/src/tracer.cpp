#include "adtrace/tracer.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <thread>
#include <unordered_set>

namespace adtrace {

namespace {

struct TokenState {
    TokenElevation elevation = TokenElevation::default_token;
    IntegrityLevel integrity = IntegrityLevel::medium;
};

std::optional<std::string> opt_lower(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return to_lower(j.at(key).get<std::string>());
}

std::string socket_label(const ObjectRef& o) { return o.remote_address.str() + ":" + std::to_string(o.remote_port); }

} // namespace

std::vector<AccessFingerprint> default_fingerprints() {
    using L = LogonType;
    return {
        {AccessType::RDP, L::remote_interactive, std::nullopt, std::nullopt, std::nullopt, false},
        {AccessType::SSH, L::network, "host", std::nullopt, std::nullopt, true},
        {AccessType::WinRM, L::network, "http", "wsmprovhost.exe", std::nullopt, false},
        {AccessType::WebRequest, L::network, "http", std::nullopt, std::nullopt, false},
        {AccessType::PsExec, L::network, "cifs", std::nullopt, "psexesvc.exe", false},
        {AccessType::SMB, L::network, "cifs", std::nullopt, std::nullopt, false},
        {AccessType::WMI, L::network, "rpcss", std::nullopt, "wmiprvse.exe", false},
        {AccessType::RPC, L::network, "rpcss", std::nullopt, std::nullopt, false},
    };
}

std::vector<AccessFingerprint> fingerprints_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw std::invalid_argument("fingerprint table must be an array");
    std::vector<AccessFingerprint> rows;
    for (const auto& r : j) {
        AccessFingerprint f;
        f.access = enum_from_string<AccessType>(r.at("access").get<std::string>());
        if (r.contains("logon_type")) f.logon_type = enum_from_string<LogonType>(r.at("logon_type").get<std::string>());
        f.service = opt_lower(r, "service");
        f.created_image = opt_lower(r, "created_image");
        f.parent_image = opt_lower(r, "parent_image");
        f.byproduct = r.value("byproduct", false);
        rows.push_back(std::move(f));
    }
    return rows;
}

nlohmann::json fingerprints_to_json(const std::vector<AccessFingerprint>& rows) {
    auto out = nlohmann::json::array();
    for (const auto& f : rows) {
        nlohmann::json r{{"access", to_string(f.access)}};
        if (f.logon_type) r["logon_type"] = to_string(*f.logon_type);
        if (f.service) r["service"] = *f.service;
        if (f.created_image) r["created_image"] = *f.created_image;
        if (f.parent_image) r["parent_image"] = *f.parent_image;
        if (f.byproduct) r["byproduct"] = true;
        out.push_back(std::move(r));
    }
    return out;
}

struct Tracer::Reassignment {
    struct Window {
        TimeRange span;
        bool open = false;
        LogonSessionKey container;
    };
    std::unordered_map<EventOffset, LogonSessionKey> moved;
    std::unordered_map<LogonSessionKey, std::vector<EventOffset>> added;
    std::unordered_map<LogonSessionKey, Window> windows;
};

Tracer::Tracer(const EventStore& store, TracerConfig cfg) : store_(store), cfg_(std::move(cfg)) {}
Tracer::~Tracer() = default;

const Tracer::Reassignment& Tracer::reassignment() const {
    std::call_once(reassign_once_, [this] {
        auto r = std::make_unique<Reassignment>();
        if (cfg_.reassign) compute_reassignment(*r);
        reassign_ = std::move(r);
    });
    return *reassign_;
}

bool Tracer::earlier(EventOffset a, EventOffset b) const {
    Timestamp ta = store_.time(a), tb = store_.time(b);
    if (ta != tb) return ta < tb;
    return store_.sequence(a) < store_.sequence(b);
}

void Tracer::compute_reassignment(Reassignment& r) const {
    constexpr Timestamp kEnd = std::numeric_limits<Timestamp>::max();

    // Remote desktop re-entry: activity in the old desktop belongs to the new logon.
    for (EventOffset off : store_.logon_events()) {
        const LogonEvent& rc = *store_.at(off).logon();
        if (rc.kind != LogonKind::reconnect || !rc.logon_guid) continue;
        std::optional<LogonSessionKey> fresh;
        for (EventOffset g : store_.by_guid(*rc.logon_guid)) {
            const LogonEvent* l = store_.at(g).logon();
            if (l && l->kind == LogonKind::logon && l->host == rc.host && !(l->session == rc.session)) {
                fresh = l->session;
                break;
            }
        }
        if (!fresh) continue;
        // The owner returning to their own desktop keeps the original id.
        const LogonEvent* owner = nullptr;
        for (EventOffset o : store_.by_session(rc.session)) {
            const LogonEvent* l = store_.at(o).logon();
            if (l && l->kind == LogonKind::logon && l->session == rc.session) {
                owner = l;
                break;
            }
        }
        if (owner && owner->principal == rc.principal && owner->source_host == rc.source_host) continue;
        Timestamp end = kEnd;
        for (EventOffset o : store_.window(store_.by_session(rc.session), {rc.time, kEnd})) {
            const LogonEvent* l = store_.at(o).logon();
            if (l && (l->kind == LogonKind::disconnect || l->kind == LogonKind::logoff) && l->session == rc.session) {
                end = l->time;
                break;
            }
        }
        Reassignment::Window w{{rc.time, end}, end == kEnd, rc.session};
        for (EventOffset o : store_.window(store_.by_session(rc.session), w.span)) {
            const SystemEvent* s = store_.at(o).system();
            if (!s || !(s->session == rc.session)) continue;
            r.moved[o] = *fresh;
            r.added[*fresh].push_back(o);
        }
        r.windows[*fresh] = w;
    }

    // Web shell: children of the web worker under a predefined id belong to
    // the web logon that preceded them.
    for (EventOffset off : store_.all()) {
        const SystemEvent* s = store_.at(off).system();
        if (!s || s->kind != SystemKind::ProcessCreate || !is_predefined_session(s->session)) continue;
        if (s->subject_process.image_name() != "w3wp.exe" || !s->object.process) continue;
        std::optional<LogonSessionKey> owner;
        for (EventOffset o : store_.window(store_.logons_by_host(s->host),
                                           {s->time - cfg_.web_carve_window_ms, s->time + 1})) {
            const LogonEvent* l = store_.at(o).logon();
            if (!l || l->kind != LogonKind::logon || l->logon_type != LogonType::network || !l->logon_guid) continue;
            for (EventOffset a : store_.by_guid(*l->logon_guid)) {
                const AuthEvent* ae = store_.at(a).auth();
                if (ae && ae->target_service && spn_service_class(ae->target_service->str()) == "http") {
                    owner = l->session;
                    break;
                }
            }
        }
        if (!owner) continue;
        std::vector<ProcessRef> stack{*s->object.process};
        std::vector<EventOffset> carved{off};
        while (!stack.empty()) {
            ProcessRef p = stack.back();
            stack.pop_back();
            for (EventOffset o : store_.by_subject(p)) {
                const SystemEvent* e = store_.at(o).system();
                if (!is_predefined_session(e->session)) continue;
                carved.push_back(o);
                if (e->kind == SystemKind::ProcessCreate && e->object.process) stack.push_back(*e->object.process);
            }
        }
        for (EventOffset o : carved) {
            if (r.moved.count(o)) continue;
            r.moved[o] = *owner;
            r.added[*owner].push_back(o);
        }
    }
    for (auto& [k, v] : r.added) {
        std::sort(v.begin(), v.end(), [this](EventOffset a, EventOffset b) { return earlier(a, b); });
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
}

LogonSessionKey Tracer::effective_session(EventOffset off) const {
    const auto& r = reassignment();
    if (auto it = r.moved.find(off); it != r.moved.end()) return it->second;
    const Event& e = store_.at(off);
    if (const auto* s = e.system()) return s->session;
    if (const auto* l = e.logon()) return l->session;
    return {};
}

std::vector<EventOffset> Tracer::effective_events(const LogonSessionKey& session) const {
    const auto& r = reassignment();
    std::vector<EventOffset> own;
    for (EventOffset o : store_.by_session(session)) {
        if (!store_.at(o).system()) continue;
        if (r.moved.count(o)) continue;
        own.push_back(o);
    }
    auto it = r.added.find(session);
    if (it == r.added.end()) return own;
    std::vector<EventOffset> out;
    out.reserve(own.size() + it->second.size());
    std::merge(own.begin(), own.end(), it->second.begin(), it->second.end(), std::back_inserter(out),
               [this](EventOffset a, EventOffset b) { return earlier(a, b); });
    return out;
}

std::optional<EventOffset> Tracer::logon_of(const LogonSessionKey& session) const {
    for (EventOffset o : store_.by_session(session)) {
        const LogonEvent* l = store_.at(o).logon();
        if (l && l->kind == LogonKind::logon && l->session == session) return o;
    }
    return std::nullopt;
}

namespace {

TokenState token_of(const EventStore& store, std::optional<EventOffset> logon, const LogonSessionKey& k) {
    if (is_predefined_session(k)) return {TokenElevation::full, IntegrityLevel::system};
    if (!logon) return {};
    const LogonEvent& l = *store.at(*logon).logon();
    return {l.token_elevation, l.integrity_level};
}

} // namespace

std::optional<LogonSessionKey> Tracer::resolve_primary(const LogonSessionKey& session) const {
    return resolve_primary(session, 0);
}

std::optional<LogonSessionKey> Tracer::resolve_primary(const LogonSessionKey& session, int depth) const {
    if (is_predefined_session(session)) return std::nullopt;
    auto logon = logon_of(session);
    if (!logon) return session;
    const LogonEvent& l = *store_.at(*logon).logon();
    if (l.logon_guid) {
        std::optional<LogonSessionKey> best;
        for (EventOffset o : store_.by_guid(*l.logon_guid)) {
            const LogonEvent* t = store_.at(o).logon();
            if (!t || t->kind != LogonKind::logon || !(t->host == l.host) || !(t->principal == l.principal)) continue;
            if (t->token_elevation == TokenElevation::full) continue;
            best = t->session;
            break;
        }
        return best ? best : session;
    }
    // sessions opened by an escalation belong to the cluster they rose from
    if (depth > 8) return session;
    for (EventOffset o : effective_events(session)) {
        const SystemEvent& s = *store_.at(o).system();
        if (s.kind != SystemKind::ProcessCreate) continue;
        auto cr = store_.creation_of(s.subject_process);
        if (!cr) break;
        LogonSessionKey parent = effective_session(*cr);
        if (is_predefined_session(parent) || parent == session || !(parent.host == session.host)) break;
        TokenState from = token_of(store_, logon_of(parent), parent);
        TokenState to = token_of(store_, logon, session);
        if (!is_escalation(from.elevation, from.integrity, to.elevation, to.integrity)) break;
        return resolve_primary(parent, depth + 1);
    }
    return session;
}

AccessType Tracer::check_remote_access_type(const LogonSessionKey& session) const {
    auto logon = logon_of(session);
    if (!logon) return AccessType::Unknown;
    const LogonEvent& l = *store_.at(*logon).logon();

    std::optional<std::string> service;
    if (l.logon_guid)
        for (EventOffset o : store_.by_guid(*l.logon_guid)) {
            const AuthEvent* a = store_.at(o).auth();
            if (a && a->target_service) {
                service = spn_service_class(a->target_service->str());
                break;
            }
        }
    std::set<std::string> created, parents;
    for (EventOffset o : effective_events(session)) {
        const SystemEvent& s = *store_.at(o).system();
        if (s.kind != SystemKind::ProcessCreate || !s.object.process) continue;
        created.insert(s.object.process->image_name());
        parents.insert(s.subject_process.image_name());
    }
    bool byproduct = false;
    for (EventOffset o : store_.window(store_.logons_by_host(l.host), {l.time, l.time + cfg_.byproduct_window_ms + 1})) {
        const LogonEvent* v = store_.at(o).logon();
        if (v && v->kind == LogonKind::logon && v->principal.kind == PrincipalKind::virtual_account &&
            !(v->session == session)) {
            byproduct = true;
            break;
        }
    }
    for (const auto& f : cfg_.fingerprints) {
        if (f.logon_type && *f.logon_type != l.logon_type) continue;
        if (f.service && (!service || *service != *f.service)) continue;
        if (f.created_image && !created.count(*f.created_image)) continue;
        if (f.parent_image && !parents.count(*f.parent_image)) continue;
        if (f.byproduct && !byproduct) continue;
        return f.access;
    }
    return AccessType::Unknown;
}

AccessType Tracer::check_remote_access_type(const AnomalyAlert& alert) const {
    if (alert.sessions.empty()) return AccessType::Unknown;
    return check_remote_access_type(alert.sessions.front());
}

SessionCluster Tracer::reassign_session_id(AccessType t, const LogonSessionKey& session) const {
    SessionCluster c;
    c.primary = session;
    c.access = t;
    if (auto logon = logon_of(session)) {
        const LogonEvent& l = *store_.at(*logon).logon();
        c.principal = l.principal;
        c.logon_event_id = store_.at(*logon).id;
    }
    const auto& r = reassignment();
    if (auto it = r.windows.find(session); it != r.windows.end()) {
        c.true_identity_window = it->second.span;
        c.open_window = it->second.open;
    }
    return c;
}

std::vector<EventOffset> Tracer::cluster_events(const SessionCluster& c) const {
    std::vector<EventOffset> out;
    for (const auto& k : c.sessions()) {
        auto ev = effective_events(k);
        if (cfg_.max_session_events && ev.size() > cfg_.max_session_events) ev.resize(cfg_.max_session_events);
        std::vector<EventOffset> merged;
        merged.reserve(out.size() + ev.size());
        std::merge(out.begin(), out.end(), ev.begin(), ev.end(), std::back_inserter(merged),
                   [this](EventOffset a, EventOffset b) { return earlier(a, b); });
        out.swap(merged);
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

SessionCluster Tracer::link_sessions(SessionCluster c) const {
    auto add = [&](const LogonSessionKey& k) {
        if (!c.contains(k)) c.linked.push_back(k);
    };
    auto logon = logon_of(c.primary);
    if (logon) {
        const LogonEvent& l = *store_.at(*logon).logon();
        // token twins of one privileged logon
        if (l.logon_guid)
            for (EventOffset o : store_.by_guid(*l.logon_guid)) {
                const LogonEvent* t = store_.at(o).logon();
                if (t && t->kind == LogonKind::logon && t->host == l.host && t->principal == l.principal &&
                    t->token_elevation != l.token_elevation)
                    add(t->session);
            }
        if (c.access == AccessType::SSH)
            for (EventOffset o :
                 store_.window(store_.logons_by_host(l.host), {l.time, l.time + cfg_.byproduct_window_ms + 1})) {
                const LogonEvent* v = store_.at(o).logon();
                if (v && v->kind == LogonKind::logon && v->principal.kind == PrincipalKind::virtual_account) {
                    add(v->session);
                    break;
                }
            }
    }

    // sessions entered by raising the token of a cluster process
    for (bool grew = true; grew;) {
        grew = false;
        for (EventOffset o : cluster_events(c)) {
            const SystemEvent& s = *store_.at(o).system();
            if (s.kind != SystemKind::ProcessCreate || !s.object.process) continue;
            LogonSessionKey from = effective_session(o);
            for (EventOffset ch : store_.children_of(*s.object.process)) {
                LogonSessionKey to = effective_session(ch);
                if (is_predefined_session(to) || c.contains(to) || !(to.host == from.host)) continue;
                TokenState a = token_of(store_, logon_of(from), from);
                TokenState b = token_of(store_, logon_of(to), to);
                if (!is_escalation(a.elevation, a.integrity, b.elevation, b.integrity)) continue;
                add(to);
                grew = true;
            }
            if (grew) break;
        }
    }

    // predefined ancestry of cluster processes, backward only
    auto events = cluster_events(c);
    std::map<std::pair<LogonSessionKey, ProcessRef>, PredefinedSlice> slices;
    std::unordered_set<ProcessRef> seen;
    for (EventOffset o : events) {
        ProcessRef cur = store_.at(o).system()->subject_process;
        std::vector<EventOffset> chain;
        while (seen.insert(cur).second) {
            auto cr = store_.creation_of(cur);
            if (!cr) break;
            LogonSessionKey k = effective_session(*cr);
            if (!is_predefined_session(k)) break;
            chain.push_back(*cr);
            cur = store_.at(*cr).system()->subject_process;
        }
        if (chain.empty()) continue;
        ProcessRef root = store_.at(chain.back()).system()->subject_process;
        for (EventOffset cr : chain) {
            LogonSessionKey k = effective_session(cr);
            auto [it, fresh] = slices.try_emplace({k, root});
            PredefinedSlice& sl = it->second;
            Timestamp t = store_.time(cr);
            if (fresh) {
                sl.session = k;
                sl.root = root;
                sl.span = {t, t + 1};
            }
            sl.span.begin = std::min(sl.span.begin, t);
            sl.span.end = std::max(sl.span.end, t + 1);
            sl.event_ids.push_back(store_.at(cr).id);
        }
    }
    c.slices.clear();
    for (auto& [key, sl] : slices) {
        std::sort(sl.event_ids.begin(), sl.event_ids.end());
        c.slices.push_back(std::move(sl));
    }
    return c;
}

std::vector<EscalationMark> Tracer::escalations_of(const SessionCluster& c) const {
    std::vector<EscalationMark> marks;
    for (EventOffset o : cluster_events(c)) {
        const SystemEvent& s = *store_.at(o).system();
        if (s.kind != SystemKind::ProcessCreate) continue;
        auto cr = store_.creation_of(s.subject_process);
        if (!cr) continue;
        LogonSessionKey from = effective_session(*cr);
        LogonSessionKey to = effective_session(o);
        if (from == to || !c.contains(from) || !c.contains(to)) continue;
        TokenState a = token_of(store_, logon_of(from), from);
        TokenState b = token_of(store_, logon_of(to), to);
        if (!is_escalation(a.elevation, a.integrity, b.elevation, b.integrity)) continue;
        marks.push_back({from, to, s.time, a.elevation, b.elevation, a.integrity, b.integrity, store_.at(o).id});
    }
    return marks;
}

IntraTrace Tracer::traverse_intra(const SessionCluster& c, Direction d) const {
    IntraTrace out;
    out.events = cluster_events(c);
    if (d == Direction::backward) {
        for (const auto& k : c.sessions())
            if (auto l = logon_of(k)) out.boundary.push_back(*l);
        std::sort(out.boundary.begin(), out.boundary.end(),
                  [this](EventOffset a, EventOffset b) { return earlier(a, b); });
        // slice events precede the session and are only walked backward
        std::vector<EventOffset> slice_offsets;
        for (const auto& sl : c.slices)
            for (EventOffset o : store_.window(store_.by_session(sl.session), sl.span))
                if (std::binary_search(sl.event_ids.begin(), sl.event_ids.end(), store_.at(o).id))
                    slice_offsets.push_back(o);
        std::sort(slice_offsets.begin(), slice_offsets.end(),
                  [this](EventOffset a, EventOffset b) { return earlier(a, b); });
        std::vector<EventOffset> merged;
        std::merge(slice_offsets.begin(), slice_offsets.end(), out.events.begin(), out.events.end(),
                   std::back_inserter(merged), [this](EventOffset a, EventOffset b) { return earlier(a, b); });
        merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
        out.events.swap(merged);
    } else {
        for (EventOffset o : out.events)
            if (store_.at(o).system()->kind == SystemKind::NetworkConnect) out.boundary.push_back(o);
    }
    return out;
}

std::vector<HopSeed> Tracer::hop(const SessionCluster& c, const IntraTrace& trace, Direction d) const {
    std::vector<HopSeed> out;
    auto auth_ids = [&](Symbol guid, std::vector<std::uint64_t>& ids) {
        bool any = false;
        for (EventOffset o : store_.by_guid(guid))
            if (store_.at(o).auth()) {
                ids.push_back(store_.at(o).id);
                any = true;
            }
        return any;
    };

    if (d == Direction::backward) {
        auto logon = logon_of(c.primary);
        if (!logon) return out;
        const LogonEvent& l = *store_.at(*logon).logon();
        if (!l.source_host || !l.source_port || !l.logon_guid || l.source_host == l.host) return out;
        auto connects = store_.window(store_.connects_from(*l.source_host, *l.source_port),
                                      {l.time - cfg_.hop_window_ms, l.time + 1});
        if (connects.empty()) return out;
        EventOffset cn = connects.back();
        const SystemEvent& s = *store_.at(cn).system();
        if (!(Symbol(s.object.remote_address) == l.host.fqdn)) return out;
        auto src = resolve_primary(effective_session(cn));
        if (!src) return out;
        HopSeed seed;
        seed.host = *l.source_host;
        seed.session = *src;
        seed.direction = Direction::backward;
        seed.edge.source = *src;
        seed.edge.dest = c.primary;
        seed.edge.access = c.access;
        seed.edge.time = l.time;
        seed.edge.dest_principal = l.principal;
        if (auto sl = logon_of(*src)) seed.edge.source_principal = store_.at(*sl).logon()->principal;
        seed.edge.evidence_ids = {store_.at(cn).id, store_.at(*logon).id};
        if (!auth_ids(*l.logon_guid, seed.edge.evidence_ids)) return out;
        std::sort(seed.edge.evidence_ids.begin(), seed.edge.evidence_ids.end());
        out.push_back(std::move(seed));
        return out;
    }

    std::set<LogonSessionKey> seen;
    for (EventOffset cn : trace.boundary) {
        const SystemEvent& s = *store_.at(cn).system();
        if (s.kind != SystemKind::NetworkConnect) continue;
        auto remote = store_.find_host(s.object.remote_address);
        if (!remote || !remote->is_domain_joined || *remote == s.host) continue;
        for (EventOffset o :
             store_.window(store_.logons_by_host(*remote), {s.time, s.time + cfg_.hop_window_ms + 1})) {
            const LogonEvent* l = store_.at(o).logon();
            if (!l || l->kind != LogonKind::logon || !l->logon_guid || !l->source_host || !l->source_port) continue;
            if (!(*l->source_host == s.host) || *l->source_port != s.object.local_port) continue;
            auto dst = resolve_primary(l->session);
            if (!dst || !seen.insert(*dst).second) continue;
            HopSeed seed;
            seed.host = *remote;
            seed.session = *dst;
            seed.direction = Direction::forward;
            seed.edge.source = c.primary;
            seed.edge.dest = *dst;
            seed.edge.time = l->time;
            seed.edge.source_principal = c.principal;
            seed.edge.dest_principal = l->principal;
            seed.edge.evidence_ids = {store_.at(cn).id, store_.at(o).id};
            if (!auth_ids(*l->logon_guid, seed.edge.evidence_ids)) continue;
            std::sort(seed.edge.evidence_ids.begin(), seed.edge.evidence_ids.end());
            seed.edge.access = check_remote_access_type(*dst);
            out.push_back(std::move(seed));
        }
    }
    return out;
}

TracedEvent Tracer::traced(EventOffset off) const {
    const Event& e = store_.at(off);
    const SystemEvent& s = *e.system();
    TracedEvent t;
    t.id = e.id;
    t.time = s.time;
    t.host = s.host;
    t.session = effective_session(off);
    t.kind = s.kind;
    t.subject = s.subject_process;
    t.subject_image = s.subject_process.image_name();
    if (s.object.process) {
        t.object_process = s.object.process;
        t.object_image = s.object.process->image_name();
    }
    switch (s.object.kind) {
    case ObjectKind::socket: {
        t.object_path = socket_label(s.object);
        auto h = store_.find_host(s.object.remote_address);
        t.remote_domain = h && h->is_domain_joined;
        break;
    }
    case ObjectKind::file:
    case ObjectKind::registry:
        t.object_path = s.object.path.str();
        break;
    case ObjectKind::process:
        break;
    }
    if (s.command_line) t.command_line = s.command_line->str();
    return t;
}

AttackGraph Tracer::get_ad_attack_graph(const AnomalyAlert& alert) const {
    AttackGraph g;
    g.alert_id = alert.id;
    g.label = alert.label;
    g.alert_time = alert.time;
    g.hlg = create_high_level_graph(alert);

    std::vector<LogonSessionKey> seeds;
    for (const auto& k : alert.sessions)
        if (auto p = resolve_primary(k)) seeds.push_back(*p);
    // chains with no logon: follow the client port back to the requesting process
    for (EventOffset a : alert.chain.auth_events) {
        const AuthEvent& ae = *store_.at(a).auth();
        if (!ae.client_port) continue;
        auto cs = store_.window(store_.connects_from(ae.client_host, *ae.client_port),
                                {ae.time - cfg_.hop_window_ms, ae.time + 1});
        if (cs.empty()) continue;
        if (auto p = resolve_primary(effective_session(cs.back()))) seeds.push_back(*p);
    }

    std::set<LogonSessionKey> visited;
    std::deque<LogonSessionKey> queue;
    for (const auto& s : seeds)
        if (visited.insert(s).second) queue.push_back(s);

    std::map<std::pair<LogonSessionKey, LogonSessionKey>, std::size_t> edge_index;
    std::set<EventOffset> offsets;
    std::vector<std::uint64_t> provenance;
    auto add_edge = [&](const CrossEdge& x) {
        if (edge_index.count({x.source, x.dest})) return;
        edge_index[{x.source, x.dest}] = g.cross_edges.size();
        g.cross_edges.push_back(x);
    };

    while (!queue.empty()) {
        LogonSessionKey primary = queue.front();
        queue.pop_front();
        AccessType t = check_remote_access_type(primary);
        SessionCluster c = link_sessions(reassign_session_id(t, primary));
        IntraTrace back = traverse_intra(c, Direction::backward);
        IntraTrace fwd = traverse_intra(c, Direction::forward);
        offsets.insert(back.events.begin(), back.events.end());
        for (EventOffset o : back.boundary) provenance.push_back(store_.at(o).id);
        for (auto& m : escalations_of(c)) g.escalations.push_back(m);

        for (auto& seed : hop(c, back, Direction::backward)) {
            add_edge(seed.edge);
            if (visited.insert(seed.session).second) queue.push_back(seed.session);
        }
        auto forward = hop(c, fwd, Direction::forward);
        std::stable_sort(forward.begin(), forward.end(),
                         [](const HopSeed& a, const HopSeed& b) { return a.edge.time < b.edge.time; });
        for (auto& seed : forward) {
            add_edge(seed.edge);
            if (visited.insert(seed.session).second) queue.push_back(seed.session);
        }
        g.clusters.push_back(std::move(c));
    }

    std::vector<EventOffset> ordered(offsets.begin(), offsets.end());
    std::sort(ordered.begin(), ordered.end(), [this](EventOffset a, EventOffset b) { return earlier(a, b); });
    g.events.reserve(ordered.size());
    for (EventOffset o : ordered) {
        g.events.push_back(traced(o));
        provenance.push_back(g.events.back().id);
    }
    for (const auto& x : g.cross_edges) provenance.insert(provenance.end(), x.evidence_ids.begin(), x.evidence_ids.end());
    for (const auto& m : g.escalations) provenance.push_back(m.event_id);
    for (EventOffset o : alert.chain.members()) provenance.push_back(store_.at(o).id);
    std::sort(provenance.begin(), provenance.end());
    provenance.erase(std::unique(provenance.begin(), provenance.end()), provenance.end());
    g.provenance = std::move(provenance);
    std::sort(g.escalations.begin(), g.escalations.end(),
              [](const EscalationMark& a, const EscalationMark& b) { return a.event_id < b.event_id; });
    build_graph_structure(g);
    return g;
}

std::vector<AttackGraph> Tracer::get_ad_attack_graphs(const std::vector<AnomalyAlert>& alerts) const {
    std::vector<AttackGraph> out(alerts.size());
    unsigned n = std::max(1u, std::min<unsigned>(cfg_.threads, static_cast<unsigned>(alerts.size())));
    if (n <= 1) {
        for (std::size_t i = 0; i < alerts.size(); ++i) out[i] = get_ad_attack_graph(alerts[i]);
        return out;
    }
    reassignment();
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mu;
    for (unsigned w = 0; w < n; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < alerts.size(); i = next++) {
                try {
                    out[i] = get_ad_attack_graph(alerts[i]);
                } catch (...) {
                    std::lock_guard lock(failure_mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

} // namespace adtrace
