#include "adtrace/sentinel.hpp"

#include "adtrace/event_io.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <thread>

namespace adtrace {

namespace {

bool is_kerberos(AuthKind k) { return k != AuthKind::NtlmAuth; }

std::span<const EventOffset> between(const EventStore& store, std::span<const EventOffset> ordered, Timestamp from,
                                     Timestamp to_inclusive) {
    return store.window(ordered, TimeRange{from, to_inclusive + 1});
}

bool ports_agree(const AuthEvent& a, const AuthEvent& b) {
    return !a.client_port || !b.client_port || *a.client_port == *b.client_port;
}

class ChainBuilder {
public:
    ChainBuilder(const EventStore& store, const SentinelConfig& cfg) : store_(store), cfg_(cfg) {}

    AuthChain build(EventOffset anchor) {
        members_.clear();
        const AuthEvent* a = store_.at(anchor).auth();
        if (!a) return {};
        switch (a->kind) {
        case AuthKind::AsRequest: {
            add(anchor);
            auto reply = as_reply_for(anchor);
            if (reply) as_forward(*reply);
            break;
        }
        case AuthKind::AsReply:
            if (auto req = as_request_for(anchor)) add(*req);
            as_forward(anchor);
            break;
        case AuthKind::TgsRequest:
            tgs_exchange(anchor);
            break;
        case AuthKind::TgsReply:
            if (auto req = tgs_request_for(anchor))
                tgs_exchange(*req);
            else
                tgs_tail(anchor);
            break;
        case AuthKind::ServiceTicketUse:
            if (auto rep = tgs_reply_for_use(anchor)) {
                if (auto req = tgs_request_for(*rep))
                    tgs_exchange(*req);
                else
                    tgs_tail(*rep);
            } else {
                add(anchor);
                guid_members(*a);
            }
            break;
        case AuthKind::NtlmAuth:
            add(anchor);
            guid_members(*a);
            break;
        }
        return finish(*a);
    }

private:
    const AuthEvent& auth(EventOffset o) const { return *store_.at(o).auth(); }

    void add(EventOffset o) { members_.insert(o); }

    void guid_members(const AuthEvent& a) {
        if (!a.logon_guid) return;
        for (EventOffset o : store_.by_guid(*a.logon_guid)) {
            const Event& e = store_.at(o);
            if (const auto* x = e.auth(); x && !(x->client == a.client)) continue;
            members_.insert(o);
        }
    }

    std::optional<EventOffset> as_reply_for(EventOffset req) const {
        const AuthEvent& r = auth(req);
        for (EventOffset o : between(store_, store_.auth_by_principal(r.client), r.time, r.time + cfg_.window_ms)) {
            const AuthEvent& x = auth(o);
            if (x.kind != AuthKind::AsReply || !(x.client_host == r.client_host)) continue;
            if (r.logon_guid != x.logon_guid || !ports_agree(r, x)) continue;
            if (store_.sequence(o) < store_.sequence(req) && x.time == r.time) continue;
            return o;
        }
        return std::nullopt;
    }

    std::optional<EventOffset> as_request_for(EventOffset rep) const {
        const AuthEvent& r = auth(rep);
        auto span = between(store_, store_.auth_by_principal(r.client), r.time - cfg_.window_ms, r.time);
        for (auto it = span.rbegin(); it != span.rend(); ++it) {
            const AuthEvent& x = auth(*it);
            if (x.kind != AuthKind::AsRequest || !(x.client_host == r.client_host)) continue;
            if (r.logon_guid != x.logon_guid || !ports_agree(r, x)) continue;
            return *it;
        }
        return std::nullopt;
    }

    // First TGS request presenting the freshly issued TGT.
    void as_forward(EventOffset reply) {
        add(reply);
        const AuthEvent& r = auth(reply);
        guid_members(r);
        if (!r.tgt_id) return;
        for (EventOffset o : between(store_, store_.auth_by_tgt(*r.tgt_id), r.time, r.time + cfg_.window_ms)) {
            const AuthEvent& x = auth(o);
            if (x.kind == AuthKind::TgsRequest && x.client == r.client && x.client_host == r.client_host) {
                tgs_exchange(o);
                return;
            }
        }
    }

    std::optional<EventOffset> tgs_reply_for(EventOffset req) const {
        const AuthEvent& r = auth(req);
        std::span<const EventOffset> span = r.logon_guid ? store_.by_guid(*r.logon_guid)
                                            : r.tgt_id ? store_.auth_by_tgt(*r.tgt_id)
                                                       : std::span<const EventOffset>{};
        for (EventOffset o : between(store_, span, r.time, r.time + cfg_.window_ms)) {
            const AuthEvent* x = store_.at(o).auth();
            if (!x || x->kind != AuthKind::TgsReply || !(x->client == r.client)) continue;
            if (x->target_service != r.target_service || x->tgt_id != r.tgt_id) continue;
            return o;
        }
        return std::nullopt;
    }

    std::optional<EventOffset> tgs_request_for(EventOffset rep) const {
        const AuthEvent& r = auth(rep);
        std::span<const EventOffset> span = r.logon_guid ? store_.by_guid(*r.logon_guid)
                                            : r.tgt_id ? store_.auth_by_tgt(*r.tgt_id)
                                                       : std::span<const EventOffset>{};
        span = between(store_, span, r.time - cfg_.window_ms, r.time);
        for (auto it = span.rbegin(); it != span.rend(); ++it) {
            const AuthEvent* x = store_.at(*it).auth();
            if (!x || x->kind != AuthKind::TgsRequest || !(x->client == r.client)) continue;
            if (x->target_service != r.target_service || x->tgt_id != r.tgt_id) continue;
            return *it;
        }
        return std::nullopt;
    }

    std::optional<EventOffset> use_for(EventOffset rep) const {
        const AuthEvent& r = auth(rep);
        if (!r.service_ticket_id) return std::nullopt;
        for (EventOffset o : store_.auth_by_service_ticket(*r.service_ticket_id)) {
            const AuthEvent& x = auth(o);
            if (x.kind == AuthKind::ServiceTicketUse && x.time >= r.time) return o;
        }
        return std::nullopt;
    }

    std::optional<EventOffset> tgs_reply_for_use(EventOffset use) const {
        const AuthEvent& u = auth(use);
        if (!u.service_ticket_id) return std::nullopt;
        for (EventOffset o : store_.auth_by_service_ticket(*u.service_ticket_id)) {
            const AuthEvent& x = auth(o);
            if (x.kind == AuthKind::TgsReply && x.time <= u.time) return o;
        }
        return std::nullopt;
    }

    std::optional<EventOffset> issuing_as_reply(EventOffset req) const {
        const AuthEvent& r = auth(req);
        if (!r.tgt_id) return std::nullopt;
        auto span = between(store_, store_.auth_by_tgt(*r.tgt_id), r.time - cfg_.tgt_lifetime_ms, r.time);
        for (auto it = span.rbegin(); it != span.rend(); ++it) {
            const AuthEvent& x = auth(*it);
            if (x.kind == AuthKind::AsReply && x.client == r.client && x.client_host == r.client_host) return *it;
        }
        return std::nullopt;
    }

    void tgs_tail(EventOffset reply) {
        add(reply);
        if (auto use = use_for(reply)) add(*use);
        guid_members(auth(reply));
    }

    void tgs_exchange(EventOffset req) {
        add(req);
        if (auto rep = tgs_reply_for(req)) tgs_tail(*rep);
        if (auto as = issuing_as_reply(req)) {
            add(*as);
            if (auto asreq = as_request_for(*as)) add(*asreq);
        }
        guid_members(auth(req));
    }

    AuthChain finish(const AuthEvent& anchor) {
        AuthChain c;
        c.client = anchor.client;
        c.client_host = anchor.client_host;
        Timestamp start = anchor.time;
        std::optional<Symbol> presented;
        for (EventOffset o : members_) {
            const Event& e = store_.at(o);
            if (const auto* a = e.auth()) {
                c.auth_events.push_back(o);
                start = std::min(start, a->time);
                switch (a->kind) {
                case AuthKind::AsRequest: c.has_as_request = true; break;
                case AuthKind::AsReply: c.has_as_reply = true; break;
                case AuthKind::TgsRequest:
                    c.has_tgs_request = true;
                    if (!presented) presented = a->tgt_id;
                    break;
                case AuthKind::TgsReply: c.has_tgs_reply = true; break;
                case AuthKind::ServiceTicketUse: c.has_service_use = true; break;
                case AuthKind::NtlmAuth: c.used_ntlm = true; break;
                }
            } else if (e.logon()) {
                c.logon_events.push_back(o);
            }
        }
        auto by_time = [&](EventOffset x, EventOffset y) {
            return std::pair(store_.time(x), store_.sequence(x)) < std::pair(store_.time(y), store_.sequence(y));
        };
        std::sort(c.auth_events.begin(), c.auth_events.end(), by_time);
        std::sort(c.logon_events.begin(), c.logon_events.end(), by_time);
        if (presented) {
            for (EventOffset o : store_.auth_by_tgt(*presented)) {
                const AuthEvent& x = auth(o);
                if (x.kind == AuthKind::AsReply && x.time <= start + cfg_.window_ms) {
                    c.tgt_issued = true;
                    break;
                }
            }
        }
        for (EventOffset o : store_.window(store_.auth_by_principal(c.client), TimeRange{0, start})) {
            if (is_kerberos(auth(o).kind)) {
                c.prior_kerberos = true;
                break;
            }
        }
        return c;
    }

    const EventStore& store_;
    const SentinelConfig& cfg_;
    std::set<EventOffset> members_;
};

std::vector<PrincipalId> open_remote_principals(const EventStore& store, const HostId& host, Timestamp before,
                                                const PrincipalId& exclude) {
    std::map<LogonSessionKey, PrincipalId> open;
    for (EventOffset o : store.window(store.logons_by_host(host), TimeRange{0, before})) {
        const LogonEvent& l = *store.at(o).logon();
        if (l.kind == LogonKind::logon && l.source_host &&
            (l.logon_type == LogonType::network || l.logon_type == LogonType::remote_interactive))
            open[l.session] = l.principal;
        else if (l.kind == LogonKind::logoff)
            open.erase(l.session);
    }
    std::set<PrincipalId> users;
    for (const auto& [k, p] : open)
        if (!(p == exclude) && p.kind == PrincipalKind::user) users.insert(p);
    return {users.begin(), users.end()};
}

AlertEntities entities_for(const AuthChain& c, AttackLabel label, const EventStore& store) {
    AlertEntities e;
    e.client_host = c.client_host;
    std::set<HostId> hosts{c.client_host};
    std::set<PrincipalId> users{c.client};
    for (EventOffset o : c.auth_events) {
        const AuthEvent& a = *store.at(o).auth();
        e.dc = a.dc_host;
        hosts.insert(a.dc_host);
        if (a.target_service && !e.target) {
            if (auto h = store.find_host(Symbol(to_lower(spn_host(a.target_service->view()))))) e.target = *h;
        }
    }
    for (EventOffset o : c.logon_events) {
        const LogonEvent& l = *store.at(o).logon();
        hosts.insert(l.host);
        if (!e.target && l.kind == LogonKind::logon) e.target = l.host;
    }
    if (e.target) hosts.insert(*e.target);
    if (label == AttackLabel::PassTheHash || label == AttackLabel::PassTheTicket) {
        Timestamp start = c.start_time(store);
        e.actors = open_remote_principals(store, c.client_host, start, c.client);
        users.insert(e.actors.begin(), e.actors.end());
    }
    e.users.assign(users.begin(), users.end());
    e.hosts.assign(hosts.begin(), hosts.end());
    return e;
}

} // namespace

Timestamp AuthChain::start_time(const EventStore& store) const {
    Timestamp t = std::numeric_limits<Timestamp>::max();
    for (EventOffset o : auth_events) t = std::min(t, store.time(o));
    for (EventOffset o : logon_events) t = std::min(t, store.time(o));
    return t;
}

std::vector<EventOffset> AuthChain::members() const {
    std::vector<EventOffset> m(auth_events);
    m.insert(m.end(), logon_events.begin(), logon_events.end());
    std::sort(m.begin(), m.end());
    return m;
}

AuthChain build_chain(EventOffset anchor, const EventStore& store, const SentinelConfig& cfg) {
    return ChainBuilder(store, cfg).build(anchor);
}

AttackLabel check_attack_type(const AuthChain& c, const SentinelConfig& cfg) {
    if (c.used_ntlm) return c.prior_kerberos ? AttackLabel::PassTheHash : AttackLabel::Unknown;
    if (c.has_tgs_request && !c.has_as_request)
        return c.tgt_issued ? AttackLabel::PassTheTicket : AttackLabel::GoldenTicket;
    if (c.has_as_request && c.has_as_reply && !c.has_tgs_request) return AttackLabel::AsRepRoasting;
    if (c.has_tgs_request && c.has_tgs_reply && !c.has_service_use) return AttackLabel::Kerberoasting;
    if (cfg.silver_ticket && c.has_service_use && !c.has_tgs_reply) return AttackLabel::SilverTicket;
    return AttackLabel::Unknown;
}

std::vector<AnomalyAlert> get_authentication_anomalies(const EventStore& store, const SentinelConfig& cfg) {
    using clock = std::chrono::steady_clock;
    auto anchors = store.auth_events();
    struct Built {
        AuthChain chain;
        AttackLabel label = AttackLabel::Unknown;
        double ms = 0;
    };
    auto build_one = [&](EventOffset anchor) {
        auto t0 = clock::now();
        Built b;
        b.chain = build_chain(anchor, store, cfg);
        b.label = check_attack_type(b.chain, cfg);
        b.ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        return b;
    };

    std::vector<Built> prebuilt;
    if (cfg.threads > 1 && anchors.size() > 1) {
        prebuilt.resize(anchors.size());
        std::vector<std::thread> pool;
        unsigned n = cfg.threads;
        for (unsigned w = 0; w < n; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < anchors.size(); i += n) prebuilt[i] = build_one(anchors[i]);
            });
        for (auto& t : pool) t.join();
    }

    std::vector<char> covered(store.size(), 0);
    std::set<std::vector<EventOffset>> seen;
    std::vector<AnomalyAlert> alerts;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        EventOffset anchor = anchors[i];
        if (covered[anchor]) continue;
        Built b = prebuilt.empty() ? build_one(anchor) : std::move(prebuilt[i]);
        for (EventOffset o : b.chain.auth_events) covered[o] = 1;
        if (b.label == AttackLabel::Unknown) continue;
        auto members = b.chain.members();
        if (!seen.insert(members).second) continue;
        auto t0 = clock::now();
        AnomalyAlert a;
        a.label = b.label;
        a.time = b.chain.start_time(store);
        a.entities = entities_for(b.chain, b.label, store);
        for (EventOffset o : b.chain.logon_events) {
            const LogonEvent& l = *store.at(o).logon();
            if (l.kind == LogonKind::logon) a.sessions.push_back(l.session);
        }
        a.chain = std::move(b.chain);
        a.latency_ms = b.ms + std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        alerts.push_back(std::move(a));
    }
    std::stable_sort(alerts.begin(), alerts.end(),
                     [](const AnomalyAlert& x, const AnomalyAlert& y) { return x.time < y.time; });
    for (std::size_t i = 0; i < alerts.size(); ++i) alerts[i].id = i + 1;
    return alerts;
}

std::size_t HighLevelGraph::node(HlgNode::Kind kind, const std::string& name) {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].kind == kind && nodes[i].name == name) return i;
    nodes.push_back({kind, name});
    return nodes.size() - 1;
}

bool HighLevelGraph::has_node(HlgNode::Kind kind, std::string_view name) const {
    return std::any_of(nodes.begin(), nodes.end(), [&](const HlgNode& n) { return n.kind == kind && n.name == name; });
}

HighLevelGraph create_high_level_graph(const AnomalyAlert& alert) {
    HighLevelGraph g;
    const AuthChain& c = alert.chain;
    const AlertEntities& e = alert.entities;
    const AttackLabel label = alert.label;
    using K = HlgNode::Kind;
    std::size_t client = g.node(K::host, e.client_host.fqdn.str());
    std::size_t dc = g.node(K::host, e.dc.fqdn.str());
    auto edge = [&](std::size_t from, std::size_t to, std::string step, bool present) {
        g.edges.push_back({from, to, std::move(step), present, label});
    };
    if (c.used_ntlm) {
        edge(client, dc, "NTLM", true);
    } else {
        edge(client, dc, "AS-REQ", c.has_as_request);
        edge(client, dc, "AS-REP", c.has_as_reply);
        edge(client, dc, "TGS-REQ", c.has_tgs_request);
        edge(client, dc, "TGS-REP", c.has_tgs_reply);
    }
    if (e.target && label != AttackLabel::AsRepRoasting) {
        std::size_t target = g.node(K::host, e.target->fqdn.str());
        if (target != client) edge(client, target, "access", c.has_service_use || !c.logon_events.empty());
    }
    if (label == AttackLabel::PassTheHash || label == AttackLabel::PassTheTicket || label == AttackLabel::Unknown) {
        std::size_t victim = g.node(K::user, c.client.display());
        edge(victim, client, "uses-credential", true);
        for (const auto& actor : e.actors) edge(g.node(K::user, actor.display()), client, "session", true);
    }
    return g;
}

nlohmann::json alert_to_json(const AnomalyAlert& a, const EventStore& store) {
    nlohmann::json j;
    j["id"] = a.id;
    j["label"] = to_string(a.label);
    j["time"] = a.time;
    auto ids = nlohmann::json::array();
    for (EventOffset o : a.chain.members()) ids.push_back(store.at(o).id);
    j["chain_event_ids"] = ids;
    j["flags"] = {{"as_request", a.chain.has_as_request}, {"as_reply", a.chain.has_as_reply},
                  {"tgs_request", a.chain.has_tgs_request}, {"tgs_reply", a.chain.has_tgs_reply},
                  {"service_use", a.chain.has_service_use}, {"ntlm", a.chain.used_ntlm},
                  {"tgt_issued", a.chain.tgt_issued}, {"prior_kerberos", a.chain.prior_kerberos}};
    j["users"] = nlohmann::json::array();
    for (const auto& u : a.entities.users) j["users"].push_back(principal_to_json(u));
    j["hosts"] = nlohmann::json::array();
    for (const auto& h : a.entities.hosts) j["hosts"].push_back(h.fqdn.str());
    j["sessions"] = nlohmann::json::array();
    for (const auto& s : a.sessions) j["sessions"].push_back(session_to_json(s));
    return j;
}

nlohmann::json hlg_to_json(const HighLevelGraph& g) {
    nlohmann::json j;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : g.nodes) j["nodes"].push_back({{"kind", n.kind == HlgNode::Kind::user ? "user" : "host"}, {"name", n.name}});
    j["edges"] = nlohmann::json::array();
    for (const auto& e : g.edges)
        j["edges"].push_back({{"from", e.from}, {"to", e.to}, {"step", e.step}, {"present", e.present},
                              {"label", to_string(e.label)}});
    return j;
}

} // namespace adtrace
