#include "adtrace/baselines.hpp"

namespace adtrace {

namespace {

template <typename Fn>
void each_connect(const EventStore& store, Fn&& fn) {
    for (EventOffset o : store.all()) {
        const SystemEvent* s = store.at(o).system();
        if (!s || s->kind != SystemKind::NetworkConnect) continue;
        auto remote = store.find_host(s->object.remote_address);
        if (!remote || !remote->is_domain_joined || *remote == s->host) continue;
        fn(s->host.fqdn, remote->fqdn);
    }
}

template <typename Fn>
void each_logon(const EventStore& store, Fn&& fn) {
    for (EventOffset o : store.logon_events()) {
        const LogonEvent& l = *store.at(o).logon();
        if (l.kind != LogonKind::logon || !l.source_host || *l.source_host == l.host) continue;
        auto src = store.find_host(l.source_host->fqdn);
        if (!src || !src->is_domain_joined) continue;
        fn(src->fqdn, l.host.fqdn);
    }
}

} // namespace

std::size_t connection_baseline_edges(const EventStore& store) {
    std::size_t n = 0;
    each_connect(store, [&](Symbol, Symbol) { ++n; });
    return n;
}

std::size_t logon_baseline_edges(const EventStore& store) {
    std::size_t n = 0;
    each_logon(store, [&](Symbol, Symbol) { ++n; });
    return n;
}

std::set<HostPair> connection_baseline_pairs(const EventStore& store) {
    std::set<HostPair> out;
    each_connect(store, [&](Symbol a, Symbol b) { out.emplace(a, b); });
    return out;
}

std::set<HostPair> logon_baseline_pairs(const EventStore& store) {
    std::set<HostPair> out;
    each_logon(store, [&](Symbol a, Symbol b) { out.emplace(a, b); });
    return out;
}

} // namespace adtrace
