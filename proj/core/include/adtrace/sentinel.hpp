#pragma once

#include "adtrace/event.hpp"
#include "adtrace/log_store.hpp"

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace adtrace {

struct SentinelConfig {
    /// Lookback/lookahead for request/reply pairing and "follows"/"precedes" checks.
    Timestamp window_ms = 10 * 60 * 1000;
    /// How far back a presented TGT may have been issued.
    Timestamp tgt_lifetime_ms = 10 * 60 * 60 * 1000;
    /// Service ticket use with no issuing TGS exchange. Experimental.
    bool silver_ticket = false;
    unsigned threads = 1;
};

/// One logical authentication: an optional AS exchange, the TGS exchange that
/// used its TGT, the service access, and logons sharing the logon GUID. NTLM
/// chains hold the NtlmAuth events and logons sharing the GUID.
struct AuthChain {
    std::vector<EventOffset> auth_events;   // time ordered
    std::vector<EventOffset> logon_events;  // time ordered
    PrincipalId client;
    HostId client_host;
    bool has_as_request = false;
    bool has_as_reply = false;
    bool has_tgs_request = false;
    bool has_tgs_reply = false;
    bool has_service_use = false;
    bool used_ntlm = false;
    /// Presented TGT matches some AsReply on record.
    bool tgt_issued = false;
    /// Client had Kerberos activity before the chain started.
    bool prior_kerberos = false;

    Timestamp start_time(const EventStore& store) const;
    /// All member offsets, sorted.
    std::vector<EventOffset> members() const;
};

struct AlertEntities {
    std::vector<PrincipalId> users;  // sorted, unique
    std::vector<HostId> hosts;       // sorted, unique
    HostId client_host;
    HostId dc;
    std::optional<HostId> target;
    /// Principals holding open remote sessions on the client host when the
    /// chain started (credential reuse labels only).
    std::vector<PrincipalId> actors;
};

struct AnomalyAlert {
    std::size_t id = 0;
    AttackLabel label = AttackLabel::Unknown;
    AuthChain chain;
    AlertEntities entities;
    /// Sessions opened by logons in the chain.
    std::vector<LogonSessionKey> sessions;
    Timestamp time = 0;
    double latency_ms = 0;
};

struct HlgNode {
    enum class Kind : std::uint8_t { user, host };
    Kind kind = Kind::host;
    std::string name;
    friend bool operator==(const HlgNode&, const HlgNode&) = default;
};

struct HlgEdge {
    std::size_t from = 0;
    std::size_t to = 0;
    std::string step;  // AS-REQ, TGS-REP, access, NTLM, uses-credential ...
    bool present = true;
    AttackLabel label = AttackLabel::Unknown;
};

struct HighLevelGraph {
    std::vector<HlgNode> nodes;
    std::vector<HlgEdge> edges;

    std::size_t node(HlgNode::Kind kind, const std::string& name);
    bool has_node(HlgNode::Kind kind, std::string_view name) const;
};

AuthChain build_chain(EventOffset anchor, const EventStore& store, const SentinelConfig& cfg = {});
AttackLabel check_attack_type(const AuthChain& chain, const SentinelConfig& cfg = {});
/// One alert per maximal anomalous chain, ordered by time.
std::vector<AnomalyAlert> get_authentication_anomalies(const EventStore& store, const SentinelConfig& cfg = {});
HighLevelGraph create_high_level_graph(const AnomalyAlert& alert);

nlohmann::json alert_to_json(const AnomalyAlert& alert, const EventStore& store);
nlohmann::json hlg_to_json(const HighLevelGraph& g);

} // namespace adtrace
