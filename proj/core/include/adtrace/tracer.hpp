#pragma once

#include "adtrace/attack_graph.hpp"
#include "adtrace/log_store.hpp"
#include "adtrace/sentinel.hpp"

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace adtrace {

/// One row of the remote access fingerprint table. Absent fields match anything.
struct AccessFingerprint {
    AccessType access = AccessType::Unknown;
    std::optional<LogonType> logon_type;
    std::optional<std::string> service;        // service class of the logon's tickets, lower-case
    std::optional<std::string> created_image;  // a process with this image starts in the session
    std::optional<std::string> parent_image;   // a process in the session has a parent with this image
    bool byproduct = false;                    // a virtual account logon follows on the same host
};

/// First matching row wins.
std::vector<AccessFingerprint> default_fingerprints();
std::vector<AccessFingerprint> fingerprints_from_json(const nlohmann::json& j);
nlohmann::json fingerprints_to_json(const std::vector<AccessFingerprint>& rows);

struct TracerConfig {
    bool reassign = true;
    Timestamp hop_window_ms = 5000;
    Timestamp byproduct_window_ms = 5000;
    Timestamp web_carve_window_ms = 30000;
    /// Per-session event cap for very long sessions; 0 means no cap.
    std::size_t max_session_events = 0;
    std::vector<AccessFingerprint> fingerprints = default_fingerprints();
    unsigned threads = 1;
};

enum class Direction : std::uint8_t { backward, forward };

struct IntraTrace {
    std::vector<EventOffset> events;    // (time, sequence) ordered
    std::vector<EventOffset> boundary;  // logon records (backward) or connects (forward)
};

struct HopSeed {
    HostId host;
    LogonSessionKey session;  // cluster primary on the next host
    Direction direction = Direction::forward;
    CrossEdge edge;
};

/// Stage 2 over an immutable store. Thread-safe after construction.
class Tracer {
public:
    explicit Tracer(const EventStore& store, TracerConfig cfg = {});
    ~Tracer();
    Tracer(const Tracer&) = delete;
    Tracer& operator=(const Tracer&) = delete;

    const TracerConfig& config() const noexcept { return cfg_; }

    AccessType check_remote_access_type(const LogonSessionKey& session) const;
    /// Classifies the first session the alert created; Unknown without one.
    AccessType check_remote_access_type(const AnomalyAlert& alert) const;

    SessionCluster reassign_session_id(AccessType t, const LogonSessionKey& session) const;
    SessionCluster link_sessions(SessionCluster c) const;
    IntraTrace traverse_intra(const SessionCluster& c, Direction d) const;
    std::vector<HopSeed> hop(const SessionCluster& c, const IntraTrace& trace, Direction d) const;

    AttackGraph get_ad_attack_graph(const AnomalyAlert& alert) const;
    /// One graph per alert, in alert order.
    std::vector<AttackGraph> get_ad_attack_graphs(const std::vector<AnomalyAlert>& alerts) const;

    /// Session an event is attributed to after reassignment.
    LogonSessionKey effective_session(EventOffset off) const;
    /// System events attributed to the session, ordered.
    std::vector<EventOffset> effective_events(const LogonSessionKey& session) const;
    /// Cluster primary owning a session; nullopt for predefined sessions.
    std::optional<LogonSessionKey> resolve_primary(const LogonSessionKey& session) const;
    std::optional<EventOffset> logon_of(const LogonSessionKey& session) const;
    /// Escalation marks found while linking the cluster of `primary`.
    std::vector<EscalationMark> escalations_of(const SessionCluster& c) const;

    TracedEvent traced(EventOffset off) const;

private:
    struct Reassignment;
    const Reassignment& reassignment() const;
    void compute_reassignment(Reassignment& r) const;
    std::optional<LogonSessionKey> resolve_primary(const LogonSessionKey& session, int depth) const;
    std::vector<EventOffset> cluster_events(const SessionCluster& c) const;
    bool earlier(EventOffset a, EventOffset b) const;

    const EventStore& store_;
    TracerConfig cfg_;
    mutable std::unique_ptr<Reassignment> reassign_;
    mutable std::once_flag reassign_once_;
};

} // namespace adtrace
