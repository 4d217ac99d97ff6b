#pragma once

#include "adtrace/event.hpp"
#include "adtrace/sentinel.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace adtrace {

enum class NodeKind : std::uint8_t { process, file, socket, principal, host, meta };
enum class EdgeKind : std::uint8_t { spawned, read, wrote, connected, accessed, logged_on, escalated, authenticated };

std::string_view to_string(NodeKind v);
std::string_view to_string(EdgeKind v);

/// A system event kept in a graph, flattened so scoring needs no store.
struct TracedEvent {
    std::uint64_t id = 0;
    Timestamp time = 0;
    HostId host;
    LogonSessionKey session;  // effective session
    SystemKind kind = SystemKind::ProcessCreate;
    std::string subject_image;  // lower-case file name
    std::string object_image;   // created or accessed process, lower-case file name
    std::string object_path;    // file / registry path or remote endpoint
    bool remote_domain = false; // connect to a domain-joined host
    std::string command_line;
    ProcessRef subject;
    std::optional<ProcessRef> object_process;
};

struct GraphNode {
    NodeKind kind = NodeKind::process;
    std::string label;
    std::optional<HostId> host;
    std::optional<LogonSessionKey> session;
    std::optional<ProcessRef> process;
    std::vector<std::uint64_t> event_ids;
    bool external = false;
    bool ttp = false;        // matched a technique rule
    bool pinned = false;     // endpoint of a cross-machine edge or escalation
    std::size_t members = 1; // processes folded into a meta node
};

struct GraphEdge {
    std::size_t from = 0;
    std::size_t to = 0;
    EdgeKind kind = EdgeKind::spawned;
    Timestamp time = 0;
    std::vector<std::uint64_t> event_ids;
    std::optional<AccessType> access;
};

/// A (session, time-slice, root-process) piece of a predefined session that a
/// cluster depends on. Only backward-reachable events are kept.
struct PredefinedSlice {
    LogonSessionKey session;
    TimeRange span;
    ProcessRef root;
    std::vector<std::uint64_t> event_ids;
};

struct SessionCluster {
    LogonSessionKey primary;
    std::vector<LogonSessionKey> linked;  // twins and byproduct sessions, not the primary
    std::vector<PredefinedSlice> slices;
    AccessType access = AccessType::Unknown;
    PrincipalId principal;
    std::optional<TimeRange> true_identity_window;
    bool open_window = false;
    std::optional<std::uint64_t> logon_event_id;

    bool contains(const LogonSessionKey& k) const;
    std::vector<LogonSessionKey> sessions() const;
};

struct CrossEdge {
    LogonSessionKey source;  // cluster primaries
    LogonSessionKey dest;
    AccessType access = AccessType::Unknown;
    Timestamp time = 0;
    PrincipalId source_principal;
    PrincipalId dest_principal;
    std::vector<std::uint64_t> evidence_ids;  // connect, logon and auth records
};

struct EscalationMark {
    LogonSessionKey from_session;
    LogonSessionKey to_session;
    Timestamp time = 0;
    TokenElevation from_elevation = TokenElevation::default_token;
    TokenElevation to_elevation = TokenElevation::default_token;
    IntegrityLevel from_integrity = IntegrityLevel::medium;
    IntegrityLevel to_integrity = IntegrityLevel::medium;
    std::uint64_t event_id = 0;
};

/// True when the transition is limited -> full token or a strict integrity rise.
bool is_escalation(TokenElevation from_e, IntegrityLevel from_i, TokenElevation to_e, IntegrityLevel to_i);

struct AttackGraph {
    std::size_t alert_id = 0;
    AttackLabel label = AttackLabel::Unknown;
    Timestamp alert_time = 0;
    HighLevelGraph hlg;
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
    std::vector<CrossEdge> cross_edges;
    std::vector<EscalationMark> escalations;
    std::vector<SessionCluster> clusters;
    std::vector<TracedEvent> events;          // time ordered
    std::vector<std::uint64_t> provenance;    // every record id the graph rests on, sorted

    const SessionCluster* cluster_of(const LogonSessionKey& k) const;
    std::size_t node_count(NodeKind kind) const;
};

/// Fills nodes/edges from events, clusters, cross edges, escalations and the
/// high-level graph. Replaces any existing nodes and edges.
void build_graph_structure(AttackGraph& g);

struct MetaPattern {
    std::string name;
    std::string root_image;                 // lower-case file name
    std::vector<std::string> member_images; // lower-case file names
};

std::vector<MetaPattern> default_meta_patterns();
std::vector<MetaPattern> meta_patterns_from_json(const nlohmann::json& j);

/// Folds each maximal benign routine into one meta node. Nodes flagged ttp or
/// pinned are never folded.
AttackGraph collapse_meta_nodes(const AttackGraph& g, const std::vector<MetaPattern>& patterns);

std::string to_dot(const AttackGraph& g);
nlohmann::json graph_to_json(const AttackGraph& g);
nlohmann::json cluster_to_json(const SessionCluster& c);

} // namespace adtrace
