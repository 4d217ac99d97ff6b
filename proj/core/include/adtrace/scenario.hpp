#pragma once

#include "adtrace/directory.hpp"
#include "adtrace/event.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace adtrace {

/// Invalid scenario configuration or an impossible script.
class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class AuthMode : std::uint8_t { kerberos, ntlm, ptt, golden };

/// Benign activity intensity. Rates are Poisson means per user-hour unless noted.
struct BenignRates {
    double share_access = 2.0;
    double web_request = 1.0;
    double rdp_session = 0.05;
    double lolbin = 0.3;
    double external_connect = 2.0;
    double local_file = 6.0;
    double ntlm_auth = 0.0;
    double system_noise = 300.0;      // per host-hour, predefined sessions only
    double truncation_fraction = 0.0; // share of benign Kerberos chains cut short
    int startup_apps = 48;            // processes launched by explorer at desktop logon
};

struct AttackStep {
    enum class Action : std::uint8_t { discovery, credential_access, lateral, escalate, roast, collect };
    Action action = Action::discovery;
    std::string at;                     // session label the step runs in (source for lateral)
    std::string to;                     // lateral: target host alias
    AccessType access = AccessType::Unknown;
    std::string as;                     // lateral: account used; roast / tickets: target account
    AuthMode auth = AuthMode::kerberos;
    std::string label;                  // lateral / escalate: name of the resulting session
    std::string technique;              // credential_access, roast, escalate variants
    std::vector<std::string> commands;  // discovery command lines; collect / upload file paths
    bool privileged = false;            // lateral RDP: split limited + full token sessions
};

struct AttackScript {
    AttackLabel kind = AttackLabel::PassTheHash;
    std::string foothold_host;
    std::string foothold_user;
    std::vector<std::string> attacker_path;
    std::string stolen_principal;
    double start_hour = 10.0;
    std::vector<AttackStep> steps;
};

enum class ScenarioCase : std::uint8_t { standard, rdp_reconnect, access_types };
enum class ReconnectVariant : std::uint8_t { standard, open_window, victim_never_disconnects, fresh_session };

struct ScenarioConfig {
    std::uint64_t seed = 1;
    Timestamp start_time = 1709510400000;  // 2024-03-04T00:00:00Z
    double duration_hours = 24.0;
    Directory directory;
    BenignRates rates;
    std::vector<AttackScript> attacks;
    std::string c2_address = "203.0.113.77";
    ScenarioCase scenario_case = ScenarioCase::standard;
    ReconnectVariant reconnect_variant = ReconnectVariant::standard;
};

struct TruthEdge {
    LogonSessionKey source;
    LogonSessionKey dest;
    AccessType access = AccessType::Unknown;
    friend bool operator==(const TruthEdge&, const TruthEdge&) = default;
    friend auto operator<=>(const TruthEdge&, const TruthEdge&) = default;
};

struct TruthAccess {
    LogonSessionKey session;
    std::uint64_t logon_event_id = 0;
    AccessType access = AccessType::Unknown;
};

/// The anomalous authentication events a script produced, with their label.
struct TruthAttack {
    AttackLabel label = AttackLabel::Unknown;
    std::vector<std::uint64_t> chain_event_ids;
};

/// A system event recorded under one session that belongs to another.
struct TruthReassignment {
    std::uint64_t event_id = 0;
    LogonSessionKey raw;
    LogonSessionKey truth;
};

/// Process creations of one desktop startup cascade.
struct TruthCascade {
    LogonSessionKey session;
    std::vector<std::uint64_t> event_ids;
};

struct GroundTruth {
    std::vector<std::uint64_t> attack_event_ids;
    std::vector<TruthEdge> causal_edges;
    std::vector<LogonSessionKey> attack_sessions;
    std::vector<TruthAttack> attacks;
    std::vector<TruthAccess> access_types;
    std::vector<TruthReassignment> reassignments;
    std::vector<std::uint64_t> attacker_window_ids;
    bool open_window = false;
    std::vector<TruthCascade> cascades;
    std::size_t escalations = 0;
    std::size_t truncated_chains = 0;
    std::string events_sha256;

    nlohmann::json to_json() const;
    static GroundTruth from_json(const nlohmann::json& j);
};

struct ForgeOutput {
    std::vector<Event> events;
    GroundTruth truth;
    Directory directory;
};

/// Benign background plus every configured attack script. Throws ScenarioError.
ForgeOutput forge(const ScenarioConfig& cfg);
/// Remote desktop reconnect into a victim's disconnected session.
ForgeOutput forge_rdp_reconnect_case(const ScenarioConfig& cfg,
                                     ReconnectVariant variant = ReconnectVariant::standard);
/// One canonical logon per remote access type, plus privileged RDP and a web shell.
ForgeOutput forge_access_type_cases(const ScenarioConfig& cfg);
/// Dispatches on cfg.scenario_case.
ForgeOutput forge_case(const ScenarioConfig& cfg);

struct ForgeFiles {
    std::filesystem::path events;
    std::filesystem::path truth;
    std::filesystem::path directory;
};

/// Writes events.ndjson, truth.json and directory.json. Refuses a non-empty
/// directory unless `force`.
ForgeFiles write_forge_output(ForgeOutput& out, const std::filesystem::path& dir, bool force);

/// Four hosts (dc, ws1, exch, data), twenty users, one day, no attacks.
ScenarioConfig default_scenario(std::uint64_t seed);
/// Built-in playbook on the matching topology.
ScenarioConfig playbook_scenario(AttackLabel kind, std::uint64_t seed);
AttackScript playbook(AttackLabel kind);
/// Standard directory; `with_ws2` adds a second workstation.
Directory standard_directory(bool with_ws2, std::size_t user_count);

void validate_config(const ScenarioConfig& cfg);
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const nlohmann::json& j);
ScenarioConfig load_scenario_config(const std::filesystem::path& path);

std::string_view to_string(AuthMode v);
std::string_view to_string(AttackStep::Action v);

} // namespace adtrace
