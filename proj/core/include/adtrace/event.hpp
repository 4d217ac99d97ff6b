#pragma once

#include "adtrace/symbol.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace adtrace {

/// Milliseconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

enum class PrincipalKind : std::uint8_t { user, machine, service, virtual_account };

struct PrincipalId {
    Symbol realm;
    Symbol name;
    PrincipalKind kind = PrincipalKind::user;
    /// Owning service tag; only meaningful for virtual accounts (e.g. "sshd").
    Symbol parent;

    friend bool operator==(const PrincipalId& a, const PrincipalId& b) noexcept {
        return a.realm == b.realm && a.name == b.name && a.kind == b.kind;
    }
    friend std::strong_ordering operator<=>(const PrincipalId& a, const PrincipalId& b) noexcept {
        if (auto c = a.realm <=> b.realm; c != 0) return c;
        if (auto c = a.name <=> b.name; c != 0) return c;
        return a.kind <=> b.kind;
    }
    /// "REALM\name"
    std::string display() const;
};

struct HostId {
    Symbol fqdn;
    bool is_domain_controller = false;
    bool is_domain_joined = true;

    // fqdn is unique within a dataset, so it alone is the identity
    friend bool operator==(const HostId& a, const HostId& b) noexcept { return a.fqdn == b.fqdn; }
    friend std::strong_ordering operator<=>(const HostId& a, const HostId& b) noexcept {
        return a.fqdn <=> b.fqdn;
    }
};

/// Identity of one logon session: the local id is only unique until the next
/// reboot, so the boot epoch is part of the key.
struct LogonSessionKey {
    HostId host;
    std::uint32_t boot_epoch = 0;
    std::uint64_t local_id = 0;

    friend bool operator==(const LogonSessionKey& a, const LogonSessionKey& b) noexcept {
        return a.host == b.host && a.boot_epoch == b.boot_epoch && a.local_id == b.local_id;
    }
    friend std::strong_ordering operator<=>(const LogonSessionKey& a,
                                            const LogonSessionKey& b) noexcept {
        if (auto c = a.host <=> b.host; c != 0) return c;
        if (auto c = a.boot_epoch <=> b.boot_epoch; c != 0) return c;
        return a.local_id <=> b.local_id;
    }
    /// "host/epoch/0xid"
    std::string display() const;
};

inline constexpr std::uint64_t kNetworkServiceSession = 0x3e4;
inline constexpr std::uint64_t kLocalServiceSession = 0x3e5;
inline constexpr std::uint64_t kSystemSession = 0x3e7;

/// True for the built-in Network Service, Local Service and System sessions.
bool is_predefined_session(const LogonSessionKey& key) noexcept;
bool is_predefined_session_id(std::uint64_t local_id) noexcept;

/// Lower-case hex with 0x prefix, e.g. "0x3e7".
std::string format_logon_id(std::uint64_t id);
/// Accepts "0x..." (any case); throws std::invalid_argument otherwise.
std::uint64_t parse_logon_id(std::string_view text);

enum class AuthKind : std::uint8_t {
    AsRequest,
    AsReply,
    TgsRequest,
    TgsReply,
    ServiceTicketUse,
    NtlmAuth,
};
enum class TicketEncryption : std::uint8_t { aes, rc4 };
enum class Outcome : std::uint8_t { success, failure };

/// One step of a Kerberos or NTLM exchange as recorded on a domain controller.
///
/// Ticket lineage: AsReply carries the TGT it issued in `tgt_id`; TgsRequest
/// and TgsReply carry the presented TGT; TgsReply carries the issued service
/// ticket in `service_ticket_id`; ServiceTicketUse presents that ticket.
struct AuthEvent {
    Timestamp time = 0;
    AuthKind kind = AuthKind::AsRequest;
    PrincipalId client;
    HostId client_host;
    HostId dc_host;
    std::optional<Symbol> target_service;
    std::optional<Symbol> logon_guid;
    TicketEncryption ticket_encryption = TicketEncryption::aes;
    Outcome outcome = Outcome::success;
    std::optional<Symbol> tgt_id;
    std::optional<Symbol> service_ticket_id;
    std::optional<std::uint16_t> client_port;
};

enum class LogonType : std::uint8_t { interactive, network, remote_interactive, service, batch };
enum class TokenElevation : std::uint8_t { default_token, full, limited };
enum class IntegrityLevel : std::uint8_t { low, medium, high, system };
enum class LogonKind : std::uint8_t { logon, logoff, reconnect, disconnect, special_privileges };

/// Logon-side record written by the accessed host.
///
/// For `reconnect`, `session` names the existing remote desktop session being
/// re-entered and `logon_guid` is the guid of the new logon that re-entered it.
struct LogonEvent {
    Timestamp time = 0;
    HostId host;
    PrincipalId principal;
    LogonSessionKey session;
    LogonType logon_type = LogonType::interactive;
    std::optional<Symbol> logon_guid;
    std::optional<HostId> source_host;
    std::optional<std::uint16_t> source_port;
    TokenElevation token_elevation = TokenElevation::default_token;
    IntegrityLevel integrity_level = IntegrityLevel::medium;
    LogonKind kind = LogonKind::logon;
};

struct ProcessRef {
    HostId host;
    std::uint32_t pid = 0;
    Timestamp start_time = 0;
    Symbol image_path;

    /// (host, pid, start_time) identifies a process; pids are recycled.
    friend bool operator==(const ProcessRef& a, const ProcessRef& b) noexcept {
        return a.host == b.host && a.pid == b.pid && a.start_time == b.start_time;
    }
    friend std::strong_ordering operator<=>(const ProcessRef& a, const ProcessRef& b) noexcept {
        if (auto c = a.host <=> b.host; c != 0) return c;
        if (auto c = a.pid <=> b.pid; c != 0) return c;
        return a.start_time <=> b.start_time;
    }
    /// Lower-cased final path component, e.g. "lsass.exe".
    std::string image_name() const;
};

enum class ObjectKind : std::uint8_t { process, file, socket, registry };

struct ObjectRef {
    ObjectKind kind = ObjectKind::file;
    std::optional<ProcessRef> process;  // process
    Symbol path;                        // file, registry
    Symbol remote_address;              // socket: fqdn of a known host or a bare address
    std::uint16_t remote_port = 0;
    std::uint16_t local_port = 0;
};

enum class SystemKind : std::uint8_t {
    ProcessCreate,
    ProcessTerminate,
    FileRead,
    FileWrite,
    NetworkConnect,
    ProcessAccess,
    RegistryAccess,
};

/// Host-level system activity. For ProcessCreate, `session` is the session of
/// the new process (the object); the creator may live in another session.
struct SystemEvent {
    Timestamp time = 0;
    HostId host;
    LogonSessionKey session;
    SystemKind kind = SystemKind::ProcessCreate;
    ProcessRef subject_process;
    ObjectRef object;
    std::optional<Symbol> command_line;
};

using EventBody = std::variant<AuthEvent, LogonEvent, SystemEvent>;

struct Event {
    /// Record id as written by the producer; ground-truth files refer to it.
    std::uint64_t id = 0;
    EventBody body;
    /// Unknown top-level fields, kept so records round-trip.
    nlohmann::json extra;

    const AuthEvent* auth() const noexcept { return std::get_if<AuthEvent>(&body); }
    const LogonEvent* logon() const noexcept { return std::get_if<LogonEvent>(&body); }
    const SystemEvent* system() const noexcept { return std::get_if<SystemEvent>(&body); }
};

/// Flat kind over all three record families; used by query filters.
enum class EventKind : std::uint8_t {
    AsRequest,
    AsReply,
    TgsRequest,
    TgsReply,
    ServiceTicketUse,
    NtlmAuth,
    Logon,
    Logoff,
    Reconnect,
    Disconnect,
    SpecialPrivileges,
    ProcessCreate,
    ProcessTerminate,
    FileRead,
    FileWrite,
    NetworkConnect,
    ProcessAccess,
    RegistryAccess,
};
inline constexpr std::size_t kEventKindCount = 18;

Timestamp event_time(const Event& e) noexcept;
EventKind event_kind(const Event& e) noexcept;
/// Host that recorded the event: the DC for auth records.
const HostId& event_host(const Event& e) noexcept;

struct ValidationResult {
    std::vector<std::string> violations;
    bool ok() const noexcept { return violations.empty(); }
};

/// Checks every schema invariant that can be decided from the record alone.
ValidationResult validate_event(const Event& e);

/// Remote access types distinguished when tracing across machines.
enum class AccessType : std::uint8_t { RDP, SSH, WinRM, WMI, RPC, PsExec, SMB, WebRequest, Unknown };
inline constexpr std::size_t kAccessTypeCount = 9;

/// Attack classes of the authentication anomaly model.
enum class AttackLabel : std::uint8_t {
    AsRepRoasting,
    Kerberoasting,
    PassTheTicket,
    PassTheHash,
    GoldenTicket,
    SilverTicket,
    Unknown,
};

// Enum <-> text. Parsers throw std::invalid_argument on unknown names.
std::string_view to_string(PrincipalKind v);
std::string_view to_string(AuthKind v);
std::string_view to_string(TicketEncryption v);
std::string_view to_string(Outcome v);
std::string_view to_string(LogonType v);
std::string_view to_string(TokenElevation v);
std::string_view to_string(IntegrityLevel v);
std::string_view to_string(LogonKind v);
std::string_view to_string(ObjectKind v);
std::string_view to_string(SystemKind v);
std::string_view to_string(EventKind v);
std::string_view to_string(AccessType v);
std::string_view to_string(AttackLabel v);

template <typename E> E enum_from_string(std::string_view text);
template <> PrincipalKind enum_from_string(std::string_view);
template <> AuthKind enum_from_string(std::string_view);
template <> TicketEncryption enum_from_string(std::string_view);
template <> Outcome enum_from_string(std::string_view);
template <> LogonType enum_from_string(std::string_view);
template <> TokenElevation enum_from_string(std::string_view);
template <> IntegrityLevel enum_from_string(std::string_view);
template <> LogonKind enum_from_string(std::string_view);
template <> ObjectKind enum_from_string(std::string_view);
template <> SystemKind enum_from_string(std::string_view);
template <> EventKind enum_from_string(std::string_view);
template <> AccessType enum_from_string(std::string_view);
template <> AttackLabel enum_from_string(std::string_view);

/// Service class of an SPN ("cifs/data.corp.local" -> "cifs"), lower-cased.
std::string spn_service_class(std::string_view spn);
/// Host part of an SPN ("cifs/data.corp.local:445" -> "data.corp.local").
std::string spn_host(std::string_view spn);
/// Case-insensitive ASCII lower-casing.
std::string to_lower(std::string_view text);

} // namespace adtrace

template <>
struct std::hash<adtrace::HostId> {
    std::size_t operator()(const adtrace::HostId& h) const noexcept { return h.fqdn.hash(); }
};
template <>
struct std::hash<adtrace::LogonSessionKey> {
    std::size_t operator()(const adtrace::LogonSessionKey& k) const noexcept {
        std::size_t h = k.host.fqdn.hash();
        h ^= std::hash<std::uint64_t>{}(k.local_id) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        h ^= std::hash<std::uint32_t>{}(k.boot_epoch) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return h;
    }
};
template <>
struct std::hash<adtrace::PrincipalId> {
    std::size_t operator()(const adtrace::PrincipalId& p) const noexcept {
        return p.realm.hash() * 31 + p.name.hash() * 7 + static_cast<std::size_t>(p.kind);
    }
};
template <>
struct std::hash<adtrace::ProcessRef> {
    std::size_t operator()(const adtrace::ProcessRef& p) const noexcept {
        std::size_t h = p.host.fqdn.hash();
        h ^= std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(p.pid) << 40) ^
                                        static_cast<std::uint64_t>(p.start_time)) +
             0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return h;
    }
};
