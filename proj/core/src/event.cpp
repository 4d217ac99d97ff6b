#include "adtrace/event.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <stdexcept>

namespace adtrace {

std::string PrincipalId::display() const {
    std::string out = realm.str();
    out += '\\';
    out += name.str();
    return out;
}

std::string LogonSessionKey::display() const {
    return host.fqdn.str() + "/" + std::to_string(boot_epoch) + "/" + format_logon_id(local_id);
}

bool is_predefined_session_id(std::uint64_t id) noexcept {
    return id == kNetworkServiceSession || id == kLocalServiceSession || id == kSystemSession;
}

bool is_predefined_session(const LogonSessionKey& key) noexcept {
    return is_predefined_session_id(key.local_id);
}

std::string format_logon_id(std::uint64_t id) {
    std::array<char, 20> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), id, 16);
    (void)ec;
    return "0x" + std::string(buf.data(), end);
}

std::uint64_t parse_logon_id(std::string_view text) {
    if (text.size() < 3 || text[0] != '0' || (text[1] != 'x' && text[1] != 'X'))
        throw std::invalid_argument("logon id must be 0x-prefixed hex: " + std::string(text));
    std::string lower = to_lower(text.substr(2));
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(lower.data(), lower.data() + lower.size(), value, 16);
    if (ec != std::errc{} || ptr != lower.data() + lower.size())
        throw std::invalid_argument("bad logon id: " + std::string(text));
    return value;
}

std::string ProcessRef::image_name() const {
    std::string_view path = image_path.view();
    auto slash = path.find_last_of("\\/");
    if (slash != std::string_view::npos) path.remove_prefix(slash + 1);
    return to_lower(path);
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string spn_service_class(std::string_view spn) {
    auto slash = spn.find('/');
    return to_lower(slash == std::string_view::npos ? spn : spn.substr(0, slash));
}

std::string spn_host(std::string_view spn) {
    auto slash = spn.find('/');
    if (slash == std::string_view::npos) return {};
    auto rest = spn.substr(slash + 1);
    auto colon = rest.find_first_of(":/");
    if (colon != std::string_view::npos) rest = rest.substr(0, colon);
    return to_lower(rest);
}

Timestamp event_time(const Event& e) noexcept {
    return std::visit([](const auto& b) { return b.time; }, e.body);
}

EventKind event_kind(const Event& e) noexcept {
    if (const auto* a = e.auth()) return static_cast<EventKind>(static_cast<int>(a->kind));
    if (const auto* l = e.logon())
        return static_cast<EventKind>(static_cast<int>(EventKind::Logon) + static_cast<int>(l->kind));
    const auto& s = std::get<SystemEvent>(e.body);
    return static_cast<EventKind>(static_cast<int>(EventKind::ProcessCreate) + static_cast<int>(s.kind));
}

const HostId& event_host(const Event& e) noexcept {
    if (const auto* a = e.auth()) return a->dc_host;
    if (const auto* l = e.logon()) return l->host;
    return std::get<SystemEvent>(e.body).host;
}

namespace {

void check_principal(const PrincipalId& p, std::string_view field, std::vector<std::string>& out) {
    if (p.name.empty()) out.push_back(std::string(field) + ": empty principal name");
    if (p.kind != PrincipalKind::virtual_account && p.realm.empty())
        out.push_back(std::string(field) + ": empty realm");
    if (p.kind == PrincipalKind::virtual_account && p.parent.empty())
        out.push_back(std::string(field) + ": virtual principal without parent service tag");
}

void check_host(const HostId& h, std::string_view field, std::vector<std::string>& out) {
    if (h.fqdn.empty()) out.push_back(std::string(field) + ": empty fqdn");
}

void check_process(const ProcessRef& p, const HostId& host, std::string_view field,
                   std::vector<std::string>& out) {
    if (p.image_path.empty()) out.push_back(std::string(field) + ": empty image_path");
    if (!(p.host == host)) out.push_back(std::string(field) + ": process/host mismatch");
}

void validate(const AuthEvent& a, std::vector<std::string>& out) {
    check_principal(a.client, "client", out);
    check_host(a.client_host, "client_host", out);
    check_host(a.dc_host, "dc_host", out);
    if (!a.dc_host.is_domain_controller) out.push_back("dc_host: not a domain controller");
    switch (a.kind) {
    case AuthKind::TgsRequest:
    case AuthKind::TgsReply:
    case AuthKind::ServiceTicketUse:
    case AuthKind::NtlmAuth:
        if (!a.target_service || a.target_service->empty())
            out.push_back("target_service: required for " + std::string(to_string(a.kind)));
        break;
    default:
        break;
    }
}

void validate(const LogonEvent& l, std::vector<std::string>& out) {
    check_host(l.host, "host", out);
    check_principal(l.principal, "principal", out);
    if (!(l.session.host == l.host)) out.push_back("session/host mismatch");
    if ((l.kind == LogonKind::reconnect || l.kind == LogonKind::disconnect) &&
        l.logon_type != LogonType::remote_interactive && l.logon_type != LogonType::interactive)
        out.push_back("reconnect/disconnect on non-interactive logon type");
    if (l.source_host) check_host(*l.source_host, "source_host", out);
}

void validate(const SystemEvent& s, std::vector<std::string>& out) {
    check_host(s.host, "host", out);
    if (!(s.session.host == s.host)) out.push_back("session/host mismatch");
    check_process(s.subject_process, s.host, "subject_process", out);
    switch (s.kind) {
    case SystemKind::ProcessCreate:
    case SystemKind::ProcessAccess:
        if (s.object.kind != ObjectKind::process || !s.object.process)
            out.push_back("object: process required");
        else
            check_process(*s.object.process, s.host, "object.process", out);
        break;
    case SystemKind::FileRead:
    case SystemKind::FileWrite:
        if (s.object.kind != ObjectKind::file || s.object.path.empty())
            out.push_back("object: file path required");
        break;
    case SystemKind::RegistryAccess:
        if (s.object.kind != ObjectKind::registry || s.object.path.empty())
            out.push_back("object: registry path required");
        break;
    case SystemKind::NetworkConnect:
        if (s.object.kind != ObjectKind::socket || s.object.remote_address.empty())
            out.push_back("object: socket remote_address required");
        break;
    case SystemKind::ProcessTerminate:
        break;
    }
}

} // namespace

ValidationResult validate_event(const Event& e) {
    ValidationResult result;
    std::visit([&](const auto& body) { validate(body, result.violations); }, e.body);
    return result;
}

namespace {

template <typename E, std::size_t N>
struct Names {
    std::array<std::string_view, N> names;
    std::string_view operator()(E v) const { return names.at(static_cast<std::size_t>(v)); }
    E parse(std::string_view text, std::string_view what) const {
        for (std::size_t i = 0; i < N; ++i)
            if (names[i] == text) return static_cast<E>(i);
        throw std::invalid_argument("unknown " + std::string(what) + ": " + std::string(text));
    }
};

constexpr Names<PrincipalKind, 4> kPrincipalKind{{"user", "machine", "service", "virtual"}};
constexpr Names<AuthKind, 6> kAuthKind{
    {"AsRequest", "AsReply", "TgsRequest", "TgsReply", "ServiceTicketUse", "NtlmAuth"}};
constexpr Names<TicketEncryption, 2> kEncryption{{"aes", "rc4"}};
constexpr Names<Outcome, 2> kOutcome{{"success", "failure"}};
constexpr Names<LogonType, 5> kLogonType{
    {"interactive", "network", "remote_interactive", "service", "batch"}};
constexpr Names<TokenElevation, 3> kElevation{{"default", "full", "limited"}};
constexpr Names<IntegrityLevel, 4> kIntegrity{{"low", "medium", "high", "system"}};
constexpr Names<LogonKind, 5> kLogonKind{
    {"logon", "logoff", "reconnect", "disconnect", "special_privileges"}};
constexpr Names<ObjectKind, 4> kObjectKind{{"process", "file", "socket", "registry"}};
constexpr Names<SystemKind, 7> kSystemKind{{"ProcessCreate", "ProcessTerminate", "FileRead",
                                            "FileWrite", "NetworkConnect", "ProcessAccess",
                                            "RegistryAccess"}};
constexpr Names<EventKind, kEventKindCount> kEventKind{
    {"AsRequest", "AsReply", "TgsRequest", "TgsReply", "ServiceTicketUse", "NtlmAuth", "Logon",
     "Logoff", "Reconnect", "Disconnect", "SpecialPrivileges", "ProcessCreate",
     "ProcessTerminate", "FileRead", "FileWrite", "NetworkConnect", "ProcessAccess",
     "RegistryAccess"}};
constexpr Names<AccessType, kAccessTypeCount> kAccessType{
    {"RDP", "SSH", "WinRM", "WMI", "RPC", "PsExec", "SMB", "WebRequest", "Unknown"}};
constexpr Names<AttackLabel, 7> kAttackLabel{{"AsRepRoasting", "Kerberoasting", "PassTheTicket",
                                              "PassTheHash", "GoldenTicket", "SilverTicket",
                                              "Unknown"}};

} // namespace

std::string_view to_string(PrincipalKind v) { return kPrincipalKind(v); }
std::string_view to_string(AuthKind v) { return kAuthKind(v); }
std::string_view to_string(TicketEncryption v) { return kEncryption(v); }
std::string_view to_string(Outcome v) { return kOutcome(v); }
std::string_view to_string(LogonType v) { return kLogonType(v); }
std::string_view to_string(TokenElevation v) { return kElevation(v); }
std::string_view to_string(IntegrityLevel v) { return kIntegrity(v); }
std::string_view to_string(LogonKind v) { return kLogonKind(v); }
std::string_view to_string(ObjectKind v) { return kObjectKind(v); }
std::string_view to_string(SystemKind v) { return kSystemKind(v); }
std::string_view to_string(EventKind v) { return kEventKind(v); }
std::string_view to_string(AccessType v) { return kAccessType(v); }
std::string_view to_string(AttackLabel v) { return kAttackLabel(v); }

template <> PrincipalKind enum_from_string(std::string_view t) { return kPrincipalKind.parse(t, "principal kind"); }
template <> AuthKind enum_from_string(std::string_view t) { return kAuthKind.parse(t, "auth kind"); }
template <> TicketEncryption enum_from_string(std::string_view t) { return kEncryption.parse(t, "ticket encryption"); }
template <> Outcome enum_from_string(std::string_view t) { return kOutcome.parse(t, "outcome"); }
template <> LogonType enum_from_string(std::string_view t) { return kLogonType.parse(t, "logon type"); }
template <> TokenElevation enum_from_string(std::string_view t) { return kElevation.parse(t, "token elevation"); }
template <> IntegrityLevel enum_from_string(std::string_view t) { return kIntegrity.parse(t, "integrity level"); }
template <> LogonKind enum_from_string(std::string_view t) { return kLogonKind.parse(t, "logon kind"); }
template <> ObjectKind enum_from_string(std::string_view t) { return kObjectKind.parse(t, "object kind"); }
template <> SystemKind enum_from_string(std::string_view t) { return kSystemKind.parse(t, "system kind"); }
template <> EventKind enum_from_string(std::string_view t) { return kEventKind.parse(t, "event kind"); }
template <> AccessType enum_from_string(std::string_view t) { return kAccessType.parse(t, "access type"); }
template <> AttackLabel enum_from_string(std::string_view t) { return kAttackLabel.parse(t, "attack label"); }

} // namespace adtrace
