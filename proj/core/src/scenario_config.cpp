#include "adtrace/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace adtrace {

namespace {

const std::string kRealm = "CORP.LOCAL";
const std::string kDomain = "corp.local";

HostEntry make_host(const std::string& alias, HostRole role) {
    HostEntry h;
    h.alias = alias;
    h.role = role;
    h.host = HostId{Symbol(alias + "." + kDomain), role == HostRole::dc, true};
    return h;
}

UserEntry make_user(const std::string& name, const std::string& home, PrivilegeTier tier = PrivilegeTier::user) {
    UserEntry u;
    u.principal = PrincipalId{Symbol(kRealm), Symbol(name), PrincipalKind::user, {}};
    u.home = home;
    u.tier = tier;
    return u;
}

AttackStep discovery(std::string at, std::vector<std::string> commands) {
    AttackStep s;
    s.action = AttackStep::Action::discovery;
    s.at = std::move(at);
    s.commands = std::move(commands);
    return s;
}

AttackStep credential(std::string at, std::string technique, std::string as = {}) {
    AttackStep s;
    s.action = AttackStep::Action::credential_access;
    s.at = std::move(at);
    s.technique = std::move(technique);
    s.as = std::move(as);
    return s;
}

AttackStep lateral(std::string at, std::string to, AccessType access, std::string as, AuthMode auth,
                   std::string label, bool privileged = false) {
    AttackStep s;
    s.action = AttackStep::Action::lateral;
    s.at = std::move(at);
    s.to = std::move(to);
    s.access = access;
    s.as = std::move(as);
    s.auth = auth;
    s.label = std::move(label);
    s.privileged = privileged;
    return s;
}

AttackStep escalate(std::string at, std::string technique, std::string label) {
    AttackStep s;
    s.action = AttackStep::Action::escalate;
    s.at = std::move(at);
    s.technique = std::move(technique);
    s.label = std::move(label);
    return s;
}

AttackStep roast(std::string at, std::string technique, std::string as) {
    AttackStep s;
    s.action = AttackStep::Action::roast;
    s.at = std::move(at);
    s.technique = std::move(technique);
    s.as = std::move(as);
    return s;
}

AttackStep collect(std::string at, std::vector<std::string> paths) {
    AttackStep s;
    s.action = AttackStep::Action::collect;
    s.at = std::move(at);
    s.commands = std::move(paths);
    return s;
}

template <typename E, std::size_t N>
E lookup(const std::array<std::pair<const char*, E>, N>& table, std::string_view text, const char* what) {
    for (const auto& [name, v] : table)
        if (text == name) return v;
    throw ScenarioError(std::string("unknown ") + what + ": " + std::string(text));
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<const char*, E>, N>& table, E v) {
    for (const auto& [name, value] : table)
        if (value == v) return name;
    return table[0].first;
}

const std::array<std::pair<const char*, AuthMode>, 4> kAuthModes = {{
    {"kerberos", AuthMode::kerberos}, {"ntlm", AuthMode::ntlm}, {"ptt", AuthMode::ptt}, {"golden", AuthMode::golden}}};
const std::array<std::pair<const char*, AttackStep::Action>, 6> kActions = {{
    {"discovery", AttackStep::Action::discovery},
    {"credential_access", AttackStep::Action::credential_access},
    {"lateral", AttackStep::Action::lateral},
    {"escalate", AttackStep::Action::escalate},
    {"roast", AttackStep::Action::roast},
    {"collect", AttackStep::Action::collect}}};
const std::array<std::pair<const char*, ScenarioCase>, 3> kCases = {{
    {"standard", ScenarioCase::standard}, {"rdp_reconnect", ScenarioCase::rdp_reconnect},
    {"access_types", ScenarioCase::access_types}}};
const std::array<std::pair<const char*, ReconnectVariant>, 4> kVariants = {{
    {"standard", ReconnectVariant::standard}, {"open_window", ReconnectVariant::open_window},
    {"victim_never_disconnects", ReconnectVariant::victim_never_disconnects},
    {"fresh_session", ReconnectVariant::fresh_session}}};

nlohmann::json step_to_json(const AttackStep& s) {
    nlohmann::json j;
    j["action"] = to_string(s.action);
    j["at"] = s.at;
    if (!s.to.empty()) j["to"] = s.to;
    if (s.access != AccessType::Unknown) j["access"] = to_string(s.access);
    if (!s.as.empty()) j["as"] = s.as;
    if (s.action == AttackStep::Action::lateral) j["auth"] = to_string(s.auth);
    if (!s.label.empty()) j["label"] = s.label;
    if (!s.technique.empty()) j["technique"] = s.technique;
    if (!s.commands.empty()) j["commands"] = s.commands;
    if (s.privileged) j["privileged"] = true;
    return j;
}

AttackStep step_from_json(const nlohmann::json& j) {
    AttackStep s;
    s.action = lookup(kActions, j.at("action").get<std::string>(), "step action");
    s.at = j.value("at", "S0");
    s.to = j.value("to", "");
    if (j.contains("access")) s.access = enum_from_string<AccessType>(j.at("access").get<std::string>());
    s.as = j.value("as", "");
    if (j.contains("auth")) s.auth = lookup(kAuthModes, j.at("auth").get<std::string>(), "auth mode");
    s.label = j.value("label", "");
    s.technique = j.value("technique", "");
    s.commands = j.value("commands", std::vector<std::string>{});
    s.privileged = j.value("privileged", false);
    return s;
}

nlohmann::json script_to_json(const AttackScript& a) {
    nlohmann::json j;
    j["kind"] = to_string(a.kind);
    j["foothold_host"] = a.foothold_host;
    j["foothold_user"] = a.foothold_user;
    j["attacker_path"] = a.attacker_path;
    j["stolen_principal"] = a.stolen_principal;
    j["start_hour"] = a.start_hour;
    j["steps"] = nlohmann::json::array();
    for (const auto& s : a.steps) j["steps"].push_back(step_to_json(s));
    return j;
}

AttackScript script_from_json(const nlohmann::json& j) {
    if (j.contains("playbook")) {
        AttackScript a = playbook(enum_from_string<AttackLabel>(j.at("playbook").get<std::string>()));
        a.start_hour = j.value("start_hour", a.start_hour);
        return a;
    }
    AttackScript a;
    a.kind = enum_from_string<AttackLabel>(j.at("kind").get<std::string>());
    a.foothold_host = j.at("foothold_host").get<std::string>();
    a.foothold_user = j.at("foothold_user").get<std::string>();
    a.attacker_path = j.value("attacker_path", std::vector<std::string>{a.foothold_host});
    a.stolen_principal = j.value("stolen_principal", "");
    a.start_hour = j.value("start_hour", 10.0);
    for (const auto& s : j.at("steps")) a.steps.push_back(step_from_json(s));
    return a;
}

nlohmann::json rates_to_json(const BenignRates& r) {
    return {{"share_access", r.share_access},
            {"web_request", r.web_request},
            {"rdp_session", r.rdp_session},
            {"lolbin", r.lolbin},
            {"external_connect", r.external_connect},
            {"local_file", r.local_file},
            {"ntlm_auth", r.ntlm_auth},
            {"system_noise", r.system_noise},
            {"truncation_fraction", r.truncation_fraction},
            {"startup_apps", r.startup_apps}};
}

BenignRates rates_from_json(const nlohmann::json& j) {
    BenignRates r;
    r.share_access = j.value("share_access", r.share_access);
    r.web_request = j.value("web_request", r.web_request);
    r.rdp_session = j.value("rdp_session", r.rdp_session);
    r.lolbin = j.value("lolbin", r.lolbin);
    r.external_connect = j.value("external_connect", r.external_connect);
    r.local_file = j.value("local_file", r.local_file);
    r.ntlm_auth = j.value("ntlm_auth", r.ntlm_auth);
    r.system_noise = j.value("system_noise", r.system_noise);
    r.truncation_fraction = j.value("truncation_fraction", r.truncation_fraction);
    r.startup_apps = j.value("startup_apps", r.startup_apps);
    return r;
}

} // namespace

std::string_view to_string(AuthMode v) { return name_of(kAuthModes, v); }
std::string_view to_string(AttackStep::Action v) { return name_of(kActions, v); }

Directory standard_directory(bool with_ws2, std::size_t user_count) {
    Directory d;
    d.realm = kRealm;
    d.hosts.push_back(make_host("dc", HostRole::dc));
    d.hosts.push_back(make_host("ws1", HostRole::workstation));
    d.hosts.push_back(make_host("exch", HostRole::server));
    d.hosts.push_back(make_host("data", HostRole::server));
    if (with_ws2) d.hosts.push_back(make_host("ws2", HostRole::workstation));
    const std::string second = with_ws2 ? "ws2" : "ws1";

    d.users.push_back(make_user("alice", "ws1"));
    d.users.push_back(make_user("bob", second));
    d.users.push_back(make_user("carol", "ws1"));
    UserEntry dave = make_user("dave", second);
    dave.preauth_required = false;
    d.users.push_back(dave);
    d.users.push_back(make_user("admin1", "ws1", PrivilegeTier::domain_admin));
    UserEntry svc = make_user("svc_sql", "");
    svc.principal.kind = PrincipalKind::service;
    svc.spn = "MSSQLSvc/data." + kDomain + ":1433";
    d.users.push_back(svc);
    for (std::size_t i = d.users.size(); i < user_count; ++i) {
        std::ostringstream name;
        name << "user" << (i < 10 ? "0" : "") << i;
        d.users.push_back(make_user(name.str(), (with_ws2 && i % 2) ? "ws2" : "ws1"));
    }
    return d;
}

ScenarioConfig default_scenario(std::uint64_t seed) {
    ScenarioConfig cfg;
    cfg.seed = seed;
    cfg.directory = standard_directory(false, 20);
    return cfg;
}

AttackScript playbook(AttackLabel kind) {
    AttackScript a;
    a.kind = kind;
    a.foothold_host = "ws1";
    a.foothold_user = "alice";
    switch (kind) {
    case AttackLabel::PassTheHash:
        a.attacker_path = {"ws1", "exch", "data"};
        a.stolen_principal = "bob";
        a.steps = {
            discovery("S0", {"net group \"domain admins\" /domain", "net user /domain", "netstat -ano",
                             "nltest /dclist:corp.local"}),
            lateral("S0", "exch", AccessType::WebRequest, "alice", AuthMode::kerberos, "W"),
            discovery("W", {"whoami /all", "ipconfig /all", "net localgroup administrators"}),
            lateral("S0", "exch", AccessType::SMB, "alice", AuthMode::kerberos, "M"),
            lateral("S0", "exch", AccessType::RDP, "alice", AuthMode::kerberos, "R", true),
            escalate("R", "full", "RF"),
            escalate("RF", "system", "RS"),
            credential("RS", "lsass"),
            lateral("RF", "data", AccessType::SMB, "bob", AuthMode::ntlm, "D"),
            collect("D", {"\\\\data.corp.local\\finance\\q4-ledger.xlsx", "\\\\data.corp.local\\finance\\payroll.csv"}),
        };
        break;
    case AttackLabel::GoldenTicket:
        a.attacker_path = {"ws1", "dc", "ws2"};
        a.stolen_principal = "krbtgt";
        a.steps = {
            discovery("S0", {"net group \"domain admins\" /domain", "nltest /dclist:corp.local"}),
            credential("S0", "lsass"),
            lateral("S0", "dc", AccessType::WinRM, "admin1", AuthMode::kerberos, "W"),
            credential("W", "dcsync"),
            credential("W", "golden", "admin1"),
            lateral("W", "ws2", AccessType::PsExec, "admin1", AuthMode::golden, "P"),
            discovery("P", {"whoami /all", "quser"}),
            collect("P", {"C:\\Users\\bob\\Documents\\roadmap.docx"}),
        };
        break;
    case AttackLabel::PassTheTicket:
        a.attacker_path = {"ws1", "ws2", "data"};
        a.stolen_principal = "bob";
        a.steps = {
            discovery("S0", {"net group \"domain admins\" /domain", "net user bob /domain"}),
            credential("S0", "lsass"),
            lateral("S0", "ws2", AccessType::PsExec, "admin1", AuthMode::kerberos, "P"),
            credential("P", "tickets", "bob"),
            lateral("S0", "data", AccessType::SMB, "bob", AuthMode::ptt, "D"),
            collect("D", {"\\\\data.corp.local\\eng\\design.pdf"}),
        };
        break;
    case AttackLabel::Kerberoasting:
        a.attacker_path = {"ws1", "data"};
        a.stolen_principal = "svc_sql";
        a.steps = {
            discovery("S0", {"setspn -T corp.local -Q */*", "net group \"domain admins\" /domain"}),
            roast("S0", "kerberoast", "svc_sql"),
            lateral("S0", "data", AccessType::WinRM, "svc_sql", AuthMode::kerberos, "W"),
            discovery("W", {"whoami /priv"}),
            collect("W", {"D:\\MSSQL\\Backup\\crm.bak"}),
        };
        break;
    case AttackLabel::AsRepRoasting:
        a.attacker_path = {"ws1", "exch"};
        a.stolen_principal = "dave";
        a.steps = {
            discovery("S0", {"net user /domain", "net group \"domain users\" /domain"}),
            roast("S0", "asreproast", "dave"),
            lateral("S0", "exch", AccessType::RDP, "dave", AuthMode::kerberos, "R"),
            discovery("R", {"whoami", "ipconfig /all"}),
            collect("R", {"C:\\Users\\dave\\Documents\\mailbox-export.pst"}),
        };
        break;
    case AttackLabel::SilverTicket:
    case AttackLabel::Unknown:
        throw ScenarioError("no built-in playbook for " + std::string(to_string(kind)));
    }
    return a;
}

ScenarioConfig playbook_scenario(AttackLabel kind, std::uint64_t seed) {
    ScenarioConfig cfg;
    cfg.seed = seed;
    bool ws2 = kind == AttackLabel::GoldenTicket || kind == AttackLabel::PassTheTicket;
    cfg.directory = standard_directory(ws2, 20);
    cfg.attacks.push_back(playbook(kind));
    return cfg;
}

void validate_config(const ScenarioConfig& cfg) {
    const Directory& d = cfg.directory;
    std::size_t dcs = 0;
    std::set<std::string> fqdns, aliases, names;
    for (const auto& h : d.hosts) {
        if (h.role == HostRole::dc) ++dcs;
        if (h.host.fqdn.empty()) throw ScenarioError("host with empty fqdn");
        if (!fqdns.insert(h.host.fqdn.str()).second) throw ScenarioError("duplicate host fqdn: " + h.host.fqdn.str());
        if (!aliases.insert(h.alias).second) throw ScenarioError("duplicate host alias: " + h.alias);
        if (h.host.is_domain_controller != (h.role == HostRole::dc))
            throw ScenarioError("host role and domain controller flag disagree: " + h.alias);
    }
    if (dcs == 0) throw ScenarioError("configuration has no domain controller");
    for (const auto& u : d.users) {
        if (u.principal.name.empty()) throw ScenarioError("user with empty name");
        if (!names.insert(u.principal.name.str()).second)
            throw ScenarioError("duplicate user: " + u.principal.name.str());
        if (!u.home.empty() && !aliases.count(u.home))
            throw ScenarioError("user " + u.principal.name.str() + " has unknown home host " + u.home);
    }
    if (!(cfg.duration_hours > 0)) throw ScenarioError("duration must be positive");
    const BenignRates& r = cfg.rates;
    for (double v : {r.share_access, r.web_request, r.rdp_session, r.lolbin, r.external_connect, r.local_file,
                     r.ntlm_auth, r.system_noise})
        if (v < 0) throw ScenarioError("benign rates must be non-negative");
    if (r.truncation_fraction < 0 || r.truncation_fraction > 1)
        throw ScenarioError("truncation fraction must lie in [0, 1]");
    if (r.startup_apps < 0) throw ScenarioError("startup_apps must be non-negative");
    for (const auto& a : cfg.attacks) {
        if (!aliases.count(a.foothold_host)) throw ScenarioError("unknown foothold host: " + a.foothold_host);
        if (!names.count(a.foothold_user)) throw ScenarioError("unknown foothold user: " + a.foothold_user);
        if (!a.attacker_path.empty() && a.attacker_path.front() != a.foothold_host)
            throw ScenarioError("attacker path must start at the foothold host");
        for (const auto& s : a.steps) {
            if (s.action == AttackStep::Action::lateral) {
                if (!aliases.count(s.to)) throw ScenarioError("lateral step to unknown host: " + s.to);
                if (!names.count(s.as)) throw ScenarioError("lateral step as unknown user: " + s.as);
                if (s.access == AccessType::Unknown) throw ScenarioError("lateral step needs an access type");
                if (s.label.empty()) throw ScenarioError("lateral step needs a destination label");
            }
        }
    }
}

nlohmann::json scenario_to_json(const ScenarioConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["start_time"] = cfg.start_time;
    j["duration_hours"] = cfg.duration_hours;
    j["directory"] = cfg.directory.to_json();
    j["rates"] = rates_to_json(cfg.rates);
    j["attacks"] = nlohmann::json::array();
    for (const auto& a : cfg.attacks) j["attacks"].push_back(script_to_json(a));
    j["c2_address"] = cfg.c2_address;
    j["case"] = name_of(kCases, cfg.scenario_case);
    j["reconnect_variant"] = name_of(kVariants, cfg.reconnect_variant);
    return j;
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    try {
        ScenarioConfig cfg;
        cfg.seed = j.value("seed", std::uint64_t{1});
        cfg.start_time = j.value("start_time", cfg.start_time);
        cfg.duration_hours = j.value("duration_hours", cfg.duration_hours);
        if (j.contains("directory")) {
            cfg.directory = Directory::from_json(j.at("directory"));
        } else {
            const auto topo = j.value("topology", nlohmann::json::object());
            cfg.directory = standard_directory(topo.value("with_ws2", false), topo.value("users", std::size_t{20}));
        }
        if (j.contains("rates")) cfg.rates = rates_from_json(j.at("rates"));
        for (const auto& a : j.value("attacks", nlohmann::json::array())) cfg.attacks.push_back(script_from_json(a));
        cfg.c2_address = j.value("c2_address", cfg.c2_address);
        cfg.scenario_case = lookup(kCases, j.value("case", "standard"), "scenario case");
        cfg.reconnect_variant = lookup(kVariants, j.value("reconnect_variant", "standard"), "reconnect variant");
        return cfg;
    } catch (const nlohmann::json::exception& ex) {
        throw ScenarioError(std::string("bad scenario config: ") + ex.what());
    } catch (const std::invalid_argument& ex) {
        throw ScenarioError(std::string("bad scenario config: ") + ex.what());
    }
}

ScenarioConfig load_scenario_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot read config " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ScenarioError("config is not valid JSON: " + path.string());
    return scenario_from_json(j);
}

} // namespace adtrace
