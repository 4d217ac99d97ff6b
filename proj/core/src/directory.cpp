#include "adtrace/directory.hpp"

#include "adtrace/event_io.hpp"

#include <stdexcept>

namespace adtrace {

std::string_view to_string(HostRole v) {
    switch (v) {
    case HostRole::dc: return "dc";
    case HostRole::server: return "server";
    case HostRole::workstation: return "workstation";
    }
    return "workstation";
}

std::string_view to_string(PrivilegeTier v) {
    return v == PrivilegeTier::domain_admin ? "domain_admin" : "user";
}

HostRole host_role_from_string(std::string_view text) {
    if (text == "dc") return HostRole::dc;
    if (text == "server") return HostRole::server;
    if (text == "workstation") return HostRole::workstation;
    throw std::invalid_argument("unknown host role: " + std::string(text));
}

PrivilegeTier privilege_tier_from_string(std::string_view text) {
    if (text == "user") return PrivilegeTier::user;
    if (text == "domain_admin") return PrivilegeTier::domain_admin;
    throw std::invalid_argument("unknown privilege tier: " + std::string(text));
}

const HostEntry* Directory::host(std::string_view alias) const {
    for (const auto& h : hosts)
        if (h.alias == alias) return &h;
    return nullptr;
}

const HostEntry* Directory::host_by_fqdn(Symbol fqdn) const {
    for (const auto& h : hosts)
        if (h.host.fqdn == fqdn) return &h;
    return nullptr;
}

const UserEntry* Directory::user(std::string_view name) const {
    for (const auto& u : users)
        if (u.principal.name.view() == name) return &u;
    return nullptr;
}

bool Directory::is_domain_admin(const PrincipalId& p) const {
    for (const auto& u : users)
        if (u.principal == p) return u.tier == PrivilegeTier::domain_admin;
    return false;
}

const HostEntry& Directory::domain_controller() const {
    for (const auto& h : hosts)
        if (h.role == HostRole::dc) return h;
    throw std::invalid_argument("directory has no domain controller");
}

nlohmann::json Directory::to_json() const {
    nlohmann::json j;
    j["realm"] = realm;
    j["hosts"] = nlohmann::json::array();
    for (const auto& h : hosts) {
        auto e = host_to_json(h.host);
        e["alias"] = h.alias;
        e["role"] = to_string(h.role);
        j["hosts"].push_back(std::move(e));
    }
    j["users"] = nlohmann::json::array();
    for (const auto& u : users) {
        auto e = principal_to_json(u.principal);
        e["tier"] = to_string(u.tier);
        e["home"] = u.home;
        e["preauth_required"] = u.preauth_required;
        if (u.spn) e["spn"] = *u.spn;
        j["users"].push_back(std::move(e));
    }
    return j;
}

Directory Directory::from_json(const nlohmann::json& j) {
    try {
        Directory d;
        d.realm = j.at("realm").get<std::string>();
        for (const auto& e : j.at("hosts")) {
            HostEntry h;
            h.host = host_from_json(e);
            h.alias = e.at("alias").get<std::string>();
            h.role = host_role_from_string(e.at("role").get<std::string>());
            d.hosts.push_back(std::move(h));
        }
        for (const auto& e : j.at("users")) {
            UserEntry u;
            u.principal = principal_from_json(e);
            u.tier = privilege_tier_from_string(e.at("tier").get<std::string>());
            u.home = e.value("home", "");
            u.preauth_required = e.value("preauth_required", true);
            if (e.contains("spn")) u.spn = e.at("spn").get<std::string>();
            d.users.push_back(std::move(u));
        }
        return d;
    } catch (const nlohmann::json::exception& ex) {
        throw std::invalid_argument(std::string("bad directory: ") + ex.what());
    } catch (const RecordError& ex) {
        throw std::invalid_argument(std::string("bad directory: ") + ex.what());
    }
}

} // namespace adtrace
