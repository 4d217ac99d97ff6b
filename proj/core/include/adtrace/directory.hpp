#pragma once

#include "adtrace/event.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace adtrace {

enum class HostRole : std::uint8_t { dc, server, workstation };
enum class PrivilegeTier : std::uint8_t { user, domain_admin };

std::string_view to_string(HostRole v);
std::string_view to_string(PrivilegeTier v);
HostRole host_role_from_string(std::string_view text);
PrivilegeTier privilege_tier_from_string(std::string_view text);

struct HostEntry {
    std::string alias;  // short name used in configs and playbooks, e.g. "ws1"
    HostId host;
    HostRole role = HostRole::workstation;
};

struct UserEntry {
    PrincipalId principal;
    PrivilegeTier tier = PrivilegeTier::user;
    std::string home;                // alias of the user's workstation
    bool preauth_required = true;    // false makes the account AS-REP roastable
    std::optional<std::string> spn;  // service accounts only
};

/// Hosts and accounts of one domain.
struct Directory {
    std::string realm;
    std::vector<HostEntry> hosts;
    std::vector<UserEntry> users;

    const HostEntry* host(std::string_view alias) const;
    const HostEntry* host_by_fqdn(Symbol fqdn) const;
    const UserEntry* user(std::string_view name) const;
    bool is_domain_admin(const PrincipalId& p) const;
    const HostEntry& domain_controller() const;

    nlohmann::json to_json() const;
    /// Throws std::invalid_argument on malformed input.
    static Directory from_json(const nlohmann::json& j);
};

} // namespace adtrace
