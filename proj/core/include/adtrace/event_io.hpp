#pragma once

#include "adtrace/event.hpp"

#include <string>
#include <string_view>

#include <json.hpp>

namespace adtrace {

inline constexpr int kSchemaVersion = 1;

/// Thrown when a record line is not a well-formed event.
class RecordError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const Event& e);
/// Throws RecordError for structural problems (missing/mistyped fields).
Event from_json(const nlohmann::json& j);

/// Canonical one-line encoding: keys sorted, no whitespace.
std::string serialize_record(const Event& e);
Event parse_record(std::string_view line);

/// A line of the form {"schema":N}; such lines open an event file.
bool is_header_record(const nlohmann::json& j);
std::string header_record();

nlohmann::json host_to_json(const HostId& h);
HostId host_from_json(const nlohmann::json& j);
nlohmann::json principal_to_json(const PrincipalId& p);
PrincipalId principal_from_json(const nlohmann::json& j);
nlohmann::json session_to_json(const LogonSessionKey& k);
LogonSessionKey session_from_json(const nlohmann::json& j);
nlohmann::json process_to_json(const ProcessRef& p);
ProcessRef process_from_json(const nlohmann::json& j);

} // namespace adtrace
