#include "adtrace/event_io.hpp"

#include <set>

namespace adtrace {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end()) throw RecordError(std::string("missing field '") + name + "'");
    return *it;
}

std::string string_field(const json& j, const char* name) {
    const json& v = field(j, name);
    if (!v.is_string()) throw RecordError(std::string("field '") + name + "' must be a string");
    return v.get<std::string>();
}

template <typename T>
T int_field(const json& j, const char* name) {
    const json& v = field(j, name);
    if (!v.is_number_integer()) throw RecordError(std::string("field '") + name + "' must be an integer");
    return v.get<T>();
}

bool bool_field(const json& j, const char* name) {
    const json& v = field(j, name);
    if (!v.is_boolean()) throw RecordError(std::string("field '") + name + "' must be a boolean");
    return v.get<bool>();
}

template <typename E>
E enum_field(const json& j, const char* name) {
    try {
        return enum_from_string<E>(string_field(j, name));
    } catch (const std::invalid_argument& ex) {
        throw RecordError(ex.what());
    }
}

std::optional<Symbol> optional_symbol(const json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw RecordError(std::string("field '") + name + "' must be a string");
    return Symbol(it->get<std::string>());
}

std::optional<std::uint16_t> optional_port(const json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number_unsigned() || it->get<std::uint64_t>() > 65535)
        throw RecordError(std::string("field '") + name + "' must be a port number");
    return static_cast<std::uint16_t>(it->get<std::uint64_t>());
}

void put(json& j, const char* name, const std::optional<Symbol>& v) {
    if (v) j[name] = v->str();
}

void put(json& j, const char* name, const std::optional<std::uint16_t>& v) {
    if (v) j[name] = *v;
}

void require_object(const json& j, const char* what) {
    if (!j.is_object()) throw RecordError(std::string(what) + " must be an object");
}

} // namespace

json host_to_json(const HostId& h) {
    return json{{"fqdn", h.fqdn.str()},
                {"is_domain_controller", h.is_domain_controller},
                {"is_domain_joined", h.is_domain_joined}};
}

HostId host_from_json(const json& j) {
    require_object(j, "host");
    HostId h;
    h.fqdn = Symbol(string_field(j, "fqdn"));
    h.is_domain_controller = bool_field(j, "is_domain_controller");
    h.is_domain_joined = bool_field(j, "is_domain_joined");
    return h;
}

json principal_to_json(const PrincipalId& p) {
    json j{{"realm", p.realm.str()}, {"name", p.name.str()}, {"kind", to_string(p.kind)}};
    if (!p.parent.empty()) j["parent"] = p.parent.str();
    return j;
}

PrincipalId principal_from_json(const json& j) {
    require_object(j, "principal");
    PrincipalId p;
    p.realm = Symbol(string_field(j, "realm"));
    p.name = Symbol(string_field(j, "name"));
    p.kind = enum_field<PrincipalKind>(j, "kind");
    if (auto parent = optional_symbol(j, "parent")) p.parent = *parent;
    return p;
}

json session_to_json(const LogonSessionKey& k) {
    return json{{"host", host_to_json(k.host)},
                {"boot_epoch", k.boot_epoch},
                {"local_id", format_logon_id(k.local_id)}};
}

LogonSessionKey session_from_json(const json& j) {
    require_object(j, "session");
    LogonSessionKey k;
    k.host = host_from_json(field(j, "host"));
    k.boot_epoch = int_field<std::uint32_t>(j, "boot_epoch");
    try {
        k.local_id = parse_logon_id(string_field(j, "local_id"));
    } catch (const std::invalid_argument& ex) {
        throw RecordError(ex.what());
    }
    return k;
}

json process_to_json(const ProcessRef& p) {
    return json{{"host", host_to_json(p.host)},
                {"pid", p.pid},
                {"start_time", p.start_time},
                {"image_path", p.image_path.str()}};
}

ProcessRef process_from_json(const json& j) {
    require_object(j, "process");
    ProcessRef p;
    p.host = host_from_json(field(j, "host"));
    p.pid = int_field<std::uint32_t>(j, "pid");
    p.start_time = int_field<Timestamp>(j, "start_time");
    p.image_path = Symbol(string_field(j, "image_path"));
    return p;
}

namespace {

json object_to_json(const ObjectRef& o) {
    json j{{"kind", to_string(o.kind)}};
    switch (o.kind) {
    case ObjectKind::process:
        if (o.process) j["process"] = process_to_json(*o.process);
        break;
    case ObjectKind::file:
    case ObjectKind::registry:
        j["path"] = o.path.str();
        break;
    case ObjectKind::socket:
        j["remote_address"] = o.remote_address.str();
        j["remote_port"] = o.remote_port;
        j["local_port"] = o.local_port;
        break;
    }
    return j;
}

ObjectRef object_from_json(const json& j) {
    require_object(j, "object");
    ObjectRef o;
    o.kind = enum_field<ObjectKind>(j, "kind");
    switch (o.kind) {
    case ObjectKind::process:
        if (auto it = j.find("process"); it != j.end()) o.process = process_from_json(*it);
        break;
    case ObjectKind::file:
    case ObjectKind::registry:
        o.path = Symbol(string_field(j, "path"));
        break;
    case ObjectKind::socket:
        o.remote_address = Symbol(string_field(j, "remote_address"));
        o.remote_port = int_field<std::uint16_t>(j, "remote_port");
        o.local_port = int_field<std::uint16_t>(j, "local_port");
        break;
    }
    return o;
}

json body_to_json(const AuthEvent& a) {
    json j{{"type", "auth"},
           {"time", a.time},
           {"kind", to_string(a.kind)},
           {"client", principal_to_json(a.client)},
           {"client_host", host_to_json(a.client_host)},
           {"dc_host", host_to_json(a.dc_host)},
           {"ticket_encryption", to_string(a.ticket_encryption)},
           {"outcome", to_string(a.outcome)}};
    put(j, "target_service", a.target_service);
    put(j, "logon_guid", a.logon_guid);
    put(j, "tgt_id", a.tgt_id);
    put(j, "service_ticket_id", a.service_ticket_id);
    put(j, "client_port", a.client_port);
    return j;
}

json body_to_json(const LogonEvent& l) {
    json j{{"type", "logon"},
           {"time", l.time},
           {"host", host_to_json(l.host)},
           {"principal", principal_to_json(l.principal)},
           {"session", session_to_json(l.session)},
           {"logon_type", to_string(l.logon_type)},
           {"token_elevation", to_string(l.token_elevation)},
           {"integrity_level", to_string(l.integrity_level)},
           {"kind", to_string(l.kind)}};
    put(j, "logon_guid", l.logon_guid);
    if (l.source_host) j["source_host"] = host_to_json(*l.source_host);
    put(j, "source_port", l.source_port);
    return j;
}

json body_to_json(const SystemEvent& s) {
    json j{{"type", "system"},
           {"time", s.time},
           {"host", host_to_json(s.host)},
           {"session", session_to_json(s.session)},
           {"kind", to_string(s.kind)},
           {"subject_process", process_to_json(s.subject_process)},
           {"object", object_to_json(s.object)}};
    put(j, "command_line", s.command_line);
    return j;
}

AuthEvent auth_from_json(const json& j) {
    AuthEvent a;
    a.time = int_field<Timestamp>(j, "time");
    a.kind = enum_field<AuthKind>(j, "kind");
    a.client = principal_from_json(field(j, "client"));
    a.client_host = host_from_json(field(j, "client_host"));
    a.dc_host = host_from_json(field(j, "dc_host"));
    a.ticket_encryption = enum_field<TicketEncryption>(j, "ticket_encryption");
    a.outcome = enum_field<Outcome>(j, "outcome");
    a.target_service = optional_symbol(j, "target_service");
    a.logon_guid = optional_symbol(j, "logon_guid");
    a.tgt_id = optional_symbol(j, "tgt_id");
    a.service_ticket_id = optional_symbol(j, "service_ticket_id");
    a.client_port = optional_port(j, "client_port");
    return a;
}

LogonEvent logon_from_json(const json& j) {
    LogonEvent l;
    l.time = int_field<Timestamp>(j, "time");
    l.host = host_from_json(field(j, "host"));
    l.principal = principal_from_json(field(j, "principal"));
    l.session = session_from_json(field(j, "session"));
    l.logon_type = enum_field<LogonType>(j, "logon_type");
    l.token_elevation = enum_field<TokenElevation>(j, "token_elevation");
    l.integrity_level = enum_field<IntegrityLevel>(j, "integrity_level");
    l.kind = enum_field<LogonKind>(j, "kind");
    l.logon_guid = optional_symbol(j, "logon_guid");
    if (auto it = j.find("source_host"); it != j.end() && !it->is_null())
        l.source_host = host_from_json(*it);
    l.source_port = optional_port(j, "source_port");
    return l;
}

SystemEvent system_from_json(const json& j) {
    SystemEvent s;
    s.time = int_field<Timestamp>(j, "time");
    s.host = host_from_json(field(j, "host"));
    s.session = session_from_json(field(j, "session"));
    s.kind = enum_field<SystemKind>(j, "kind");
    s.subject_process = process_from_json(field(j, "subject_process"));
    s.object = object_from_json(field(j, "object"));
    s.command_line = optional_symbol(j, "command_line");
    return s;
}

} // namespace

json to_json(const Event& e) {
    json j = std::visit([](const auto& body) { return body_to_json(body); }, e.body);
    j["id"] = e.id;
    if (e.extra.is_object())
        for (auto it = e.extra.begin(); it != e.extra.end(); ++it)
            if (!j.contains(it.key())) j[it.key()] = it.value();
    return j;
}

Event from_json(const json& j) {
    require_object(j, "record");
    Event e;
    e.id = int_field<std::uint64_t>(j, "id");
    const std::string type = string_field(j, "type");
    if (type == "auth")
        e.body = auth_from_json(j);
    else if (type == "logon")
        e.body = logon_from_json(j);
    else if (type == "system")
        e.body = system_from_json(j);
    else
        throw RecordError("unknown record type: " + type);

    // everything the schema does not name is carried along untouched
    static const std::set<std::string, std::less<>> auth_keys = {
        "id", "type", "time", "kind", "client", "client_host", "dc_host", "ticket_encryption",
        "outcome", "target_service", "logon_guid", "tgt_id", "service_ticket_id", "client_port"};
    static const std::set<std::string, std::less<>> logon_keys = {
        "id", "type", "time", "host", "principal", "session", "logon_type", "token_elevation",
        "integrity_level", "kind", "logon_guid", "source_host", "source_port"};
    static const std::set<std::string, std::less<>> system_keys = {
        "id", "type", "time", "host", "session", "kind", "subject_process", "object",
        "command_line"};
    const auto& keys = type == "auth" ? auth_keys : type == "logon" ? logon_keys : system_keys;
    {
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (keys.contains(it.key())) continue;
            if (!e.extra.is_object()) e.extra = json::object();
            e.extra[it.key()] = it.value();
        }
    }
    return e;
}

std::string serialize_record(const Event& e) { return to_json(e).dump(); }

Event parse_record(std::string_view line) {
    json j;
    try {
        j = json::parse(line.begin(), line.end());
    } catch (const json::parse_error& ex) {
        throw RecordError(std::string("malformed line: ") + ex.what());
    }
    try {
        return from_json(j);
    } catch (const json::exception& ex) {
        throw RecordError(ex.what());
    }
}

bool is_header_record(const json& j) {
    return j.is_object() && j.size() == 1 && j.contains("schema");
}

std::string header_record() { return json{{"schema", kSchemaVersion}}.dump(); }

} // namespace adtrace
