#pragma once

#include "adtrace/event_io.hpp"
#include "adtrace/log_store.hpp"
#include "adtrace/scenario.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <random>
#include <string>

namespace fx {

using namespace adtrace;

inline HostId host(std::string_view fqdn, bool dc = false, bool joined = true) {
    return HostId{Symbol(fqdn), dc, joined};
}

inline PrincipalId user(std::string_view name, PrincipalKind kind = PrincipalKind::user) {
    return PrincipalId{Symbol("CORP"), Symbol(name), kind, Symbol()};
}

inline LogonSessionKey session(const HostId& h, std::uint64_t id, std::uint32_t epoch = 1) {
    return LogonSessionKey{h, epoch, id};
}

inline ProcessRef proc(const HostId& h, std::uint32_t pid, Timestamp start, std::string_view image) {
    return ProcessRef{h, pid, start, Symbol(image)};
}

inline Event spawn(std::uint64_t id, Timestamp t, const LogonSessionKey& s, const ProcessRef& parent,
                   const ProcessRef& child, std::string_view cmd = "") {
    SystemEvent e;
    e.time = t;
    e.host = s.host;
    e.session = s;
    e.kind = SystemKind::ProcessCreate;
    e.subject_process = parent;
    e.object.kind = ObjectKind::process;
    e.object.process = child;
    if (!cmd.empty()) e.command_line = Symbol(cmd);
    return Event{id, e, {}};
}

inline Event file_event(std::uint64_t id, Timestamp t, const LogonSessionKey& s, const ProcessRef& p,
                        std::string_view path, SystemKind kind = SystemKind::FileRead) {
    SystemEvent e;
    e.time = t;
    e.host = s.host;
    e.session = s;
    e.kind = kind;
    e.subject_process = p;
    e.object.kind = ObjectKind::file;
    e.object.path = Symbol(path);
    return Event{id, e, {}};
}

inline Event logon(std::uint64_t id, Timestamp t, const LogonSessionKey& s, const PrincipalId& who,
                   LogonType type = LogonType::interactive, LogonKind kind = LogonKind::logon) {
    LogonEvent l;
    l.time = t;
    l.host = s.host;
    l.principal = who;
    l.session = s;
    l.logon_type = type;
    l.kind = kind;
    return Event{id, l, {}};
}

inline Event auth(std::uint64_t id, Timestamp t, AuthKind kind, const PrincipalId& who, const HostId& client,
                  const HostId& dc) {
    AuthEvent a;
    a.time = t;
    a.kind = kind;
    a.client = who;
    a.client_host = client;
    a.dc_host = dc;
    if (kind != AuthKind::AsRequest && kind != AuthKind::AsReply) a.target_service = Symbol("cifs/data.corp.local");
    return Event{id, a, {}};
}

inline void fill(EventStore& store, const std::vector<Event>& events) {
    for (const auto& e : events) store.add(e);
    store.seal();
}

inline void fill(EventStore& store, const ForgeOutput& out) { fill(store, out.events); }

/// Forge outputs are reused across test cases; forging is deterministic so
/// sharing is safe.
inline const ForgeOutput& playbook_data(AttackLabel kind, std::uint64_t seed) {
    static std::mutex mu;
    static std::map<std::pair<AttackLabel, std::uint64_t>, ForgeOutput> cache;
    std::lock_guard lock(mu);
    auto key = std::make_pair(kind, seed);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, forge(playbook_scenario(kind, seed))).first;
    return it->second;
}

inline ScenarioConfig short_benign(std::uint64_t seed, double hours = 2.0) {
    ScenarioConfig cfg = default_scenario(seed);
    cfg.duration_hours = hours;
    return cfg;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(std::string_view tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("adtrace-" + std::string(tag) + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace fx
