#include "adtrace/scenario.hpp"

#include "adtrace/digest.hpp"
#include "adtrace/event_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace adtrace {

namespace {

constexpr Timestamp kSecond = 1000;
constexpr Timestamp kMinute = 60 * kSecond;
constexpr Timestamp kHour = 60 * kMinute;
constexpr Timestamp kTgtRenewAfter = 9 * kHour;

const std::string kSys32 = "C:\\Windows\\System32\\";

// Distribution helpers are spelled out so output does not depend on the
// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    std::uint64_t next() { return engine_(); }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    std::int64_t between(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(next() % static_cast<std::uint64_t>(hi - lo + 1));
    }
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }
    bool chance(double p) { return uniform() < p; }
    template <typename T>
    const T& pick(const std::vector<T>& v) { return v[next() % v.size()]; }

private:
    std::mt19937_64 engine_;
};

std::string hex(std::uint64_t v, int width) {
    static const char* digits = "0123456789abcdef";
    std::string out(static_cast<std::size_t>(width), '0');
    for (int i = width - 1; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return out;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string image_for_command(const std::string& cmd) {
    std::string token = cmd.substr(0, cmd.find(' '));
    if (token.find('\\') != std::string::npos) return token;
    if (token.find('.') == std::string::npos) token += ".exe";
    return kSys32 + token;
}

std::uint16_t service_port(AccessType t) {
    switch (t) {
    case AccessType::RDP: return 3389;
    case AccessType::SSH: return 22;
    case AccessType::WinRM: return 5985;
    case AccessType::WMI:
    case AccessType::RPC: return 135;
    case AccessType::PsExec:
    case AccessType::SMB: return 445;
    case AccessType::WebRequest: return 443;
    case AccessType::Unknown: break;
    }
    return 0;
}

std::string service_class(AccessType t) {
    switch (t) {
    case AccessType::RDP: return "TERMSRV";
    case AccessType::SSH: return "host";
    case AccessType::WinRM:
    case AccessType::WebRequest: return "HTTP";
    case AccessType::WMI:
    case AccessType::RPC: return "RPCSS";
    case AccessType::PsExec:
    case AccessType::SMB: return "cifs";
    case AccessType::Unknown: break;
    }
    return "host";
}

struct HostState {
    const HostEntry* entry = nullptr;
    HostId id;
    std::uint32_t boot_epoch = 1;
    std::uint64_t next_local = 0;
    std::uint32_t next_pid = 0;
    std::uint32_t port_cursor = 0;
    LogonSessionKey sys, netsvc, localsvc;
    ProcessRef system, smss, wininit, services, lsass, winlogon;
    ProcessRef svc_netsvcs, svc_dcom, svc_network, svc_local, wmiprvse;
    std::optional<ProcessRef> w3wp, sshd;
    std::uint32_t ssh_counter = 0;
};

/// A session as seen by whoever acts in it. `key` is what the host records,
/// `truth` who really owns the activity, `primary` the cluster it belongs to.
struct Session {
    HostState* host = nullptr;
    LogonSessionKey key;
    LogonSessionKey truth;
    LogonSessionKey primary;
    PrincipalId principal;
    TokenElevation elevation = TokenElevation::default_token;
    IntegrityLevel integrity = IntegrityLevel::medium;
    std::optional<ProcessRef> cursor;
    std::optional<LogonSessionKey> full_twin;
    std::optional<ProcessRef> explorer;
    std::vector<ProcessRef> apps;
};

struct Access {
    Session session;
    std::size_t logon_index = 0;
    std::uint16_t source_port = 0;
    std::vector<std::size_t> auth_indices;
    bool completed = true;
};

struct TgtRecord {
    Symbol tgt;
    Timestamp issued = 0;
};

class World {
public:
    explicit World(const ScenarioConfig& cfg)
        : cfg_(cfg),
          dir_(cfg.directory),
          rng_(cfg.seed),
          attack_rng_(splitmix(cfg.seed ^ 0x5eed5eedULL)),
          end_(cfg.start_time + static_cast<Timestamp>(cfg.duration_hours * kHour)) {
        validate_config(cfg);
        hosts_.reserve(dir_.hosts.size());
        std::uint64_t salt = splitmix(cfg.seed);
        for (const auto& h : dir_.hosts) {
            HostState s;
            s.entry = &h;
            s.id = h.host;
            salt = splitmix(salt);
            s.next_local = 0x10000 + ((salt & 0xfff) << 8);
            s.next_pid = 600 + static_cast<std::uint32_t>((salt >> 16) & 0x3ff) * 4;
            s.port_cursor = static_cast<std::uint32_t>((salt >> 32) % 4000);
            hosts_.push_back(std::move(s));
        }
        dc_ = &host_for(dir_.domain_controller().alias);
    }

    // ----- infrastructure -----------------------------------------------------

    HostState& host_for(std::string_view alias) {
        for (auto& h : hosts_)
            if (h.entry->alias == alias) return h;
        throw ScenarioError("unknown host alias: " + std::string(alias));
    }

    const UserEntry& user_for(std::string_view name) const {
        const UserEntry* u = dir_.user(name);
        if (!u) throw ScenarioError("unknown account: " + std::string(name));
        return *u;
    }

    Timestamp start() const { return cfg_.start_time; }
    Timestamp end() const { return end_; }
    Rng& rng() { return attack_mode_ ? attack_rng_ : rng_; }
    void set_attack_mode(bool on) { attack_mode_ = on; }
    GroundTruth& truth() { return truth_; }

    std::size_t emit(EventBody body) {
        events_.push_back(Event{0, std::move(body), {}});
        attack_.push_back(attack_mode_ ? 1 : 0);
        return events_.size() - 1;
    }

    std::string fresh_guid() {
        std::uint64_t a = splitmix(cfg_.seed * 0x100000001b3ULL + ++counter_);
        std::uint64_t b = splitmix(a);
        return "{" + hex(a >> 32, 8) + "-" + hex((a >> 16) & 0xffff, 4) + "-" + hex(a & 0xffff, 4) +
               "-" + hex(b >> 48, 4) + "-" + hex(b & 0xffffffffffffULL, 12) + "}";
    }
    Symbol fresh_ticket(const char* prefix) {
        return Symbol(std::string(prefix) + hex(splitmix(cfg_.seed * 0x9e37ULL + ++counter_), 16));
    }

    LogonSessionKey new_session_key(HostState& h) {
        h.next_local += 0x1d + (h.next_local & 0x7);
        return LogonSessionKey{h.id, h.boot_epoch, h.next_local};
    }

    ProcessRef new_process(HostState& h, Timestamp t, const std::string& image) {
        ProcessRef p{h.id, h.next_pid, t, Symbol(image)};
        h.next_pid += 4;
        return p;
    }

    std::uint16_t next_port(HostState& h) {
        h.port_cursor = (h.port_cursor + 1) % (65535 - 49152);
        return static_cast<std::uint16_t>(49152 + h.port_cursor);
    }

    // ----- raw emitters -------------------------------------------------------

    std::size_t system_event(Timestamp t, HostState& h, const LogonSessionKey& session, SystemKind kind,
                             const ProcessRef& subject, ObjectRef object,
                             std::optional<std::string> command_line = std::nullopt) {
        SystemEvent s;
        s.time = t;
        s.host = h.id;
        s.session = session;
        s.kind = kind;
        s.subject_process = subject;
        s.object = std::move(object);
        if (command_line) s.command_line = Symbol(*command_line);
        return emit(std::move(s));
    }

    static ObjectRef process_object(const ProcessRef& p) {
        ObjectRef o;
        o.kind = ObjectKind::process;
        o.process = p;
        return o;
    }
    static ObjectRef path_object(ObjectKind kind, const std::string& path) {
        ObjectRef o;
        o.kind = kind;
        o.path = Symbol(path);
        return o;
    }

    ProcessRef raw_spawn(Timestamp t, HostState& h, const LogonSessionKey& child_session,
                         const ProcessRef& parent, const std::string& image,
                         std::optional<std::string> cmd = std::nullopt, std::size_t* index = nullptr) {
        ProcessRef child = new_process(h, t, image);
        std::size_t i = system_event(t, h, child_session, SystemKind::ProcessCreate, parent,
                                     process_object(child), std::move(cmd));
        if (index) *index = i;
        return child;
    }

    std::uint16_t raw_connect(Timestamp t, HostState& h, const LogonSessionKey& session,
                              const ProcessRef& proc, const std::string& remote, std::uint16_t port,
                              std::size_t* index = nullptr) {
        ObjectRef o;
        o.kind = ObjectKind::socket;
        o.remote_address = Symbol(remote);
        o.remote_port = port;
        o.local_port = next_port(h);
        std::uint16_t local = o.local_port;
        std::size_t i = system_event(t, h, session, SystemKind::NetworkConnect, proc, std::move(o));
        if (index) *index = i;
        return local;
    }

    std::size_t logon_event(Timestamp t, HostState& h, const PrincipalId& who, const LogonSessionKey& key,
                            LogonType type, LogonKind kind, std::optional<Symbol> guid = std::nullopt,
                            std::optional<HostId> source = std::nullopt,
                            std::optional<std::uint16_t> source_port = std::nullopt,
                            TokenElevation elevation = TokenElevation::default_token,
                            IntegrityLevel integrity = IntegrityLevel::medium) {
        LogonEvent l;
        l.time = t;
        l.host = h.id;
        l.principal = who;
        l.session = key;
        l.logon_type = type;
        l.kind = kind;
        l.logon_guid = guid;
        l.source_host = std::move(source);
        l.source_port = source_port;
        l.token_elevation = elevation;
        l.integrity_level = integrity;
        return emit(std::move(l));
    }

    std::size_t auth_event(Timestamp t, AuthKind kind, const PrincipalId& client, HostState& client_host,
                           std::optional<std::string> target, std::optional<Symbol> guid,
                           std::optional<Symbol> tgt, std::optional<Symbol> st,
                           std::optional<std::uint16_t> port,
                           TicketEncryption enc = TicketEncryption::aes) {
        AuthEvent a;
        a.time = t;
        a.kind = kind;
        a.client = client;
        a.client_host = client_host.id;
        a.dc_host = dc_->id;
        if (target) a.target_service = Symbol(*target);
        a.logon_guid = guid;
        a.tgt_id = tgt;
        a.service_ticket_id = st;
        a.client_port = port;
        a.ticket_encryption = enc;
        return emit(std::move(a));
    }

    // ----- session-aware emitters (record reassignment truth) ---------------

    void note_reassignment(std::size_t index, const Session& s) {
        if (!(s.key == s.truth)) reassigned_.push_back({index, s.key, s.truth});
    }

    ProcessRef spawn(Timestamp t, Session& s, const ProcessRef& parent, const std::string& image,
                     std::optional<std::string> cmd = std::nullopt, std::size_t* index = nullptr) {
        std::size_t i = 0;
        ProcessRef p = raw_spawn(t, *s.host, s.key, parent, image, std::move(cmd), &i);
        note_reassignment(i, s);
        if (index) *index = i;
        return p;
    }

    void terminate(Timestamp t, Session& s, const ProcessRef& p) {
        note_reassignment(system_event(t, *s.host, s.key, SystemKind::ProcessTerminate, p, process_object(p)), s);
    }

    void file_op(Timestamp t, Session& s, const ProcessRef& p, SystemKind kind, const std::string& path) {
        note_reassignment(system_event(t, *s.host, s.key, kind, p, path_object(ObjectKind::file, path)), s);
    }

    void registry_op(Timestamp t, Session& s, const ProcessRef& p, const std::string& path) {
        note_reassignment(system_event(t, *s.host, s.key, SystemKind::RegistryAccess, p,
                                       path_object(ObjectKind::registry, path)),
                          s);
    }

    void access_process(Timestamp t, Session& s, const ProcessRef& p, const ProcessRef& target) {
        note_reassignment(system_event(t, *s.host, s.key, SystemKind::ProcessAccess, p, process_object(target)), s);
    }

    std::uint16_t connect(Timestamp t, Session& s, const ProcessRef& p, const std::string& remote,
                          std::uint16_t port) {
        std::size_t i = 0;
        std::uint16_t local = raw_connect(t, *s.host, s.key, p, remote, port, &i);
        note_reassignment(i, s);
        return local;
    }

    Timestamp step(Timestamp& t, std::int64_t lo_ms, std::int64_t hi_ms) {
        t += rng().between(lo_ms, hi_ms);
        return t;
    }

    // ----- boot ---------------------------------------------------------------

    void boot_all() {
        for (auto& h : hosts_) boot(h);
    }

    void boot(HostState& h) {
        Timestamp t = cfg_.start_time - kHour + static_cast<Timestamp>(rng_.between(0, 30 * kSecond));
        h.sys = LogonSessionKey{h.id, h.boot_epoch, kSystemSession};
        h.netsvc = LogonSessionKey{h.id, h.boot_epoch, kNetworkServiceSession};
        h.localsvc = LogonSessionKey{h.id, h.boot_epoch, kLocalServiceSession};
        h.system = ProcessRef{h.id, 4, t, Symbol("System")};
        auto sp = [&](const LogonSessionKey& k, const ProcessRef& parent, const std::string& image,
                      const std::string& cmd) {
            t += 40;
            return raw_spawn(t, h, k, parent, image, cmd);
        };
        h.smss = sp(h.sys, h.system, kSys32 + "smss.exe", "\\SystemRoot\\System32\\smss.exe");
        h.wininit = sp(h.sys, h.smss, kSys32 + "wininit.exe", "wininit.exe");
        h.winlogon = sp(h.sys, h.smss, kSys32 + "winlogon.exe", "winlogon.exe");
        h.services = sp(h.sys, h.wininit, kSys32 + "services.exe", "C:\\Windows\\system32\\services.exe");
        h.lsass = sp(h.sys, h.wininit, kSys32 + "lsass.exe", "C:\\Windows\\system32\\lsass.exe");
        h.svc_dcom = sp(h.sys, h.services, kSys32 + "svchost.exe", "svchost.exe -k DcomLaunch -p");
        h.svc_netsvcs = sp(h.sys, h.services, kSys32 + "svchost.exe", "svchost.exe -k netsvcs -p");
        h.svc_network = sp(h.netsvc, h.services, kSys32 + "svchost.exe", "svchost.exe -k NetworkService -p");
        h.svc_local = sp(h.localsvc, h.services, kSys32 + "svchost.exe", "svchost.exe -k LocalService -p");
        h.wmiprvse = sp(h.netsvc, h.svc_dcom, kSys32 + "wbem\\WmiPrvSE.exe", "wmiprvse.exe -Embedding");
        if (h.entry->role == HostRole::server) {
            h.w3wp = sp(h.sys, h.svc_netsvcs, "C:\\Windows\\System32\\inetsrv\\w3wp.exe",
                        "w3wp.exe -ap \"DefaultAppPool\"");
            h.sshd = sp(h.sys, h.services, "C:\\Program Files\\OpenSSH\\sshd.exe", "sshd.exe");
        }
    }

    // ----- Kerberos -----------------------------------------------------------

    std::uint16_t lsass_port(Timestamp t, HostState& client) {
        return raw_connect(t, client, client.sys, client.lsass, dc_->id.fqdn.str(), 88);
    }

    Symbol as_exchange(Timestamp& t, const PrincipalId& who, HostState& client, std::optional<Symbol> guid,
                       std::optional<std::uint16_t> port, TicketEncryption enc,
                       std::vector<std::size_t>* out = nullptr) {
        std::uint16_t p = port ? *port : lsass_port(t, client);
        step(t, 1, 5);
        std::size_t a = auth_event(t, AuthKind::AsRequest, who, client, std::nullopt, guid, std::nullopt,
                                   std::nullopt, p, enc);
        step(t, 2, 15);
        Symbol tgt = fresh_ticket("tgt-");
        std::size_t b = auth_event(t, AuthKind::AsReply, who, client, std::nullopt, guid, tgt, std::nullopt, p, enc);
        issued_[{who.name.str(), client.entry->alias}].push_back({tgt, t});
        if (out) {
            out->push_back(a);
            out->push_back(b);
        }
        return tgt;
    }

    Symbol cached_tgt(Timestamp& t, const PrincipalId& who, HostState& client, std::vector<std::size_t>* out = nullptr) {
        auto& cache = attack_mode_ ? attack_tgts_ : benign_tgts_;
        auto key = std::make_pair(who.name.str(), client.entry->alias);
        auto it = cache.find(key);
        if (it != cache.end() && it->second.issued <= t && t - it->second.issued < kTgtRenewAfter) return it->second.tgt;
        Symbol tgt = as_exchange(t, who, client, std::nullopt, std::nullopt, TicketEncryption::aes, out);
        cache[key] = TgtRecord{tgt, t};
        return tgt;
    }

    Symbol tgs_exchange(Timestamp& t, const PrincipalId& who, HostState& client, Symbol tgt,
                        const std::string& spn, std::optional<Symbol> guid, std::optional<std::uint16_t> port,
                        TicketEncryption enc, bool with_use, std::vector<std::size_t>* out = nullptr) {
        std::uint16_t p = port ? *port : lsass_port(t, client);
        step(t, 1, 5);
        std::size_t a = auth_event(t, AuthKind::TgsRequest, who, client, spn, guid, tgt, std::nullopt, p, enc);
        step(t, 2, 15);
        Symbol st = fresh_ticket("st-");
        std::size_t b = auth_event(t, AuthKind::TgsReply, who, client, spn, guid, tgt, st, p, enc);
        if (out) {
            out->push_back(a);
            out->push_back(b);
        }
        if (with_use) {
            step(t, 5, 30);
            std::size_t c = auth_event(t, AuthKind::ServiceTicketUse, who, client, spn, guid, std::nullopt, st,
                                       std::nullopt, enc);
            if (out) out->push_back(c);
        }
        return st;
    }

    const TgtRecord* latest_issued(const std::string& user, const std::string& host_alias, Timestamp before) {
        auto it = issued_.find({user, host_alias});
        if (it == issued_.end()) return nullptr;
        const TgtRecord* best = nullptr;
        for (const auto& r : it->second)
            if (r.issued <= before && (!best || r.issued > best->issued)) best = &r;
        return best;
    }

    // ----- desktop ------------------------------------------------------------

    void desktop_cascade(Timestamp& t, Session& s, int apps, bool record) {
        HostState& h = *s.host;
        std::vector<std::size_t> ids;
        std::size_t i = 0;
        step(t, 200, 900);
        ProcessRef userinit = spawn(t, s, h.winlogon, kSys32 + "userinit.exe", "C:\\Windows\\system32\\userinit.exe", &i);
        ids.push_back(i);
        step(t, 100, 400);
        ProcessRef explorer = spawn(t, s, userinit, "C:\\Windows\\explorer.exe", "C:\\Windows\\Explorer.EXE", &i);
        ids.push_back(i);
        static const std::vector<std::string> catalog = {
            "C:\\Program Files\\Microsoft Office\\root\\Office16\\OUTLOOK.EXE",
            "C:\\Program Files\\Google\\Chrome\\Application\\chrome.exe",
            "C:\\Program Files\\Microsoft OneDrive\\OneDrive.exe",
            "C:\\Windows\\System32\\SecurityHealthSystray.exe",
            "C:\\Windows\\System32\\ctfmon.exe",
            "C:\\Program Files\\Microsoft Teams\\current\\Teams.exe",
            "C:\\Windows\\System32\\RuntimeBroker.exe",
            "C:\\Windows\\System32\\taskhostw.exe",
            "C:\\Program Files\\Windows Defender\\MSASCuiL.exe",
            "C:\\Windows\\System32\\sihost.exe",
            "C:\\Program Files\\Notepad++\\notepad++.exe",
            "C:\\Windows\\System32\\smartscreen.exe",
        };
        s.apps.clear();
        for (int k = 0; k < apps; ++k) {
            step(t, 20, 250);
            const std::string& image = catalog[static_cast<std::size_t>(k) % catalog.size()];
            s.apps.push_back(spawn(t, s, explorer, image, std::nullopt, &i));
            ids.push_back(i);
        }
        s.explorer = explorer;
        s.cursor = explorer;
        if (record) cascades_.push_back({s.truth, std::move(ids)});
    }

    // ----- remote access ------------------------------------------------------

    struct AccessOptions {
        AuthMode auth = AuthMode::kerberos;
        bool privileged = false;
        bool web_shell = false;
        bool allow_truncation = false;
        bool record_cascade = false;
        int desktop_apps = 4;
        std::optional<Symbol> presented_tgt;  // ptt
    };

    std::optional<Access> remote_access(Timestamp& t, Session& src, const ProcessRef& from, HostState& dst,
                                        AccessType type, const PrincipalId& as, const AccessOptions& opt) {
        Access acc;
        HostState& client = *src.host;
        step(t, 5, 40);
        acc.source_port = connect(t, src, from, dst.id.fqdn.str(), service_port(type));
        Symbol guid(fresh_guid());
        std::string spn = service_class(type) + "/" + dst.id.fqdn.str();
        if (type == AccessType::SSH) spn = "host/" + dst.id.fqdn.str();

        switch (opt.auth) {
        case AuthMode::kerberos: {
            bool truncate = opt.allow_truncation && cfg_.rates.truncation_fraction > 0 &&
                            rng().chance(cfg_.rates.truncation_fraction);
            auto& cache = attack_mode_ ? attack_tgts_ : benign_tgts_;
            auto key = std::make_pair(as.name.str(), client.entry->alias);
            auto it = cache.find(key);
            bool needs_as = it == cache.end() || it->second.issued > t || t - it->second.issued >= kTgtRenewAfter;
            if (truncate) {
                ++truth_.truncated_chains;
                if (needs_as && rng().chance(0.5)) {
                    as_exchange(t, as, client, std::nullopt, std::nullopt, TicketEncryption::aes);
                    return std::nullopt;
                }
                Symbol tgt = cached_tgt(t, as, client);
                tgs_exchange(t, as, client, tgt, spn, guid, std::nullopt, TicketEncryption::aes, false);
                return std::nullopt;
            }
            Symbol tgt = cached_tgt(t, as, client);
            tgs_exchange(t, as, client, tgt, spn, guid, std::nullopt, TicketEncryption::aes, true);
            break;
        }
        case AuthMode::ntlm:
            step(t, 2, 10);
            acc.auth_indices.push_back(
                auth_event(t, AuthKind::NtlmAuth, as, client, spn, guid, std::nullopt, std::nullopt, std::nullopt,
                           TicketEncryption::rc4));
            break;
        case AuthMode::ptt:
        case AuthMode::golden: {
            Symbol tgt = opt.auth == AuthMode::golden ? fresh_ticket("tgt-") : *opt.presented_tgt;
            tgs_exchange(t, as, client, tgt, spn, guid, std::nullopt,
                         opt.auth == AuthMode::golden ? TicketEncryption::rc4 : TicketEncryption::aes, true,
                         &acc.auth_indices);
            break;
        }
        }

        step(t, 10, 60);
        LogonType ltype = type == AccessType::RDP ? LogonType::remote_interactive : LogonType::network;
        Session dest;
        dest.host = &dst;
        dest.principal = as;
        dest.key = new_session_key(dst);
        dest.truth = dest.key;
        dest.primary = dest.key;
        if (type == AccessType::RDP && opt.privileged) {
            dest.elevation = TokenElevation::limited;
            dest.integrity = IntegrityLevel::medium;
        }
        acc.logon_index = logon_event(t, dst, as, dest.key, ltype, LogonKind::logon, guid, client.id,
                                      acc.source_port, dest.elevation, dest.integrity);
        if (type == AccessType::RDP && opt.privileged) {
            LogonSessionKey full = new_session_key(dst);
            logon_event(t, dst, as, full, ltype, LogonKind::logon, guid, client.id, acc.source_port,
                        TokenElevation::full, IntegrityLevel::high);
            dest.full_twin = full;
        }

        switch (type) {
        case AccessType::RDP:
            desktop_cascade(t, dest, opt.desktop_apps, opt.record_cascade);
            break;
        case AccessType::SSH: {
            LogonSessionKey vkey = new_session_key(dst);
            PrincipalId virt{Symbol(""), Symbol("sshd_" + std::to_string(++dst.ssh_counter)),
                             PrincipalKind::virtual_account, Symbol("sshd")};
            step(t, 2, 20);
            logon_event(t, dst, virt, vkey, LogonType::network, LogonKind::logon);
            step(t, 5, 30);
            ProcessRef conn = raw_spawn(t, dst, vkey, *dst.sshd, "C:\\Program Files\\OpenSSH\\sshd.exe",
                                        "sshd.exe -R");
            step(t, 5, 30);
            dest.cursor = spawn(t, dest, conn, kSys32 + "cmd.exe", "c:\\windows\\system32\\cmd.exe");
            break;
        }
        case AccessType::WinRM:
            step(t, 30, 200);
            dest.cursor = spawn(t, dest, dst.svc_dcom, kSys32 + "wsmprovhost.exe",
                                "C:\\Windows\\system32\\wsmprovhost.exe -Embedding");
            break;
        case AccessType::WMI:
            step(t, 30, 200);
            dest.cursor = spawn(t, dest, dst.wmiprvse, kSys32 + "cmd.exe", "cmd.exe /Q /c");
            break;
        case AccessType::RPC:
            step(t, 10, 100);
            registry_op(t, dest, dst.svc_netsvcs,
                        "HKLM\\SOFTWARE\\Microsoft\\Windows NT\\CurrentVersion\\Schedule\\TaskCache");
            break;
        case AccessType::PsExec: {
            step(t, 10, 80);
            file_op(t, dest, dst.system, SystemKind::FileWrite, "C:\\Windows\\PSEXESVC.exe");
            step(t, 30, 200);
            ProcessRef svc = raw_spawn(t, dst, dst.sys, dst.services, "C:\\Windows\\PSEXESVC.exe", "PSEXESVC.exe");
            step(t, 30, 200);
            dest.cursor = spawn(t, dest, svc, kSys32 + "cmd.exe", "cmd.exe");
            break;
        }
        case AccessType::SMB:
            step(t, 10, 80);
            file_op(t, dest, dst.system, SystemKind::FileRead, "\\\\" + dst.id.fqdn.str() + "\\share\\index.dat");
            dest.cursor = dst.system;
            break;
        case AccessType::WebRequest:
            step(t, 5, 40);
            system_event(t, dst, dst.sys, SystemKind::FileRead, *dst.w3wp,
                         path_object(ObjectKind::file, "C:\\inetpub\\wwwroot\\default.aspx"));
            if (opt.web_shell) {
                step(t, 100, 300);
                Session shell = dest;
                shell.key = dst.sys;
                dest = shell;
                dest.cursor = spawn(t, dest, *dst.w3wp, kSys32 + "cmd.exe",
                                    "cmd.exe /c cd /d C:\\inetpub\\wwwroot");
            }
            break;
        case AccessType::Unknown:
            break;
        }
        acc.session = std::move(dest);
        return acc;
    }

    // ----- benign ------------------------------------------------------------

    Session& home_session(const std::string& user) {
        auto it = homes_.find(user);
        if (it == homes_.end()) throw ScenarioError("account has no interactive session: " + user);
        return it->second;
    }

    void benign_all() {
        for (const auto& u : dir_.users)
            if (!u.home.empty()) interactive_logon(u);
        for (const auto& u : dir_.users)
            if (!u.home.empty()) benign_user(u);
        for (auto& h : hosts_) system_noise(h);
    }

    void interactive_logon(const UserEntry& u) {
        HostState& h = host_for(u.home);
        Timestamp t = cfg_.start_time + rng_.between(0, 30 * kMinute);
        Symbol guid(fresh_guid());
        Symbol tgt = as_exchange(t, u.principal, h, guid, std::nullopt, TicketEncryption::aes);
        benign_tgts_[{u.principal.name.str(), h.entry->alias}] = TgtRecord{tgt, t};
        tgs_exchange(t, u.principal, h, tgt, "host/" + h.id.fqdn.str(), guid, std::nullopt, TicketEncryption::aes, true);
        step(t, 10, 60);
        Session s;
        s.host = &h;
        s.principal = u.principal;
        s.key = new_session_key(h);
        s.truth = s.primary = s.key;
        logon_event(t, h, u.principal, s.key, LogonType::interactive, LogonKind::logon, guid);
        desktop_cascade(t, s, 6, false);
        homes_[u.principal.name.str()] = s;
        home_ready_[u.principal.name.str()] = t;
    }

    std::vector<HostState*> servers() {
        std::vector<HostState*> out;
        for (auto& h : hosts_)
            if (h.entry->role == HostRole::server) out.push_back(&h);
        return out;
    }

    void benign_user(const UserEntry& u) {
        const BenignRates& r = cfg_.rates;
        const std::vector<std::pair<double, int>> activities = {
            {r.share_access, 0}, {r.web_request, 1}, {r.rdp_session, 2}, {r.lolbin, 3},
            {r.external_connect, 4}, {r.local_file, 5}, {r.ntlm_auth, 6}};
        double total = 0;
        for (const auto& a : activities) total += a.first;
        if (total <= 0) return;
        std::vector<HostState*> targets = servers();
        Session& home = home_session(u.principal.name.str());
        Timestamp t = home_ready_[u.principal.name.str()];
        while (true) {
            t += static_cast<Timestamp>(rng_.exponential(total) * kHour) + 1;
            if (t >= end_) break;
            double x = rng_.uniform() * total;
            int kind = 0;
            for (const auto& a : activities) {
                if (x < a.first) {
                    kind = a.second;
                    break;
                }
                x -= a.first;
            }
            Timestamp at = t;
            switch (kind) {
            case 0:
            case 6:
                if (!targets.empty()) share_access(at, home, *rng_.pick(targets), kind == 6);
                break;
            case 1:
                if (!targets.empty()) web_request(at, home, *rng_.pick(targets));
                break;
            case 2:
                if (!targets.empty()) rdp_visit(at, home, *rng_.pick(targets), u);
                break;
            case 3:
                lolbin(at, home, u);
                break;
            case 4: {
                static const std::vector<std::string> sites = {"93.184.216.34", "151.101.1.69", "13.107.42.14",
                                                               "142.250.74.46"};
                connect(at, home, rng_.pick(home.apps), rng_.pick(sites), 443);
                break;
            }
            default: {
                const ProcessRef& app = rng_.pick(home.apps);
                std::string path = "C:\\Users\\" + u.principal.name.str() + "\\Documents\\report" +
                                   std::to_string(rng_.between(1, 40)) + ".docx";
                file_op(at, home, app, rng_.chance(0.6) ? SystemKind::FileRead : SystemKind::FileWrite, path);
                break;
            }
            }
        }
    }

    void share_access(Timestamp t, Session& home, HostState& server, bool ntlm) {
        AccessOptions opt;
        opt.auth = ntlm ? AuthMode::ntlm : AuthMode::kerberos;
        opt.allow_truncation = !ntlm;
        auto acc = remote_access(t, home, *home.explorer, server, AccessType::SMB, home.principal, opt);
        if (!acc) return;
        Session& s = acc->session;
        int n = static_cast<int>(rng_.between(1, 4));
        for (int i = 0; i < n; ++i) {
            step(t, 50, 2000);
            file_op(t, s, server.system, rng_.chance(0.7) ? SystemKind::FileRead : SystemKind::FileWrite,
                    "\\\\" + server.id.fqdn.str() + "\\share\\dept\\file" + std::to_string(rng_.between(1, 500)) + ".xlsx");
        }
        step(t, 1000, 60000);
        logon_event(t, server, s.principal, s.key, LogonType::network, LogonKind::logoff);
    }

    void web_request(Timestamp t, Session& home, HostState& server) {
        AccessOptions opt;
        opt.allow_truncation = true;
        auto acc = remote_access(t, home, rng_.pick(home.apps), server, AccessType::WebRequest, home.principal, opt);
        if (!acc) return;
        step(t, 200, 5000);
        logon_event(t, server, acc->session.principal, acc->session.truth, LogonType::network, LogonKind::logoff);
    }

    void rdp_visit(Timestamp t, Session& home, HostState& server, const UserEntry& u) {
        ProcessRef mstsc = spawn(t, home, *home.explorer, kSys32 + "mstsc.exe", "mstsc.exe /v:" + server.id.fqdn.str());
        AccessOptions opt;
        opt.allow_truncation = true;
        opt.privileged = u.tier == PrivilegeTier::domain_admin;
        auto acc = remote_access(t, home, mstsc, server, AccessType::RDP, home.principal, opt);
        if (!acc) return;
        Session& s = acc->session;
        int n = static_cast<int>(rng_.between(2, 6));
        for (int i = 0; i < n; ++i) {
            step(t, 1000, 60000);
            file_op(t, s, rng_.pick(s.apps), SystemKind::FileRead,
                    "C:\\Users\\" + u.principal.name.str() + "\\Desktop\\notes" + std::to_string(i) + ".txt");
        }
        step(t, 5 * kMinute, 40 * kMinute);
        logon_event(t, server, s.principal, s.key, LogonType::remote_interactive, LogonKind::logoff, std::nullopt,
                    std::nullopt, std::nullopt, s.elevation, s.integrity);
        if (s.full_twin)
            logon_event(t, server, s.principal, *s.full_twin, LogonType::remote_interactive, LogonKind::logoff,
                        std::nullopt, std::nullopt, std::nullopt, TokenElevation::full, IntegrityLevel::high);
    }

    void lolbin(Timestamp t, Session& home, const UserEntry& u) {
        static const std::vector<std::string> commands = {
            "ipconfig /all", "whoami", "netstat -an", "net use", "net view \\\\data", "nslookup intranet",
            "tasklist", "ping -n 1 exch"};
        ProcessRef cmd = spawn(t, home, *home.explorer, kSys32 + "cmd.exe", "cmd.exe");
        int n = static_cast<int>(rng_.between(1, 3));
        for (int i = 0; i < n; ++i) {
            step(t, 2000, 30000);
            std::string line = rng_.pick(commands);
            if (i == 0 && rng_.chance(0.1)) line = "runas /user:" + dir_.realm + "\\" + u.principal.name.str() + " notepad.exe";
            ProcessRef p = spawn(t, home, cmd, image_for_command(line), line);
            step(t, 100, 900);
            terminate(t, home, p);
        }
        step(t, 1000, 5000);
        terminate(t, home, cmd);
    }

    void system_noise(HostState& h) {
        double rate = cfg_.rates.system_noise;
        if (rate <= 0) return;
        static const std::vector<std::string> dlls = {"ntdll.dll", "kernel32.dll", "advapi32.dll", "crypt32.dll",
                                                      "wininet.dll", "msvcrt.dll", "sechost.dll"};
        Session sys{&h, h.sys, h.sys, h.sys, {}, {}, {}, {}, {}, {}, {}};
        Session net{&h, h.netsvc, h.netsvc, h.netsvc, {}, {}, {}, {}, {}, {}, {}};
        Session local{&h, h.localsvc, h.localsvc, h.localsvc, {}, {}, {}, {}, {}, {}, {}};
        Timestamp t = cfg_.start_time;
        while (true) {
            t += static_cast<Timestamp>(rng_.exponential(rate) * kHour) + 1;
            if (t >= end_) break;
            switch (rng_.between(0, 7)) {
            case 0:
            case 1:
                file_op(t, sys, h.svc_netsvcs, SystemKind::FileRead, kSys32 + rng_.pick(dlls));
                break;
            case 2:
                file_op(t, sys, h.svc_netsvcs, SystemKind::FileWrite,
                        "C:\\Windows\\Logs\\CBS\\CBS" + std::to_string(rng_.between(1, 9)) + ".log");
                break;
            case 3:
                registry_op(t, sys, h.services, "HKLM\\SYSTEM\\CurrentControlSet\\Services");
                break;
            case 4:
                if (h.id.fqdn == dc_->id.fqdn)
                    file_op(t, net, h.svc_network, SystemKind::FileRead, "C:\\Windows\\System32\\dns\\cache.dns");
                else
                    connect(t, net, h.svc_network, dc_->id.fqdn.str(), 53);
                break;
            case 5:
                file_op(t, local, h.svc_local, SystemKind::FileRead, "C:\\Windows\\System32\\drivers\\etc\\hosts");
                break;
            case 6: {
                // Own clock so the task's lifetime does not stretch the arrival process.
                Timestamp u = t;
                ProcessRef p = spawn(u, sys, h.svc_netsvcs, kSys32 + "taskhostw.exe", "taskhostw.exe");
                step(u, 200, 5000);
                file_op(u, sys, p, SystemKind::FileRead, kSys32 + "Tasks\\Maintenance");
                step(u, 100, 2000);
                terminate(u, sys, p);
                break;
            }
            default:
                if (h.w3wp)
                    file_op(t, sys, *h.w3wp, SystemKind::FileRead, "C:\\inetpub\\logs\\LogFiles\\u_ex.log");
                else
                    registry_op(t, sys, h.svc_netsvcs, "HKLM\\SOFTWARE\\Microsoft\\Windows\\CurrentVersion\\Run");
                break;
            }
        }
    }

    // ----- attacks --------------------------------------------------------------

    Session foothold(Timestamp& t, HostState& h, const PrincipalId& who) {
        Symbol guid(fresh_guid());
        Symbol tgt = as_exchange(t, who, h, guid, std::nullopt, TicketEncryption::aes);
        attack_tgts_[{who.name.str(), h.entry->alias}] = TgtRecord{tgt, t};
        tgs_exchange(t, who, h, tgt, "host/" + h.id.fqdn.str(), guid, std::nullopt, TicketEncryption::aes, true);
        step(t, 10, 60);
        Session s;
        s.host = &h;
        s.principal = who;
        s.key = new_session_key(h);
        s.truth = s.primary = s.key;
        logon_event(t, h, who, s.key, LogonType::batch, LogonKind::logon, guid);
        step(t, 50, 300);
        s.cursor = spawn(t, s, h.svc_netsvcs,
                         "C:\\Users\\" + who.name.str() + "\\AppData\\Local\\SystemFailureReporter.exe",
                         "SystemFailureReporter.exe -s");
        step(t, 500, 3000);
        connect(t, s, *s.cursor, cfg_.c2_address, 443);
        attack_sessions_.push_back(s.key);
        return s;
    }

    void beacon(Timestamp t, Session& s) {
        connect(t, s, *s.cursor, cfg_.c2_address, 443);
    }

    void run_discovery(Timestamp& t, Session& s, const std::vector<std::string>& commands) {
        for (const auto& line : commands) {
            step(t, 2000, 20000);
            ProcessRef p = spawn(t, s, cursor_of(s), image_for_command(line), line);
            step(t, 200, 1500);
            terminate(t, s, p);
        }
    }

    const ProcessRef& cursor_of(const Session& s) {
        if (!s.cursor) throw ScenarioError("session on " + s.host->entry->alias + " has no process to act from");
        return *s.cursor;
    }

    void run_credential_access(Timestamp& t, Session& s, const AttackStep& st,
                               std::map<std::string, Symbol>& stolen) {
        HostState& h = *s.host;
        const std::string& tech = st.technique;
        step(t, 1000, 8000);
        if (tech == "lsass") {
            ProcessRef p = spawn(t, s, cursor_of(s), "C:\\ProgramData\\ps.exe");
            step(t, 200, 900);
            access_process(t, s, p, h.lsass);
            step(t, 500, 3000);
            terminate(t, s, p);
        } else if (tech == "sam") {
            ProcessRef p = spawn(t, s, cursor_of(s), kSys32 + "reg.exe", "reg save hklm\\sam C:\\ProgramData\\sam.save");
            step(t, 100, 500);
            registry_op(t, s, p, "HKLM\\SAM");
            file_op(t, s, p, SystemKind::FileWrite, "C:\\ProgramData\\sam.save");
        } else if (tech == "ntds") {
            ProcessRef p = spawn(t, s, cursor_of(s), kSys32 + "ntdsutil.exe",
                                 "ntdsutil \"ac i ntds\" \"ifm\" \"create full C:\\ProgramData\\ifm\" q q");
            step(t, 500, 3000);
            file_op(t, s, p, SystemKind::FileRead, "C:\\Windows\\NTDS\\ntds.dit");
        } else if (tech == "dcsync") {
            spawn(t, s, cursor_of(s), "C:\\ProgramData\\mk.exe", "mk.exe \"lsadump::dcsync /user:krbtgt\" exit");
        } else if (tech == "golden") {
            spawn(t, s, cursor_of(s), "C:\\ProgramData\\mk.exe",
                  "mk.exe \"kerberos::golden /user:" + st.as + " /domain:" + dir_.realm + " /krbtgt:<hash> /ptt\" exit");
        } else if (tech == "tickets") {
            ProcessRef p = spawn(t, s, cursor_of(s), "C:\\ProgramData\\mk.exe", "mk.exe \"sekurlsa::tickets /export\" exit");
            step(t, 200, 900);
            access_process(t, s, p, h.lsass);
            const TgtRecord* r = latest_issued(st.as, h.entry->alias, t);
            if (!r) throw ScenarioError("no ticket of " + st.as + " cached on " + h.entry->alias);
            stolen[st.as] = r->tgt;
        } else {
            throw ScenarioError("unknown credential access technique: " + tech);
        }
    }

    void run_roast(Timestamp& t, Session& s, const AttackStep& st) {
        HostState& h = *s.host;
        const UserEntry& target = user_for(st.as);
        step(t, 2000, 10000);
        bool asrep = st.technique == "asreproast";
        if (!asrep && st.technique != "kerberoast") throw ScenarioError("unknown roast technique: " + st.technique);
        ProcessRef p = spawn(t, s, cursor_of(s), "C:\\Users\\Public\\rb.exe",
                             "rb.exe " + st.technique + " /user:" + st.as + " /nowrap");
        step(t, 100, 600);
        std::uint16_t port = connect(t, s, p, dc_->id.fqdn.str(), 88);
        TruthAttack ta;
        std::vector<std::size_t> ids;
        if (asrep) {
            if (target.preauth_required) throw ScenarioError(st.as + " requires pre-authentication");
            ta.label = AttackLabel::AsRepRoasting;
            as_exchange(t, target.principal, h, std::nullopt, port, TicketEncryption::rc4, &ids);
        } else {
            if (!target.spn) throw ScenarioError(st.as + " has no service principal name");
            ta.label = AttackLabel::Kerberoasting;
            auto it = attack_tgts_.find({s.principal.name.str(), h.entry->alias});
            if (it == attack_tgts_.end()) throw ScenarioError("no ticket-granting ticket for roasting");
            tgs_exchange(t, s.principal, h, it->second.tgt, *target.spn, std::nullopt, port, TicketEncryption::rc4,
                         false, &ids);
        }
        attack_chains_.push_back({ta.label, ids});
        step(t, 500, 2000);
        terminate(t, s, p);
    }

    void run_attack(const AttackScript& a) {
        set_attack_mode(true);
        std::map<std::string, Session> labels;
        std::map<std::string, Symbol> stolen;
        Timestamp t = cfg_.start_time + static_cast<Timestamp>(a.start_hour * kHour);
        HostState& fh = host_for(a.foothold_host);
        labels["S0"] = foothold(t, fh, user_for(a.foothold_user).principal);

        auto label = [&](const std::string& name) -> Session& {
            auto it = labels.find(name);
            if (it == labels.end()) throw ScenarioError("undefined session label: " + name);
            return it->second;
        };

        for (const AttackStep& st : a.steps) {
            step(t, 30 * kSecond, 3 * kMinute);
            switch (st.action) {
            case AttackStep::Action::discovery:
                run_discovery(t, label(st.at), st.commands);
                break;
            case AttackStep::Action::credential_access:
                run_credential_access(t, label(st.at), st, stolen);
                break;
            case AttackStep::Action::roast:
                run_roast(t, label(st.at), st);
                break;
            case AttackStep::Action::collect: {
                Session& s = label(st.at);
                for (const auto& path : st.commands) {
                    step(t, 300, 5000);
                    file_op(t, s, cursor_of(s), SystemKind::FileRead, path);
                }
                break;
            }
            case AttackStep::Action::escalate: {
                Session& s = label(st.at);
                Session next = s;
                if (st.technique == "full") {
                    if (!s.full_twin) throw ScenarioError("escalation to full token needs a privileged desktop session");
                    next.key = next.truth = *s.full_twin;
                    next.elevation = TokenElevation::full;
                    next.integrity = IntegrityLevel::high;
                    next.full_twin.reset();
                } else if (st.technique == "system") {
                    step(t, 500, 3000);
                    next.key = next.truth = next.primary = new_session_key(*s.host);
                    next.principal = PrincipalId{Symbol("NT AUTHORITY"), Symbol("SYSTEM"), PrincipalKind::machine, {}};
                    next.elevation = TokenElevation::full;
                    next.integrity = IntegrityLevel::system;
                    next.full_twin.reset();
                    logon_event(t, *s.host, next.principal, next.key, LogonType::service, LogonKind::logon,
                                std::nullopt, std::nullopt, std::nullopt, next.elevation, next.integrity);
                    attack_sessions_.push_back(next.key);
                } else {
                    throw ScenarioError("unknown escalation: " + st.technique);
                }
                step(t, 200, 2000);
                next.cursor = spawn(t, next, cursor_of(s), kSys32 + "cmd.exe",
                                    st.technique == "system" ? "cmd.exe /c sc start updsvc" : "cmd.exe");
                ++truth_.escalations;
                labels[st.label] = next;
                break;
            }
            case AttackStep::Action::lateral: {
                Session& src = label(st.at);
                HostState& dst = host_for(st.to);
                const UserEntry& as = user_for(st.as);
                AccessOptions opt;
                opt.auth = st.auth;
                opt.privileged = st.privileged;
                opt.web_shell = st.access == AccessType::WebRequest;
                opt.record_cascade = true;
                opt.desktop_apps = cfg_.rates.startup_apps;
                if (st.auth == AuthMode::ptt) {
                    auto it = stolen.find(st.as);
                    if (it == stolen.end()) throw ScenarioError("no stolen ticket for " + st.as);
                    opt.presented_tgt = it->second;
                }
                ProcessRef from = cursor_of(src);
                if (st.access == AccessType::RDP) {
                    step(t, 200, 1000);
                    from = spawn(t, src, from, kSys32 + "mstsc.exe", "mstsc.exe /v:" + dst.id.fqdn.str());
                }
                auto acc = remote_access(t, src, from, dst, st.access, as.principal, opt);
                Session dest = acc->session;
                if (st.access == AccessType::RDP) {
                    step(t, 1000, 5000);
                    dest.cursor = spawn(t, dest, *dest.explorer, kSys32 + "cmd.exe", "cmd.exe");
                }
                if (st.access == AccessType::SMB) {
                    for (const auto& path : st.commands) {
                        step(t, 200, 2000);
                        file_op(t, dest, dst.system, SystemKind::FileWrite, path);
                    }
                }
                edges_.push_back({src.primary, dest.primary, st.access});
                access_.push_back({dest.primary, acc->logon_index, st.access});
                attack_sessions_.push_back(dest.truth);
                if (dest.full_twin) attack_sessions_.push_back(*dest.full_twin);
                if (st.auth != AuthMode::kerberos) {
                    AttackLabel l = st.auth == AuthMode::ntlm  ? AttackLabel::PassTheHash
                                    : st.auth == AuthMode::ptt ? AttackLabel::PassTheTicket
                                                               : AttackLabel::GoldenTicket;
                    attack_chains_.push_back({l, acc->auth_indices});
                }
                if (!st.label.empty()) labels[st.label] = dest;
                beacon(t + 1, labels["S0"]);
                break;
            }
            }
        }
        set_attack_mode(false);
    }

    // ----- special cases -------------------------------------------------------

    HostState* pick_host(std::initializer_list<const HostState*> avoid, HostRole prefer) {
        auto ok = [&](const HostState& h) {
            if (h.entry->role == HostRole::dc) return false;
            for (const HostState* a : avoid)
                if (a == &h) return false;
            return true;
        };
        for (auto& h : hosts_)
            if (ok(h) && h.entry->role == prefer) return &h;
        for (auto& h : hosts_)
            if (ok(h)) return &h;
        return nullptr;
    }

    void reconnect_case(ReconnectVariant variant) {
        if (hosts_.size() < 2) throw ScenarioError("reconnect case needs at least two hosts");
        if (variant == ReconnectVariant::victim_never_disconnects)
            throw ScenarioError("victim still occupies the remote desktop session; a second user cannot enter it");
        const UserEntry& victim = user_for("carol");
        const UserEntry& intruder = user_for("alice");
        HostState& vhome = host_for(victim.home);
        HostState* target = pick_host({&vhome}, HostRole::server);
        if (!target) throw ScenarioError("reconnect case needs a server");
        HostState* origin = pick_host({&vhome, target}, HostRole::workstation);
        if (!origin) throw ScenarioError("reconnect case needs a third non-DC host");

        Session& home = home_session("carol");
        Timestamp t = cfg_.start_time + 9 * kHour;
        ProcessRef mstsc = spawn(t, home, *home.explorer, kSys32 + "mstsc.exe", "mstsc.exe /v:" + target->id.fqdn.str());
        AccessOptions vopt;
        vopt.desktop_apps = 6;
        Session l1 = remote_access(t, home, mstsc, *target, AccessType::RDP, victim.principal, vopt)->session;
        for (int i = 0; i < 3; ++i) {
            step(t, 10 * kSecond, 2 * kMinute);
            file_op(t, l1, l1.apps[static_cast<std::size_t>(i) % l1.apps.size()], SystemKind::FileWrite,
                    "C:\\Users\\carol\\Documents\\budget" + std::to_string(i) + ".xlsx");
        }

        set_attack_mode(true);
        Timestamp at = cfg_.start_time + 10 * kHour;
        Session s0 = foothold(at, *origin, intruder.principal);
        if (variant != ReconnectVariant::fresh_session) {
            step(t, 5 * kMinute, 10 * kMinute);
            set_attack_mode(false);
            logon_event(t, *target, victim.principal, l1.key, LogonType::remote_interactive, LogonKind::disconnect);
            set_attack_mode(true);
        }
        const TgtRecord* ticket = latest_issued("carol", vhome.entry->alias, at);
        if (!ticket) throw ScenarioError("victim has no ticket to steal");
        if (at < t) at = t + kMinute;
        step(at, 30 * kSecond, 2 * kMinute);

        if (variant == ReconnectVariant::fresh_session) {
            AccessOptions opt;
            opt.auth = AuthMode::ptt;
            opt.presented_tgt = ticket->tgt;
            opt.desktop_apps = 6;
            std::size_t first = events_.size();
            auto acc = remote_access(at, s0, *s0.cursor, *target, AccessType::RDP, victim.principal, opt);
            Session s = acc->session;
            step(at, 1000, 4000);
            s.cursor = spawn(at, s, *s.explorer, kSys32 + "cmd.exe", "cmd.exe");
            run_discovery(at, s, {"whoami /all", "net group \"domain admins\" /domain", "quser"});
            step(at, 1000, 4000);
            file_op(at, s, *s.cursor, SystemKind::FileRead, "C:\\Users\\carol\\Documents\\budget0.xlsx");
            for (std::size_t i = first; i < events_.size(); ++i) {
                const auto* se = events_[i].system();
                if (se && se->session == s.key) window_.push_back(i);
            }
            edges_.push_back({s0.primary, s.primary, AccessType::RDP});
            access_.push_back({s.primary, acc->logon_index, AccessType::RDP});
            attack_sessions_.push_back(s.key);
            attack_chains_.push_back({AttackLabel::PassTheTicket, acc->auth_indices});
            set_attack_mode(false);
            return;
        }

        // re-entry into the disconnected desktop under a new logon
        std::uint16_t port = connect(at, s0, *s0.cursor, target->id.fqdn.str(), 3389);
        Symbol guid(fresh_guid());
        std::vector<std::size_t> ids;
        tgs_exchange(at, victim.principal, *origin, ticket->tgt, "TERMSRV/" + target->id.fqdn.str(), guid,
                     std::nullopt, TicketEncryption::aes, true, &ids);
        attack_chains_.push_back({AttackLabel::PassTheTicket, ids});
        step(at, 10, 60);
        LogonSessionKey l2 = new_session_key(*target);
        std::size_t logon2 = logon_event(at, *target, victim.principal, l2, LogonType::remote_interactive,
                                         LogonKind::logon, guid, origin->id, port);
        step(at, 50, 400);
        logon_event(at, *target, victim.principal, l1.key, LogonType::remote_interactive, LogonKind::reconnect, guid,
                    origin->id, port);
        Session intr = l1;
        intr.truth = intr.primary = l2;
        std::size_t before = reassigned_.size();
        step(at, 1000, 5000);
        intr.cursor = spawn(at, intr, *l1.explorer, kSys32 + "cmd.exe", "cmd.exe");
        run_discovery(at, intr, {"whoami /all", "net group \"domain admins\" /domain", "quser", "netstat -ano"});
        step(at, 1000, 4000);
        file_op(at, intr, *intr.cursor, SystemKind::FileRead, "C:\\Users\\carol\\Documents\\budget0.xlsx");
        step(at, 1000, 4000);
        connect(at, intr, *intr.cursor, cfg_.c2_address, 8443);
        for (std::size_t i = before; i < reassigned_.size(); ++i) window_.push_back(reassigned_[i].index);
        edges_.push_back({s0.primary, l2, AccessType::RDP});
        access_.push_back({l2, logon2, AccessType::RDP});
        attack_sessions_.push_back(l2);

        if (variant == ReconnectVariant::open_window) {
            truth_.open_window = true;
            set_attack_mode(false);
            return;
        }
        step(at, 2 * kMinute, 5 * kMinute);
        logon_event(at, *target, victim.principal, l1.key, LogonType::remote_interactive, LogonKind::disconnect);
        logon_event(at, *target, victim.principal, l2, LogonType::remote_interactive, LogonKind::logoff);
        set_attack_mode(false);

        // victim comes back
        step(at, 20 * kMinute, 40 * kMinute);
        ProcessRef mstsc2 = spawn(at, home, *home.explorer, kSys32 + "mstsc.exe", "mstsc.exe /v:" + target->id.fqdn.str());
        std::uint16_t vport = connect(at, home, mstsc2, target->id.fqdn.str(), 3389);
        Symbol g3(fresh_guid());
        Symbol tgt = cached_tgt(at, victim.principal, vhome);
        tgs_exchange(at, victim.principal, vhome, tgt, "TERMSRV/" + target->id.fqdn.str(), g3, std::nullopt,
                     TicketEncryption::aes, true);
        LogonSessionKey l3 = new_session_key(*target);
        step(at, 10, 60);
        logon_event(at, *target, victim.principal, l3, LogonType::remote_interactive, LogonKind::logon, g3, vhome.id, vport);
        step(at, 50, 400);
        logon_event(at, *target, victim.principal, l1.key, LogonType::remote_interactive, LogonKind::reconnect, g3,
                    vhome.id, vport);
        step(at, 5000, 30000);
        file_op(at, l1, l1.apps.front(), SystemKind::FileWrite, "C:\\Users\\carol\\Documents\\budget3.xlsx");
        step(at, 10 * kMinute, 20 * kMinute);
        logon_event(at, *target, victim.principal, l1.key, LogonType::remote_interactive, LogonKind::logoff);
        logon_event(at, *target, victim.principal, l3, LogonType::remote_interactive, LogonKind::logoff);
    }

    void access_type_cases() {
        const UserEntry& op = user_for("admin1");
        Session& home = home_session("admin1");
        std::vector<HostState*> targets = servers();
        if (targets.empty()) throw ScenarioError("access type cases need a server");
        Timestamp t = cfg_.start_time + 8 * kHour;
        const std::vector<std::pair<AccessType, std::string>> tools = {
            {AccessType::RDP, "mstsc.exe"},      {AccessType::SSH, "ssh.exe"},
            {AccessType::WinRM, "powershell.exe"}, {AccessType::WMI, "wmic.exe"},
            {AccessType::RPC, "schtasks.exe"},   {AccessType::PsExec, "C:\\Tools\\PsExec.exe"},
            {AccessType::SMB, "explorer.exe"},   {AccessType::WebRequest, "C:\\Program Files\\Google\\Chrome\\Application\\chrome.exe"},
        };
        std::size_t k = 0;
        auto run = [&](AccessType type, const std::string& tool, bool privileged, bool web_shell) {
            step(t, 2 * kMinute, 6 * kMinute);
            HostState& dst = *targets[k++ % targets.size()];
            ProcessRef from = spawn(t, home, *home.explorer, image_for_command(tool), tool);
            AccessOptions opt;
            opt.privileged = privileged;
            opt.web_shell = web_shell;
            opt.record_cascade = true;
            opt.desktop_apps = cfg_.rates.startup_apps;
            auto acc = remote_access(t, home, from, dst, type, op.principal, opt);
            Session s = acc->session;
            access_.push_back({s.primary, acc->logon_index, type});
            if (web_shell) run_discovery(t, s, {"whoami", "ipconfig /all"});
            if (privileged) {
                Session full = s;
                full.key = full.truth = *s.full_twin;
                full.elevation = TokenElevation::full;
                full.integrity = IntegrityLevel::high;
                step(t, 1000, 5000);
                ProcessRef elevated = spawn(t, full, *s.explorer, kSys32 + "mmc.exe", "mmc.exe compmgmt.msc");
                step(t, 1000, 5000);
                file_op(t, full, elevated, SystemKind::FileRead, "C:\\Windows\\System32\\compmgmt.msc");
            }
        };
        for (const auto& [type, tool] : tools) run(type, tool, false, false);
        run(AccessType::RDP, "mstsc.exe", true, false);
        run(AccessType::WebRequest, "C:\\Program Files\\Google\\Chrome\\Application\\chrome.exe", false, true);
    }

    // ----- output ---------------------------------------------------------------

    ForgeOutput finish() {
        std::vector<std::size_t> order(events_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return event_time(events_[a]) < event_time(events_[b]);
        });
        std::vector<std::uint64_t> id_of(events_.size());
        ForgeOutput out;
        out.events.reserve(events_.size());
        for (std::size_t rank = 0; rank < order.size(); ++rank) {
            id_of[order[rank]] = rank + 1;
            Event e = std::move(events_[order[rank]]);
            e.id = rank + 1;
            out.events.push_back(std::move(e));
        }
        auto ids = [&](const std::vector<std::size_t>& idx) {
            std::vector<std::uint64_t> v;
            v.reserve(idx.size());
            for (std::size_t i : idx) v.push_back(id_of[i]);
            std::sort(v.begin(), v.end());
            return v;
        };

        GroundTruth& g = truth_;
        for (std::size_t i = 0; i < attack_.size(); ++i)
            if (attack_[i]) g.attack_event_ids.push_back(id_of[i]);
        std::sort(g.attack_event_ids.begin(), g.attack_event_ids.end());
        g.causal_edges = edges_;
        std::sort(g.causal_edges.begin(), g.causal_edges.end());
        g.attack_sessions = attack_sessions_;
        std::sort(g.attack_sessions.begin(), g.attack_sessions.end());
        g.attack_sessions.erase(std::unique(g.attack_sessions.begin(), g.attack_sessions.end()), g.attack_sessions.end());
        for (const auto& [label, idx] : attack_chains_) g.attacks.push_back({label, ids(idx)});
        for (const auto& a : access_) g.access_types.push_back({a.session, id_of[a.logon_index], a.access});
        for (const auto& r : reassigned_) g.reassignments.push_back({id_of[r.index], r.raw, r.truth});
        std::sort(g.reassignments.begin(), g.reassignments.end(),
                  [](const TruthReassignment& a, const TruthReassignment& b) { return a.event_id < b.event_id; });
        g.attacker_window_ids = ids(window_);
        for (const auto& c : cascades_) g.cascades.push_back({c.session, ids(c.indices)});
        out.truth = std::move(g);
        out.directory = dir_;
        return out;
    }

private:
    struct PendingReassign {
        std::size_t index;
        LogonSessionKey raw;
        LogonSessionKey truth;
    };
    struct PendingCascade {
        LogonSessionKey session;
        std::vector<std::size_t> indices;
    };
    struct PendingAccess {
        LogonSessionKey session;
        std::size_t logon_index;
        AccessType access;
    };

    const ScenarioConfig& cfg_;
    Directory dir_;
    Rng rng_;
    Rng attack_rng_;
    Timestamp end_;
    std::vector<HostState> hosts_;
    HostState* dc_ = nullptr;
    std::vector<Event> events_;
    std::vector<std::uint8_t> attack_;
    bool attack_mode_ = false;
    std::uint64_t counter_ = 0;
    std::map<std::pair<std::string, std::string>, std::vector<TgtRecord>> issued_;
    std::map<std::pair<std::string, std::string>, TgtRecord> benign_tgts_;
    std::map<std::pair<std::string, std::string>, TgtRecord> attack_tgts_;
    std::map<std::string, Session> homes_;
    std::map<std::string, Timestamp> home_ready_;
    GroundTruth truth_;
    std::vector<TruthEdge> edges_;
    std::vector<LogonSessionKey> attack_sessions_;
    std::vector<std::pair<AttackLabel, std::vector<std::size_t>>> attack_chains_;
    std::vector<PendingAccess> access_;
    std::vector<PendingReassign> reassigned_;
    std::vector<std::size_t> window_;
    std::vector<PendingCascade> cascades_;
};

nlohmann::json session_list(const std::vector<LogonSessionKey>& keys) {
    auto arr = nlohmann::json::array();
    for (const auto& k : keys) arr.push_back(session_to_json(k));
    return arr;
}

} // namespace

ForgeOutput forge(const ScenarioConfig& cfg) {
    World w(cfg);
    w.boot_all();
    w.benign_all();
    for (const auto& a : cfg.attacks) w.run_attack(a);
    return w.finish();
}

ForgeOutput forge_rdp_reconnect_case(const ScenarioConfig& cfg, ReconnectVariant variant) {
    World w(cfg);
    w.boot_all();
    w.benign_all();
    w.reconnect_case(variant);
    return w.finish();
}

ForgeOutput forge_access_type_cases(const ScenarioConfig& cfg) {
    World w(cfg);
    w.boot_all();
    w.benign_all();
    w.access_type_cases();
    return w.finish();
}

ForgeOutput forge_case(const ScenarioConfig& cfg) {
    switch (cfg.scenario_case) {
    case ScenarioCase::rdp_reconnect: return forge_rdp_reconnect_case(cfg, cfg.reconnect_variant);
    case ScenarioCase::access_types: return forge_access_type_cases(cfg);
    case ScenarioCase::standard: break;
    }
    return forge(cfg);
}

nlohmann::json GroundTruth::to_json() const {
    using nlohmann::json;
    json j;
    j["attack_event_ids"] = attack_event_ids;
    j["causal_cross_machine_edges"] = json::array();
    for (const auto& e : causal_edges)
        j["causal_cross_machine_edges"].push_back(
            {{"source", session_to_json(e.source)}, {"dest", session_to_json(e.dest)}, {"access", to_string(e.access)}});
    j["attack_sessions"] = session_list(attack_sessions);
    j["attacks"] = json::array();
    for (const auto& a : attacks) j["attacks"].push_back({{"label", to_string(a.label)}, {"chain_event_ids", a.chain_event_ids}});
    j["access_types"] = json::array();
    for (const auto& a : access_types)
        j["access_types"].push_back(
            {{"session", session_to_json(a.session)}, {"logon_event_id", a.logon_event_id}, {"access", to_string(a.access)}});
    j["reassignments"] = json::array();
    for (const auto& r : reassignments)
        j["reassignments"].push_back(
            {{"event_id", r.event_id}, {"raw", session_to_json(r.raw)}, {"truth", session_to_json(r.truth)}});
    j["attacker_window_ids"] = attacker_window_ids;
    j["open_window"] = open_window;
    j["cascades"] = json::array();
    for (const auto& c : cascades)
        j["cascades"].push_back({{"session", session_to_json(c.session)}, {"event_ids", c.event_ids}});
    j["escalations"] = escalations;
    j["truncated_chains"] = truncated_chains;
    j["events_sha256"] = events_sha256;
    return j;
}

GroundTruth GroundTruth::from_json(const nlohmann::json& j) {
    try {
        GroundTruth g;
        g.attack_event_ids = j.at("attack_event_ids").get<std::vector<std::uint64_t>>();
        for (const auto& e : j.at("causal_cross_machine_edges"))
            g.causal_edges.push_back({session_from_json(e.at("source")), session_from_json(e.at("dest")),
                                      enum_from_string<AccessType>(e.at("access").get<std::string>())});
        for (const auto& s : j.at("attack_sessions")) g.attack_sessions.push_back(session_from_json(s));
        for (const auto& a : j.at("attacks"))
            g.attacks.push_back({enum_from_string<AttackLabel>(a.at("label").get<std::string>()),
                                 a.at("chain_event_ids").get<std::vector<std::uint64_t>>()});
        for (const auto& a : j.value("access_types", nlohmann::json::array()))
            g.access_types.push_back({session_from_json(a.at("session")), a.at("logon_event_id").get<std::uint64_t>(),
                                      enum_from_string<AccessType>(a.at("access").get<std::string>())});
        for (const auto& r : j.value("reassignments", nlohmann::json::array()))
            g.reassignments.push_back({r.at("event_id").get<std::uint64_t>(), session_from_json(r.at("raw")),
                                       session_from_json(r.at("truth"))});
        g.attacker_window_ids = j.value("attacker_window_ids", std::vector<std::uint64_t>{});
        g.open_window = j.value("open_window", false);
        for (const auto& c : j.value("cascades", nlohmann::json::array()))
            g.cascades.push_back({session_from_json(c.at("session")), c.at("event_ids").get<std::vector<std::uint64_t>>()});
        g.escalations = j.value("escalations", std::size_t{0});
        g.truncated_chains = j.value("truncated_chains", std::size_t{0});
        g.events_sha256 = j.value("events_sha256", "");
        return g;
    } catch (const nlohmann::json::exception& ex) {
        throw ScenarioError(std::string("bad truth file: ") + ex.what());
    } catch (const std::invalid_argument& ex) {
        throw ScenarioError(std::string("bad truth file: ") + ex.what());
    } catch (const RecordError& ex) {
        throw ScenarioError(std::string("bad truth file: ") + ex.what());
    }
}

ForgeFiles write_forge_output(ForgeOutput& out, const std::filesystem::path& dir, bool force) {
    namespace fs = std::filesystem;
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw ScenarioError("output path is not a directory: " + dir.string());
        if (!force && !fs::is_empty(dir))
            throw ScenarioError("output directory exists and is not empty (use --force): " + dir.string());
    } else {
        fs::create_directories(dir);
    }
    ForgeFiles files{dir / "events.ndjson", dir / "truth.json", dir / "directory.json"};
    {
        std::ofstream f(files.events, std::ios::binary | std::ios::trunc);
        if (!f) throw ScenarioError("cannot write " + files.events.string());
        f << header_record() << '\n';
        for (const auto& e : out.events) f << serialize_record(e) << '\n';
        if (!f) throw ScenarioError("write failed: " + files.events.string());
    }
    out.truth.events_sha256 = sha256_file(files.events);
    {
        std::ofstream f(files.truth, std::ios::binary | std::ios::trunc);
        f << out.truth.to_json().dump(1) << '\n';
        if (!f) throw ScenarioError("write failed: " + files.truth.string());
    }
    {
        std::ofstream f(files.directory, std::ios::binary | std::ios::trunc);
        f << out.directory.to_json().dump(1) << '\n';
        if (!f) throw ScenarioError("write failed: " + files.directory.string());
    }
    return files;
}

} // namespace adtrace
