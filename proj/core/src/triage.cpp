#include "adtrace/triage.hpp"

#include "adtrace/event_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace adtrace {

namespace {

const std::array<const char*, 3> kTacticNames = {"Discovery", "CredentialAccess", "PrivilegeEscalation"};

TtpRule rule(std::string id, Tactic tactic, std::string technique, std::optional<std::string> image,
             std::vector<std::string> command) {
    TtpRule r;
    r.id = std::move(id);
    r.tactic = tactic;
    r.technique = std::move(technique);
    r.image = std::move(image);
    r.command = std::move(command);
    return r;
}

/// Hosts whose activity can lead to `edge`: its source host and every host
/// with an earlier chain of cross-machine edges into it.
std::set<Symbol> source_side_hosts(const AttackGraph& g, const CrossEdge& edge) {
    std::set<Symbol> hosts{edge.source.host.fqdn};
    for (bool grew = true; grew;) {
        grew = false;
        for (const auto& x : g.cross_edges)
            if (x.time <= edge.time && hosts.count(x.dest.host.fqdn) && hosts.insert(x.source.host.fqdn).second)
                grew = true;
    }
    return hosts;
}

TacticTally tally(const AttackGraph& g, const CrossEdge& edge, const std::vector<TtpRule>& rules, Tactic tactic) {
    TacticTally t;
    t.tactic = tactic;
    auto hosts = source_side_hosts(g, edge);
    for (const auto& e : g.events) {
        if (e.time >= edge.time) break;
        if (!hosts.count(e.host.fqdn)) continue;
        for (const auto& r : rules) {
            if (!r.matches(e)) continue;
            if (r.tactic == tactic) {
                ++t.techniques[r.technique];
                if (r.lsass_flag) t.lsass = true;
            }
            break;
        }
    }
    return t;
}

} // namespace

std::string_view to_string(Tactic v) { return kTacticNames[static_cast<std::size_t>(v)]; }

Tactic tactic_from_string(std::string_view text) {
    for (std::size_t i = 0; i < kTacticNames.size(); ++i)
        if (text == kTacticNames[i]) return static_cast<Tactic>(i);
    throw std::invalid_argument("unknown tactic: " + std::string(text));
}

bool TtpRule::matches(const TracedEvent& e) const {
    if (e.kind != kind) return false;
    if (image) {
        const std::string& actual = kind == SystemKind::ProcessCreate ? e.object_image : e.subject_image;
        if (actual != *image) return false;
    }
    if (target_image && e.object_image != *target_image) return false;
    if (!command.empty()) {
        std::string line = to_lower(e.command_line);
        for (const auto& part : command)
            if (line.find(part) == std::string::npos) return false;
    }
    return true;
}

std::vector<TtpRule> default_rules() {
    using T = Tactic;
    std::vector<TtpRule> r = {
        rule("D-net-localgroup", T::Discovery, "Local Groups", "net.exe", {"localgroup"}),
        rule("D-net-group", T::Discovery, "Domain Groups", "net.exe", {"group"}),
        rule("D-net-user-domain", T::Discovery, "Domain Account", "net.exe", {"user", "/domain"}),
        rule("D-setspn", T::Discovery, "SPN Scan", "setspn.exe", {}),
        rule("D-netstat", T::Discovery, "System Network Connections", "netstat.exe", {}),
        rule("D-nltest", T::Discovery, "Domain Trust", "nltest.exe", {}),
        rule("D-whoami", T::Discovery, "System Owner/User", "whoami.exe", {}),
        rule("D-quser", T::Discovery, "System Owner/User", "quser.exe", {}),
        rule("D-ipconfig", T::Discovery, "System Network Configuration", "ipconfig.exe", {}),
        rule("D-net-view", T::Discovery, "Network Share", "net.exe", {"view"}),
    };
    TtpRule lsass;
    lsass.id = "C-lsass-access";
    lsass.tactic = T::CredentialAccess;
    lsass.technique = "LSASS Memory";
    lsass.kind = SystemKind::ProcessAccess;
    lsass.target_image = "lsass.exe";
    lsass.lsass_flag = true;
    r.push_back(std::move(lsass));
    r.push_back(rule("C-reg-save-sam", T::CredentialAccess, "Security Account Manager", "reg.exe", {"save", "sam"}));
    r.push_back(rule("C-ntdsutil", T::CredentialAccess, "NTDS", "ntdsutil.exe", {}));
    r.push_back(rule("C-vssadmin", T::CredentialAccess, "NTDS", "vssadmin.exe", {"shadow"}));
    r.push_back(rule("C-kerberoast", T::CredentialAccess, "Kerberoasting", std::nullopt, {"kerberoast"}));
    r.push_back(rule("C-asreproast", T::CredentialAccess, "AS-REP Roasting", std::nullopt, {"asreproast"}));
    r.push_back(rule("C-dcsync", T::CredentialAccess, "DCSync", std::nullopt, {"lsadump::dcsync"}));
    r.push_back(rule("C-golden", T::CredentialAccess, "Golden Ticket", std::nullopt, {"kerberos::golden"}));
    r.push_back(rule("C-tickets", T::CredentialAccess, "Steal Tickets", std::nullopt, {"sekurlsa::tickets"}));
    return r;
}

std::vector<TtpRule> rules_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw std::invalid_argument("rule set must be an array");
    std::vector<TtpRule> out;
    for (const auto& x : j) {
        TtpRule r;
        r.id = x.at("id").get<std::string>();
        r.tactic = tactic_from_string(x.at("tactic").get<std::string>());
        r.technique = x.at("technique").get<std::string>();
        if (x.contains("kind")) r.kind = enum_from_string<SystemKind>(x.at("kind").get<std::string>());
        if (x.contains("image")) r.image = to_lower(x.at("image").get<std::string>());
        if (x.contains("command"))
            for (const auto& c : x.at("command")) r.command.push_back(to_lower(c.get<std::string>()));
        if (x.contains("target_image")) r.target_image = to_lower(x.at("target_image").get<std::string>());
        r.lsass_flag = x.value("lsass", false);
        out.push_back(std::move(r));
    }
    validate_rules(out);
    return out;
}

nlohmann::json rules_to_json(const std::vector<TtpRule>& rules) {
    auto out = nlohmann::json::array();
    for (const auto& r : rules) {
        nlohmann::json x{{"id", r.id}, {"tactic", to_string(r.tactic)}, {"technique", r.technique},
                         {"kind", to_string(r.kind)}};
        if (r.image) x["image"] = *r.image;
        if (!r.command.empty()) x["command"] = r.command;
        if (r.target_image) x["target_image"] = *r.target_image;
        if (r.lsass_flag) x["lsass"] = true;
        out.push_back(std::move(x));
    }
    return out;
}

std::vector<TtpRule> load_rules(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read rule file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    auto first = text.find_first_not_of(" \t\r\n");
    try {
        if (first != std::string::npos && text[first] == '[') return rules_from_json(nlohmann::json::parse(text));
        auto arr = nlohmann::json::array();
        std::istringstream lines(text);
        std::string line;
        while (std::getline(lines, line))
            if (line.find_first_not_of(" \t\r") != std::string::npos) arr.push_back(nlohmann::json::parse(line));
        return rules_from_json(arr);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("malformed rule file " + path.string() + ": " + e.what());
    }
}

void validate_rules(const std::vector<TtpRule>& rules) {
    std::set<std::string> ids;
    for (const auto& r : rules) {
        if (r.lsass_flag && r.tactic != Tactic::CredentialAccess)
            throw std::invalid_argument("rule " + r.id + ": lsass rules must be credential access");
        if (r.tactic == Tactic::PrivilegeEscalation)
            throw std::invalid_argument("rule " + r.id + ": escalations come from the graph, not rules");
        if (!ids.insert(r.id).second) throw std::invalid_argument("duplicate rule id " + r.id);
    }
}

std::size_t TacticTally::frequency() const {
    std::size_t n = 0;
    for (const auto& [name, count] : techniques) n += count;
    return n;
}

double ScoreConfig::weight(Tactic t) const {
    auto it = weights.find(t);
    return it == weights.end() ? 1.0 : it->second;
}

void ScoreConfig::validate() const {
    for (const auto& [t, w] : weights)
        if (!(w > 0)) throw std::invalid_argument("weight of " + std::string(to_string(t)) + " must be positive");
    for (const auto& [l, c] : criticality)
        if (!(c > 0)) throw std::invalid_argument("criticality of " + std::string(to_string(l)) + " must be positive");
    if (!(lsass_bonus > 0)) throw std::invalid_argument("lsass bonus must be positive");
    if (!(threshold > 0)) throw std::invalid_argument("threshold must be positive");
    double ca = weight(Tactic::CredentialAccess);
    if (!(ca > weight(Tactic::Discovery) && ca > weight(Tactic::PrivilegeEscalation)))
        throw std::invalid_argument("credential access must carry the largest weight");
}

nlohmann::json ScoreConfig::to_json() const {
    nlohmann::json j;
    for (const auto& [t, w] : weights) j["weights"][std::string(to_string(t))] = w;
    for (const auto& [l, c] : criticality) j["criticality"][std::string(to_string(l))] = c;
    j["lsass_bonus"] = lsass_bonus;
    j["threshold"] = threshold;
    return j;
}

ScoreConfig ScoreConfig::from_json(const nlohmann::json& j) {
    ScoreConfig c;
    try {
        if (j.contains("weights"))
            for (const auto& [k, v] : j.at("weights").items()) c.weights[tactic_from_string(k)] = v.get<double>();
        if (j.contains("criticality"))
            for (const auto& [k, v] : j.at("criticality").items())
                c.criticality[enum_from_string<AttackLabel>(k)] = v.get<double>();
        c.lsass_bonus = j.value("lsass_bonus", c.lsass_bonus);
        c.threshold = j.value("threshold", c.threshold);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed score config: ") + e.what());
    }
    c.validate();
    return c;
}

ScoreConfig ScoreConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read score config " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("malformed score config " + path.string() + ": " + e.what());
    }
}

TacticTally check_discovery(const AttackGraph& g, const CrossEdge& edge, const std::vector<TtpRule>& rules) {
    return tally(g, edge, rules, Tactic::Discovery);
}

TacticTally check_credential_access(const AttackGraph& g, const CrossEdge& edge, const std::vector<TtpRule>& rules) {
    return tally(g, edge, rules, Tactic::CredentialAccess);
}

std::size_t check_privilege_escalation(const AttackGraph& g, const CrossEdge& edge) {
    auto hosts = source_side_hosts(g, edge);
    return static_cast<std::size_t>(std::count_if(g.escalations.begin(), g.escalations.end(), [&](const EscalationMark& m) {
        return m.time < edge.time && hosts.count(m.to_session.host.fqdn);
    }));
}

double tactic_term(double frequency, double variety, double weight) {
    double base = frequency * variety;
    if (base <= 0) return 0;
    return std::pow(base, weight);
}

double score_edge(const EdgeTallies& t, const ScoreConfig& cfg) {
    double ca = static_cast<double>(t.credential.frequency() * t.credential.variety());
    if (t.credential.lsass) ca *= cfg.lsass_bonus;
    double pe = static_cast<double>(t.escalations);
    return tactic_term(static_cast<double>(t.discovery.frequency()), static_cast<double>(t.discovery.variety()),
                       cfg.weight(Tactic::Discovery)) +
           tactic_term(ca, 1.0, cfg.weight(Tactic::CredentialAccess)) +
           tactic_term(pe, pe > 0 ? 1.0 : 0.0, cfg.weight(Tactic::PrivilegeEscalation));
}

double combine_edges(const std::vector<EdgeScore>& edges, double criticality) {
    double total = 0;
    for (const auto& e : edges) total += e.score * (e.domain_admin ? 2.0 : 1.0) * criticality;
    return total;
}

ScoredReport score_graph(AttackGraph g, const std::vector<TtpRule>& rules, const ScoreConfig& cfg,
                         const Directory* directory) {
    ScoredReport r;
    for (std::size_t i = 0; i < g.cross_edges.size(); ++i) {
        const CrossEdge& x = g.cross_edges[i];
        EdgeScore e;
        e.cross_edge = i;
        e.tallies.discovery = check_discovery(g, x, rules);
        e.tallies.credential = check_credential_access(g, x, rules);
        e.tallies.escalations = check_privilege_escalation(g, x);
        e.score = score_edge(e.tallies, cfg);
        if (directory)
            e.domain_admin = directory->is_domain_admin(x.source_principal) || directory->is_domain_admin(x.dest_principal);
        r.edges.push_back(std::move(e));
    }
    auto crit = cfg.criticality.find(g.label);
    if (crit == cfg.criticality.end()) {
        r.criticality = 1.0;
        r.warnings.push_back("no criticality for " + std::string(to_string(g.label)) + "; using 1.0");
    } else {
        r.criticality = crit->second;
    }
    r.score = combine_edges(r.edges, r.criticality);
    r.verdict = r.score >= cfg.threshold;

    std::unordered_map<std::uint64_t, std::vector<std::size_t>> nodes_of;
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        for (std::uint64_t id : g.nodes[i].event_ids) nodes_of[id].push_back(i);
    for (const auto& e : g.events) {
        bool hit = std::any_of(rules.begin(), rules.end(), [&](const TtpRule& rl) { return rl.matches(e); });
        if (!hit) continue;
        for (std::size_t n : nodes_of[e.id])
            if (g.nodes[n].kind == NodeKind::process) g.nodes[n].ttp = true;
    }
    r.graph = std::move(g);
    return r;
}

std::vector<ScoredReport> rank(std::vector<ScoredReport> reports, const ScoreConfig& cfg) {
    std::stable_sort(reports.begin(), reports.end(), [](const ScoredReport& a, const ScoredReport& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.graph.alert_time != b.graph.alert_time) return a.graph.alert_time < b.graph.alert_time;
        return a.graph.alert_id < b.graph.alert_id;
    });
    for (std::size_t i = 0; i < reports.size(); ++i) {
        reports[i].rank = i + 1;
        reports[i].verdict = reports[i].score >= cfg.threshold;
    }
    return reports;
}

nlohmann::json tally_to_json(const TacticTally& t) {
    nlohmann::json j{{"tactic", to_string(t.tactic)},
                     {"frequency", t.frequency()},
                     {"variety", t.variety()},
                     {"techniques", t.techniques}};
    if (t.tactic == Tactic::CredentialAccess) j["lsass"] = t.lsass;
    return j;
}

nlohmann::json report_to_json(const ScoredReport& r) {
    nlohmann::json j{{"alert_id", r.graph.alert_id},
                     {"label", to_string(r.graph.label)},
                     {"alert_time", r.graph.alert_time},
                     {"rank", r.rank},
                     {"score", r.score},
                     {"criticality", r.criticality},
                     {"verdict", r.verdict}};
    j["edges"] = nlohmann::json::array();
    for (const auto& e : r.edges) {
        const CrossEdge& x = r.graph.cross_edges[e.cross_edge];
        j["edges"].push_back({{"source", session_to_json(x.source)},
                              {"dest", session_to_json(x.dest)},
                              {"access", to_string(x.access)},
                              {"time", x.time},
                              {"discovery", tally_to_json(e.tallies.discovery)},
                              {"credential_access", tally_to_json(e.tallies.credential)},
                              {"privilege_escalation", e.tallies.escalations},
                              {"score", e.score},
                              {"domain_admin", e.domain_admin}});
    }
    if (!r.warnings.empty()) j["warnings"] = r.warnings;
    return j;
}

} // namespace adtrace
