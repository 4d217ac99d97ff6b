#include "adtrace/attack_graph.hpp"

#include "adtrace/event_io.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_map>

namespace adtrace {

namespace {

const std::array<const char*, 6> kNodeKindNames = {"process", "file", "socket", "principal", "host", "meta"};
const std::array<const char*, 8> kEdgeKindNames = {"spawned", "read", "wrote", "connected",
                                                   "accessed", "logged_on", "escalated", "authenticated"};

std::string process_key(const ProcessRef& p) {
    return "p|" + p.host.fqdn.str() + "|" + std::to_string(p.pid) + "|" + std::to_string(p.start_time);
}

std::string session_label(const PrincipalId& p, const LogonSessionKey& k) {
    return p.name.str() + " " + format_logon_id(k.local_id);
}

class Builder {
public:
    explicit Builder(AttackGraph& g) : g_(g) {}

    std::size_t node(const std::string& key, NodeKind kind, const std::string& label) {
        auto [it, fresh] = index_.try_emplace(key, g_.nodes.size());
        if (fresh) {
            GraphNode n;
            n.kind = kind;
            n.label = label;
            g_.nodes.push_back(std::move(n));
        }
        return it->second;
    }

    std::size_t process(const ProcessRef& p, const LogonSessionKey* session) {
        std::size_t i = node(process_key(p), NodeKind::process, p.image_name());
        GraphNode& n = g_.nodes[i];
        if (!n.process) {
            n.process = p;
            n.host = p.host;
        }
        if (session && !n.session) n.session = *session;
        return i;
    }

    void edge(std::size_t from, std::size_t to, EdgeKind kind, Timestamp time, std::vector<std::uint64_t> ids,
              std::optional<AccessType> access = std::nullopt) {
        g_.edges.push_back({from, to, kind, time, std::move(ids), access});
    }

    void add_event(const TracedEvent& e) {
        switch (e.kind) {
        case SystemKind::ProcessCreate: {
            std::size_t parent = process(e.subject, nullptr);
            std::size_t child = process(*e.object_process, &e.session);
            g_.nodes[child].session = e.session;
            g_.nodes[child].event_ids.push_back(e.id);
            edge(parent, child, EdgeKind::spawned, e.time, {e.id});
            by_event_[e.id] = {parent, child};
            break;
        }
        case SystemKind::ProcessTerminate: {
            std::size_t p = process(e.subject, &e.session);
            g_.nodes[p].event_ids.push_back(e.id);
            break;
        }
        case SystemKind::FileRead:
        case SystemKind::FileWrite:
        case SystemKind::RegistryAccess: {
            std::size_t p = process(e.subject, &e.session);
            std::size_t f = node("f|" + e.host.fqdn.str() + "|" + e.object_path, NodeKind::file, e.object_path);
            g_.nodes[f].host = e.host;
            g_.nodes[f].event_ids.push_back(e.id);
            if (e.kind == SystemKind::FileRead)
                edge(f, p, EdgeKind::read, e.time, {e.id});
            else
                edge(p, f, e.kind == SystemKind::FileWrite ? EdgeKind::wrote : EdgeKind::accessed, e.time, {e.id});
            by_event_[e.id] = {p, f};
            break;
        }
        case SystemKind::ProcessAccess: {
            std::size_t p = process(e.subject, &e.session);
            std::size_t t = e.object_process ? process(*e.object_process, nullptr)
                                             : node("x|" + e.object_image, NodeKind::process, e.object_image);
            edge(p, t, EdgeKind::accessed, e.time, {e.id});
            g_.nodes[p].event_ids.push_back(e.id);
            by_event_[e.id] = {p, t};
            break;
        }
        case SystemKind::NetworkConnect: {
            std::size_t p = process(e.subject, &e.session);
            std::size_t s = node("s|" + e.host.fqdn.str() + "|" + e.object_path, NodeKind::socket, e.object_path);
            g_.nodes[s].host = e.host;
            g_.nodes[s].external = !e.remote_domain;
            g_.nodes[s].event_ids.push_back(e.id);
            edge(p, s, EdgeKind::connected, e.time, {e.id});
            by_event_[e.id] = {p, s};
            break;
        }
        }
    }

    std::size_t principal_node(const SessionCluster& c) {
        std::size_t i = node("u|" + c.primary.display(), NodeKind::principal, session_label(c.principal, c.primary));
        g_.nodes[i].host = c.primary.host;
        g_.nodes[i].session = c.primary;
        return i;
    }

    std::size_t session_node(const LogonSessionKey& k) {
        if (const SessionCluster* c = g_.cluster_of(k)) return principal_node(*c);
        std::size_t i = node("u|" + k.display(), NodeKind::principal, format_logon_id(k.local_id));
        g_.nodes[i].host = k.host;
        g_.nodes[i].session = k;
        return i;
    }

    std::optional<std::pair<std::size_t, std::size_t>> endpoints(std::uint64_t id) const {
        auto it = by_event_.find(id);
        if (it == by_event_.end()) return std::nullopt;
        return it->second;
    }

private:
    AttackGraph& g_;
    std::unordered_map<std::string, std::size_t> index_;
    std::unordered_map<std::uint64_t, std::pair<std::size_t, std::size_t>> by_event_;
};

std::string dot_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

const char* dot_shape(NodeKind k) {
    switch (k) {
    case NodeKind::process: return "box";
    case NodeKind::file: return "note";
    case NodeKind::socket: return "diamond";
    case NodeKind::principal: return "ellipse";
    case NodeKind::host: return "house";
    case NodeKind::meta: return "box3d";
    }
    return "box";
}

} // namespace

std::string_view to_string(NodeKind v) { return kNodeKindNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(EdgeKind v) { return kEdgeKindNames[static_cast<std::size_t>(v)]; }

bool is_escalation(TokenElevation from_e, IntegrityLevel from_i, TokenElevation to_e, IntegrityLevel to_i) {
    if (from_e == TokenElevation::limited && to_e == TokenElevation::full) return true;
    return static_cast<int>(to_i) > static_cast<int>(from_i);
}

bool SessionCluster::contains(const LogonSessionKey& k) const {
    return primary == k || std::find(linked.begin(), linked.end(), k) != linked.end();
}

std::vector<LogonSessionKey> SessionCluster::sessions() const {
    std::vector<LogonSessionKey> out{primary};
    out.insert(out.end(), linked.begin(), linked.end());
    return out;
}

const SessionCluster* AttackGraph::cluster_of(const LogonSessionKey& k) const {
    for (const auto& c : clusters)
        if (c.contains(k)) return &c;
    return nullptr;
}

std::size_t AttackGraph::node_count(NodeKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [&](const GraphNode& n) { return n.kind == kind; }));
}

void build_graph_structure(AttackGraph& g) {
    g.nodes.clear();
    g.edges.clear();
    Builder b(g);
    for (const auto& e : g.events) b.add_event(e);

    for (const auto& c : g.clusters) {
        std::size_t u = b.principal_node(c);
        std::size_t h = b.node("h|" + c.primary.host.fqdn.str(), NodeKind::host, c.primary.host.fqdn.str());
        g.nodes[h].host = c.primary.host;
        b.edge(u, h, EdgeKind::logged_on, 0, c.logon_event_id ? std::vector<std::uint64_t>{*c.logon_event_id}
                                                               : std::vector<std::uint64_t>{});
    }
    for (const auto& x : g.cross_edges) {
        std::size_t src = b.session_node(x.source);
        std::size_t dst = b.session_node(x.dest);
        g.nodes[src].pinned = g.nodes[dst].pinned = true;
        for (std::uint64_t id : x.evidence_ids) {
            if (auto ends = b.endpoints(id)) {
                g.nodes[ends->first].pinned = true;
                b.edge(ends->second, dst, EdgeKind::logged_on, x.time, x.evidence_ids, x.access);
                src = g.nodes.size();
                break;
            }
        }
        if (src != g.nodes.size()) b.edge(src, dst, EdgeKind::logged_on, x.time, x.evidence_ids, x.access);
    }
    for (const auto& m : g.escalations) {
        if (auto ends = b.endpoints(m.event_id)) {
            g.nodes[ends->first].pinned = g.nodes[ends->second].pinned = true;
            b.edge(ends->first, ends->second, EdgeKind::escalated, m.time, {m.event_id});
        }
    }
    for (const auto& n : g.hlg.nodes) {
        if (n.kind == HlgNode::Kind::host) {
            std::size_t h = b.node("h|" + n.name, NodeKind::host, n.name);
            (void)h;
        } else {
            b.node("a|" + n.name, NodeKind::principal, n.name);
        }
    }
    for (const auto& e : g.hlg.edges) {
        if (!e.present) continue;
        const HlgNode& a = g.hlg.nodes[e.from];
        const HlgNode& z = g.hlg.nodes[e.to];
        auto key = [](const HlgNode& n) { return (n.kind == HlgNode::Kind::host ? "h|" : "a|") + n.name; };
        std::size_t from = b.node(key(a), a.kind == HlgNode::Kind::host ? NodeKind::host : NodeKind::principal, a.name);
        std::size_t to = b.node(key(z), z.kind == HlgNode::Kind::host ? NodeKind::host : NodeKind::principal, z.name);
        if (from != to) b.edge(from, to, EdgeKind::authenticated, g.alert_time, {});
    }
}

std::vector<MetaPattern> default_meta_patterns() {
    return {
        {"desktop-startup",
         "userinit.exe",
         {"explorer.exe", "outlook.exe", "chrome.exe", "onedrive.exe", "securityhealthsystray.exe", "ctfmon.exe",
          "teams.exe", "runtimebroker.exe", "taskhostw.exe", "msascuil.exe", "sihost.exe", "notepad++.exe",
          "smartscreen.exe"}},
        {"session-manager-boot",
         "smss.exe",
         {"wininit.exe", "winlogon.exe", "services.exe", "lsass.exe", "svchost.exe"}},
    };
}

std::vector<MetaPattern> meta_patterns_from_json(const nlohmann::json& j) {
    std::vector<MetaPattern> out;
    for (const auto& p : j) {
        MetaPattern m;
        m.name = p.at("name").get<std::string>();
        m.root_image = to_lower(p.at("root").get<std::string>());
        for (const auto& s : p.at("members")) m.member_images.push_back(to_lower(s.get<std::string>()));
        out.push_back(std::move(m));
    }
    return out;
}

AttackGraph collapse_meta_nodes(const AttackGraph& g, const std::vector<MetaPattern>& patterns) {
    std::vector<std::vector<std::size_t>> children(g.nodes.size());
    for (const auto& e : g.edges)
        if (e.kind == EdgeKind::spawned) children[e.from].push_back(e.to);

    std::vector<std::size_t> group_of(g.nodes.size(), SIZE_MAX);
    std::vector<std::vector<std::size_t>> groups;
    std::vector<const MetaPattern*> group_pattern;
    auto foldable = [&](std::size_t i) {
        const GraphNode& n = g.nodes[i];
        return n.kind == NodeKind::process && !n.ttp && !n.pinned && group_of[i] == SIZE_MAX;
    };
    for (const auto& pat : patterns) {
        std::set<std::string> members(pat.member_images.begin(), pat.member_images.end());
        for (std::size_t r = 0; r < g.nodes.size(); ++r) {
            if (!foldable(r) || g.nodes[r].label != pat.root_image) continue;
            std::vector<std::size_t> group{r};
            group_of[r] = groups.size();
            for (std::size_t k = 0; k < group.size(); ++k)
                for (std::size_t c : children[group[k]])
                    if (foldable(c) && members.count(g.nodes[c].label)) {
                        group_of[c] = groups.size();
                        group.push_back(c);
                    }
            if (group.size() < 2) {
                group_of[r] = SIZE_MAX;
                continue;
            }
            groups.push_back(std::move(group));
            group_pattern.push_back(&pat);
        }
    }
    if (groups.empty()) return g;

    AttackGraph out = g;
    out.nodes.clear();
    out.edges.clear();
    std::vector<std::size_t> remap(g.nodes.size());
    std::vector<std::size_t> meta_index(groups.size(), SIZE_MAX);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        std::size_t grp = group_of[i];
        if (grp == SIZE_MAX) {
            remap[i] = out.nodes.size();
            out.nodes.push_back(g.nodes[i]);
            continue;
        }
        if (meta_index[grp] == SIZE_MAX) {
            const GraphNode& root = g.nodes[groups[grp].front()];
            GraphNode m;
            m.kind = NodeKind::meta;
            m.label = group_pattern[grp]->name;
            m.host = root.host;
            m.session = root.session;
            m.process = root.process;
            m.members = 0;
            meta_index[grp] = out.nodes.size();
            out.nodes.push_back(std::move(m));
        }
        GraphNode& m = out.nodes[meta_index[grp]];
        m.members += 1;
        m.event_ids.insert(m.event_ids.end(), g.nodes[i].event_ids.begin(), g.nodes[i].event_ids.end());
        remap[i] = meta_index[grp];
    }
    std::map<std::tuple<std::size_t, std::size_t, EdgeKind>, std::size_t> merged;
    for (const auto& e : g.edges) {
        std::size_t from = remap[e.from], to = remap[e.to];
        if (from == to && out.nodes[from].kind == NodeKind::meta) {
            auto& ids = out.nodes[from].event_ids;
            ids.insert(ids.end(), e.event_ids.begin(), e.event_ids.end());
            continue;
        }
        bool touches_meta = out.nodes[from].kind == NodeKind::meta || out.nodes[to].kind == NodeKind::meta;
        auto key = std::make_tuple(from, to, e.kind);
        if (touches_meta) {
            auto it = merged.find(key);
            if (it != merged.end()) {
                auto& ge = out.edges[it->second];
                ge.event_ids.insert(ge.event_ids.end(), e.event_ids.begin(), e.event_ids.end());
                ge.time = std::min(ge.time, e.time);
                continue;
            }
            merged[key] = out.edges.size();
        }
        GraphEdge ne = e;
        ne.from = from;
        ne.to = to;
        out.edges.push_back(std::move(ne));
    }
    for (auto& n : out.nodes)
        if (n.kind == NodeKind::meta) {
            std::sort(n.event_ids.begin(), n.event_ids.end());
            n.event_ids.erase(std::unique(n.event_ids.begin(), n.event_ids.end()), n.event_ids.end());
        }
    return out;
}

std::string to_dot(const AttackGraph& g) {
    std::ostringstream os;
    os << "digraph attack_" << g.alert_id << " {\n";
    os << "  rankdir=LR;\n  node [fontname=\"Helvetica\", fontsize=10];\n";
    os << "  label=\"alert " << g.alert_id << " " << to_string(g.label) << "\";\n";
    std::map<std::string, std::vector<std::size_t>> by_host;
    std::vector<std::size_t> floating;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const GraphNode& n = g.nodes[i];
        if (n.host && !n.external)
            by_host[n.host->fqdn.str()].push_back(i);
        else
            floating.push_back(i);
    }
    auto emit_node = [&](std::size_t i, const char* indent) {
        const GraphNode& n = g.nodes[i];
        os << indent << "n" << i << " [label=\"" << dot_escape(n.label);
        if (n.kind == NodeKind::meta) os << " (" << n.members << ")";
        os << "\", shape=" << dot_shape(n.kind);
        if (n.session) os << ", session=\"" << dot_escape(n.session->display()) << "\"";
        if (n.ttp) os << ", color=red, penwidth=2";
        if (n.external) os << ", style=filled, fillcolor=\"#f4cccc\"";
        os << "];\n";
    };
    std::size_t k = 0;
    for (const auto& [host, ids] : by_host) {
        os << "  subgraph cluster_" << k++ << " {\n    label=\"" << dot_escape(host) << "\";\n";
        for (std::size_t i : ids) emit_node(i, "    ");
        os << "  }\n";
    }
    for (std::size_t i : floating) emit_node(i, "  ");
    for (const auto& e : g.edges) {
        os << "  n" << e.from << " -> n" << e.to << " [label=\"" << to_string(e.kind);
        if (e.access) os << " " << to_string(*e.access);
        os << "\"";
        if (e.kind == EdgeKind::logged_on && e.access) os << ", color=blue, penwidth=2.5, style=bold";
        if (e.kind == EdgeKind::escalated) os << ", color=orange, style=dashed";
        if (e.kind == EdgeKind::authenticated) os << ", color=gray, style=dotted";
        os << "];\n";
    }
    os << "}\n";
    return os.str();
}

nlohmann::json cluster_to_json(const SessionCluster& c) {
    nlohmann::json j;
    j["primary"] = session_to_json(c.primary);
    j["linked"] = nlohmann::json::array();
    for (const auto& k : c.linked) j["linked"].push_back(session_to_json(k));
    j["access"] = to_string(c.access);
    j["principal"] = principal_to_json(c.principal);
    j["open_window"] = c.open_window;
    if (c.true_identity_window)
        j["true_identity_window"] = {c.true_identity_window->begin, c.true_identity_window->end};
    j["slices"] = nlohmann::json::array();
    for (const auto& s : c.slices)
        j["slices"].push_back({{"session", session_to_json(s.session)},
                               {"begin", s.span.begin},
                               {"end", s.span.end},
                               {"root", process_to_json(s.root)},
                               {"event_ids", s.event_ids}});
    return j;
}

nlohmann::json graph_to_json(const AttackGraph& g) {
    using nlohmann::json;
    json j;
    j["alert_id"] = g.alert_id;
    j["label"] = to_string(g.label);
    j["alert_time"] = g.alert_time;
    j["high_level_graph"] = hlg_to_json(g.hlg);
    j["nodes"] = json::array();
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const GraphNode& n = g.nodes[i];
        json x{{"id", i}, {"kind", to_string(n.kind)}, {"label", n.label}, {"event_ids", n.event_ids}};
        if (n.host) x["host"] = n.host->fqdn.str();
        if (n.session) x["session"] = session_to_json(*n.session);
        if (n.kind == NodeKind::meta) x["members"] = n.members;
        if (n.external) x["external"] = true;
        if (n.ttp) x["ttp"] = true;
        j["nodes"].push_back(std::move(x));
    }
    j["edges"] = json::array();
    for (const auto& e : g.edges) {
        json x{{"from", e.from}, {"to", e.to}, {"kind", to_string(e.kind)}, {"time", e.time}, {"event_ids", e.event_ids}};
        if (e.access) x["access"] = to_string(*e.access);
        j["edges"].push_back(std::move(x));
    }
    j["cross_edges"] = json::array();
    for (const auto& x : g.cross_edges)
        j["cross_edges"].push_back({{"source", session_to_json(x.source)},
                                    {"dest", session_to_json(x.dest)},
                                    {"access", to_string(x.access)},
                                    {"time", x.time},
                                    {"source_principal", principal_to_json(x.source_principal)},
                                    {"dest_principal", principal_to_json(x.dest_principal)},
                                    {"evidence_ids", x.evidence_ids}});
    j["escalations"] = json::array();
    for (const auto& m : g.escalations)
        j["escalations"].push_back({{"from", session_to_json(m.from_session)},
                                    {"to", session_to_json(m.to_session)},
                                    {"time", m.time},
                                    {"from_elevation", to_string(m.from_elevation)},
                                    {"to_elevation", to_string(m.to_elevation)},
                                    {"from_integrity", to_string(m.from_integrity)},
                                    {"to_integrity", to_string(m.to_integrity)},
                                    {"event_id", m.event_id}});
    j["clusters"] = json::array();
    for (const auto& c : g.clusters) j["clusters"].push_back(cluster_to_json(c));
    j["provenance_event_ids"] = g.provenance;
    return j;
}

} // namespace adtrace
