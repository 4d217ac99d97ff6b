#pragma once

#include "adtrace/attack_graph.hpp"
#include "adtrace/directory.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace adtrace {

enum class Tactic : std::uint8_t { Discovery, CredentialAccess, PrivilegeEscalation };
std::string_view to_string(Tactic v);
Tactic tactic_from_string(std::string_view text);

/// Technique rule over one system event. Every present field must match.
struct TtpRule {
    std::string id;
    Tactic tactic = Tactic::Discovery;
    std::string technique;
    SystemKind kind = SystemKind::ProcessCreate;
    std::optional<std::string> image;         // created image (ProcessCreate) or actor image, lower-case
    std::vector<std::string> command;         // substrings the command line must all contain, lower-case
    std::optional<std::string> target_image;  // ProcessAccess target, lower-case
    bool lsass_flag = false;

    bool matches(const TracedEvent& e) const;
};

std::vector<TtpRule> default_rules();
std::vector<TtpRule> rules_from_json(const nlohmann::json& j);
nlohmann::json rules_to_json(const std::vector<TtpRule>& rules);
/// A JSON array, or one JSON object per line. Throws std::invalid_argument.
std::vector<TtpRule> load_rules(const std::filesystem::path& path);
/// Throws std::invalid_argument when an lsass rule is not a credential access rule.
void validate_rules(const std::vector<TtpRule>& rules);

struct TacticTally {
    Tactic tactic = Tactic::Discovery;
    std::map<std::string, std::size_t> techniques;
    bool lsass = false;

    std::size_t frequency() const;
    std::size_t variety() const { return techniques.size(); }
};

struct ScoreConfig {
    std::map<Tactic, double> weights{
        {Tactic::CredentialAccess, 1.5}, {Tactic::Discovery, 1.0}, {Tactic::PrivilegeEscalation, 1.0}};
    std::map<AttackLabel, double> criticality{
        {AttackLabel::GoldenTicket, 4.0},  {AttackLabel::SilverTicket, 3.0},  {AttackLabel::PassTheTicket, 2.0},
        {AttackLabel::Kerberoasting, 2.0}, {AttackLabel::AsRepRoasting, 1.5}, {AttackLabel::PassTheHash, 1.0},
        {AttackLabel::Unknown, 1.0}};
    double lsass_bonus = 2.0;
    double threshold = 5.0;

    double weight(Tactic t) const;
    /// Throws std::invalid_argument on non-positive values or a weight ordering
    /// that does not favour credential access.
    void validate() const;
    nlohmann::json to_json() const;
    static ScoreConfig from_json(const nlohmann::json& j);
    static ScoreConfig load(const std::filesystem::path& path);
};

struct EdgeTallies {
    TacticTally discovery{Tactic::Discovery, {}, false};
    TacticTally credential{Tactic::CredentialAccess, {}, false};
    std::size_t escalations = 0;
};

struct EdgeScore {
    std::size_t cross_edge = 0;  // index into AttackGraph::cross_edges
    EdgeTallies tallies;
    double score = 0;            // TS_E
    bool domain_admin = false;
};

struct ScoredReport {
    AttackGraph graph;
    std::vector<EdgeScore> edges;
    double criticality = 1.0;
    double score = 0;  // TS_G
    bool verdict = false;
    std::size_t rank = 0;
    std::vector<std::string> warnings;
};

/// Matches are tallied over graph events on the edge's source-side hosts that
/// happen before the edge. Each event counts toward its first matching rule.
TacticTally check_discovery(const AttackGraph& g, const CrossEdge& edge, const std::vector<TtpRule>& rules);
TacticTally check_credential_access(const AttackGraph& g, const CrossEdge& edge, const std::vector<TtpRule>& rules);
std::size_t check_privilege_escalation(const AttackGraph& g, const CrossEdge& edge);

double tactic_term(double frequency, double variety, double weight);
double score_edge(const EdgeTallies& t, const ScoreConfig& cfg);
/// Sum over edges of TS_E * (DA + 1) * criticality.
double combine_edges(const std::vector<EdgeScore>& edges, double criticality);

/// Scores every cross-machine edge and flags matching nodes as ttp.
ScoredReport score_graph(AttackGraph g, const std::vector<TtpRule>& rules, const ScoreConfig& cfg,
                         const Directory* directory = nullptr);
/// Descending score; ties go to the earlier alert. Sets rank and verdict.
std::vector<ScoredReport> rank(std::vector<ScoredReport> reports, const ScoreConfig& cfg);

nlohmann::json tally_to_json(const TacticTally& t);
nlohmann::json report_to_json(const ScoredReport& r);

} // namespace adtrace
