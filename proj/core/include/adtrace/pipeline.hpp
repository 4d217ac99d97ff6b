#pragma once

#include "adtrace/attack_graph.hpp"
#include "adtrace/directory.hpp"
#include "adtrace/log_store.hpp"
#include "adtrace/scenario.hpp"
#include "adtrace/sentinel.hpp"
#include "adtrace/tracer.hpp"
#include "adtrace/triage.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace adtrace {

std::string_view tool_version();

struct DetectOptions {
    SentinelConfig sentinel;
    TracerConfig tracer;
    ScoreConfig score;
    std::vector<TtpRule> rules = default_rules();
    std::vector<MetaPattern> meta_patterns = default_meta_patterns();
    std::optional<Directory> directory;
    bool collapse = true;
    /// Off: every stage-1 alert counts as a stage-2 positive.
    bool triage = true;
};

struct AlertTiming {
    std::size_t alert_id = 0;
    double stage1_ms = 0;
    double stage2_ms = 0;
};

struct RunManifest {
    std::string tool_version;
    std::vector<std::string> inputs;
    std::vector<std::string> configs;
    std::optional<std::uint64_t> seed;
    std::size_t event_count = 0;
    std::vector<AlertTiming> alerts;
    double stage1_total_ms = 0;
    double stage2_total_ms = 0;
    /// Store lookups issued by stage 2.
    std::uint64_t stage2_queries = 0;
    std::vector<std::string> outputs;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

struct DetectionResult {
    std::vector<AnomalyAlert> alerts;
    std::vector<ScoredReport> reports;  // ranked
    RunManifest manifest;
};

/// Stage 1 over the whole store, then stage 2 once per alert.
DetectionResult run_detection(const EventStore& store, const DetectOptions& opt);

/// What one alert amounted to, in terms comparable with ground truth.
struct AlertOutcome {
    std::size_t alert_id = 0;
    AttackLabel label = AttackLabel::Unknown;
    std::vector<std::uint64_t> chain_event_ids;  // sorted
    bool positive = false;                       // stage-2 verdict
    double score = 0;
    std::vector<TruthEdge> edges;
};

std::vector<AlertOutcome> outcomes(const DetectionResult& r, const EventStore& store);
nlohmann::json outcomes_to_json(const std::vector<AlertOutcome>& v);
std::vector<AlertOutcome> outcomes_from_json(const nlohmann::json& j);

struct StageCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

struct Percentiles {
    std::size_t count = 0;
    double p50 = 0, p90 = 0, p99 = 0, max = 0;
};
Percentiles percentiles(std::vector<double> values);

struct EvalMetrics {
    StageCounts stage1;
    StageCounts stage2;
    std::size_t truth_edges = 0;
    std::size_t predicted_edges = 0;
    std::size_t matched_edges = 0;
    double edge_precision = 1.0;
    double edge_recall = 1.0;
    Percentiles stage1_ms;
    Percentiles stage2_ms;

    nlohmann::json to_json() const;
};

/// An alert is a hit when its chain shares an event with a scripted attack.
EvalMetrics evaluate(const std::vector<AlertOutcome>& out, const GroundTruth& truth,
                     const RunManifest* manifest = nullptr);

/// alerts.json, reports.json, detections.json, graphs/alert-N.{dot,json} and
/// manifest.json under `dir`.
void write_run(DetectionResult& r, const EventStore& store, const std::filesystem::path& dir);

} // namespace adtrace
