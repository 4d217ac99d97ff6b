#include "adtrace/digest.hpp"
#include "adtrace/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace adtrace;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kDataError = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot read " + p.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw IoError("not valid JSON: " + p.string());
    return j;
}

void emit(const nlohmann::json& j, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out);
    if (!f) throw IoError("cannot write " + out);
    f << j.dump(2) << '\n';
}

// Events come either from NDJSON files or from one snapshot.
struct InputArgs {
    std::vector<std::string> events;
    std::string snapshot;

    void add_to(CLI::App* cmd) {
        auto* ev = cmd->add_option("--events", events, "event files (NDJSON)")->check(CLI::ExistingFile);
        auto* sn = cmd->add_option("--snapshot", snapshot, "store snapshot written by ingest")->check(CLI::ExistingFile);
        ev->excludes(sn);
    }

    EventStore load(std::vector<std::string>& inputs) const {
        if (!snapshot.empty()) {
            inputs.push_back(snapshot);
            return EventStore::load_snapshot(snapshot);
        }
        if (events.empty()) throw UsageError("one of --events or --snapshot is required");
        EventStore store;
        for (const auto& p : events) {
            IngestReport r = store.ingest(p);
            if (r.rejected)
                std::cerr << p << ": " << r.rejected << " record(s) rejected\n";
            inputs.push_back(p);
        }
        return store;
    }
};

struct ForgeArgs {
    std::string config;
    std::string playbook;
    std::optional<std::uint64_t> seed;
    std::optional<double> truncation;
    std::string out;
    bool force = false;
};

int cmd_forge(const ForgeArgs& a) {
    ScenarioConfig cfg;
    if (!a.config.empty())
        cfg = load_scenario_config(a.config);
    else if (!a.playbook.empty())
        cfg = playbook_scenario(enum_from_string<AttackLabel>(a.playbook), a.seed.value_or(1));
    else
        cfg = default_scenario(a.seed.value_or(1));
    if (a.seed) cfg.seed = *a.seed;
    if (a.truncation) cfg.rates.truncation_fraction = *a.truncation;

    ForgeOutput out = forge_case(cfg);
    ForgeFiles files = write_forge_output(out, a.out, a.force);
    std::cout << "wrote " << out.events.size() << " events to " << files.events.string() << '\n'
              << "truth " << files.truth.string() << " (" << out.truth.causal_edges.size()
              << " causal edges, " << out.truth.attacks.size() << " attacks)\n";
    return kOk;
}

struct IngestArgs {
    InputArgs in;
    std::string snapshot_out;
    std::string report;
};

int cmd_ingest(const IngestArgs& a) {
    if (a.in.events.empty()) throw UsageError("--events is required");
    EventStore store;
    auto reports = nlohmann::json::array();
    for (const auto& p : a.in.events) {
        IngestReport r = store.ingest(p);
        nlohmann::json v = nlohmann::json::array();
        for (const auto& x : r.violations) v.push_back({{"line", x.line}, {"reason", x.reason}});
        reports.push_back({{"path", p},
                           {"accepted", r.accepted},
                           {"rejected", r.rejected},
                           {"duplicates", r.duplicates},
                           {"violations", v}});
    }
    if (!a.snapshot_out.empty()) store.save_snapshot(a.snapshot_out);
    emit({{"files", reports}, {"events", store.size()}}, a.report);
    return kOk;
}

struct DetectArgs {
    InputArgs in;
    std::string rules;
    std::string score_config;
    std::string directory;
    std::string meta_patterns;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    bool no_triage = false;
    bool no_reassign = false;
    bool no_collapse = false;
    bool silver = false;
    bool force = false;
};

int cmd_detect(const DetectArgs& a) {
    if (fs::exists(a.out) && !a.force && !(fs::is_directory(a.out) && fs::is_empty(a.out)))
        throw UsageError("output directory exists and is not empty (use --force): " + a.out);

    DetectOptions opt;
    std::vector<std::string> configs;
    if (!a.rules.empty()) {
        opt.rules = load_rules(a.rules);
        configs.push_back(a.rules);
    }
    validate_rules(opt.rules);
    if (!a.score_config.empty()) {
        opt.score = ScoreConfig::load(a.score_config);
        configs.push_back(a.score_config);
    }
    opt.score.validate();
    if (!a.directory.empty()) {
        opt.directory = Directory::from_json(read_json(a.directory));
        configs.push_back(a.directory);
    }
    if (!a.meta_patterns.empty()) {
        opt.meta_patterns = meta_patterns_from_json(read_json(a.meta_patterns));
        configs.push_back(a.meta_patterns);
    }
    opt.tracer.threads = a.threads;
    opt.tracer.reassign = !a.no_reassign;
    opt.sentinel.threads = a.threads;
    opt.sentinel.silver_ticket = a.silver;
    opt.triage = !a.no_triage;
    opt.collapse = !a.no_collapse;

    std::vector<std::string> inputs;
    EventStore store = a.in.load(inputs);
    DetectionResult r = run_detection(store, opt);
    r.manifest.inputs = inputs;
    r.manifest.configs = configs;
    r.manifest.seed = a.seed;
    write_run(r, store, a.out);

    std::size_t positive = 0;
    for (const auto& rep : r.reports) positive += rep.verdict ? 1 : 0;
    std::cout << r.alerts.size() << " stage-1 alert(s), " << positive << " verdict-positive graph(s); run in "
              << a.out << '\n';
    for (const auto& rep : r.reports) {
        std::printf("  #%zu alert %zu %-14s score %10.3f %s\n", rep.rank, rep.graph.alert_id,
                    std::string(to_string(rep.graph.label)).c_str(), rep.score, rep.verdict ? "ATTACK" : "benign");
        if (rep.rank >= 10) break;
    }
    return kOk;
}

struct EvalArgs {
    std::string events;
    std::string truth;
    std::string run;
    std::string out;
};

int cmd_eval(const EvalArgs& a) {
    GroundTruth truth = GroundTruth::from_json(read_json(a.truth));
    std::string digest = sha256_file(a.events);
    if (!truth.events_sha256.empty() && truth.events_sha256 != digest)
        throw IoError("truth file does not describe " + a.events + " (events_sha256 mismatch)");

    std::vector<AlertOutcome> out;
    std::optional<RunManifest> manifest;
    fs::path run(a.run);
    if (fs::exists(run / "detections.json")) out = outcomes_from_json(read_json(run / "detections.json"));
    if (fs::exists(run / "manifest.json")) manifest = RunManifest::from_json(read_json(run / "manifest.json"));

    EvalMetrics m = evaluate(out, truth, manifest ? &*manifest : nullptr);
    nlohmann::json j = m.to_json();
    j["events_sha256"] = digest;
    emit(j, a.out);
    return kOk;
}

struct ExportArgs {
    InputArgs in;
    std::string directory;
    std::size_t alert = 0;
    std::string format = "dot";
    bool no_collapse = false;
    std::string out;
};

int cmd_export(const ExportArgs& a) {
    std::vector<std::string> inputs;
    EventStore store = a.in.load(inputs);
    auto alerts = get_authentication_anomalies(store);
    auto it = std::find_if(alerts.begin(), alerts.end(), [&](const AnomalyAlert& x) { return x.id == a.alert; });
    if (it == alerts.end()) throw IoError("no alert with id " + std::to_string(a.alert));

    std::string text;
    if (a.format == "alert") {
        text = alert_to_json(*it, store).dump(2) + '\n';
    } else if (a.format == "hlg") {
        text = hlg_to_json(create_high_level_graph(*it)).dump(2) + '\n';
    } else {
        Tracer tracer(store);
        AttackGraph g = tracer.get_ad_attack_graph(*it);
        std::optional<Directory> dir;
        if (!a.directory.empty()) dir = Directory::from_json(read_json(a.directory));
        ScoredReport rep = score_graph(std::move(g), default_rules(), ScoreConfig{}, dir ? &*dir : nullptr);
        if (!a.no_collapse) rep.graph = collapse_meta_nodes(rep.graph, default_meta_patterns());
        if (a.format == "dot")
            text = to_dot(rep.graph);
        else if (a.format == "json")
            text = graph_to_json(rep.graph).dump(2) + '\n';
        else
            text = report_to_json(rep).dump(2) + '\n';
    }
    if (a.out.empty() || a.out == "-") {
        std::cout << text;
    } else {
        std::ofstream f(a.out);
        if (!f) throw IoError("cannot write " + a.out);
        f << text;
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage Active Directory attack detection over authentication and host logs"};
    app.set_version_flag("--version", std::string(tool_version()));
    app.require_subcommand(1);

    ForgeArgs fa;
    auto* forge_cmd = app.add_subcommand("forge", "synthesize a labelled event dataset");
    auto* cfg_opt = forge_cmd->add_option("--config", fa.config, "scenario config (JSON)")->check(CLI::ExistingFile);
    forge_cmd->add_option("--playbook", fa.playbook, "built-in attack playbook, e.g. PassTheHash")->excludes(cfg_opt);
    forge_cmd->add_option("--seed", fa.seed, "RNG seed (overrides the config)");
    forge_cmd->add_option("--truncation", fa.truncation, "share of benign Kerberos chains cut short")
        ->check(CLI::Range(0.0, 1.0));
    forge_cmd->add_option("--out", fa.out, "output directory")->required();
    forge_cmd->add_flag("--force", fa.force, "write into a non-empty directory");

    IngestArgs ia;
    auto* ingest_cmd = app.add_subcommand("ingest", "validate event files and optionally snapshot the store");
    ingest_cmd->add_option("--events", ia.in.events, "event files (NDJSON)")->required()->check(CLI::ExistingFile);
    ingest_cmd->add_option("--snapshot-out", ia.snapshot_out, "write a store snapshot here");
    ingest_cmd->add_option("--report", ia.report, "ingest report path (default stdout)");

    DetectArgs da;
    auto* detect_cmd = app.add_subcommand("detect", "run both stages and write a run directory");
    da.in.add_to(detect_cmd);
    detect_cmd->add_option("--rules", da.rules, "TTP rule file (JSON array or NDJSON)")->check(CLI::ExistingFile);
    detect_cmd->add_option("--score-config", da.score_config, "score config (JSON)")->check(CLI::ExistingFile);
    detect_cmd->add_option("--directory", da.directory, "directory.json for domain admin lookup")
        ->check(CLI::ExistingFile);
    detect_cmd->add_option("--meta-patterns", da.meta_patterns, "meta-node patterns (JSON)")->check(CLI::ExistingFile);
    detect_cmd->add_option("--out", da.out, "run directory")->required();
    detect_cmd->add_option("--seed", da.seed, "dataset seed recorded in the manifest");
    detect_cmd->add_option("--threads", da.threads, "worker threads")->check(CLI::Range(1u, 256u));
    detect_cmd->add_flag("--no-triage", da.no_triage, "treat every stage-1 alert as positive");
    detect_cmd->add_flag("--no-reassign", da.no_reassign, "disable session id reassignment");
    detect_cmd->add_flag("--no-collapse", da.no_collapse, "keep meta-node members expanded");
    detect_cmd->add_flag("--silver-ticket", da.silver, "enable the experimental silver ticket rule");
    detect_cmd->add_flag("--force", da.force, "write into a non-empty directory");

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "score a run directory against ground truth");
    eval_cmd->add_option("--events", ea.events, "event file the truth was forged with")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--truth", ea.truth, "truth.json")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--run", ea.run, "run directory written by detect")->required();
    eval_cmd->add_option("--out", ea.out, "metrics path (default stdout)");

    ExportArgs xa;
    auto* export_cmd = app.add_subcommand("export", "trace one alert and print its graph");
    xa.in.add_to(export_cmd);
    export_cmd->add_option("--directory", xa.directory, "directory.json")->check(CLI::ExistingFile);
    export_cmd->add_option("--alert", xa.alert, "alert id")->required();
    export_cmd->add_option("--format", xa.format, "dot | json | report | hlg | alert")
        ->check(CLI::IsMember({"dot", "json", "report", "hlg", "alert"}));
    export_cmd->add_flag("--no-collapse", xa.no_collapse, "keep meta-node members expanded");
    export_cmd->add_option("--out", xa.out, "output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*forge_cmd) return cmd_forge(fa);
        if (*ingest_cmd) return cmd_ingest(ia);
        if (*detect_cmd) return cmd_detect(da);
        if (*eval_cmd) return cmd_eval(ea);
        if (*export_cmd) return cmd_export(xa);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}
