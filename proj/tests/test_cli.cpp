#include "adtrace/pipeline.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace adtrace;

#ifdef ADTRACE_CLI_PATH

namespace {

int run(const std::string& args) {
    std::string cmd = std::string(ADTRACE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json load(const std::filesystem::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

} // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors") {
    CHECK(run("") == 1);
    CHECK(run("bogus") == 1);
    CHECK(run("detect") == 1);
    CHECK(run("--help") == 0);
    CHECK(run("--version") == 0);
}

TEST_CASE("forge") {
    fx::TempDir tmp("cli-forge");
    auto cfg = fx::short_benign(71, 1.0);
    std::ofstream(tmp / "ok.json") << scenario_to_json(cfg).dump();
    CHECK(run("forge --config " + q(tmp / "ok.json") + " --out " + q(tmp / "out")) == 0);
    CHECK(std::filesystem::exists(tmp / "out" / "events.ndjson"));
    CHECK(std::filesystem::exists(tmp / "out" / "truth.json"));

    SUBCASE("existing output needs --force") {
        CHECK(run("forge --config " + q(tmp / "ok.json") + " --out " + q(tmp / "out")) != 0);
        CHECK(run("forge --config " + q(tmp / "ok.json") + " --out " + q(tmp / "out") + " --force") == 0);
    }
    SUBCASE("no domain controller") {
        auto j = scenario_to_json(cfg);
        auto& hosts = j["directory"]["hosts"];
        nlohmann::json kept = nlohmann::json::array();
        for (const auto& h : hosts)
            if (h.at("role") != "dc") kept.push_back(h);
        hosts = kept;
        std::ofstream(tmp / "nodc.json") << j.dump();
        CHECK(run("forge --config " + q(tmp / "nodc.json") + " --out " + q(tmp / "nodc")) == 2);
    }
    SUBCASE("malformed config") {
        std::ofstream(tmp / "bad.json") << "{ nope";
        CHECK(run("forge --config " + q(tmp / "bad.json") + " --out " + q(tmp / "bad")) == 2);
    }
}

TEST_CASE("forge, detect, eval") {
    fx::TempDir tmp("cli-flow");
    REQUIRE(run("forge --playbook PassTheHash --seed 1 --out " + q(tmp / "data")) == 0);
    auto events = tmp / "data" / "events.ndjson";
    auto truth = tmp / "data" / "truth.json";
    REQUIRE(run("detect --events " + q(events) + " --directory " + q(tmp / "data" / "directory.json") +
                " --seed 1 --out " + q(tmp / "run")) == 0);

    auto reports = load(tmp / "run" / "reports.json");
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].at("verdict") == true);
    auto manifest = load(tmp / "run" / "manifest.json");
    CHECK(manifest.at("seed") == 1);
    CHECK(manifest.at("inputs").size() == 1);
    CHECK(std::filesystem::exists(tmp / "run" / "graphs" / "alert-1.dot"));

    REQUIRE(run("eval --events " + q(events) + " --truth " + q(truth) + " --run " + q(tmp / "run") + " --out " +
                q(tmp / "metrics.json")) == 0);
    auto m = load(tmp / "metrics.json");
    CHECK(m["stage2"]["fp"] == 0);
    CHECK(m["stage2"]["fn"] == 0);
    CHECK(m["edges"]["recall"] == 1.0);

    SUBCASE("empty run directory misses the attack") {
        std::filesystem::create_directories(tmp / "empty");
        REQUIRE(run("eval --events " + q(events) + " --truth " + q(truth) + " --run " + q(tmp / "empty") +
                    " --out " + q(tmp / "m0.json")) == 0);
        CHECK(load(tmp / "m0.json")["stage2"]["fn"] == 1);
    }
    SUBCASE("truth for another event file") {
        std::filesystem::copy_file(events, tmp / "other.ndjson");
        std::ofstream(tmp / "other.ndjson", std::ios::app) << "\n";
        CHECK(run("eval --events " + q(tmp / "other.ndjson") + " --truth " + q(truth) + " --run " + q(tmp / "run")) ==
              2);
    }
    SUBCASE("run directory is not overwritten") {
        CHECK(run("detect --events " + q(events) + " --out " + q(tmp / "run")) == 1);
    }
    SUBCASE("export") {
        CHECK(run("export --events " + q(events) + " --alert 1 --format dot --out " + q(tmp / "g.dot")) == 0);
        std::ifstream in(tmp / "g.dot");
        std::string first;
        std::getline(in, first);
        CHECK(first.rfind("digraph", 0) == 0);
        CHECK(run("export --events " + q(events) + " --alert 99") == 2);
        CHECK(run("export --events " + q(events) + " --alert 1 --format png") == 1);
    }
    SUBCASE("ingest snapshot feeds detect") {
        REQUIRE(run("ingest --events " + q(events) + " --snapshot-out " + q(tmp / "s.snap") + " --report " +
                    q(tmp / "ingest.json")) == 0);
        CHECK(load(tmp / "ingest.json")["files"][0]["rejected"] == 0);
        REQUIRE(run("detect --snapshot " + q(tmp / "s.snap") + " --out " + q(tmp / "run2")) == 0);
        CHECK(load(tmp / "run2" / "reports.json").size() == 1);
    }
}

TEST_CASE("benign data without truncation writes no graphs") {
    fx::TempDir tmp("cli-benign");
    auto cfg = fx::short_benign(72, 3.0);
    std::ofstream(tmp / "b.json") << scenario_to_json(cfg).dump();
    REQUIRE(run("forge --config " + q(tmp / "b.json") + " --out " + q(tmp / "data")) == 0);
    REQUIRE(run("detect --events " + q(tmp / "data" / "events.ndjson") + " --out " + q(tmp / "run")) == 0);
    CHECK(load(tmp / "run" / "alerts.json").empty());
    CHECK(load(tmp / "run" / "manifest.json").at("stage2_queries") == 0);
    CHECK(std::filesystem::is_empty(tmp / "run" / "graphs"));
}

TEST_CASE("unreadable inputs") {
    fx::TempDir tmp("cli-bad");
    CHECK(run("detect --events " + q(tmp / "missing.ndjson") + " --out " + q(tmp / "run")) == 1);
    std::ofstream(tmp / "rules.json") << "[{\"id\": 1}]";
    std::ofstream(tmp / "ev.ndjson") << "";
    CHECK(run("detect --events " + q(tmp / "ev.ndjson") + " --rules " + q(tmp / "rules.json") + " --out " +
              q(tmp / "run")) == 2);
}

}

#endif
