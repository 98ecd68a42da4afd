#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "icrs/runlog.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args) {
    std::string cmd = std::string(icrs_test::cli_bin()) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    CliResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0)
        result.output.append(buf.data(), n);
    int status = pclose(pipe);
    result.exit_code = WEXITSTATUS(status);
    return result;
}

// Copies the fixture config with the output directory redirected.
std::string config_for(const std::string& out_dir) {
    std::string base = icrs_test::slurp(icrs_test::fixture_config());
    std::string cfg;
    for (std::size_t pos = 0; pos < base.size();) {
        std::size_t eol = base.find('\n', pos);
        if (eol == std::string::npos) eol = base.size();
        std::string line = base.substr(pos, eol - pos);
        if (line.rfind("output", 0) == 0)
            line = "output = \"" + out_dir + "\"";
        if (line.rfind("datasets", 0) == 0)
            line = icrs_test::fixture_datasets_line();
        if (line.rfind("templates", 0) == 0)
            line = "templates = \"" + icrs_test::templates_dir() + "\"";
        cfg += line + "\n";
        pos = eol + 1;
    }
    std::string path = out_dir + "/config.toml";
    icrs_test::spit(path, cfg);
    return path;
}

}  // namespace

TEST_CASE("ingest: valid fixture exits 0 with summary counts") {
    auto result = run_cli("ingest " + icrs_test::fixture_manifest() + " " +
                          icrs_test::movie_manifest());
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("3 conversations") != std::string::npos);
    CHECK(result.output.find("12 items") != std::string::npos);
    CHECK(result.output.find("2 conversations") != std::string::npos);
    CHECK(result.output.find("6 items") != std::string::npos);
}

TEST_CASE("ingest: a violating dataset exits 1 and lists the violation") {
    icrs_test::TempDir dir("bad_ds");
    // expert_explanation on a seeker turn breaks the tag/speaker rule
    icrs_test::spit(dir.str() + "/items.jsonl",
                    R"({"id":"i1","composite_attributes":{"name":"Thing"},"atomic_attributes":[{"id":"name#1","key":"name","text":"Name: Thing"}]})"
                    "\n");
    icrs_test::spit(
        dir.str() + "/conversations.jsonl",
        R"({"id":"c1","scenario":"retail","turns":[{"index":1,"speaker":"seeker","text":"hi","referenced_items":[],"intent_tags":["expert_explanation"]},{"index":2,"speaker":"recommender","text":"take this","referenced_items":["i1"],"intent_tags":[]}],"ground_truth_items":["i1"]})"
        "\n");
    icrs_test::spit(dir.str() + "/dataset.toml", "scenario = \"retail\"\n");
    auto result = run_cli("ingest " + dir.str() + "/dataset.toml");
    CHECK(result.exit_code == 1);
    CHECK(result.output.find("tag-speaker") != std::string::npos);
}

TEST_CASE("ingest: a missing manifest exits 2") {
    auto result = run_cli("ingest /nonexistent/dataset.toml");
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("manifest not found") != std::string::npos);
}

TEST_CASE("full hermetic pipeline: adapt, run, report, and reproducibility") {
    icrs_test::TempDir out("e2e");
    std::string config = config_for(out.str());

    auto adapt = run_cli("adapt --config " + config);
    INFO(adapt.output);
    REQUIRE(adapt.exit_code == 0);
    CHECK(fs::exists(out.str() + "/adapted/retail/ground_truth_labels.json"));
    CHECK(fs::exists(out.str() + "/adapted/retail/judge_log.jsonl"));
    CHECK(fs::exists(out.str() + "/adapted/retail/candidates.jsonl"));

    auto run1 = run_cli("run --config " + config);
    INFO(run1.output);
    REQUIRE(run1.exit_code == 0);
    CHECK(fs::exists(out.str() + "/runs/retail/selections.jsonl"));
    CHECK(fs::exists(out.str() + "/runs/retail/model_log.jsonl"));

    auto report1 = run_cli("report --config " + config);
    INFO(report1.output);
    REQUIRE(report1.exit_code == 0);
    CHECK(fs::exists(out.str() + "/report/report.json"));
    CHECK(fs::exists(out.str() + "/report/report.csv"));
    CHECK(fs::exists(out.str() + "/report/plots/fp_distribution.csv"));

    SUBCASE("report regeneration is byte-identical") {
        std::string first = icrs_test::slurp(out.str() + "/report/report.json");
        auto report2 = run_cli("report --config " + config);
        REQUIRE(report2.exit_code == 0);
        CHECK(icrs_test::slurp(out.str() + "/report/report.json") == first);
    }

    SUBCASE("restricting k_values restricts the report grid") {
        std::string k1_config = out.str() + "/config_k1.toml";
        std::string cfg = icrs_test::slurp(config);
        cfg.replace(cfg.find("k_values = \"1,2,3\""),
                    std::string("k_values = \"1,2,3\"").size(),
                    "k_values = \"1\"");
        icrs_test::spit(k1_config, cfg);
        auto report = run_cli("report --config " + k1_config);
        REQUIRE(report.exit_code == 0);
        json parsed = json::parse(icrs_test::slurp(out.str() + "/report/report.json"));
        REQUIRE_FALSE(parsed.at("cells").empty());
        for (const auto& cell : parsed.at("cells"))
            CHECK(cell.at("k").get<int>() == 1);
    }

    SUBCASE("replay-verify confirms the recorded model logs") {
        auto verify =
            run_cli("replay-verify --config " + config + " " + out.str() + "/runs");
        INFO(verify.output);
        CHECK(verify.exit_code == 0);
        CHECK(verify.output.find("retail: replay matches") != std::string::npos);
        CHECK(verify.output.find("movie: replay matches") != std::string::npos);

        // a report regenerated from the replayed run is byte-identical
        auto replay_report = run_cli("report --config " + config + " --output " +
                                     out.str() + "/replay_verify");
        REQUIRE(replay_report.exit_code == 0);
        CHECK(icrs_test::slurp(out.str() + "/replay_verify/report/report.json") ==
              icrs_test::slurp(out.str() + "/report/report.json"));
    }

    SUBCASE("a replay log with a missing key fails naming it") {
        // drop the last record from the model log
        auto records = icrs::read_run_log(out.str() + "/runs/retail/model_log.jsonl");
        REQUIRE(records.size() > 1);
        icrs::RunLog truncated;
        for (std::size_t i = 0; i + 1 < records.size(); ++i)
            truncated.append(records[i]);
        std::string short_log = out.str() + "/short_log.jsonl";
        truncated.write(short_log);
        auto rerun = run_cli("run --config " + config + " --scenario retail" +
                             " --replay " + short_log);
        CHECK(rerun.exit_code == 1);
        CHECK(rerun.output.find("replay missing key") != std::string::npos);
    }

    SUBCASE("resume reuses every keyed result without new client calls") {
        auto resumed = run_cli("run --config " + config + " --resume " +
                               out.str() + "/runs/retail/model_log.jsonl");
        REQUIRE(resumed.exit_code == 0);
        json manifest = json::parse(
            icrs_test::slurp(out.str() + "/runs/retail/run_manifest.json"));
        auto records = icrs::read_run_log(out.str() + "/runs/retail/model_log.jsonl");
        std::set<std::string> keys;
        for (const auto& r : records) keys.insert(r.key);
        CHECK(manifest.at("cache_hits").get<std::size_t>() == keys.size());
    }
}

TEST_CASE("adapt: a replay log missing a judge response names the key") {
    icrs_test::TempDir out("adapt_replay");
    std::string config = config_for(out.str());
    REQUIRE(run_cli("adapt --config " + config).exit_code == 0);

    auto records = icrs::read_run_log(out.str() + "/adapted/retail/judge_log.jsonl");
    REQUIRE(records.size() > 1);
    icrs::RunLog truncated;
    for (std::size_t i = 0; i + 1 < records.size(); ++i) truncated.append(records[i]);
    std::string short_log = out.str() + "/short_judge_log.jsonl";
    truncated.write(short_log);

    auto rerun = run_cli("adapt --config " + config + " --replay " + short_log);
    CHECK(rerun.exit_code == 1);
    CHECK(rerun.output.find("replay missing key") != std::string::npos);
    CHECK(rerun.output.find(records.back().key) != std::string::npos);
}

TEST_CASE("run: an empty method list exits 1 with 'nothing to run'") {
    icrs_test::TempDir out("nomethods");
    std::string config_path = out.str() + "/config.toml";
    icrs_test::spit(config_path,
                    "datasets = [\"" + icrs_test::fixture_manifest() + "\"]\n" +
                        "templates = \"" + icrs_test::templates_dir() + "\"\n" +
                        "output = \"" + out.str() + "\"\nmethods = []\n");
    auto result = run_cli("run --config " + config_path);
    CHECK(result.exit_code == 1);
    CHECK(result.output.find("nothing to run") != std::string::npos);
}

TEST_CASE("adapt: min_turns above every conversation yields a warned empty set") {
    icrs_test::TempDir out("overfiltered");
    std::string config_path = out.str() + "/config.toml";
    icrs_test::spit(config_path,
                    "datasets = [\"" + icrs_test::fixture_manifest() + "\"]\n" +
                        "templates = \"" + icrs_test::templates_dir() + "\"\n" +
                        "output = \"" + out.str() + "\"\n" +
                        "methods = [\"bm25\"]\nmin_turns = 50\n");
    auto result = run_cli("adapt --config " + config_path);
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("warning") != std::string::npos);
    CHECK(fs::exists(out.str() + "/adapted/retail/conversations.jsonl"));

    // the empty adapted set still runs and reports (cells come out absent)
    CHECK(run_cli("run --config " + config_path).exit_code == 0);
    auto report = run_cli("report --config " + config_path);
    CHECK(report.exit_code == 0);
    json parsed = json::parse(icrs_test::slurp(out.str() + "/report/report.json"));
    for (const auto& cell : parsed.at("cells")) CHECK(cell.at("n").get<int>() == 0);
}

TEST_CASE("run: fused without a visual-similarity sidecar fails those cells") {
    icrs_test::TempDir out("nosims");
    std::string config = config_for(out.str());
    REQUIRE(run_cli("adapt --config " + config).exit_code == 0);
    fs::remove(out.str() + "/adapted/retail/visual_sims.jsonl");
    auto result = run_cli("run --config " + config + " --scenario retail" +
                          " --method fused");
    CHECK(result.exit_code == 1);
    CHECK(result.output.find("missing visual similarity") != std::string::npos);
}

TEST_CASE("report lists configured methods with no runs as absent cells") {
    icrs_test::TempDir out("absent");
    std::string config = config_for(out.str());
    REQUIRE(run_cli("adapt --config " + config).exit_code == 0);
    REQUIRE(run_cli("run --config " + config + " --method bm25").exit_code == 0);
    auto report = run_cli("report --config " + config);
    REQUIRE(report.exit_code == 0);

    json parsed = json::parse(icrs_test::slurp(out.str() + "/report/report.json"));
    bool bm25_defined = false, dense_absent = false;
    for (const auto& cell : parsed.at("cells")) {
        if (cell.at("method") == "bm25" && cell.at("n").get<int>() > 0)
            bm25_defined = true;
        if (cell.at("method") == "dense" && cell.at("n").get<int>() == 0 &&
            cell.at("display") == "n/a")
            dense_absent = true;
    }
    CHECK(bm25_defined);
    CHECK(dense_absent);
}

TEST_CASE("adapt then run honors --jobs parallelism with identical artifacts") {
    icrs_test::TempDir out1("jobs1");
    icrs_test::TempDir out2("jobs2");
    std::string c1 = config_for(out1.str());
    std::string c2 = config_for(out2.str());
    REQUIRE(run_cli("adapt --config " + c1).exit_code == 0);
    REQUIRE(run_cli("adapt --config " + c2).exit_code == 0);
    REQUIRE(run_cli("run --config " + c1 + " --jobs 1").exit_code == 0);
    REQUIRE(run_cli("run --config " + c2 + " --jobs 4").exit_code == 0);
    for (const char* scenario : {"retail", "movie"}) {
        for (const char* name :
             {"selections.jsonl", "recommendations.jsonl", "model_log.jsonl"}) {
            CHECK(icrs_test::slurp(out1.str() + "/runs/" + scenario + "/" + name) ==
                  icrs_test::slurp(out2.str() + "/runs/" + scenario + "/" + name));
        }
    }
}
