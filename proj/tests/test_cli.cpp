#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "abcforge/abc.hpp"
#include "abcforge/metrics.hpp"
#include "support/test_support.hpp"

using namespace abcforge;
using testsupport::run_command;
using testsupport::TempDir;

namespace {

const std::string kBin = ABCFORGE_BIN;
const std::filesystem::path kFixtures = ABCFORGE_FIXTURES_DIR;

std::string q(const std::filesystem::path& path) { return "'" + path.string() + "'"; }

} // namespace

TEST_CASE("help exits zero and documents every flag") {
    const auto top = run_command(kBin + " --help 2>/dev/null");
    CHECK(top.exit_code == 0);
    for (const char* sub :
         {"validate", "stats", "degrade", "build-dataset", "pair", "fmd", "ppl"})
        CHECK(top.output.find(sub) != std::string::npos);

    const auto degrade_help = run_command(kBin + " degrade --help 2>/dev/null");
    CHECK(degrade_help.exit_code == 0);
    for (const char* flag : {"--seed", "--p", "--b-max", "--alt-key", "--fallback-key",
                             "--out", "--help"})
        CHECK(degrade_help.output.find(flag) != std::string::npos);

    const auto build_help = run_command(kBin + " build-dataset --help 2>/dev/null");
    CHECK(build_help.exit_code == 0);
    for (const char* flag : {"--mapping", "--filter-config", "--out", "--seed",
                             "--split-threshold", "--jobs", "--p", "--b-max"})
        CHECK(build_help.output.find(flag) != std::string::npos);

    const auto pair_help = run_command(kBin + " pair --help 2>/dev/null");
    CHECK(pair_help.exit_code == 0);
    CHECK(pair_help.output.find("--jobs") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
    CHECK(run_command(kBin + " 2>/dev/null").exit_code == 2);
    CHECK(run_command(kBin + " frobnicate 2>/dev/null").exit_code == 2);
    // seed is mandatory for degradation commands
    TempDir dir("cliusage");
    testsupport::write_file(dir / "t.abc", "X:1\nK:C\nCDEF|\n");
    CHECK(run_command(kBin + " degrade " + q(dir / "t.abc") + " 2>/dev/null").exit_code == 2);
    CHECK(run_command(kBin + " degrade --seed 1 --p nope " + q(dir / "t.abc") +
                      " 2>/dev/null").exit_code == 2);
    // output path must differ from the input path
    CHECK(run_command(kBin + " degrade --seed 1 --out " + q(dir / "t.abc") + " " +
                      q(dir / "t.abc") + " 2>/dev/null").exit_code == 2);
    // out-of-range probability is a usage error
    CHECK(run_command(kBin + " degrade --seed 1 --p 1.5 " + q(dir / "t.abc") +
                      " 2>/dev/null").exit_code == 2);
}

TEST_CASE("validate prints a report and sets the exit code") {
    TempDir dir("clivalidate");
    testsupport::write_file(dir / "good.abc", "X:1\nK:C\nCDEF|\n");
    testsupport::write_file(dir / "bad.abc", "K:C\nCDEF|\n");

    const auto good = run_command(kBin + " validate " + q(dir / "good.abc") + " 2>/dev/null");
    CHECK(good.exit_code == 0);
    CHECK(nlohmann::json::parse(good.output)["is_valid"] == true);

    const auto bad = run_command(kBin + " validate " + q(dir / "bad.abc") + " 2>/dev/null");
    CHECK(bad.exit_code == 1);
    const auto bad_report = nlohmann::json::parse(bad.output);
    CHECK(bad_report["is_valid"] == false);
    CHECK(bad_report["issues"].size() == 1);

    CHECK(run_command(kBin + " validate " + q(dir / "missing.abc") + " 2>/dev/null")
              .exit_code == 1);
}

TEST_CASE("degrade is deterministic and structure preserving") {
    TempDir dir("clidegrade");
    const std::string file =
        "% preamble\n\nX:1\nK:C\nCDEF|GABc|\ndefg|\n\nX:2\nK:G\nGABc|\nBdgb|\n";
    testsupport::write_file(dir / "in.abc", file);

    const std::string cmd =
        kBin + " degrade --seed 42 --p 0.1 --b-max 4 " + q(dir / "in.abc") + " 2>/dev/null";
    const auto first = run_command(cmd);
    const auto second = run_command(cmd);
    CHECK(first.exit_code == 0);
    CHECK(first.output == second.output);

    // non-tune segments pass through; every tune block stays valid
    CHECK(first.output.find("% preamble\n") == 0);
    std::size_t tunes = 0;
    for (const auto& block : abc::split_tune_blocks(first.output)) {
        if (!block.is_tune) continue;
        ++tunes;
        CHECK(abc::validate(block.text).is_valid);
    }
    CHECK(tunes == 2);

    // a degradation seed plus --out also writes a manifest
    const auto with_out = run_command(
        kBin + " degrade --seed 42 --out " + q(dir / "out.abc") + " " +
        q(dir / "in.abc") + " 2>/dev/null");
    CHECK(with_out.exit_code == 0);
    CHECK(std::filesystem::exists(dir / "out.abc"));
    CHECK(std::filesystem::exists(dir / "out.abc.run_manifest.json"));
    const auto manifest = nlohmann::json::parse(
        testsupport::read_file(dir / "out.abc.run_manifest.json"));
    CHECK(manifest["command"] == "degrade");
    CHECK(manifest["parameters"]["seed"] == 42);
}

TEST_CASE("degrade fails cleanly on an invalid tune") {
    TempDir dir("clibadtune");
    testsupport::write_file(dir / "bad.abc", "X:1\nK:C\n\"unterminated\n");
    const auto result = run_command(
        kBin + " degrade --seed 1 " + q(dir / "bad.abc") + " 2>/dev/null");
    CHECK(result.exit_code == 1);
}

TEST_CASE("fmd subcommand prints the engineered scalar distance") {
    TempDir dir("clifmd");
    testsupport::write_file(dir / "ref.emb", "dim=1 count=2\n-1\n1\n");
    testsupport::write_file(dir / "cand.emb", "dim=1 count=2\n0\n2\n");

    const auto result = run_command(
        kBin + " fmd " + q(dir / "ref.emb") + " " + q(dir / "cand.emb") + " 2>/dev/null");
    CHECK(result.exit_code == 0);
    CHECK(std::abs(std::stod(result.output) - 1.0) < 1e-6);

    testsupport::write_file(dir / "mismatch.emb", "dim=2 count=2\n0 0\n1 1\n");
    CHECK(run_command(kBin + " fmd " + q(dir / "ref.emb") + " " +
                      q(dir / "mismatch.emb") + " 2>/dev/null").exit_code == 1);
}

TEST_CASE("ppl subcommand prints corpus perplexity") {
    TempDir dir("clippl");
    testsupport::write_file(dir / "certain.jsonl",
                            R"({"id": "a", "token_logprobs": [0.0, 0.0, 0.0]})" "\n");
    const auto one = run_command(kBin + " ppl " + q(dir / "certain.jsonl") + " 2>/dev/null");
    CHECK(one.exit_code == 0);
    CHECK(std::stod(one.output) == 1.0);

    const double ln2 = std::log(2.0);
    nlohmann::json row = {{"id", "b"}, {"token_logprobs", {-ln2, -ln2}}};
    testsupport::write_file(dir / "half.jsonl", row.dump() + "\n");
    const auto two = run_command(kBin + " ppl " + q(dir / "half.jsonl") + " 2>/dev/null");
    CHECK(std::abs(std::stod(two.output) - 2.0) < 1e-12);

    testsupport::write_file(dir / "bad.jsonl",
                            R"({"id": "c", "token_logprobs": [0.5]})" "\n");
    CHECK(run_command(kBin + " ppl " + q(dir / "bad.jsonl") + " 2>/dev/null").exit_code == 1);
}

TEST_CASE("stats emits the JSON object and the aligned table") {
    TempDir dir("clistats");
    const std::string cmd = kBin + " stats " + q(kFixtures / "stats10.abc") + " --out " +
                            q(dir / "stats.json") + " 2>" + q(dir / "table.txt");
    CHECK(run_command(cmd).exit_code == 0);

    const auto golden = nlohmann::json::parse(testsupport::read_file(
        kFixtures / "stats10_golden.json"))["all"];
    const auto s = nlohmann::json::parse(testsupport::read_file(dir / "stats.json"));
    CHECK(s["num_samples"] == golden["num_samples"]);
    CHECK(s["max_target_length"] == golden["max_target_length"]);
    CHECK(std::abs(s["avg_bars"].get<double>() - golden["avg_bars"].get<double>()) < 1e-9);
    // ABC input has no prompts, so input length is zero here
    CHECK(s["avg_input_length"].get<double>() == 0.0);

    const std::string table = testsupport::read_file(dir / "table.txt");
    for (const char* row : {"# Samples", "Avg. Input Length", "Avg. Target Length",
                            "Max Target Length", "Avg. Bars", "Notes per Bar"})
        CHECK(table.find(row) != std::string::npos);
}

TEST_CASE("build-dataset end to end with manifest and sidecars") {
    TempDir dir("clibuild");
    const std::string cmd =
        kBin + " build-dataset --mapping " + q(kFixtures / "mapping.json") +
        " --filter-config " + q(kFixtures / "filter.json") + " --seed 42 --out " +
        q(dir / "fx") + " 2>/dev/null";
    CHECK(run_command(cmd).exit_code == 0);

    for (const char* name :
         {"fx.short.sft.jsonl", "fx.long.sft.jsonl", "fx.short.dpo.jsonl",
          "fx.long.dpo.jsonl", "fx.filtered.jsonl", "fx.rejected.jsonl",
          "fx.run_manifest.json"})
        CHECK(std::filesystem::exists(dir / name));

    const auto manifest =
        nlohmann::json::parse(testsupport::read_file(dir / "fx.run_manifest.json"));
    CHECK(manifest["command"] == "build-dataset");
    const auto& results = manifest["results"];
    CHECK(results["ingested"].get<std::uint64_t>() ==
          results["kept"].get<std::uint64_t>() +
              results["filtered"].get<std::uint64_t>() +
              results["rejected"].get<std::uint64_t>());
    CHECK(results["ingested"] == 7);
    CHECK(results["kept"] == 2);

    // reruns are byte-identical, manifest included
    TempDir dir2("clibuild2");
    const std::string cmd2 =
        kBin + " build-dataset --mapping " + q(kFixtures / "mapping.json") +
        " --filter-config " + q(kFixtures / "filter.json") + " --seed 42 --out " +
        q(dir2 / "fx") + " 2>/dev/null";
    CHECK(run_command(cmd2).exit_code == 0);
    for (const char* name : {"fx.short.sft.jsonl", "fx.long.sft.jsonl",
                             "fx.short.dpo.jsonl", "fx.long.dpo.jsonl"})
        CHECK(testsupport::read_file(dir / name) == testsupport::read_file(dir2 / name));
}

TEST_CASE("pair runs deterministically across job counts") {
    TempDir dir("clipair");
    // build a records file first
    const std::string build =
        kBin + " build-dataset --mapping " + q(kFixtures / "stats10_mapping.json") +
        " --filter-config " + q(kFixtures / "filter_keep_all.json") +
        " --seed 7 --no-dpo --out " + q(dir / "s10") + " 2>/dev/null";
    REQUIRE(run_command(build).exit_code == 0);
    const auto records = dir / "s10.short.sft.jsonl";

    const auto one = run_command(kBin + " pair --seed 42 --jobs 1 --out " +
                                 q(dir / "a.dpo.jsonl") + " " + q(records) + " 2>/dev/null");
    CHECK(one.exit_code == 0);
    const auto eight = run_command(kBin + " pair --seed 42 --jobs 8 --out " +
                                   q(dir / "b.dpo.jsonl") + " " + q(records) + " 2>/dev/null");
    CHECK(eight.exit_code == 0);
    CHECK(testsupport::read_file(dir / "a.dpo.jsonl") ==
          testsupport::read_file(dir / "b.dpo.jsonl"));
    CHECK(std::filesystem::exists(dir / "a.dpo.jsonl.run_manifest.json"));

    // every emitted pair is valid and chosen != rejected
    std::istringstream lines(testsupport::read_file(dir / "a.dpo.jsonl"));
    std::string line;
    std::size_t pairs = 0;
    while (std::getline(lines, line)) {
        const auto row = nlohmann::json::parse(line);
        CHECK(abc::validate(row["rejected"].get<std::string>()).is_valid);
        CHECK(row["chosen"] != row["rejected"]);
        ++pairs;
    }
    CHECK(pairs == 8);
}
