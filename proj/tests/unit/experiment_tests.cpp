#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ergolab/experiment.hpp"

using namespace ergolab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("ergolab_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(static_cast<bool>(in));
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::string config_text(const std::string& experiment, std::uint64_t seed,
                        const fs::path& outdir, const std::string& params) {
    return "{\"experiment\": \"" + experiment + "\", \"seed\": " + std::to_string(seed) +
           ", \"output_dir\": \"" + outdir.string() + "\", \"params\": " + params + "}";
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("fnv1a_hex matches known vectors") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("hello") == "a430d84680aabd0b");
    CHECK(fnv1a_hex("hello") == fnv1a_hex("hello"));
    CHECK(fnv1a_hex("hello") != fnv1a_hex("hellp"));
}

TEST_CASE("manifest json round trip preserves every field") {
    RunManifest man;
    man.experiment = "lln";
    man.config_text = "{\"experiment\": \"lln\"}";
    man.seed = 42;
    man.version = "0.1.0";
    man.output_dir = "/tmp/somewhere";
    man.started_at = "2026-01-02T03:04:05Z";
    man.finished_at = "2026-01-02T03:04:06Z";
    man.outputs.push_back(StageRecord{"mass-table", "lln.csv", "0123456789abcdef",
                                      "bernstein_lln_constant"});
    man.error = "";
    const RunManifest back = manifest_from_json(man.to_json());
    CHECK(back.experiment == man.experiment);
    CHECK(back.config_text == man.config_text);
    CHECK(back.seed == man.seed);
    CHECK(back.version == man.version);
    CHECK(back.output_dir == man.output_dir);
    CHECK(back.started_at == man.started_at);
    CHECK(back.finished_at == man.finished_at);
    CHECK(back.error == man.error);
    REQUIRE(back.outputs.size() == 1);
    CHECK(back.outputs[0].stage == "mass-table");
    CHECK(back.outputs[0].path == "lln.csv");
    CHECK(back.outputs[0].checksum == "0123456789abcdef");
    CHECK(back.outputs[0].formula == "bernstein_lln_constant");
    CHECK(back.ok());
}

TEST_CASE("manifest parser rejects malformed input") {
    CHECK_THROWS_AS(manifest_from_json("not json"), invalid_input);
    CHECK_THROWS_AS(manifest_from_json("{}"), invalid_input);
    CHECK_THROWS_AS(manifest_from_json("{\"experiment\": \"x\"}"), invalid_input);
}

TEST_CASE("config validation failures throw before any output is written") {
    const fs::path dir = fresh_dir("cfg_reject");
    const std::string d = dir.string();
    CHECK_THROWS_AS(run_experiment_text("nonsense"), invalid_input);
    CHECK_THROWS_AS(run_experiment_text("{\"seed\": 1, \"output_dir\": \"" + d + "\"}"),
                    invalid_input);
    CHECK_THROWS_AS(run_experiment_text("{\"experiment\": \"lln\", \"seed\": 1}"),
                    invalid_input);
    CHECK_THROWS_AS(
        run_experiment_text(config_text("no-such-experiment", 1, dir, "{}")),
        invalid_input);
    CHECK_THROWS_AS(
        run_experiment_text(config_text("lln", 1, dir, "{\"bogus_key\": 3}")),
        invalid_input);
    CHECK_THROWS_AS(
        run_experiment_text(config_text("lln", 1, dir, "{\"delta\": -0.5}")),
        invalid_input);
    CHECK_THROWS_AS(
        run_experiment_text(config_text("zero-exponent-path", 1, dir, "{\"points\": 1}")),
        invalid_input);
    CHECK_THROWS_AS(
        run_experiment_text(config_text("cauchy-table", 1, dir, "{\"p\": [0.5]}")),
        invalid_input);
    CHECK_THROWS_AS(run_experiment_text(
                        "{\"experiment\": \"lln\", \"seed\": 1, \"output_dir\": \"" + d +
                        "\", \"extra\": 1}"),
                    invalid_input);
    // seed must be a nonnegative integer, not a float or string
    CHECK_THROWS_AS(run_experiment_text(
                        "{\"experiment\": \"lln\", \"seed\": 1.5, \"output_dir\": \"" + d +
                        "\"}"),
                    invalid_input);
    CHECK(!fs::exists(dir));
}

TEST_CASE("lln experiment runs, reproduces byte-identical csv, reacts to seed") {
    const fs::path dir1 = fresh_dir("lln_a");
    const fs::path dir2 = fresh_dir("lln_b");
    const fs::path dir3 = fresh_dir("lln_c");
    const std::string params = "{\"vectors\": 3, \"trials\": 400, \"horizon\": 120}";
    const RunManifest m1 = run_experiment_text(config_text("lln", 11, dir1, params));
    REQUIRE(m1.ok());
    REQUIRE(m1.outputs.size() == 2);
    CHECK(m1.version == "0.1.0");
    for (const auto& rec : m1.outputs) {
        const std::string bytes = slurp(dir1 / rec.path);
        CHECK(fnv1a_hex(bytes) == rec.checksum);
    }
    CHECK(fs::exists(dir1 / "manifest.json"));

    // same config, different directory: identical data bytes
    const RunManifest m2 = run_experiment_text(config_text("lln", 11, dir2, params));
    REQUIRE(m2.ok());
    CHECK(slurp(dir1 / "lln.csv") == slurp(dir2 / "lln.csv"));
    CHECK(m1.outputs[0].checksum == m2.outputs[0].checksum);

    // different seed: different data
    const RunManifest m3 = run_experiment_text(config_text("lln", 12, dir3, params));
    REQUIRE(m3.ok());
    CHECK(slurp(dir1 / "lln.csv") != slurp(dir3 / "lln.csv"));

    // masses stay near 1 for a constant certified at delta = 0.1
    const std::string csv = slurp(dir1 / "lln.csv");
    CHECK(count_lines(csv) == 4);
    CHECK(csv.find("bernstein_lln_constant") != std::string::npos);

    const std::string report = emit_report(m1);
    CHECK(report.find("status: ok") != std::string::npos);
    CHECK(report.find("OK") != std::string::npos);
}

TEST_CASE("seed and output overrides are applied and recorded") {
    const fs::path dir = fresh_dir("lln_override");
    const std::string cfg =
        config_text("lln", 11, "/nonexistent/ignored",
                    "{\"vectors\": 1, \"trials\": 100, \"horizon\": 60}");
    const RunManifest man = run_experiment_text(cfg, 77, dir.string());
    REQUIRE(man.ok());
    CHECK(man.seed == 77);
    CHECK(man.output_dir == dir.string());
    // the recorded config snapshot carries the overrides
    CHECK(man.config_text.find("77") != std::string::npos);
    CHECK(man.config_text.find(dir.string()) != std::string::npos);
    CHECK(man.config_text.find("/nonexistent/ignored") == std::string::npos);
}

TEST_CASE("furstenberg experiment emits the three families with sane flags") {
    const fs::path dir = fresh_dir("fur");
    const RunManifest man = run_experiment_text(
        config_text("furstenberg", 5, dir, "{\"steps\": 20000, \"trials\": 2}"));
    REQUIRE(man.ok());
    const std::string csv = slurp(dir / "furstenberg.csv");
    CHECK(csv.find("isometric_pair") != std::string::npos);
    CHECK(csv.find("axis_swapping_pair") != std::string::npos);
    CHECK(csv.find("transverse_pair") != std::string::npos);
    CHECK(count_lines(csv) == 4);
    const std::string report = emit_report(man);
    CHECK(report.find("top_lyapunov") == std::string::npos);  // formula lives in manifest
    CHECK(report.find("transverse_pair") != std::string::npos);
    for (const auto& rec : man.outputs)
        if (rec.path == "furstenberg.csv") CHECK(rec.formula == "top_lyapunov");
}

TEST_CASE("cauchy-table measured coupling stays within certified bounds") {
    const fs::path dir = fresh_dir("cauchy");
    const RunManifest man = run_experiment_text(
        config_text("cauchy-table", 9, dir, "{\"trials\": 6, \"window\": 4096}"));
    REQUIRE(man.ok());
    const std::string csv = slurp(dir / "cauchy.csv");
    CHECK(count_lines(csv) == 5);  // header + depth-4 default cascade
    CHECK(csv.find("level_fbar_bounds.kickoff") != std::string::npos);
    CHECK(csv.find("level_fbar_bounds.level_gap") != std::string::npos);
    const std::string report = emit_report(man);
    CHECK(report.find("VIOLATION") == std::string::npos);
    CHECK(report.find("every measured value within its certified bound") !=
          std::string::npos);
}

TEST_CASE("zero-exponent-path sweep stays inside certified bands") {
    const fs::path dir = fresh_dir("zp");
    const RunManifest man = run_experiment_text(config_text(
        "zero-exponent-path", 13, dir,
        "{\"points\": 3, \"samples\": 512, \"tower_repeats\": [2]}"));
    REQUIRE(man.ok());
    REQUIRE(man.outputs.size() == 3);
    const std::string csv = slurp(dir / "sweep.csv");
    CHECK(count_lines(csv) == 7);  // header + 3 points x 2 levels
    CHECK(csv.find("verify_cifs.spectrum") != std::string::npos);
    const std::string report = emit_report(man);
    CHECK(report.find("fiber_in_band") != std::string::npos);
    CHECK(report.find("3/3") != std::string::npos);
    CHECK(report.find("NO") == std::string::npos);
}

TEST_CASE("stage failures are recorded in the manifest, not thrown") {
    const fs::path dir = fresh_dir("stagefail");
    // valid config; the tower search itself fails at run time
    const RunManifest man = run_experiment_text(config_text(
        "zero-exponent-path", 3, dir,
        "{\"points\": 2, \"samples\": 256, \"tower_repeats\": [4, 4, 4], "
        "\"budget_constant\": 0.25}"));
    CHECK(!man.ok());
    CHECK(man.error.find("search_tail") != std::string::npos);
    CHECK(fs::exists(dir / "manifest.json"));
    const RunManifest back = manifest_from_json(slurp(dir / "manifest.json"));
    CHECK(back.error == man.error);
    // no outputs completed, so the report refuses to render
    CHECK_THROWS_AS(emit_report(man), invalid_input);
}

TEST_CASE("emit_report rejects empty, missing, and stale outputs") {
    RunManifest empty;
    empty.experiment = "lln";
    CHECK_THROWS_AS(emit_report(empty), invalid_input);

    const fs::path dir = fresh_dir("report_stale");
    const RunManifest man = run_experiment_text(config_text(
        "lln", 11, dir, "{\"vectors\": 1, \"trials\": 100, \"horizon\": 60}"));
    REQUIRE(man.ok());

    // stale: file modified after the run
    {
        std::ofstream out(dir / "lln.csv", std::ios::app);
        out << "tampered\n";
    }
    CHECK_THROWS_AS(emit_report(man), invalid_input);

    // missing: file removed
    fs::remove(dir / "lln.csv");
    CHECK_THROWS_AS(emit_report(man), invalid_input);
}

TEST_CASE("unwritable output directory is a validation error") {
    const fs::path blocker = fresh_dir("blocker");
    {
        std::ofstream out(blocker);
        out << "file, not a directory\n";
    }
    const fs::path nested = blocker / "sub";
    CHECK_THROWS_AS(run_experiment_text(config_text(
                        "lln", 1, nested, "{\"vectors\": 1, \"trials\": 100, \"horizon\": 60}")),
                    invalid_input);
    fs::remove(blocker);
}
