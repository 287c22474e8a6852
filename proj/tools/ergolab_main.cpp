// Experiment driver. Subcommands:
//   run <config.json>        execute one experiment, write outputs + manifest
//   report <manifest.json>   certified-vs-measured table for a finished run
//   fbar <a.txt> <b.txt>     normalized edit distance between symbol files
//   lyap <family.json>       top growth-rate estimate for a matrix family
//   cifs-verify <sys> <col>  re-verify a contraction system certificate
// Exit codes: 0 success, 2 invalid input, 3 experiment or verification
// failure.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ergolab/circle.hpp"
#include "ergolab/cocycle.hpp"
#include "ergolab/core.hpp"
#include "ergolab/experiment.hpp"
#include "ergolab/fbar.hpp"
#include "nlohmann/json.hpp"

namespace {

using nlohmann::json;

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ergolab::invalid_input("cannot read file: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::vector<std::uint32_t> read_symbols(const std::string& path) {
    std::istringstream in(slurp(path));
    std::vector<std::uint32_t> out;
    long long v;
    while (in >> v) {
        if (v < 0) throw ergolab::invalid_input(path + ": symbols must be nonnegative");
        out.push_back(static_cast<std::uint32_t>(v));
    }
    if (!in.eof()) throw ergolab::invalid_input(path + ": expected whitespace-separated integers");
    if (out.empty()) throw ergolab::invalid_input(path + ": no symbols");
    return out;
}

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed,
            std::optional<std::string> outdir) {
    const ergolab::RunManifest man = ergolab::run_experiment(config, seed, outdir);
    std::cout << "manifest: " << man.output_dir << "/manifest.json\n";
    for (const auto& rec : man.outputs)
        std::cout << "  " << rec.stage << ": " << man.output_dir << "/" << rec.path << "\n";
    if (!man.ok()) {
        std::cerr << "experiment failed: " << man.error << "\n";
        return 3;
    }
    return 0;
}

int cmd_report(const std::string& manifest_path) {
    const ergolab::RunManifest man = ergolab::manifest_from_json(slurp(manifest_path));
    std::cout << ergolab::emit_report(man);
    return man.ok() ? 0 : 3;
}

int cmd_fbar(const std::string& file_a, const std::string& file_b, std::size_t n) {
    std::vector<std::uint32_t> a = read_symbols(file_a);
    std::vector<std::uint32_t> b = read_symbols(file_b);
    if (n == 0) n = std::min(a.size(), b.size());
    if (n > a.size() || n > b.size())
        throw ergolab::invalid_input("--n exceeds an input length");
    a.resize(n);
    b.resize(n);
    std::uint32_t top = 0;
    for (std::uint32_t s : a) top = std::max(top, s);
    for (std::uint32_t s : b) top = std::max(top, s);
    const ergolab::Alphabet alpha{top + 1};
    const double value = ergolab::edit_distance_n(ergolab::Word(alpha, std::move(a)),
                                                  ergolab::Word(alpha, std::move(b)));
    json out;
    out["n"] = n;
    out["alphabet"] = alpha.size;
    out["fbar"] = value;
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_lyap(const std::string& family_path, std::uint64_t steps, std::uint32_t trials,
             std::uint64_t seed) {
    const ergolab::CocycleFamily family =
        ergolab::cocycle_family_from_json(slurp(family_path));
    const ergolab::BernoulliVector p = ergolab::uniform_vector(family.alphabet());
    const ergolab::LyapunovEstimate est =
        ergolab::top_lyapunov(family, p, steps, trials, ergolab::RngStream(seed, 1));
    std::cout << est.to_json() << "\n";
    return 0;
}

int cmd_cifs_verify(const std::string& system_path, const std::string& collection_path) {
    const ergolab::SkewSystem sys = ergolab::skew_system_from_json(slurp(system_path));
    json col;
    try {
        col = json::parse(slurp(collection_path));
    } catch (const json::exception& e) {
        throw ergolab::invalid_input(std::string("collection: not valid JSON: ") + e.what());
    }
    if (!col.is_object() || !col.contains("words") || !col.contains("region"))
        throw ergolab::invalid_input("collection: needs \"words\" and \"region\"");
    std::vector<ergolab::Word> words;
    for (const auto& w : col["words"]) {
        std::vector<std::uint32_t> syms;
        for (const auto& s : w) syms.push_back(s.get<std::uint32_t>());
        words.emplace_back(sys.alphabet(), std::move(syms));
    }
    const ergolab::Arc region(col["region"].at("start").get<double>(),
                              col["region"].at("length").get<double>());
    const double envelope = col.value("envelope", 1.5);
    const double decay_rate = col.value("decay_rate", -0.8);
    const double exponent = col.value("exponent", -1.0);
    const double band = col.value("band", 0.2);
    const std::uint32_t grid = col.value("grid", 128u);
    const ergolab::CifsOutcome out =
        ergolab::verify_cifs(sys, words, region, envelope, decay_rate, exponent, band, grid);
    if (out.ok()) {
        std::cout << out.certificate->to_json() << "\n";
        return 0;
    }
    std::cout << out.failure->to_json() << "\n";
    std::cerr << "verification failed on condition: " << out.failure->condition << "\n";
    return 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coded-measure experiment driver"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "execute an experiment config");
    std::string run_config;
    run->add_option("config", run_config, "JSON config file")->required();
    std::optional<std::uint64_t> run_seed;
    run->add_option("--seed", run_seed, "override the config seed");
    std::optional<std::string> run_outdir;
    run->add_option("--output-dir", run_outdir, "override the output directory");

    auto* rep = app.add_subcommand("report", "summarize a finished run");
    std::string rep_manifest;
    rep->add_option("manifest", rep_manifest, "manifest.json from a run")->required();

    auto* fb = app.add_subcommand("fbar", "edit distance between two symbol files");
    std::string fbar_a, fbar_b;
    fb->add_option("file_a", fbar_a, "whitespace-separated symbols")->required();
    fb->add_option("file_b", fbar_b, "whitespace-separated symbols")->required();
    std::size_t fbar_n = 0;
    fb->add_option("--n", fbar_n, "prefix length (default: shorter input)");

    auto* ly = app.add_subcommand("lyap", "top growth rate of a matrix family");
    std::string lyap_family;
    ly->add_option("family", lyap_family, "JSON matrix family")->required();
    std::uint64_t lyap_steps = 100000;
    ly->add_option("--steps", lyap_steps, "product length per trial");
    std::uint32_t lyap_trials = 8;
    ly->add_option("--trials", lyap_trials, "independent trials");
    std::uint64_t lyap_seed = 1;
    ly->add_option("--seed", lyap_seed, "random seed");

    auto* cv = app.add_subcommand("cifs-verify", "re-verify a contraction certificate");
    std::string cifs_system, cifs_collection;
    cv->add_option("system", cifs_system, "JSON matrix list")->required();
    cv->add_option("collection", cifs_collection, "JSON words + region + constants")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(run_config, run_seed, run_outdir);
        if (*rep) return cmd_report(rep_manifest);
        if (*fb) return cmd_fbar(fbar_a, fbar_b, fbar_n);
        if (*ly) return cmd_lyap(lyap_family, lyap_steps, lyap_trials, lyap_seed);
        if (*cv) return cmd_cifs_verify(cifs_system, cifs_collection);
    } catch (const ergolab::invalid_input& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
