#include "ergolab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ergolab/cascade.hpp"
#include "ergolab/circle.hpp"
#include "ergolab/cocycle.hpp"
#include "ergolab/fbar.hpp"
#include "ergolab/substitution.hpp"
#include "nlohmann/json.hpp"

namespace fs = std::filesystem;

namespace ergolab {

namespace {

constexpr const char* kVersion = "0.1.0";

using nlohmann::json;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

std::string format_utc(std::time_t t) {
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input("cannot read file: " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

// Writes the bytes, records the stage in the manifest. Paths stay relative
// so manifests remain portable next to their run directory.
void emit_stage(RunManifest& man, const fs::path& outdir, const std::string& stage,
                const std::string& relpath, const std::string& bytes,
                const std::string& formula = "") {
    const fs::path full = outdir / relpath;
    std::ofstream out(full, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write output: " + full.string());
    out << bytes;
    out.close();
    man.outputs.push_back(StageRecord{stage, relpath, fnv1a_hex(bytes), formula});
}

// Strict key-value schema: every present key must be known, every required
// key present, and types must match exactly.
void check_keys(const json& j, const std::string& where,
                const std::vector<std::string>& required,
                const std::vector<std::string>& optional) {
    if (!j.is_object()) throw invalid_input(where + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        const bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                           std::find(optional.begin(), optional.end(), key) != optional.end();
        if (!known) throw invalid_input(where + ": unknown key \"" + key + "\"");
    }
    for (const auto& key : required)
        if (!j.contains(key)) throw invalid_input(where + ": missing key \"" + key + "\"");
}

std::uint64_t get_uint(const json& j, const std::string& key, std::uint64_t fallback,
                       std::uint64_t lo, std::uint64_t hi) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_unsigned())
        throw invalid_input("params." + key + ": expected a nonnegative integer");
    const std::uint64_t v = j[key].get<std::uint64_t>();
    if (v < lo || v > hi)
        throw invalid_input("params." + key + ": out of range [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "]");
    return v;
}

double get_double(const json& j, const std::string& key, double fallback, double lo, double hi) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw invalid_input("params." + key + ": expected a number");
    const double v = j[key].get<double>();
    if (!(v >= lo && v <= hi)) throw invalid_input("params." + key + ": out of range");
    return v;
}

std::vector<double> get_prob_pair(const json& j, const std::string& key,
                                  std::vector<double> fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_array() || j[key].size() != 2)
        throw invalid_input("params." + key + ": expected an array of two numbers");
    std::vector<double> v;
    for (const auto& x : j[key]) {
        if (!x.is_number()) throw invalid_input("params." + key + ": expected numbers");
        v.push_back(x.get<double>());
    }
    if (!(v[0] >= 0.0 && v[1] >= 0.0 && std::abs(v[0] + v[1] - 1.0) < 1e-9))
        throw invalid_input("params." + key + ": entries must be nonnegative and sum to 1");
    return v;
}

BernoulliVector exact_vector(Alphabet a, std::vector<double> probs) {
    double total = 0.0;
    for (double x : probs) total += x;
    for (double& x : probs) x /= total;
    double partial = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) partial += probs[i];
    probs.back() = 1.0 - partial;
    return BernoulliVector(a, std::move(probs));
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable parse_csv(const std::string& text) {
    CsvTable table;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (first) {
            table.header = std::move(cells);
            first = false;
        } else {
            table.rows.push_back(std::move(cells));
        }
    }
    return table;
}

std::size_t column_of(const CsvTable& t, const std::string& name) {
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i] == name) return i;
    throw invalid_input("report: csv is missing column " + name);
}

// ---------------------------------------------------------------- furstenberg

void validate_furstenberg(const json& params) {
    check_keys(params, "params", {}, {"steps", "trials"});
    get_uint(params, "steps", 1000000, 1000, 100000000);
    get_uint(params, "trials", 4, 2, 64);
}

void run_furstenberg(const json& params, std::uint64_t seed, const fs::path& outdir,
                     RunManifest& man) {
    const std::uint64_t steps = get_uint(params, "steps", 1000000, 1000, 100000000);
    const std::uint32_t trials =
        static_cast<std::uint32_t>(get_uint(params, "trials", 4, 2, 64));

    struct RowSpec {
        const char* name;
        CocycleFamily family;
        const char* expected;
    };
    const std::vector<RowSpec> rows = {
        {"isometric_pair", isometric_pair(), "zero"},
        {"axis_swapping_pair", axis_swapping_pair(), "zero"},
        {"transverse_pair", transverse_pair(), "positive"},
    };

    std::string csv =
        "family,expected,steps,trials,value,standard_error,tracking_value,flagged\n";
    json summary;
    summary["rows"] = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const BernoulliVector p = uniform_vector(rows[i].family.alphabet());
        const LyapunovEstimate est =
            top_lyapunov(rows[i].family, p, steps, trials, RngStream(seed, 901 + i));
        csv += std::string(rows[i].name) + "," + rows[i].expected + "," +
               std::to_string(steps) + "," + std::to_string(trials) + "," + fmt(est.value) +
               "," + fmt(est.standard_error) + "," + fmt(est.tracking_value) + "," +
               (est.cross_check_flagged ? "1" : "0") + "\n";
        json r;
        r["family"] = rows[i].name;
        r["expected"] = rows[i].expected;
        r["estimate"] = json::parse(est.to_json());
        summary["rows"].push_back(r);
    }
    emit_stage(man, outdir, "exponent-table", "furstenberg.csv", csv, "top_lyapunov");
    emit_stage(man, outdir, "summary", "furstenberg.json", summary.dump(2) + "\n");
}

// ------------------------------------------------------------------------ lln

void validate_lln(const json& params) {
    check_keys(params, "params", {}, {"delta", "vectors", "trials", "horizon", "alphabet"});
    get_double(params, "delta", 0.1, 1e-4, 0.5);
    get_uint(params, "vectors", 20, 1, 200);
    get_uint(params, "trials", 10000, 10, 1000000);
    get_uint(params, "horizon", 1000, 8, 100000);
    get_uint(params, "alphabet", 2, 2, 16);
}

void run_lln(const json& params, std::uint64_t seed, const fs::path& outdir, RunManifest& man) {
    const double delta = get_double(params, "delta", 0.1, 1e-4, 0.5);
    const std::size_t vectors = get_uint(params, "vectors", 20, 1, 200);
    const std::size_t trials = get_uint(params, "trials", 10000, 10, 1000000);
    const std::size_t horizon = get_uint(params, "horizon", 1000, 8, 100000);
    const Alphabet alpha{static_cast<std::uint32_t>(get_uint(params, "alphabet", 2, 2, 16))};

    const double L = bernstein_lln_constant(alpha.size, delta);
    std::string csv =
        "vector,p,formula,delta,L,series_value,good_mass,good_mass_se,trials,horizon\n";
    json summary;
    summary["L"] = L;
    summary["delta"] = delta;
    summary["alphabet"] = alpha.size;
    summary["rows"] = json::array();
    RngStream root(seed, 902);
    for (std::size_t i = 0; i < vectors; ++i) {
        RngStream vec_rng = root.split(2 * i);
        std::vector<double> raw(alpha.size);
        for (double& x : raw) x = -std::log(1.0 - vec_rng.next_unit());
        const BernoulliVector p = exact_vector(alpha, raw);
        RngStream check_rng = root.split(2 * i + 1);
        const LlnReport rep = lln_check(p, delta, L, trials, horizon, check_rng);
        std::string pcell;
        for (std::size_t a = 0; a < p.probs.size(); ++a)
            pcell += (a ? ";" : "") + fmt(p.probs[a]);
        csv += std::to_string(i) + "," + pcell + ",bernstein_lln_constant," + fmt(delta) +
               "," + fmt(L) + "," + fmt(rep.series_value) + "," + fmt(rep.good_mass) + "," +
               fmt(rep.good_mass_se) + "," + std::to_string(trials) + "," +
               std::to_string(horizon) + "\n";
        summary["rows"].push_back(json::parse(rep.to_json()));
    }
    emit_stage(man, outdir, "mass-table", "lln.csv", csv, "bernstein_lln_constant");
    emit_stage(man, outdir, "summary", "lln.json", summary.dump(2) + "\n");
}

// --------------------------------------------------------------- cauchy-table

json default_cauchy_cascade() {
    // Two 24-symbol images over a three-letter target, frozen from a fixed
    // stream so configs stay short.
    RngStream gen(2024, 7);
    json a = json::array(), b = json::array();
    for (int i = 0; i < 24; ++i) a.push_back(static_cast<std::uint32_t>(gen.next_below(3)));
    for (int i = 0; i < 24; ++i) b.push_back(static_cast<std::uint32_t>(gen.next_below(3)));
    json base;
    base["source_size"] = 2;
    base["target_size"] = 3;
    base["images"] = json::array({a, b});
    json cfg;
    cfg["base"] = base;
    cfg["repeats"] = json::array({2, 3, 2, 2});
    cfg["tail_constant"] = 0.05;
    cfg["tail_mode"] = "hash_varied";
    cfg["tail_seed"] = 5;
    return cfg;
}

void validate_cauchy(const json& params) {
    check_keys(params, "params", {}, {"cascade", "trials", "window", "p"});
    const json cfg = params.contains("cascade") ? params["cascade"] : default_cauchy_cascade();
    const CascadeConfig parsed = cascade_config_from_json(cfg.dump());
    if (parsed.repeats.empty()) throw invalid_input("params.cascade: needs at least one level");
    get_uint(params, "trials", 24, 2, 4096);
    get_uint(params, "window", 16384, 64, 1 << 22);
    if (params.contains("p")) {
        if (!params["p"].is_array() || params["p"].size() != parsed.base.source.size)
            throw invalid_input("params.p: size must match the base alphabet");
    }
}

void run_cauchy(const json& params, std::uint64_t seed, const fs::path& outdir,
                RunManifest& man) {
    const json cfg = params.contains("cascade") ? params["cascade"] : default_cauchy_cascade();
    Cascade c(cascade_config_from_json(cfg.dump()));
    const std::uint32_t depth = static_cast<std::uint32_t>(c.config().repeats.size());
    const std::size_t trials = get_uint(params, "trials", 24, 2, 4096);
    const std::size_t window = get_uint(params, "window", 16384, 64, 1 << 22);
    BernoulliVector p = uniform_vector(c.base_alphabet());
    if (params.contains("p")) {
        std::vector<double> raw;
        for (const auto& x : params["p"]) raw.push_back(x.get<double>());
        p = exact_vector(c.base_alphabet(), raw);
    }

    // Stream size targets the window: enough top-level letters to fill it.
    const std::uint64_t roof0 = c.roof_length(c.zero_letter(depth));
    const std::size_t letters = std::max<std::uint64_t>(1, window / std::max<std::uint64_t>(1, roof0));

    std::string csv =
        "k,top_level,formula,certified,measured,standard_error,trials,letters\n";
    json summary;
    summary["cascade"] = cfg;
    summary["letters"] = letters;
    summary["rows"] = json::array();
    for (std::uint32_t k = 0; k < depth; ++k) {
        std::vector<double> edits;
        edits.reserve(trials);
        for (std::size_t t = 0; t < trials; ++t) {
            RngStream sub = RngStream(seed, 7000 + k).split(t);
            std::vector<std::uint32_t> full, stripped;
            for (std::size_t i = 0; i < letters; ++i) {
                const LetterPath a = c.sample_path(p, depth, sub);
                const Word fw = c.image(a);
                full.insert(full.end(), fw.symbols.begin(), fw.symbols.end());
                for (const LetterPath& piece : c.respell(a, k)) {
                    const Word pw = c.image(piece);
                    stripped.insert(stripped.end(), pw.symbols.begin(), pw.symbols.end());
                }
            }
            const std::size_t lcs = lcs_length(full, stripped);
            const double longer =
                static_cast<double>(std::max(full.size(), stripped.size()));
            edits.push_back(1.0 - static_cast<double>(lcs) / longer);
        }
        double mean = 0.0;
        for (double e : edits) mean += e;
        mean /= static_cast<double>(edits.size());
        double ss = 0.0;
        for (double e : edits) ss += (e - mean) * (e - mean);
        const double se = std::sqrt(ss / static_cast<double>(edits.size() - 1) /
                                    static_cast<double>(edits.size()));
        const FbarBoundReport rep = level_fbar_bounds(c, p, p, k);
        const double certified = k == 0 ? rep.kickoff : rep.level_gap;
        const std::string formula =
            k == 0 ? "level_fbar_bounds.kickoff" : "level_fbar_bounds.level_gap";
        csv += std::to_string(k) + "," + std::to_string(depth) + "," + formula + "," +
               fmt(certified) + "," + fmt(mean) + "," + fmt(se) + "," +
               std::to_string(trials) + "," + std::to_string(letters) + "\n";
        json r;
        r["k"] = k;
        r["certified"] = json::parse(rep.to_json());
        r["measured"] = mean;
        r["standard_error"] = se;
        summary["rows"].push_back(r);
    }
    emit_stage(man, outdir, "coupling-table", "cauchy.csv", csv, "level_fbar_bounds");
    emit_stage(man, outdir, "summary", "cauchy.json", summary.dump(2) + "\n");
}

// --------------------------------------------------------- zero-exponent-path

void validate_zero_path(const json& params) {
    check_keys(params, "params", {},
               {"points", "samples", "endpoint_a", "endpoint_b", "tower_repeats",
                "budget_constant"});
    get_uint(params, "points", 7, 2, 256);
    get_uint(params, "samples", 4000, 256, 1 << 20);
    get_prob_pair(params, "endpoint_a", {1.0, 0.0});
    get_prob_pair(params, "endpoint_b", {0.5, 0.5});
    get_double(params, "budget_constant", 2.0, 0.25, 16.0);
    if (params.contains("tower_repeats")) {
        if (!params["tower_repeats"].is_array() || params["tower_repeats"].empty() ||
            params["tower_repeats"].size() > 3)
            throw invalid_input("params.tower_repeats: expected 1..3 entries");
        for (const auto& m : params["tower_repeats"])
            if (!m.is_number_unsigned() || m.get<std::uint64_t>() < 2 ||
                m.get<std::uint64_t>() > 4)
                throw invalid_input("params.tower_repeats: entries must be integers in [2,4]");
    }
}

void run_zero_path(const json& params, std::uint64_t seed, const fs::path& outdir,
                   RunManifest& man) {
    const std::size_t points = get_uint(params, "points", 7, 2, 256);
    const std::size_t samples = get_uint(params, "samples", 4000, 256, 1 << 20);
    const std::vector<double> ea = get_prob_pair(params, "endpoint_a", {1.0, 0.0});
    const std::vector<double> eb = get_prob_pair(params, "endpoint_b", {0.5, 0.5});
    const double budget = get_double(params, "budget_constant", 2.0, 0.25, 16.0);
    std::vector<std::uint32_t> repeats{2, 2};
    if (params.contains("tower_repeats")) {
        repeats.clear();
        for (const auto& m : params["tower_repeats"])
            repeats.push_back(static_cast<std::uint32_t>(m.get<std::uint64_t>()));
    }

    const CifsSeed sd = stock_cifs_seed();
    const CifsOutcome base = verify_cifs(sd.system, sd.words, sd.region, sd.envelope,
                                         sd.decay_rate, sd.exponent, sd.band, sd.grid);
    if (!base.ok()) throw std::runtime_error("stock certificate failed verification");
    TowerConfig tc;
    tc.repeats = repeats;
    tc.budget_constant = budget;
    // Small repeat counts are fine: every level is re-verified from scratch,
    // so the search horizon is a heuristic here, not a soundness input.
    tc.tail_params.min_repeats = 2;
    const GeometricCascade tower(sd.system, *base.certificate, tc);
    const std::uint32_t depth = tower.depth();

    json tj;
    tj["depth"] = depth;
    tj["level_sizes"] = json::array();
    tj["bands"] = json::array();
    for (std::uint32_t n = 0; n <= depth; ++n) {
        tj["level_sizes"].push_back(tower.level_size(n));
        const CifsCertificate& cert = tower.certificate(n);
        json b;
        b["level"] = n;
        b["exponent"] = cert.exponent;
        b["band"] = cert.band;
        b["formula"] = "verify_cifs.spectrum";
        tj["bands"].push_back(b);
    }
    emit_stage(man, outdir, "tower", "tower.json", tj.dump(2) + "\n", "verify_cifs.spectrum");

    std::string csv =
        "point,t,p0,p1,base_entropy,level,nu_entropy,nu_entropy_se,nu_exact,"
        "fiber_exponent,fiber_exponent_se,band_center,band_halfwidth,formula\n";
    json summary;
    summary["endpoint_a"] = ea;
    summary["endpoint_b"] = eb;
    summary["points"] = points;
    for (std::size_t i = 0; i < points; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(points - 1);
        const BernoulliVector p =
            exact_vector(Alphabet{2}, {(1.0 - t) * ea[0] + t * eb[0],
                                       (1.0 - t) * ea[1] + t * eb[1]});
        const double base_h = shannon_entropy(p);
        for (std::uint32_t n = 0; n <= depth; ++n) {
            RngStream er(seed, 9000 + 16 * i + n);
            const NuEntropy ne = nu_entropy(tower.cascade(), p, n, samples, &er);
            RngStream orr(seed, 9500 + 16 * i + n);
            const OrbitSummary orbit = sample_mu_n(tower.system(), tower, p, n, samples, orr);
            const CifsCertificate& cert = tower.certificate(n);
            csv += std::to_string(i) + "," + fmt(t) + "," + fmt(p.probs[0]) + "," +
                   fmt(p.probs[1]) + "," + fmt(base_h) + "," + std::to_string(n) + "," +
                   fmt(ne.value) + "," + fmt(ne.value_se) + "," + (ne.exact ? "1" : "0") +
                   "," + fmt(orbit.exponent) + "," + fmt(orbit.exponent_se) + "," +
                   fmt(cert.exponent) + "," + fmt(cert.band) + ",verify_cifs.spectrum\n";
        }
    }
    emit_stage(man, outdir, "sweep", "sweep.csv", csv, "verify_cifs.spectrum");
    emit_stage(man, outdir, "summary", "zero_exponent_path.json", summary.dump(2) + "\n");
}

// ------------------------------------------------------------------- dispatch

struct ExperimentSpec {
    void (*validate)(const json&);
    void (*run)(const json&, std::uint64_t, const fs::path&, RunManifest&);
};

const std::map<std::string, ExperimentSpec>& registry() {
    static const std::map<std::string, ExperimentSpec> reg = {
        {"zero-exponent-path", {validate_zero_path, run_zero_path}},
        {"cauchy-table", {validate_cauchy, run_cauchy}},
        {"furstenberg", {validate_furstenberg, run_furstenberg}},
        {"lln", {validate_lln, run_lln}},
    };
    return reg;
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string RunManifest::to_json() const {
    json j;
    j["experiment"] = experiment;
    j["config_text"] = config_text;
    j["seed"] = seed;
    j["version"] = version;
    j["output_dir"] = output_dir;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["outputs"] = json::array();
    for (const auto& rec : outputs) {
        json r;
        r["stage"] = rec.stage;
        r["path"] = rec.path;
        r["checksum"] = rec.checksum;
        r["formula"] = rec.formula;
        j["outputs"].push_back(r);
    }
    j["error"] = error;
    return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw invalid_input(std::string("manifest: not valid JSON: ") + e.what());
    }
    check_keys(j, "manifest",
               {"experiment", "config_text", "seed", "version", "output_dir", "started_at",
                "finished_at", "outputs", "error"},
               {});
    RunManifest man;
    man.experiment = j["experiment"].get<std::string>();
    man.config_text = j["config_text"].get<std::string>();
    man.seed = j["seed"].get<std::uint64_t>();
    man.version = j["version"].get<std::string>();
    man.output_dir = j["output_dir"].get<std::string>();
    man.started_at = j["started_at"].get<std::string>();
    man.finished_at = j["finished_at"].get<std::string>();
    man.error = j["error"].get<std::string>();
    for (const auto& r : j["outputs"]) {
        check_keys(r, "manifest.outputs", {"stage", "path", "checksum", "formula"}, {});
        man.outputs.push_back(StageRecord{r["stage"].get<std::string>(),
                                          r["path"].get<std::string>(),
                                          r["checksum"].get<std::string>(),
                                          r["formula"].get<std::string>()});
    }
    return man;
}

RunManifest run_experiment_text(const std::string& config_text,
                                std::optional<std::uint64_t> seed_override,
                                std::optional<std::string> outdir_override) {
    json j;
    try {
        j = json::parse(config_text);
    } catch (const json::exception& e) {
        throw invalid_input(std::string("config: not valid JSON: ") + e.what());
    }
    check_keys(j, "config", {"experiment", "seed", "output_dir"}, {"params"});
    if (!j["experiment"].is_string()) throw invalid_input("config.experiment: expected a string");
    if (!j["seed"].is_number_unsigned())
        throw invalid_input("config.seed: expected a nonnegative integer");
    if (!j["output_dir"].is_string()) throw invalid_input("config.output_dir: expected a string");
    if (seed_override) j["seed"] = *seed_override;
    if (outdir_override) j["output_dir"] = *outdir_override;

    const std::string name = j["experiment"].get<std::string>();
    const auto it = registry().find(name);
    if (it == registry().end()) throw invalid_input("config.experiment: unknown experiment \"" + name + "\"");
    const json params = j.contains("params") ? j["params"] : json::object();
    it->second.validate(params);

    RunManifest man;
    man.experiment = name;
    man.config_text = j.dump();
    man.seed = j["seed"].get<std::uint64_t>();
    man.version = kVersion;
    man.output_dir = j["output_dir"].get<std::string>();
    man.started_at = format_utc(std::time(nullptr));

    const fs::path outdir(man.output_dir);
    std::error_code ec;
    fs::create_directories(outdir, ec);
    if (ec) throw invalid_input("config.output_dir: cannot create " + outdir.string());

    try {
        it->second.run(params, man.seed, outdir, man);
    } catch (const std::exception& e) {
        man.error = e.what();
    }
    man.finished_at = format_utc(std::time(nullptr));

    std::ofstream mf(outdir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (mf) mf << man.to_json();
    return man;
}

RunManifest run_experiment(const std::string& config_path,
                           std::optional<std::uint64_t> seed_override,
                           std::optional<std::string> outdir_override) {
    return run_experiment_text(read_file(config_path), seed_override, outdir_override);
}

namespace {

double cell_num(const std::vector<std::string>& row, std::size_t idx) {
    return std::strtod(row[idx].c_str(), nullptr);
}

void render_cauchy(std::ostringstream& out, const CsvTable& t) {
    const std::size_t ck = column_of(t, "k"), cf = column_of(t, "formula"),
                      cc = column_of(t, "certified"), cm = column_of(t, "measured"),
                      cs = column_of(t, "standard_error");
    out << "  k  formula                        certified    measured     flag\n";
    std::size_t bad = 0;
    for (const auto& row : t.rows) {
        const double cert = cell_num(row, cc), meas = cell_num(row, cm),
                     se = cell_num(row, cs);
        const bool ok = meas <= cert + 3.0 * se;
        if (!ok) ++bad;
        char line[160];
        std::snprintf(line, sizeof(line), "  %-2s %-30s %-12.6g %-12.6g %s\n",
                      row[ck].c_str(), row[cf].c_str(), cert, meas,
                      ok ? "OK" : "VIOLATION");
        out << line;
    }
    out << (bad == 0 ? "  every measured value within its certified bound\n"
                     : "  " + std::to_string(bad) + " row(s) exceed their certified bound\n");
}

void render_furstenberg(std::ostringstream& out, const CsvTable& t) {
    const std::size_t cn = column_of(t, "family"), ce = column_of(t, "expected"),
                      cv = column_of(t, "value"), cs = column_of(t, "standard_error");
    out << "  family                expected   value        std_error    flag\n";
    for (const auto& row : t.rows) {
        const double v = cell_num(row, cv), se = cell_num(row, cs);
        bool ok;
        if (row[ce] == "zero")
            ok = std::abs(v) <= std::max(0.02, 5.0 * se);
        else
            ok = v > 5.0 * se;
        char line[160];
        std::snprintf(line, sizeof(line), "  %-21s %-10s %-12.6g %-12.6g %s\n",
                      row[cn].c_str(), row[ce].c_str(), v, se, ok ? "OK" : "OFF-PATTERN");
        out << line;
    }
}

void render_lln(std::ostringstream& out, const CsvTable& t) {
    const std::size_t ci = column_of(t, "vector"), cd = column_of(t, "delta"),
                      cl = column_of(t, "L"), cm = column_of(t, "good_mass");
    out << "  vector  L            good_mass    flag\n";
    std::size_t bad = 0;
    for (const auto& row : t.rows) {
        const double mass = cell_num(row, cm), delta = cell_num(row, cd);
        const bool ok = mass >= 1.0 - delta;
        if (!ok) ++bad;
        char line[120];
        std::snprintf(line, sizeof(line), "  %-7s %-12.6g %-12.6g %s\n", row[ci].c_str(),
                      cell_num(row, cl), mass, ok ? "OK" : "LOW");
        out << line;
    }
    out << (bad == 0 ? "  every vector meets the certified mass bound\n"
                     : "  " + std::to_string(bad) + " vector(s) below the mass bound\n");
}

void render_zero_path(std::ostringstream& out, const CsvTable& t) {
    const std::size_t cl = column_of(t, "level"), ch = column_of(t, "base_entropy"),
                      cn = column_of(t, "nu_entropy"), cx = column_of(t, "fiber_exponent"),
                      cxs = column_of(t, "fiber_exponent_se"),
                      cb = column_of(t, "band_center"), cw = column_of(t, "band_halfwidth");
    std::map<std::string, std::vector<const std::vector<std::string>*>> by_level;
    for (const auto& row : t.rows) by_level[row[cl]].push_back(&row);
    out << "  level  rows  entropy_monotone  fiber_in_band\n";
    for (const auto& [level, rows] : by_level) {
        bool monotone = true;
        std::size_t inside = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (i > 0) {
                const bool base_up =
                    cell_num(*rows[i], ch) >= cell_num(*rows[i - 1], ch) - 1e-12;
                const bool nu_up =
                    cell_num(*rows[i], cn) >= cell_num(*rows[i - 1], cn) - 1e-9;
                if (base_up && !nu_up) monotone = false;
            }
            const double x = cell_num(*rows[i], cx), se = cell_num(*rows[i], cxs);
            const double mid = cell_num(*rows[i], cb), half = cell_num(*rows[i], cw);
            if (std::abs(x - mid) <= half + 3.0 * se) ++inside;
        }
        char line[120];
        std::snprintf(line, sizeof(line), "  %-6s %-5zu %-17s %zu/%zu\n", level.c_str(),
                      rows.size(), monotone ? "yes" : "NO", inside, rows.size());
        out << line;
    }
}

}  // namespace

std::string emit_report(const RunManifest& manifest) {
    if (manifest.outputs.empty())
        throw invalid_input("emit_report: manifest lists no outputs");
    std::ostringstream out;
    out << "experiment: " << manifest.experiment << "\n";
    out << "seed: " << manifest.seed << "  version: " << manifest.version << "\n";
    out << "status: " << (manifest.ok() ? "ok" : ("error: " + manifest.error)) << "\n";

    std::map<std::string, std::string> files;
    for (const auto& rec : manifest.outputs) {
        const fs::path full = fs::path(manifest.output_dir) / rec.path;
        const std::string bytes = read_file(full);
        if (fnv1a_hex(bytes) != rec.checksum)
            throw invalid_input("emit_report: output is stale: " + rec.path);
        files[rec.path] = bytes;
        out << "  output " << rec.path << " (" << rec.stage << ", fnv1a " << rec.checksum
            << ")\n";
    }
    out << "\n";

    for (const auto& [path, bytes] : files) {
        if (path.size() < 4 || path.substr(path.size() - 4) != ".csv") continue;
        const CsvTable t = parse_csv(bytes);
        if (manifest.experiment == "cauchy-table")
            render_cauchy(out, t);
        else if (manifest.experiment == "furstenberg")
            render_furstenberg(out, t);
        else if (manifest.experiment == "lln")
            render_lln(out, t);
        else if (manifest.experiment == "zero-exponent-path")
            render_zero_path(out, t);
    }
    return out.str();
}

}  // namespace ergolab
