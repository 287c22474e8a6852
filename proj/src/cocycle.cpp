#include "ergolab/cocycle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

#include "nlohmann/json.hpp"

namespace ergolab {

namespace {

constexpr std::uint64_t kRenormEvery = 32;

// Running product with scalar norm factored out; det drifts below one after
// renormalization, so this cannot be an Sl2Matrix.
struct RawMatrix {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;
};

RawMatrix multiply(const Sl2Matrix& lhs, const RawMatrix& rhs) {
    return RawMatrix{lhs.a * rhs.a + lhs.b * rhs.c, lhs.a * rhs.b + lhs.b * rhs.d,
                     lhs.c * rhs.a + lhs.d * rhs.c, lhs.c * rhs.b + lhs.d * rhs.d};
}

// Largest singular value; valid for any 2x2, not just the unit-det sheet.
double raw_norm(const RawMatrix& m) {
    const double t = m.a * m.a + m.b * m.b + m.c * m.c + m.d * m.d;
    const double det = m.a * m.d - m.b * m.c;
    const double disc = std::max(0.0, t * t - 4.0 * det * det);
    return std::sqrt(0.5 * (t + std::sqrt(disc)));
}

struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

double sample_mean(const std::vector<double>& xs) {
    KahanSum acc;
    for (double x : xs) acc.add(x);
    return acc.sum / static_cast<double>(xs.size());
}

double standard_error_of(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    KahanSum acc;
    for (double x : xs) acc.add((x - mean) * (x - mean));
    const double var = acc.sum / static_cast<double>(xs.size() - 1);
    return std::sqrt(std::max(0.0, var) / static_cast<double>(xs.size()));
}

}  // namespace

CocycleFamily::CocycleFamily(std::vector<Sl2Matrix> ms) : matrices(std::move(ms)) {
    if (matrices.empty()) throw invalid_input("CocycleFamily: needs at least one matrix");
}

const Sl2Matrix& CocycleFamily::matrix(std::uint32_t letter) const {
    if (letter >= matrices.size()) throw invalid_input("CocycleFamily: letter out of range");
    return matrices[letter];
}

std::string CocycleFamily::to_json() const {
    nlohmann::json j;
    j["matrices"] = nlohmann::json::array();
    for (const auto& m : matrices) j["matrices"].push_back({m.a, m.b, m.c, m.d});
    return j.dump();
}

CocycleFamily cocycle_family_from_json(const std::string& text) {
    return CocycleFamily(skew_system_from_json(text).matrices);
}

const char* to_string(MatrixClass c) {
    switch (c) {
        case MatrixClass::elliptic: return "elliptic";
        case MatrixClass::parabolic: return "parabolic";
        case MatrixClass::hyperbolic: return "hyperbolic";
    }
    return "unknown";
}

MatrixClass classify(const Sl2Matrix& m, double tol) {
    if (!(tol >= 0.0)) throw invalid_input("classify: tol must be nonnegative");
    const double t = std::abs(m.trace());
    if (t < 2.0 - tol) return MatrixClass::elliptic;
    if (t > 2.0 + tol) return MatrixClass::hyperbolic;
    return MatrixClass::parabolic;
}

LyapunovEstimate top_lyapunov(const CocycleFamily& family, const BernoulliVector& p,
                              std::uint64_t steps, std::uint32_t trials, RngStream rng) {
    if (steps < 1) throw invalid_input("top_lyapunov: steps must be at least 1");
    if (trials < 1) throw invalid_input("top_lyapunov: trials must be at least 1");
    if (p.alphabet.size != family.alphabet().size)
        throw invalid_input("top_lyapunov: p and family alphabets differ");

    std::vector<double> norm_rates(trials, 0.0);
    std::vector<double> track_rates(trials, 0.0);
    for (std::uint32_t t = 0; t < trials; ++t) {
        RngStream r = rng.split(t);
        RawMatrix prod;
        KahanSum norm_logs;
        KahanSum track_logs;
        const double theta0 = r.next_unit() * std::numbers::pi;
        double ux = std::cos(theta0), uy = std::sin(theta0);
        for (std::uint64_t k = 0; k < steps; ++k) {
            const Sl2Matrix& m = family.matrix(sample_letter(p, r));
            prod = multiply(m, prod);
            if ((k + 1) % kRenormEvery == 0) {
                const double s = raw_norm(prod);
                norm_logs.add(std::log(s));
                prod.a /= s;
                prod.b /= s;
                prod.c /= s;
                prod.d /= s;
            }
            const double wx = m.a * ux + m.b * uy;
            const double wy = m.c * ux + m.d * uy;
            const double len = std::sqrt(wx * wx + wy * wy);
            track_logs.add(std::log(len));
            ux = wx / len;
            uy = wy / len;
        }
        norm_logs.add(std::log(raw_norm(prod)));
        norm_rates[t] = norm_logs.sum / static_cast<double>(steps);
        track_rates[t] = track_logs.sum / static_cast<double>(steps);
    }

    LyapunovEstimate est;
    est.steps = steps;
    est.trials = trials;
    est.value = std::max(0.0, sample_mean(norm_rates));
    est.standard_error = standard_error_of(norm_rates, est.value);
    est.tracking_value = sample_mean(track_rates);
    est.tracking_error = standard_error_of(track_rates, est.tracking_value);
    // The tracker lags the norm estimate by O(log steps / steps) even when
    // both are deterministic, so that scale joins the statistical errors.
    const double floor =
        std::log(static_cast<double>(steps) + 1.0) / static_cast<double>(steps);
    const double combined = std::sqrt(est.standard_error * est.standard_error +
                                      est.tracking_error * est.tracking_error) +
                            floor;
    est.cross_check_flagged = std::abs(est.value - est.tracking_value) > 5.0 * combined;
    return est;
}

std::optional<EllipticWitness> find_elliptic(const CocycleFamily& family,
                                             std::uint32_t depth) {
    if (depth < 1) throw invalid_input("find_elliptic: depth must be at least 1");
    struct Node {
        Sl2Matrix m;
        std::vector<std::uint32_t> word;
    };
    const std::size_t budget = std::size_t{1} << 21;
    std::size_t made = 0;
    std::vector<Node> frontier{{Sl2Matrix(), {}}};
    for (std::uint32_t len = 1; len <= depth; ++len) {
        std::vector<Node> next;
        next.reserve(frontier.size() * family.matrices.size());
        for (const auto& node : frontier) {
            for (std::uint32_t s = 0; s < family.alphabet().size; ++s) {
                if (++made > budget)
                    throw search_exhausted("find_elliptic: word tree exceeds node budget");
                Node child{family.matrix(s) * node.m, node.word};
                child.word.push_back(s);
                if (classify(child.m) == MatrixClass::elliptic) {
                    return EllipticWitness{Word(family.alphabet(), child.word), child.m,
                                           child.m.trace()};
                }
                next.push_back(std::move(child));
            }
        }
        frontier = std::move(next);
    }
    return std::nullopt;
}

BridgeReport bridge_check(const CocycleFamily& family, const BernoulliVector& p,
                          std::uint64_t steps, RngStream rng) {
    if (steps < 32) throw invalid_input("bridge_check: steps must be at least 32");
    BridgeReport report;
    report.steps = steps;
    report.lyapunov = top_lyapunov(family, p, steps, 8, rng.split(1));

    // Fiber log-derivative along one forward orbit. The burn-in lands the
    // fiber on the attracting section, so the exponent comes out with the
    // contracting sign.
    RngStream r = rng.split(2);
    ProjectivePoint x(r.next_unit() * std::numbers::pi);
    for (std::uint32_t k = 0; k < 1024; ++k)
        x = projective_map(family.matrix(sample_letter(p, r)), x).image;
    const std::uint32_t batches = 32;
    const std::uint64_t per = std::max<std::uint64_t>(1, steps / batches);
    std::vector<double> batch_means;
    batch_means.reserve(batches);
    std::uint64_t done = 0;
    for (std::uint32_t bi = 0; bi < batches && done < steps; ++bi) {
        const std::uint64_t take = std::min<std::uint64_t>(per, steps - done);
        KahanSum acc;
        for (std::uint64_t k = 0; k < take; ++k) {
            const ProjectiveStep st = projective_map(family.matrix(sample_letter(p, r)), x);
            acc.add(st.log_derivative);
            x = st.image;
        }
        done += take;
        batch_means.push_back(acc.sum / static_cast<double>(take));
    }
    report.fiber_value = sample_mean(batch_means);
    report.fiber_standard_error = standard_error_of(batch_means, report.fiber_value);
    report.residual = std::abs(std::abs(report.fiber_value) - 2.0 * report.lyapunov.value);
    return report;
}

CocycleFamily isometric_pair() {
    return CocycleFamily({rotation_matrix(0.9), rotation_matrix(2.31)});
}

CocycleFamily axis_swapping_pair() {
    // The quarter turn is written out exactly: cos(pi/2) in double precision
    // is ~6e-17, and that residue breaks the invariant axis pair, turning the
    // zero-exponent family into one with a genuine exponent near 1/log(1/eps).
    return CocycleFamily({diagonal_matrix(2.0), Sl2Matrix(0.0, -1.0, 1.0, 0.0)});
}

CocycleFamily transverse_pair() {
    const Sl2Matrix stretch = diagonal_matrix(2.0);
    return CocycleFamily({stretch, conjugated(rotation_matrix(0.8), stretch)});
}

std::string LyapunovEstimate::to_json() const {
    nlohmann::json j;
    j["value"] = value;
    j["steps"] = steps;
    j["trials"] = trials;
    j["standard_error"] = standard_error;
    j["tracking_value"] = tracking_value;
    j["tracking_error"] = tracking_error;
    j["cross_check_flagged"] = cross_check_flagged;
    return j.dump();
}

std::string BridgeReport::to_json() const {
    nlohmann::json j;
    j["lyapunov"] = nlohmann::json::parse(lyapunov.to_json());
    j["fiber_value"] = fiber_value;
    j["fiber_standard_error"] = fiber_standard_error;
    j["residual"] = residual;
    j["steps"] = steps;
    return j.dump();
}

}  // namespace ergolab
