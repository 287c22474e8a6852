#include "ergolab/circle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <queue>
#include <tuple>
#include <utility>

#include <json.hpp>

namespace ergolab {

namespace {

constexpr double kPi = std::numbers::pi;

double normalize_angle(double theta) {
    double r = std::fmod(theta, kPi);
    if (r < 0.0) r += kPi;
    if (r >= kPi) r -= kPi;
    return r;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double sample_mean(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Standard error of the mean via batch means; robust to serial correlation.
double batch_std_error(const std::vector<double>& xs, std::size_t batches = 32) {
    if (xs.size() < 2 * batches) batches = std::max<std::size_t>(2, xs.size() / 2);
    if (xs.size() < 4) return 0.0;
    const std::size_t per = xs.size() / batches;
    std::vector<double> means;
    means.reserve(batches);
    for (std::size_t b = 0; b < batches; ++b) {
        double s = 0.0;
        for (std::size_t i = b * per; i < (b + 1) * per; ++i) s += xs[i];
        means.push_back(s / static_cast<double>(per));
    }
    const double m = sample_mean(means);
    double var = 0.0;
    for (double x : means) var += (x - m) * (x - m);
    var /= static_cast<double>(means.size() - 1);
    return std::sqrt(var / static_cast<double>(means.size()));
}

double quantile_of(std::vector<double> xs, double q) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

void check_word_letters(const SkewSystem& sys, const Word& w, const char* who) {
    if (w.alphabet.size != sys.alphabet().size)
        throw invalid_input(std::string(who) + ": word alphabet does not match the system");
    for (std::uint32_t s : w.symbols)
        if (s >= sys.alphabet().size)
            throw invalid_input(std::string(who) + ": symbol out of range");
}

bool is_prefix(const Word& shorter, const Word& longer) {
    if (shorter.length() > longer.length()) return false;
    return std::equal(shorter.symbols.begin(), shorter.symbols.end(), longer.symbols.begin());
}

// Per-step Lipschitz constant of theta -> log f'_A(theta): at most twice the
// squared operator norm, uniformly over the circle.
double log_deriv_lipschitz(const SkewSystem& sys) {
    double worst = 0.0;
    for (const auto& m : sys.matrices) {
        const double n = operator_norm(m);
        worst = std::max(worst, 2.0 * n * n);
    }
    return worst;
}

}  // namespace

Sl2Matrix::Sl2Matrix(double a_, double b_, double c_, double d_) {
    const double det = a_ * d_ - b_ * c_;
    if (!std::isfinite(det) || det <= 1e-12)
        throw invalid_input("Sl2Matrix: determinant must be positive and finite");
    const double s = std::sqrt(det);
    a = a_ / s;
    b = b_ / s;
    c = c_ / s;
    d = d_ / s;
}

Sl2Matrix operator*(const Sl2Matrix& lhs, const Sl2Matrix& rhs) {
    return Sl2Matrix(lhs.a * rhs.a + lhs.b * rhs.c, lhs.a * rhs.b + lhs.b * rhs.d,
                     lhs.c * rhs.a + lhs.d * rhs.c, lhs.c * rhs.b + lhs.d * rhs.d);
}

bool same_matrix(const Sl2Matrix& lhs, const Sl2Matrix& rhs, double tol) {
    return std::abs(lhs.a - rhs.a) <= tol && std::abs(lhs.b - rhs.b) <= tol &&
           std::abs(lhs.c - rhs.c) <= tol && std::abs(lhs.d - rhs.d) <= tol;
}

double operator_norm(const Sl2Matrix& m) {
    const double t = m.a * m.a + m.b * m.b + m.c * m.c + m.d * m.d;
    const double disc = std::sqrt(std::max(0.0, t * t - 4.0));
    return std::sqrt((t + disc) / 2.0);
}

Sl2Matrix rotation_matrix(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return Sl2Matrix(c, -s, s, c);
}

Sl2Matrix diagonal_matrix(double lambda) {
    if (lambda == 0.0 || !std::isfinite(lambda))
        throw invalid_input("diagonal_matrix: lambda must be nonzero and finite");
    return Sl2Matrix(lambda, 0.0, 0.0, 1.0 / lambda);
}

Sl2Matrix conjugated(const Sl2Matrix& g, const Sl2Matrix& m) { return g * m * g.inverse(); }

ProjectivePoint::ProjectivePoint(double theta) : angle(normalize_angle(theta)) {
    if (!std::isfinite(theta)) throw invalid_input("ProjectivePoint: angle must be finite");
}

double projective_distance(ProjectivePoint p, ProjectivePoint q) {
    const double d = normalize_angle(p.angle - q.angle);
    return std::min(d, kPi - d);
}

Arc::Arc(double start_, double length_) : start(normalize_angle(start_)), length(length_) {
    if (!std::isfinite(start_) || !std::isfinite(length_) || length_ < 0.0 || length_ >= kPi)
        throw invalid_input("Arc: length must lie in [0, pi)");
}

double Arc::end() const { return normalize_angle(start + length); }

ProjectivePoint Arc::midpoint() const { return ProjectivePoint(start + 0.5 * length); }

ProjectivePoint Arc::at(double t) const { return ProjectivePoint(start + t * length); }

bool Arc::contains(ProjectivePoint p) const {
    return normalize_angle(p.angle - start) <= length;
}

bool Arc::contains(const Arc& inner) const {
    const double offset = normalize_angle(inner.start - start);
    return offset + inner.length <= length;
}

Arc arc_around(ProjectivePoint center, double radius) {
    if (radius <= 0.0 || 2.0 * radius >= kPi)
        throw invalid_input("arc_around: radius must lie in (0, pi/2)");
    return Arc(center.angle - radius, 2.0 * radius);
}

SkewSystem::SkewSystem(std::vector<Sl2Matrix> ms) : matrices(std::move(ms)) {
    if (matrices.size() < 2) throw invalid_input("SkewSystem: need at least two matrices");
}

const Sl2Matrix& SkewSystem::matrix(std::uint32_t letter) const {
    if (letter >= matrices.size()) throw invalid_input("SkewSystem: letter out of range");
    return matrices[letter];
}

ProjectiveStep projective_map(const Sl2Matrix& m, ProjectivePoint v) {
    const double x = std::cos(v.angle), y = std::sin(v.angle);
    const double u = m.a * x + m.b * y;
    const double w = m.c * x + m.d * y;
    const double n2 = u * u + w * w;
    ProjectiveStep step;
    step.image = ProjectivePoint(std::atan2(w, u));
    step.log_derivative = -std::log(n2);
    return step;
}

Arc map_arc(const Sl2Matrix& m, const Arc& arc) {
    const double q1 = projective_map(m, ProjectivePoint(arc.start)).image.angle;
    const double q2 = projective_map(m, ProjectivePoint(arc.end())).image.angle;
    const double qm = projective_map(m, arc.midpoint()).image.angle;
    double len = normalize_angle(q2 - q1);
    // Endpoint rounding can wrap a collapsed arc to length almost pi (or a
    // near-full arc to almost zero). The midpoint must sit on the image arc;
    // if it does not, snap to the consistent extreme.
    const double mid_off = normalize_angle(qm - q1);
    if (mid_off > len + 1e-9) len = (mid_off < kPi / 2.0) ? 0.0 : kPi * (1.0 - 1e-15);
    return Arc(q1, len);
}

Sl2Matrix word_matrix(const SkewSystem& sys, const Word& w) {
    check_word_letters(sys, w, "word_matrix");
    Sl2Matrix acc;
    for (std::uint32_t s : w.symbols) acc = sys.matrix(s) * acc;
    return acc;
}

WordOrbit word_map(const SkewSystem& sys, const Word& w, ProjectivePoint x) {
    check_word_letters(sys, w, "word_map");
    WordOrbit orbit;
    orbit.image = x;
    orbit.prefix_log_sums.reserve(w.length());
    double sum = 0.0;
    for (std::uint32_t s : w.symbols) {
        const ProjectiveStep step = projective_map(sys.matrix(s), orbit.image);
        sum += step.log_derivative;
        orbit.prefix_log_sums.push_back(sum);
        orbit.image = step.image;
    }
    return orbit;
}

std::size_t CifsCertificate::min_word_length() const {
    std::size_t best = words.empty() ? 0 : words.front().length();
    for (const auto& w : words) best = std::min(best, w.length());
    return best;
}

std::size_t CifsCertificate::max_word_length() const {
    std::size_t best = 0;
    for (const auto& w : words) best = std::max(best, w.length());
    return best;
}

CifsOutcome verify_cifs(const SkewSystem& sys, std::vector<Word> words, Arc region,
                        double envelope, double decay_rate, double exponent,
                        double band, std::uint32_t grid) {
    if (grid < 64) throw invalid_input("verify_cifs: grid must be at least 64");
    if (!(envelope > 1.0)) throw invalid_input("verify_cifs: envelope must exceed 1");
    if (!(decay_rate < 0.0)) throw invalid_input("verify_cifs: decay rate must be negative");
    if (!(exponent < 0.0)) throw invalid_input("verify_cifs: exponent must be negative");
    if (!(band > 0.0 && band < -exponent))
        throw invalid_input("verify_cifs: band must lie in (0, |exponent|)");
    if (region.length < 1e-6) throw invalid_input("verify_cifs: region is degenerate");
    if (words.empty()) throw invalid_input("verify_cifs: empty word collection");
    for (const auto& w : words) {
        if (w.length() == 0) throw invalid_input("verify_cifs: empty word");
        check_word_letters(sys, w, "verify_cifs");
    }
    for (std::size_t i = 0; i < words.size(); ++i)
        for (std::size_t j = 0; j < words.size(); ++j)
            if (i != j && is_prefix(words[i], words[j]))
                throw invalid_input("verify_cifs: collection is not prefix-free");

    const double lambda = log_deriv_lipschitz(sys);
    const double lip_rate = lambda * envelope / (1.0 - std::exp(decay_rate));
    const double h = region.length / static_cast<double>(grid - 1);
    const double log_env = std::log(envelope);

    CifsCertificate cert;
    cert.words = words;
    cert.region = region;
    cert.envelope = envelope;
    cert.decay_rate = decay_rate;
    cert.exponent = exponent;
    cert.band = band;
    cert.grid = grid;
    cert.lipschitz_rate = lip_rate;
    cert.grid_gap = h;

    double inclusion = std::numeric_limits<double>::infinity();
    double decay = std::numeric_limits<double>::infinity();
    double restart = std::numeric_limits<double>::infinity();
    double spectrum = std::numeric_limits<double>::infinity();
    CifsFailure worst_inclusion, worst_decay, worst_restart, worst_spectrum;
    double distortion = 0.0;

    for (const auto& w : words) {
        const std::size_t len = w.length();
        const Sl2Matrix mat = word_matrix(sys, w);
        const Arc image = map_arc(mat, region);
        const double offset = normalize_angle(image.start - region.start);
        const double slack_in = region.length - offset - image.length;
        if (slack_in < inclusion) {
            inclusion = slack_in;
            worst_inclusion = {"inclusion", w, image.start, offset + image.length, region.length};
        }

        double full_min = std::numeric_limits<double>::infinity();
        double full_max = -std::numeric_limits<double>::infinity();
        for (std::uint32_t i = 0; i < grid; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(grid - 1);
            const ProjectivePoint y = region.at(t);
            const WordOrbit orbit = word_map(sys, w, y);
            for (std::size_t k = 1; k <= len; ++k) {
                const double g = orbit.prefix_log_sums[k - 1];
                const double slack = log_env + static_cast<double>(k) * decay_rate - g;
                if (slack - lip_rate * h < decay) {
                    decay = slack - lip_rate * h;
                    worst_decay = {"decay", w, y.angle, g,
                                   log_env + static_cast<double>(k) * decay_rate};
                }
            }
            const double g_full = orbit.prefix_log_sums[len - 1];
            full_min = std::min(full_min, g_full);
            full_max = std::max(full_max, g_full);
            const double slack_restart = static_cast<double>(len) * decay_rate - g_full;
            if (slack_restart - lip_rate * h < restart) {
                restart = slack_restart - lip_rate * h;
                worst_restart = {"restart", w, y.angle, g_full,
                                 static_cast<double>(len) * decay_rate};
            }
            const double avg = g_full / static_cast<double>(len);
            const double slack_spec =
                std::min(exponent + band - avg, avg - (exponent - band));
            const double corrected = slack_spec - lip_rate * h / static_cast<double>(len);
            if (corrected < spectrum) {
                spectrum = corrected;
                worst_spectrum = {"spectrum", w, y.angle, avg, exponent};
            }
        }
        distortion = std::max(distortion, full_max - full_min);
    }

    cert.inclusion_margin = inclusion;
    cert.decay_margin = decay;
    cert.restart_margin = restart;
    cert.spectrum_margin = spectrum;
    cert.distortion_gap = distortion;

    // Orbit-closeness diagnostic: image-arc diameters along one three-word
    // concatenation, letter by letter.
    {
        Arc current = region;
        double total = 0.0;
        std::size_t steps = 0;
        for (std::size_t j = 0; j < 3; ++j) {
            const Word& w = words[j % words.size()];
            for (std::uint32_t s : w.symbols) {
                current = map_arc(sys.matrix(s), current);
                total += current.length;
                ++steps;
            }
        }
        cert.orbit_gap = steps ? total / static_cast<double>(steps) : 0.0;
    }

    CifsOutcome out;
    if (inclusion > 1e-12 && decay > 0.0 && restart > 0.0 && spectrum > 0.0) {
        cert.verified = true;
        out.certificate = std::move(cert);
    } else if (inclusion <= 1e-12) {
        out.failure = worst_inclusion;
    } else if (decay <= 0.0) {
        out.failure = worst_decay;
    } else if (restart <= 0.0) {
        out.failure = worst_restart;
    } else {
        out.failure = worst_spectrum;
    }
    return out;
}

std::uint32_t recenter_horizon(const CifsCertificate& cert, double gap) {
    if (!(gap > 0.0)) throw invalid_input("recenter_horizon: gap must be positive");
    const double denom =
        gap * (1.0 - std::exp(cert.decay_rate)) * static_cast<double>(cert.min_word_length());
    const double m = cert.envelope / denom;
    return static_cast<std::uint32_t>(std::max(1.0, std::ceil(m)));
}

namespace {

// Orientation-preserving image of the whole region under a word, with the
// exponent data needed by the search filters, at both region endpoints.
struct EndpointTrack {
    double a, b;    // images of region.start and region.end
    double ga, gb;  // accumulated log-derivative sums
};

EndpointTrack track_word(const SkewSystem& sys, const Word& w, const Arc& region) {
    const WordOrbit oa = word_map(sys, w, ProjectivePoint(region.start));
    const WordOrbit ob = word_map(sys, w, ProjectivePoint(region.end()));
    EndpointTrack t;
    t.a = oa.image.angle;
    t.b = ob.image.angle;
    t.ga = w.length() ? oa.prefix_log_sums.back() : 0.0;
    t.gb = w.length() ? ob.prefix_log_sums.back() : 0.0;
    return t;
}

}  // namespace

CifsSearchReport search_cifs(const SkewSystem& sys, double target_exponent,
                             double band, double entropy_tolerance,
                             double wasserstein_tolerance, bool equal_lengths,
                             std::uint32_t depth) {
    (void)entropy_tolerance;  // advisory: recorded by the caller, never a gate
    if (!(target_exponent < 0.0)) throw invalid_input("search_cifs: target must be negative");
    if (!(band > 0.0 && band < -target_exponent))
        throw invalid_input("search_cifs: band must lie in (0, |target|)");
    if (depth == 0) throw invalid_input("search_cifs: depth must be positive");
    const std::uint32_t n = sys.alphabet().size;
    std::uint64_t scanned = 0;

    // Contracting anchor: the hyperbolic word whose fixed-point exponent is
    // closest to the target. Projective dynamics attracts to the expanding
    // eigendirection, where the derivative is 1/lambda_top^2.
    struct Anchor {
        double angle = 0.0;
        double per_symbol = 0.0;
        bool found = false;
    } anchor;
    {
        const std::uint32_t seed_depth = std::min<std::uint32_t>(depth, 8);
        std::vector<std::uint32_t> cur;
        std::vector<Sl2Matrix> stack{Sl2Matrix()};
        auto consider = [&](const Sl2Matrix& m, std::size_t len) {
            const double tr = std::abs(m.trace());
            if (tr <= 2.0 + 1e-9) return;
            const double lam = (tr + std::sqrt(tr * tr - 4.0)) / 2.0;
            // Eigendirection of the larger-modulus eigenvalue; pick the
            // numerically healthier of the two row formulations.
            const double sign = m.trace() >= 0.0 ? 1.0 : -1.0;
            const double ev = sign * lam;
            double vx = m.b, vy = ev - m.a;
            const double wx = ev - m.d, wy = m.c;
            if (wx * wx + wy * wy > vx * vx + vy * vy) {
                vx = wx;
                vy = wy;
            }
            const double per = -2.0 * std::log(lam) / static_cast<double>(len);
            if (!anchor.found ||
                std::abs(per - target_exponent) < std::abs(anchor.per_symbol - target_exponent)) {
                anchor.found = true;
                anchor.angle = normalize_angle(std::atan2(vy, vx));
                anchor.per_symbol = per;
            }
        };
        const std::function<void()> recurse = [&]() {
            if (cur.size() == seed_depth) return;
            for (std::uint32_t s = 0; s < n; ++s) {
                cur.push_back(s);
                stack.push_back(sys.matrix(s) * stack.back());
                ++scanned;
                consider(stack.back(), cur.size());
                recurse();
                stack.pop_back();
                cur.pop_back();
            }
        };
        recurse();
    }
    if (!anchor.found)
        throw search_exhausted("search_cifs: no contracting word within the depth budget");

    const double alpha0 = target_exponent + band;
    const double envelope = 3.0;
    const std::uint32_t grid = 128;

    for (double radius : {0.2, 0.15, 0.1, 0.06, 0.03}) {
        const Arc region = arc_around(ProjectivePoint(anchor.angle), radius);
        // Survivors per length, after cheap endpoint filters.
        std::vector<std::vector<Word>> survivors(depth + 1);
        std::vector<std::uint32_t> cur;
        std::vector<Sl2Matrix> stack{Sl2Matrix()};
        const std::function<void()> recurse = [&]() {
            if (cur.size() == depth) return;
            for (std::uint32_t s = 0; s < n; ++s) {
                cur.push_back(s);
                stack.push_back(sys.matrix(s) * stack.back());
                ++scanned;
                const std::size_t len = cur.size();
                const Arc image = map_arc(stack.back(), region);
                const double offset = normalize_angle(image.start - region.start);
                if (offset + image.length <= region.length - 0.05 * region.length) {
                    const Word w{sys.alphabet(), cur};
                    bool ok = true;
                    for (double t : {0.0, 0.5, 1.0}) {
                        const WordOrbit orbit = word_map(sys, w, region.at(t));
                        for (std::size_t k = 1; k <= len && ok; ++k) {
                            const double slack = std::log(envelope) +
                                                 static_cast<double>(k) * alpha0 -
                                                 orbit.prefix_log_sums[k - 1];
                            if (slack < 0.02) ok = false;
                        }
                        const double avg =
                            orbit.prefix_log_sums[len - 1] / static_cast<double>(len);
                        if (std::abs(avg - target_exponent) > 0.9 * band) ok = false;
                        if (!ok) break;
                    }
                    if (ok && survivors[len].size() < 4096) survivors[len].push_back(w);
                }
                if (scanned < (1u << 21)) recurse();
                stack.pop_back();
                cur.pop_back();
            }
        };
        recurse();

        // Candidate sets ranked by log(count)/length; mixed mode keeps a
        // prefix-free union across lengths instead.
        std::vector<std::pair<double, std::vector<Word>>> ranked;
        if (equal_lengths) {
            for (std::size_t len = 1; len <= depth; ++len) {
                if (survivors[len].empty()) continue;
                const double score = std::log(static_cast<double>(survivors[len].size())) /
                                     static_cast<double>(len);
                ranked.emplace_back(score, survivors[len]);
            }
        } else {
            std::vector<Word> pool;
            double total_len = 0.0;
            for (std::size_t len = 1; len <= depth; ++len)
                for (const auto& w : survivors[len]) {
                    bool clash = false;
                    for (const auto& have : pool)
                        if (is_prefix(have, w) || is_prefix(w, have)) {
                            clash = true;
                            break;
                        }
                    if (!clash) {
                        pool.push_back(w);
                        total_len += static_cast<double>(w.length());
                    }
                }
            if (!pool.empty())
                ranked.emplace_back(
                    std::log(static_cast<double>(pool.size())) * pool.size() / total_len, pool);
        }
        std::sort(ranked.begin(), ranked.end(),
                  [](const auto& x, const auto& y) { return x.first > y.first; });

        for (std::size_t attempt = 0; attempt < std::min<std::size_t>(ranked.size(), 3); ++attempt) {
            std::vector<Word> cand = ranked[attempt].second;
            for (int retry = 0; retry < 32 && !cand.empty(); ++retry) {
                CifsOutcome outcome = verify_cifs(sys, cand, region, envelope, alpha0,
                                                  target_exponent, band, grid);
                if (outcome.ok()) {
                    CifsSearchReport report;
                    report.certificate = *outcome.certificate;
                    double total_len = 0.0;
                    for (const auto& w : cand) total_len += static_cast<double>(w.length());
                    report.entropy_proxy =
                        std::log(static_cast<double>(cand.size())) * cand.size() / total_len;
                    report.seed_exponent = anchor.per_symbol;
                    report.words_scanned = scanned;

                    // Proximity evidence: family-driven orbit vs letter-iid
                    // orbit, both short and deterministic.
                    RngStream orbit_rng(20260818, 11);
                    const std::size_t probe = 4096;
                    auto make_orbit = [&](bool family) {
                        OrbitSummary o;
                        o.level = 0;
                        std::vector<std::uint32_t> syms;
                        syms.reserve(probe);
                        while (syms.size() < probe) {
                            if (family) {
                                const Word& w =
                                    cand[orbit_rng.next_below(cand.size())];
                                syms.insert(syms.end(), w.symbols.begin(), w.symbols.end());
                            } else {
                                syms.push_back(static_cast<std::uint32_t>(
                                    orbit_rng.next_below(sys.alphabet().size)));
                            }
                        }
                        syms.resize(probe);
                        o.symbols = Word{sys.alphabet(), syms};
                        ProjectivePoint x = region.midpoint();
                        o.angles.reserve(probe);
                        o.log_derivs.reserve(probe);
                        for (std::uint32_t s : syms) {
                            const ProjectiveStep step = projective_map(sys.matrix(s), x);
                            o.angles.push_back(x.angle);
                            o.log_derivs.push_back(step.log_derivative);
                            x = step.image;
                        }
                        o.exponent = sample_mean(o.log_derivs);
                        o.exponent_se = batch_std_error(o.log_derivs);
                        return o;
                    };
                    const OrbitSummary fam = make_orbit(true);
                    const OrbitSummary iid = make_orbit(false);
                    RngStream dict_rng(20260818, 13);
                    report.wasserstein_to_seed =
                        wasserstein_estimate(fam, iid, 16, dict_rng).lower_bound;
                    (void)wasserstein_tolerance;  // advisory, reported upstream
                    return report;
                }
                // Drop the witness word and retry with the rest.
                const Word bad = outcome.failure->witness_word;
                cand.erase(std::remove(cand.begin(), cand.end(), bad), cand.end());
            }
        }
    }
    throw search_exhausted("search_cifs: no collection verified within the budget");
}

tail_not_found::tail_not_found(const std::string& what, Word best, double exponent, bool contained)
    : std::runtime_error(what),
      best_candidate(std::move(best)),
      best_exponent(exponent),
      best_contained(contained) {}

Word search_tail(const SkewSystem& sys, const CifsCertificate& cert, std::uint32_t m,
                 const Word& v, const TailSearchParams& params) {
    if (!cert.verified) throw invalid_input("search_tail: certificate is not verified");
    check_word_letters(sys, v, "search_tail");
    if (params.budget_constant < 0.0)
        throw invalid_input("search_tail: budget constant must be nonnegative");
    const std::uint32_t m_min = params.min_repeats
                                    ? params.min_repeats
                                    : recenter_horizon(cert, cert.band / 2.0);
    if (m < m_min) throw invalid_input("search_tail: repeat count below the recenter horizon");

    // v must parse as exactly m certificate words; prefix-freeness makes the
    // greedy parse unambiguous.
    {
        std::size_t pos = 0, count = 0;
        while (pos < v.length()) {
            bool matched = false;
            for (const auto& w : cert.words) {
                if (pos + w.length() > v.length()) continue;
                if (std::equal(w.symbols.begin(), w.symbols.end(), v.symbols.begin() + pos)) {
                    pos += w.length();
                    ++count;
                    matched = true;
                    break;
                }
            }
            if (!matched) throw invalid_input("search_tail: v is not a concatenation of certificate words");
        }
        if (count != m) throw invalid_input("search_tail: v does not contain exactly m words");
    }

    const double target = params.target_exponent != 0.0 ? params.target_exponent
                                                        : cert.exponent / 2.0;
    const double tband = params.target_band != 0.0 ? params.target_band : cert.band / 2.0;
    const double rate = (cert.exponent + cert.band) / 2.0;  // halved envelope rate
    const Arc region = cert.region;
    const double log_env = std::log(cert.envelope);
    const std::uint64_t budget = std::min<std::uint64_t>(
        params.max_depth,
        static_cast<std::uint64_t>(params.budget_constant * std::abs(cert.exponent) *
                                   static_cast<double>(v.length())));

    auto try_accept = [&](const Word& tail) -> bool {
        const Word full = v.concat(tail);
        const CifsOutcome outcome = verify_cifs(sys, {full}, region, cert.envelope, rate,
                                                target, tband, params.grid);
        return outcome.ok();
    };

    const Word empty{sys.alphabet(), {}};
    if (try_accept(empty)) return empty;

    struct State {
        double a, b, ga, gb;
        double env_slack;
        std::int32_t parent;
        std::uint32_t letter;
    };
    std::vector<State> arena;
    std::vector<std::size_t> frontier;
    {
        const EndpointTrack seed = track_word(sys, v, region);
        double slack = std::numeric_limits<double>::infinity();
        const WordOrbit oa = word_map(sys, v, ProjectivePoint(region.start));
        const WordOrbit ob = word_map(sys, v, ProjectivePoint(region.end()));
        for (std::size_t k = 1; k <= v.length(); ++k) {
            const double line = log_env + static_cast<double>(k) * rate;
            slack = std::min(slack, line - oa.prefix_log_sums[k - 1]);
            slack = std::min(slack, line - ob.prefix_log_sums[k - 1]);
        }
        arena.push_back({seed.a, seed.b, seed.ga, seed.gb, slack, -1, 0});
        frontier.push_back(0);
    }

    double gain_max = 0.0;
    for (const auto& mtx : sys.matrices)
        gain_max = std::max(gain_max, 2.0 * std::log(operator_norm(mtx)));

    auto reconstruct = [&](std::size_t idx) {
        std::vector<std::uint32_t> rev;
        std::int32_t at = static_cast<std::int32_t>(idx);
        while (at > 0) {
            rev.push_back(arena[static_cast<std::size_t>(at)].letter);
            at = arena[static_cast<std::size_t>(at)].parent;
        }
        std::reverse(rev.begin(), rev.end());
        return Word{sys.alphabet(), rev};
    };

    double best_score = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    bool best_contained = false;
    std::size_t verify_attempts = 0;

    for (std::uint64_t depth = 1; depth <= budget && !frontier.empty(); ++depth) {
        std::vector<std::size_t> next;
        std::vector<double> scores;
        const double n_tot = static_cast<double>(v.length() + depth);
        for (std::size_t idx : frontier) {
            const State base = arena[idx];
            for (std::uint32_t s = 0; s < sys.alphabet().size; ++s) {
                const ProjectiveStep pa = projective_map(sys.matrix(s), ProjectivePoint(base.a));
                const ProjectiveStep pb = projective_map(sys.matrix(s), ProjectivePoint(base.b));
                State st;
                st.a = pa.image.angle;
                st.b = pb.image.angle;
                st.ga = base.ga + pa.log_derivative;
                st.gb = base.gb + pb.log_derivative;
                const double k = static_cast<double>(v.length()) + static_cast<double>(depth);
                const double line = log_env + k * rate;
                st.env_slack = std::min(base.env_slack,
                                        std::min(line - st.ga, line - st.gb));
                st.parent = static_cast<std::int32_t>(idx);
                st.letter = s;
                if (st.env_slack <= 0.0) continue;
                const double avg = 0.5 * (st.ga + st.gb) / n_tot;
                // Even climbing at the best possible rate cannot reach the
                // band: prune.
                const double steps_left = static_cast<double>(budget - depth);
                const double optimistic =
                    (0.5 * (st.ga + st.gb) + gain_max * steps_left) /
                    static_cast<double>(v.length() + budget);
                if (optimistic < target - tband) continue;

                const double len = normalize_angle(st.b - st.a);
                const double offset = normalize_angle(st.a - region.start);
                const bool contained = offset + len <= region.length - 0.02 * region.length;
                // Containment never enters the beam score: states must be free
                // to leave the region while re-centering and return later.
                const double score = std::abs(avg - target);

                arena.push_back(st);
                const std::size_t new_idx = arena.size() - 1;
                next.push_back(new_idx);
                scores.push_back(score);
                const double report_score = contained ? score : score + 0.25;
                if (report_score < best_score) {
                    best_score = report_score;
                    best_idx = new_idx;
                    best_contained = contained;
                }

                if (contained && std::abs(avg - target) <= 0.75 * tband &&
                    std::abs(st.ga / n_tot - target) <= 0.9 * tband &&
                    std::abs(st.gb / n_tot - target) <= 0.9 * tband &&
                    verify_attempts < 256) {
                    ++verify_attempts;
                    const Word tail = reconstruct(new_idx);
                    if (try_accept(tail)) return tail;
                }
            }
        }
        // Beam prune: best score first, one state per (angle, average)
        // bucket so near-duplicate orbits cannot crowd out distinct ones.
        if (next.size() > params.beam_width) {
            std::vector<std::size_t> order(next.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(),
                      [&](std::size_t x, std::size_t y) { return scores[x] < scores[y]; });
            std::map<std::pair<long, long>, bool> seen;
            std::vector<std::size_t> kept;
            kept.reserve(params.beam_width);
            for (std::size_t i : order) {
                const State& st = arena[next[i]];
                const std::pair<long, long> key{
                    static_cast<long>(std::floor(st.a / 0.005)),
                    static_cast<long>(std::floor((0.5 * (st.ga + st.gb) / n_tot) / 0.005))};
                if (seen.count(key)) continue;
                seen[key] = true;
                kept.push_back(next[i]);
                if (kept.size() == params.beam_width) break;
            }
            // Under-filled beams take the remaining best states regardless.
            for (std::size_t i : order) {
                if (kept.size() == params.beam_width) break;
                if (std::find(kept.begin(), kept.end(), next[i]) == kept.end())
                    kept.push_back(next[i]);
            }
            next = std::move(kept);
        }
        frontier = std::move(next);
    }

    Word best = arena.empty() ? empty : reconstruct(best_idx);
    const double best_avg = arena.empty()
                                ? 0.0
                                : 0.5 * (arena[best_idx].ga + arena[best_idx].gb) /
                                      static_cast<double>(v.length() + best.length());
    throw tail_not_found("search_tail: no tail verified within the budget", std::move(best),
                         best_avg, best_contained);
}

namespace {

// Grid cover bookkeeping for the accessibility evidence. Cells partition
// [0, pi) uniformly; arcs mark every cell they touch.
struct CircleCover {
    std::uint32_t resolution;
    std::vector<bool> cells;

    explicit CircleCover(std::uint32_t r) : resolution(r), cells(r, false) {}

    void mark(const Arc& arc) {
        const double cell = kPi / static_cast<double>(resolution);
        const std::uint32_t first =
            static_cast<std::uint32_t>(std::floor(arc.start / cell)) % resolution;
        const std::uint32_t span =
            static_cast<std::uint32_t>(std::floor(arc.length / cell)) + 2;
        for (std::uint32_t i = 0; i <= span && i < resolution + 2; ++i)
            cells[(first + i) % resolution] = true;
    }

    bool full() const {
        for (bool c : cells)
            if (!c) return false;
        return true;
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (bool c : cells) n += c;
        return n;
    }
};

// Expands the cover under all fiber maps until a fixpoint; evidence for
// forward accessibility when the cover fills.
bool orbit_covers(const std::vector<Sl2Matrix>& mats, const Arc& start,
                  std::uint32_t resolution) {
    CircleCover cover(resolution);
    cover.mark(start);
    const double cell = kPi / static_cast<double>(resolution);
    std::size_t previous = 0;
    for (std::uint32_t pass = 0; pass < 4 * resolution; ++pass) {
        previous = cover.count();
        std::vector<bool> snapshot = cover.cells;
        for (std::uint32_t i = 0; i < resolution; ++i) {
            if (!snapshot[i]) continue;
            const Arc piece(static_cast<double>(i) * cell, cell * (1.0 - 1e-12));
            for (const auto& m : mats) cover.mark(map_arc(m, piece));
        }
        if (cover.full()) return true;
        if (cover.count() == previous) break;
    }
    return cover.full();
}

}  // namespace

BlendingReport check_blending(const SkewSystem& sys, Arc region, std::uint32_t resolution) {
    if (resolution < 64) throw invalid_input("check_blending: resolution must be at least 64");
    BlendingReport report;
    report.region = region;
    report.resolution = resolution;

    std::vector<Sl2Matrix> forward = sys.matrices;
    std::vector<Sl2Matrix> backward;
    backward.reserve(forward.size());
    for (const auto& m : forward) backward.push_back(m.inverse());

    const Arc interior(region.start + 0.05 * region.length, 0.9 * region.length);
    report.forward_accessible = orbit_covers(forward, interior, resolution);
    report.backward_accessible = orbit_covers(backward, interior, resolution);

    const double cell = kPi / static_cast<double>(resolution);
    const Arc probe(0.1 + 0.5 * cell, cell);
    report.transitive_evidence =
        orbit_covers(forward, probe, resolution) && orbit_covers(backward, probe, resolution);

    // Expanding-cover evidence: for dyadic test intervals crossing the
    // region, search a word whose image covers the inflated region and whose
    // endpoint expansion stays positive per step. Constants are fitted from
    // the successful searches.
    const double inflate = 0.1 * region.length;
    const Arc goal(region.start - inflate, std::min(kPi * 0.999, region.length + 2.0 * inflate));
    auto run_direction = [&](const std::vector<Sl2Matrix>& mats, bool store_witnesses) {
        struct Fit {
            bool all_found = true;
            double k2 = 0.0, k3 = 0.0, k5 = std::numeric_limits<double>::infinity();
            std::uint32_t tested = 0;
        } fit;
        SkewSystem dir_sys(mats);
        double min_depth = std::numeric_limits<double>::infinity();
        std::vector<std::pair<double, double>> depth_fits;  // (|log len|, depth)
        for (std::uint32_t j = 0; j <= 4; ++j) {
            for (double frac : {0.1, 0.5, 0.9}) {
                const double len = region.length * std::pow(2.0, -static_cast<double>(j));
                const Arc test(region.start + frac * region.length - 0.5 * len, len);
                ++fit.tested;
                // Best-first search on (arc, expansion sums). The arc moves
                // through map_arc so collapsed arcs can never be misread as
                // near-full ones; visited states are deduplicated on a
                // quantized (start, length, sum sign) grid so attractor
                // orbits cannot flood the queue with near-copies.
                struct Node {
                    Arc arc;
                    double ga, gb;
                    std::int32_t parent;
                    std::uint32_t letter;
                    std::uint32_t depth;
                };
                std::vector<Node> arena;
                arena.push_back({test, 0.0, 0.0, -1, 0, 0});
                auto score_of = [&](const Node& nd) {
                    return (goal.length - nd.arc.length) +
                           0.5 * projective_distance(nd.arc.midpoint(), goal.midpoint()) +
                           0.01 * static_cast<double>(nd.depth);
                };
                using Entry = std::pair<double, std::size_t>;
                std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
                // Sum sign is part of the key: a bucket first reached with a
                // negative expansion sum must stay reachable positively.
                std::map<std::tuple<long, long, bool>, bool> visited;
                auto state_key = [](const Node& nd) {
                    return std::tuple<long, long, bool>{
                        static_cast<long>(std::floor(nd.arc.start / 0.004)),
                        static_cast<long>(std::floor(nd.arc.length / 0.004)),
                        std::min(nd.ga, nd.gb) > 0.0};
                };
                queue.push({score_of(arena[0]), 0});
                visited[state_key(arena[0])] = true;
                bool found = false;
                std::uint32_t found_depth = 0;
                double found_exp = 0.0;
                std::size_t expanded = 0;
                while (!queue.empty() && expanded < 20000 && !found) {
                    const auto [sc, idx] = queue.top();
                    queue.pop();
                    ++expanded;
                    const Node base = arena[idx];
                    if (base.depth >= 60) continue;
                    for (std::uint32_t s = 0; s < dir_sys.alphabet().size; ++s) {
                        const ProjectiveStep pa = projective_map(
                            dir_sys.matrix(s), ProjectivePoint(base.arc.start));
                        const ProjectiveStep pb = projective_map(
                            dir_sys.matrix(s), ProjectivePoint(base.arc.end()));
                        Node nd{map_arc(dir_sys.matrix(s), base.arc),
                                base.ga + pa.log_derivative, base.gb + pb.log_derivative,
                                static_cast<std::int32_t>(idx), s, base.depth + 1};
                        const double offset = normalize_angle(goal.start - nd.arc.start);
                        arena.push_back(nd);
                        const std::size_t nidx = arena.size() - 1;
                        const bool covers = offset + goal.length <= nd.arc.length;
                        // A witness must cover the inflated goal AND expand
                        // the test interval uniformly at both endpoints.
                        if (covers && std::min(nd.ga, nd.gb) > 0.0) {
                            found = true;
                            found_depth = nd.depth;
                            found_exp = std::min(nd.ga, nd.gb);
                            if (store_witnesses && report.cover_witnesses.size() < 4) {
                                std::vector<std::uint32_t> rev;
                                std::int32_t at = static_cast<std::int32_t>(nidx);
                                while (at > 0) {
                                    rev.push_back(arena[static_cast<std::size_t>(at)].letter);
                                    at = arena[static_cast<std::size_t>(at)].parent;
                                }
                                std::reverse(rev.begin(), rev.end());
                                report.cover_witnesses.push_back(Word{sys.alphabet(), rev});
                            }
                            break;
                        }
                        // A full cover with a failed gate is parked: letting it
                        // grow floods the queue with near-circle arcs whose
                        // scores dominate every alternative. Positive-sum
                        // witnesses run through rotation recentering ladders
                        // that never pass through such states.
                        if (covers) continue;
                        const auto key = state_key(nd);
                        if (visited.count(key)) continue;
                        visited[key] = true;
                        queue.push({score_of(nd), nidx});
                    }
                }
                if (!found) {
                    fit.all_found = false;
                } else {
                    min_depth = std::min(min_depth, static_cast<double>(found_depth));
                    depth_fits.emplace_back(std::abs(std::log(len)),
                                            static_cast<double>(found_depth));
                    fit.k5 = std::min(fit.k5, found_exp / static_cast<double>(found_depth));
                }
            }
        }
        if (std::isfinite(min_depth)) {
            fit.k3 = min_depth;
            for (const auto& [logl, depth] : depth_fits)
                fit.k2 = std::max(fit.k2, (depth - fit.k3) / std::max(1.0, logl));
        }
        return fit;
    };

    const auto fwd = run_direction(forward, true);
    const auto bwd = run_direction(backward, false);
    report.intervals_tested = fwd.tested + bwd.tested;
    report.expanding_cover_forward = fwd.all_found && fwd.k5 > 0.0;
    report.expanding_cover_backward = bwd.all_found && bwd.k5 > 0.0;
    report.k1 = region.length * 1.0001;
    report.k2 = std::max(fwd.k2, bwd.k2);
    report.k3 = std::max(fwd.k3, bwd.k3);
    report.k4 = inflate;
    report.k5 = std::min(fwd.k5, bwd.k5);
    if (!std::isfinite(report.k5)) report.k5 = 0.0;
    return report;
}

ProjectivePoint attractor_point(const SkewSystem& sys, const CifsCertificate& cert,
                                const std::vector<std::uint32_t>& past, double tol,
                                double seed_angle) {
    if (!cert.verified) throw invalid_input("attractor_point: certificate is not verified");
    if (past.empty()) throw invalid_input("attractor_point: past must be nonempty");
    if (!(tol > 0.0)) throw invalid_input("attractor_point: tol must be positive");
    for (std::uint32_t idx : past)
        if (idx >= cert.words.size()) throw invalid_input("attractor_point: word index out of range");

    // Contraction gives diam <= envelope * exp(k * min_len * decay_rate) * |J|
    // after k words; pick the smallest depth that lands below tol.
    const double per_word =
        static_cast<double>(cert.min_word_length()) * cert.decay_rate;
    const double need = std::log(tol / (cert.envelope * cert.region.length));
    const std::size_t depth =
        static_cast<std::size_t>(std::max(1.0, std::ceil(need / per_word))) + 1;

    ProjectivePoint x =
        seed_angle < 0.0 ? cert.region.midpoint() : ProjectivePoint(seed_angle);
    for (std::size_t j = depth; j-- > 0;) {
        const Word& w = cert.words[past[j % past.size()]];
        x = word_map(sys, w, x).image;
    }
    return x;
}

double fiber_exponent(const SkewSystem& sys, const Word& symbols, ProjectivePoint x0) {
    check_word_letters(sys, symbols, "fiber_exponent");
    if (symbols.length() == 0) throw invalid_input("fiber_exponent: need at least one symbol");
    ProjectivePoint x = x0;
    double sum = 0.0;
    for (std::uint32_t s : symbols.symbols) {
        const ProjectiveStep step = projective_map(sys.matrix(s), x);
        sum += step.log_derivative;
        x = step.image;
    }
    return sum / static_cast<double>(symbols.length());
}

GeometricCascade::GeometricCascade(SkewSystem sys, CifsCertificate base, TowerConfig cfg)
    : sys_(std::move(sys)), cfg_(std::move(cfg)) {
    if (!base.verified) throw invalid_input("GeometricCascade: base certificate not verified");
    if (base.min_word_length() != base.max_word_length())
        throw invalid_input("GeometricCascade: base words must share one length");
    if (cfg_.repeats.empty()) throw invalid_input("GeometricCascade: need at least one level");
    for (std::uint32_t m : cfg_.repeats)
        if (m < 2) throw invalid_input("GeometricCascade: repeats must be at least 2");
    if (!(cfg_.budget_constant > 0.0))
        throw invalid_input("GeometricCascade: budget constant must be positive");

    certs_.push_back(base);
    level_words_.push_back(base.words);
    digit_index_.emplace_back();
    std::vector<std::vector<Word>> level_digits;
    level_digits.emplace_back();
    const Alphabet base_alpha{static_cast<std::uint32_t>(base.words.size())};
    for (std::size_t i = 0; i < base.words.size(); ++i) {
        const Word d{base_alpha, {static_cast<std::uint32_t>(i)}};
        level_digits[0].push_back(d);
        digit_index_[0][d.symbols] = i;
    }

    auto tails = std::make_shared<std::map<std::pair<std::uint32_t, std::vector<std::uint32_t>>, Word>>();

    for (std::uint32_t n = 1; n <= cfg_.repeats.size(); ++n) {
        const std::uint32_t m = cfg_.repeats[n - 1];
        const std::size_t prev = level_words_[n - 1].size();
        double count_check = 1.0;
        for (std::uint32_t j = 0; j < m; ++j) count_check *= static_cast<double>(prev);
        if (count_check > static_cast<double>(cfg_.letter_cap))
            throw enumeration_cap_exceeded("GeometricCascade: level alphabet exceeds the cap");
        const std::size_t count = static_cast<std::size_t>(count_check);

        TailSearchParams params = cfg_.tail_params;
        params.budget_constant = cfg_.budget_constant;

        level_words_.emplace_back();
        level_digits.emplace_back();
        digit_index_.emplace_back();
        const CifsCertificate& prev_cert = certs_[n - 1];
        for (std::size_t letter = 0; letter < count; ++letter) {
            // Mixed-radix digits, most significant child first.
            std::vector<std::size_t> children(m);
            std::size_t rem = letter;
            for (std::uint32_t j = m; j-- > 0;) {
                children[j] = rem % prev;
                rem /= prev;
            }
            Word v{sys_.alphabet(), {}};
            Word digits{base_alpha, {}};
            for (std::uint32_t j = 0; j < m; ++j) {
                v = v.concat(level_words_[n - 1][children[j]]);
                digits = digits.concat(level_digits[n - 1][children[j]]);
            }
            const Word tail = search_tail(sys_, prev_cert, m, v, params);
            (*tails)[{n, digits.symbols}] = tail;
            level_words_[n].push_back(v.concat(tail));
            level_digits[n].push_back(digits);
            digit_index_[n][digits.symbols] = letter;
        }

        const double alpha = prev_cert.exponent / 2.0;
        const double band = prev_cert.band / 2.0;
        const double rate = (prev_cert.exponent + prev_cert.band) / 2.0;
        CifsOutcome outcome = verify_cifs(sys_, level_words_[n], base.region,
                                          prev_cert.envelope, rate, alpha, band, cfg_.grid);
        if (!outcome.ok())
            throw certification_failed("GeometricCascade: level " + std::to_string(n) +
                                       " failed verification: " + outcome.failure->to_json());
        certs_.push_back(*outcome.certificate);
    }

    // The cascade budget floor(K 2^-n |v|) must equal the search budget
    // floor(L1 |exponent| 2^-(n-1) |v|); hence K = 2 L1 |exponent|.
    CascadeConfig cascade_cfg{SubstitutionMap(base_alpha, sys_.alphabet(), base.words),
                              cfg_.repeats,
                              2.0 * cfg_.budget_constant * std::abs(base.exponent),
                              TailMode::custom,
                              0};
    TailFn hook = [tails](std::uint32_t level, const Word& digits, std::uint64_t budget,
                          Alphabet target) -> Word {
        (void)budget;
        (void)target;
        const auto it = tails->find({level, digits.symbols});
        if (it == tails->end())
            throw invalid_input("GeometricCascade: tail requested for an unknown letter");
        return it->second;
    };
    cascade_ = std::make_unique<Cascade>(std::move(cascade_cfg), std::move(hook));
}

const CifsCertificate& GeometricCascade::certificate(std::uint32_t level) const {
    if (level >= certs_.size()) throw invalid_input("GeometricCascade: level out of range");
    return certs_[level];
}

const Word& GeometricCascade::level_word(std::uint32_t level, const Word& digits) const {
    if (level >= level_words_.size()) throw invalid_input("GeometricCascade: level out of range");
    const auto it = digit_index_[level].find(digits.symbols);
    if (it == digit_index_[level].end())
        throw invalid_input("GeometricCascade: unknown digit word");
    return level_words_[level][it->second];
}

std::size_t GeometricCascade::level_size(std::uint32_t level) const {
    if (level >= level_words_.size()) throw invalid_input("GeometricCascade: level out of range");
    return level_words_[level].size();
}

OrbitSummary sample_mu_n(const SkewSystem& sys, const GeometricCascade& tower,
                         const BernoulliVector& p, std::uint32_t level,
                         std::size_t steps, RngStream& rng) {
    if (sys.matrices.size() != tower.system().matrices.size())
        throw invalid_input("sample_mu_n: system does not match the tower");
    for (std::size_t i = 0; i < sys.matrices.size(); ++i)
        if (!same_matrix(sys.matrices[i], tower.system().matrices[i]))
            throw invalid_input("sample_mu_n: system does not match the tower");
    if (steps == 0) throw invalid_input("sample_mu_n: need at least one step");
    const CifsCertificate& cert = tower.certificate(level);

    const std::uint64_t burn = 10 * static_cast<std::uint64_t>(
                                        std::ceil(std::log(1e9) / -cert.decay_rate));
    const std::size_t total = static_cast<std::size_t>(burn) + steps;
    const Word stream = sample_nu_n(tower.cascade(), p, level, total, rng);

    OrbitSummary orbit;
    orbit.level = level;
    orbit.burn_in = burn;
    orbit.angles.reserve(steps);
    orbit.log_derivs.reserve(steps);
    std::vector<std::uint32_t> kept;
    kept.reserve(steps);
    ProjectivePoint x = cert.region.midpoint();
    for (std::size_t t = 0; t < total; ++t) {
        const std::uint32_t s = stream.symbols[t];
        const ProjectiveStep step = projective_map(sys.matrix(s), x);
        if (t >= burn) {
            kept.push_back(s);
            orbit.angles.push_back(x.angle);
            orbit.log_derivs.push_back(step.log_derivative);
        }
        x = step.image;
    }
    orbit.symbols = Word{sys.alphabet(), std::move(kept)};
    orbit.exponent = sample_mean(orbit.log_derivs);
    orbit.exponent_se = batch_std_error(orbit.log_derivs);
    return orbit;
}

WassersteinEstimate wasserstein_estimate(const OrbitSummary& a, const OrbitSummary& b,
                                         std::uint32_t dictionary_size, RngStream& rng) {
    if (dictionary_size == 0)
        throw invalid_input("wasserstein_estimate: dictionary must be nonempty");
    constexpr std::size_t kContext = 8;
    const std::size_t usable_a = a.angles.size() > 2 * kContext ? a.angles.size() - 2 * kContext : 0;
    const std::size_t usable_b = b.angles.size() > 2 * kContext ? b.angles.size() - 2 * kContext : 0;
    if (usable_a < 16 || usable_b < 16)
        throw insufficient_data("wasserstein_estimate: orbits too short");

    // Window-truncated symbol distance 2^-(first mismatch), floor 2^-(ctx+1):
    // a metric dominated by the sequence distance, so anchored distances stay
    // 1-Lipschitz.
    auto symbol_distance = [&](const OrbitSummary& o, std::size_t t,
                               const std::vector<std::uint32_t>& ctx_syms, double ctx_angle,
                               bool with_fiber) {
        double d = std::pow(2.0, -static_cast<double>(kContext + 1));
        for (std::size_t off = 0; off <= kContext; ++off) {
            bool mismatch = false;
            if (o.symbols.symbols[t + off] != ctx_syms[kContext + off]) mismatch = true;
            if (off > 0 && o.symbols.symbols[t - off] != ctx_syms[kContext - off])
                mismatch = true;
            if (mismatch) {
                d = std::pow(2.0, -static_cast<double>(off));
                break;
            }
        }
        if (with_fiber)
            d += projective_distance(ProjectivePoint(o.angles[t]), ProjectivePoint(ctx_angle));
        return d;
    };

    struct DictEntry {
        int kind;  // 0 fiber anchor, 1 product anchor, 2 cylinder distance
        double anchor_angle = 0.0;
        std::vector<std::uint32_t> anchor_syms;
        std::vector<std::uint32_t> cyl;
        std::string label;
    };
    std::vector<DictEntry> dict;
    for (std::uint32_t j = 0; j < dictionary_size; ++j) {
        const OrbitSummary& src = (j % 2 == 0) ? a : b;
        const std::size_t span = src.angles.size() - 2 * kContext;
        const std::size_t t0 = kContext + static_cast<std::size_t>(rng.next_below(span));
        DictEntry e;
        e.kind = static_cast<int>(j % 3);
        if (e.kind == 0) {
            e.anchor_angle = src.angles[t0];
            e.label = "fiber_anchor:" + format_double(e.anchor_angle);
        } else if (e.kind == 1) {
            e.anchor_angle = src.angles[t0];
            e.anchor_syms.assign(src.symbols.symbols.begin() + (t0 - kContext),
                                 src.symbols.symbols.begin() + (t0 + kContext + 1));
            e.label = "product_anchor:" + format_double(e.anchor_angle);
        } else {
            const std::size_t len = 1 + static_cast<std::size_t>(rng.next_below(3));
            e.cyl.assign(src.symbols.symbols.begin() + t0,
                         src.symbols.symbols.begin() + (t0 + len));
            e.label = "cylinder:" + std::to_string(len);
        }
        dict.push_back(std::move(e));
    }

    auto evaluate = [&](const OrbitSummary& o, const DictEntry& e) {
        std::vector<double> values;
        values.reserve(o.angles.size() - 2 * kContext);
        for (std::size_t t = kContext; t + kContext < o.angles.size(); ++t) {
            double v = 0.0;
            if (e.kind == 0) {
                v = projective_distance(ProjectivePoint(o.angles[t]),
                                        ProjectivePoint(e.anchor_angle));
            } else if (e.kind == 1) {
                v = symbol_distance(o, t, e.anchor_syms, e.anchor_angle, true);
            } else {
                double d = 0.0;
                for (std::size_t i = 0; i < e.cyl.size(); ++i)
                    if (o.symbols.symbols[t + i] != e.cyl[i]) {
                        d = std::pow(2.0, -static_cast<double>(i));
                        break;
                    }
                v = d;
            }
            values.push_back(v);
        }
        return std::make_pair(sample_mean(values), batch_std_error(values, 16));
    };

    WassersteinEstimate est;
    est.dictionary_size = dictionary_size;
    for (const auto& e : dict) {
        const auto [ma, sa] = evaluate(a, e);
        const auto [mb, sb] = evaluate(b, e);
        const double diff = std::abs(ma - mb);
        if (diff > est.lower_bound) {
            est.lower_bound = diff;
            est.std_error = std::sqrt(sa * sa + sb * sb);
            est.best_function = e.label;
        }
    }
    return est;
}

DeviationReport birkhoff_diagnostic(const SkewSystem& sys, const GeometricCascade& tower,
                                    const std::function<double(std::uint32_t, double)>& observable,
                                    std::uint32_t window, std::uint32_t level,
                                    const BernoulliVector& p, double tolerance,
                                    std::size_t steps, RngStream& rng) {
    if (window == 0) throw invalid_input("birkhoff_diagnostic: window must be positive");
    if (steps < static_cast<std::size_t>(window) * 8)
        throw invalid_input("birkhoff_diagnostic: need at least eight windows");
    const OrbitSummary orbit = sample_mu_n(sys, tower, p, level, steps, rng);

    std::vector<double> values;
    values.reserve(steps);
    for (std::size_t t = 0; t < orbit.angles.size(); ++t)
        values.push_back(observable(orbit.symbols.symbols[t], orbit.angles[t]));
    const double mean = sample_mean(values);

    std::vector<double> deviations;
    for (std::size_t start = 0; start + window <= values.size(); start += window) {
        double s = 0.0;
        for (std::size_t i = start; i < start + window; ++i) s += values[i];
        deviations.push_back(std::abs(s / static_cast<double>(window) - mean));
    }

    DeviationReport report;
    report.level = level;
    report.window = window;
    report.tolerance = tolerance;
    report.global_mean = mean;
    report.windows = deviations.size();
    std::size_t within = 0;
    for (double d : deviations) within += d <= tolerance;
    report.mass_within = static_cast<double>(within) / static_cast<double>(deviations.size());
    report.deviation_q50 = quantile_of(deviations, 0.5);
    report.deviation_q90 = quantile_of(deviations, 0.9);
    report.deviation_max = quantile_of(deviations, 1.0);
    return report;
}

CifsSeed stock_cifs_seed() {
    CifsSeed seed{SkewSystem({diagonal_matrix(std::exp(0.5)),
                              conjugated(rotation_matrix(0.3), diagonal_matrix(std::exp(0.5))),
                              rotation_matrix(0.7)}),
                  {},
                  arc_around(ProjectivePoint(0.0), 0.15)};
    const Alphabet a = seed.system.alphabet();
    seed.words = {Word{a, {0, 0, 0, 0}}, Word{a, {1, 0, 0, 0}}};
    return seed;
}

std::string to_json(const SkewSystem& sys) {
    nlohmann::json j;
    j["matrices"] = nlohmann::json::array();
    for (const auto& m : sys.matrices) j["matrices"].push_back({m.a, m.b, m.c, m.d});
    return j.dump();
}

SkewSystem skew_system_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.contains("matrices") || !j["matrices"].is_array())
        throw invalid_input("skew_system_from_json: missing matrices array");
    std::vector<Sl2Matrix> ms;
    for (const auto& row : j["matrices"]) {
        if (!row.is_array() || row.size() != 4)
            throw invalid_input("skew_system_from_json: each matrix needs four entries");
        ms.emplace_back(row[0].get<double>(), row[1].get<double>(), row[2].get<double>(),
                        row[3].get<double>());
    }
    return SkewSystem(std::move(ms));
}

namespace {

nlohmann::json word_to_json_array(const Word& w) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::uint32_t s : w.symbols) arr.push_back(s);
    return arr;
}

nlohmann::json arc_to_json(const Arc& arc) {
    return nlohmann::json{{"start", arc.start}, {"length", arc.length}};
}

}  // namespace

std::string CifsCertificate::to_json() const {
    nlohmann::json j;
    j["words"] = nlohmann::json::array();
    for (const auto& w : words) j["words"].push_back(word_to_json_array(w));
    j["region"] = arc_to_json(region);
    j["envelope"] = envelope;
    j["decay_rate"] = decay_rate;
    j["exponent"] = exponent;
    j["band"] = band;
    j["grid"] = grid;
    j["inclusion_margin"] = inclusion_margin;
    j["decay_margin"] = decay_margin;
    j["restart_margin"] = restart_margin;
    j["spectrum_margin"] = spectrum_margin;
    j["lipschitz_rate"] = lipschitz_rate;
    j["grid_gap"] = grid_gap;
    j["distortion_gap"] = distortion_gap;
    j["orbit_gap"] = orbit_gap;
    j["verified"] = verified;
    return j.dump();
}

std::string CifsFailure::to_json() const {
    nlohmann::json j;
    j["condition"] = condition;
    j["witness_word"] = word_to_json_array(witness_word);
    j["witness_angle"] = witness_angle;
    j["observed"] = observed;
    j["bound"] = bound;
    return j.dump();
}

std::string BlendingReport::to_json() const {
    nlohmann::json j;
    j["evidence_only"] = true;
    j["region"] = arc_to_json(region);
    j["resolution"] = resolution;
    j["forward_accessible"] = forward_accessible;
    j["backward_accessible"] = backward_accessible;
    j["transitive_evidence"] = transitive_evidence;
    j["expanding_cover_forward"] = expanding_cover_forward;
    j["expanding_cover_backward"] = expanding_cover_backward;
    j["k1"] = k1;
    j["k2"] = k2;
    j["k3"] = k3;
    j["k4"] = k4;
    j["k5"] = k5;
    j["intervals_tested"] = intervals_tested;
    j["cover_witnesses"] = nlohmann::json::array();
    for (const auto& w : cover_witnesses) j["cover_witnesses"].push_back(word_to_json_array(w));
    return j.dump();
}

std::string OrbitSummary::to_json() const {
    nlohmann::json j;
    j["level"] = level;
    j["burn_in"] = burn_in;
    j["steps"] = angles.size();
    j["exponent"] = exponent;
    j["exponent_se"] = exponent_se;
    return j.dump();
}

std::string orbit_csv(const OrbitSummary& orbit) {
    std::string out = "step,symbol,angle,log_derivative\n";
    for (std::size_t t = 0; t < orbit.angles.size(); ++t) {
        out += std::to_string(t);
        out += ',';
        out += std::to_string(orbit.symbols.symbols[t]);
        out += ',';
        out += format_double(orbit.angles[t]);
        out += ',';
        out += format_double(orbit.log_derivs[t]);
        out += '\n';
    }
    return out;
}

std::string WassersteinEstimate::to_json() const {
    nlohmann::json j;
    j["lower_bound"] = lower_bound;
    j["std_error"] = std_error;
    j["dictionary_size"] = dictionary_size;
    j["best_function"] = best_function;
    return j.dump();
}

std::string DeviationReport::to_json() const {
    nlohmann::json j;
    j["level"] = level;
    j["window"] = window;
    j["tolerance"] = tolerance;
    j["global_mean"] = global_mean;
    j["windows"] = windows;
    j["mass_within"] = mass_within;
    j["deviation_q50"] = deviation_q50;
    j["deviation_q90"] = deviation_q90;
    j["deviation_max"] = deviation_max;
    return j.dump();
}

}  // namespace ergolab
