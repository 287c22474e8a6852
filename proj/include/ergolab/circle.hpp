#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergolab/cascade.hpp"
#include "ergolab/core.hpp"

namespace ergolab {

// Raised when a search exhausts its depth or candidate budget.
struct search_exhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 2x2 real matrix with determinant one. Construction rescales positive
// determinants onto the unit sheet and rejects the rest; afterwards
// |ad - bc - 1| < 1e-9 holds.
struct Sl2Matrix {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

    Sl2Matrix() = default;
    Sl2Matrix(double a_, double b_, double c_, double d_);

    double trace() const { return a + d; }
    double det() const { return a * d - b * c; }
    Sl2Matrix inverse() const { return Sl2Matrix(d, -b, -c, a); }
};

Sl2Matrix operator*(const Sl2Matrix& lhs, const Sl2Matrix& rhs);
bool same_matrix(const Sl2Matrix& lhs, const Sl2Matrix& rhs, double tol = 1e-12);

// Largest singular value; the smallest is its reciprocal on the unit sheet.
double operator_norm(const Sl2Matrix& m);

Sl2Matrix rotation_matrix(double angle);
// diag(lambda, 1/lambda); lambda != 0.
Sl2Matrix diagonal_matrix(double lambda);
// g m g^-1.
Sl2Matrix conjugated(const Sl2Matrix& g, const Sl2Matrix& m);

// A line through the origin, parameterized by its angle in [0, pi).
struct ProjectivePoint {
    double angle = 0.0;

    ProjectivePoint() = default;
    explicit ProjectivePoint(double theta);
};

// Shorter of the two angular gaps, at most pi/2.
double projective_distance(ProjectivePoint p, ProjectivePoint q);

// Oriented arc of the line space: angles start .. start+length, mod pi.
// Zero length is allowed so that images of collapsed arcs stay representable.
struct Arc {
    double start = 0.0;
    double length = 1.0;

    Arc() = default;
    Arc(double start_, double length_);

    double end() const;
    ProjectivePoint midpoint() const;
    // Point at parameter t in [0,1] along the arc.
    ProjectivePoint at(double t) const;
    bool contains(ProjectivePoint p) const;
    bool contains(const Arc& inner) const;
};

Arc arc_around(ProjectivePoint center, double radius);

// Finite family of determinant-one matrices acting on the line space by
// letter. Words over the alphabet pick matrices by symbol.
struct SkewSystem {
    std::vector<Sl2Matrix> matrices;

    explicit SkewSystem(std::vector<Sl2Matrix> ms);

    Alphabet alphabet() const { return Alphabet{static_cast<std::uint32_t>(matrices.size())}; }
    const Sl2Matrix& matrix(std::uint32_t letter) const;
};

std::string to_json(const SkewSystem& sys);
SkewSystem skew_system_from_json(const std::string& text);

struct ProjectiveStep {
    ProjectivePoint image;
    double log_derivative = 0.0;  // equals -2 log|A v_unit|, always
};

// One matrix applied to one line. The angle derivative of the induced circle
// map is exactly 1 / |A v_unit|^2, so the map preserves orientation.
ProjectiveStep projective_map(const Sl2Matrix& m, ProjectivePoint v);

// Image arc under the induced circle map; endpoints map to endpoints and the
// orientation is preserved, so no interior sampling is needed.
Arc map_arc(const Sl2Matrix& m, const Arc& arc);

// Product matrix of the word, letters applied first-to-last: the letter at
// index 0 acts first, so the product is M[w_last] * ... * M[w_0].
Sl2Matrix word_matrix(const SkewSystem& sys, const Word& w);

struct WordOrbit {
    ProjectivePoint image;
    // prefix_log_sums[k] = sum of the first k+1 step log-derivatives.
    std::vector<double> prefix_log_sums;
};

// Composed image of x under the word with all prefix derivative sums. The
// final sum equals the log-derivative of the composed map at x.
WordOrbit word_map(const SkewSystem& sys, const Word& w, ProjectivePoint x);

// Certified contraction data for a word family on an arc J. Quantifiers:
//   (inclusion) every word maps J strictly inside J;
//   (decay)     every prefix of every concatenation of family words has
//               |derivative| <= envelope * exp(steps * decay_rate) on J;
//   (spectrum)  every word's per-symbol log-derivative average over J lies
//               in (exponent - band, exponent + band).
// Margins are net of the grid Lipschitz correction, so positive margins
// certify the whole arc, not just the grid points. The decay condition for
// arbitrary concatenations reduces to two finite checks: prefixes within one
// word against envelope*exp(k*rate), and full words against exp(len*rate)
// alone, which restarts the induction at each word boundary.
struct CifsCertificate {
    std::vector<Word> words;
    Arc region;                // J
    double envelope = 1.5;     // multiplicative constant, > 1
    double decay_rate = 0.0;   // per-step log bound, < 0
    double exponent = 0.0;     // spectrum center, < 0
    double band = 0.0;         // spectrum half-width, in (0, |exponent|)
    std::uint32_t grid = 0;    // resolution the margins were computed at

    double inclusion_margin = 0.0;  // angle units
    double decay_margin = 0.0;      // log units, Lipschitz-corrected
    double restart_margin = 0.0;    // full-word, envelope-free slack
    double spectrum_margin = 0.0;   // log units per symbol, corrected
    double lipschitz_rate = 0.0;    // derivative bound used for corrections
    double grid_gap = 0.0;          // max spacing between checked angles

    double distortion_gap = 0.0;  // max over words of the full-sum spread on J
    double orbit_gap = 0.0;       // mean image-arc diameter along a sample run
    bool verified = false;

    std::size_t min_word_length() const;
    std::size_t max_word_length() const;
    std::string to_json() const;
};

// First condition that failed, with the word and angle that witnessed it.
struct CifsFailure {
    std::string condition;  // "inclusion", "decay", "restart", "spectrum"
    Word witness_word;
    double witness_angle = 0.0;
    double observed = 0.0;
    double bound = 0.0;

    std::string to_json() const;
};

struct CifsOutcome {
    std::optional<CifsCertificate> certificate;
    std::optional<CifsFailure> failure;

    bool ok() const { return certificate.has_value(); }
};

// Grid verification of the three conditions above plus diagnostics. The word
// list must be prefix-free (throws invalid_input otherwise; also on grid < 64
// or malformed quantifiers). Failures return a report, never a certificate.
CifsOutcome verify_cifs(const SkewSystem& sys, std::vector<Word> words, Arc region,
                        double envelope, double decay_rate, double exponent,
                        double band, std::uint32_t grid);

// Smallest repeat count m for which the mean image-arc diameter along m
// concatenated family words provably drops below gap:
// envelope / (m * min_len * (1 - exp(decay_rate))) <= gap.
std::uint32_t recenter_horizon(const CifsCertificate& cert, double gap);

struct CifsSearchReport {
    CifsCertificate certificate;
    double entropy_proxy = 0.0;       // log(word count) / word length
    double seed_exponent = 0.0;       // fixed-point estimate the search anchored on
    double wasserstein_to_seed = 0.0; // orbit-dictionary lower bound, evidence only
    std::uint64_t words_scanned = 0;
};

// Searches equal-length word collections on an arc around the strongest
// contracting direction found up to the depth budget, maximizing
// log(count)/length among collections whose quick filters pass, then verifies
// with the full grid. mixed_lengths = !equal_lengths keeps a prefix-free
// union across lengths instead. Throws search_exhausted when no contracting
// word exists within depth or nothing verifies.
CifsSearchReport search_cifs(const SkewSystem& sys, double target_exponent,
                             double band, double entropy_tolerance,
                             double wasserstein_tolerance, bool equal_lengths,
                             std::uint32_t depth);

struct TailSearchParams {
    double budget_constant = 1.0;   // tail length <= constant * |exponent| * |v|
    std::uint32_t max_depth = 512;  // absolute cap on tail length
    std::uint32_t beam_width = 128;
    std::uint32_t grid = 96;        // re-verification resolution
    std::uint32_t min_repeats = 0;  // 0 = derive from recenter_horizon
    double target_exponent = 0.0;   // 0 = certificate exponent / 2
    double target_band = 0.0;       // 0 = certificate band / 2
};

// Raised when no tail verifies within the budget; carries the best candidate.
struct tail_not_found : std::runtime_error {
    Word best_candidate;
    double best_exponent = 0.0;
    bool best_contained = false;

    tail_not_found(const std::string& what, Word best, double exponent, bool contained);
};

// Appends a tail to the m-fold concatenation v of certificate words so that
// v + tail maps J inside J and its per-symbol exponent lands in the halved
// band (target center exponent/2, half-width band/2 by default). Beam search
// over generator letters, scored by exponent re-centering; every accepted
// tail is re-verified as a singleton certificate at the halved quantifiers,
// so correctness never relies on the search heuristics. v must parse as
// exactly m certificate words and m must reach the recenter horizon (or the
// configured min_repeats). Deterministic; no randomness anywhere.
Word search_tail(const SkewSystem& sys, const CifsCertificate& cert, std::uint32_t m,
                 const Word& v, const TailSearchParams& params);

// Finite-resolution evidence for the mixing axioms on an arc. Never a proof:
// every field is stamped with the resolution it was computed at.
struct BlendingReport {
    Arc region;
    std::uint32_t resolution = 0;

    bool forward_accessible = false;   // images of int J cover the circle grid
    bool backward_accessible = false;  // same under the inverse family
    bool transitive_evidence = false;  // a generic probe arc covers both ways

    bool expanding_cover_forward = false;
    bool expanding_cover_backward = false;
    // Fitted covering constants: tested interval lengths < k1; word length
    // <= k2 |log |I|| + k3; image covers the region inflated by k4; expansion
    // along the word >= length * k5.
    double k1 = 0.0, k2 = 0.0, k3 = 0.0, k4 = 0.0, k5 = 0.0;
    std::uint32_t intervals_tested = 0;
    std::vector<Word> cover_witnesses;

    std::string to_json() const;
};

BlendingReport check_blending(const SkewSystem& sys, Arc region, std::uint32_t resolution);

// Backward-composition limit point: applies the listed certificate words
// deepest-first until the image of J contracts below tol. past holds indices
// into cert.words, most recent first, and is cycled when exhausted.
// seed_angle < 0 starts from the arc midpoint. Requires a verified
// certificate.
ProjectivePoint attractor_point(const SkewSystem& sys, const CifsCertificate& cert,
                                const std::vector<std::uint32_t>& past, double tol,
                                double seed_angle = -1.0);

// Mean fiber log-derivative along the orbit of x0 driven by the symbols.
double fiber_exponent(const SkewSystem& sys, const Word& symbols, ProjectivePoint x0);

// Tower of word-level contraction certificates glued onto a repeat-and-tail
// cascade. Level-0 letters are the certificate words; each deeper level
// concatenates m_n children and appends a searched tail, then the whole level
// is re-verified at halved quantifiers. The tail table is closed over by the
// cascade's tail hook, so cascade images, roofs, and streams all see the
// searched tails.
struct TowerConfig {
    std::vector<std::uint32_t> repeats;  // m_1..m_depth, each >= 2
    double budget_constant = 1.0;        // tail budget multiplier
    TailSearchParams tail_params;        // targets auto-derived per level
    std::uint32_t grid = 96;             // per-level verification resolution
    std::size_t letter_cap = 4096;       // max letters enumerated per level
};

struct certification_failed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class GeometricCascade {
  public:
    GeometricCascade(SkewSystem sys, CifsCertificate base, TowerConfig cfg);

    const SkewSystem& system() const { return sys_; }
    const Cascade& cascade() const { return *cascade_; }
    std::uint32_t depth() const { return static_cast<std::uint32_t>(cfg_.repeats.size()); }
    const CifsCertificate& certificate(std::uint32_t level) const;
    // Symbol word of the level-n letter spelled by the digit word.
    const Word& level_word(std::uint32_t level, const Word& digits) const;
    std::size_t level_size(std::uint32_t level) const;

  private:
    SkewSystem sys_;
    TowerConfig cfg_;
    std::vector<CifsCertificate> certs_;
    std::vector<std::vector<Word>> level_words_;
    std::vector<std::map<std::vector<std::uint32_t>, std::size_t>> digit_index_;
    std::unique_ptr<Cascade> cascade_;
};

// Fiber orbit paired with its driving symbol stream; burn-in already removed.
struct OrbitSummary {
    std::uint32_t level = 0;
    std::uint64_t burn_in = 0;
    Word symbols;                    // over the matrix alphabet
    std::vector<double> angles;      // fiber point before each step
    std::vector<double> log_derivs;  // step log-derivatives
    double exponent = 0.0;
    double exponent_se = 0.0;

    std::string to_json() const;
};

std::string orbit_csv(const OrbitSummary& orbit);

// Runs the level-n coded stream of the tower against the fiber, starting
// from the region midpoint and discarding a contraction burn-in of
// 10 * ceil(log(1e9) / |decay_rate|) symbols, after which the fiber point
// shadows the attractor within 1e-9. sys must equal the tower's system.
OrbitSummary sample_mu_n(const SkewSystem& sys, const GeometricCascade& tower,
                         const BernoulliVector& p, std::uint32_t level,
                         std::size_t steps, RngStream& rng);

struct WassersteinEstimate {
    double lower_bound = 0.0;
    double std_error = 0.0;
    std::uint32_t dictionary_size = 0;
    std::string best_function;

    std::string to_json() const;
};

// Max over a dictionary of 1-Lipschitz test functions (fiber distances to
// anchors, product distances to orbit points, smoothed cylinder distances) of
// the absolute mean difference between the two orbits. A lower bound on the
// transport distance between the sampled measures.
WassersteinEstimate wasserstein_estimate(const OrbitSummary& a, const OrbitSummary& b,
                                         std::uint32_t dictionary_size, RngStream& rng);

struct DeviationReport {
    std::uint32_t level = 0;
    std::uint32_t window = 0;
    double tolerance = 0.0;
    double global_mean = 0.0;
    std::uint64_t windows = 0;
    double mass_within = 0.0;  // fraction of windows within tolerance of the mean
    double deviation_q50 = 0.0;
    double deviation_q90 = 0.0;
    double deviation_max = 0.0;

    std::string to_json() const;
};

// Distribution of |window Birkhoff average - long-run mean| for an observable
// of (symbol, fiber angle) over disjoint windows of a sampled level-n orbit.
DeviationReport birkhoff_diagnostic(const SkewSystem& sys, const GeometricCascade& tower,
                                    const std::function<double(std::uint32_t, double)>& observable,
                                    std::uint32_t window, std::uint32_t level,
                                    const BernoulliVector& p, double tolerance,
                                    std::size_t steps, RngStream& rng);

// Built-in two-word certified family: a unit-stretch hyperbolic matrix, its
// conjugate by a small rotation, and a helper rotation for tails. Quantifiers
// are frozen here and re-verified in tests; the level-1 halved band is
// (-0.6, -0.4).
struct CifsSeed {
    SkewSystem system;
    std::vector<Word> words;
    Arc region;
    double envelope = 1.5;
    double decay_rate = -0.8;
    double exponent = -1.0;
    double band = 0.2;
    std::uint32_t grid = 128;
};

CifsSeed stock_cifs_seed();

}  // namespace ergolab
