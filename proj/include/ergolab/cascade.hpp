#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ergolab/core.hpp"
#include "ergolab/substitution.hpp"

namespace ergolab {

// A letter of the level-n alphabet, identified by its level-0 spelling: the
// digit word obtained by respelling all the way down. Level-0 letters carry a
// single digit. The level-n alphabet is never materialized; paths stand in
// for its letters.
struct LetterPath {
    std::uint32_t level = 0;
    Word digits;

    bool operator==(const LetterPath&) const = default;
};

// zero            every tail is empty; the tail constant is ignored.
// constant_budget every level-n tail takes the maximal admissible length
//                 floor(K * 2^-n * sum of child roof lengths). Roofs stay
//                 constant per level, so expected roof lengths are exact.
// hash_varied     tail length is a keyed hash of the letter path reduced
//                 mod (budget + 1); roofs genuinely fluctuate inside the
//                 admissible band. Expected values go through Monte-Carlo.
// custom          caller-supplied generator (geometric tails plug in here).
enum class TailMode { zero, constant_budget, hash_varied, custom };

struct CascadeConfig {
    SubstitutionMap base;                // level-0 map; equal image lengths
    std::vector<std::uint32_t> repeats;  // m_1..m_depth, each >= 2
    double tail_constant = 0.1;          // K in the budget floor(K 2^-n ...)
    TailMode tail_mode = TailMode::zero;
    std::uint64_t tail_seed = 0;         // keys hash-tail length and content
};

// Produces the tail appended after the repeated children of the level-`level`
// letter spelled by `digits`. Must return a word over `target` of length at
// most `budget`; the cascade aborts on any violation.
using TailFn = std::function<Word(std::uint32_t level, const Word& digits,
                                  std::uint64_t budget, Alphabet target)>;

// Repeat-and-tail tower over a base substitution: the level-n image of a
// letter is the concatenation of its m_n child images followed by a short
// tail, with tail lengths capped by floor(K * 2^-n * sum of child lengths).
class Cascade {
  public:
    explicit Cascade(CascadeConfig cfg);
    // Custom tails; cfg.tail_mode is forced to TailMode::custom.
    Cascade(CascadeConfig cfg, TailFn custom_tails);

    const CascadeConfig& config() const { return cfg_; }
    std::uint32_t depth() const { return static_cast<std::uint32_t>(cfg_.repeats.size()); }
    Alphabet base_alphabet() const { return cfg_.base.source; }
    Alphabet target_alphabet() const { return cfg_.base.target; }

    // Number of level-0 digits spelling one level-n letter: m_1 * ... * m_n.
    std::uint64_t digit_count(std::uint32_t level) const;

    // Validates the digit word (alphabet and length) and wraps it.
    LetterPath letter(std::uint32_t level, Word digits) const;
    LetterPath zero_letter(std::uint32_t level) const;

    // The m_{k+1}*...*m_n level-k letters spelling a level-n letter, in
    // order. respell(a, a.level) is {a}; respell(a, 0) splits into digits.
    std::vector<LetterPath> respell(const LetterPath& a, std::uint32_t k) const;

    // Tail appended at a.level (>= 1); checked against the budget.
    Word tail_of(const LetterPath& a) const;
    std::uint64_t tail_budget(const LetterPath& a) const;

    // Level-n image of the letter, built recursively. Cost and size are the
    // roof length; fine for the shallow towers this models.
    Word image(const LetterPath& a) const;

    // |image(a)| without building the image. Small levels are memoized.
    std::uint64_t roof_length(const LetterPath& a) const;

    // Sum of roof_length over respell(a, k); the tail-free part of the
    // sandwich roof_sum <= roof_length(a) <= (1+4K(2^-k - 2^-n)) * roof_sum.
    std::uint64_t roof_sum_at_level(const LetterPath& a, std::uint32_t k) const;

    // True when every letter of a level has the same roof length (zero and
    // constant_budget modes); expected roofs are then exact.
    bool constant_roofs() const;

    // Product probability of the letter's digit word: the level-n lift of p
    // evaluated on one letter.
    double lift_prob(const BernoulliVector& p, const LetterPath& a) const;

    // One level-n letter with i.i.d. p digits.
    LetterPath sample_path(const BernoulliVector& p, std::uint32_t level, RngStream& rng) const;

    // Certified upper bound on any level-n roof: (1+4K)*m_1*...*m_n*|rho_0|
    // (exact in zero mode). Used as the acceptance-rejection envelope.
    std::uint64_t roof_upper_bound(std::uint32_t level) const;

    // Advisory notes: levels whose tail budget truncates to zero, and block
    // lengths that outrun the remaining repetition factors.
    std::vector<std::string> growth_warnings() const;

  private:
    CascadeConfig cfg_;
    TailFn tail_fn_;
    std::vector<std::uint64_t> digit_counts_;  // digit_counts_[n] = m_1..m_n
    mutable std::map<std::pair<std::uint32_t, std::vector<std::uint32_t>>, std::uint64_t>
        roof_memo_;
};

// Explicit level-n substitution and lifted vector, for levels whose alphabet
// fits the cap. Letters are big-endian digit tuples; both throw
// enumeration_cap_exceeded above the cap.
SubstitutionMap level_substitution(const Cascade& c, std::uint32_t n,
                                   std::size_t size_cap = 4096);
BernoulliVector lift_vector_enumerable(const Cascade& c, const BernoulliVector& p,
                                       std::uint32_t n, std::size_t size_cap = 4096);

// Expected roof length and roof fluctuation statistics at one level.
struct FluctuationStats {
    std::uint32_t level = 0;
    std::uint32_t block_level = 0;       // the k of the delta_nk samples
    double e_n = 0.0;                    // expected level-n roof length
    double e_n_se = 0.0;                 // 0 when exact
    bool e_n_exact = false;
    double e_k = 0.0;                    // expected level-k roof length
    double e_k_se = 0.0;
    std::vector<double> delta_nn;        // |E_n - roof| / E_n per sampled letter
    std::vector<double> delta_nk;        // block-average deviation at level k
    double d_estimate = 0.0;             // mean of delta_nn = vector gap estimate
    double d_se = 0.0;

    static std::string csv_header();
    std::string csv_row() const;
    std::string to_json() const;
};

// Samples `samples` level-n letters with i.i.d. p digits and fills the
// deviation statistics. Expected roofs are exact under constant roofs and
// Monte-Carlo (fresh substream, same sample count) otherwise. The d_estimate
// equals the total variation gap between the length-biased and plain lifted
// vectors, by the identity |tilde(p_n) - p_n|([a]) = p_n([a]) * delta_nn(a).
FluctuationStats fluctuations(const Cascade& c, const BernoulliVector& p,
                              std::uint32_t n, std::uint32_t k,
                              std::size_t samples, RngStream& rng);

// Uniform empirical-measure control for i.i.d. letters: the good set at
// tolerance delta collects sequences whose letter frequencies stay within
// L/len + delta of p at every length. bernstein_lln_constant returns the
// smallest L >= 0 whose union-of-tails series
//   2 * card * sum_{len>=1} exp(-6(len*delta+L)^2 / (3len + 4(len*delta+L)))
// is at most delta, so the good set has mass > 1 - delta for EVERY vector on
// an alphabet of that size. Series tails are closed with the geometric
// majorant exp(-min(delta^2, 3delta/4) * len).
double bernstein_lln_constant(std::uint32_t alphabet_size, double delta);

struct LlnReport {
    double L = 0.0;
    double delta = 0.0;
    std::uint32_t alphabet_size = 0;
    double series_value = 0.0;   // union bound achieved at L
    std::size_t trials = 0;
    std::size_t horizon = 0;     // lengths checked: 1..horizon
    double good_mass = 0.0;      // fraction of trials inside the good set
    double good_mass_se = 0.0;

    std::string to_json() const;
};

// Monte-Carlo mass of the good set to a finite horizon: `trials` sequences of
// `horizon` i.i.d. p letters, each checked at every length. The same L works
// for every vector on the alphabet; pass the L from bernstein_lln_constant to
// reuse one constant across vectors.
LlnReport lln_check(const BernoulliVector& p, double delta, double L,
                    std::size_t trials, std::size_t horizon, RngStream& rng);

// Stationary stream of `length` target symbols carrying the level-n coded
// measure: anchor letter length-biased (acceptance-rejection against the
// certified roof bound), phase uniform inside the anchor image, i.i.d.
// continuation. Memory stays bounded by one image, never the level alphabet.
Word sample_nu_n(const Cascade& c, const BernoulliVector& p, std::uint32_t n,
                 std::size_t length, RngStream& rng);

struct NuEntropy {
    double value = 0.0;      // m_1..m_n * h(p) / E_n
    double value_se = 0.0;   // 0 when E_n is exact
    double floor_bound = 0.0;  // h(p) * exp(-4K) / |rho_0|; always <= value
    bool exact = false;

    std::string to_json() const;
};

// Entropy of the level-n coded measure via the roof-normalized formula.
// Constant-roof modes are exact; otherwise E_n is estimated from `samples`
// letters (rng required).
NuEntropy nu_entropy(const Cascade& c, const BernoulliVector& p, std::uint32_t n,
                     std::size_t samples = 0, RngStream* rng = nullptr);

// Certified edit-distance bounds between level measures.
struct FbarBoundReport {
    double tail_constant = 0.0;  // K
    std::uint32_t k = 0;
    double kickoff = 0.0;        // f(level n, level 0) <= 6K + 8K^2
    double level_gap = 0.0;      // f(level k, level n) <= 4K * 2^-k for n >= k
    double cross_vector = 0.0;   // vector swap at fixed level: (1+4K)/2 * |p-q|_1

    static std::string csv_header();
    std::string csv_row() const;
    std::string to_json() const;
};

FbarBoundReport level_fbar_bounds(const Cascade& c, const BernoulliVector& p,
                                  const BernoulliVector& q, std::uint32_t k);

// Key-value config: {"base": substitution, "repeats": [...], "tail_constant":
// K, "tail_mode": "zero"|"constant_budget"|"hash_varied", "tail_seed": n}.
std::string to_json(const CascadeConfig& cfg);
CascadeConfig cascade_config_from_json(const std::string& text);

}  // namespace ergolab
