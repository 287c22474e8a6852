#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ergolab/core.hpp"

namespace ergolab {

// Raised when a transport instance exceeds the support cap; callers should
// fall back to Monte-Carlo coupling bounds.
struct transport_cap_exceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Longest common subsequence length (indices strictly increasing, not
// necessarily contiguous). Bit-parallel over 64-bit blocks.
std::size_t lcs_length(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b);

// Quadratic two-row dynamic program; reference oracle for lcs_length.
std::size_t lcs_length_naive(const std::vector<std::uint32_t>& a,
                             const std::vector<std::uint32_t>& b);

// Edit metric on equal-length words: 1 - lcs/n. The matched indices are a
// common subsequence, so single deletions repair shifts.
double edit_distance_n(const Word& a, const Word& b);

enum class EstimateKind { exact, upper_bound, lower_bound };

struct FbarEstimate {
    double value = 0.0;
    EstimateKind kind = EstimateKind::upper_bound;
    std::uint32_t n = 0;          // block length the estimate refers to
    std::uint64_t samples = 0;    // 0 when exact
    double std_error = 0.0;       // 0 when exact
};

std::string to_json(const FbarEstimate& e);

// Two-sided symbol stream; nullopt once the stream is exhausted at index i.
using SymbolStream = std::function<std::optional<std::uint32_t>(std::int64_t)>;

struct WindowValue {
    std::uint32_t half_width = 0;  // window covers coordinates [-n, n)
    double value = 0.0;
};

struct SequenceFbar {
    std::vector<WindowValue> windows;
    // Max over the tail half of the computed schedule; stands in for the
    // large-window limit superior and is reported as an upper bound.
    FbarEstimate estimate;
};

// Edit distance of centered windows over a geometric schedule of half-widths
// (default 2^4 .. 2^16). The schedule is truncated where a stream ends;
// failing to fill even the smallest window raises insufficient_data.
SequenceFbar fbar_sequences(const SymbolStream& a, const SymbolStream& b, Alphabet alphabet,
                            std::vector<std::uint32_t> half_width_schedule = {});

// Pair of n-block distributions feeding the transport solver.
struct JoiningProblem {
    std::uint32_t n = 1;
    Alphabet alphabet;
    std::vector<std::pair<std::vector<std::uint32_t>, double>> left, right;

    // Validates equal block lengths, matching alphabets, and that both
    // marginals sum to 1 within 1e-9.
    JoiningProblem(const BlockDistribution& l, const BlockDistribution& r);
};

// Minimum expected edit distance over all couplings of the two n-block
// distributions, solved exactly as a transportation problem. Costs are kept
// as integers (n - lcs) so optimality is certified without rounding; the
// returned value is within 1e-9 of the LP optimum. Instances with
// |left support| * |right support| above the cap raise transport_cap_exceeded.
FbarEstimate fbar_measures_exact(const BlockDistribution& left, const BlockDistribution& right,
                                 std::size_t cost_entry_cap = 1000000);

using WordSampler = std::function<Word(RngStream&)>;

// Mean edit distance across an explicit coupling. Any coupling upper-bounds
// the transport optimum, so kind = upper_bound with a standard error.
FbarEstimate fbar_coupling_upper(const WordSampler& left, const WordSampler& right,
                                 std::uint32_t n, std::uint64_t trials, RngStream& rng);

// Same bound for Bernoulli letter measures, using the monotone coupling:
// one shared uniform per coordinate pushed through both inverse CDFs. For
// two-letter alphabets the per-coordinate disagreement rate is exactly half
// the city metric, so this coupling is asymptotically tight.
FbarEstimate fbar_coupling_upper_bernoulli(const BernoulliVector& p, const BernoulliVector& q,
                                           std::uint32_t n, std::uint64_t trials, RngStream& rng);

// Half the city metric; the closed form of the limiting edit distance
// between two Bernoulli measures on the same alphabet.
double bernoulli_fbar(const BernoulliVector& p, const BernoulliVector& q);

// Entropy gap certified by edit proximity eps between two shift-invariant
// measures on an alphabet of the given size:
//   2*(-eps*log(eps) - (1-eps)*log(1-eps)) + eps*log(size), natural log.
double entropy_drift_bound(double eps, std::uint32_t alphabet_size);

// Fraction of independently sampled word pairs at edit distance below eps.
// A heuristic indicator of loose-Bernoulli-like self-matching, not a proof.
double lb_diagnostic(const WordSampler& sampler, std::uint32_t n, double eps,
                     std::uint64_t trials, RngStream& rng);

}  // namespace ergolab
