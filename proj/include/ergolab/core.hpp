#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ergolab {

// Thrown when inputs violate an operation's contract.
struct invalid_input : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown when a window/word is too short for the requested statistic.
struct insufficient_data : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Finite alphabet; letters are the dense indices 0..size-1.
struct Alphabet {
    std::uint32_t size = 1;

    bool operator==(const Alphabet&) const = default;
};

// Finite word over an alphabet. Empty words are allowed.
struct Word {
    Alphabet alphabet;
    std::vector<std::uint32_t> symbols;

    Word() = default;
    Word(Alphabet a, std::vector<std::uint32_t> s);

    std::size_t length() const { return symbols.size(); }
    bool operator==(const Word&) const = default;

    Word concat(const Word& other) const;
};

// Cylinder anchored at coordinate 0: membership is prefix match.
struct CylinderSpec {
    Word word;

    bool contains(const std::vector<std::uint32_t>& sequence_prefix) const;
};

// Probability vector on an alphabet. Entries >= 0, sum within 1e-12 of 1.
struct BernoulliVector {
    Alphabet alphabet;
    std::vector<double> probs;

    BernoulliVector() = default;
    BernoulliVector(Alphabet a, std::vector<double> p);

    double operator[](std::uint32_t letter) const { return probs[letter]; }
};

// Equal mass on every letter.
BernoulliVector uniform_vector(Alphabet a);

// Counter-based splittable generator (SplitMix64 core with per-stream gamma).
// Identical (seed, stream) reproduces identical draws, bit for bit.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    RngStream() = default;
    RngStream(std::uint64_t seed_, std::uint64_t stream_);

    std::uint64_t next_u64();
    // Uniform in [0,1) with 53 random bits.
    double next_unit();
    // Uniform integer in [0, bound); bound >= 1.
    std::uint64_t next_below(std::uint64_t bound);
    // Child stream independent of this one for any child id.
    RngStream split(std::uint64_t child) const;

  private:
    std::uint64_t state_ = 0;
    std::uint64_t gamma_ = 0x9e3779b97f4a7c15ull;
};

// One letter drawn from p.
std::uint32_t sample_letter(const BernoulliVector& p, RngStream& rng);

// n i.i.d. letters drawn from p.
Word sample_word(const BernoulliVector& p, std::size_t n, RngStream& rng);

// Empirical distribution of the |w|-k+1 sliding k-blocks of w.
// Keys are the raw symbol vectors of length k.
struct BlockDistribution {
    Alphabet alphabet;
    std::uint32_t block_length = 1;
    std::map<std::vector<std::uint32_t>, double> freq;
};

BlockDistribution block_distribution(const Word& w, std::uint32_t k);

// Product-measure probability of the cylinder under p.
double cylinder_prob_bernoulli(const BernoulliVector& p, const CylinderSpec& c);

// l1 distance between two probability vectors on the same alphabet.
double city_metric(const BernoulliVector& p, const BernoulliVector& q);

// Shannon entropy in nats. Zero entries contribute zero.
double shannon_entropy(const BernoulliVector& p);

// JSON round-trip: words as integer arrays, alphabets as {"size": n}.
std::string to_json(const Alphabet& a);
std::string to_json(const Word& w);
Alphabet alphabet_from_json(const std::string& text);
Word word_from_json(const std::string& text, Alphabet a);

}  // namespace ergolab
