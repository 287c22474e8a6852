#include "ergolab/core.hpp"

#include <cmath>
#include <json.hpp>

namespace ergolab {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// Stafford mix13 finalizer; bijective on 64-bit words.
std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
}

}  // namespace

Word::Word(Alphabet a, std::vector<std::uint32_t> s) : alphabet(a), symbols(std::move(s)) {
    for (std::uint32_t x : symbols) {
        if (x >= alphabet.size) throw invalid_input("word symbol out of alphabet range");
    }
}

Word Word::concat(const Word& other) const {
    if (!(alphabet == other.alphabet)) throw invalid_input("concat: alphabet mismatch");
    Word out = *this;
    out.symbols.insert(out.symbols.end(), other.symbols.begin(), other.symbols.end());
    return out;
}

bool CylinderSpec::contains(const std::vector<std::uint32_t>& sequence_prefix) const {
    if (sequence_prefix.size() < word.symbols.size()) return false;
    for (std::size_t i = 0; i < word.symbols.size(); ++i) {
        if (sequence_prefix[i] != word.symbols[i]) return false;
    }
    return true;
}

BernoulliVector::BernoulliVector(Alphabet a, std::vector<double> p)
    : alphabet(a), probs(std::move(p)) {
    if (probs.size() != alphabet.size) throw invalid_input("probability vector size mismatch");
    double sum = 0.0;
    for (double x : probs) {
        if (!(x >= 0.0)) throw invalid_input("negative probability entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw invalid_input("probabilities must sum to 1");
}

BernoulliVector uniform_vector(Alphabet a) {
    if (a.size == 0) throw invalid_input("alphabet must be nonempty");
    return BernoulliVector(a, std::vector<double>(a.size, 1.0 / a.size));
}

RngStream::RngStream(std::uint64_t seed_, std::uint64_t stream_) : seed(seed_), stream(stream_) {
    state_ = mix64(seed_ + kGolden * (stream_ + 1));
    // Per-stream increment; odd so the counter orbit covers all 2^64 states.
    gamma_ = mix64(seed_ ^ mix64(stream_ + 0x6a09e667f3bcc909ull)) | 1ull;
}

std::uint64_t RngStream::next_u64() {
    state_ += gamma_;
    return mix64(state_);
}

double RngStream::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
    if (bound == 0) throw invalid_input("next_below: bound must be positive");
    // Rejection keeps the draw unbiased for any bound.
    const std::uint64_t limit = bound * (~0ull / bound);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % bound;
}

RngStream RngStream::split(std::uint64_t child) const {
    return RngStream(mix64(seed ^ mix64(stream + kGolden)) + child, child);
}

std::uint32_t sample_letter(const BernoulliVector& p, RngStream& rng) {
    const double u = rng.next_unit();
    double acc = 0.0;
    for (std::uint32_t a = 0; a + 1 < p.alphabet.size; ++a) {
        acc += p.probs[a];
        if (u < acc) return a;
    }
    return p.alphabet.size - 1;
}

Word sample_word(const BernoulliVector& p, std::size_t n, RngStream& rng) {
    Word w;
    w.alphabet = p.alphabet;
    w.symbols.reserve(n);
    for (std::size_t i = 0; i < n; ++i) w.symbols.push_back(sample_letter(p, rng));
    return w;
}

BlockDistribution block_distribution(const Word& w, std::uint32_t k) {
    if (k < 1) throw invalid_input("block length must be at least 1");
    if (w.length() < k) throw insufficient_data("word shorter than block length");
    BlockDistribution out;
    out.alphabet = w.alphabet;
    out.block_length = k;
    const std::size_t windows = w.length() - k + 1;
    const double weight = 1.0 / static_cast<double>(windows);
    std::vector<std::uint32_t> block(k);
    for (std::size_t i = 0; i < windows; ++i) {
        std::copy(w.symbols.begin() + i, w.symbols.begin() + i + k, block.begin());
        out.freq[block] += weight;
    }
    return out;
}

double cylinder_prob_bernoulli(const BernoulliVector& p, const CylinderSpec& c) {
    if (!(c.word.alphabet == p.alphabet)) throw invalid_input("cylinder alphabet mismatch");
    double prob = 1.0;
    for (std::uint32_t a : c.word.symbols) prob *= p.probs[a];
    return prob;
}

double city_metric(const BernoulliVector& p, const BernoulliVector& q) {
    if (!(p.alphabet == q.alphabet)) throw invalid_input("city metric: alphabet mismatch");
    double d = 0.0;
    for (std::uint32_t a = 0; a < p.alphabet.size; ++a) d += std::abs(p.probs[a] - q.probs[a]);
    return d;
}

double shannon_entropy(const BernoulliVector& p) {
    double h = 0.0;
    for (double x : p.probs) {
        if (x > 0.0) h -= x * std::log(x);
    }
    return h;
}

std::string to_json(const Alphabet& a) {
    nlohmann::json j;
    j["size"] = a.size;
    return j.dump();
}

std::string to_json(const Word& w) {
    nlohmann::json j = w.symbols;
    return j.dump();
}

Alphabet alphabet_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    if (!j.contains("size") || !j["size"].is_number_unsigned() || j["size"].get<std::uint64_t>() < 1)
        throw invalid_input("alphabet json must carry a positive \"size\"");
    return Alphabet{j["size"].get<std::uint32_t>()};
}

Word word_from_json(const std::string& text, Alphabet a) {
    auto j = nlohmann::json::parse(text);
    if (!j.is_array()) throw invalid_input("word json must be an integer array");
    std::vector<std::uint32_t> symbols;
    symbols.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number_unsigned()) throw invalid_input("word json entries must be nonnegative integers");
        symbols.push_back(x.get<std::uint32_t>());
    }
    return Word(a, std::move(symbols));
}

}  // namespace ergolab
