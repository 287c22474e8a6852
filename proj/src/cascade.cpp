#include "ergolab/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace ergolab {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Order-sensitive fold of a letter path; keys tail length and content.
std::uint64_t path_key(std::uint64_t seed, std::uint32_t level,
                       const std::vector<std::uint32_t>& digits) {
    std::uint64_t h = mix64(seed ^ (0xc2b2ae3d27d4eb4full * (level + 1)));
    for (std::uint32_t d : digits) h = mix64(h ^ (h << 1) ^ d);
    return h;
}

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

double sample_mean(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double mean_std_error(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double m = sample_mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    double var = ss / static_cast<double>(xs.size() - 1);
    return std::sqrt(var / static_cast<double>(xs.size()));
}

double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    double pos = q * static_cast<double>(xs.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, xs.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

}  // namespace

Cascade::Cascade(CascadeConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.tail_mode == TailMode::custom)
        throw invalid_input("custom tail mode requires a TailFn; use the two-argument constructor");
    if (cfg_.base.min_len != cfg_.base.max_len)
        throw invalid_input("cascade base substitution must have equal image lengths");
    if (cfg_.repeats.empty()) throw invalid_input("cascade needs at least one repetition level");
    std::uint64_t count = 1;
    digit_counts_.push_back(1);
    for (std::uint32_t m : cfg_.repeats) {
        if (m < 2) throw invalid_input("every repetition count must be >= 2");
        if (count > (std::uint64_t{1} << 24) / m)
            throw invalid_input("digit words would exceed 2^24 symbols; reduce depth or repeats");
        count *= m;
        digit_counts_.push_back(count);
    }
    if (cfg_.tail_mode != TailMode::zero &&
        !(cfg_.tail_constant > 0.0 && std::isfinite(cfg_.tail_constant)))
        throw invalid_input("tail constant must be positive and finite");
}

Cascade::Cascade(CascadeConfig cfg, TailFn custom_tails) : Cascade([&] {
    CascadeConfig c = std::move(cfg);
    c.tail_mode = TailMode::zero;  // pass base validation, then switch to custom
    return c;
}()) {
    if (!custom_tails) throw invalid_input("custom tail function must be callable");
    if (!(cfg_.tail_constant > 0.0 && std::isfinite(cfg_.tail_constant)))
        throw invalid_input("tail constant must be positive and finite");
    cfg_.tail_mode = TailMode::custom;
    tail_fn_ = std::move(custom_tails);
}

std::uint64_t Cascade::digit_count(std::uint32_t level) const {
    if (level > depth()) throw invalid_input("level exceeds cascade depth");
    return digit_counts_[level];
}

LetterPath Cascade::letter(std::uint32_t level, Word digits) const {
    if (digits.alphabet != cfg_.base.source)
        throw invalid_input("letter digits must live on the base source alphabet");
    if (digits.length() != digit_count(level))
        throw invalid_input("digit word length must equal the level's digit count");
    for (std::uint32_t d : digits.symbols)
        if (d >= cfg_.base.source.size) throw invalid_input("digit outside the base alphabet");
    return LetterPath{level, std::move(digits)};
}

LetterPath Cascade::zero_letter(std::uint32_t level) const {
    return LetterPath{level, Word(cfg_.base.source,
                                  std::vector<std::uint32_t>(digit_count(level), 0))};
}

std::vector<LetterPath> Cascade::respell(const LetterPath& a, std::uint32_t k) const {
    if (a.level > depth() || k > a.level)
        throw invalid_input("respelling requires 0 <= k <= letter level <= depth");
    std::uint64_t piece = digit_count(k);
    std::uint64_t pieces = digit_count(a.level) / piece;
    std::vector<LetterPath> out;
    out.reserve(pieces);
    for (std::uint64_t i = 0; i < pieces; ++i) {
        std::vector<std::uint32_t> slice(a.digits.symbols.begin() + static_cast<std::ptrdiff_t>(i * piece),
                                         a.digits.symbols.begin() + static_cast<std::ptrdiff_t>((i + 1) * piece));
        out.push_back(LetterPath{k, Word(cfg_.base.source, std::move(slice))});
    }
    return out;
}

std::uint64_t Cascade::tail_budget(const LetterPath& a) const {
    if (a.level == 0) throw invalid_input("level-0 letters carry no tail");
    if (cfg_.tail_mode == TailMode::zero) return 0;
    std::uint64_t child_sum = roof_sum_at_level(a, a.level - 1);
    double raw = cfg_.tail_constant * std::ldexp(static_cast<double>(child_sum),
                                                 -static_cast<int>(a.level));
    return static_cast<std::uint64_t>(std::floor(raw));
}

Word Cascade::tail_of(const LetterPath& a) const {
    std::uint64_t budget = tail_budget(a);
    Alphabet target = cfg_.base.target;
    Word tail(target, {});
    switch (cfg_.tail_mode) {
        case TailMode::zero:
            break;
        case TailMode::constant_budget:
        case TailMode::hash_varied: {
            std::uint64_t key = path_key(cfg_.tail_seed, a.level, a.digits.symbols);
            std::uint64_t len = budget;
            if (cfg_.tail_mode == TailMode::hash_varied && budget > 0)
                len = mix64(key) % (budget + 1);
            RngStream content(cfg_.tail_seed ^ 0x7461696c73ull, key);
            tail.symbols.reserve(len);
            for (std::uint64_t i = 0; i < len; ++i)
                tail.symbols.push_back(static_cast<std::uint32_t>(content.next_below(target.size)));
            break;
        }
        case TailMode::custom:
            tail = tail_fn_(a.level, a.digits, budget, target);
            break;
    }
    if (tail.alphabet != target)
        throw invalid_input("tail emitted on the wrong alphabet");
    if (tail.length() > budget)
        throw invalid_input("tail length exceeds the admissible budget; aborting");
    for (std::uint32_t s : tail.symbols)
        if (s >= target.size) throw invalid_input("tail symbol outside the target alphabet");
    return tail;
}

Word Cascade::image(const LetterPath& a) const {
    if (a.level == 0) return cfg_.base.image(a.digits.symbols.at(0));
    Word out(cfg_.base.target, {});
    out.symbols.reserve(roof_length(a));
    for (const LetterPath& child : respell(a, a.level - 1)) {
        Word piece = image(child);
        out.symbols.insert(out.symbols.end(), piece.symbols.begin(), piece.symbols.end());
    }
    Word tail = tail_of(a);
    out.symbols.insert(out.symbols.end(), tail.symbols.begin(), tail.symbols.end());
    return out;
}

std::uint64_t Cascade::roof_length(const LetterPath& a) const {
    if (a.level == 0) return cfg_.base.image_length(a.digits.symbols.at(0));
    bool memoize = digit_count(a.level) <= 16 && roof_memo_.size() < 100000;
    if (memoize) {
        auto it = roof_memo_.find({a.level, a.digits.symbols});
        if (it != roof_memo_.end()) return it->second;
    }
    std::uint64_t total = roof_sum_at_level(a, a.level - 1);
    switch (cfg_.tail_mode) {
        case TailMode::zero:
            break;
        case TailMode::constant_budget:
            total += tail_budget(a);
            break;
        case TailMode::hash_varied: {
            std::uint64_t budget = tail_budget(a);
            if (budget > 0)
                total += mix64(path_key(cfg_.tail_seed, a.level, a.digits.symbols)) % (budget + 1);
            break;
        }
        case TailMode::custom:
            // TailFn must be pure: length inquiries and image construction
            // both call it and must agree.
            total += tail_of(a).length();
            break;
    }
    if (memoize) roof_memo_[{a.level, a.digits.symbols}] = total;
    return total;
}

std::uint64_t Cascade::roof_sum_at_level(const LetterPath& a, std::uint32_t k) const {
    std::uint64_t sum = 0;
    for (const LetterPath& piece : respell(a, k)) sum += roof_length(piece);
    return sum;
}

bool Cascade::constant_roofs() const {
    return cfg_.tail_mode == TailMode::zero || cfg_.tail_mode == TailMode::constant_budget;
}

double Cascade::lift_prob(const BernoulliVector& p, const LetterPath& a) const {
    if (p.alphabet != cfg_.base.source)
        throw invalid_input("vector must live on the base source alphabet");
    double prob = 1.0;
    for (std::uint32_t d : a.digits.symbols) prob *= p[d];
    return prob;
}

LetterPath Cascade::sample_path(const BernoulliVector& p, std::uint32_t level,
                                RngStream& rng) const {
    if (p.alphabet != cfg_.base.source)
        throw invalid_input("vector must live on the base source alphabet");
    return LetterPath{level, sample_word(p, digit_count(level), rng)};
}

std::uint64_t Cascade::roof_upper_bound(std::uint32_t level) const {
    double base = static_cast<double>(digit_count(level)) * static_cast<double>(cfg_.base.max_len);
    if (cfg_.tail_mode == TailMode::zero) return static_cast<std::uint64_t>(base);
    return static_cast<std::uint64_t>(std::ceil(base * (1.0 + 4.0 * cfg_.tail_constant)));
}

std::vector<std::string> Cascade::growth_warnings() const {
    std::vector<std::string> notes;
    if (cfg_.tail_mode == TailMode::zero) return notes;
    // Budgets evaluated on the tail-free baseline; actual budgets are at
    // least as large, so "zero" notes are exact for the first zero level.
    std::uint64_t baseline = cfg_.base.max_len;
    for (std::uint32_t n = 1; n <= depth(); ++n) {
        baseline *= cfg_.repeats[n - 1];
        double raw = cfg_.tail_constant * std::ldexp(static_cast<double>(baseline), -static_cast<int>(n));
        if (std::floor(raw) < 1.0) {
            std::ostringstream os;
            os << "tail budget truncates to zero at level " << n
               << "; enlarge the base images or repetition counts to exercise tails";
            notes.push_back(os.str());
        }
    }
    for (std::uint32_t k = 0; k + 1 < depth(); ++k) {
        std::uint64_t remaining = 1;
        for (std::uint32_t j = k; j < depth(); ++j) remaining *= cfg_.repeats[j];
        std::uint64_t level_len = cfg_.base.max_len;
        for (std::uint32_t j = 0; j < k; ++j) level_len *= cfg_.repeats[j];
        if (level_len > remaining) {
            std::ostringstream os;
            os << "level-" << k << " images are longer than the remaining repetition factor "
               << remaining << "; block-average fluctuation bounds stay loose at this depth";
            notes.push_back(os.str());
        }
    }
    return notes;
}

SubstitutionMap level_substitution(const Cascade& c, std::uint32_t n, std::size_t size_cap) {
    std::uint64_t digits = c.digit_count(n);
    std::uint64_t letters = 1;
    for (std::uint64_t i = 0; i < digits; ++i) {
        letters *= c.base_alphabet().size;
        if (letters > size_cap)
            throw enumeration_cap_exceeded("level alphabet exceeds the enumeration cap");
    }
    std::vector<Word> images;
    images.reserve(letters);
    for (std::uint64_t idx = 0; idx < letters; ++idx) {
        std::vector<std::uint32_t> tuple(digits, 0);
        std::uint64_t rest = idx;
        for (std::uint64_t pos = digits; pos-- > 0;) {
            tuple[pos] = static_cast<std::uint32_t>(rest % c.base_alphabet().size);
            rest /= c.base_alphabet().size;
        }
        images.push_back(c.image(LetterPath{n, Word(c.base_alphabet(), std::move(tuple))}));
    }
    return SubstitutionMap(Alphabet{static_cast<std::uint32_t>(letters)}, c.target_alphabet(),
                           std::move(images));
}

BernoulliVector lift_vector_enumerable(const Cascade& c, const BernoulliVector& p,
                                       std::uint32_t n, std::size_t size_cap) {
    if (p.alphabet != c.base_alphabet())
        throw invalid_input("vector must live on the base source alphabet");
    std::uint64_t digits = c.digit_count(n);
    std::uint64_t letters = 1;
    for (std::uint64_t i = 0; i < digits; ++i) {
        letters *= p.alphabet.size;
        if (letters > size_cap)
            throw enumeration_cap_exceeded("level alphabet exceeds the enumeration cap");
    }
    std::vector<double> probs(letters, 0.0);
    for (std::uint64_t idx = 0; idx < letters; ++idx) {
        double prob = 1.0;
        std::uint64_t rest = idx;
        for (std::uint64_t pos = digits; pos-- > 0;) {
            prob *= p[static_cast<std::uint32_t>(rest % p.alphabet.size)];
            rest /= p.alphabet.size;
        }
        probs[idx] = prob;
    }
    return BernoulliVector(Alphabet{static_cast<std::uint32_t>(letters)}, std::move(probs));
}

std::string FluctuationStats::csv_header() {
    return "level,block_level,e_n,e_n_se,e_n_exact,e_k,e_k_se,samples,"
           "d_estimate,d_se,delta_nn_q50,delta_nn_q90,delta_nn_max,delta_nk_mean,delta_nk_max";
}

std::string FluctuationStats::csv_row() const {
    std::ostringstream os;
    os << level << ',' << block_level << ',' << format_double(e_n) << ',' << format_double(e_n_se)
       << ',' << (e_n_exact ? 1 : 0) << ',' << format_double(e_k) << ',' << format_double(e_k_se)
       << ',' << delta_nn.size() << ',' << format_double(d_estimate) << ',' << format_double(d_se)
       << ',' << format_double(quantile(delta_nn, 0.5)) << ',' << format_double(quantile(delta_nn, 0.9))
       << ',' << format_double(delta_nn.empty() ? 0.0 : *std::max_element(delta_nn.begin(), delta_nn.end()))
       << ',' << format_double(sample_mean(delta_nk))
       << ',' << format_double(delta_nk.empty() ? 0.0 : *std::max_element(delta_nk.begin(), delta_nk.end()));
    return os.str();
}

std::string FluctuationStats::to_json() const {
    nlohmann::json j;
    j["level"] = level;
    j["block_level"] = block_level;
    j["e_n"] = e_n;
    j["e_n_se"] = e_n_se;
    j["e_n_exact"] = e_n_exact;
    j["e_k"] = e_k;
    j["e_k_se"] = e_k_se;
    j["samples"] = delta_nn.size();
    j["d_estimate"] = d_estimate;
    j["d_se"] = d_se;
    j["delta_nn_quantiles"] = {{"q50", quantile(delta_nn, 0.5)},
                               {"q90", quantile(delta_nn, 0.9)},
                               {"max", delta_nn.empty()
                                           ? 0.0
                                           : *std::max_element(delta_nn.begin(), delta_nn.end())}};
    j["delta_nk_mean"] = sample_mean(delta_nk);
    return j.dump();
}

FluctuationStats fluctuations(const Cascade& c, const BernoulliVector& p, std::uint32_t n,
                              std::uint32_t k, std::size_t samples, RngStream& rng) {
    if (n == 0 || n > c.depth() || k > n) throw invalid_input("fluctuations need 0 <= k <= n <= depth, n >= 1");
    if (samples < 2) throw invalid_input("fluctuations need at least two samples");
    FluctuationStats out;
    out.level = n;
    out.block_level = k;

    auto expected_roof = [&](std::uint32_t level, RngStream sub, double& value, double& se,
                             bool& exact) {
        if (c.constant_roofs()) {
            value = static_cast<double>(c.roof_length(c.zero_letter(level)));
            se = 0.0;
            exact = true;
            return;
        }
        std::vector<double> roofs;
        roofs.reserve(samples);
        for (std::size_t i = 0; i < samples; ++i)
            roofs.push_back(static_cast<double>(c.roof_length(c.sample_path(p, level, sub))));
        value = sample_mean(roofs);
        se = mean_std_error(roofs);
        exact = false;
    };

    bool ek_exact = false;
    expected_roof(n, rng.split(1), out.e_n, out.e_n_se, out.e_n_exact);
    expected_roof(k, rng.split(2), out.e_k, out.e_k_se, ek_exact);

    RngStream sub = rng.split(3);
    std::uint64_t blocks = c.digit_count(n) / c.digit_count(k);
    out.delta_nn.reserve(samples);
    out.delta_nk.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        LetterPath a = c.sample_path(p, n, sub);
        double roof = static_cast<double>(c.roof_length(a));
        out.delta_nn.push_back(std::abs(out.e_n - roof) / out.e_n);
        double block_avg = static_cast<double>(c.roof_sum_at_level(a, k)) / static_cast<double>(blocks);
        out.delta_nk.push_back(std::abs(out.e_k - block_avg) / out.e_k);
    }
    out.d_estimate = sample_mean(out.delta_nn);
    out.d_se = mean_std_error(out.delta_nn);
    return out;
}

namespace {

// Union bound over sequence lengths at deviation threshold L: exact partial
// sums closed with the geometric majorant term(len) <= exp(-min(delta^2,
// 3delta/4) * len).
double lln_series(std::uint32_t card, double delta, double L) {
    double decay = std::min(delta * delta, 0.75 * delta);
    double acc = 0.0;
    for (std::uint64_t len = 1; len <= 100000000ull; ++len) {
        double a = static_cast<double>(len) * delta + L;
        double term = std::exp(-6.0 * a * a / (3.0 * static_cast<double>(len) + 4.0 * a));
        acc += term;
        double tail = std::exp(-decay * static_cast<double>(len + 1)) / (1.0 - std::exp(-decay));
        if (tail < 1e-18) {
            acc += tail;
            break;
        }
    }
    return 2.0 * static_cast<double>(card) * acc;
}

}  // namespace

double bernstein_lln_constant(std::uint32_t alphabet_size, double delta) {
    if (alphabet_size == 0) throw invalid_input("alphabet must be nonempty");
    if (!(delta > 0.0 && delta < 1.0)) throw invalid_input("delta must lie in (0,1)");
    if (lln_series(alphabet_size, delta, 0.0) <= delta) return 0.0;
    double lo = 0.0, hi = 1.0;
    while (lln_series(alphabet_size, delta, hi) > delta) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12) throw invalid_input("deviation constant search diverged");
    }
    for (int i = 0; i < 80; ++i) {
        double mid = 0.5 * (lo + hi);
        if (lln_series(alphabet_size, delta, mid) <= delta)
            hi = mid;
        else
            lo = mid;
    }
    return hi;  // upper end keeps the series guarantee
}

std::string LlnReport::to_json() const {
    nlohmann::json j;
    j["L"] = L;
    j["delta"] = delta;
    j["alphabet_size"] = alphabet_size;
    j["series_value"] = series_value;
    j["trials"] = trials;
    j["horizon"] = horizon;
    j["good_mass"] = good_mass;
    j["good_mass_se"] = good_mass_se;
    return j.dump();
}

LlnReport lln_check(const BernoulliVector& p, double delta, double L, std::size_t trials,
                    std::size_t horizon, RngStream& rng) {
    if (!(delta > 0.0 && delta < 1.0)) throw invalid_input("delta must lie in (0,1)");
    if (L < 0.0) throw invalid_input("deviation constant must be >= 0");
    if (trials == 0 || horizon == 0) throw invalid_input("trials and horizon must be positive");
    LlnReport rep;
    rep.L = L;
    rep.delta = delta;
    rep.alphabet_size = p.alphabet.size;
    rep.series_value = lln_series(p.alphabet.size, delta, L);
    rep.trials = trials;
    rep.horizon = horizon;

    std::size_t good = 0;
    std::vector<std::uint64_t> counts(p.alphabet.size);
    for (std::size_t t = 0; t < trials; ++t) {
        std::fill(counts.begin(), counts.end(), 0);
        bool inside = true;
        for (std::size_t len = 1; len <= horizon && inside; ++len) {
            counts[sample_letter(p, rng)] += 1;
            double slack = L + static_cast<double>(len) * delta;
            for (std::uint32_t a = 0; a < p.alphabet.size; ++a) {
                double dev = std::abs(static_cast<double>(counts[a]) -
                                      static_cast<double>(len) * p[a]);
                if (!(dev < slack)) {
                    inside = false;
                    break;
                }
            }
        }
        if (inside) ++good;
    }
    rep.good_mass = static_cast<double>(good) / static_cast<double>(trials);
    rep.good_mass_se = std::sqrt(rep.good_mass * (1.0 - rep.good_mass) /
                                 static_cast<double>(trials));
    return rep;
}

Word sample_nu_n(const Cascade& c, const BernoulliVector& p, std::uint32_t n,
                 std::size_t length, RngStream& rng) {
    if (n > c.depth()) throw invalid_input("level exceeds cascade depth");
    Word out(c.target_alphabet(), {});
    out.symbols.reserve(length);
    if (length == 0) return out;

    // Length-biased anchor by acceptance-rejection against the certified
    // roof bound, then a uniform phase inside the anchor image. Continuation
    // letters are plain i.i.d. lifts. Only one image is held at a time.
    double bound = static_cast<double>(c.roof_upper_bound(n));
    LetterPath anchor = c.sample_path(p, n, rng);
    while (rng.next_unit() * bound >= static_cast<double>(c.roof_length(anchor)))
        anchor = c.sample_path(p, n, rng);
    Word img = c.image(anchor);
    std::size_t phase = static_cast<std::size_t>(rng.next_below(img.length()));
    for (std::size_t i = phase; i < img.length() && out.symbols.size() < length; ++i)
        out.symbols.push_back(img.symbols[i]);
    while (out.symbols.size() < length) {
        img = c.image(c.sample_path(p, n, rng));
        for (std::size_t i = 0; i < img.length() && out.symbols.size() < length; ++i)
            out.symbols.push_back(img.symbols[i]);
    }
    return out;
}

std::string NuEntropy::to_json() const {
    nlohmann::json j;
    j["value"] = value;
    j["value_se"] = value_se;
    j["floor_bound"] = floor_bound;
    j["exact"] = exact;
    return j.dump();
}

NuEntropy nu_entropy(const Cascade& c, const BernoulliVector& p, std::uint32_t n,
                     std::size_t samples, RngStream* rng) {
    if (n > c.depth()) throw invalid_input("level exceeds cascade depth");
    if (p.alphabet != c.base_alphabet())
        throw invalid_input("vector must live on the base source alphabet");
    double h = shannon_entropy(p);
    double digits = static_cast<double>(c.digit_count(n));
    NuEntropy out;
    double K = c.config().tail_mode == TailMode::zero ? 0.0 : c.config().tail_constant;
    out.floor_bound = h * std::exp(-4.0 * K) / static_cast<double>(c.config().base.max_len);
    if (c.constant_roofs()) {
        double e_n = static_cast<double>(c.roof_length(c.zero_letter(n)));
        out.value = digits * h / e_n;
        out.exact = true;
        return out;
    }
    if (samples < 2 || rng == nullptr)
        throw invalid_input("varying roofs need samples >= 2 and an rng to estimate the mean roof");
    std::vector<double> roofs;
    roofs.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i)
        roofs.push_back(static_cast<double>(c.roof_length(c.sample_path(p, n, *rng))));
    double e_n = sample_mean(roofs);
    double e_se = mean_std_error(roofs);
    out.value = digits * h / e_n;
    out.value_se = out.value * e_se / e_n;
    return out;
}

std::string FbarBoundReport::csv_header() {
    return "tail_constant,k,kickoff,level_gap,cross_vector";
}

std::string FbarBoundReport::csv_row() const {
    std::ostringstream os;
    os << format_double(tail_constant) << ',' << k << ',' << format_double(kickoff) << ','
       << format_double(level_gap) << ',' << format_double(cross_vector);
    return os.str();
}

std::string FbarBoundReport::to_json() const {
    nlohmann::json j;
    j["tail_constant"] = tail_constant;
    j["k"] = k;
    j["kickoff"] = kickoff;
    j["kickoff_formula"] = "6K + 8K^2";
    j["level_gap"] = level_gap;
    j["level_gap_formula"] = "4K * 2^-k";
    j["cross_vector"] = cross_vector;
    j["cross_vector_formula"] = "(1+4K)/2 * l1(p,q)";
    return j.dump();
}

FbarBoundReport level_fbar_bounds(const Cascade& c, const BernoulliVector& p,
                                  const BernoulliVector& q, std::uint32_t k) {
    if (k > c.depth()) throw invalid_input("level exceeds cascade depth");
    if (p.alphabet != c.base_alphabet() || q.alphabet != c.base_alphabet())
        throw invalid_input("vectors must live on the base source alphabet");
    double K = c.config().tail_mode == TailMode::zero ? 0.0 : c.config().tail_constant;
    FbarBoundReport rep;
    rep.tail_constant = K;
    rep.k = k;
    rep.kickoff = 6.0 * K + 8.0 * K * K;
    rep.level_gap = 4.0 * K * std::ldexp(1.0, -static_cast<int>(k));
    rep.cross_vector = 0.5 * (1.0 + 4.0 * K) * city_metric(p, q);
    return rep;
}

std::string to_json(const CascadeConfig& cfg) {
    if (cfg.tail_mode == TailMode::custom)
        throw invalid_input("custom tail providers are not serializable");
    nlohmann::json j;
    j["base"] = nlohmann::json::parse(to_json(cfg.base));
    j["repeats"] = cfg.repeats;
    j["tail_constant"] = cfg.tail_constant;
    j["tail_mode"] = cfg.tail_mode == TailMode::zero
                         ? "zero"
                         : (cfg.tail_mode == TailMode::constant_budget ? "constant_budget"
                                                                       : "hash_varied");
    j["tail_seed"] = cfg.tail_seed;
    return j.dump();
}

CascadeConfig cascade_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    SubstitutionMap base = substitution_from_json(j.at("base").dump());
    CascadeConfig cfg{std::move(base), j.at("repeats").get<std::vector<std::uint32_t>>(),
                      j.at("tail_constant").get<double>(), TailMode::zero,
                      j.value("tail_seed", std::uint64_t{0})};
    std::string mode = j.at("tail_mode").get<std::string>();
    if (mode == "zero")
        cfg.tail_mode = TailMode::zero;
    else if (mode == "constant_budget")
        cfg.tail_mode = TailMode::constant_budget;
    else if (mode == "hash_varied")
        cfg.tail_mode = TailMode::hash_varied;
    else
        throw invalid_input("unknown tail mode: " + mode);
    return cfg;
}

}  // namespace ergolab
