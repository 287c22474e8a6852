#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "ergolab/fbar.hpp"
#include "ergolab/substitution.hpp"

using namespace ergolab;

namespace {

const Alphabet kBin{2};
const Alphabet kTri{3};

SubstitutionMap swap_pair() {
    // 0 -> xy, 1 -> yx over a binary target.
    return SubstitutionMap(kBin, kBin, {Word(kBin, {0, 1}), Word(kBin, {1, 0})});
}

SubstitutionMap short_long() {
    // 0 -> x, 1 -> yy: the smallest genuinely length-mixing example.
    return SubstitutionMap(kBin, kBin, {Word(kBin, {0}), Word(kBin, {1, 1})});
}

SubstitutionMap random_substitution(RngStream& rng, std::uint32_t src, std::uint32_t tgt,
                                    std::size_t max_len) {
    std::vector<Word> images;
    for (std::uint32_t a = 0; a < src; ++a) {
        const std::size_t len = 1 + static_cast<std::size_t>(rng.next_below(max_len));
        images.push_back(sample_word(uniform_vector(Alphabet{tgt}), len, rng));
    }
    return SubstitutionMap(Alphabet{src}, Alphabet{tgt}, std::move(images));
}

BernoulliVector random_vector(RngStream& rng, std::uint32_t size) {
    std::vector<double> v(size);
    double z = 0.0;
    for (double& x : v) {
        x = 0.1 + rng.next_unit();
        z += x;
    }
    for (double& x : v) x /= z;
    return BernoulliVector(Alphabet{size}, std::move(v));
}

// Exhaustive check values by direct enumeration over source words long enough
// to cover the cylinder, including every anchor phase for the stationary
// variant. Independent of the production dynamic program.
double kappa_bruteforce(const CodedMeasureSpec& spec, const std::vector<std::uint32_t>& w) {
    const SubstitutionMap& rho = spec.substitution;
    const std::size_t letters = w.size() + 2; // images have length >= 1
    const std::uint32_t s = rho.source.size;
    std::size_t total = 1;
    for (std::size_t i = 0; i < letters; ++i) total *= s;

    double acc = 0.0;
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        std::vector<std::uint32_t> src(letters);
        double pr = 1.0;
        for (std::size_t i = 0; i < letters; ++i) {
            src[i] = static_cast<std::uint32_t>(c % s);
            pr *= spec.base.probs[src[i]];
            c /= s;
        }
        std::vector<std::uint32_t> img;
        for (std::uint32_t a : src) {
            const Word& im = rho.image(a);
            img.insert(img.end(), im.symbols.begin(), im.symbols.end());
        }
        auto matches_at = [&](std::size_t from) {
            for (std::size_t t = 0; t < w.size(); ++t) {
                if (img[from + t] != w[t]) return false;
            }
            return true;
        };
        if (spec.variant == CodedVariant::plain) {
            if (matches_at(0)) acc += pr;
        } else {
            // Weight 1/E per phase of the zeroth image.
            const std::size_t len0 = rho.image_length(src[0]);
            for (std::size_t j = 0; j < len0; ++j) {
                if (matches_at(j)) acc += pr;
            }
        }
    }
    if (spec.variant == CodedVariant::shift_invariant) {
        acc /= mean_image_length(rho, spec.base);
    }
    return acc;
}

} // namespace

TEST_CASE("substitution map validates shape and exposes lengths") {
    SubstitutionMap rho = short_long();
    CHECK(rho.min_len == 1);
    CHECK(rho.max_len == 2);
    CHECK(rho.image(1).symbols == std::vector<std::uint32_t>{1, 1});
    CHECK_THROWS_AS(SubstitutionMap(kBin, kBin, {Word(kBin, {0})}), invalid_input);
    CHECK_THROWS_AS(SubstitutionMap(kBin, kBin, {Word(kBin, {0}), Word(kBin, {})}),
                    invalid_input);
    CHECK_THROWS_AS(SubstitutionMap(kBin, kTri, {Word(kBin, {0}), Word(kBin, {1})}),
                    invalid_input);
    CHECK_THROWS_AS(rho.image(7), invalid_input);
}

TEST_CASE("apply_substitution concatenates images in order") {
    const SubstitutionMap rho = swap_pair();
    const Word w = apply_substitution(rho, Word(kBin, {0, 1, 1}));
    CHECK(w.symbols == std::vector<std::uint32_t>{0, 1, 1, 0, 1, 0});
    CHECK(apply_substitution(rho, Word(kBin, {})).length() == 0);
    CHECK_THROWS_AS(apply_substitution(rho, Word(kTri, {2})), invalid_input);
}

TEST_CASE("kappa_cylinder hand values for the swap substitution") {
    const BernoulliVector fair(kBin, {0.5, 0.5});
    const CodedMeasureSpec plain(swap_pair(), fair, CodedVariant::plain);
    const CodedMeasureSpec stat(swap_pair(), fair, CodedVariant::shift_invariant);

    CHECK(kappa_cylinder(plain, CylinderSpec{Word(kBin, {})}) == doctest::Approx(1.0));
    CHECK(kappa_cylinder(plain, CylinderSpec{Word(kBin, {0})}) == doctest::Approx(0.5));
    CHECK(kappa_cylinder(plain, CylinderSpec{Word(kBin, {0, 1})}) == doctest::Approx(0.5));
    // An anchored stream starts with a full image, so xx is impossible at 0.
    CHECK(kappa_cylinder(plain, CylinderSpec{Word(kBin, {0, 0})}) == doctest::Approx(0.0));

    // Stationary values: offset average over both images.
    CHECK(kappa_cylinder(stat, CylinderSpec{Word(kBin, {0})}) == doctest::Approx(0.5));
    CHECK(kappa_cylinder(stat, CylinderSpec{Word(kBin, {0, 0})}) == doctest::Approx(0.125));
    CHECK(kappa_cylinder(stat, CylinderSpec{Word(kBin, {0, 1})}) == doctest::Approx(0.375));
}

TEST_CASE("kappa_cylinder matches brute-force enumeration") {
    RngStream rng(4242, 0);
    for (int trial = 0; trial < 24; ++trial) {
        RngStream local = rng.split(static_cast<std::uint64_t>(trial));
        const std::uint32_t src = 2 + static_cast<std::uint32_t>(local.next_below(2));
        const std::uint32_t tgt = 2 + static_cast<std::uint32_t>(local.next_below(2));
        const SubstitutionMap rho = random_substitution(local, src, tgt, 3);
        const BernoulliVector p = random_vector(local, src);
        const std::size_t depth = 1 + static_cast<std::size_t>(local.next_below(4));
        const Word w = sample_word(uniform_vector(Alphabet{tgt}), depth, local);
        for (CodedVariant v : {CodedVariant::plain, CodedVariant::shift_invariant}) {
            const CodedMeasureSpec spec(rho, p, v);
            const double got = kappa_cylinder(spec, CylinderSpec{w});
            const double want = kappa_bruteforce(spec, w.symbols);
            CHECK(got == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("stationary kappa is shift invariant, anchored kappa is not") {
    RngStream rng(555, 0);
    for (int trial = 0; trial < 16; ++trial) {
        RngStream local = rng.split(static_cast<std::uint64_t>(trial));
        const SubstitutionMap rho = random_substitution(local, 2, 2, 3);
        const BernoulliVector p = random_vector(local, 2);
        const CodedMeasureSpec stat(rho, p, CodedVariant::shift_invariant);
        const Word w = sample_word(uniform_vector(kBin), 3, local);
        // mu([w]) = sum_b mu([b w]) is exactly shift invariance on cylinders.
        double shifted = 0.0;
        for (std::uint32_t b = 0; b < 2; ++b) {
            std::vector<std::uint32_t> bw = {b};
            bw.insert(bw.end(), w.symbols.begin(), w.symbols.end());
            shifted += kappa_cylinder(stat, CylinderSpec{Word(kBin, bw)});
        }
        const double direct = kappa_cylinder(stat, CylinderSpec{w});
        CHECK(std::abs(direct - shifted) < 1e-12);
    }

    // Length-mixing anchored counterexample: [1] has mass 1/2 but sigma^{-1}[1]
    // has mass 3/4 under the anchored stream.
    const CodedMeasureSpec plain(short_long(), BernoulliVector(kBin, {0.5, 0.5}),
                                 CodedVariant::plain);
    const double direct = kappa_cylinder(plain, CylinderSpec{Word(kBin, {1})});
    const double shifted =
        kappa_cylinder(plain, CylinderSpec{Word(kBin, {0, 1})}) +
        kappa_cylinder(plain, CylinderSpec{Word(kBin, {1, 1})});
    CHECK(std::abs(direct - shifted) > 0.05);
}

TEST_CASE("kappa_cylinder depth cap raises enumeration_cap_exceeded") {
    const CodedMeasureSpec spec(swap_pair(), BernoulliVector(kBin, {0.5, 0.5}),
                                CodedVariant::plain);
    RngStream rng(1, 1);
    const Word deep = sample_word(uniform_vector(kBin), 33, rng);
    CHECK_THROWS_AS(kappa_cylinder(spec, CylinderSpec{deep}), enumeration_cap_exceeded);
    CHECK_NOTHROW(kappa_cylinder(spec, CylinderSpec{deep}, 64));
}

TEST_CASE("sampled block statistics match exact cylinder masses") {
    RngStream rng(90210, 0);
    const std::vector<CodedMeasureSpec> specs = {
        CodedMeasureSpec(short_long(), BernoulliVector(kBin, {0.6, 0.4}),
                         CodedVariant::shift_invariant),
        CodedMeasureSpec(short_long(), BernoulliVector(kBin, {0.6, 0.4}),
                         CodedVariant::plain),
        CodedMeasureSpec(
            SubstitutionMap(kBin, kTri, {Word(kTri, {0, 2}), Word(kTri, {1, 2, 1})}),
            BernoulliVector(kBin, {0.3, 0.7}), CodedVariant::shift_invariant),
    };
    for (std::size_t si = 0; si < specs.size(); ++si) {
        const CodedMeasureSpec& spec = specs[si];
        // One long window per batch; batch means give an honest standard error
        // under the stream's short-range dependence.
        const std::size_t batches = 64;
        const std::size_t window = 4096;
        const std::size_t depth = 2;
        std::map<std::vector<std::uint32_t>, std::vector<double>> freq;
        for (std::size_t b = 0; b < batches; ++b) {
            RngStream local = rng.split(1000 * si + b);
            const Word w = sample_coded(spec, window, local);
            std::map<std::vector<std::uint32_t>, double> counts;
            for (std::size_t i = 0; i + depth <= w.length(); ++i) {
                counts[{w.symbols.begin() + i, w.symbols.begin() + i + depth}] += 1.0;
            }
            for (auto& [block, c] : counts) {
                auto& v = freq[block];
                v.resize(batches, 0.0);
                v[b] = c / static_cast<double>(window - depth + 1);
            }
        }
        for (const auto& [block, per_batch] : freq) {
            double mean = 0.0;
            for (double v : per_batch) mean += v;
            mean /= static_cast<double>(batches);
            double var = 0.0;
            for (double v : per_batch) var += (v - mean) * (v - mean);
            const double se =
                std::sqrt(var / static_cast<double>(batches - 1) /
                          static_cast<double>(batches));
            double exact = 0.0;
            if (spec.variant == CodedVariant::plain) {
                // An anchored stream is not stationary; compare against the
                // stationary variant, which has the same block frequencies in
                // the long-window limit. The anchor perturbs O(max_len/window).
                const CodedMeasureSpec stat(spec.substitution, spec.base,
                                            CodedVariant::shift_invariant);
                exact = kappa_cylinder(stat, CylinderSpec{Word(spec.substitution.target,
                                                               block)});
            } else {
                exact = kappa_cylinder(spec, CylinderSpec{Word(spec.substitution.target,
                                                               block)});
            }
            CHECK(std::abs(mean - exact) <
                  4.0 * se + 2.0 * static_cast<double>(spec.substitution.max_len) /
                                 static_cast<double>(window));
        }
    }
}

TEST_CASE("anchored and stationary streams couple to vanishing edit distance") {
    // Shared source letters realize a joining: the two streams differ by a
    // phase shift of at most one image, so the window edit cost is O(max_len/n).
    RngStream rng(31337, 0);
    const SubstitutionMap rho(kBin, kTri, {Word(kTri, {0, 1}), Word(kTri, {2, 0, 1})});
    const BernoulliVector p(kBin, {0.55, 0.45});
    const std::size_t window = std::size_t{1} << 14;
    double worst = 0.0;
    for (int trial = 0; trial < 8; ++trial) {
        RngStream local = rng.split(static_cast<std::uint64_t>(trial));
        // Stationary anchor: length-biased letter and uniform phase.
        std::uint32_t anchor;
        do {
            anchor = sample_letter(p, local);
        } while (local.next_unit() * static_cast<double>(rho.max_len) >=
                 static_cast<double>(rho.image_length(anchor)));
        const std::size_t phase =
            static_cast<std::size_t>(local.next_below(rho.image_length(anchor)));

        std::vector<std::uint32_t> plain_stream;
        std::vector<std::uint32_t> stat_stream;
        const Word& head = rho.image(anchor);
        stat_stream.insert(stat_stream.end(), head.symbols.begin() + phase,
                           head.symbols.end());
        while (plain_stream.size() < window || stat_stream.size() < window) {
            const Word& img = rho.image(sample_letter(p, local));
            plain_stream.insert(plain_stream.end(), img.symbols.begin(), img.symbols.end());
            stat_stream.insert(stat_stream.end(), img.symbols.begin(), img.symbols.end());
        }
        plain_stream.resize(window);
        stat_stream.resize(window);
        const double d = edit_distance_n(Word(kTri, plain_stream), Word(kTri, stat_stream));
        worst = std::max(worst, d);
    }
    CHECK(worst < 2.0 * static_cast<double>(rho.max_len) / static_cast<double>(window) +
                      1e-12);
    CHECK(worst < 0.05);
}

TEST_CASE("tilde_vector is the image-length bias") {
    const BernoulliVector p(kBin, {0.5, 0.5});
    const BernoulliVector t1 = tilde_vector(swap_pair(), p);
    CHECK(t1.probs[0] == doctest::Approx(0.5));
    const BernoulliVector t2 = tilde_vector(short_long(), p);
    CHECK(t2.probs[0] == doctest::Approx(1.0 / 3.0));
    CHECK(t2.probs[1] == doctest::Approx(2.0 / 3.0));
    CHECK(mean_image_length(short_long(), p) == doctest::Approx(1.5));
}

TEST_CASE("substitution perturbation bound checks subsequence embedding") {
    const SubstitutionMap full(kBin, kBin,
                               {Word(kBin, {0, 1, 0, 1}), Word(kBin, {1, 1, 0})});
    const SubstitutionMap cut(kBin, kBin, {Word(kBin, {0, 0, 1}), Word(kBin, {1, 1, 0})});
    // 001 embeds in 0101 keeping 3 of 4 letters: C = 1/4.
    CHECK(substitution_perturbation_bound(full, cut) == doctest::Approx(0.25));
    CHECK(substitution_perturbation_bound(full, full) == doctest::Approx(0.0));
    const SubstitutionMap bad(kBin, kBin, {Word(kBin, {1, 0, 0}), Word(kBin, {1, 1, 0})});
    CHECK_THROWS_AS(substitution_perturbation_bound(full, bad), invalid_input);
}

TEST_CASE("vector perturbation bound scales the base distance by the length ratio") {
    const BernoulliVector p(kBin, {0.5, 0.5});
    const BernoulliVector q(kBin, {0.75, 0.25});
    CHECK(vector_perturbation_bound(swap_pair(), p, q) == doctest::Approx(0.25));
    CHECK(vector_perturbation_bound(short_long(), p, q) == doctest::Approx(0.5));
    CHECK(vector_perturbation_bound(short_long(), p, p) == doctest::Approx(0.0));
}

TEST_CASE("regrouping preserves coded cylinder masses exactly") {
    RngStream rng(777, 0);
    for (int trial = 0; trial < 10; ++trial) {
        RngStream local = rng.split(static_cast<std::uint64_t>(trial));
        const SubstitutionMap rho = random_substitution(local, 2, 2, 3);
        const BernoulliVector p = random_vector(local, 2);
        const auto [rho2, p2] = regroup_power(rho, p, 2);
        CHECK(rho2.source.size == 4);
        const auto [rho3, p3] = regroup_power(rho, p, 3);
        for (CodedVariant v : {CodedVariant::plain, CodedVariant::shift_invariant}) {
            const CodedMeasureSpec base(rho, p, v);
            const CodedMeasureSpec grouped2(rho2, p2, v);
            const CodedMeasureSpec grouped3(rho3, p3, v);
            for (std::size_t depth = 1; depth <= 5; ++depth) {
                const Word w = sample_word(uniform_vector(kBin), depth, local);
                const double want = kappa_cylinder(base, CylinderSpec{w});
                CHECK(kappa_cylinder(grouped2, CylinderSpec{w}) ==
                      doctest::Approx(want).epsilon(1e-12));
                CHECK(kappa_cylinder(grouped3, CylinderSpec{w}) ==
                      doctest::Approx(want).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("regrouping composes images and probabilities") {
    const BernoulliVector p(kBin, {0.25, 0.75});
    const auto [rho2, p2] = regroup_power(short_long(), p, 2);
    // Tuple (a0,a1) has big-endian index 2*a0 + a1.
    CHECK(rho2.image(1).symbols == std::vector<std::uint32_t>{0, 1, 1});  // x then yy
    CHECK(rho2.image(2).symbols == std::vector<std::uint32_t>{1, 1, 0});  // yy then x
    CHECK(p2.probs[3] == doctest::Approx(0.5625));
    CHECK(tuple_to_letter(kBin, {1, 0}) == 2);
    CHECK(letter_to_tuple(kBin, 2, 2) == std::vector<std::uint32_t>{1, 0});
    CHECK_THROWS_AS(regroup_power(short_long(), p, 25), enumeration_cap_exceeded);
}

TEST_CASE("image transport contracts edit distance up to the length ratio") {
    RngStream rng(2024, 7);
    const Alphabet src{4};
    const BernoulliVector usrc = uniform_vector(src);

    // Constant image lengths: the image edit distance never exceeds the
    // source edit distance.
    const SubstitutionMap even(
        src, kBin,
        {Word(kBin, {0, 0}), Word(kBin, {0, 1}), Word(kBin, {1, 0}), Word(kBin, {1, 1})});
    for (int trial = 0; trial < 12; ++trial) {
        RngStream local = rng.split(static_cast<std::uint64_t>(trial));
        const Word a = sample_word(usrc, 96, local);
        const Word b = sample_word(usrc, 96, local);
        const double dsrc = edit_distance_n(a, b);
        const double dimg =
            edit_distance_n(apply_substitution(even, a), apply_substitution(even, b));
        CHECK(dimg <= dsrc + 1e-12);
    }

    // Mixed lengths: normalized by the longer image word, the distance obeys
    // both the ratio-slope bound with a boundary term and the
    // common-subsequence bound 1 - (min/max)(1 - dsrc).
    const SubstitutionMap mixed(
        src, kBin,
        {Word(kBin, {0}), Word(kBin, {0, 1}), Word(kBin, {1, 1, 0}), Word(kBin, {1})});
    const double ratio = static_cast<double>(mixed.max_len) /
                         static_cast<double>(mixed.min_len);
    for (int trial = 0; trial < 12; ++trial) {
        RngStream local = rng.split(100 + static_cast<std::uint64_t>(trial));
        const Word a = sample_word(usrc, 96, local);
        const Word b = sample_word(usrc, 96, local);
        const double dsrc = edit_distance_n(a, b);
        const Word ia = apply_substitution(mixed, a);
        const Word ib = apply_substitution(mixed, b);
        const std::size_t longer = std::max(ia.length(), ib.length());
        const double lcs = static_cast<double>(lcs_length(ia.symbols, ib.symbols));
        const double dimg = 1.0 - lcs / static_cast<double>(longer);
        CHECK(dimg <= (1.0 - 1.0 / ratio) + (1.0 / ratio) * dsrc + 1e-12);
        CHECK(dimg <= ratio * dsrc +
                          4.0 * static_cast<double>(mixed.max_len) /
                              static_cast<double>(longer) +
                          1e-12);
    }
}

TEST_CASE("substitution JSON round trip") {
    const SubstitutionMap rho(kBin, kTri, {Word(kTri, {0, 2}), Word(kTri, {1})});
    const SubstitutionMap back = substitution_from_json(to_json(rho));
    CHECK(back.source.size == 2);
    CHECK(back.target.size == 3);
    CHECK(back.image(0).symbols == std::vector<std::uint32_t>{0, 2});
    CHECK(back.image(1).symbols == std::vector<std::uint32_t>{1});
    CHECK_THROWS(substitution_from_json("{\"source_size\": 2}"));
}
