#include "ergolab/substitution.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace ergolab {

SubstitutionMap::SubstitutionMap(Alphabet src, Alphabet tgt, std::vector<Word> imgs)
    : source(src), target(tgt), images(std::move(imgs)) {
    if (images.size() != source.size) {
        throw invalid_input("substitution needs one image per source letter");
    }
    min_len = SIZE_MAX;
    max_len = 0;
    for (const Word& w : images) {
        if (w.alphabet.size != target.size) {
            throw invalid_input("substitution image over wrong alphabet");
        }
        if (w.length() == 0) {
            throw invalid_input("substitution image must be nonempty");
        }
        min_len = std::min(min_len, w.length());
        max_len = std::max(max_len, w.length());
    }
}

const Word& SubstitutionMap::image(std::uint32_t letter) const {
    if (letter >= source.size) throw invalid_input("letter outside source alphabet");
    return images[letter];
}

std::size_t SubstitutionMap::image_length(std::uint32_t letter) const {
    return image(letter).length();
}

double mean_image_length(const SubstitutionMap& rho, const BernoulliVector& p) {
    if (p.alphabet.size != rho.source.size) {
        throw invalid_input("base vector alphabet does not match substitution source");
    }
    double e = 0.0;
    for (std::uint32_t a = 0; a < rho.source.size; ++a) {
        e += static_cast<double>(rho.image_length(a)) * p.probs[a];
    }
    return e;
}

CodedMeasureSpec::CodedMeasureSpec(SubstitutionMap rho, BernoulliVector p, CodedVariant v)
    : substitution(std::move(rho)), base(std::move(p)), variant(v) {
    if (base.alphabet.size != substitution.source.size) {
        throw invalid_input("base vector alphabet does not match substitution source");
    }
}

Word apply_substitution(const SubstitutionMap& rho, const Word& w) {
    if (w.alphabet.size != rho.source.size) {
        throw invalid_input("word alphabet does not match substitution source");
    }
    std::vector<std::uint32_t> out;
    std::size_t total = 0;
    for (std::uint32_t a : w.symbols) total += rho.image_length(a);
    out.reserve(total);
    for (std::uint32_t a : w.symbols) {
        const Word& img = rho.image(a);
        out.insert(out.end(), img.symbols.begin(), img.symbols.end());
    }
    return Word(rho.target, std::move(out));
}

namespace {

// True when the image of `letter`, read from `phase`, agrees with the target
// word from position `at` for as long as both run.
bool image_matches(const SubstitutionMap& rho, std::uint32_t letter, std::size_t phase,
                   const std::vector<std::uint32_t>& w, std::size_t at) {
    const Word& img = rho.image(letter);
    const std::size_t run = std::min(img.length() - phase, w.size() - at);
    for (std::size_t t = 0; t < run; ++t) {
        if (img.symbols[phase + t] != w[at + t]) return false;
    }
    return true;
}

// cont[k] = probability that a fresh image concatenation (letters i.i.d. p,
// anchored at position k of w) agrees with w from position k on.
std::vector<double> continuation_table(const SubstitutionMap& rho, const BernoulliVector& p,
                                       const std::vector<std::uint32_t>& w) {
    std::vector<double> cont(w.size() + 1, 0.0);
    cont[w.size()] = 1.0;
    for (std::size_t k = w.size(); k-- > 0;) {
        double s = 0.0;
        for (std::uint32_t a = 0; a < rho.source.size; ++a) {
            if (!image_matches(rho, a, 0, w, k)) continue;
            const std::size_t next = std::min(k + rho.image_length(a), w.size());
            s += p.probs[a] * cont[next];
        }
        cont[k] = s;
    }
    return cont;
}

} // namespace

double kappa_cylinder(const CodedMeasureSpec& spec, const CylinderSpec& cyl,
                      std::size_t depth_cap) {
    const SubstitutionMap& rho = spec.substitution;
    if (cyl.word.alphabet.size != rho.target.size) {
        throw invalid_input("cylinder alphabet does not match substitution target");
    }
    const std::vector<std::uint32_t>& w = cyl.word.symbols;
    if (w.size() > depth_cap) {
        throw enumeration_cap_exceeded("cylinder word exceeds depth cap; sample instead");
    }
    if (w.empty()) return 1.0;

    const std::vector<double> cont = continuation_table(rho, spec.base, w);
    if (spec.variant == CodedVariant::plain) {
        return cont[0];
    }
    // Stationary stream: anchor letter length-biased, phase uniform inside the
    // anchor image, i.i.d. continuation.
    double s = 0.0;
    for (std::uint32_t a = 0; a < rho.source.size; ++a) {
        const std::size_t len = rho.image_length(a);
        for (std::size_t j = 0; j < len; ++j) {
            if (!image_matches(rho, a, j, w, 0)) continue;
            const std::size_t next = std::min(len - j, w.size());
            s += spec.base.probs[a] * cont[next];
        }
    }
    return s / mean_image_length(rho, spec.base);
}

Word sample_coded(const CodedMeasureSpec& spec, std::size_t length, RngStream& rng) {
    const SubstitutionMap& rho = spec.substitution;
    const BernoulliVector& p = spec.base;
    std::vector<std::uint32_t> out;
    out.reserve(length);

    if (length > 0 && spec.variant == CodedVariant::shift_invariant) {
        // Length-biased anchor by acceptance-rejection (bound max_len), then a
        // uniform phase inside the anchor image.
        std::uint32_t anchor;
        do {
            anchor = sample_letter(p, rng);
        } while (rng.next_unit() * static_cast<double>(rho.max_len) >=
                 static_cast<double>(rho.image_length(anchor)));
        const Word& img = rho.image(anchor);
        const std::uint64_t phase = rng.next_below(img.length());
        for (std::size_t t = phase; t < img.length() && out.size() < length; ++t) {
            out.push_back(img.symbols[t]);
        }
    }
    while (out.size() < length) {
        const Word& img = rho.image(sample_letter(p, rng));
        for (std::size_t t = 0; t < img.length() && out.size() < length; ++t) {
            out.push_back(img.symbols[t]);
        }
    }
    return Word(rho.target, std::move(out));
}

BernoulliVector tilde_vector(const SubstitutionMap& rho, const BernoulliVector& p) {
    const double e = mean_image_length(rho, p);
    std::vector<double> t(rho.source.size);
    for (std::uint32_t a = 0; a < rho.source.size; ++a) {
        t[a] = static_cast<double>(rho.image_length(a)) * p.probs[a] / e;
    }
    return BernoulliVector(rho.source, std::move(t));
}

namespace {

bool is_subsequence(const std::vector<std::uint32_t>& needle,
                    const std::vector<std::uint32_t>& hay) {
    std::size_t i = 0;
    for (std::size_t j = 0; j < hay.size() && i < needle.size(); ++j) {
        if (hay[j] == needle[i]) ++i;
    }
    return i == needle.size();
}

} // namespace

double substitution_perturbation_bound(const SubstitutionMap& rho,
                                       const SubstitutionMap& rho_prime) {
    if (rho.source.size != rho_prime.source.size ||
        rho.target.size != rho_prime.target.size) {
        throw invalid_input("perturbation bound needs matching alphabets");
    }
    double c = 0.0;
    for (std::uint32_t a = 0; a < rho.source.size; ++a) {
        const Word& full = rho.image(a);
        const Word& cut = rho_prime.image(a);
        if (!is_subsequence(cut.symbols, full.symbols)) {
            throw invalid_input("perturbed image is not a subsequence of the original");
        }
        c = std::max(c, 1.0 - static_cast<double>(cut.length()) /
                              static_cast<double>(full.length()));
    }
    return c;
}

double vector_perturbation_bound(const SubstitutionMap& rho,
                                 const BernoulliVector& p,
                                 const BernoulliVector& q) {
    if (p.alphabet.size != rho.source.size || q.alphabet.size != rho.source.size) {
        throw invalid_input("vector alphabet does not match substitution source");
    }
    const double ratio = static_cast<double>(rho.max_len) /
                         static_cast<double>(rho.min_len);
    return 0.5 * ratio * city_metric(p, q);
}

std::uint32_t tuple_to_letter(const Alphabet& base, const std::vector<std::uint32_t>& tuple) {
    std::uint64_t idx = 0;
    for (std::uint32_t a : tuple) {
        if (a >= base.size) throw invalid_input("tuple letter outside alphabet");
        idx = idx * base.size + a;
        if (idx > UINT32_MAX) throw invalid_input("tuple index overflow");
    }
    return static_cast<std::uint32_t>(idx);
}

std::vector<std::uint32_t> letter_to_tuple(const Alphabet& base, std::uint32_t r,
                                           std::uint32_t letter) {
    std::vector<std::uint32_t> tuple(r, 0);
    std::uint64_t idx = letter;
    for (std::uint32_t i = r; i-- > 0;) {
        tuple[i] = static_cast<std::uint32_t>(idx % base.size);
        idx /= base.size;
    }
    if (idx != 0) throw invalid_input("letter outside regrouped alphabet");
    return tuple;
}

std::pair<SubstitutionMap, BernoulliVector>
regroup_power(const SubstitutionMap& rho, const BernoulliVector& p,
              std::uint32_t r, std::size_t size_cap) {
    if (p.alphabet.size != rho.source.size) {
        throw invalid_input("base vector alphabet does not match substitution source");
    }
    if (r == 0) throw invalid_input("regroup power must be positive");
    double sized = 1.0;
    for (std::uint32_t i = 0; i < r; ++i) sized *= static_cast<double>(rho.source.size);
    if (sized > static_cast<double>(size_cap)) {
        throw enumeration_cap_exceeded("regrouped alphabet exceeds size cap");
    }
    const std::size_t n = static_cast<std::size_t>(sized);
    const Alphabet grouped{static_cast<std::uint32_t>(n)};

    std::vector<Word> images;
    std::vector<double> probs;
    images.reserve(n);
    probs.reserve(n);
    for (std::uint32_t g = 0; g < n; ++g) {
        const std::vector<std::uint32_t> tuple = letter_to_tuple(rho.source, r, g);
        Word img(rho.target, {});
        double pr = 1.0;
        for (std::uint32_t a : tuple) {
            img = img.concat(rho.image(a));
            pr *= p.probs[a];
        }
        images.push_back(std::move(img));
        probs.push_back(pr);
    }
    return {SubstitutionMap(grouped, rho.target, std::move(images)),
            BernoulliVector(grouped, std::move(probs))};
}

std::string to_json(const SubstitutionMap& rho) {
    nlohmann::json j;
    j["source_size"] = rho.source.size;
    j["target_size"] = rho.target.size;
    nlohmann::json imgs = nlohmann::json::array();
    for (const Word& w : rho.images) imgs.push_back(w.symbols);
    j["images"] = std::move(imgs);
    return j.dump();
}

SubstitutionMap substitution_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    const Alphabet src{j.at("source_size").get<std::uint32_t>()};
    const Alphabet tgt{j.at("target_size").get<std::uint32_t>()};
    std::vector<Word> images;
    for (const auto& arr : j.at("images")) {
        images.emplace_back(tgt, arr.get<std::vector<std::uint32_t>>());
    }
    return SubstitutionMap(src, tgt, std::move(images));
}

} // namespace ergolab
