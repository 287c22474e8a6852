#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ergolab/core.hpp"

namespace ergolab {

// Raised when an exact enumeration would exceed its configured cap and the
// caller should fall back to sampling.
struct enumeration_cap_exceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Letter-to-word substitution. Every source letter must have a nonempty image
// over the target alphabet.
struct SubstitutionMap {
    Alphabet source;
    Alphabet target;
    std::vector<Word> images;
    std::size_t min_len = 0;
    std::size_t max_len = 0;

    SubstitutionMap(Alphabet src, Alphabet tgt, std::vector<Word> imgs);

    const Word& image(std::uint32_t letter) const;
    std::size_t image_length(std::uint32_t letter) const;
};

// Expected image length sum_a |rho(a)| p_a.
double mean_image_length(const SubstitutionMap& rho, const BernoulliVector& p);

// plain: image stream anchored at the start of the zeroth image.
// shift_invariant: stationary stream; anchor letter biased by image length,
// phase uniform within the anchor image.
enum class CodedVariant { plain, shift_invariant };

struct CodedMeasureSpec {
    SubstitutionMap substitution;
    BernoulliVector base;
    CodedVariant variant = CodedVariant::plain;

    CodedMeasureSpec(SubstitutionMap rho, BernoulliVector p, CodedVariant v);
};

Word apply_substitution(const SubstitutionMap& rho, const Word& w);

// Exact probability of the cylinder under the coded measure. Deterministic
// dynamic program over suffix positions; cylinder words longer than depth_cap
// raise enumeration_cap_exceeded (use sample_coded instead).
double kappa_cylinder(const CodedMeasureSpec& spec, const CylinderSpec& cyl,
                      std::size_t depth_cap = 32);

// Samples `length` symbols of the coded stream starting at coordinate 0.
Word sample_coded(const CodedMeasureSpec& spec, std::size_t length, RngStream& rng);

// Image-length-biased vector: tilde(p)_a = |rho(a)| p_a / sum_b |rho(b)| p_b.
BernoulliVector tilde_vector(const SubstitutionMap& rho, const BernoulliVector& p);

// Edit-distance budget when every rho'(a) embeds in rho(a) as a subsequence:
// returns C = max_a (1 - |rho'(a)|/|rho(a)|). Throws invalid_input if some
// image fails the subsequence requirement or alphabets differ.
double substitution_perturbation_bound(const SubstitutionMap& rho,
                                       const SubstitutionMap& rho_prime);

// Edit-distance budget for changing the base vector under a fixed
// substitution: (max_len/min_len) * city_metric(p, q) / 2.
double vector_perturbation_bound(const SubstitutionMap& rho,
                                 const BernoulliVector& p,
                                 const BernoulliVector& q);

// r-fold regrouping: source letters become r-tuples (big-endian index), the
// image of a tuple is the concatenation of the letter images, and the base
// vector becomes the product vector. Coded measures are preserved exactly.
// Throws enumeration_cap_exceeded if the regrouped alphabet exceeds size_cap.
std::pair<SubstitutionMap, BernoulliVector>
regroup_power(const SubstitutionMap& rho, const BernoulliVector& p,
              std::uint32_t r, std::size_t size_cap = std::size_t{1} << 20);

std::uint32_t tuple_to_letter(const Alphabet& base, const std::vector<std::uint32_t>& tuple);
std::vector<std::uint32_t> letter_to_tuple(const Alphabet& base, std::uint32_t r,
                                           std::uint32_t letter);

std::string to_json(const SubstitutionMap& rho);
SubstitutionMap substitution_from_json(const std::string& text);

} // namespace ergolab
