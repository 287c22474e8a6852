#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ergolab/core.hpp"
#include "ergolab/fbar.hpp"
#include "ergolab/substitution.hpp"

namespace ergolab {

// Integer roof over a finite alphabet, every height >= 1.
struct RoofFunction {
    Alphabet alphabet;
    std::vector<std::uint32_t> heights;

    RoofFunction(Alphabet a, std::vector<std::uint32_t> h);
    std::uint32_t operator()(std::uint32_t letter) const;
    static RoofFunction from_image_lengths(const SubstitutionMap& rho);
};

// Point of the discrete suspension: a finite window of base symbols (symbol i
// sits at coordinate window_start + i), the coordinate of the letter currently
// under the roof, and the height offset 0 <= offset < roof(letter).
struct SuspensionPoint {
    Alphabet alphabet;
    std::vector<std::uint32_t> window;
    std::int64_t window_start = 0;
    std::int64_t cursor = 0;
    std::uint32_t offset = 0;

    std::uint32_t letter_at(std::int64_t coordinate) const; // throws outside window
    std::uint32_t letter() const { return letter_at(cursor); }
};

// One tick: climb the roof, or wrap to the next letter at the top. Throws
// insufficient_data when wrapping past the stored window.
SuspensionPoint suspension_step(const RoofFunction& roof, const SuspensionPoint& pt);

// lambda: time-stationary start (letter biased by roof height, offset
// uniform), continuation i.i.d. base vector.
// lambda_tilde: start on the base cross-section (letter weighted p_a/R(a),
// offset 0), continuation i.i.d. inverse-roof-biased vector; its letter
// occupation law over time is the base vector itself.
enum class SuspensionVariant { lambda, lambda_tilde };

struct SuspensionMeasureSpec {
    RoofFunction roof;
    BernoulliVector base;
    SuspensionVariant variant = SuspensionVariant::lambda;

    SuspensionMeasureSpec(RoofFunction r, BernoulliVector p, SuspensionVariant v);
};

// Trajectory of steps+1 states sharing one sampled base window.
struct SuspensionTrajectory {
    Alphabet alphabet;
    std::vector<std::uint32_t> window; // coordinates 0..window.size()-1
    std::vector<std::int64_t> cursors;
    std::vector<std::uint32_t> offsets;

    std::size_t ticks() const { return cursors.size(); }
    SuspensionPoint state(std::size_t i) const;
};

SuspensionTrajectory sample_suspension(const SuspensionMeasureSpec& spec,
                                       std::size_t steps, RngStream& rng);

// Entropy of the suspension flow: h(base) / sum_a R(a) p_a.
double abramov_entropy(const BernoulliVector& p, const RoofFunction& roof);

// Reads the coded target stream at the point: symbol i of the result is the
// symbol at position offset+i of the image concatenation anchored at the
// cursor letter. Out-of-window queries return nullopt. roof must equal the
// image lengths of rho.
SymbolStream project_suspension(const SubstitutionMap& rho, const SuspensionPoint& pt);

// First `count` symbols of the projected stream; throws insufficient_data if
// the window runs out.
Word project_symbols(const SubstitutionMap& rho, const SuspensionPoint& pt,
                     std::size_t count);

// CSV summary: step,letter,offset,projected_symbol (projected column uses the
// image symbol under the current offset).
std::string trajectory_csv(const SuspensionTrajectory& traj, const SubstitutionMap& rho);

} // namespace ergolab
