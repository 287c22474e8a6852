#include "ergolab/suspension.hpp"

#include <algorithm>
#include <sstream>
#include <utility>

namespace ergolab {

RoofFunction::RoofFunction(Alphabet a, std::vector<std::uint32_t> h)
    : alphabet(a), heights(std::move(h)) {
    if (heights.size() != alphabet.size) {
        throw invalid_input("roof needs one height per letter");
    }
    for (std::uint32_t r : heights) {
        if (r == 0) throw invalid_input("roof heights must be >= 1");
    }
}

std::uint32_t RoofFunction::operator()(std::uint32_t letter) const {
    if (letter >= alphabet.size) throw invalid_input("letter outside roof alphabet");
    return heights[letter];
}

RoofFunction RoofFunction::from_image_lengths(const SubstitutionMap& rho) {
    std::vector<std::uint32_t> h(rho.source.size);
    for (std::uint32_t a = 0; a < rho.source.size; ++a) {
        h[a] = static_cast<std::uint32_t>(rho.image_length(a));
    }
    return RoofFunction(rho.source, std::move(h));
}

std::uint32_t SuspensionPoint::letter_at(std::int64_t coordinate) const {
    if (coordinate < window_start ||
        coordinate >= window_start + static_cast<std::int64_t>(window.size())) {
        throw insufficient_data("coordinate outside stored base window");
    }
    return window[static_cast<std::size_t>(coordinate - window_start)];
}

SuspensionPoint suspension_step(const RoofFunction& roof, const SuspensionPoint& pt) {
    if (pt.alphabet.size != roof.alphabet.size) {
        throw invalid_input("point alphabet does not match roof");
    }
    SuspensionPoint next = pt;
    const std::uint32_t height = roof(pt.letter());
    if (pt.offset >= height) throw invalid_input("offset at or above roof height");
    if (pt.offset + 1 < height) {
        next.offset = pt.offset + 1;
    } else {
        next.cursor = pt.cursor + 1;
        next.offset = 0;
        next.letter(); // validates the wrapped coordinate is inside the window
    }
    return next;
}

SuspensionMeasureSpec::SuspensionMeasureSpec(RoofFunction r, BernoulliVector p,
                                             SuspensionVariant v)
    : roof(std::move(r)), base(std::move(p)), variant(v) {
    if (base.alphabet.size != roof.alphabet.size) {
        throw invalid_input("base vector alphabet does not match roof");
    }
}

SuspensionPoint SuspensionTrajectory::state(std::size_t i) const {
    if (i >= cursors.size()) throw invalid_input("trajectory index out of range");
    SuspensionPoint pt;
    pt.alphabet = alphabet;
    pt.window = window;
    pt.window_start = 0;
    pt.cursor = cursors[i];
    pt.offset = offsets[i];
    return pt;
}

namespace {

BernoulliVector inverse_roof_biased(const RoofFunction& roof, const BernoulliVector& p) {
    std::vector<double> q(p.probs.size());
    double z = 0.0;
    for (std::uint32_t a = 0; a < p.alphabet.size; ++a) {
        q[a] = p.probs[a] / static_cast<double>(roof(a));
        z += q[a];
    }
    for (double& v : q) v /= z;
    return BernoulliVector(p.alphabet, std::move(q));
}

} // namespace

SuspensionTrajectory sample_suspension(const SuspensionMeasureSpec& spec,
                                       std::size_t steps, RngStream& rng) {
    const RoofFunction& roof = spec.roof;
    std::uint32_t max_height = 0;
    for (std::uint32_t h : roof.heights) max_height = std::max(max_height, h);

    SuspensionTrajectory traj;
    traj.alphabet = roof.alphabet;

    std::uint32_t first;
    std::uint32_t offset;
    BernoulliVector continuation = spec.base;
    if (spec.variant == SuspensionVariant::lambda) {
        // Roof-biased start letter by acceptance-rejection, uniform offset.
        do {
            first = sample_letter(spec.base, rng);
        } while (rng.next_unit() * static_cast<double>(max_height) >=
                 static_cast<double>(roof(first)));
        offset = static_cast<std::uint32_t>(rng.next_below(roof(first)));
    } else {
        // Cross-section start: letter weighted p_a / R(a), offset 0; the
        // continuation letters follow the same inverse-biased law.
        continuation = inverse_roof_biased(roof, spec.base);
        first = sample_letter(continuation, rng);
        offset = 0;
    }

    traj.window.push_back(first);
    traj.cursors.reserve(steps + 1);
    traj.offsets.reserve(steps + 1);
    std::int64_t cursor = 0;
    traj.cursors.push_back(cursor);
    traj.offsets.push_back(offset);

    for (std::size_t t = 0; t < steps; ++t) {
        const std::uint32_t height = roof(traj.window[static_cast<std::size_t>(cursor)]);
        if (offset + 1 < height) {
            ++offset;
        } else {
            ++cursor;
            offset = 0;
            if (static_cast<std::size_t>(cursor) == traj.window.size()) {
                traj.window.push_back(sample_letter(continuation, rng));
            }
        }
        traj.cursors.push_back(cursor);
        traj.offsets.push_back(offset);
    }
    return traj;
}

double abramov_entropy(const BernoulliVector& p, const RoofFunction& roof) {
    if (p.alphabet.size != roof.alphabet.size) {
        throw invalid_input("base vector alphabet does not match roof");
    }
    double mean_roof = 0.0;
    for (std::uint32_t a = 0; a < p.alphabet.size; ++a) {
        mean_roof += static_cast<double>(roof(a)) * p.probs[a];
    }
    return shannon_entropy(p) / mean_roof;
}

SymbolStream project_suspension(const SubstitutionMap& rho, const SuspensionPoint& pt) {
    if (pt.alphabet.size != rho.source.size) {
        throw invalid_input("point alphabet does not match substitution source");
    }
    // Both captured by value so the stream outlives its arguments.
    const SuspensionPoint at = pt;
    return [rho, at](std::int64_t i) -> std::optional<std::uint32_t> {
        std::int64_t k = at.cursor;
        std::int64_t r = static_cast<std::int64_t>(at.offset) + i;
        const std::int64_t lo = at.window_start;
        const std::int64_t hi = at.window_start + static_cast<std::int64_t>(at.window.size());
        while (r < 0) {
            if (k - 1 < lo) return std::nullopt;
            --k;
            r += static_cast<std::int64_t>(
                rho.image_length(at.window[static_cast<std::size_t>(k - lo)]));
        }
        while (true) {
            if (k >= hi) return std::nullopt;
            const std::int64_t len = static_cast<std::int64_t>(
                rho.image_length(at.window[static_cast<std::size_t>(k - lo)]));
            if (r < len) break;
            r -= len;
            ++k;
        }
        return rho.image(at.window[static_cast<std::size_t>(k - lo)])
            .symbols[static_cast<std::size_t>(r)];
    };
}

Word project_symbols(const SubstitutionMap& rho, const SuspensionPoint& pt,
                     std::size_t count) {
    const SymbolStream stream = project_suspension(rho, pt);
    std::vector<std::uint32_t> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto s = stream(static_cast<std::int64_t>(i));
        if (!s) throw insufficient_data("window too short for projection");
        out.push_back(*s);
    }
    return Word(rho.target, std::move(out));
}

std::string trajectory_csv(const SuspensionTrajectory& traj, const SubstitutionMap& rho) {
    if (traj.alphabet.size != rho.source.size) {
        throw invalid_input("trajectory alphabet does not match substitution source");
    }
    std::ostringstream out;
    out << "step,letter,offset,projected_symbol\n";
    for (std::size_t i = 0; i < traj.ticks(); ++i) {
        const std::uint32_t letter =
            traj.window[static_cast<std::size_t>(traj.cursors[i])];
        const std::uint32_t offset = traj.offsets[i];
        out << i << ',' << letter << ',' << offset << ','
            << rho.image(letter).symbols[offset] << '\n';
    }
    return out.str();
}

} // namespace ergolab
