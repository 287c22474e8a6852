#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ergolab/circle.hpp"
#include "ergolab/core.hpp"

namespace ergolab {

// Finite determinant-one family driven by i.i.d. letters. Singleton families
// are allowed so that deterministic products can use the same estimators.
struct CocycleFamily {
    std::vector<Sl2Matrix> matrices;

    explicit CocycleFamily(std::vector<Sl2Matrix> ms);

    Alphabet alphabet() const { return Alphabet{static_cast<std::uint32_t>(matrices.size())}; }
    const Sl2Matrix& matrix(std::uint32_t letter) const;

    std::string to_json() const;
};

CocycleFamily cocycle_family_from_json(const std::string& text);

enum class MatrixClass { elliptic, parabolic, hyperbolic };

const char* to_string(MatrixClass c);

// Trace classification: |tr| < 2 - tol elliptic, |tr| > 2 + tol hyperbolic,
// parabolic in the closed band between.
MatrixClass classify(const Sl2Matrix& m, double tol = 1e-9);

// Growth-rate estimate for random products. value comes from operator norms
// of the running product, so it is nonnegative pointwise; tracking_value is
// an independent vector-tracking estimate of the same limit, and the run is
// flagged when the two disagree beyond five combined standard errors.
struct LyapunovEstimate {
    double value = 0.0;
    std::uint64_t steps = 0;
    std::uint32_t trials = 0;
    double standard_error = 0.0;

    double tracking_value = 0.0;
    double tracking_error = 0.0;
    bool cross_check_flagged = false;

    std::string to_json() const;
};

// Mean of (1/steps) log ||A_{w_steps} ... A_{w_1}|| over trials, letters drawn
// i.i.d. from p. The product is renormalized every 32 steps and the factored
// logs accumulate in compensated summation.
LyapunovEstimate top_lyapunov(const CocycleFamily& family, const BernoulliVector& p,
                              std::uint64_t steps, std::uint32_t trials, RngStream rng);

struct EllipticWitness {
    Word word;  // letters, leftmost acts first
    Sl2Matrix matrix;
    double trace = 0.0;
};

// Shortest product word whose matrix is elliptic, breadth-first by length;
// none if no product up to the given length qualifies. Throws
// search_exhausted if the word tree would exceed the internal node budget
// before reaching the requested depth.
std::optional<EllipticWitness> find_elliptic(const CocycleFamily& family, std::uint32_t depth);

// Two estimates of the same quantity from opposite sides: the norm growth
// rate of random products and the fiber log-derivative along the induced
// circle orbit. On the attracting section the fiber exponent is the negative
// of twice the norm rate, so residual = ||fiber| - 2 value| measures the gap.
struct BridgeReport {
    LyapunovEstimate lyapunov;
    double fiber_value = 0.0;
    double fiber_standard_error = 0.0;
    double residual = 0.0;
    std::uint64_t steps = 0;

    std::string to_json() const;
};

BridgeReport bridge_check(const CocycleFamily& family, const BernoulliVector& p,
                          std::uint64_t steps, RngStream rng);

// Shipped two-generator families with known exponent behavior.
//
// Isometric pair: two rotations; every product has norm one and the exponent
// is exactly zero.
CocycleFamily isometric_pair();
// Axis-swapping pair: one hyperbolic stretch and the quarter turn that
// exchanges its axes; random products cancel and the exponent tends to zero.
CocycleFamily axis_swapping_pair();
// Transverse pair: two hyperbolic stretches with tilted axes; the exponent
// stabilizes at a strictly positive value.
CocycleFamily transverse_pair();

}  // namespace ergolab
