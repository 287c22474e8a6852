#include "ergolab/cocycle.hpp"

#include <cmath>
#include <numbers>

#include <doctest.h>

using namespace ergolab;

namespace {

constexpr double kPi = std::numbers::pi;

BernoulliVector half_half() {
    return BernoulliVector(Alphabet{2}, {0.5, 0.5});
}

}  // namespace

TEST_CASE("family construction validates input") {
    CHECK_THROWS_AS(CocycleFamily({}), invalid_input);
    CocycleFamily fam({diagonal_matrix(2.0)});
    CHECK(fam.alphabet().size == 1);
    CHECK_THROWS_AS(fam.matrix(1), invalid_input);
    CHECK(same_matrix(fam.matrix(0), diagonal_matrix(2.0)));
}

TEST_CASE("family json round trip") {
    CocycleFamily fam = transverse_pair();
    CocycleFamily back = cocycle_family_from_json(fam.to_json());
    REQUIRE(back.matrices.size() == fam.matrices.size());
    for (std::size_t i = 0; i < fam.matrices.size(); ++i)
        CHECK(same_matrix(back.matrices[i], fam.matrices[i]));
}

TEST_CASE("classification follows the trace") {
    CHECK(classify(rotation_matrix(kPi / 3.0)) == MatrixClass::elliptic);
    CHECK(classify(diagonal_matrix(2.0)) == MatrixClass::hyperbolic);
    CHECK(classify(Sl2Matrix(1.0, 1.0, 0.0, 1.0)) == MatrixClass::parabolic);
    CHECK(classify(Sl2Matrix()) == MatrixClass::parabolic);
    CHECK(std::string(to_string(MatrixClass::elliptic)) == "elliptic");

    SUBCASE("invariant under random conjugation") {
        RngStream rng(20260818, 31);
        for (int trial = 0; trial < 1000; ++trial) {
            const double x = 2.0 * rng.next_unit() - 1.0;
            const double y = 2.0 * rng.next_unit() - 1.0;
            const double z = 2.0 * rng.next_unit() - 1.0;
            // Random conjugator: lower * upper * rotation stays in the group.
            const Sl2Matrix g = Sl2Matrix(1.0, 0.0, x, 1.0) * Sl2Matrix(1.0, y, 0.0, 1.0) *
                                rotation_matrix(z * kPi);
            const Sl2Matrix m = (trial % 3 == 0)   ? rotation_matrix(0.4 + z)
                                : (trial % 3 == 1) ? diagonal_matrix(1.5 + x * 0.3)
                                                   : Sl2Matrix(1.0, 0.7, 0.0, 1.0);
            CHECK(classify(conjugated(g, m)) == classify(m));
        }
    }
}

TEST_CASE("norm growth rate of a single hyperbolic matrix is exact") {
    CocycleFamily fam({diagonal_matrix(2.0)});
    BernoulliVector p(Alphabet{1}, {1.0});
    LyapunovEstimate est = top_lyapunov(fam, p, 4096, 3, RngStream(1, 2));
    CHECK(est.value == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(est.standard_error <= 1e-12);
    CHECK(est.steps == 4096);
    CHECK(est.trials == 3);
    CHECK_FALSE(est.cross_check_flagged);
    // The tracker converges to the same limit from below.
    CHECK(est.tracking_value == doctest::Approx(std::log(2.0)).epsilon(1e-2));
}

TEST_CASE("rotation products have zero growth") {
    LyapunovEstimate est =
        top_lyapunov(isometric_pair(), half_half(), 1000000, 2, RngStream(3, 4));
    CHECK(std::abs(est.value) <= 1e-3);
    CHECK(std::abs(est.tracking_value) <= 1e-3);
    CHECK_FALSE(est.cross_check_flagged);
}

TEST_CASE("axis swapping drives the growth rate toward zero") {
    BernoulliVector p = half_half();
    LyapunovEstimate coarse =
        top_lyapunov(axis_swapping_pair(), p, 1000, 8, RngStream(5, 6));
    LyapunovEstimate fine =
        top_lyapunov(axis_swapping_pair(), p, 1000000, 8, RngStream(5, 6));
    CHECK(fine.value <= 0.02);
    CHECK(fine.value < coarse.value);
}

TEST_CASE("transverse hyperbolic pair has positive growth rate") {
    LyapunovEstimate est =
        top_lyapunov(transverse_pair(), half_half(), 100000, 8, RngStream(7, 8));
    CHECK(est.value > 5.0 * est.standard_error);
    CHECK(est.value > 0.1);
    CHECK_FALSE(est.cross_check_flagged);
}

TEST_CASE("growth rate estimates are nonnegative at statistical precision") {
    RngStream rng(20260818, 37);
    for (int trial = 0; trial < 20; ++trial) {
        // Random two-generator family mixing rotations and shears.
        const double ang = rng.next_unit() * kPi;
        const double sh = 2.0 * rng.next_unit() - 1.0;
        CocycleFamily fam({rotation_matrix(ang), Sl2Matrix(1.0, sh, 0.0, 1.0)});
        LyapunovEstimate est =
            top_lyapunov(fam, half_half(), 2000, 4, rng.split(trial));
        CHECK(est.value >= -est.standard_error);
        CHECK(est.value >= 0.0);
    }
}

TEST_CASE("estimator rejects bad arguments") {
    CocycleFamily fam = isometric_pair();
    CHECK_THROWS_AS(top_lyapunov(fam, half_half(), 0, 1, RngStream(1, 1)), invalid_input);
    CHECK_THROWS_AS(top_lyapunov(fam, half_half(), 10, 0, RngStream(1, 1)), invalid_input);
    CHECK_THROWS_AS(
        top_lyapunov(fam, BernoulliVector(Alphabet{3}, {0.3, 0.3, 0.4}), 10, 1, RngStream(1, 1)),
        invalid_input);
}

TEST_CASE("elliptic search finds the shortest witness") {
    SUBCASE("rotation generator gives a length one witness") {
        auto witness = find_elliptic(axis_swapping_pair(), 4);
        REQUIRE(witness.has_value());
        CHECK(witness->word.symbols.size() == 1);
        CHECK(witness->word.symbols[0] == 1);
        CHECK(std::abs(witness->trace) < 2.0);
        CHECK(classify(witness->matrix) == MatrixClass::elliptic);
    }
    SUBCASE("positive diagonal semigroup has none") {
        CocycleFamily fam({diagonal_matrix(2.0), diagonal_matrix(3.0)});
        CHECK_FALSE(find_elliptic(fam, 10).has_value());
    }
    SUBCASE("tilted product witnesses appear deeper") {
        // Neither generator is elliptic, but a mixed product is.
        CocycleFamily fam({diagonal_matrix(1.2), rotation_matrix(1.2) * diagonal_matrix(1.2)});
        auto witness = find_elliptic(fam, 6);
        REQUIRE(witness.has_value());
        CHECK(witness->word.symbols.size() >= 1);
        Sl2Matrix prod;
        for (std::uint32_t s : witness->word.symbols) prod = fam.matrix(s) * prod;
        CHECK(same_matrix(prod, witness->matrix, 1e-9));
        CHECK(classify(prod) == MatrixClass::elliptic);
    }
    SUBCASE("depth zero is rejected") {
        CHECK_THROWS_AS(find_elliptic(isometric_pair(), 0), invalid_input);
    }
    SUBCASE("node budget trips on wide trees") {
        std::vector<Sl2Matrix> mats;
        for (int i = 0; i < 8; ++i) mats.push_back(diagonal_matrix(2.0 + 0.1 * i));
        CHECK_THROWS_AS(find_elliptic(CocycleFamily(mats), 12), search_exhausted);
    }
}

TEST_CASE("bridge ties the fiber exponent to the norm growth rate") {
    SUBCASE("rotations give zero on both sides") {
        BridgeReport rep = bridge_check(isometric_pair(), half_half(), 20000, RngStream(9, 10));
        CHECK(std::abs(rep.lyapunov.value) <= 1e-3);
        CHECK(std::abs(rep.fiber_value) <= 1e-9);
        CHECK(rep.residual <= 2e-3);
    }
    SUBCASE("single hyperbolic matrix is exact") {
        CocycleFamily fam({diagonal_matrix(2.0)});
        BernoulliVector p(Alphabet{1}, {1.0});
        BridgeReport rep = bridge_check(fam, p, 20000, RngStream(11, 12));
        CHECK(rep.fiber_value == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-9));
        CHECK(rep.lyapunov.value == doctest::Approx(std::log(2.0)).epsilon(1e-9));
        CHECK(rep.residual < 1e-6);
    }
    SUBCASE("transverse pair agrees within statistical error") {
        BridgeReport rep =
            bridge_check(transverse_pair(), half_half(), 400000, RngStream(13, 14));
        CHECK(rep.fiber_value < 0.0);
        const double budget = 3.0 * (rep.fiber_standard_error +
                                     2.0 * rep.lyapunov.standard_error);
        CHECK(rep.residual <= budget);
    }
    SUBCASE("rejects tiny runs") {
        CHECK_THROWS_AS(bridge_check(isometric_pair(), half_half(), 8, RngStream(1, 1)),
                        invalid_input);
    }
}

TEST_CASE("estimates serialize to json") {
    LyapunovEstimate est = top_lyapunov(transverse_pair(), half_half(), 512, 2, RngStream(15, 16));
    CHECK(est.to_json().find("tracking_value") != std::string::npos);
    BridgeReport rep = bridge_check(transverse_pair(), half_half(), 2048, RngStream(17, 18));
    CHECK(rep.to_json().find("residual") != std::string::npos);
    CHECK(rep.to_json().find("lyapunov") != std::string::npos);
}
