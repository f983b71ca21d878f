#include <cmath>

#include "doctest.h"
#include "p3seg/errors.hpp"
#include "p3seg/rng.hpp"
#include "p3seg/schedule.hpp"

using namespace p3seg;

TEST_CASE("solve_curve satisfies both boundary conditions analytically") {
    const ScheduleParams p = solve_curve(8000, 0.25, 0.9);
    CHECK(p.gamma == -0.75);
    CHECK(p.S == doctest::Approx(15975.229).epsilon(1e-5));

    // boundary conditions of the solved curve
    CHECK(std::exp(0.0 / p.S) + p.gamma == 0.25);
    CHECK(std::exp(8000.0 / p.S) + p.gamma == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("solve_curve rejects degenerate bounds") {
    CHECK_THROWS_AS(solve_curve(100, 0.5, 0.5), config_error);
    CHECK_THROWS_AS(solve_curve(100, 0.9, 0.25), config_error);
    CHECK_THROWS_AS(solve_curve(1, 0.25, 0.9), config_error);
    CHECK_THROWS_AS(solve_curve(8000, 0.0, 0.9), config_error);
}

TEST_CASE("alpha_at hits the documented values") {
    const ScheduleParams p = solve_curve(8000, 0.25, 0.9);
    CHECK(alpha_at(p, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(alpha_at(p, 4000) == doctest::Approx(0.5345).epsilon(2e-4));
    CHECK(alpha_at(p, 8000) == alpha_at(p, 0)); // wraps to the start of cycle 2
}

TEST_CASE("alpha_at is periodic bit-exactly and bounded") {
    const ScheduleParams p = solve_curve(8000, 0.25, 0.9);
    Rng rng(99);
    for (int k = 0; k < 1000; ++k) {
        const long it = static_cast<long>(rng.uniform_int(1000000));
        CHECK(alpha_at(p, it + p.period_T) == alpha_at(p, it));
        const double a = alpha_at(p, it);
        CHECK(a >= p.lower_bound);
        CHECK(a < p.upper_bound + 1e-9);
    }
}

TEST_CASE("alpha_at is strictly increasing within one exponential period") {
    const ScheduleParams p = solve_curve(500, 0.25, 0.9);
    for (long it = 1; it < 500; ++it) CHECK(alpha_at(p, it) > alpha_at(p, it - 1));
}

TEST_CASE("ablation curve variants stay within bounds and behave") {
    for (CurveKind kind : {CurveKind::linear, CurveKind::step, CurveKind::late_spike,
                           CurveKind::constant}) {
        const ScheduleParams p = solve_curve(400, 0.25, 0.9, kind);
        for (long it = 0; it < 400; ++it) {
            const double a = alpha_at(p, it);
            CHECK(a >= p.lower_bound - 1e-12);
            CHECK(a <= p.upper_bound + 1e-12);
            if (it > 0 && kind != CurveKind::constant)
                CHECK(alpha_at(p, it) >= alpha_at(p, it - 1)); // nondecreasing per cycle
        }
    }
    const ScheduleParams c = solve_curve(400, 0.25, 0.75, CurveKind::constant);
    CHECK(alpha_at(c, 0) == doctest::Approx(0.5));
    CHECK(alpha_at(c, 123) == alpha_at(c, 0));

    CHECK(curve_from_string("exp") == CurveKind::exponential);
    CHECK(curve_from_string(curve_to_string(CurveKind::late_spike)) == CurveKind::late_spike);
    CHECK_THROWS_AS(curve_from_string("bogus"), config_error);
}

TEST_CASE("lambda ramp matches the closed forms") {
    const RampParams r{1000, 0.1, 0.9, false};
    CHECK(lambda_at(r, 1000) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(lambda_at(r, 0) == doctest::Approx(6.737946999e-4).epsilon(1e-9));
    CHECK(lambda_at(r, 500) == doctest::Approx(8.20849986e-3).epsilon(1e-9));
    CHECK(lambda_at(r, 2000) == lambda_at(r, 1000)); // clamped past max_iter

    for (long it = 1; it <= 1000; ++it) CHECK(lambda_at(r, it) > lambda_at(r, it - 1));

    const RampParams sq{1000, 0.1, 0.9, true};
    CHECK(lambda_at(sq, 0) == doctest::Approx(0.1 * std::exp(-5.0)).epsilon(1e-12));
    CHECK(lambda_at(sq, 500) == doctest::Approx(0.1 * std::exp(-1.25)).epsilon(1e-12));
}

TEST_CASE("lr factor is the polynomial decay") {
    const RampParams r{1000, 0.1, 0.9, false};
    CHECK(lr_factor_at(r, 0) == 1.0);
    CHECK(lr_factor_at(r, 500) == doctest::Approx(0.5358867).epsilon(1e-6));

    const RampParams r10{10, 0.1, 0.9, false};
    CHECK(lr_factor_at(r10, 9) == doctest::Approx(0.12589254).epsilon(1e-6));

    for (long it = 1; it < 1000; ++it) CHECK(lr_factor_at(r, it) < lr_factor_at(r, it - 1));
    CHECK_THROWS_AS(lr_factor_at(r, 1000), config_error);
}
