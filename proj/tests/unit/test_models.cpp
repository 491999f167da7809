#include <doctest.h>

#include <cmath>

#include "kinstor/models.hpp"
#include "kinstor/rng.hpp"

using namespace kinstor;
using namespace kinstor::models;

namespace {

SeasonalOuSpec level_spec(double a0, double kappa, double sigma) {
    SeasonalOuSpec spec;
    spec.space = StateSpace::level;
    spec.initial_value = a0;
    spec.mean_profile = SeasonalProfile::constant(a0);
    spec.kappa = RegimeSchedule::constant(kappa);
    spec.sigma = RegimeSchedule::constant(sigma);
    return spec;
}

}  // namespace

TEST_CASE("evaluate_schedule: constant profile") {
    SeasonalOuSpec spec = level_spec(1.0, 1.0, 0.1);
    CHECK(evaluate_schedule(spec, 13.0).mu == doctest::Approx(1.0));
}

TEST_CASE("evaluate_schedule: half-open regime boundary") {
    SeasonalOuSpec spec = level_spec(0.0, 1.0, 0.1);
    spec.kappa = RegimeSchedule{8, 19, 2.0, 1.0};
    CHECK(evaluate_schedule(spec, 7.5).kappa == doctest::Approx(1.0));
    CHECK(evaluate_schedule(spec, 8.0).kappa == doctest::Approx(2.0));
    CHECK(evaluate_schedule(spec, 19.0).kappa == doctest::Approx(1.0));
}

TEST_CASE("evaluate_schedule: first harmonic") {
    SeasonalOuSpec spec = level_spec(0.0, 1.0, 0.1);
    spec.mean_profile = SeasonalProfile{24.0, {0.0, 1.0}};
    CHECK(evaluate_schedule(spec, 0.0).mu == doctest::Approx(1.0));
    CHECK(evaluate_schedule(spec, 12.0).mu == doctest::Approx(-1.0));
}

TEST_CASE("evaluate_schedule: periodicity") {
    SeasonalOuSpec spec = level_spec(0.0, 1.0, 0.1);
    spec.mean_profile = SeasonalProfile{24.0, {0.3, 0.5, -0.2, 0.1, 0.05}};
    spec.kappa = RegimeSchedule{8, 19, 2.0, 0.5};
    for (double t : {0.25, 3.7, 11.0, 18.99, 23.5}) {
        const auto a = evaluate_schedule(spec, t);
        const auto b = evaluate_schedule(spec, t + 24.0);
        CHECK(a.mu == doctest::Approx(b.mu).epsilon(1e-12));
        CHECK(a.kappa == b.kappa);
        CHECK(a.sigma == b.sigma);
    }
}

TEST_CASE("ou_step: fixed point of drift (level space)") {
    SeasonalOuSpec spec = level_spec(0.0, 1.3, 0.4);
    spec.mean_profile = SeasonalProfile{24.0, {0.7, 0.2}};
    const double t = 5.25;
    const double mu = evaluate_schedule(spec, t).mu;
    CHECK(ou_step(spec, mu, t, 0.1, 0.0) == doctest::Approx(mu).epsilon(1e-14));
}

TEST_CASE("ou_step: pure mean reversion") {
    SeasonalOuSpec spec = level_spec(0.0, 1.0, 0.0);
    CHECK(ou_step(spec, 2.0, 0.0, 0.5, 0.0) == doctest::Approx(1.0));
}

TEST_CASE("ou_step: pure diffusion") {
    SeasonalOuSpec spec = level_spec(0.0, 0.0, 1.0);
    CHECK(ou_step(spec, 0.0, 0.0, 1.0, 1.5) == doctest::Approx(1.5));
}

TEST_CASE("ou_step: determinism") {
    SeasonalOuSpec spec = level_spec(0.4, 0.9, 0.3);
    const double a = ou_step(spec, 0.2, 3.0, 0.05, -0.77);
    const double b = ou_step(spec, 0.2, 3.0, 0.05, -0.77);
    CHECK(a == b);
}

TEST_CASE("ou_step: log-price drift target carries the Ito correction") {
    SeasonalOuSpec spec;
    spec.space = StateSpace::log_price;
    spec.initial_value = 1.0;
    spec.mean_profile = SeasonalProfile::constant(0.5);
    spec.kappa = RegimeSchedule::constant(1.0);
    spec.sigma = RegimeSchedule::constant(0.3);
    const double target = 0.5 - 0.3 * 0.3 / 2.0;
    CHECK(drift_target(spec, 3.0) == doctest::Approx(target));
    const double state = 0.1;
    CHECK(ou_step(spec, state, 3.0, 0.01, 0.0) ==
          doctest::Approx(state + 1.0 * (target - state) * 0.01));
}

TEST_CASE("exact_log_price_moments: initial condition") {
    SeasonalOuSpec spec;
    spec.space = StateSpace::log_price;
    spec.initial_value = 2.5;
    spec.mean_profile = SeasonalProfile::constant(0.0);
    spec.kappa = RegimeSchedule::constant(1.0);
    spec.sigma = RegimeSchedule::constant(1.0);
    const auto m = exact_log_price_moments(spec, 0.0);
    CHECK(m.mean == doctest::Approx(std::log(2.5)));
    CHECK(m.variance == doctest::Approx(0.0));
}

TEST_CASE("exact_log_price_moments: stationary limit") {
    SeasonalOuSpec spec;
    spec.space = StateSpace::log_price;
    spec.initial_value = 1.0;
    spec.mean_profile = SeasonalProfile::constant(0.8);
    spec.kappa = RegimeSchedule::constant(1.0);
    spec.sigma = RegimeSchedule::constant(0.5);
    const auto m = exact_log_price_moments(spec, 60.0);
    CHECK(m.mean == doctest::Approx(0.8 - 0.25 / 2.0).epsilon(1e-9));
    CHECK(m.variance == doctest::Approx(0.25 / 2.0).epsilon(1e-9));
}

TEST_CASE("exact_log_price_moments: unit-parameter variance integral") {
    SeasonalOuSpec spec;
    spec.space = StateSpace::log_price;
    spec.initial_value = 1.0;
    spec.mean_profile = SeasonalProfile::constant(0.0);
    spec.kappa = RegimeSchedule::constant(1.0);
    spec.sigma = RegimeSchedule::constant(1.0);
    const auto m = exact_log_price_moments(spec, 1.0);
    CHECK(m.variance == doctest::Approx((1.0 - std::exp(-2.0)) / 2.0).epsilon(1e-12));
}

TEST_CASE("exact_log_price_moments: non-constant kappa is rejected") {
    SeasonalOuSpec spec;
    spec.space = StateSpace::log_price;
    spec.initial_value = 1.0;
    spec.mean_profile = SeasonalProfile::constant(0.0);
    spec.kappa = RegimeSchedule{8, 19, 1.0, 0.5};
    spec.sigma = RegimeSchedule::constant(1.0);
    CHECK_THROWS_AS((void)exact_log_price_moments(spec, 1.0), NonConstantKappa);
}

TEST_CASE("monte carlo matches exact log-price moments (reduced scale)") {
    SeasonalOuSpec spec;
    spec.space = StateSpace::log_price;
    spec.initial_value = 1.1;
    spec.mean_profile = SeasonalProfile{24.0, {0.1, 0.2}};
    spec.kappa = RegimeSchedule::constant(1.0);
    spec.sigma = RegimeSchedule{8, 19, 0.3, 0.2};

    const double horizon = 6.0;
    const double dt = 0.01;
    const std::size_t n_paths = 20000;
    const auto n_steps = static_cast<std::size_t>(horizon / dt);
    RngStream rng(123, streams::diagnostics);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i) {
        double y = spec.initial_state();
        for (std::size_t n = 0; n < n_steps; ++n) {
            y = ou_step(spec, y, dt * static_cast<double>(n), dt, rng.normal(i, n, 0));
        }
        sum += y;
        sum_sq += y * y;
    }
    const double mean = sum / static_cast<double>(n_paths);
    const double var = sum_sq / static_cast<double>(n_paths) - mean * mean;
    const auto exact = exact_log_price_moments(spec, horizon);
    const double se = std::sqrt(var / static_cast<double>(n_paths));
    CHECK(std::abs(mean - exact.mean) < 3.0 * se);
    CHECK(std::abs(var - exact.variance) < 0.05 * exact.variance);
}

TEST_CASE("spec validation") {
    SeasonalOuSpec spec = level_spec(1.0, 1.0, 0.1);
    CHECK_NOTHROW(spec.validate());
    spec.kappa.night_value = 0.0;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = level_spec(1.0, 1.0, 0.1);
    spec.space = StateSpace::log_price;
    spec.initial_value = -2.0;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
}
