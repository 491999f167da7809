#include <doctest.h>

#include <cmath>

#include "kinstor/battery.hpp"
#include "kinstor/rng.hpp"

using namespace kinstor;
using namespace kinstor::battery;

TEST_CASE("phi: plateau, ramps, clamps") {
    BatteryParams p;  // Table defaults: delta=1, x_max=10
    CHECK(phi(5.0, p) == doctest::Approx(1.0));
    CHECK(phi(0.5, p) == doctest::Approx(0.5));
    CHECK(phi(9.7, p) == doctest::Approx(0.3));
    CHECK(phi(-0.2, p) == doctest::Approx(0.0));
    CHECK(phi(10.4, p) == doctest::Approx(0.0));
}

TEST_CASE("psi: one-sided ramp") {
    BatteryParams p;
    CHECK(psi(-1.0, p) == doctest::Approx(0.0));
    CHECK(psi(0.25, p) == doctest::Approx(0.25));
    CHECK(psi(7.0, p) == doctest::Approx(1.0));
}

TEST_CASE("phi/psi stay in [0,1]; phi vanishes outside the SOC range") {
    BatteryParams p;
    RngStream rng(5, streams::diagnostics);
    for (int i = 0; i < 200; ++i) {
        const double x = 30.0 * (rng.uniform(i, 0, 0) - 0.5);
        CHECK(phi(x, p) >= 0.0);
        CHECK(phi(x, p) <= 1.0);
        CHECK(psi(x, p) >= 0.0);
        CHECK(psi(x, p) <= 1.0);
        if (x <= 0.0 || x >= p.x_max) CHECK(phi(x, p) == 0.0);
    }
}

TEST_CASE("drift_v: interior control, boundary push-back") {
    BatteryParams p;
    CHECK(drift_v({0.1, 0.0, 0.0, 5.0}, 0.7, p) == doctest::Approx(0.7));
    CHECK(drift_v({0.1, 0.0, 0.0, -0.5}, 0.0, p) == doctest::Approx(5.0));
    CHECK(drift_v({0.1, 0.0, 0.0, 10.5}, 0.0, p) == doctest::Approx(-5.0));
}

TEST_CASE("drift_v: numerical Lipschitz bound (1-norm)") {
    BatteryParams p;
    RngStream rng(6, streams::diagnostics);
    for (int i = 0; i < 300; ++i) {
        const double a = 4.0 * (rng.uniform(i, 0, 0) - 0.5);
        StateVector z1{0.1, 0.0, 6.0 * (rng.uniform(i, 1, 0) - 0.5),
                       14.0 * (rng.uniform(i, 2, 0) - 0.5)};
        StateVector z2{0.1, 0.0, 6.0 * (rng.uniform(i, 3, 0) - 0.5),
                       14.0 * (rng.uniform(i, 4, 0) - 0.5)};
        const double lhs = std::abs(drift_v(z1, a, p) - drift_v(z2, a, p));
        const double dist = std::abs(z1.v - z2.v) + std::abs(z1.x - z2.x);
        const double lipschitz = (std::abs(a) + p.c1 + p.c2) / p.delta;
        CHECK(lhs <= lipschitz * dist + 1e-12);
    }
}

TEST_CASE("sigma_v: base value and direct evaluation") {
    BatteryParams p;
    CHECK(sigma_v({0.1, 0.0, 0.0, 5.0}, 0.0, p) == doctest::Approx(0.01));
    CHECK(sigma_v({0.1, 2.0, 1.0, 5.0}, 1.0, p) == doctest::Approx(0.013));
}

TEST_CASE("sigma_v: load term is linear in |H|") {
    BatteryParams p;
    const double base = sigma_v({0.1, 1.5, 0.3, 5.0}, 0.3, p);
    const double doubled = sigma_v({0.1, 3.0, 0.3, 5.0}, 0.3, p);
    CHECK(doubled - base == doctest::Approx(p.sigma_v_h * 1.5));
}

TEST_CASE("step: drift-free kinetic transport") {
    BatteryParams p;
    StateVector z{0.1, 0.0, 1.0, 5.0};
    const StateVector out = step(z, 0.0, z.v, 0.0, 0.0, 0.0, 0.16, p);
    CHECK(out.x == doctest::Approx(5.16));
    CHECK(out.v == doctest::Approx(1.0));
}

TEST_CASE("step: noiseless double integrator against the closed form") {
    BatteryParams p;
    p.sigma_v = 1e-300;  // effectively zero diffusion, keeps params valid
    const double a = 0.5;
    const double dt = 0.01;
    const int n_steps = 100;
    StateVector z{0.1, 0.0, 0.0, 3.0};
    for (int n = 0; n < n_steps; ++n) z = step(z, a, z.v, 0.0, 0.0, 0.0, dt, p);
    const double t = dt * n_steps;
    CHECK(z.v == doctest::Approx(a * t).epsilon(1e-12));
    CHECK(std::abs(z.x - (3.0 + 0.5 * a * t * t)) <= 0.5 * a * t * dt + 1e-12);
}

TEST_CASE("step: bit-identical reproducibility") {
    BatteryParams p;
    RngStream rng(9, streams::paths);
    auto run = [&]() {
        StateVector z{0.1, 0.5, 0.0, 5.0};
        for (std::size_t n = 0; n < 50; ++n) {
            z = step(z, 0.3, 0.0, 0.001, -0.002, rng.normal(7, n, 2), 0.1, p);
        }
        return z;
    };
    const StateVector a = run();
    const StateVector b = run();
    CHECK(a.v == b.v);
    CHECK(a.x == b.x);
}

TEST_CASE("battery params validation") {
    BatteryParams p;
    CHECK_NOTHROW(p.validate());
    p.sigma_v = 0.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = BatteryParams{};
    p.v_min = 0.5;
    CHECK_THROWS_AS(p.validate(), ValidationError);
}
