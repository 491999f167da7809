#include <doctest.h>

#include <cmath>

#include "kinstor/costs.hpp"
#include "kinstor/rng.hpp"

using namespace kinstor;
using namespace kinstor::costs;
using kinstor::battery::BatteryParams;
using kinstor::battery::StateVector;

TEST_CASE("h_asym: asymmetric quadratic") {
    CHECK(h_asym(-1.0, 0.3) == doctest::Approx(0.3));
    CHECK(h_asym(1.0, 0.3) == doctest::Approx(0.6));
    CHECK(h_asym(0.0, 0.3) == doctest::Approx(0.0));
}

TEST_CASE("running_cost: pure grid term at the mean state") {
    CostParams p;
    StateVector z{0.25, 1.4, 0.0, 5.0};
    CHECK(running_cost(z, 0.0, z.x, z.h + z.v, p) == doctest::Approx(z.s * z.h));
}

TEST_CASE("running_cost: direct evaluation with table weights") {
    CostParams p;  // lambda_v=0.001, lambda_a=0.01
    StateVector z{0.1, 1.0, 1.0, 5.0};
    CHECK(running_cost(z, 2.0, z.x, z.h + z.v, p) == doctest::Approx(0.241));
}

TEST_CASE("running_cost: asymmetry of the mean-field penalty") {
    CostParams p;
    StateVector hi{0.1, 0.0, 0.0, 6.0};
    StateVector lo{0.1, 0.0, 0.0, 4.0};
    const double base = running_cost({0.1, 0.0, 0.0, 5.0}, 0.0, 5.0, 0.0, p);
    const double above = running_cost(hi, 0.0, 5.0, 0.0, p) - base;
    const double below = running_cost(lo, 0.0, 5.0, 0.0, p) - base;
    CHECK(above == doctest::Approx(2.0 * below));
}

TEST_CASE("terminal_cost examples") {
    CostParams p;
    p.gamma = 1.0;
    CHECK(terminal_cost({0.1, 0.0, 0.0, 5.0}, 5.0, p) == doctest::Approx(-0.5));
    p.gamma = 0.0;
    p.omega = 0.01;
    CHECK(terminal_cost({0.1, 0.0, 0.0, 7.0}, 5.0, p) == doctest::Approx(0.02));
    p.gamma = 1.0;
    CHECK(terminal_cost({0.2, 0.0, 0.0, 5.0}, 5.0, p) ==
          doctest::Approx(-p.gamma * 0.2 * 5.0));
}

TEST_CASE("terminal_gradient: components") {
    CostParams p;
    const auto g = terminal_gradient({0.1, 0.3, -0.2, 5.0}, 4.0, p);
    CHECK(g[0] == doctest::Approx(-5.0));
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 0.0);
    CHECK(g[3] == doctest::Approx(-0.1 + 0.01 * 1.0));
}

TEST_CASE("terminal_gradient matches central finite differences") {
    CostParams p;
    RngStream rng(11, streams::diagnostics);
    const double h = 1e-6;
    for (int i = 0; i < 100; ++i) {
        StateVector z{0.05 + rng.uniform(i, 0, 0), 2.0 * (rng.uniform(i, 1, 0) - 0.5),
                      2.0 * (rng.uniform(i, 2, 0) - 0.5), 10.0 * rng.uniform(i, 3, 0)};
        const double mean_x = 10.0 * rng.uniform(i, 4, 0);
        const auto grad = terminal_gradient(z, mean_x, p);

        auto fd = [&](auto perturb) {
            StateVector zp = z, zm = z;
            perturb(zp, h);
            perturb(zm, -h);
            return (terminal_cost(zp, mean_x, p) - terminal_cost(zm, mean_x, p)) / (2.0 * h);
        };
        const double ds = fd([](StateVector& s, double e) { s.s += e; });
        const double dx = fd([](StateVector& s, double e) { s.x += e; });
        CHECK(ds == doctest::Approx(grad[0]).epsilon(1e-7));
        CHECK(dx == doctest::Approx(grad[3]).epsilon(1e-7));
    }
}

TEST_CASE("optimal_ramp examples") {
    BatteryParams bp;
    CostParams cp;
    StateVector interior{0.1, 0.0, 0.0, 5.0};
    CHECK(optimal_ramp(interior, 0.0, 0.0, bp, cp) == doctest::Approx(0.0));
    CHECK(optimal_ramp(interior, 0.0002, 0.0, bp, cp) == doctest::Approx(-1.0));
    StateVector outside{0.1, 0.0, 0.0, -1.5};
    CHECK(optimal_ramp(outside, 123.0, 0.0, bp, cp) == doctest::Approx(0.0));
}

TEST_CASE("optimal_ramp minimizes the reduced Hamiltonian on a grid") {
    BatteryParams bp;
    CostParams cp;
    RngStream rng(13, streams::diagnostics);
    for (int i = 0; i < 100; ++i) {
        StateVector z{0.05 + rng.uniform(i, 0, 0), 4.0 * (rng.uniform(i, 1, 0) - 0.5),
                      4.0 * (rng.uniform(i, 2, 0) - 0.5), 12.0 * rng.uniform(i, 3, 0) - 1.0};
        const double mean_v = rng.uniform(i, 4, 0) - 0.5;
        const double zeta_v = 0.01 * (rng.uniform(i, 5, 0) - 0.5);
        const double a_hat = optimal_ramp(z, zeta_v, mean_v, bp, cp);

        const double p_v = zeta_v / battery::sigma_v(z, mean_v, bp);
        const double phi_x = battery::phi(z.x, bp);
        auto hamiltonian_a = [&](double a) { return a * phi_x * p_v + cp.lambda_a * a * a; };
        double grid_min = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= 1000; ++k) {
            const double a = a_hat - 1.0 + 2.0 * k / 1000.0;
            grid_min = std::min(grid_min, hamiltonian_a(a));
        }
        CHECK(hamiltonian_a(a_hat) <= grid_min + 1e-12);
        // Lipschitz bound on the minimizer magnitude
        CHECK(std::abs(a_hat) <= std::abs(p_v) * phi_x / (2.0 * cp.lambda_a) + 1e-12);
    }
}

TEST_CASE("cost breakdown totals its components") {
    CostParams p;
    StateVector z{0.15, 1.0, -0.5, 3.0};
    const auto terms = running_cost_terms(z, 0.8, 4.0, 0.2, p, false);
    CHECK(terms.total() == doctest::Approx(terms.grid + terms.degradation + terms.ramp +
                                           terms.mf_battery + terms.mf_consumption +
                                           terms.terminal)
                               .epsilon(1e-12));
    CHECK(terms.grid + terms.degradation + terms.ramp + terms.mf_battery + terms.mf_consumption ==
          doctest::Approx(running_cost(z, 0.8, 4.0, 0.2, p)).epsilon(1e-12));
    const auto bench = running_cost_terms(z, 0.8, 4.0, 0.2, p, true);
    CHECK(bench.ramp == 0.0);
}
