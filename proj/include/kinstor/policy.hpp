#pragma once

#include <array>
#include <optional>

#include "kinstor/battery.hpp"
#include "kinstor/costs.hpp"
#include "kinstor/net.hpp"

namespace kinstor::policy {

enum class PolicyKind { passive, neural, zero };

/// Load-compensation rule of the passive benchmark: offset the net home load
/// whenever feasible; never discharge an empty battery, never charge a full
/// one. Defines the power directly (the kinetic SDE is suspended).
double passive_power(double h, double x, double x_max);

/// What a policy outputs: a ramp rate fed to the kinetic dynamics, or an
/// imposed power overriding them.
struct Action {
    enum class Type { ramp, power } type = Type::ramp;
    double value = 0.0;
};

/// Everything the neural feedback needs at one state: the diffusion row for
/// the zeta scaling and the parameters of the ramp formula.
struct PolicyContext {
    const net::Checkpoint* checkpoint = nullptr;
    battery::BatteryParams battery;
    costs::CostParams costs;
    std::array<double, 3> sigma_diag = {0.0, 0.0, 0.0};
};

/// Unified policy interface. Neural evaluates the decoupling field and
/// returns the Hamiltonian-minimizing ramp; passive returns an imposed power;
/// zero returns ramp 0. Throws MissingCheckpoint for neural without one.
Action act(PolicyKind kind, double t, const battery::StateVector& z, double mean_v,
           const PolicyContext& ctx);

}  // namespace kinstor::policy
