#include "kinstor/policy.hpp"

namespace kinstor::policy {

double passive_power(double h, double x, double x_max) {
    if (x <= 0.0) return -std::min(h, 0.0);
    if (x >= x_max) return -std::max(h, 0.0);
    return -h;
}

Action act(PolicyKind kind, double t, const battery::StateVector& z, double mean_v,
           const PolicyContext& ctx) {
    switch (kind) {
        case PolicyKind::zero:
            return {Action::Type::ramp, 0.0};
        case PolicyKind::passive:
            return {Action::Type::power, passive_power(z.h, z.x, ctx.battery.x_max)};
        case PolicyKind::neural: {
            if (ctx.checkpoint == nullptr) {
                throw MissingCheckpoint("neural policy requires a checkpoint");
            }
            const net::ValueAndZeta vz = net::value_and_zeta(
                ctx.checkpoint->params, ctx.checkpoint->scaler, t, z, ctx.sigma_diag);
            return {Action::Type::ramp,
                    costs::optimal_ramp(z, vz.zeta[2], mean_v, ctx.battery, ctx.costs)};
        }
    }
    return {Action::Type::ramp, 0.0};
}

}  // namespace kinstor::policy
