#include "kinstor/costs.hpp"

namespace kinstor::costs {

void CostParams::validate() const {
    if (lambda_a <= 0.0) throw ValidationError("costs: lambda_a must be > 0");
    if (lambda_v < 0.0 || gamma < 0.0 || omega < 0.0 || c_bat < 0.0 || c_con < 0.0) {
        throw ValidationError("costs: weights must be >= 0");
    }
}

double h_asym(double x, double gain) {
    return x < 0.0 ? gain * x * x : 2.0 * gain * x * x;
}

double running_cost(const battery::StateVector& z, double ramp, double mean_x, double mean_hv,
                    const CostParams& p) {
    return z.s * (z.h + z.v) + p.lambda_v * z.v * z.v + p.lambda_a * ramp * ramp +
           h_asym(z.x - mean_x, p.c_bat) + h_asym(z.h + z.v - mean_hv, p.c_con);
}

CostBreakdown running_cost_terms(const battery::StateVector& z, double ramp, double mean_x,
                                 double mean_hv, const CostParams& p, bool benchmark_mode) {
    CostBreakdown out;
    out.grid = z.s * (z.h + z.v);
    out.degradation = p.lambda_v * z.v * z.v;
    out.ramp = benchmark_mode ? 0.0 : p.lambda_a * ramp * ramp;
    out.mf_battery = h_asym(z.x - mean_x, p.c_bat);
    out.mf_consumption = h_asym(z.h + z.v - mean_hv, p.c_con);
    return out;
}

double terminal_cost(const battery::StateVector& z_t, double mean_x_t, const CostParams& p) {
    const double dev = z_t.x - mean_x_t;
    return -p.gamma * z_t.s * z_t.x + 0.5 * p.omega * dev * dev;
}

std::array<double, 4> terminal_gradient(const battery::StateVector& z_t, double mean_x_t,
                                        const CostParams& p) {
    return {-p.gamma * z_t.x, 0.0, 0.0, -p.gamma * z_t.s + p.omega * (z_t.x - mean_x_t)};
}

double optimal_ramp(const battery::StateVector& z, double zeta_v, double mean_v,
                    const battery::BatteryParams& bp, const CostParams& cp) {
    return -battery::phi(z.x, bp) * zeta_v / (2.0 * cp.lambda_a * battery::sigma_v(z, mean_v, bp));
}

}  // namespace kinstor::costs
