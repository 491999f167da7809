#include "kinstor/battery.hpp"

#include <algorithm>
#include <cmath>

namespace kinstor::battery {

void BatteryParams::validate() const {
    if (c1 < 0.0 || c2 < 0.0) throw ValidationError("battery: c1, c2 must be >= 0");
    if (x_max <= 0.0) throw ValidationError("battery: x_max must be > 0");
    if (!(v_min < 0.0 && 0.0 < v_max)) throw ValidationError("battery: need v_min < 0 < v_max");
    if (delta <= 0.0) throw ValidationError("battery: delta must be > 0");
    if (sigma_v <= 0.0) throw ValidationError("battery: sigma_v must be > 0");
    if (sigma_v_h < 0.0 || sigma_v_v < 0.0 || sigma_v_kappa < 0.0) {
        throw ValidationError("battery: diffusion components must be >= 0");
    }
}

double phi(double x, const BatteryParams& p) {
    return std::max(0.0, std::min({1.0, x / p.delta, (p.x_max - x) / p.delta}));
}

double psi(double x, const BatteryParams& p) {
    return std::max(0.0, std::min(1.0, x / p.delta));
}

double drift_v(const StateVector& z, double ramp, const BatteryParams& p) {
    return ramp * phi(z.x, p) + p.c1 * psi(-z.x, p) * psi(p.v_max - z.v, p) -
           p.c2 * psi(z.x - p.x_max, p) * psi(z.v - p.v_min, p);
}

double sigma_v(const StateVector& z, double mean_v, const BatteryParams& p) {
    return p.sigma_v + p.sigma_v_h * std::abs(z.h) + p.sigma_v_v * std::abs(z.v) +
           p.sigma_v_kappa * std::abs(z.v - mean_v);
}

StateVector step(const StateVector& z, double ramp, double mean_v, double ds, double dh,
                 double noise_v, double dt, const BatteryParams& p) {
    StateVector out;
    out.s = z.s + ds;
    out.h = z.h + dh;
    out.v = z.v + drift_v(z, ramp, p) * dt + sigma_v(z, mean_v, p) * std::sqrt(dt) * noise_v;
    out.x = z.x + z.v * dt;  // pre-step V
    return out;
}

}  // namespace kinstor::battery
