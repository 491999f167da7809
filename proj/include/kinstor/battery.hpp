#pragma once

#include "kinstor/errors.hpp"

namespace kinstor::battery {

/// Physical battery parameters. Soft state constraints: the drift pushes the
/// power back when the state of charge leaves [0, x_max], with ramp width
/// `delta`; there are no hard bounds.
struct BatteryParams {
    double c1 = 10.0;  // push-back gain at empty SOC [kW/h]
    double c2 = 10.0;  // push-back gain at full SOC  [kW/h]
    double x_max = 10.0;     // capacity [kWh]
    double v_max = 2.0;      // max charging power [kW]
    double v_min = -2.0;     // max discharging power [kW]
    double delta = 1.0;      // saturation ramp width
    double sigma_v = 0.01;   // base power diffusion [kW/sqrt(h)]
    double sigma_v_h = 0.001;      // load-proportional diffusion
    double sigma_v_v = 0.001;      // power-proportional diffusion
    double sigma_v_kappa = 0.001;  // mean-deviation-proportional diffusion

    void validate() const;
};

/// One agent's state: price S [currency/kWh], net home load H [kW], battery
/// power V [kW] (charging > 0), state of charge X [kWh].
struct StateVector {
    double s = 0.0;
    double h = 0.0;
    double v = 0.0;
    double x = 0.0;
};

/// Two-sided saturation: 1 on [delta, x_max - delta], linear ramps, 0 outside
/// [0, x_max].
double phi(double x, const BatteryParams& p);

/// One-sided ramp: max{0, min{1, x/delta}}.
double psi(double x, const BatteryParams& p);

/// Power drift b^V = a*phi(X) + c1*psi(-X)*psi(v_max - V) - c2*psi(X - x_max)*psi(V - v_min).
/// The control acts only while the SOC is inside the admissible band; the c1
/// term pushes V up near empty, the c2 term pushes V down near full.
double drift_v(const StateVector& z, double ramp, const BatteryParams& p);

/// State-dependent power diffusion
/// sigma^V = sigma_v + sigma_v_h|H| + sigma_v_v|V| + sigma_v_kappa|V - mean_V|.
/// Strictly positive whenever sigma_v > 0.
double sigma_v(const StateVector& z, double mean_v, const BatteryParams& p);

/// Explicit Euler step of the kinetic pair: V advances with drift + diffusion,
/// X integrates the pre-step V. S and H advance by the supplied exogenous
/// increments.
StateVector step(const StateVector& z, double ramp, double mean_v, double ds, double dh,
                 double noise_v, double dt, const BatteryParams& p);

}  // namespace kinstor::battery
