#pragma once

#include <array>

#include "kinstor/battery.hpp"

namespace kinstor::costs {

/// Weights of the objective. Units are chosen so every running-cost term is
/// currency per hour.
struct CostParams {
    double lambda_v = 0.001;  // degradation weight on |V|^2
    double lambda_a = 0.01;   // ramp-effort weight on a^2 (must stay > 0)
    double gamma = 1.0;       // residual-energy value at the horizon
    double omega = 0.01;      // terminal coordination weight
    double c_bat = 0.0001;    // mean-field SOC alignment gain
    double c_con = 0.01;      // mean-field consumption alignment gain

    void validate() const;
};

/// Accumulated cost of one trajectory decomposed by source term.
struct CostBreakdown {
    double grid = 0.0;
    double degradation = 0.0;
    double ramp = 0.0;
    double mf_battery = 0.0;
    double mf_consumption = 0.0;
    double terminal = 0.0;

    double total() const {
        return grid + degradation + ramp + mf_battery + mf_consumption + terminal;
    }
};

/// Asymmetric quadratic penalty c*((x^-)^2 + 2(x^+)^2): positive deviations
/// cost twice as much as negative ones.
double h_asym(double x, double gain);

/// Running cost
///   f = S(H+V) + lambda_v |V|^2 + lambda_a a^2
///       + h_bat(X - E[X]) + h_con(H+V - E[H+V]).
/// `mean_x` and `mean_hv` are the ensemble means, treated as frozen constants.
double running_cost(const battery::StateVector& z, double ramp, double mean_x, double mean_hv,
                    const CostParams& p);

/// Same quantity split by term; `benchmark_mode` zeroes the ramp term.
CostBreakdown running_cost_terms(const battery::StateVector& z, double ramp, double mean_x,
                                 double mean_hv, const CostParams& p, bool benchmark_mode);

/// Terminal cost g = -gamma S_T X_T + (omega/2)(X_T - E[X_T])^2.
double terminal_cost(const battery::StateVector& z_t, double mean_x_t, const CostParams& p);

/// Gradient of g in (S, H, V, X), with the ensemble mean frozen:
///   (-gamma X_T, 0, 0, -gamma S_T + omega (X_T - E[X_T])).
std::array<double, 4> terminal_gradient(const battery::StateVector& z_t, double mean_x_t,
                                        const CostParams& p);

/// Closed-form minimizer of the reduced Hamiltonian in the ramp control:
///   a* = -phi(X) zeta_V / (2 lambda_a sigma^V(z, mean_v)).
double optimal_ramp(const battery::StateVector& z, double zeta_v, double mean_v,
                    const battery::BatteryParams& bp, const CostParams& cp);

}  // namespace kinstor::costs
