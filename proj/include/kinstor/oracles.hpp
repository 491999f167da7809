#pragma once

#include <cstdint>
#include <vector>

#include "kinstor/errors.hpp"

namespace kinstor::oracles {

/// Kinetic-scaling norm |(v, x)| = |v| + |x|^(1/3), homogeneous of degree one
/// under the dilation (v, x) -> (lambda v, lambda^3 x).
double anisotropic_norm(double v, double x);

/// Fundamental solution of (lambda/2) d_vv + v d_x + d_t, evaluated at
/// (t, v, x) -> (s, v', x'). A Gaussian in (v', x') centered at the free
/// transport (v, x + v (s-t)) with covariance
/// [[lambda tau, lambda tau^2/2], [lambda tau^2/2, lambda tau^3/3]].
/// Throws NonCausal when s <= t.
double gamma_kernel(double lambda, double t, double v, double x, double s, double v_prime,
                    double x_prime);

/// Physicists' Gauss-Hermite rule (weight e^{-u^2}) of size n.
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;

    static GaussHermite build(int n);
};

/// Quadrature checks of the kernel against its claimed closed form. All use
/// tensor Gauss-Hermite aligned to the kernel's own covariance (the tau^3
/// anisotropy makes axis-aligned rectangles useless).
struct KernelMoments {
    double mass = 0.0;       // should be 1
    double mean_v = 0.0;     // v
    double mean_x = 0.0;     // x + v tau
    double cov_vv = 0.0;     // lambda tau
    double cov_vx = 0.0;     // lambda tau^2 / 2
    double cov_xx = 0.0;     // lambda tau^3 / 3
};
KernelMoments kernel_moments(double lambda, double t, double v, double x, double s,
                             int quadrature_n);

/// |Gamma(t,.;s,.) - int Gamma(t,.;r,w) Gamma(r,w;s,.) dw| at fixed endpoints.
/// Decays with quadrature_n; the semigroup property holds exactly.
double chapman_kolmogorov_residual(double lambda, double t, double r, double s, double v,
                                   double x, double v_prime, double x_prime, int quadrature_n);

/// Euler-simulated uncontrolled Langevin pair dV = sqrt(lambda) dW, dX = V dt
/// against the kernel moments. Antithetic draws make the mean transport exact.
struct EulerKernelReport {
    double sim_mean_v = 0.0, sim_mean_x = 0.0;
    double sim_var_v = 0.0, sim_var_x = 0.0, sim_cov_vx = 0.0;
    double exact_mean_v = 0.0, exact_mean_x = 0.0;
    double exact_var_v = 0.0, exact_var_x = 0.0, exact_cov_vx = 0.0;
    double se_var_v = 0.0, se_var_x = 0.0, se_cov_vx = 0.0;  // Monte Carlo standard errors
};
EulerKernelReport euler_vs_kernel(double lambda, double dt, std::size_t n_paths, double horizon,
                                  double v0, double x0, std::uint64_t seed);

// ---- linear-quadratic reduction ---------------------------------------------

/// Degenerate LQ problem: dv = a dt + sigma dW, dx = v dt,
/// running cost lambda_v v^2 + lambda_a a^2, terminal omega_t x^2.
struct LqConfig {
    double sigma = 0.1;
    double lambda_v = 0.001;
    double lambda_a = 0.01;
    double omega_t = 0.01;
    double horizon = 1.0;

    void validate() const;
};

/// Value function u(t, z) = z' P(t) z + r(t) from the matrix Riccati ODE
///   -P' = A'P + PA + Q - (1/lambda_a) P B B' P,   P(T) = diag(0, omega_t),
///   -r' = sigma^2 P_vv,                            r(T) = 0,
/// with A = [[0,0],[1,0]], B = (1,0)', Q = diag(lambda_v, 0) over z = (v, x),
/// integrated by RK4 on a dense grid and linearly interpolated.
class LqSolution {
public:
    static LqSolution solve(const LqConfig& config, int n_steps = 10000);

    const LqConfig& config() const { return config_; }
    double value(double t, double v, double x) const;
    /// du/dv = 2 (P(t) z)_v.
    double dv_value(double t, double v, double x) const;
    /// LQR feedback a*(t, z) = -(P(t) z)_v / lambda_a.
    double feedback(double t, double v, double x) const;

    double p_vv(double t) const { return interp(p_vv_, t); }
    double p_vx(double t) const { return interp(p_vx_, t); }
    double p_xx(double t) const { return interp(p_xx_, t); }
    double r_offset(double t) const { return interp(r_, t); }

private:
    double interp(const std::vector<double>& table, double t) const;

    LqConfig config_;
    double dt_ = 0.0;
    std::vector<double> p_vv_, p_vx_, p_xx_, r_;  // indexed by t on the grid
};

/// Independent check of the Riccati oracle: Monte Carlo cost of the LQR
/// feedback policy rolled out with Euler steps from a deterministic start.
double lq_mc_cost(const LqSolution& lq, double v0, double x0, std::size_t n_paths, int n_steps,
                  std::uint64_t seed);

}  // namespace kinstor::oracles
