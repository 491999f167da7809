#include "kinstor/oracles.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "kinstor/ensemble.hpp"
#include "kinstor/rng.hpp"

namespace kinstor::oracles {

namespace {
constexpr double kPi = 3.14159265358979323846264338328;
constexpr double kSqrtPi = 1.77245385090551602729816748334;

struct Chol2 {
    double l11, l21, l22, det;
};

// Cholesky factor of the kernel covariance for time increment tau.
Chol2 kernel_chol(double lambda, double tau) {
    const double s11 = lambda * tau;
    const double s21 = 0.5 * lambda * tau * tau;
    const double s22 = lambda * tau * tau * tau / 3.0;
    Chol2 c;
    c.l11 = std::sqrt(s11);
    c.l21 = s21 / c.l11;
    c.l22 = std::sqrt(s22 - c.l21 * c.l21);
    c.det = c.l11 * c.l22;
    return c;
}
}  // namespace

double anisotropic_norm(double v, double x) {
    return std::abs(v) + std::cbrt(std::abs(x));
}

double gamma_kernel(double lambda, double t, double v, double x, double s, double v_prime,
                    double x_prime) {
    if (!(s > t)) throw NonCausal("gamma_kernel: requires s > t");
    if (!(lambda > 0.0)) throw ValidationError("gamma_kernel: lambda must be > 0");
    const double tau = s - t;
    const double dv = v_prime - v;
    const double dx = x_prime - x - v * tau;
    const double expo = -2.0 * dv * dv / (lambda * tau) +
                        6.0 * dv * dx / (lambda * tau * tau) -
                        6.0 * dx * dx / (lambda * tau * tau * tau);
    return std::sqrt(3.0) / (kPi * lambda * tau * tau) * std::exp(expo);
}

GaussHermite GaussHermite::build(int n) {
    if (n < 1) throw ValidationError("gauss-hermite: n must be >= 1");
    // Golub-Welsch: eigen-decompose the symmetric Jacobi matrix of the
    // (physicists') Hermite recurrence, off-diagonal beta_k = sqrt(k/2).
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double beta = std::sqrt(0.5 * static_cast<double>(k));
        jacobi(k, k - 1) = beta;
        jacobi(k - 1, k) = beta;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    GaussHermite out;
    out.nodes.resize(n);
    out.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        out.nodes[i] = eig.eigenvalues()(i);
        const double first = eig.eigenvectors()(0, i);
        out.weights[i] = kSqrtPi * first * first;
    }
    return out;
}

KernelMoments kernel_moments(double lambda, double t, double v, double x, double s,
                             int quadrature_n) {
    if (!(s > t)) throw NonCausal("kernel_moments: requires s > t");
    const double tau = s - t;
    const Chol2 L = kernel_chol(lambda, tau);
    const GaussHermite gh = GaussHermite::build(quadrature_n);

    // Weights with the Gaussian factor removed: w~ = w exp(u^2); then
    // int f = (2 det L) sum_jk w~_j w~_k exp(-(u_j^2+u_k^2)) ... f, i.e.
    // int f = 2 det L sum w~_j w~_k f(m + sqrt(2) L u).
    std::vector<double> mod_w(gh.nodes.size());
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
        mod_w[i] = gh.weights[i] * std::exp(gh.nodes[i] * gh.nodes[i]);
    }

    const double mv = v;
    const double mx = x + v * tau;
    KernelMoments m;
    double sum_vv = 0.0, sum_vx = 0.0, sum_xx = 0.0;
    for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
        for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
            const double uj = gh.nodes[j], uk = gh.nodes[k];
            const double vp = mv + std::sqrt(2.0) * L.l11 * uj;
            const double xp = mx + std::sqrt(2.0) * (L.l21 * uj + L.l22 * uk);
            const double f = gamma_kernel(lambda, t, v, x, s, vp, xp);
            const double wgt = mod_w[j] * mod_w[k] * f;
            m.mass += wgt;
            m.mean_v += wgt * vp;
            m.mean_x += wgt * xp;
            sum_vv += wgt * (vp - mv) * (vp - mv);
            sum_vx += wgt * (vp - mv) * (xp - mx);
            sum_xx += wgt * (xp - mx) * (xp - mx);
        }
    }
    const double scale = 2.0 * L.det;
    m.mass *= scale;
    m.mean_v *= scale;
    m.mean_x *= scale;
    m.cov_vv = sum_vv * scale;
    m.cov_vx = sum_vx * scale;
    m.cov_xx = sum_xx * scale;
    // Means/covariances are reported unnormalized by mass on purpose: with a
    // correct kernel mass = 1, so any normalization defect shows up in every
    // reported moment.
    return m;
}

double chapman_kolmogorov_residual(double lambda, double t, double r, double s, double v,
                                   double x, double v_prime, double x_prime, int quadrature_n) {
    if (!(t < r && r < s)) throw NonCausal("chapman_kolmogorov: requires t < r < s");
    const double tau1 = r - t;
    const Chol2 L = kernel_chol(lambda, tau1);
    const GaussHermite gh = GaussHermite::build(quadrature_n);

    const double mv = v;
    const double mx = x + v * tau1;
    // int Gamma(t,z; r,w) Gamma(r,w; s,z') dw, with the Gaussian weight of the
    // first kernel absorbed into the quadrature: the modified-weight sum
    // reduces to (1/pi) sum w_j w_k Gamma(r, m + sqrt(2) L u; s, z').
    double acc = 0.0;
    for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
        for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
            const double vw = mv + std::sqrt(2.0) * L.l11 * gh.nodes[j];
            const double xw = mx + std::sqrt(2.0) * (L.l21 * gh.nodes[j] + L.l22 * gh.nodes[k]);
            acc += gh.weights[j] * gh.weights[k] *
                   gamma_kernel(lambda, r, vw, xw, s, v_prime, x_prime);
        }
    }
    const double convolved = acc / kPi;
    return std::abs(gamma_kernel(lambda, t, v, x, s, v_prime, x_prime) - convolved);
}

EulerKernelReport euler_vs_kernel(double lambda, double dt, std::size_t n_paths, double horizon,
                                  double v0, double x0, std::uint64_t seed) {
    if (n_paths % 2 != 0) throw ValidationError("euler_vs_kernel: n_paths must be even");
    const auto n_steps = static_cast<std::size_t>(std::llround(horizon / dt));
    const double sqrt_l_dt = std::sqrt(lambda * dt);
    RngStream rng(seed, streams::diagnostics);

    std::vector<double> vt(n_paths), xt(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) {
        double vv = v0, xx = x0;
        for (std::size_t n = 0; n < n_steps; ++n) {
            const double z =
                ensemble::path_normal(rng, i, n_paths, /*antithetic=*/true, n, NoiseChannel::power);
            xx += vv * dt;  // pre-step V
            vv += sqrt_l_dt * z;
        }
        vt[i] = vv;
        xt[i] = xx;
    }

    EulerKernelReport rep;
    const double inv_n = 1.0 / static_cast<double>(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) {
        rep.sim_mean_v += vt[i] * inv_n;
        rep.sim_mean_x += xt[i] * inv_n;
    }
    double m4v = 0.0, m4x = 0.0, m2vx2 = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i) {
        const double dv = vt[i] - rep.sim_mean_v;
        const double dx = xt[i] - rep.sim_mean_x;
        rep.sim_var_v += dv * dv * inv_n;
        rep.sim_var_x += dx * dx * inv_n;
        rep.sim_cov_vx += dv * dx * inv_n;
        m4v += dv * dv * dv * dv * inv_n;
        m4x += dx * dx * dx * dx * inv_n;
        m2vx2 += dv * dv * dx * dx * inv_n;
    }

    const double tt = dt * static_cast<double>(n_steps);
    rep.exact_mean_v = v0;
    rep.exact_mean_x = x0 + v0 * tt;
    rep.exact_var_v = lambda * tt;
    rep.exact_var_x = lambda * tt * tt * tt / 3.0;
    rep.exact_cov_vx = lambda * tt * tt / 2.0;
    const double n_eff = static_cast<double>(n_paths);
    rep.se_var_v = std::sqrt(std::max(0.0, m4v - rep.sim_var_v * rep.sim_var_v) / n_eff);
    rep.se_var_x = std::sqrt(std::max(0.0, m4x - rep.sim_var_x * rep.sim_var_x) / n_eff);
    rep.se_cov_vx = std::sqrt(std::max(0.0, m2vx2 - rep.sim_cov_vx * rep.sim_cov_vx) / n_eff);
    return rep;
}

void LqConfig::validate() const {
    if (lambda_a <= 0.0) throw ValidationError("lq: lambda_a must be > 0");
    if (sigma <= 0.0) throw ValidationError("lq: sigma must be > 0");
    if (lambda_v < 0.0 || omega_t < 0.0) throw ValidationError("lq: weights must be >= 0");
    if (horizon <= 0.0) throw ValidationError("lq: horizon must be > 0");
}

LqSolution LqSolution::solve(const LqConfig& config, int n_steps) {
    config.validate();
    LqSolution sol;
    sol.config_ = config;
    sol.dt_ = config.horizon / static_cast<double>(n_steps);
    sol.p_vv_.assign(n_steps + 1, 0.0);
    sol.p_vx_.assign(n_steps + 1, 0.0);
    sol.p_xx_.assign(n_steps + 1, 0.0);
    sol.r_.assign(n_steps + 1, 0.0);

    // Terminal data at index n_steps; integrate backward in t (forward in
    // s = T - t) with classic RK4.
    sol.p_xx_[n_steps] = config.omega_t;

    struct State {
        double pvv, pvx, pxx, r;
    };
    auto rhs = [&](const State& y) {
        State d;
        d.pvv = 2.0 * y.pvx + config.lambda_v - y.pvv * y.pvv / config.lambda_a;
        d.pvx = y.pxx - y.pvv * y.pvx / config.lambda_a;
        d.pxx = -y.pvx * y.pvx / config.lambda_a;
        d.r = config.sigma * config.sigma * y.pvv;
        return d;
    };

    State y = {0.0, 0.0, config.omega_t, 0.0};
    const double h = sol.dt_;
    for (int i = n_steps; i-- > 0;) {
        const State k1 = rhs(y);
        const State y2 = {y.pvv + 0.5 * h * k1.pvv, y.pvx + 0.5 * h * k1.pvx,
                          y.pxx + 0.5 * h * k1.pxx, y.r + 0.5 * h * k1.r};
        const State k2 = rhs(y2);
        const State y3 = {y.pvv + 0.5 * h * k2.pvv, y.pvx + 0.5 * h * k2.pvx,
                          y.pxx + 0.5 * h * k2.pxx, y.r + 0.5 * h * k2.r};
        const State k3 = rhs(y3);
        const State y4 = {y.pvv + h * k3.pvv, y.pvx + h * k3.pvx, y.pxx + h * k3.pxx,
                          y.r + h * k3.r};
        const State k4 = rhs(y4);
        y.pvv += h / 6.0 * (k1.pvv + 2.0 * k2.pvv + 2.0 * k3.pvv + k4.pvv);
        y.pvx += h / 6.0 * (k1.pvx + 2.0 * k2.pvx + 2.0 * k3.pvx + k4.pvx);
        y.pxx += h / 6.0 * (k1.pxx + 2.0 * k2.pxx + 2.0 * k3.pxx + k4.pxx);
        y.r += h / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r);
        sol.p_vv_[i] = y.pvv;
        sol.p_vx_[i] = y.pvx;
        sol.p_xx_[i] = y.pxx;
        sol.r_[i] = y.r;
    }
    return sol;
}

double LqSolution::interp(const std::vector<double>& table, double t) const {
    const double pos = t / dt_;
    if (pos <= 0.0) return table.front();
    if (pos >= static_cast<double>(table.size() - 1)) return table.back();
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    return table[lo] + frac * (table[lo + 1] - table[lo]);
}

double LqSolution::value(double t, double v, double x) const {
    return p_vv(t) * v * v + 2.0 * p_vx(t) * v * x + p_xx(t) * x * x + r_offset(t);
}

double LqSolution::dv_value(double t, double v, double x) const {
    return 2.0 * (p_vv(t) * v + p_vx(t) * x);
}

double LqSolution::feedback(double t, double v, double x) const {
    return -(p_vv(t) * v + p_vx(t) * x) / config_.lambda_a;
}

double lq_mc_cost(const LqSolution& lq, double v0, double x0, std::size_t n_paths, int n_steps,
                  std::uint64_t seed) {
    const LqConfig& c = lq.config();
    const double dt = c.horizon / static_cast<double>(n_steps);
    const double sqrt_dt = std::sqrt(dt);
    RngStream rng(seed, streams::diagnostics);

    double total = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i) {
        double v = v0, x = x0, cost = 0.0;
        for (int n = 0; n < n_steps; ++n) {
            const double t = dt * static_cast<double>(n);
            const double a = lq.feedback(t, v, x);
            cost += (c.lambda_v * v * v + c.lambda_a * a * a) * dt;
            const double z = ensemble::path_normal(rng, i, n_paths, /*antithetic=*/true,
                                                   static_cast<std::size_t>(n),
                                                   NoiseChannel::power);
            const double v_new = v + a * dt + c.sigma * sqrt_dt * z;
            x += v * dt;
            v = v_new;
        }
        cost += c.omega_t * x * x;
        total += cost;
    }
    return total / static_cast<double>(n_paths);
}

}  // namespace kinstor::oracles
