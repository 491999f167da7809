#pragma once

#include <optional>
#include <vector>

#include "kinstor/errors.hpp"

namespace kinstor::models {

/// Truncated trigonometric polynomial with a fixed fundamental period,
/// coefficient layout a0, a1, b1, a2, b2, ... (cosine leading):
///   f(t) = a0 + sum_k [ a_k cos(2 pi k t / period) + b_k sin(2 pi k t / period) ]
struct SeasonalProfile {
    double period_hours = 24.0;
    std::vector<double> coefficients = {0.0};  // size 1 + 2*degree

    int degree() const noexcept { return static_cast<int>((coefficients.size() - 1) / 2); }
    double eval(double t_hours) const;

    static SeasonalProfile constant(double a0, double period_hours = 24.0) {
        return SeasonalProfile{period_hours, {a0}};
    }
};

/// Piecewise-constant day/night schedule. The day regime covers hours of day
/// in the half-open window [day_start_hour, day_end_hour); everything else is
/// night.
struct RegimeSchedule {
    int day_start_hour = 8;
    int day_end_hour = 19;
    double day_value = 0.0;
    double night_value = 0.0;

    bool is_day(double t_hours) const;
    double at(double t_hours) const { return is_day(t_hours) ? day_value : night_value; }
    bool is_constant(double rel_tol = 1e-12) const;

    static RegimeSchedule constant(double v, int start = 8, int end = 19) {
        return RegimeSchedule{start, end, v, v};
    }
};

/// Which space the scalar state lives in: log-price processes evolve the
/// logarithm and are exponentiated only at read-out; load processes evolve
/// the level directly.
enum class StateSpace { log_price, level };

/// One regime-switching seasonal Ornstein-Uhlenbeck model:
///   dy_t = kappa(t) (m(t) - y_t) dt + sigma(t) dW_t
/// with y = log S for price and y = H for load. For the log-price case the
/// drift target carries the Ito level correction,
///   m(t) = mean(t) - sigma(t)^2 / (2 kappa(t)),
/// so the closed-form moment formulas and the Euler simulator describe the
/// same process. For level processes m(t) = mean(t).
struct SeasonalOuSpec {
    SeasonalProfile mean_profile;
    std::optional<SeasonalProfile> weekly_profile;  // summed with mean_profile when present
    RegimeSchedule kappa;                           // 1/hour
    RegimeSchedule sigma;                           // units / sqrt(hour)
    StateSpace space = StateSpace::level;
    double initial_value = 0.0;  // S_0 (price, > 0) or H_0 (kW)

    /// Throws ValidationError on violated invariants.
    void validate() const;

    /// Initial state in the simulated space (log S_0 for price).
    double initial_state() const;
};

struct ScheduleValues {
    double mu = 0.0;
    double kappa = 0.0;
    double sigma = 0.0;
};

/// Seasonal mean and regime values at time t (mu reduced modulo the profile
/// period, regimes modulo 24 h). Total function.
ScheduleValues evaluate_schedule(const SeasonalOuSpec& spec, double t_hours);

/// Drift target of the simulated state at time t: the seasonal mean for level
/// processes, minus sigma^2/(2 kappa) for log-price processes.
double drift_target(const SeasonalOuSpec& spec, double t_hours);

/// One explicit Euler-Maruyama step of the state (log-value for price).
/// `noise` is a standard normal draw; the step is deterministic given
/// (spec, state, t, dt, noise).
double ou_step(const SeasonalOuSpec& spec, double state, double t_hours, double dt_hours,
               double noise);

struct LogPriceMoments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Exact mean and variance of log S_t for the constant-kappa log-price model,
///   E[log S_t]   = e^{-kappa t} log S_0 + int_0^t kappa e^{-kappa (t-u)} m(u) du,
///   var(log S_t) = int_0^t sigma(u)^2 e^{-2 kappa (t-u)} du,
/// with m(u) the Ito-corrected drift target. The mean integral is evaluated by
/// piecewise Gauss-Legendre quadrature split at regime boundaries; the
/// variance integral is piecewise exact. Throws NonConstantKappa when the
/// day/night kappa values differ.
LogPriceMoments exact_log_price_moments(const SeasonalOuSpec& spec, double t_hours);

}  // namespace kinstor::models
