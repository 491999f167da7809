#include "kinstor/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace kinstor::models {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double positive_mod(double x, double m) {
    double r = std::fmod(x, m);
    return r < 0.0 ? r + m : r;
}

// 16-point Gauss-Legendre rule on [-1, 1] (positive half; symmetric).
constexpr std::array<double, 8> kGlNodes = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274, 0.6178762444026438,
    0.7554044083550030, 0.8656312023878318, 0.9445750230732326, 0.9894009349916499};
constexpr std::array<double, 8> kGlWeights = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

template <class F>
double gauss_legendre(F&& f, double a, double b) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double acc = 0.0;
    for (std::size_t i = 0; i < kGlNodes.size(); ++i) {
        acc += kGlWeights[i] * (f(mid + half * kGlNodes[i]) + f(mid - half * kGlNodes[i]));
    }
    return acc * half;
}

// Ascending regime breakpoints of [0, t]: every day-window edge of every day.
std::vector<double> regime_breakpoints(const SeasonalOuSpec& spec, double t) {
    std::vector<double> cuts = {0.0};
    const int days = static_cast<int>(t / 24.0) + 1;
    for (int d = 0; d <= days; ++d) {
        for (double edge : {24.0 * d + spec.kappa.day_start_hour, 24.0 * d + spec.kappa.day_end_hour}) {
            if (edge > 0.0 && edge < t) cuts.push_back(edge);
        }
    }
    cuts.push_back(t);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    return cuts;
}

}  // namespace

double SeasonalProfile::eval(double t_hours) const {
    if (coefficients.empty()) return 0.0;
    const double w = kTwoPi / period_hours;
    const double t = positive_mod(t_hours, period_hours);
    double acc = coefficients[0];
    for (int k = 1; k <= degree(); ++k) {
        acc += coefficients[2 * k - 1] * std::cos(w * k * t);
        if (static_cast<std::size_t>(2 * k) < coefficients.size()) {
            acc += coefficients[2 * k] * std::sin(w * k * t);
        }
    }
    return acc;
}

bool RegimeSchedule::is_day(double t_hours) const {
    const double hour = positive_mod(t_hours, 24.0);
    return hour >= day_start_hour && hour < day_end_hour;
}

bool RegimeSchedule::is_constant(double rel_tol) const {
    const double scale = std::max(std::abs(day_value), std::abs(night_value));
    return std::abs(day_value - night_value) <= rel_tol * std::max(scale, 1.0);
}

void SeasonalOuSpec::validate() const {
    if (mean_profile.coefficients.size() % 2 != 1) {
        throw ValidationError("mean_profile: coefficient count must be 1 + 2*degree");
    }
    if (mean_profile.period_hours <= 0.0) {
        throw ValidationError("mean_profile: period must be positive");
    }
    if (weekly_profile && weekly_profile->period_hours <= 0.0) {
        throw ValidationError("weekly_profile: period must be positive");
    }
    for (const RegimeSchedule* sched : {&kappa, &sigma}) {
        if (sched->day_start_hour < 0 || sched->day_start_hour >= 24 || sched->day_end_hour < 0 ||
            sched->day_end_hour >= 24) {
            throw ValidationError("regime hours must lie in [0, 24)");
        }
        if (sched->day_start_hour >= sched->day_end_hour) {
            throw ValidationError("day_start_hour must be < day_end_hour");
        }
    }
    if (kappa.day_value <= 0.0 || kappa.night_value <= 0.0) {
        throw ValidationError("kappa must be strictly positive in both regimes");
    }
    if (sigma.day_value <= 0.0 || sigma.night_value <= 0.0) {
        throw ValidationError("sigma must be strictly positive in both regimes");
    }
    if (space == StateSpace::log_price && initial_value <= 0.0) {
        throw ValidationError("log-price spec requires initial_value > 0");
    }
}

double SeasonalOuSpec::initial_state() const {
    return space == StateSpace::log_price ? std::log(initial_value) : initial_value;
}

ScheduleValues evaluate_schedule(const SeasonalOuSpec& spec, double t_hours) {
    ScheduleValues out;
    out.mu = spec.mean_profile.eval(t_hours);
    if (spec.weekly_profile) out.mu += spec.weekly_profile->eval(t_hours);
    out.kappa = spec.kappa.at(t_hours);
    out.sigma = spec.sigma.at(t_hours);
    return out;
}

double drift_target(const SeasonalOuSpec& spec, double t_hours) {
    const ScheduleValues sv = evaluate_schedule(spec, t_hours);
    if (spec.space == StateSpace::log_price) {
        return sv.mu - sv.sigma * sv.sigma / (2.0 * sv.kappa);
    }
    return sv.mu;
}

double ou_step(const SeasonalOuSpec& spec, double state, double t_hours, double dt_hours,
               double noise) {
    const ScheduleValues sv = evaluate_schedule(spec, t_hours);
    const double target = spec.space == StateSpace::log_price
                              ? sv.mu - sv.sigma * sv.sigma / (2.0 * sv.kappa)
                              : sv.mu;
    return state + sv.kappa * (target - state) * dt_hours +
           sv.sigma * std::sqrt(dt_hours) * noise;
}

LogPriceMoments exact_log_price_moments(const SeasonalOuSpec& spec, double t_hours) {
    if (spec.space != StateSpace::log_price) {
        throw ValidationError("exact_log_price_moments requires a log-price spec");
    }
    if (!spec.kappa.is_constant()) {
        throw NonConstantKappa("exact_log_price_moments requires kappa.day == kappa.night");
    }
    const double kappa = spec.kappa.day_value;
    const double t = t_hours;
    LogPriceMoments out;
    if (t <= 0.0) {
        out.mean = std::log(spec.initial_value);
        out.variance = 0.0;
        return out;
    }

    const auto cuts = regime_breakpoints(spec, t);

    double mean = std::exp(-kappa * t) * std::log(spec.initial_value);
    double variance = 0.0;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        const double a = cuts[s];
        const double b = cuts[s + 1];
        mean += gauss_legendre(
            [&](double u) {
                return kappa * std::exp(-kappa * (t - u)) * drift_target(spec, u);
            },
            a, b);
        // sigma is constant inside a segment: integrate exactly.
        const double sig = spec.sigma.at(0.5 * (a + b));
        variance += sig * sig / (2.0 * kappa) *
                    (std::exp(-2.0 * kappa * (t - b)) - std::exp(-2.0 * kappa * (t - a)));
    }
    out.mean = mean;
    out.variance = variance;
    return out;
}

}  // namespace kinstor::models
