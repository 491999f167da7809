#include "kinstor/calibrate.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace kinstor::calibrate {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kProfilePeriod = 24.0;

void basis_row(double t, int degree, double* out) {
    out[0] = 1.0;
    const double w = kTwoPi / kProfilePeriod;
    for (int k = 1; k <= degree; ++k) {
        out[2 * k - 1] = std::cos(w * k * t);
        out[2 * k] = std::sin(w * k * t);
    }
}

struct RegimeFit {
    std::vector<double> mu_coeffs;  // trig coefficients of the drift target
    double kappa = 0.0;
    double sigma = 0.0;
    double sse = 0.0;
    std::size_t n = 0;
    bool floored = false;
};

// Direct seasonal fit of the levels, used when kappa is not identified.
std::vector<double> fit_levels(const std::vector<double>& t, const std::vector<double>& y,
                               const std::vector<std::size_t>& rows, int degree) {
    const int p = 1 + 2 * degree;
    Eigen::MatrixXd design(rows.size(), p);
    Eigen::VectorXd rhs(rows.size());
    std::vector<double> row(p);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        basis_row(t[rows[i]], degree, row.data());
        for (int j = 0; j < p; ++j) design(static_cast<Eigen::Index>(i), j) = row[j];
        rhs(static_cast<Eigen::Index>(i)) = y[rows[i]];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < p) throw DegenerateDesign("seasonal level fit is rank-deficient");
    Eigen::VectorXd beta = qr.solve(rhs);
    return {beta.data(), beta.data() + p};
}

RegimeFit fit_regime(const std::vector<double>& t, const std::vector<double>& y,
                     const std::vector<std::size_t>& rows, int degree, double dt,
                     bool ito_corrected) {
    const int p = 1 + 2 * degree;
    RegimeFit out;
    out.n = rows.size();
    if (rows.size() < static_cast<std::size_t>(p + 2)) {
        throw TooFewSamples("regime has too few samples for the requested degree");
    }

    double ybar = 0.0;
    for (std::size_t i : rows) ybar += y[i];
    ybar /= static_cast<double>(rows.size());

    // Columns: dt * basis(t_n), and -dt * (y_n - ybar) for kappa.
    Eigen::MatrixXd design(rows.size(), p + 1);
    Eigen::VectorXd rhs(rows.size());
    std::vector<double> row(p);
    double kappa_col_norm = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t n = rows[i];
        basis_row(t[n], degree, row.data());
        for (int j = 0; j < p; ++j) design(static_cast<Eigen::Index>(i), j) = dt * row[j];
        const double centered = y[n] - ybar;
        design(static_cast<Eigen::Index>(i), p) = -dt * centered;
        kappa_col_norm += centered * centered;
        rhs(static_cast<Eigen::Index>(i)) = y[n + 1] - y[n];
    }
    kappa_col_norm = std::sqrt(kappa_col_norm / static_cast<double>(rows.size()));

    const double level_scale = std::max(1.0, std::abs(ybar));
    if (kappa_col_norm < 1e-9 * level_scale) {
        // Constant data in this regime: the response carries no reversion
        // signal. Fit the seasonal profile to the levels directly.
        out.kappa = kKappaFloor;
        out.floored = true;
        out.mu_coeffs = fit_levels(t, y, rows, degree);
        double sse = 0.0;
        for (Eigen::Index i = 0; i < rhs.size(); ++i) sse += rhs(i) * rhs(i);
        out.sse = sse;
        out.sigma = std::sqrt(sse / static_cast<double>(rows.size())) / std::sqrt(dt);
        return out;
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < p + 1) {
        throw DegenerateDesign("regression design matrix is rank-deficient");
    }
    Eigen::VectorXd coef = qr.solve(rhs);
    Eigen::VectorXd resid = rhs - design * coef;
    out.sse = resid.squaredNorm();
    const auto dof = static_cast<double>(rows.size() - static_cast<std::size_t>(p + 1));
    const double resid_var = out.sse / dof;
    out.sigma = std::sqrt(resid_var) / std::sqrt(dt);

    const double kappa = coef(p);
    // Near-unit-root guard: a reversion rate that is not significantly
    // positive (2 standard errors) is reported at the floor and the seasonal
    // profile falls back to a direct level fit.
    const Eigen::MatrixXd xtx_inv =
        (design.transpose() * design).ldlt().solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
    const double kappa_se = std::sqrt(std::max(0.0, resid_var * xtx_inv(p, p)));
    if (kappa <= std::max(kKappaFloor, 2.0 * kappa_se)) {
        out.kappa = kKappaFloor;
        out.floored = true;
        out.mu_coeffs = fit_levels(t, y, rows, degree);
        return out;
    }
    out.kappa = kappa;
    out.mu_coeffs.assign(p, 0.0);
    for (int j = 0; j < p; ++j) out.mu_coeffs[j] = coef(j) / kappa;
    out.mu_coeffs[0] += ybar;
    if (ito_corrected) {
        // The regression sees the Ito-corrected log drift target; report the
        // uncorrected seasonal mean.
        out.mu_coeffs[0] += out.sigma * out.sigma / (2.0 * kappa);
    }
    return out;
}

}  // namespace

void ObservedSeries::validate() const {
    if (timestamps.size() != values.size()) {
        throw ValidationError("series: timestamps/values length mismatch");
    }
    if (timestamps.size() < 48) throw TooFewSamples("series: need at least 48 samples");
    const double step = timestamps[1] - timestamps[0];
    if (step <= 0.0) throw ValidationError("series: timestamps must be strictly increasing");
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
        const double d = timestamps[i] - timestamps[i - 1];
        if (std::abs(d - step) > 1e-9 * std::max(1.0, std::abs(step))) {
            throw ValidationError("series: spacing must be uniform (within 1e-9 relative)");
        }
    }
    if (kind == SeriesKind::price) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i] <= 0.0) {
                throw ValidationError("series: price values must be positive (row " +
                                      std::to_string(i + 1) + ")");
            }
        }
    }
}

CalibrationReport fit(const ObservedSeries& series, int degree, std::pair<int, int> day_window) {
    series.validate();
    if (degree < 0) throw ValidationError("calibrate: degree must be >= 0");
    if (!(0 <= day_window.first && day_window.first < day_window.second &&
          day_window.second < 24)) {
        throw ValidationError("calibrate: invalid day window");
    }

    const bool is_price = series.kind == SeriesKind::price;
    const double dt = series.dt();
    std::vector<double> y(series.values.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = is_price ? std::log(series.values[i]) : series.values[i];
    }

    std::vector<std::size_t> day_rows, night_rows;
    for (std::size_t n = 0; n + 1 < y.size(); ++n) {
        const double hour = std::fmod(series.timestamps[n], 24.0);
        const bool day = hour >= day_window.first && hour < day_window.second;
        (day ? day_rows : night_rows).push_back(n);
    }

    const RegimeFit day = fit_regime(series.timestamps, y, day_rows, degree, dt, is_price);
    const RegimeFit night = fit_regime(series.timestamps, y, night_rows, degree, dt, is_price);

    // Sample-count-weighted average of the per-regime seasonal coefficients.
    const double w_day = static_cast<double>(day.n) / static_cast<double>(day.n + night.n);
    std::vector<double> mu(day.mu_coeffs.size());
    for (std::size_t j = 0; j < mu.size(); ++j) {
        mu[j] = w_day * day.mu_coeffs[j] + (1.0 - w_day) * night.mu_coeffs[j];
    }

    CalibrationReport report;
    report.spec.mean_profile = models::SeasonalProfile{kProfilePeriod, mu};
    report.spec.kappa = models::RegimeSchedule{day_window.first, day_window.second, day.kappa,
                                               night.kappa};
    report.spec.sigma = models::RegimeSchedule{day_window.first, day_window.second,
                                               std::max(day.sigma, 1e-12),
                                               std::max(night.sigma, 1e-12)};
    report.spec.space = is_price ? models::StateSpace::log_price : models::StateSpace::level;
    report.spec.initial_value = series.values.front();
    report.residual_std_day = day.sigma;
    report.residual_std_night = night.sigma;
    report.n_day = day.n;
    report.n_night = night.n;
    report.kappa_floored_day = day.floored;
    report.kappa_floored_night = night.floored;

    double sst = 0.0, mean_dy = 0.0;
    const auto n_rows = static_cast<double>(day.n + night.n);
    for (std::size_t n = 0; n + 1 < y.size(); ++n) mean_dy += (y[n + 1] - y[n]) / n_rows;
    for (std::size_t n = 0; n + 1 < y.size(); ++n) {
        const double d = y[n + 1] - y[n] - mean_dy;
        sst += d * d;
    }
    const double sse = day.sse + night.sse;
    report.r_squared = sst > 0.0 ? std::clamp(1.0 - sse / sst, 0.0, 1.0) : 1.0;
    return report;
}

std::vector<ensemble::Band> confidence_band(const models::SeasonalOuSpec& spec,
                                            const std::vector<double>& t_grid, double level,
                                            std::size_t n_paths, std::uint64_t seed) {
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence_band: level in (0,1)");
    if (n_paths < 100) throw ValidationError("confidence_band: need n_paths >= 100");
    if (t_grid.empty() || t_grid.front() != 0.0) {
        throw ValidationError("confidence_band: grid must start at 0");
    }

    const bool is_price = spec.space == models::StateSpace::log_price;
    const double max_dt = 0.05;
    RngStream rng(seed, streams::paths);

    // states in simulation space, one per path
    std::vector<double> state(n_paths, spec.initial_state());
    std::vector<std::vector<double>> observable(t_grid.size());
    observable[0].assign(n_paths, spec.initial_value);

    std::size_t draw_index = 0;
    for (std::size_t g = 0; g + 1 < t_grid.size(); ++g) {
        const double span = t_grid[g + 1] - t_grid[g];
        if (span <= 0.0) throw ValidationError("confidence_band: grid must be increasing");
        const auto substeps = static_cast<std::size_t>(std::ceil(span / max_dt));
        const double dt = span / static_cast<double>(substeps);
        for (std::size_t s = 0; s < substeps; ++s) {
            const double t = t_grid[g] + dt * static_cast<double>(s);
            for (std::size_t i = 0; i < n_paths; ++i) {
                state[i] = models::ou_step(spec, state[i], t, dt,
                                           rng.normal(i, draw_index, 0));
            }
            ++draw_index;
        }
        observable[g + 1].resize(n_paths);
        for (std::size_t i = 0; i < n_paths; ++i) {
            observable[g + 1][i] = is_price ? std::exp(state[i]) : state[i];
        }
    }

    const double q_lo = 0.5 * (1.0 - level);
    std::vector<ensemble::Band> bands(t_grid.size());
    for (std::size_t g = 0; g < t_grid.size(); ++g) {
        bands[g] = ensemble::quantile_band(observable[g], q_lo, 1.0 - q_lo);
    }
    return bands;
}

}  // namespace kinstor::calibrate
