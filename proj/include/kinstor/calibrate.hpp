#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "kinstor/ensemble.hpp"
#include "kinstor/models.hpp"

namespace kinstor::calibrate {

enum class SeriesKind { price, load };

/// Uniformly sampled observation window. Prices must be positive (they are
/// regressed in log space); resampling of irregular data is out of scope.
struct ObservedSeries {
    std::vector<double> timestamps;  // hours since window start, strictly increasing
    std::vector<double> values;      // currency/kWh (price) or kW (load)
    SeriesKind kind = SeriesKind::load;

    void validate() const;
    double dt() const { return timestamps[1] - timestamps[0]; }
};

/// Fit summary. kappa estimates at the clip floor indicate near-unit-root
/// data: the mean-reversion rate is not identified and the seasonal profile
/// falls back to a direct fit of the levels.
struct CalibrationReport {
    models::SeasonalOuSpec spec;
    double residual_std_day = 0.0;
    double residual_std_night = 0.0;
    double r_squared = 0.0;
    std::size_t n_day = 0;
    std::size_t n_night = 0;
    bool kappa_floored_day = false;
    bool kappa_floored_night = false;
};

inline constexpr double kKappaFloor = 1e-6;

/// Regression-based estimation of the seasonal OU parameters.
///
/// The discretized dynamics  dy = kappa (m(t) - y) dt + sigma dW  (y = log S
/// or y = H) give, per regime, the linear model
///   y_{n+1} - y_n = dt * basis(t_n) beta - kappa dt (y_n - ybar) + eps_n
/// which is solved by ordinary least squares jointly in (beta, kappa); the
/// seasonal coefficients are recovered as beta/kappa (plus the regime level
/// ybar folded into the constant) and averaged across regimes weighted by
/// sample count. Per-regime sigma = std(residuals)/sqrt(dt). For price
/// series the log-space drift target is Ito-corrected, so the per-regime
/// constant gets sigma^2/(2 kappa) added back before averaging.
///
/// Throws TooFewSamples / DegenerateDesign.
CalibrationReport fit(const ObservedSeries& series, int degree,
                      std::pair<int, int> day_window = {8, 19});

/// Per-time empirical confidence band of the calibrated model in observable
/// space (price, not log-price): Monte Carlo quantiles at (1-level)/2 and
/// 1-(1-level)/2 across simulated paths started at spec.initial_value.
std::vector<ensemble::Band> confidence_band(const models::SeasonalOuSpec& spec,
                                            const std::vector<double>& t_grid, double level,
                                            std::size_t n_paths, std::uint64_t seed);

}  // namespace kinstor::calibrate
