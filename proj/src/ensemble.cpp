#include "kinstor/ensemble.hpp"

#include <algorithm>
#include <cmath>

namespace kinstor::ensemble {

ParticleEnsemble::ParticleEnsemble(double horizon_hours, std::size_t n_steps,
                                   std::size_t n_particles)
    : horizon_(horizon_hours),
      n_steps_(n_steps),
      n_particles_(n_particles),
      states_((n_steps + 1) * n_particles),
      means_(n_steps + 1) {
    time_grid_.resize(n_steps + 1);
    for (std::size_t n = 0; n <= n_steps; ++n) {
        time_grid_[n] = horizon_hours * static_cast<double>(n) / static_cast<double>(n_steps);
    }
}

const EnsembleMeans& ParticleEnsemble::update_means(std::size_t t_index) {
    means_[t_index] = empirical_means(*this, t_index);
    return means_[t_index];
}

std::vector<double> ParticleEnsemble::values_at(std::size_t t_index,
                                                double battery::StateVector::* field) const {
    std::vector<double> out(n_particles_);
    for (std::size_t i = 0; i < n_particles_; ++i) out[i] = state(t_index, i).*field;
    return out;
}

EnsembleMeans empirical_means(const ParticleEnsemble& e, std::size_t t_index) {
    EnsembleMeans m;
    const auto states = e.states_at(t_index);
    for (const auto& z : states) {
        m.mean_v += z.v;
        m.mean_x += z.x;
        m.mean_hv += z.h + z.v;
    }
    const double inv_n = 1.0 / static_cast<double>(states.size());
    m.mean_v *= inv_n;
    m.mean_x *= inv_n;
    m.mean_hv *= inv_n;
    return m;
}

double quantile(std::span<const double> values, double q) {
    if (values.empty()) throw EmptyInput("quantile: empty sample");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Band quantile_band(std::span<const double> values, double lower_q, double upper_q) {
    if (values.empty()) throw EmptyInput("quantile_band: empty sample");
    if (!(0.0 <= lower_q && lower_q < upper_q && upper_q <= 1.0)) {
        throw ValidationError("quantile_band: need 0 <= lower_q < upper_q <= 1");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    auto interp = [&](double q) {
        const double h = q * static_cast<double>(sorted.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const auto hi = std::min(lo + 1, sorted.size() - 1);
        return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    };
    return {interp(lower_q), interp(upper_q)};
}

double wasserstein1_1d(std::span<const double> samples_a, std::span<const double> samples_b) {
    if (samples_a.size() != samples_b.size() || samples_a.empty()) {
        throw SizeMismatch("wasserstein1_1d: samples must have equal, nonzero size");
    }
    std::vector<double> a(samples_a.begin(), samples_a.end());
    std::vector<double> b(samples_b.begin(), samples_b.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

double picard_diagnostic(const ParticleEnsemble& flow_a, const ParticleEnsemble& flow_b) {
    if (flow_a.n_steps() != flow_b.n_steps() || flow_a.n_particles() != flow_b.n_particles()) {
        throw SizeMismatch("picard_diagnostic: flows must share grid and particle count");
    }
    double worst = 0.0;
    for (std::size_t n = 0; n <= flow_a.n_steps(); ++n) {
        const double dv = wasserstein1_1d(flow_a.values_at(n, &battery::StateVector::v),
                                          flow_b.values_at(n, &battery::StateVector::v));
        const double dx = wasserstein1_1d(flow_a.values_at(n, &battery::StateVector::x),
                                          flow_b.values_at(n, &battery::StateVector::x));
        worst = std::max(worst, dv + dx);
    }
    return worst;
}

double path_normal(const RngStream& rng, std::size_t particle, std::size_t n_particles,
                   bool antithetic, std::size_t step, NoiseChannel channel) {
    if (antithetic) {
        const std::size_t half = n_particles / 2;
        if (particle >= half) {
            return -rng.normal(particle - half, step, channel);
        }
    }
    return rng.normal(particle, step, channel);
}

}  // namespace kinstor::ensemble
