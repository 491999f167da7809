#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kinstor/battery.hpp"
#include "kinstor/errors.hpp"
#include "kinstor/rng.hpp"

namespace kinstor::ensemble {

/// Empirical means the dynamics and costs couple through.
struct EnsembleMeans {
    double mean_v = 0.0;
    double mean_x = 0.0;
    double mean_hv = 0.0;
};

/// Batch of trajectories over a uniform time grid t_n = n T / N, immutable
/// once a step is written. The per-time means are the particle approximation
/// of the time-marginal law (the only functionals of it the model uses).
class ParticleEnsemble {
public:
    ParticleEnsemble() = default;
    ParticleEnsemble(double horizon_hours, std::size_t n_steps, std::size_t n_particles);

    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t n_particles() const noexcept { return n_particles_; }
    double horizon() const noexcept { return horizon_; }
    double dt() const noexcept { return horizon_ / static_cast<double>(n_steps_); }
    double time_at(std::size_t t_index) const { return dt() * static_cast<double>(t_index); }
    const std::vector<double>& time_grid() const noexcept { return time_grid_; }

    battery::StateVector& state(std::size_t t_index, std::size_t particle) {
        return states_[t_index * n_particles_ + particle];
    }
    const battery::StateVector& state(std::size_t t_index, std::size_t particle) const {
        return states_[t_index * n_particles_ + particle];
    }

    std::span<const battery::StateVector> states_at(std::size_t t_index) const {
        return {states_.data() + t_index * n_particles_, n_particles_};
    }

    /// Recompute and cache the means at one time node (fixed-order sums).
    const EnsembleMeans& update_means(std::size_t t_index);
    const EnsembleMeans& means_at(std::size_t t_index) const { return means_[t_index]; }

    std::vector<double> values_at(std::size_t t_index, double battery::StateVector::* field) const;

private:
    double horizon_ = 0.0;
    std::size_t n_steps_ = 0;
    std::size_t n_particles_ = 0;
    std::vector<double> time_grid_;
    std::vector<battery::StateVector> states_;
    std::vector<EnsembleMeans> means_;
};

/// Arithmetic means of (V, X, H+V) across particles at one time node.
EnsembleMeans empirical_means(const ParticleEnsemble& e, std::size_t t_index);

/// Order-statistic quantile with linear interpolation between ranks
/// (h = q (n-1) + 1). Throws EmptyInput.
double quantile(std::span<const double> values, double q);

struct Band {
    double lower = 0.0;
    double upper = 0.0;
};

/// (lower_q, upper_q) quantile pair of a sample.
Band quantile_band(std::span<const double> values, double lower_q, double upper_q);

/// Exact 1-D Wasserstein-1 distance between two equal-size samples: the mean
/// absolute difference of sorted order statistics. Throws SizeMismatch.
double wasserstein1_1d(std::span<const double> samples_a, std::span<const double> samples_b);

/// Convergence surrogate for the mean-field iteration: the max over time of
/// the summed W1 distances of the V and X marginals. A lower bound of the
/// joint 2-D W1; used for monitoring only.
double picard_diagnostic(const ParticleEnsemble& flow_a, const ParticleEnsemble& flow_b);

/// Gaussian path draw honoring the antithetic pairing: particles in the upper
/// half of a paired batch receive the negated draw of their lower-half twin.
double path_normal(const RngStream& rng, std::size_t particle, std::size_t n_particles,
                   bool antithetic, std::size_t step, NoiseChannel channel);

}  // namespace kinstor::ensemble
