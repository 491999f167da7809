#include "kinstor/evaluate.hpp"

#include <algorithm>
#include <cmath>

namespace kinstor::evaluate {

std::vector<costs::CostBreakdown> accumulate_cost(
    const solver::Problem& problem, std::span<const battery::StateVector> trajectory,
    std::span<const ensemble::EnsembleMeans> means, std::span<const double> ramps, double dt,
    bool benchmark_mode) {
    if (trajectory.empty() || trajectory.size() != means.size()) {
        throw SizeMismatch("accumulate_cost: trajectory/means length mismatch");
    }
    const std::size_t n_steps = trajectory.size() - 1;
    std::vector<costs::CostBreakdown> series(trajectory.size());
    costs::CostBreakdown acc;
    series[0] = acc;
    for (std::size_t n = 0; n < n_steps; ++n) {
        const double ramp = ramps.empty() ? 0.0 : ramps[n];
        const costs::CostBreakdown f =
            problem.running_terms(trajectory[n], ramp, means[n], benchmark_mode);
        acc.grid += f.grid * dt;
        acc.degradation += f.degradation * dt;
        acc.ramp += f.ramp * dt;
        acc.mf_battery += f.mf_battery * dt;
        acc.mf_consumption += f.mf_consumption * dt;
        series[n + 1] = acc;
    }
    series[n_steps].terminal =
        problem.terminal_cost(trajectory[n_steps], means[n_steps].mean_x);
    return series;
}

namespace {

EvaluationRun run_uncontrolled(const solver::Problem& problem, policy::PolicyKind kind,
                               std::size_t n_steps, std::size_t m, bool antithetic,
                               std::uint64_t master_seed, std::uint64_t eval_id) {
    const double horizon = problem.horizon();
    const double dt = horizon / static_cast<double>(n_steps);
    const RngStream rng =
        RngStream(master_seed, streams::paths).substream(kEvalSubstream + eval_id + 1);
    const solver::ExogenousPaths exo =
        problem.simulate_exogenous(n_steps, m, antithetic, rng);

    const bool passive = kind == policy::PolicyKind::passive;
    double x_max = 0.0;
    if (passive) {
        const auto* storage = dynamic_cast<const solver::StorageProblem*>(&problem);
        if (storage == nullptr) {
            throw ValidationError("passive policy requires the storage problem");
        }
        x_max = storage->battery_params().x_max;
    }

    EvaluationRun run;
    run.kind = kind;
    run.master_seed = master_seed;
    run.benchmark_mode = passive;
    run.particles = ensemble::ParticleEnsemble(horizon, n_steps, m);

    std::vector<double> vv(m), xv(m);
    for (std::size_t i = 0; i < m; ++i) {
        const battery::StateVector z0 = problem.initial_state(i, master_seed);
        vv[i] = z0.v;
        xv[i] = z0.x;
    }
    for (std::size_t n = 0; n <= n_steps; ++n) {
        for (std::size_t i = 0; i < m; ++i) {
            battery::StateVector z{exo.s[n * m + i], exo.h[n * m + i], vv[i], xv[i]};
            if (passive) z.v = policy::passive_power(z.h, z.x, x_max);
            run.particles.state(n, i) = z;
        }
        const ensemble::EnsembleMeans means = run.particles.update_means(n);
        if (n == n_steps) break;
        for (std::size_t i = 0; i < m; ++i) {
            const battery::StateVector z = run.particles.state(n, i);
            if (passive) {
                vv[i] = z.v;  // will be re-imposed next node
                xv[i] = z.x + z.v * dt;
            } else {
                const double noise_v =
                    ensemble::path_normal(rng, i, m, antithetic, n, NoiseChannel::power);
                const double ds = exo.s[(n + 1) * m + i] - exo.s[n * m + i];
                const double dh = exo.h[(n + 1) * m + i] - exo.h[n * m + i];
                const battery::StateVector z_next =
                    problem.step_state(z, 0.0, means.mean_v, ds, dh, noise_v, dt);
                vv[i] = z_next.v;
                xv[i] = z_next.x;
            }
        }
    }
    return run;
}

void fill_costs(const solver::Problem& problem, EvaluationRun& run,
                const std::vector<double>* ramps) {
    const std::size_t n_steps = run.particles.n_steps();
    const std::size_t m = run.particles.n_particles();
    const double dt = run.particles.dt();
    run.j.assign((n_steps + 1) * m, 0.0);
    run.final_breakdown.resize(m);

    std::vector<battery::StateVector> traj(n_steps + 1);
    std::vector<ensemble::EnsembleMeans> means(n_steps + 1);
    for (std::size_t n = 0; n <= n_steps; ++n) means[n] = run.particles.means_at(n);
    std::vector<double> particle_ramps(ramps ? n_steps : 0);

    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t n = 0; n <= n_steps; ++n) traj[n] = run.particles.state(n, i);
        if (ramps) {
            for (std::size_t n = 0; n < n_steps; ++n) particle_ramps[n] = (*ramps)[n * m + i];
        }
        const auto series = accumulate_cost(problem, traj, means,
                                            ramps ? std::span<const double>(particle_ramps)
                                                  : std::span<const double>(),
                                            dt, run.benchmark_mode);
        for (std::size_t n = 0; n <= n_steps; ++n) run.j[n * m + i] = series[n].total();
        run.final_breakdown[i] = series[n_steps];
    }
}

}  // namespace

EvaluationRun run_policy(const solver::Problem& problem, policy::PolicyKind kind,
                         const net::Checkpoint* checkpoint, std::size_t n_steps,
                         std::size_t n_particles, bool antithetic, std::uint64_t master_seed,
                         std::uint64_t eval_id) {
    if (kind == policy::PolicyKind::neural) {
        if (checkpoint == nullptr) throw MissingCheckpoint("neural evaluation needs a checkpoint");
        solver::TrainingConfig config;
        config.n_steps = static_cast<int>(n_steps);
        config.n_particles = n_particles;
        config.antithetic = antithetic;
        config.master_seed = master_seed;
        config.hidden_layers.assign(checkpoint->params.layer_sizes.begin() + 1,
                                    checkpoint->params.layer_sizes.end() - 1);
        const solver::RolloutRecord rec = solver::rollout(
            problem, checkpoint->params, checkpoint->scaler, config, kEvalSubstream + eval_id);
        EvaluationRun run;
        run.kind = kind;
        run.master_seed = master_seed;
        run.benchmark_mode = false;
        run.particles = rec.particles;
        fill_costs(problem, run, &rec.ramp);
        return run;
    }
    EvaluationRun run =
        run_uncontrolled(problem, kind, n_steps, n_particles, antithetic, master_seed, eval_id);
    fill_costs(problem, run, nullptr);
    return run;
}

SeriesStats cost_statistics(const EvaluationRun& run, double band_level) {
    const std::size_t n_steps = run.particles.n_steps();
    const std::size_t m = run.particles.n_particles();
    const double q_lo = 0.5 * (1.0 - band_level);
    SeriesStats stats;
    std::vector<double> slice(m);
    for (std::size_t n = 0; n <= n_steps; ++n) {
        for (std::size_t i = 0; i < m; ++i) slice[i] = run.j[n * m + i];
        double mean = 0.0;
        for (double v : slice) mean += v;
        stats.mean.push_back(mean / static_cast<double>(m));
        stats.median.push_back(ensemble::quantile(slice, 0.5));
        const auto band = ensemble::quantile_band(slice, q_lo, 1.0 - q_lo);
        stats.lower.push_back(band.lower);
        stats.upper.push_back(band.upper);
    }
    return stats;
}

StateStats state_statistics(const ensemble::ParticleEnsemble& particles,
                            double battery::StateVector::* field, double band_level) {
    const std::size_t n_steps = particles.n_steps();
    const std::size_t m = particles.n_particles();
    const double q_lo = 0.5 * (1.0 - band_level);
    const std::array<std::size_t, 3> picks = {0, m / 3, (2 * m) / 3};
    StateStats stats;
    for (std::size_t n = 0; n <= n_steps; ++n) {
        const auto values = particles.values_at(n, field);
        double mean = 0.0;
        for (double v : values) mean += v;
        stats.mean.push_back(mean / static_cast<double>(m));
        const auto band = ensemble::quantile_band(values, q_lo, 1.0 - q_lo);
        stats.lower.push_back(band.lower);
        stats.upper.push_back(band.upper);
        for (int k = 0; k < 3; ++k) {
            stats.samples[static_cast<std::size_t>(k)].push_back(values[picks[static_cast<std::size_t>(k)]]);
        }
    }
    return stats;
}

ComparisonReport compare(const EvaluationRun& controlled, const EvaluationRun& benchmark,
                         double band_level, std::size_t bootstrap_resamples,
                         std::uint64_t bootstrap_seed) {
    const std::size_t n_steps = controlled.particles.n_steps();
    const std::size_t m = controlled.particles.n_particles();
    if (benchmark.particles.n_steps() != n_steps || benchmark.particles.n_particles() != m ||
        std::abs(benchmark.particles.horizon() - controlled.particles.horizon()) > 1e-12) {
        throw GridMismatch("compare: runs must share the time grid and particle count");
    }

    ComparisonReport report;
    report.band_level = band_level;
    report.time = controlled.particles.time_grid();
    report.controlled = cost_statistics(controlled, band_level);
    report.benchmark = cost_statistics(benchmark, band_level);
    report.paired_seeds = controlled.master_seed == benchmark.master_seed;
    report.sample_indices = {0, m / 3, (2 * m) / 3};

    std::vector<double> diff(m);
    for (std::size_t i = 0; i < m; ++i) {
        diff[i] = controlled.j[n_steps * m + i] - benchmark.j[n_steps * m + i];
    }
    double mean_diff = 0.0;
    for (double d : diff) mean_diff += d;
    report.mean_diff_terminal = mean_diff / static_cast<double>(m);

    RngStream rng(bootstrap_seed, streams::bootstrap);
    std::vector<double> resampled(bootstrap_resamples);
    for (std::size_t b = 0; b < bootstrap_resamples; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const auto idx = static_cast<std::size_t>(rng.uniform(b, i, 0) *
                                                      static_cast<double>(m));
            acc += diff[std::min(idx, m - 1)];
        }
        resampled[b] = acc / static_cast<double>(m);
    }
    report.ci_lower = ensemble::quantile(resampled, 0.025);
    report.ci_upper = ensemble::quantile(resampled, 0.975);
    return report;
}

}  // namespace kinstor::evaluate
