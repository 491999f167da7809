#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "kinstor/ensemble.hpp"
#include "kinstor/policy.hpp"
#include "kinstor/solver.hpp"

namespace kinstor::evaluate {

/// Substream id namespace for evaluation rollouts (kept away from training
/// epoch ids so evaluation paths never alias training paths).
inline constexpr std::uint64_t kEvalSubstream = 0xe0000000ull;

/// Accumulated cost of one trajectory: J_n = sum_{k<n} f(t_k) dt (left
/// endpoint rule on the Euler grid), with the terminal cost added at the last
/// node. `ramps` may be empty when the policy imposes power directly;
/// benchmark runs zero the ramp term.
std::vector<costs::CostBreakdown> accumulate_cost(
    const solver::Problem& problem, std::span<const battery::StateVector> trajectory,
    std::span<const ensemble::EnsembleMeans> means, std::span<const double> ramps, double dt,
    bool benchmark_mode);

/// One evaluated Monte Carlo run: states, per-(time, particle) accumulated
/// cost, and the final per-particle breakdowns.
struct EvaluationRun {
    policy::PolicyKind kind = policy::PolicyKind::zero;
    ensemble::ParticleEnsemble particles;
    std::vector<double> j;                               // (N+1) x M cumulative totals
    std::vector<costs::CostBreakdown> final_breakdown;   // M
    std::uint64_t master_seed = 0;
    bool benchmark_mode = false;
};

/// Roll a policy forward over fresh evaluation paths. Runs with the same
/// (master_seed, eval_id, antithetic, n_steps, n_particles) consume identical
/// exogenous draws whatever the policy, so controlled/benchmark comparisons
/// are paired by construction.
EvaluationRun run_policy(const solver::Problem& problem, policy::PolicyKind kind,
                         const net::Checkpoint* checkpoint, std::size_t n_steps,
                         std::size_t n_particles, bool antithetic, std::uint64_t master_seed,
                         std::uint64_t eval_id = 0);

struct SeriesStats {
    std::vector<double> mean, median, lower, upper;  // per time node
};

/// Per-time mean/median/band of the accumulated cost of a run.
SeriesStats cost_statistics(const EvaluationRun& run, double band_level);

/// Per-time mean/band plus three sample paths of one state coordinate.
struct StateStats {
    std::vector<double> mean, lower, upper;
    std::array<std::vector<double>, 3> samples;
};
StateStats state_statistics(const ensemble::ParticleEnsemble& particles,
                            double battery::StateVector::* field, double band_level);

struct ComparisonReport {
    double band_level = 0.9;
    std::vector<double> time;
    SeriesStats controlled;
    SeriesStats benchmark;
    double mean_diff_terminal = 0.0;  // controlled - benchmark at T
    double ci_lower = 0.0;            // paired bootstrap 95% interval
    double ci_upper = 0.0;
    std::array<std::size_t, 3> sample_indices = {0, 0, 0};
    bool paired_seeds = false;
};

/// Controlled-vs-benchmark comparison on a common grid: per-time statistics
/// of J for both runs, the terminal mean difference with a paired-bootstrap
/// 95% interval, and three exported sample trajectories. Throws GridMismatch.
ComparisonReport compare(const EvaluationRun& controlled, const EvaluationRun& benchmark,
                         double band_level = 0.9, std::size_t bootstrap_resamples = 2000,
                         std::uint64_t bootstrap_seed = 7);

}  // namespace kinstor::evaluate
