#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kinstor/autodiff.hpp"
#include "kinstor/battery.hpp"
#include "kinstor/costs.hpp"
#include "kinstor/ensemble.hpp"
#include "kinstor/models.hpp"
#include "kinstor/net.hpp"
#include "kinstor/oracles.hpp"

namespace kinstor::solver {

/// Pre-simulated exogenous block of one epoch: price/load paths, their
/// Brownian increments and the (S, H) rows of the diffusion matrix. Row-major
/// [step * n_particles + particle]; path arrays hold N+1 rows, increment
/// arrays N rows.
struct ExogenousPaths {
    std::vector<double> s, h;            // (N+1) x M
    std::vector<double> dw_s, dw_h;      // N x M
    std::vector<double> sigma_s_eff;     // (N+1) x M, diffusion of S itself
    std::vector<double> sigma_h_eff;     // (N+1) x M
};

/// One kinetic mean-field control instance: exogenous factors, controlled
/// power dynamics, and the cost functional. The feedback control is always
/// a*(z, zeta_v) = ramp_coef(z, mean_v) * zeta_v.
class Problem {
public:
    virtual ~Problem() = default;

    virtual double horizon() const = 0;
    virtual battery::StateVector initial_state(std::size_t particle, std::uint64_t seed) const = 0;
    virtual ExogenousPaths simulate_exogenous(std::size_t n_steps, std::size_t n_particles,
                                              bool antithetic, const RngStream& rng) const = 0;

    /// Multiplier turning zeta_V into the Hamiltonian minimizer:
    /// -phi(X) / (2 lambda_a sigma^V).
    virtual double ramp_coef(const battery::StateVector& z, double mean_v) const = 0;
    virtual double sigma_v_eff(const battery::StateVector& z, double mean_v) const = 0;
    virtual double lambda_a() const = 0;

    virtual battery::StateVector step_state(const battery::StateVector& z, double ramp,
                                            double mean_v, double ds, double dh, double noise_v,
                                            double dt) const = 0;

    /// Running cost without the lambda_a a^2 term (which is the only part the
    /// training loss differentiates).
    virtual double running_cost_frozen(const battery::StateVector& z,
                                       const ensemble::EnsembleMeans& m) const = 0;
    virtual costs::CostBreakdown running_terms(const battery::StateVector& z, double ramp,
                                               const ensemble::EnsembleMeans& m,
                                               bool benchmark_mode) const = 0;
    virtual double terminal_cost(const battery::StateVector& z, double mean_x) const = 0;
    /// Gradient of the terminal cost in (S, H, V) (mean frozen).
    virtual std::array<double, 3> terminal_gradient_shv(const battery::StateVector& z,
                                                        double mean_x) const = 0;
};

/// The storage model: seasonal OU price/load, soft-saturated kinetic battery,
/// arbitrage + degradation + mean-field costs.
class StorageProblem final : public Problem {
public:
    StorageProblem(models::SeasonalOuSpec price, models::SeasonalOuSpec load,
                   battery::BatteryParams bp, costs::CostParams cp, double horizon_hours,
                   double initial_soc, bool literal_price_sigma = false);

    double horizon() const override { return horizon_; }
    battery::StateVector initial_state(std::size_t, std::uint64_t) const override;
    ExogenousPaths simulate_exogenous(std::size_t n_steps, std::size_t n_particles,
                                      bool antithetic, const RngStream& rng) const override;
    double ramp_coef(const battery::StateVector& z, double mean_v) const override;
    double sigma_v_eff(const battery::StateVector& z, double mean_v) const override;
    double lambda_a() const override { return costs_.lambda_a; }
    battery::StateVector step_state(const battery::StateVector& z, double ramp, double mean_v,
                                    double ds, double dh, double noise_v,
                                    double dt) const override;
    double running_cost_frozen(const battery::StateVector& z,
                               const ensemble::EnsembleMeans& m) const override;
    costs::CostBreakdown running_terms(const battery::StateVector& z, double ramp,
                                       const ensemble::EnsembleMeans& m,
                                       bool benchmark_mode) const override;
    double terminal_cost(const battery::StateVector& z, double mean_x) const override;
    std::array<double, 3> terminal_gradient_shv(const battery::StateVector& z,
                                                double mean_x) const override;

    const battery::BatteryParams& battery_params() const { return battery_; }
    const costs::CostParams& cost_params() const { return costs_; }
    const models::SeasonalOuSpec& price_spec() const { return price_; }
    const models::SeasonalOuSpec& load_spec() const { return load_; }

private:
    models::SeasonalOuSpec price_;
    models::SeasonalOuSpec load_;
    battery::BatteryParams battery_;
    costs::CostParams costs_;
    double horizon_;
    double initial_soc_;
    bool literal_price_sigma_;
};

/// Degenerate validation instance: dv = a dt + sigma dW, dx = v dt, running
/// cost lambda_v v^2 + lambda_a a^2, terminal omega_t x^2, no exogenous
/// factors (S frozen at 1, H at 0) and no mean-field coupling. Initial states
/// are sampled uniformly from a box so the decoupling field is identified on
/// a neighborhood rather than a single point.
class LqProblem final : public Problem {
public:
    LqProblem(oracles::LqConfig config, double v_box, double x_box);

    double horizon() const override { return config_.horizon; }
    battery::StateVector initial_state(std::size_t particle, std::uint64_t seed) const override;
    ExogenousPaths simulate_exogenous(std::size_t n_steps, std::size_t n_particles,
                                      bool antithetic, const RngStream& rng) const override;
    double ramp_coef(const battery::StateVector&, double) const override;
    double sigma_v_eff(const battery::StateVector&, double) const override {
        return config_.sigma;
    }
    double lambda_a() const override { return config_.lambda_a; }
    battery::StateVector step_state(const battery::StateVector& z, double ramp, double mean_v,
                                    double ds, double dh, double noise_v,
                                    double dt) const override;
    double running_cost_frozen(const battery::StateVector& z,
                               const ensemble::EnsembleMeans& m) const override;
    costs::CostBreakdown running_terms(const battery::StateVector& z, double ramp,
                                       const ensemble::EnsembleMeans& m,
                                       bool benchmark_mode) const override;
    double terminal_cost(const battery::StateVector& z, double mean_x) const override;
    std::array<double, 3> terminal_gradient_shv(const battery::StateVector&,
                                                double) const override {
        return {0.0, 0.0, 0.0};
    }

    const oracles::LqConfig& config() const { return config_; }

private:
    oracles::LqConfig config_;
    double v_box_;
    double x_box_;
};

// ---- training -----------------------------------------------------------------

struct LrStage {
    int until_epoch = 0;  // exclusive upper bound
    double learning_rate = 1e-3;
};

struct TrainingConfig {
    int n_steps = 150;
    std::size_t n_particles = 512;
    int epochs = 400;
    std::vector<int> hidden_layers = {64, 64, 64, 64};
    std::vector<LrStage> lr_schedule;  // empty -> 60/30/10 split at 1e-3/1e-4/1e-5
    double clip_norm = 1.0;
    double momentum = 0.9;
    bool antithetic = true;
    bool freeze_paths = false;
    std::optional<double> ramp_clip;  // optional |a| bound (off by default)
    std::uint64_t master_seed = 42;
    std::uint32_t chunk_width = 64;  // loss-pass batch per worker tape
    int n_workers = 2;               // fixed worker count (part of the config, not the machine)

    void validate() const;
    std::vector<LrStage> effective_schedule() const;
    double learning_rate_at(int epoch) const;
    std::vector<int> layer_sizes() const;
};

/// Frozen result of one forward pass: states, means, noises, per-node network
/// outputs, and every coefficient the loss needs. Everything here is detached
/// from the parameters.
struct RolloutRecord {
    ensemble::ParticleEnsemble particles;
    ExogenousPaths exo;
    std::vector<double> dw_v;         // N x M
    std::vector<double> sigma_v_eff;  // (N+1) x M
    std::vector<double> ramp_coef;    // N x M
    std::vector<double> f_frozen;     // N x M (running cost minus the ramp term)
    std::vector<double> y;            // (N+1) x M network values
    std::vector<double> zeta_s, zeta_h, zeta_v;  // (N+1) x M
    std::vector<double> ramp;                    // N x M realized controls
    std::vector<double> g_terminal;              // M
    std::array<std::vector<double>, 3> zeta_terminal_target;  // M each

    std::size_t n_steps = 0;
    std::size_t n_particles = 0;
    double dt = 0.0;
};

/// Simulate one epoch under the current network feedback. Throws
/// NonFiniteState if any state leaves the finite range.
RolloutRecord rollout(const Problem& problem, const net::MlpParams& params,
                      const net::InputScaler& scaler, const TrainingConfig& config,
                      std::uint64_t epoch);

struct LossBreakdown {
    double path = 0.0;
    double terminal_value = 0.0;
    double terminal_gradient = 0.0;

    double total() const { return path + terminal_value + terminal_gradient; }
};

/// The discretized backward-mismatch loss evaluated on externally supplied
/// field values (y, zeta): the reference implementation of the loss formula,
/// independent of the tape path. Used directly by tests and diagnostics.
LossBreakdown loss_from_fields(const Problem& problem, const RolloutRecord& record,
                               std::span<const double> y, std::span<const double> zeta_s,
                               std::span<const double> zeta_h, std::span<const double> zeta_v,
                               std::optional<double> ramp_clip = std::nullopt);

/// Tape-backed loss and parameter gradient over one particle chunk; workers
/// own one program each and chunks combine in fixed order.
class LossProgram {
public:
    LossProgram(const Problem& problem, const net::MlpParams& params,
                const net::InputScaler& scaler, std::size_t n_steps, double dt,
                std::uint32_t chunk_width, std::optional<double> ramp_clip);

    /// Replay the tape on [chunk_start, chunk_start + chunk_width) and return
    /// the chunk's loss components (mean over the chunk) and accumulate
    /// d(loss)/d(theta) into `grad` (chunk-mean contributions).
    LossBreakdown run_chunk(const RolloutRecord& record, const net::MlpParams& params,
                            std::size_t chunk_start, std::vector<double>& grad);

    ad::NodeId loss_node() const { return loss_; }
    std::size_t chunk_width() const { return chunk_width_; }

private:
    ad::Tape tape_;
    std::vector<ad::NodeId> leaves_;
    std::uint32_t chunk_width_;
    std::size_t n_steps_;
    double dt_;
    double lambda_a_;
    std::optional<double> ramp_clip_;
    // replayable inputs per step
    std::vector<std::array<ad::NodeId, 4>> state_in_;              // S,H,V,X
    std::vector<std::array<ad::NodeId, 3>> sigma_in_;              // sigma rows
    std::vector<ad::NodeId> coef_in_, f_in_;                       // N entries
    std::vector<std::array<ad::NodeId, 3>> dw_in_;                 // N entries
    ad::NodeId g_in_ = ad::kNoNode;
    std::array<ad::NodeId, 3> zeta_target_in_ = {ad::kNoNode, ad::kNoNode, ad::kNoNode};
    ad::NodeId loss_ = ad::kNoNode;
    ad::NodeId loss_path_ = ad::kNoNode;
    ad::NodeId loss_term_val_ = ad::kNoNode;
    ad::NodeId loss_term_grad_ = ad::kNoNode;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double loss_path = 0.0;
    double loss_terminal_value = 0.0;
    double loss_terminal_gradient = 0.0;
    double grad_norm = 0.0;  // pre-clip global norm
    double picard = 0.0;     // vs previous epoch's flow (0 for the first epoch)
    double learning_rate = 0.0;
    double wall_seconds = 0.0;
};

struct TrainingTrace {
    std::vector<EpochStats> epochs;
};

struct TrainResult {
    net::Checkpoint checkpoint;
    TrainingTrace trace;
};

/// Full training loop: pilot-fit the input scaler, then per epoch simulate
/// forward with the current parameters as a frozen feedback policy,
/// differentiate the discretized backward mismatch through the network
/// evaluations only, clip the global gradient norm and apply momentum SGD on
/// the staged learning-rate schedule. Non-finite rollouts or losses restore
/// the last good parameters, halve the learning rate and retry (up to 3
/// consecutive times). When `checkpoint_dir` is given, checkpoints are
/// written at stage boundaries and at the end.
TrainResult train(const Problem& problem, const TrainingConfig& config,
                  const std::string& checkpoint_dir = "",
                  std::vector<ensemble::ParticleEnsemble>* epoch_flows = nullptr);

/// Scaler fit from a zero-control pilot simulation.
net::InputScaler pilot_scaler(const Problem& problem, const TrainingConfig& config);

}  // namespace kinstor::solver
