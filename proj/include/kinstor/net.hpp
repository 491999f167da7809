#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kinstor/autodiff.hpp"
#include "kinstor/battery.hpp"
#include "kinstor/rng.hpp"

namespace kinstor::net {

enum class Activation : std::uint8_t { sine };

/// Fully connected decoupling-field network u(t, S, H, V, X) -> R.
/// Weight matrices are row-major (out x in); the flat serialization order is
/// W1, b1, W2, b2, ... (the checkpoint payload order).
struct MlpParams {
    std::vector<int> layer_sizes = {5, 64, 64, 64, 64, 1};
    Activation activation = Activation::sine;
    std::vector<std::vector<double>> weights;  // one row-major matrix per layer
    std::vector<std::vector<double>> biases;

    int n_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
    std::size_t n_parameters() const;

    void to_flat(std::vector<double>& out) const;
    void from_flat(const std::vector<double>& flat);
};

/// Glorot-initialized network: weight variance 2/(fan_in + fan_out), zero
/// biases, deterministic in the seed.
MlpParams xavier_init(const std::vector<int>& layer_sizes, std::uint64_t seed);

/// Affine standardization of the five input coordinates (t, S, H, V, X),
/// fit from a pilot simulation. Scales are floored away from zero so the
/// map stays invertible even for constant coordinates.
struct InputScaler {
    std::array<double, 5> shift = {0.0, 0.0, 0.0, 0.0, 0.0};
    std::array<double, 5> scale = {1.0, 1.0, 1.0, 1.0, 1.0};

    double apply(int coord, double x) const { return (x - shift[coord]) / scale[coord]; }

    static InputScaler fit(const std::vector<std::array<double, 5>>& samples,
                           double min_scale = 1e-8);
};

/// Plain evaluation of the network at one point (reference path, no tape).
double forward(const MlpParams& p, const InputScaler& scaler, double t,
               const battery::StateVector& z);

struct ValueAndZeta {
    double y = 0.0;
    std::array<double, 3> zeta = {0.0, 0.0, 0.0};  // (S, H, V) channels
};

/// Joint value and martingale-integrand evaluation:
///   zeta_c = du/dc * sigma_c for c in (S, H, V),
/// with the input gradients obtained from forward tangent channels seeded on
/// the raw coordinates (the scaler chain rule is part of the expression).
/// `sigma_diag` holds the diffusions of (S, H, V) themselves; for the
/// log-stepped price the S entry is sigma^S * S.
ValueAndZeta value_and_zeta(const MlpParams& p, const InputScaler& scaler, double t,
                            const battery::StateVector& z,
                            const std::array<double, 3>& sigma_diag);

// ---- tape composition -------------------------------------------------------

/// One parameter leaf per weight/bias, in flat serialization order.
std::vector<ad::NodeId> make_leaves(ad::Tape& tape, const MlpParams& p);

/// Overwrite leaf values from the (updated) parameters; tape.forward() replays.
void set_leaves(ad::Tape& tape, const std::vector<ad::NodeId>& leaves, const MlpParams& p);

/// Append the scaled network to `tape` over dual inputs (t, S, H, V, X); the
/// caller decides which coordinates carry tangent seeds. Returns u with its
/// tangent channels.
ad::DualValue emit(ad::Tape& tape, const std::vector<ad::NodeId>& leaves, const MlpParams& p,
                   const InputScaler& scaler, const std::array<ad::DualValue, 5>& inputs);

/// Reusable batched evaluator: one persistent tape holding a single network
/// evaluation over `batch` states; replay with new states via set_states +
/// run.
class NetProgram {
public:
    NetProgram(const MlpParams& p, const InputScaler& scaler, std::uint32_t batch);

    void set_params(const MlpParams& p);
    void set_states(double t, std::span<const double> s, std::span<const double> h,
                    std::span<const double> v, std::span<const double> x);
    void run() { tape_.forward(); }

    double y_at(std::uint32_t slot) const { return tape_.value(out_.val, slot); }
    /// Raw input gradient du/dc (before any sigma scaling).
    double grad_at(int channel, std::uint32_t slot) const {
        const ad::NodeId n = out_.tan[static_cast<std::size_t>(channel)];
        return n == ad::kNoNode ? 0.0 : tape_.value(n, slot);
    }

private:
    ad::Tape tape_;
    std::vector<ad::NodeId> leaves_;
    ad::NodeId t_node_ = ad::kNoNode;
    std::array<ad::NodeId, 4> state_nodes_ = {ad::kNoNode, ad::kNoNode, ad::kNoNode, ad::kNoNode};
    ad::DualValue out_;
};

// ---- checkpoints --------------------------------------------------------------

struct Checkpoint {
    MlpParams params;
    InputScaler scaler;
    std::uint64_t master_seed = 0;
    std::int64_t epoch = 0;
};

/// Versioned JSON header + flat little-endian IEEE-754 weight payload;
/// byte-stable across platforms.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace kinstor::net
