#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "kinstor/errors.hpp"

namespace kinstor::ad {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xffffffffu;

/// Number of forward tangent channels carried by DualValue arithmetic: one
/// per differentiated state coordinate (S, H, V).
inline constexpr int kTangents = 3;

enum class Op : std::uint8_t {
    constant,
    leaf,   // trainable parameter, width 1
    input,  // replayable data, width 1 or batch
    add,
    sub,
    mul,
    div,
    neg,
    sine,
    cosine,
    exp_,
    log_,
    abs_,   // derivative sign(x), 0 at the kink
    sign,   // piecewise-constant, derivative 0
    max_,   // ties split the adjoint 0.5/0.5
    min_,
    pow_,    // x^p, constant exponent p
    scale,   // c0 * x + c1, constant coefficients
    affine,  // bias + sum_k w_k * x_k over recorded (w, x) node pairs
    reduce_mean,  // batch -> width-1 mean
};

/// Append-only record of scalar expressions, evaluated eagerly at build time
/// and re-evaluable in place (`forward`) after leaves/inputs change. Every
/// node carries a payload of `batch` slots (or one slot when the value is
/// uniform across the batch); slot arithmetic is elementwise, so a node is
/// semantically one scalar expression evaluated over a batch of independent
/// samples. `backward` runs one reverse sweep, touching each node once.
class Tape {
public:
    explicit Tape(std::uint32_t batch = 1);

    std::uint32_t batch() const noexcept { return batch_; }
    std::size_t size() const noexcept { return op_.size(); }

    // -- construction -------------------------------------------------------
    NodeId constant(double v);
    NodeId leaf(double v);
    NodeId input_scalar(double v);
    NodeId input(std::span<const double> values);  // width = batch

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId neg(NodeId a);
    NodeId sine(NodeId a);
    NodeId cosine(NodeId a);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId abs(NodeId a);
    NodeId sign(NodeId a);
    NodeId max(NodeId a, NodeId b);
    NodeId min(NodeId a, NodeId b);
    NodeId pow(NodeId a, double exponent);
    NodeId scale(NodeId a, double c0, double c1 = 0.0);
    NodeId square(NodeId a) { return mul(a, a); }
    NodeId affine(std::span<const std::pair<NodeId, NodeId>> wx_pairs, NodeId bias = kNoNode);
    NodeId reduce_mean(NodeId a);

    // -- replay --------------------------------------------------------------
    void set_leaf(NodeId id, double v);
    void set_input_scalar(NodeId id, double v);
    void set_input(NodeId id, std::span<const double> values);
    /// Recompute every non-source node in recording order.
    void forward();

    // -- differentiation ------------------------------------------------------
    /// Reverse sweep seeded with d(seed)/d(seed) = 1. The seed must be a
    /// width-1 node (reduce first); adjoints of all ancestors are available
    /// afterwards.
    void backward(NodeId seed);

    // -- access ---------------------------------------------------------------
    double value(NodeId id, std::uint32_t slot = 0) const;
    std::span<const double> values(NodeId id) const;
    double adjoint(NodeId id, std::uint32_t slot = 0) const;
    std::uint32_t width(NodeId id) const { return width_[check(id)]; }

private:
    NodeId push(Op op, NodeId a, NodeId b, std::uint32_t width, double c0 = 0.0, double c1 = 0.0);
    void eval_node(NodeId id);
    NodeId check(NodeId id) const {
        if (id >= op_.size()) throw DetachedNode("node id not on this tape");
        return id;
    }
    const double* val_ptr(NodeId id) const { return values_.data() + offset_[id]; }
    double* val_ptr(NodeId id) { return values_.data() + offset_[id]; }
    double* adj_ptr(NodeId id) { return adjoints_.data() + offset_[id]; }

    std::uint32_t batch_;
    std::vector<Op> op_;
    std::vector<NodeId> arg_a_, arg_b_, arg_c_;  // arg_c: affine bias
    std::vector<double> c0_, c1_;
    std::vector<std::uint32_t> width_;
    std::vector<std::size_t> offset_;
    std::vector<std::size_t> aux_;  // sine/cosine derivative cache offset
    std::vector<std::uint32_t> pair_begin_, pair_count_;
    std::vector<std::pair<NodeId, NodeId>> pairs_;
    std::vector<double> values_;
    std::vector<double> adjoints_;
    std::vector<double> aux_values_;
};

/// Exact reverse-mode gradient of a width-1 scalar node with respect to the
/// given parameter leaves. Leaves that do not influence the node get 0.
std::vector<double> grad_params(Tape& tape, NodeId loss, std::span<const NodeId> leaves);

/// Scalar value paired with up to kTangents forward directional derivatives,
/// each tangent itself a first-class tape node (so a reverse sweep can
/// differentiate through input gradients). A kNoNode tangent is identically
/// zero.
struct DualValue {
    NodeId val = kNoNode;
    std::array<NodeId, kTangents> tan = {kNoNode, kNoNode, kNoNode};

    bool has_tangent(int c) const { return tan[static_cast<std::size_t>(c)] != kNoNode; }
};

/// Source values: constants and parameter leaves carry no tangent; inputs may
/// seed one unit tangent channel.
DualValue dual_const(Tape& t, double v);
DualValue dual_leaf(Tape& t, NodeId leaf);
DualValue dual_input(Tape& t, NodeId value_node, int seeded_channel = -1);

DualValue dadd(Tape& t, const DualValue& x, const DualValue& y);
DualValue dsub(Tape& t, const DualValue& x, const DualValue& y);
DualValue dmul(Tape& t, const DualValue& x, const DualValue& y);
DualValue ddiv(Tape& t, const DualValue& x, const DualValue& y);
DualValue dneg(Tape& t, const DualValue& x);
DualValue dsin(Tape& t, const DualValue& x);
DualValue dcos(Tape& t, const DualValue& x);
DualValue dexp(Tape& t, const DualValue& x);
DualValue dlog(Tape& t, const DualValue& x);
DualValue dabs(Tape& t, const DualValue& x);
DualValue dpow(Tape& t, const DualValue& x, double exponent);
DualValue dscale(Tape& t, const DualValue& x, double c0, double c1 = 0.0);
/// max/min via (a + b +/- |a - b|)/2; at ties the tangent averages.
DualValue dmax(Tape& t, const DualValue& x, const DualValue& y);
DualValue dmin(Tape& t, const DualValue& x, const DualValue& y);

/// Affine combination bias + sum w_k x_k of dual inputs with leaf weights:
/// the workhorse of network layers. Weights carry no tangent, so each tangent
/// channel is the affine combination of the input tangents.
DualValue daffine(Tape& t, std::span<const NodeId> weights, std::span<const DualValue> xs,
                  NodeId bias);

/// Forward directional derivatives of a dual expression at the current tape
/// values (zero where no tangent was seeded).
std::array<double, kTangents> input_jacobian(const Tape& t, const DualValue& y,
                                             std::uint32_t slot = 0);

}  // namespace kinstor::ad
