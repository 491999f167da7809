#include "kinstor/autodiff.hpp"

#include <cmath>

namespace kinstor::ad {

namespace {
inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}

Tape::Tape(std::uint32_t batch) : batch_(batch == 0 ? 1 : batch) {}

NodeId Tape::push(Op op, NodeId a, NodeId b, std::uint32_t width, double c0, double c1) {
    const NodeId id = static_cast<NodeId>(op_.size());
    op_.push_back(op);
    arg_a_.push_back(a);
    arg_b_.push_back(b);
    arg_c_.push_back(kNoNode);
    c0_.push_back(c0);
    c1_.push_back(c1);
    width_.push_back(width);
    offset_.push_back(values_.size());
    aux_.push_back(static_cast<std::size_t>(-1));
    pair_begin_.push_back(0);
    pair_count_.push_back(0);
    values_.resize(values_.size() + width, 0.0);
    if (op == Op::sine || op == Op::cosine) {
        aux_.back() = aux_values_.size();
        aux_values_.resize(aux_values_.size() + width, 0.0);
    }
    return id;
}

NodeId Tape::constant(double v) {
    const NodeId id = push(Op::constant, kNoNode, kNoNode, 1);
    values_[offset_[id]] = v;
    return id;
}

NodeId Tape::leaf(double v) {
    const NodeId id = push(Op::leaf, kNoNode, kNoNode, 1);
    values_[offset_[id]] = v;
    return id;
}

NodeId Tape::input_scalar(double v) {
    const NodeId id = push(Op::input, kNoNode, kNoNode, 1);
    values_[offset_[id]] = v;
    return id;
}

NodeId Tape::input(std::span<const double> values) {
    if (values.size() != batch_) throw SizeMismatch("tape input: size must equal batch");
    const NodeId id = push(Op::input, kNoNode, kNoNode, batch_);
    double* dst = val_ptr(id);
    for (std::uint32_t i = 0; i < batch_; ++i) dst[i] = values[i];
    return id;
}

#define KINSTOR_BINARY(NAME, OP)                                       \
    NodeId Tape::NAME(NodeId a, NodeId b) {                            \
        check(a);                                                      \
        check(b);                                                      \
        const std::uint32_t w = std::max(width_[a], width_[b]);        \
        const NodeId id = push(OP, a, b, w);                           \
        eval_node(id);                                                 \
        return id;                                                     \
    }

KINSTOR_BINARY(add, Op::add)
KINSTOR_BINARY(sub, Op::sub)
KINSTOR_BINARY(mul, Op::mul)
KINSTOR_BINARY(div, Op::div)
KINSTOR_BINARY(max, Op::max_)
KINSTOR_BINARY(min, Op::min_)
#undef KINSTOR_BINARY

#define KINSTOR_UNARY(NAME, OP)                           \
    NodeId Tape::NAME(NodeId a) {                         \
        check(a);                                         \
        const NodeId id = push(OP, a, kNoNode, width_[a]); \
        eval_node(id);                                    \
        return id;                                        \
    }

KINSTOR_UNARY(neg, Op::neg)
KINSTOR_UNARY(sine, Op::sine)
KINSTOR_UNARY(cosine, Op::cosine)
KINSTOR_UNARY(exp, Op::exp_)
KINSTOR_UNARY(log, Op::log_)
KINSTOR_UNARY(abs, Op::abs_)
KINSTOR_UNARY(sign, Op::sign)
#undef KINSTOR_UNARY

NodeId Tape::pow(NodeId a, double exponent) {
    check(a);
    const NodeId id = push(Op::pow_, a, kNoNode, width_[a], exponent);
    eval_node(id);
    return id;
}

NodeId Tape::scale(NodeId a, double c0, double c1) {
    check(a);
    const NodeId id = push(Op::scale, a, kNoNode, width_[a], c0, c1);
    eval_node(id);
    return id;
}

NodeId Tape::affine(std::span<const std::pair<NodeId, NodeId>> wx_pairs, NodeId bias) {
    std::uint32_t w = 1;
    for (const auto& [wk, xk] : wx_pairs) {
        check(wk);
        check(xk);
        w = std::max({w, width_[wk], width_[xk]});
    }
    if (bias != kNoNode) w = std::max(w, width_[check(bias)]);
    const NodeId id = push(Op::affine, kNoNode, kNoNode, w);
    arg_c_[id] = bias;
    pair_begin_[id] = static_cast<std::uint32_t>(pairs_.size());
    pair_count_[id] = static_cast<std::uint32_t>(wx_pairs.size());
    pairs_.insert(pairs_.end(), wx_pairs.begin(), wx_pairs.end());
    eval_node(id);
    return id;
}

NodeId Tape::reduce_mean(NodeId a) {
    check(a);
    const NodeId id = push(Op::reduce_mean, a, kNoNode, 1);
    eval_node(id);
    return id;
}

void Tape::set_leaf(NodeId id, double v) {
    if (op_[check(id)] != Op::leaf) throw DetachedNode("set_leaf: node is not a leaf");
    values_[offset_[id]] = v;
}

void Tape::set_input_scalar(NodeId id, double v) {
    if (op_[check(id)] != Op::input || width_[id] != 1) {
        throw DetachedNode("set_input_scalar: node is not a scalar input");
    }
    values_[offset_[id]] = v;
}

void Tape::set_input(NodeId id, std::span<const double> values) {
    if (op_[check(id)] != Op::input) throw DetachedNode("set_input: node is not an input");
    if (values.size() != width_[id]) throw SizeMismatch("set_input: width mismatch");
    double* dst = val_ptr(id);
    for (std::size_t i = 0; i < values.size(); ++i) dst[i] = values[i];
}

void Tape::forward() {
    const NodeId n = static_cast<NodeId>(op_.size());
    for (NodeId id = 0; id < n; ++id) {
        const Op o = op_[id];
        if (o == Op::constant || o == Op::leaf || o == Op::input) continue;
        eval_node(id);
    }
}

void Tape::eval_node(NodeId id) {
    const Op o = op_[id];
    const std::uint32_t w = width_[id];
    double* out = val_ptr(id);

    auto arg = [&](NodeId a) { return val_ptr(a); };
    auto stride = [&](NodeId a) -> std::uint32_t { return width_[a] == 1 ? 0 : 1; };

    switch (o) {
        case Op::constant:
        case Op::leaf:
        case Op::input:
            return;
        case Op::add: {
            const double* a = arg(arg_a_[id]);
            const double* b = arg(arg_b_[id]);
            const std::uint32_t sa = stride(arg_a_[id]), sb = stride(arg_b_[id]);
            for (std::uint32_t i = 0; i < w; ++i) out[i] = a[i * sa] + b[i * sb];
            return;
        }
        case Op::sub: {
            const double* a = arg(arg_a_[id]);
            const double* b = arg(arg_b_[id]);
            const std::uint32_t sa = stride(arg_a_[id]), sb = stride(arg_b_[id]);
            for (std::uint32_t i = 0; i < w; ++i) out[i] = a[i * sa] - b[i * sb];
            return;
        }
        case Op::mul: {
            const double* a = arg(arg_a_[id]);
            const double* b = arg(arg_b_[id]);
            const std::uint32_t sa = stride(arg_a_[id]), sb = stride(arg_b_[id]);
            for (std::uint32_t i = 0; i < w; ++i) out[i] = a[i * sa] * b[i * sb];
            return;
        }
        case Op::div: {
            const double* a = arg(arg_a_[id]);
            const double* b = arg(arg_b_[id]);
            const std::uint32_t sa = stride(arg_a_[id]), sb = stride(arg_b_[id]);
            for (std::uint32_t i = 0; i < w; ++i) out[i] = a[i * sa] / b[i * sb];
            return;
        }
        case Op::neg: {
            const double* a = arg(arg_a_[id]);
            for (std::uint32_t i = 0; i < w; ++i) out[i] = -a[i];
            return;
        }
        case Op::sine: {
            const double* a = arg(arg_a_[id]);
            double* aux = aux_values_.data() + aux_[id];
            for (std::uint32_t i = 0; i < w; ++i) {
                out[i] = std::sin(a[i]);
                aux[i] = std::cos(a[i]);
            }
            return;
        }
        case Op::cosine: {
            const double* a = arg(arg_a_[id]);
            double* aux = aux_values_.data() + aux_[id];
            for (std::uint32_t i = 0; i < w; ++i) {
                out[i] = std::cos(a[i]);
                aux[i] = -std::sin(a[i]);
            }
            return;
        }
        case Op::exp_: {
            const double* a = arg(arg_a_[id]);
            for (std::uint32_t i = 0; i < w; ++i) out[i] = std::exp(a[i]);
            return;
        }
        case Op::log_: {
            const double* a = arg(arg_a_[id]);
            for (std::uint32_t i = 0; i < w; ++i) out[i] = std::log(a[i]);
            return;
        }
        case Op::abs_: {
            const double* a = arg(arg_a_[id]);
            for (std::uint32_t i = 0; i < w; ++i) out[i] = std::abs(a[i]);
            return;
        }
        case Op::sign: {
            const double* a = arg(arg_a_[id]);
            for (std::uint32_t i = 0; i < w; ++i) out[i] = sign_of(a[i]);
            return;
        }
        case Op::max_: {
            const double* a = arg(arg_a_[id]);
            const double* b = arg(arg_b_[id]);
            const std::uint32_t sa = stride(arg_a_[id]), sb = stride(arg_b_[id]);
            for (std::uint32_t i = 0; i < w; ++i) out[i] = std::max(a[i * sa], b[i * sb]);
            return;
        }
        case Op::min_: {
            const double* a = arg(arg_a_[id]);
            const double* b = arg(arg_b_[id]);
            const std::uint32_t sa = stride(arg_a_[id]), sb = stride(arg_b_[id]);
            for (std::uint32_t i = 0; i < w; ++i) out[i] = std::min(a[i * sa], b[i * sb]);
            return;
        }
        case Op::pow_: {
            const double* a = arg(arg_a_[id]);
            const double p = c0_[id];
            for (std::uint32_t i = 0; i < w; ++i) out[i] = std::pow(a[i], p);
            return;
        }
        case Op::scale: {
            const double* a = arg(arg_a_[id]);
            const double c0 = c0_[id], c1 = c1_[id];
            for (std::uint32_t i = 0; i < w; ++i) out[i] = c0 * a[i] + c1;
            return;
        }
        case Op::affine: {
            const NodeId bias = arg_c_[id];
            if (bias != kNoNode) {
                const double* bv = arg(bias);
                const std::uint32_t sb = stride(bias);
                for (std::uint32_t i = 0; i < w; ++i) out[i] = bv[i * sb];
            } else {
                for (std::uint32_t i = 0; i < w; ++i) out[i] = 0.0;
            }
            const auto begin = pair_begin_[id];
            const auto count = pair_count_[id];
            for (std::uint32_t k = 0; k < count; ++k) {
                const auto [wn, xn] = pairs_[begin + k];
                const double* wv = arg(wn);
                const double* xv = arg(xn);
                if (width_[wn] == 1 && width_[xn] == w) {
                    const double c = wv[0];
                    for (std::uint32_t i = 0; i < w; ++i) out[i] += c * xv[i];
                } else {
                    const std::uint32_t sw = stride(wn), sx = stride(xn);
                    for (std::uint32_t i = 0; i < w; ++i) out[i] += wv[i * sw] * xv[i * sx];
                }
            }
            return;
        }
        case Op::reduce_mean: {
            const NodeId a = arg_a_[id];
            const double* av = arg(a);
            if (width_[a] == 1) {
                out[0] = av[0];
                return;
            }
            double acc = 0.0;
            for (std::uint32_t i = 0; i < width_[a]; ++i) acc += av[i];
            out[0] = acc / static_cast<double>(width_[a]);
            return;
        }
    }
}

void Tape::backward(NodeId seed) {
    check(seed);
    if (width_[seed] != 1) {
        throw DetachedNode("backward: seed must be a width-1 node (reduce first)");
    }
    adjoints_.assign(values_.size(), 0.0);
    adjoints_[offset_[seed]] = 1.0;

    for (NodeId id = static_cast<NodeId>(op_.size()); id-- > 0;) {
        const Op o = op_[id];
        if (o == Op::constant || o == Op::leaf || o == Op::input) continue;
        const std::uint32_t w = width_[id];
        const double* adj = adjoints_.data() + offset_[id];

        // Broadcast-aware accumulation into an argument's adjoint.
        auto accum = [&](NodeId a, auto&& contrib) {
            double* dst = adj_ptr(a);
            if (width_[a] == 1 && w > 1) {
                double acc = 0.0;
                for (std::uint32_t i = 0; i < w; ++i) acc += contrib(i);
                dst[0] += acc;
            } else {
                for (std::uint32_t i = 0; i < w; ++i) dst[i] += contrib(i);
            }
        };
        auto aval = [&](NodeId a) { return val_ptr(a); };
        auto stride = [&](NodeId a) -> std::uint32_t { return width_[a] == 1 ? 0 : 1; };

        switch (o) {
            case Op::add:
                accum(arg_a_[id], [&](std::uint32_t i) { return adj[i]; });
                accum(arg_b_[id], [&](std::uint32_t i) { return adj[i]; });
                break;
            case Op::sub:
                accum(arg_a_[id], [&](std::uint32_t i) { return adj[i]; });
                accum(arg_b_[id], [&](std::uint32_t i) { return -adj[i]; });
                break;
            case Op::mul: {
                const double* a = aval(arg_a_[id]);
                const double* b = aval(arg_b_[id]);
                const std::uint32_t sa = stride(arg_a_[id]), sb = stride(arg_b_[id]);
                accum(arg_a_[id], [&](std::uint32_t i) { return adj[i] * b[i * sb]; });
                accum(arg_b_[id], [&](std::uint32_t i) { return adj[i] * a[i * sa]; });
                break;
            }
            case Op::div: {
                const double* b = aval(arg_b_[id]);
                const double* out = val_ptr(id);
                const std::uint32_t sb = stride(arg_b_[id]);
                accum(arg_a_[id], [&](std::uint32_t i) { return adj[i] / b[i * sb]; });
                accum(arg_b_[id], [&](std::uint32_t i) { return -adj[i] * out[i] / b[i * sb]; });
                break;
            }
            case Op::neg:
                accum(arg_a_[id], [&](std::uint32_t i) { return -adj[i]; });
                break;
            case Op::sine:
            case Op::cosine: {
                const double* aux = aux_values_.data() + aux_[id];
                accum(arg_a_[id], [&](std::uint32_t i) { return adj[i] * aux[i]; });
                break;
            }
            case Op::exp_: {
                const double* out = val_ptr(id);
                accum(arg_a_[id], [&](std::uint32_t i) { return adj[i] * out[i]; });
                break;
            }
            case Op::log_: {
                const double* a = aval(arg_a_[id]);
                accum(arg_a_[id], [&](std::uint32_t i) { return adj[i] / a[i]; });
                break;
            }
            case Op::abs_: {
                const double* a = aval(arg_a_[id]);
                accum(arg_a_[id], [&](std::uint32_t i) { return adj[i] * sign_of(a[i]); });
                break;
            }
            case Op::sign:
                break;  // piecewise constant
            case Op::max_:
            case Op::min_: {
                const double* a = aval(arg_a_[id]);
                const double* b = aval(arg_b_[id]);
                const std::uint32_t sa = stride(arg_a_[id]), sb = stride(arg_b_[id]);
                const bool is_max = (o == Op::max_);
                auto wa = [&](std::uint32_t i) {
                    const double x = a[i * sa], y = b[i * sb];
                    if (x == y) return 0.5;
                    const bool take_a = is_max ? (x > y) : (x < y);
                    return take_a ? 1.0 : 0.0;
                };
                accum(arg_a_[id], [&](std::uint32_t i) { return adj[i] * wa(i); });
                accum(arg_b_[id], [&](std::uint32_t i) { return adj[i] * (1.0 - wa(i)); });
                break;
            }
            case Op::pow_: {
                const double* a = aval(arg_a_[id]);
                const double p = c0_[id];
                accum(arg_a_[id],
                      [&](std::uint32_t i) { return adj[i] * p * std::pow(a[i], p - 1.0); });
                break;
            }
            case Op::scale: {
                const double c0 = c0_[id];
                accum(arg_a_[id], [&](std::uint32_t i) { return adj[i] * c0; });
                break;
            }
            case Op::affine: {
                const NodeId bias = arg_c_[id];
                if (bias != kNoNode) {
                    accum(bias, [&](std::uint32_t i) { return adj[i]; });
                }
                const auto begin = pair_begin_[id];
                const auto count = pair_count_[id];
                for (std::uint32_t k = 0; k < count; ++k) {
                    const auto [wn, xn] = pairs_[begin + k];
                    const double* wv = aval(wn);
                    const double* xv = aval(xn);
                    if (width_[wn] == 1 && width_[xn] == w && w > 1) {
                        // Hot path: scalar weight, batched input.
                        const double c = wv[0];
                        double* ax = adj_ptr(xn);
                        double gw = 0.0;
                        for (std::uint32_t i = 0; i < w; ++i) {
                            ax[i] += adj[i] * c;
                            gw += adj[i] * xv[i];
                        }
                        adj_ptr(wn)[0] += gw;
                    } else {
                        const std::uint32_t sx = stride(xn);
                        accum(wn, [&](std::uint32_t i) { return adj[i] * xv[i * sx]; });
                        const std::uint32_t sw = stride(wn);
                        accum(xn, [&](std::uint32_t i) { return adj[i] * wv[i * sw]; });
                    }
                }
                break;
            }
            case Op::reduce_mean: {
                const NodeId a = arg_a_[id];
                double* dst = adj_ptr(a);
                if (width_[a] == 1) {
                    dst[0] += adj[0];
                } else {
                    const double g = adj[0] / static_cast<double>(width_[a]);
                    for (std::uint32_t i = 0; i < width_[a]; ++i) dst[i] += g;
                }
                break;
            }
            default:
                break;
        }
    }
}

double Tape::value(NodeId id, std::uint32_t slot) const {
    check(id);
    return values_[offset_[id] + (width_[id] == 1 ? 0 : slot)];
}

std::span<const double> Tape::values(NodeId id) const {
    check(id);
    return {values_.data() + offset_[id], width_[id]};
}

double Tape::adjoint(NodeId id, std::uint32_t slot) const {
    check(id);
    if (adjoints_.size() != values_.size()) return 0.0;
    return adjoints_[offset_[id] + (width_[id] == 1 ? 0 : slot)];
}

std::vector<double> grad_params(Tape& tape, NodeId loss, std::span<const NodeId> leaves) {
    tape.backward(loss);
    std::vector<double> out(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) out[i] = tape.adjoint(leaves[i]);
    return out;
}

// ---- DualValue arithmetic ---------------------------------------------------

DualValue dual_const(Tape& t, double v) { return DualValue{t.constant(v), {}}; }

DualValue dual_leaf(Tape&, NodeId leaf) {
    DualValue d;
    d.val = leaf;
    return d;
}

DualValue dual_input(Tape& t, NodeId value_node, int seeded_channel) {
    DualValue d;
    d.val = value_node;
    if (seeded_channel >= 0 && seeded_channel < kTangents) {
        d.tan[static_cast<std::size_t>(seeded_channel)] = t.constant(1.0);
    }
    return d;
}

DualValue dadd(Tape& t, const DualValue& x, const DualValue& y) {
    DualValue d;
    d.val = t.add(x.val, y.val);
    for (int c = 0; c < kTangents; ++c) {
        const NodeId xt = x.tan[c], yt = y.tan[c];
        if (xt != kNoNode && yt != kNoNode) {
            d.tan[c] = t.add(xt, yt);
        } else if (xt != kNoNode) {
            d.tan[c] = xt;
        } else if (yt != kNoNode) {
            d.tan[c] = yt;
        }
    }
    return d;
}

DualValue dsub(Tape& t, const DualValue& x, const DualValue& y) {
    DualValue d;
    d.val = t.sub(x.val, y.val);
    for (int c = 0; c < kTangents; ++c) {
        const NodeId xt = x.tan[c], yt = y.tan[c];
        if (xt != kNoNode && yt != kNoNode) {
            d.tan[c] = t.sub(xt, yt);
        } else if (xt != kNoNode) {
            d.tan[c] = xt;
        } else if (yt != kNoNode) {
            d.tan[c] = t.neg(yt);
        }
    }
    return d;
}

DualValue dmul(Tape& t, const DualValue& x, const DualValue& y) {
    DualValue d;
    d.val = t.mul(x.val, y.val);
    for (int c = 0; c < kTangents; ++c) {
        const NodeId xt = x.tan[c], yt = y.tan[c];
        if (xt != kNoNode && yt != kNoNode) {
            d.tan[c] = t.add(t.mul(xt, y.val), t.mul(x.val, yt));
        } else if (xt != kNoNode) {
            d.tan[c] = t.mul(xt, y.val);
        } else if (yt != kNoNode) {
            d.tan[c] = t.mul(x.val, yt);
        }
    }
    return d;
}

DualValue ddiv(Tape& t, const DualValue& x, const DualValue& y) {
    DualValue d;
    d.val = t.div(x.val, y.val);
    for (int c = 0; c < kTangents; ++c) {
        const NodeId xt = x.tan[c], yt = y.tan[c];
        if (xt == kNoNode && yt == kNoNode) continue;
        // (xt y - x yt) / y^2, dropping identically-zero pieces.
        NodeId num = kNoNode;
        if (xt != kNoNode && yt != kNoNode) {
            num = t.sub(t.mul(xt, y.val), t.mul(x.val, yt));
        } else if (xt != kNoNode) {
            d.tan[c] = t.div(xt, y.val);
            continue;
        } else {
            num = t.neg(t.mul(x.val, yt));
        }
        d.tan[c] = t.div(num, t.mul(y.val, y.val));
    }
    return d;
}

DualValue dneg(Tape& t, const DualValue& x) {
    DualValue d;
    d.val = t.neg(x.val);
    for (int c = 0; c < kTangents; ++c) {
        if (x.tan[c] != kNoNode) d.tan[c] = t.neg(x.tan[c]);
    }
    return d;
}

namespace {
DualValue chain_unary(Tape& t, const DualValue& x, NodeId value, NodeId derivative) {
    DualValue d;
    d.val = value;
    for (int c = 0; c < kTangents; ++c) {
        if (x.tan[c] != kNoNode) d.tan[c] = t.mul(derivative, x.tan[c]);
    }
    return d;
}
}  // namespace

DualValue dsin(Tape& t, const DualValue& x) {
    const NodeId v = t.sine(x.val);
    bool any = false;
    for (int c = 0; c < kTangents; ++c) any = any || x.tan[c] != kNoNode;
    if (!any) return DualValue{v, {}};
    return chain_unary(t, x, v, t.cosine(x.val));
}

DualValue dcos(Tape& t, const DualValue& x) {
    const NodeId v = t.cosine(x.val);
    bool any = false;
    for (int c = 0; c < kTangents; ++c) any = any || x.tan[c] != kNoNode;
    if (!any) return DualValue{v, {}};
    return chain_unary(t, x, v, t.neg(t.sine(x.val)));
}

DualValue dexp(Tape& t, const DualValue& x) {
    const NodeId v = t.exp(x.val);
    return chain_unary(t, x, v, v);
}

DualValue dlog(Tape& t, const DualValue& x) {
    DualValue d;
    d.val = t.log(x.val);
    for (int c = 0; c < kTangents; ++c) {
        if (x.tan[c] != kNoNode) d.tan[c] = t.div(x.tan[c], x.val);
    }
    return d;
}

DualValue dabs(Tape& t, const DualValue& x) {
    const NodeId v = t.abs(x.val);
    bool any = false;
    for (int c = 0; c < kTangents; ++c) any = any || x.tan[c] != kNoNode;
    if (!any) return DualValue{v, {}};
    return chain_unary(t, x, v, t.sign(x.val));
}

DualValue dpow(Tape& t, const DualValue& x, double exponent) {
    const NodeId v = t.pow(x.val, exponent);
    bool any = false;
    for (int c = 0; c < kTangents; ++c) any = any || x.tan[c] != kNoNode;
    if (!any) return DualValue{v, {}};
    return chain_unary(t, x, v, t.scale(t.pow(x.val, exponent - 1.0), exponent));
}

DualValue dscale(Tape& t, const DualValue& x, double c0, double c1) {
    DualValue d;
    d.val = t.scale(x.val, c0, c1);
    for (int c = 0; c < kTangents; ++c) {
        if (x.tan[c] != kNoNode) d.tan[c] = t.scale(x.tan[c], c0);
    }
    return d;
}

DualValue dmax(Tape& t, const DualValue& x, const DualValue& y) {
    // (x + y + |x - y|) / 2
    const DualValue diff = dsub(t, x, y);
    return dscale(t, dadd(t, dadd(t, x, y), dabs(t, diff)), 0.5);
}

DualValue dmin(Tape& t, const DualValue& x, const DualValue& y) {
    const DualValue diff = dsub(t, x, y);
    return dscale(t, dsub(t, dadd(t, x, y), dabs(t, diff)), 0.5);
}

DualValue daffine(Tape& t, std::span<const NodeId> weights, std::span<const DualValue> xs,
                  NodeId bias) {
    if (weights.size() != xs.size()) throw SizeMismatch("daffine: weights/inputs mismatch");
    DualValue d;
    std::vector<std::pair<NodeId, NodeId>> val_pairs;
    val_pairs.reserve(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) val_pairs.emplace_back(weights[k], xs[k].val);
    d.val = t.affine(val_pairs, bias);

    std::vector<std::pair<NodeId, NodeId>> tan_pairs;
    for (int c = 0; c < kTangents; ++c) {
        tan_pairs.clear();
        for (std::size_t k = 0; k < xs.size(); ++k) {
            if (xs[k].tan[c] != kNoNode) tan_pairs.emplace_back(weights[k], xs[k].tan[c]);
        }
        if (!tan_pairs.empty()) d.tan[c] = t.affine(tan_pairs);
    }
    return d;
}

std::array<double, kTangents> input_jacobian(const Tape& t, const DualValue& y,
                                             std::uint32_t slot) {
    std::array<double, kTangents> out = {0.0, 0.0, 0.0};
    for (int c = 0; c < kTangents; ++c) {
        if (y.tan[c] != kNoNode) out[c] = t.value(y.tan[c], slot);
    }
    return out;
}

}  // namespace kinstor::ad
