#include "kinstor/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace kinstor::net {

using nlohmann::json;

std::size_t MlpParams::n_parameters() const {
    std::size_t n = 0;
    for (int l = 0; l < n_layers(); ++l) {
        n += static_cast<std::size_t>(layer_sizes[l] * layer_sizes[l + 1]) +
             static_cast<std::size_t>(layer_sizes[l + 1]);
    }
    return n;
}

void MlpParams::to_flat(std::vector<double>& out) const {
    out.clear();
    out.reserve(n_parameters());
    for (int l = 0; l < n_layers(); ++l) {
        out.insert(out.end(), weights[l].begin(), weights[l].end());
        out.insert(out.end(), biases[l].begin(), biases[l].end());
    }
}

void MlpParams::from_flat(const std::vector<double>& flat) {
    if (flat.size() != n_parameters()) throw SizeMismatch("from_flat: parameter count mismatch");
    weights.assign(n_layers(), {});
    biases.assign(n_layers(), {});
    std::size_t pos = 0;
    for (int l = 0; l < n_layers(); ++l) {
        const std::size_t nw = static_cast<std::size_t>(layer_sizes[l] * layer_sizes[l + 1]);
        const std::size_t nb = static_cast<std::size_t>(layer_sizes[l + 1]);
        weights[l].assign(flat.begin() + pos, flat.begin() + pos + nw);
        pos += nw;
        biases[l].assign(flat.begin() + pos, flat.begin() + pos + nb);
        pos += nb;
    }
}

MlpParams xavier_init(const std::vector<int>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw ValidationError("network needs at least one layer");
    MlpParams p;
    p.layer_sizes = layer_sizes;
    p.weights.resize(p.n_layers());
    p.biases.resize(p.n_layers());
    RngStream rng(seed, streams::init);
    for (int l = 0; l < p.n_layers(); ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double sd = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
        p.weights[l].resize(static_cast<std::size_t>(fan_in * fan_out));
        for (int r = 0; r < fan_out; ++r) {
            for (int c = 0; c < fan_in; ++c) {
                p.weights[l][static_cast<std::size_t>(r * fan_in + c)] =
                    sd * rng.normal(static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(r),
                                    static_cast<std::uint64_t>(c));
            }
        }
        p.biases[l].assign(static_cast<std::size_t>(fan_out), 0.0);
    }
    return p;
}

InputScaler InputScaler::fit(const std::vector<std::array<double, 5>>& samples,
                             double min_scale) {
    InputScaler s;
    if (samples.empty()) return s;
    const double n = static_cast<double>(samples.size());
    for (int c = 0; c < 5; ++c) {
        double mean = 0.0;
        for (const auto& row : samples) mean += row[c];
        mean /= n;
        double var = 0.0;
        for (const auto& row : samples) var += (row[c] - mean) * (row[c] - mean);
        var /= n;
        s.shift[c] = mean;
        s.scale[c] = std::sqrt(var) > min_scale ? std::sqrt(var) : 1.0;
    }
    return s;
}

double forward(const MlpParams& p, const InputScaler& scaler, double t,
               const battery::StateVector& z) {
    std::vector<double> act(5);
    const std::array<double, 5> raw = {t, z.s, z.h, z.v, z.x};
    for (int c = 0; c < 5; ++c) act[c] = scaler.apply(c, raw[c]);

    std::vector<double> next;
    for (int l = 0; l < p.n_layers(); ++l) {
        const int fan_in = p.layer_sizes[l];
        const int fan_out = p.layer_sizes[l + 1];
        next.assign(static_cast<std::size_t>(fan_out), 0.0);
        for (int r = 0; r < fan_out; ++r) {
            double acc = p.biases[l][r];
            const double* w = p.weights[l].data() + static_cast<std::size_t>(r) * fan_in;
            for (int c = 0; c < fan_in; ++c) acc += w[c] * act[c];
            next[r] = (l + 1 < p.n_layers()) ? std::sin(acc) : acc;
        }
        act.swap(next);
    }
    return act[0];
}

ValueAndZeta value_and_zeta(const MlpParams& p, const InputScaler& scaler, double t,
                            const battery::StateVector& z,
                            const std::array<double, 3>& sigma_diag) {
    ad::Tape tape(1);
    const auto leaves = make_leaves(tape, p);
    std::array<ad::DualValue, 5> inputs;
    inputs[0] = ad::dual_input(tape, tape.input_scalar(t));
    inputs[1] = ad::dual_input(tape, tape.input_scalar(z.s), 0);
    inputs[2] = ad::dual_input(tape, tape.input_scalar(z.h), 1);
    inputs[3] = ad::dual_input(tape, tape.input_scalar(z.v), 2);
    inputs[4] = ad::dual_input(tape, tape.input_scalar(z.x));
    const ad::DualValue u = emit(tape, leaves, p, scaler, inputs);

    ValueAndZeta out;
    out.y = tape.value(u.val);
    const auto grads = ad::input_jacobian(tape, u);
    for (int c = 0; c < 3; ++c) out.zeta[c] = grads[c] * sigma_diag[c];
    return out;
}

std::vector<ad::NodeId> make_leaves(ad::Tape& tape, const MlpParams& p) {
    std::vector<double> flat;
    p.to_flat(flat);
    std::vector<ad::NodeId> leaves;
    leaves.reserve(flat.size());
    for (double v : flat) leaves.push_back(tape.leaf(v));
    return leaves;
}

void set_leaves(ad::Tape& tape, const std::vector<ad::NodeId>& leaves, const MlpParams& p) {
    std::vector<double> flat;
    p.to_flat(flat);
    if (flat.size() != leaves.size()) throw SizeMismatch("set_leaves: parameter count mismatch");
    for (std::size_t i = 0; i < flat.size(); ++i) tape.set_leaf(leaves[i], flat[i]);
}

ad::DualValue emit(ad::Tape& tape, const std::vector<ad::NodeId>& leaves, const MlpParams& p,
                   const InputScaler& scaler, const std::array<ad::DualValue, 5>& inputs) {
    if (leaves.size() != p.n_parameters()) throw SizeMismatch("emit: leaf count mismatch");

    std::vector<ad::DualValue> act(5);
    for (int c = 0; c < 5; ++c) {
        act[c] = ad::dscale(tape, inputs[c], 1.0 / scaler.scale[c],
                            -scaler.shift[c] / scaler.scale[c]);
    }

    std::size_t pos = 0;
    std::vector<ad::DualValue> next;
    std::vector<ad::NodeId> row;
    for (int l = 0; l < p.n_layers(); ++l) {
        const int fan_in = p.layer_sizes[l];
        const int fan_out = p.layer_sizes[l + 1];
        const std::size_t wbase = pos;
        const std::size_t bbase = pos + static_cast<std::size_t>(fan_in) * fan_out;
        next.clear();
        next.reserve(static_cast<std::size_t>(fan_out));
        for (int r = 0; r < fan_out; ++r) {
            row.assign(leaves.begin() + wbase + static_cast<std::size_t>(r) * fan_in,
                       leaves.begin() + wbase + static_cast<std::size_t>(r + 1) * fan_in);
            ad::DualValue pre = ad::daffine(tape, row, act, leaves[bbase + r]);
            next.push_back(l + 1 < p.n_layers() ? ad::dsin(tape, pre) : pre);
        }
        act.swap(next);
        pos = bbase + static_cast<std::size_t>(fan_out);
    }
    return act[0];
}

NetProgram::NetProgram(const MlpParams& p, const InputScaler& scaler, std::uint32_t batch)
    : tape_(batch) {
    leaves_ = make_leaves(tape_, p);
    const std::vector<double> zeros(batch, 0.0);
    t_node_ = tape_.input_scalar(0.0);
    for (auto& n : state_nodes_) n = tape_.input(zeros);
    std::array<ad::DualValue, 5> inputs;
    inputs[0] = ad::dual_input(tape_, t_node_);
    inputs[1] = ad::dual_input(tape_, state_nodes_[0], 0);
    inputs[2] = ad::dual_input(tape_, state_nodes_[1], 1);
    inputs[3] = ad::dual_input(tape_, state_nodes_[2], 2);
    inputs[4] = ad::dual_input(tape_, state_nodes_[3]);
    out_ = emit(tape_, leaves_, p, scaler, inputs);
}

void NetProgram::set_params(const MlpParams& p) { set_leaves(tape_, leaves_, p); }

void NetProgram::set_states(double t, std::span<const double> s, std::span<const double> h,
                            std::span<const double> v, std::span<const double> x) {
    tape_.set_input_scalar(t_node_, t);
    tape_.set_input(state_nodes_[0], s);
    tape_.set_input(state_nodes_[1], h);
    tape_.set_input(state_nodes_[2], v);
    tape_.set_input(state_nodes_[3], x);
}

namespace {

void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void write_f64_le(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
    os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

constexpr char kMagic[8] = {'K', 'S', 'T', 'O', 'R', 'N', 'E', 'T'};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json header;
    header["schema_version"] = 1;
    header["layer_sizes"] = ckpt.params.layer_sizes;
    header["activation"] = "sine";
    header["scaler"] = {{"shift", ckpt.scaler.shift}, {"scale", ckpt.scaler.scale}};
    header["master_seed"] = ckpt.master_seed;
    header["epoch"] = ckpt.epoch;
    header["n_weights"] = ckpt.params.n_parameters();
    const std::string head = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw RuntimeFailure("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    write_u32_le(os, static_cast<std::uint32_t>(head.size()));
    os.write(head.data(), static_cast<std::streamsize>(head.size()));
    std::vector<double> flat;
    ckpt.params.to_flat(flat);
    for (double v : flat) write_f64_le(os, v);
    if (!os) throw RuntimeFailure("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingCheckpoint("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) {
        throw ValidationError("not a checkpoint file: " + path);
    }
    const std::uint32_t head_len = read_u32_le(is);
    std::string head(head_len, '\0');
    is.read(head.data(), head_len);
    const json header = json::parse(head);
    if (header.at("schema_version").get<int>() != 1) {
        throw ValidationError("unsupported checkpoint schema version");
    }

    Checkpoint ckpt;
    ckpt.params.layer_sizes = header.at("layer_sizes").get<std::vector<int>>();
    ckpt.scaler.shift = header.at("scaler").at("shift").get<std::array<double, 5>>();
    ckpt.scaler.scale = header.at("scaler").at("scale").get<std::array<double, 5>>();
    ckpt.master_seed = header.at("master_seed").get<std::uint64_t>();
    ckpt.epoch = header.at("epoch").get<std::int64_t>();

    const auto n = header.at("n_weights").get<std::size_t>();
    std::vector<double> flat(n);
    for (std::size_t i = 0; i < n; ++i) flat[i] = read_f64_le(is);
    if (!is) throw ValidationError("checkpoint payload truncated: " + path);
    ckpt.params.from_flat(flat);
    return ckpt;
}

}  // namespace kinstor::net
