#include "kinstor/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

namespace kinstor::solver {

namespace {

bool all_finite(const battery::StateVector& z) {
    return std::isfinite(z.s) && std::isfinite(z.h) && std::isfinite(z.v) && std::isfinite(z.x);
}

double clip_ramp(double a, const std::optional<double>& bound) {
    if (!bound) return a;
    return std::clamp(a, -*bound, *bound);
}

}  // namespace

// ---- StorageProblem -----------------------------------------------------------

StorageProblem::StorageProblem(models::SeasonalOuSpec price, models::SeasonalOuSpec load,
                               battery::BatteryParams bp, costs::CostParams cp,
                               double horizon_hours, double initial_soc,
                               bool literal_price_sigma)
    : price_(std::move(price)),
      load_(std::move(load)),
      battery_(bp),
      costs_(cp),
      horizon_(horizon_hours),
      initial_soc_(initial_soc),
      literal_price_sigma_(literal_price_sigma) {
    price_.validate();
    load_.validate();
    battery_.validate();
    costs_.validate();
    if (price_.space != models::StateSpace::log_price) {
        throw ValidationError("price spec must be a log-price model");
    }
    if (horizon_ <= 0.0) throw ValidationError("horizon must be positive");
}

battery::StateVector StorageProblem::initial_state(std::size_t, std::uint64_t) const {
    // Deterministic start, identical across particles.
    return {price_.initial_value, load_.initial_value, 0.0, initial_soc_};
}

ExogenousPaths StorageProblem::simulate_exogenous(std::size_t n_steps, std::size_t n_particles,
                                                  bool antithetic, const RngStream& rng) const {
    const double dt = horizon_ / static_cast<double>(n_steps);
    const double sqrt_dt = std::sqrt(dt);
    ExogenousPaths exo;
    exo.s.resize((n_steps + 1) * n_particles);
    exo.h.resize((n_steps + 1) * n_particles);
    exo.dw_s.resize(n_steps * n_particles);
    exo.dw_h.resize(n_steps * n_particles);
    exo.sigma_s_eff.resize((n_steps + 1) * n_particles);
    exo.sigma_h_eff.resize((n_steps + 1) * n_particles);

    std::vector<double> log_s(n_particles, price_.initial_state());
    std::vector<double> h(n_particles, load_.initial_value);
    for (std::size_t n = 0; n <= n_steps; ++n) {
        const double t = dt * static_cast<double>(n);
        const double sig_s = price_.sigma.at(t);
        const double sig_h = load_.sigma.at(t);
        for (std::size_t i = 0; i < n_particles; ++i) {
            const double s_level = std::exp(log_s[i]);
            exo.s[n * n_particles + i] = s_level;
            exo.h[n * n_particles + i] = h[i];
            exo.sigma_s_eff[n * n_particles + i] =
                literal_price_sigma_ ? sig_s : sig_s * s_level;
            exo.sigma_h_eff[n * n_particles + i] = sig_h;
            if (n < n_steps) {
                const double zs = ensemble::path_normal(rng, i, n_particles, antithetic, n,
                                                        NoiseChannel::price);
                const double zh = ensemble::path_normal(rng, i, n_particles, antithetic, n,
                                                        NoiseChannel::load);
                exo.dw_s[n * n_particles + i] = sqrt_dt * zs;
                exo.dw_h[n * n_particles + i] = sqrt_dt * zh;
                log_s[i] = models::ou_step(price_, log_s[i], t, dt, zs);
                h[i] = models::ou_step(load_, h[i], t, dt, zh);
            }
        }
    }
    return exo;
}

double StorageProblem::ramp_coef(const battery::StateVector& z, double mean_v) const {
    return -battery::phi(z.x, battery_) /
           (2.0 * costs_.lambda_a * battery::sigma_v(z, mean_v, battery_));
}

double StorageProblem::sigma_v_eff(const battery::StateVector& z, double mean_v) const {
    return battery::sigma_v(z, mean_v, battery_);
}

battery::StateVector StorageProblem::step_state(const battery::StateVector& z, double ramp,
                                                double mean_v, double ds, double dh,
                                                double noise_v, double dt) const {
    return battery::step(z, ramp, mean_v, ds, dh, noise_v, dt, battery_);
}

double StorageProblem::running_cost_frozen(const battery::StateVector& z,
                                           const ensemble::EnsembleMeans& m) const {
    return costs::running_cost(z, 0.0, m.mean_x, m.mean_hv, costs_);
}

costs::CostBreakdown StorageProblem::running_terms(const battery::StateVector& z, double ramp,
                                                   const ensemble::EnsembleMeans& m,
                                                   bool benchmark_mode) const {
    return costs::running_cost_terms(z, ramp, m.mean_x, m.mean_hv, costs_, benchmark_mode);
}

double StorageProblem::terminal_cost(const battery::StateVector& z, double mean_x) const {
    return costs::terminal_cost(z, mean_x, costs_);
}

std::array<double, 3> StorageProblem::terminal_gradient_shv(const battery::StateVector& z,
                                                            double mean_x) const {
    const auto g = costs::terminal_gradient(z, mean_x, costs_);
    return {g[0], g[1], g[2]};
}

// ---- LqProblem ------------------------------------------------------------------

LqProblem::LqProblem(oracles::LqConfig config, double v_box, double x_box)
    : config_(config), v_box_(v_box), x_box_(x_box) {
    config_.validate();
    if (v_box_ < 0.0 || x_box_ < 0.0) throw ValidationError("lq: boxes must be >= 0");
}

battery::StateVector LqProblem::initial_state(std::size_t particle, std::uint64_t seed) const {
    RngStream rng(seed, streams::initial);
    const double uv = rng.uniform(particle, 0, 0);
    const double ux = rng.uniform(particle, 1, 0);
    return {1.0, 0.0, v_box_ * (2.0 * uv - 1.0), x_box_ * (2.0 * ux - 1.0)};
}

ExogenousPaths LqProblem::simulate_exogenous(std::size_t n_steps, std::size_t n_particles, bool,
                                             const RngStream&) const {
    ExogenousPaths exo;
    exo.s.assign((n_steps + 1) * n_particles, 1.0);
    exo.h.assign((n_steps + 1) * n_particles, 0.0);
    exo.dw_s.assign(n_steps * n_particles, 0.0);
    exo.dw_h.assign(n_steps * n_particles, 0.0);
    exo.sigma_s_eff.assign((n_steps + 1) * n_particles, 0.0);
    exo.sigma_h_eff.assign((n_steps + 1) * n_particles, 0.0);
    return exo;
}

double LqProblem::ramp_coef(const battery::StateVector&, double) const {
    return -1.0 / (2.0 * config_.lambda_a * config_.sigma);
}

battery::StateVector LqProblem::step_state(const battery::StateVector& z, double ramp, double,
                                           double, double, double noise_v, double dt) const {
    battery::StateVector out = z;
    out.v = z.v + ramp * dt + config_.sigma * std::sqrt(dt) * noise_v;
    out.x = z.x + z.v * dt;
    return out;
}

double LqProblem::running_cost_frozen(const battery::StateVector& z,
                                      const ensemble::EnsembleMeans&) const {
    return config_.lambda_v * z.v * z.v;
}

costs::CostBreakdown LqProblem::running_terms(const battery::StateVector& z, double ramp,
                                              const ensemble::EnsembleMeans&,
                                              bool benchmark_mode) const {
    costs::CostBreakdown out;
    out.degradation = config_.lambda_v * z.v * z.v;
    out.ramp = benchmark_mode ? 0.0 : config_.lambda_a * ramp * ramp;
    return out;
}

double LqProblem::terminal_cost(const battery::StateVector& z, double) const {
    return config_.omega_t * z.x * z.x;
}

// ---- TrainingConfig -------------------------------------------------------------

void TrainingConfig::validate() const {
    if (n_steps < 1) throw ValidationError("training: n_steps >= 1");
    if (n_particles < 2) throw ValidationError("training: n_particles >= 2");
    if (antithetic && n_particles % 2 != 0) {
        throw ValidationError("training: antithetic pairing needs an even particle count");
    }
    if (epochs < 0) throw ValidationError("training: epochs >= 0");
    if (clip_norm <= 0.0) throw ValidationError("training: clip_norm > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("training: momentum in [0,1)");
    if (hidden_layers.empty()) throw ValidationError("training: need at least one hidden layer");
    for (int hsize : hidden_layers) {
        if (hsize < 1) throw ValidationError("training: hidden layer sizes >= 1");
    }
    if (n_workers < 1) throw ValidationError("training: n_workers >= 1");
    if (chunk_width < 1) throw ValidationError("training: chunk_width >= 1");
    double prev = std::numeric_limits<double>::infinity();
    int prev_epoch = 0;
    for (const auto& st : lr_schedule) {
        if (st.learning_rate <= 0.0) throw ValidationError("training: learning rates > 0");
        if (st.learning_rate > prev) {
            throw ValidationError("training: learning rates must be non-increasing");
        }
        if (st.until_epoch <= prev_epoch) {
            throw ValidationError("training: lr stage boundaries must increase");
        }
        prev = st.learning_rate;
        prev_epoch = st.until_epoch;
    }
    if (ramp_clip && *ramp_clip <= 0.0) throw ValidationError("training: ramp_clip > 0");
}

std::vector<LrStage> TrainingConfig::effective_schedule() const {
    if (!lr_schedule.empty()) return lr_schedule;
    // 60% / 30% / 10% at 1e-3 / 1e-4 / 1e-5.
    std::vector<LrStage> stages;
    const int b1 = std::max(1, (epochs * 6) / 10);
    const int b2 = std::max(b1 + 1, (epochs * 9) / 10);
    stages.push_back({b1, 1e-3});
    if (b2 < epochs) {
        stages.push_back({b2, 1e-4});
        stages.push_back({epochs, 1e-5});
    } else {
        stages.push_back({std::max(epochs, b1 + 1), 1e-4});
    }
    return stages;
}

double TrainingConfig::learning_rate_at(int epoch) const {
    const auto stages = effective_schedule();
    for (const auto& st : stages) {
        if (epoch < st.until_epoch) return st.learning_rate;
    }
    return stages.back().learning_rate;
}

std::vector<int> TrainingConfig::layer_sizes() const {
    std::vector<int> sizes;
    sizes.push_back(5);
    sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
    sizes.push_back(1);
    return sizes;
}

// ---- rollout ----------------------------------------------------------------------

RolloutRecord rollout(const Problem& problem, const net::MlpParams& params,
                      const net::InputScaler& scaler, const TrainingConfig& config,
                      std::uint64_t epoch) {
    const auto n_steps = static_cast<std::size_t>(config.n_steps);
    const std::size_t m = config.n_particles;
    const double horizon = problem.horizon();
    const double dt = horizon / static_cast<double>(n_steps);
    const double sqrt_dt = std::sqrt(dt);

    RolloutRecord rec;
    rec.n_steps = n_steps;
    rec.n_particles = m;
    rec.dt = dt;
    rec.particles = ensemble::ParticleEnsemble(horizon, n_steps, m);
    const RngStream base(config.master_seed, streams::paths);
    const RngStream epoch_rng = base.substream(config.freeze_paths ? 0 : epoch + 1);
    rec.exo = problem.simulate_exogenous(n_steps, m, config.antithetic, epoch_rng);

    rec.dw_v.resize(n_steps * m);
    rec.sigma_v_eff.resize((n_steps + 1) * m);
    rec.ramp_coef.resize(n_steps * m);
    rec.f_frozen.resize(n_steps * m);
    rec.y.resize((n_steps + 1) * m);
    rec.zeta_s.resize((n_steps + 1) * m);
    rec.zeta_h.resize((n_steps + 1) * m);
    rec.zeta_v.resize((n_steps + 1) * m);
    rec.ramp.resize(n_steps * m);
    rec.g_terminal.resize(m);
    for (auto& tgt : rec.zeta_terminal_target) tgt.resize(m);

    // Current states as coordinate arrays (the network consumes them batched).
    std::vector<double> sv(m), hv(m), vv(m), xv(m);
    for (std::size_t i = 0; i < m; ++i) {
        const battery::StateVector z0 = problem.initial_state(i, config.master_seed);
        sv[i] = rec.exo.s[i];
        hv[i] = rec.exo.h[i];
        vv[i] = z0.v;
        xv[i] = z0.x;
    }

    const int n_workers = (config.n_workers > 1 && m % static_cast<std::size_t>(config.n_workers) == 0)
                              ? config.n_workers
                              : 1;
    const std::size_t block = m / static_cast<std::size_t>(n_workers);
    std::vector<net::NetProgram> programs;
    programs.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
        programs.emplace_back(params, scaler, static_cast<std::uint32_t>(block));
    }

    for (std::size_t n = 0; n <= n_steps; ++n) {
        const double t = dt * static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
            rec.particles.state(n, i) = {sv[i], hv[i], vv[i], xv[i]};
        }
        const ensemble::EnsembleMeans means = rec.particles.update_means(n);

        auto run_block = [&](int w) {
            const std::size_t b0 = static_cast<std::size_t>(w) * block;
            net::NetProgram& prog = programs[static_cast<std::size_t>(w)];
            prog.set_states(t, {sv.data() + b0, block}, {hv.data() + b0, block},
                            {vv.data() + b0, block}, {xv.data() + b0, block});
            prog.run();
            for (std::size_t k = 0; k < block; ++k) {
                const std::size_t i = b0 + k;
                const std::size_t idx = n * m + i;
                const battery::StateVector z = rec.particles.state(n, i);
                const double sig_v = problem.sigma_v_eff(z, means.mean_v);
                rec.sigma_v_eff[idx] = sig_v;
                rec.y[idx] = prog.y_at(static_cast<std::uint32_t>(k));
                rec.zeta_s[idx] =
                    prog.grad_at(0, static_cast<std::uint32_t>(k)) * rec.exo.sigma_s_eff[idx];
                rec.zeta_h[idx] =
                    prog.grad_at(1, static_cast<std::uint32_t>(k)) * rec.exo.sigma_h_eff[idx];
                rec.zeta_v[idx] = prog.grad_at(2, static_cast<std::uint32_t>(k)) * sig_v;
                if (n < n_steps) {
                    rec.ramp_coef[idx] = problem.ramp_coef(z, means.mean_v);
                    rec.ramp[idx] =
                        clip_ramp(rec.ramp_coef[idx] * rec.zeta_v[idx], config.ramp_clip);
                    rec.f_frozen[idx] = problem.running_cost_frozen(z, means);
                }
            }
        };
        if (n_workers == 1) {
            run_block(0);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<std::size_t>(n_workers));
            for (int w = 0; w < n_workers; ++w) pool.emplace_back(run_block, w);
            for (auto& th : pool) th.join();
        }

        if (n == n_steps) break;

        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t idx = n * m + i;
            const double noise_v =
                ensemble::path_normal(epoch_rng, i, m, config.antithetic, n, NoiseChannel::power);
            rec.dw_v[idx] = sqrt_dt * noise_v;
            const battery::StateVector z = rec.particles.state(n, i);
            const double ds = rec.exo.s[(n + 1) * m + i] - rec.exo.s[idx];
            const double dh = rec.exo.h[(n + 1) * m + i] - rec.exo.h[idx];
            const battery::StateVector z_next =
                problem.step_state(z, rec.ramp[idx], means.mean_v, ds, dh, noise_v, dt);
            if (!all_finite(z_next)) {
                throw NonFiniteState("rollout diverged at step " + std::to_string(n));
            }
            sv[i] = z_next.s;
            hv[i] = z_next.h;
            vv[i] = z_next.v;
            xv[i] = z_next.x;
        }
    }

    const ensemble::EnsembleMeans& terminal_means = rec.particles.means_at(n_steps);
    for (std::size_t i = 0; i < m; ++i) {
        const battery::StateVector z = rec.particles.state(n_steps, i);
        rec.g_terminal[i] = problem.terminal_cost(z, terminal_means.mean_x);
        const auto grad = problem.terminal_gradient_shv(z, terminal_means.mean_x);
        const std::size_t idx = n_steps * m + i;
        rec.zeta_terminal_target[0][i] = grad[0] * rec.exo.sigma_s_eff[idx];
        rec.zeta_terminal_target[1][i] = grad[1] * rec.exo.sigma_h_eff[idx];
        rec.zeta_terminal_target[2][i] = grad[2] * rec.sigma_v_eff[idx];
    }
    return rec;
}

// ---- loss -----------------------------------------------------------------------

LossBreakdown loss_from_fields(const Problem& problem, const RolloutRecord& rec,
                               std::span<const double> y, std::span<const double> zeta_s,
                               std::span<const double> zeta_h, std::span<const double> zeta_v,
                               std::optional<double> ramp_clip) {
    const std::size_t m = rec.n_particles;
    const std::size_t n_steps = rec.n_steps;
    const double lambda_a = problem.lambda_a();
    LossBreakdown out;

    for (std::size_t n = 0; n < n_steps; ++n) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t idx = n * m + i;
            const double a = clip_ramp(rec.ramp_coef[idx] * zeta_v[idx], ramp_clip);
            const double f = rec.f_frozen[idx] + lambda_a * a * a;
            const double pred = y[idx] - f * rec.dt + zeta_s[idx] * rec.exo.dw_s[idx] +
                                zeta_h[idx] * rec.exo.dw_h[idx] + zeta_v[idx] * rec.dw_v[idx];
            const double r = y[(n + 1) * m + i] - pred;
            acc += r * r;
        }
        out.path += acc / static_cast<double>(m);
    }

    double tv = 0.0, tg = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t idx = n_steps * m + i;
        const double r = y[idx] - rec.g_terminal[i];
        tv += r * r;
        const double rs = zeta_s[idx] - rec.zeta_terminal_target[0][i];
        const double rh = zeta_h[idx] - rec.zeta_terminal_target[1][i];
        const double rv = zeta_v[idx] - rec.zeta_terminal_target[2][i];
        tg += rs * rs + rh * rh + rv * rv;
    }
    out.terminal_value = tv / static_cast<double>(m);
    out.terminal_gradient = tg / static_cast<double>(m);
    return out;
}

LossProgram::LossProgram(const Problem& problem, const net::MlpParams& params,
                         const net::InputScaler& scaler, std::size_t n_steps, double dt,
                         std::uint32_t chunk_width, std::optional<double> ramp_clip)
    : tape_(chunk_width),
      chunk_width_(chunk_width),
      n_steps_(n_steps),
      dt_(dt),
      lambda_a_(problem.lambda_a()),
      ramp_clip_(ramp_clip) {
    leaves_ = net::make_leaves(tape_, params);
    const std::vector<double> zeros(chunk_width, 0.0);

    state_in_.resize(n_steps + 1);
    sigma_in_.resize(n_steps + 1);
    coef_in_.resize(n_steps);
    f_in_.resize(n_steps);
    dw_in_.resize(n_steps);

    std::vector<ad::NodeId> y_nodes(n_steps + 1);
    std::vector<std::array<ad::NodeId, 3>> zeta_nodes(n_steps + 1);

    for (std::size_t n = 0; n <= n_steps; ++n) {
        for (auto& node : state_in_[n]) node = tape_.input(zeros);
        for (auto& node : sigma_in_[n]) node = tape_.input(zeros);
        std::array<ad::DualValue, 5> inputs;
        inputs[0] = ad::dual_input(tape_, tape_.input_scalar(dt * static_cast<double>(n)));
        inputs[1] = ad::dual_input(tape_, state_in_[n][0], 0);
        inputs[2] = ad::dual_input(tape_, state_in_[n][1], 1);
        inputs[3] = ad::dual_input(tape_, state_in_[n][2], 2);
        inputs[4] = ad::dual_input(tape_, state_in_[n][3]);
        const ad::DualValue u = net::emit(tape_, leaves_, params, scaler, inputs);
        y_nodes[n] = u.val;
        for (int c = 0; c < 3; ++c) {
            zeta_nodes[n][c] = tape_.mul(u.tan[static_cast<std::size_t>(c)], sigma_in_[n][c]);
        }
    }

    ad::NodeId path_acc = tape_.constant(0.0);
    for (std::size_t n = 0; n < n_steps; ++n) {
        coef_in_[n] = tape_.input(zeros);
        f_in_[n] = tape_.input(zeros);
        for (auto& node : dw_in_[n]) node = tape_.input(zeros);

        ad::NodeId a = tape_.mul(zeta_nodes[n][2], coef_in_[n]);
        if (ramp_clip_) {
            a = tape_.min(tape_.max(a, tape_.constant(-*ramp_clip_)), tape_.constant(*ramp_clip_));
        }
        const ad::NodeId f = tape_.add(f_in_[n], tape_.scale(tape_.mul(a, a), lambda_a_));
        ad::NodeId pred = tape_.add(y_nodes[n], tape_.scale(f, -dt_));
        for (int c = 0; c < 3; ++c) {
            pred = tape_.add(pred, tape_.mul(zeta_nodes[n][c], dw_in_[n][c]));
        }
        const ad::NodeId r = tape_.sub(y_nodes[n + 1], pred);
        path_acc = tape_.add(path_acc, tape_.reduce_mean(tape_.square(r)));
    }
    loss_path_ = path_acc;

    g_in_ = tape_.input(zeros);
    const ad::NodeId r_term = tape_.sub(y_nodes[n_steps], g_in_);
    loss_term_val_ = tape_.reduce_mean(tape_.square(r_term));

    ad::NodeId tg_acc = tape_.constant(0.0);
    for (int c = 0; c < 3; ++c) {
        zeta_target_in_[c] = tape_.input(zeros);
        const ad::NodeId rz = tape_.sub(zeta_nodes[n_steps][c], zeta_target_in_[c]);
        tg_acc = tape_.add(tg_acc, tape_.reduce_mean(tape_.square(rz)));
    }
    loss_term_grad_ = tg_acc;

    loss_ = tape_.add(loss_path_, tape_.add(loss_term_val_, loss_term_grad_));
}

LossBreakdown LossProgram::run_chunk(const RolloutRecord& rec, const net::MlpParams& params,
                                     std::size_t chunk_start, std::vector<double>& grad) {
    const std::size_t m = rec.n_particles;
    const std::size_t cw = chunk_width_;
    net::set_leaves(tape_, leaves_, params);

    std::vector<double> buf(cw);
    auto slice = [&](const std::vector<double>& src, std::size_t n) {
        return std::span<const double>(src.data() + n * m + chunk_start, cw);
    };

    for (std::size_t n = 0; n <= n_steps_; ++n) {
        // States are archived as structs; repack the chunk per coordinate.
        for (std::size_t k = 0; k < cw; ++k) buf[k] = rec.particles.state(n, chunk_start + k).s;
        tape_.set_input(state_in_[n][0], buf);
        for (std::size_t k = 0; k < cw; ++k) buf[k] = rec.particles.state(n, chunk_start + k).h;
        tape_.set_input(state_in_[n][1], buf);
        for (std::size_t k = 0; k < cw; ++k) buf[k] = rec.particles.state(n, chunk_start + k).v;
        tape_.set_input(state_in_[n][2], buf);
        for (std::size_t k = 0; k < cw; ++k) buf[k] = rec.particles.state(n, chunk_start + k).x;
        tape_.set_input(state_in_[n][3], buf);
        tape_.set_input(sigma_in_[n][0], slice(rec.exo.sigma_s_eff, n));
        tape_.set_input(sigma_in_[n][1], slice(rec.exo.sigma_h_eff, n));
        tape_.set_input(sigma_in_[n][2], slice(rec.sigma_v_eff, n));
        if (n < n_steps_) {
            tape_.set_input(coef_in_[n], slice(rec.ramp_coef, n));
            tape_.set_input(f_in_[n], slice(rec.f_frozen, n));
            tape_.set_input(dw_in_[n][0], slice(rec.exo.dw_s, n));
            tape_.set_input(dw_in_[n][1], slice(rec.exo.dw_h, n));
            tape_.set_input(dw_in_[n][2], slice(rec.dw_v, n));
        }
    }
    tape_.set_input(g_in_, {rec.g_terminal.data() + chunk_start, cw});
    for (int c = 0; c < 3; ++c) {
        tape_.set_input(zeta_target_in_[c],
                        {rec.zeta_terminal_target[static_cast<std::size_t>(c)].data() + chunk_start,
                         cw});
    }

    tape_.forward();
    LossBreakdown out;
    out.path = tape_.value(loss_path_);
    out.terminal_value = tape_.value(loss_term_val_);
    out.terminal_gradient = tape_.value(loss_term_grad_);

    tape_.backward(loss_);
    for (std::size_t p = 0; p < leaves_.size(); ++p) grad[p] += tape_.adjoint(leaves_[p]);
    return out;
}

// ---- training loop -----------------------------------------------------------------

net::InputScaler pilot_scaler(const Problem& problem, const TrainingConfig& config) {
    const auto n_steps = static_cast<std::size_t>(config.n_steps);
    const std::size_t m = config.n_particles;
    const double dt = problem.horizon() / static_cast<double>(n_steps);
    const RngStream rng = RngStream(config.master_seed, streams::paths).substream(0);
    const ExogenousPaths exo = problem.simulate_exogenous(n_steps, m, config.antithetic, rng);

    std::vector<battery::StateVector> states(m);
    for (std::size_t i = 0; i < m; ++i) {
        states[i] = problem.initial_state(i, config.master_seed);
        states[i].s = exo.s[i];
        states[i].h = exo.h[i];
    }

    std::vector<std::array<double, 5>> samples;
    samples.reserve((n_steps + 1) * m);
    for (std::size_t n = 0; n <= n_steps; ++n) {
        const double t = dt * static_cast<double>(n);
        double mean_v = 0.0;
        for (const auto& z : states) mean_v += z.v;
        mean_v /= static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            const auto& z = states[i];
            samples.push_back({t, z.s, z.h, z.v, z.x});
        }
        if (n == n_steps) break;
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t idx = n * m + i;
            const double noise_v =
                ensemble::path_normal(rng, i, m, config.antithetic, n, NoiseChannel::power);
            const double ds = exo.s[(n + 1) * m + i] - exo.s[idx];
            const double dh = exo.h[(n + 1) * m + i] - exo.h[idx];
            states[i] = problem.step_state(states[i], 0.0, mean_v, ds, dh, noise_v, dt);
        }
    }
    return net::InputScaler::fit(samples);
}

TrainResult train(const Problem& problem, const TrainingConfig& config,
                  const std::string& checkpoint_dir,
                  std::vector<ensemble::ParticleEnsemble>* epoch_flows) {
    config.validate();
    const std::size_t m = config.n_particles;

    net::MlpParams params = net::xavier_init(config.layer_sizes(), config.master_seed);
    const net::InputScaler scaler = pilot_scaler(problem, config);

    const std::size_t n_params = params.n_parameters();
    std::vector<double> theta;
    params.to_flat(theta);
    std::vector<double> velocity(n_params, 0.0);
    std::vector<double> last_good = theta;

    // Chunk geometry: equal chunks, fixed combination order.
    std::uint32_t cw = std::min<std::uint32_t>(config.chunk_width,
                                               static_cast<std::uint32_t>(m));
    if (m % cw != 0) cw = static_cast<std::uint32_t>(m);
    const std::size_t n_chunks = m / cw;
    const int n_workers = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(config.n_workers), n_chunks));

    std::vector<std::unique_ptr<LossProgram>> loss_programs;
    for (int w = 0; w < n_workers; ++w) {
        loss_programs.push_back(std::make_unique<LossProgram>(
            problem, params, scaler, static_cast<std::size_t>(config.n_steps),
            problem.horizon() / config.n_steps, cw, config.ramp_clip));
    }

    TrainingTrace trace;
    const auto schedule = config.effective_schedule();
    auto write_checkpoint = [&](std::int64_t epoch_index) {
        if (checkpoint_dir.empty()) return;
        net::Checkpoint ckpt{params, scaler, config.master_seed, epoch_index};
        save_checkpoint(checkpoint_dir + "/checkpoint_" + std::to_string(epoch_index) + ".bin",
                        ckpt);
    };

    std::optional<ensemble::ParticleEnsemble> previous_flow;
    double lr_scale = 1.0;
    int consecutive_failures = 0;

    int epoch = 0;
    while (epoch < config.epochs) {
        const auto t_start = std::chrono::steady_clock::now();
        const double lr = config.learning_rate_at(epoch) * lr_scale;

        LossBreakdown loss;
        std::vector<double> grad(n_params, 0.0);
        RolloutRecord record;
        bool failed = false;
        try {
            params.from_flat(theta);
            record = rollout(problem, params, scaler, config, static_cast<std::uint64_t>(epoch));

            std::vector<std::vector<double>> worker_grads(
                static_cast<std::size_t>(n_workers), std::vector<double>(n_params, 0.0));
            std::vector<LossBreakdown> worker_loss(static_cast<std::size_t>(n_workers));
            auto run_worker = [&](int w) {
                for (std::size_t k = static_cast<std::size_t>(w); k < n_chunks;
                     k += static_cast<std::size_t>(n_workers)) {
                    const LossBreakdown part = loss_programs[static_cast<std::size_t>(w)]->run_chunk(
                        record, params, k * cw, worker_grads[static_cast<std::size_t>(w)]);
                    worker_loss[static_cast<std::size_t>(w)].path += part.path;
                    worker_loss[static_cast<std::size_t>(w)].terminal_value += part.terminal_value;
                    worker_loss[static_cast<std::size_t>(w)].terminal_gradient +=
                        part.terminal_gradient;
                }
            };
            if (n_workers == 1) {
                run_worker(0);
            } else {
                std::vector<std::thread> pool;
                for (int w = 0; w < n_workers; ++w) pool.emplace_back(run_worker, w);
                for (auto& th : pool) th.join();
            }
            const double chunk_weight = static_cast<double>(cw) / static_cast<double>(m);
            for (int w = 0; w < n_workers; ++w) {
                loss.path += worker_loss[static_cast<std::size_t>(w)].path * chunk_weight;
                loss.terminal_value +=
                    worker_loss[static_cast<std::size_t>(w)].terminal_value * chunk_weight;
                loss.terminal_gradient +=
                    worker_loss[static_cast<std::size_t>(w)].terminal_gradient * chunk_weight;
                for (std::size_t p = 0; p < n_params; ++p) {
                    grad[p] += worker_grads[static_cast<std::size_t>(w)][p] * chunk_weight;
                }
            }
            if (!std::isfinite(loss.total())) throw NonFiniteLoss("loss is not finite");
            for (double g : grad) {
                if (!std::isfinite(g)) throw NonFiniteLoss("gradient is not finite");
            }
        } catch (const RuntimeFailure&) {
            failed = true;
        }

        if (failed) {
            if (++consecutive_failures > 3) {
                throw NonFiniteLoss("training diverged after 3 restarts");
            }
            theta = last_good;
            std::fill(velocity.begin(), velocity.end(), 0.0);
            lr_scale *= 0.5;
            continue;  // retry the same epoch at a lower rate
        }
        consecutive_failures = 0;

        double norm2 = 0.0;
        for (double g : grad) norm2 += g * g;
        const double grad_norm = std::sqrt(norm2);
        const double scale_g = grad_norm > config.clip_norm ? config.clip_norm / grad_norm : 1.0;
        for (std::size_t p = 0; p < n_params; ++p) {
            velocity[p] = config.momentum * velocity[p] + grad[p] * scale_g;
            theta[p] -= lr * velocity[p];
        }
        last_good = theta;

        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = loss.total();
        stats.loss_path = loss.path;
        stats.loss_terminal_value = loss.terminal_value;
        stats.loss_terminal_gradient = loss.terminal_gradient;
        stats.grad_norm = grad_norm;
        stats.learning_rate = lr;
        stats.picard =
            previous_flow ? ensemble::picard_diagnostic(record.particles, *previous_flow) : 0.0;
        stats.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        trace.epochs.push_back(stats);

        previous_flow = std::move(record.particles);
        if (epoch_flows) epoch_flows->push_back(*previous_flow);

        for (const auto& st : schedule) {
            if (epoch + 1 == st.until_epoch && epoch + 1 < config.epochs) {
                params.from_flat(theta);
                write_checkpoint(epoch + 1);
            }
        }
        ++epoch;
    }

    params.from_flat(theta);
    write_checkpoint(config.epochs);
    TrainResult result;
    result.checkpoint = net::Checkpoint{params, scaler, config.master_seed, config.epochs};
    result.trace = trace;
    return result;
}

}  // namespace kinstor::solver
