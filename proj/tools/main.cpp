// kinstor: seasonal OU calibration, mean-field FBSDE training, and
// controlled-vs-passive evaluation for the kinetic storage model.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "kinstor/config.hpp"
#include "kinstor/oracles.hpp"

namespace ks = kinstor;
using ks::config::json;

namespace {

ks::config::Provenance make_provenance(const json& canonical, std::uint64_t seed) {
    return {ks::config::config_hash(canonical), seed};
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ks::RuntimeFailure("cannot create output directory: " + dir);
}

int cmd_calibrate(const std::string& input, const std::string& kind_name, const std::string& out,
                  int degree, int day_start, int day_end) {
    ks::calibrate::SeriesKind kind;
    if (kind_name == "price") {
        kind = ks::calibrate::SeriesKind::price;
    } else if (kind_name == "load") {
        kind = ks::calibrate::SeriesKind::load;
    } else {
        throw ks::ValidationError("--kind must be price or load");
    }
    const auto series = ks::config::read_series_csv(input, kind);
    const auto report = ks::calibrate::fit(series, degree, {day_start, day_end});

    const json canonical = {{"command", "calibrate"},
                            {"kind", kind_name},
                            {"degree", degree},
                            {"day_window", {day_start, day_end}}};
    ks::config::write_json_file(out, ks::config::report_to_json(report),
                                make_provenance(canonical, 0));
    std::cerr << "calibrated " << kind_name << ": r^2=" << report.r_squared
              << " kappa=(" << report.spec.kappa.day_value << "," << report.spec.kappa.night_value
              << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    const auto cfg = ks::config::load_run_config(config_path);
    ensure_dir(out_dir);
    const auto problem = cfg.make_problem();
    const auto prov = make_provenance(ks::config::to_json(cfg), cfg.master_seed);

    const auto result = ks::solver::train(problem, cfg.training, out_dir);
    ks::config::write_trace_csv(out_dir + "/trace.csv", result.trace, prov);

    json summary;
    summary["epochs"] = result.trace.epochs.size();
    if (!result.trace.epochs.empty()) {
        summary["first_loss"] = result.trace.epochs.front().loss;
        summary["final_loss"] = result.trace.epochs.back().loss;
    }
    summary["checkpoint"] = out_dir + "/checkpoint_" + std::to_string(cfg.training.epochs) + ".bin";
    ks::config::write_json_file(out_dir + "/train_summary.json", summary, prov);

    double wall = 0.0;
    for (const auto& e : result.trace.epochs) wall += e.wall_seconds;
    std::cerr << "trained " << result.trace.epochs.size() << " epochs in " << wall << " s\n";
    return 0;
}

ks::policy::PolicyKind parse_policy(const std::string& name) {
    if (name == "neural") return ks::policy::PolicyKind::neural;
    if (name == "passive") return ks::policy::PolicyKind::passive;
    if (name == "zero") return ks::policy::PolicyKind::zero;
    throw ks::ValidationError("--policy must be neural|passive|zero");
}

int cmd_evaluate(const std::string& config_path, const std::string& policy_name,
                 const std::string& checkpoint_path, const std::string& out_dir,
                 std::uint64_t eval_id, double band) {
    const auto cfg = ks::config::load_run_config(config_path);
    ensure_dir(out_dir);
    const auto problem = cfg.make_problem();
    const auto prov = make_provenance(ks::config::to_json(cfg), cfg.master_seed);
    const auto kind = parse_policy(policy_name);

    ks::net::Checkpoint ckpt;
    const ks::net::Checkpoint* ckpt_ptr = nullptr;
    if (kind == ks::policy::PolicyKind::neural) {
        if (checkpoint_path.empty()) throw ks::MissingCheckpoint("--checkpoint is required");
        ckpt = ks::net::load_checkpoint(checkpoint_path);
        ckpt_ptr = &ckpt;
    }

    const auto run = ks::evaluate::run_policy(problem, kind, ckpt_ptr, cfg.training.n_steps,
                                              cfg.training.n_particles, cfg.training.antithetic,
                                              cfg.master_seed, eval_id);
    const auto stats = ks::evaluate::cost_statistics(run, band);
    ks::config::write_cost_series_csv(out_dir + "/cost_series.csv", run, stats, prov);
    ks::config::write_state_stats_csv(out_dir + "/state_stats.csv", run.particles, band, prov);

    json summary;
    summary["policy"] = policy_name;
    summary["band_level"] = band;
    summary["mean_terminal_cost"] = stats.mean.back();
    summary["median_terminal_cost"] = stats.median.back();
    ks::config::write_json_file(out_dir + "/evaluate_summary.json", summary, prov);
    std::cerr << "evaluated " << policy_name << ": mean J_T=" << stats.mean.back() << "\n";
    return 0;
}

int cmd_compare(const std::string& config_path, const std::string& checkpoint_path,
                const std::string& out_dir, std::uint64_t eval_id, double band) {
    const auto cfg = ks::config::load_run_config(config_path);
    ensure_dir(out_dir);
    const auto problem = cfg.make_problem();
    const auto prov = make_provenance(ks::config::to_json(cfg), cfg.master_seed);
    const auto ckpt = ks::net::load_checkpoint(checkpoint_path);

    const auto controlled = ks::evaluate::run_policy(
        problem, ks::policy::PolicyKind::neural, &ckpt, cfg.training.n_steps,
        cfg.training.n_particles, cfg.training.antithetic, cfg.master_seed, eval_id);
    const auto benchmark = ks::evaluate::run_policy(
        problem, ks::policy::PolicyKind::passive, nullptr, cfg.training.n_steps,
        cfg.training.n_particles, cfg.training.antithetic, cfg.master_seed, eval_id);
    const auto report = ks::evaluate::compare(controlled, benchmark, band);

    ks::config::write_comparison_csv(out_dir + "/comparison.csv", report, controlled, prov);
    ks::config::write_state_stats_csv(out_dir + "/controlled_states.csv", controlled.particles,
                                      band, prov);
    ks::config::write_state_stats_csv(out_dir + "/benchmark_states.csv", benchmark.particles,
                                      band, prov);

    json summary;
    summary["band_level"] = report.band_level;
    summary["paired_seeds"] = report.paired_seeds;
    summary["mean_terminal_controlled"] = report.controlled.mean.back();
    summary["mean_terminal_benchmark"] = report.benchmark.mean.back();
    summary["mean_diff_terminal"] = report.mean_diff_terminal;
    summary["ci_lower"] = report.ci_lower;
    summary["ci_upper"] = report.ci_upper;
    ks::config::write_json_file(out_dir + "/compare_summary.json", summary, prov);
    std::cerr << "compare: diff=" << report.mean_diff_terminal << " ci=[" << report.ci_lower
              << "," << report.ci_upper << "]\n";
    return 0;
}

int cmd_oracle(const std::string& suite, const std::string& out) {
    json report;
    report["suite"] = suite;
    bool pass = true;
    auto record = [&](const std::string& name, bool ok, double value) {
        report["checks"][name] = {{"pass", ok}, {"value", value}};
        pass = pass && ok;
    };

    if (suite == "kernel") {
        const auto m = ks::oracles::kernel_moments(1.0, 0.0, 0.3, -0.2, 0.5, 64);
        record("normalization", std::abs(m.mass - 1.0) < 1e-6, m.mass);
        record("mean_transport",
               std::abs(m.mean_v - 0.3) < 1e-6 && std::abs(m.mean_x - (-0.2 + 0.3 * 0.5)) < 1e-6,
               m.mean_x);
        const double tau = 0.5;
        record("cov_vv", std::abs(m.cov_vv - tau) < 1e-6, m.cov_vv);
        record("cov_vx", std::abs(m.cov_vx - tau * tau / 2.0) < 1e-6, m.cov_vx);
        record("cov_xx", std::abs(m.cov_xx - tau * tau * tau / 3.0) < 1e-6, m.cov_xx);
        const double ck = ks::oracles::chapman_kolmogorov_residual(1.0, 0.0, 0.25, 0.5, 0.3, -0.2,
                                                                   0.1, 0.05, 128);
        record("chapman_kolmogorov", ck < 1e-4, ck);
    } else if (suite == "lq") {
        const ks::oracles::LqConfig lq_cfg;
        const auto lq = ks::oracles::LqSolution::solve(lq_cfg);
        const double value = lq.value(0.0, 1.0, 0.0);
        const double mc = ks::oracles::lq_mc_cost(lq, 1.0, 0.0, 20000, 400, 11);
        record("riccati_vs_mc", std::abs(mc - value) < 0.01 * std::max(std::abs(value), 1e-12),
               mc / value);
        report["riccati_value"] = value;
        report["mc_value"] = mc;
    } else if (suite == "ou") {
        ks::models::SeasonalOuSpec spec;
        spec.space = ks::models::StateSpace::log_price;
        spec.initial_value = 1.0;
        spec.mean_profile = ks::models::SeasonalProfile{24.0, {0.0, 0.3}};
        spec.kappa = ks::models::RegimeSchedule::constant(1.0);
        spec.sigma = ks::models::RegimeSchedule{8, 19, 0.3, 0.2};
        const double horizon = 24.0;
        const auto exact = ks::models::exact_log_price_moments(spec, horizon);
        const std::size_t n_paths = 20000;
        const double dt = 0.01;
        const auto n_steps = static_cast<std::size_t>(horizon / dt);
        ks::RngStream rng(17, ks::streams::diagnostics);
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t i = 0; i < n_paths; ++i) {
            double y = spec.initial_state();
            for (std::size_t n = 0; n < n_steps; ++n) {
                y = ks::models::ou_step(spec, y, dt * static_cast<double>(n), dt,
                                        rng.normal(i, n, 0));
            }
            sum += y;
            sum2 += y * y;
        }
        const double mean = sum / static_cast<double>(n_paths);
        const double var = sum2 / static_cast<double>(n_paths) - mean * mean;
        const double se = std::sqrt(var / static_cast<double>(n_paths));
        record("mean_within_3se", std::abs(mean - exact.mean) < 3.0 * se, mean - exact.mean);
        record("variance_within_5pct", std::abs(var - exact.variance) < 0.05 * exact.variance,
               var / exact.variance);
    } else {
        throw ks::ValidationError("--suite must be kernel|lq|ou");
    }

    report["pass"] = pass;
    const json canonical = {{"command", "oracle"}, {"suite", suite}};
    ks::config::write_json_file(out, report, make_provenance(canonical, 0));
    std::cerr << "oracle suite '" << suite << "': " << (pass ? "pass" : "FAIL") << "\n";
    return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kinetic mean-field storage control"};
    app.require_subcommand(1);

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "fit a seasonal OU model to a series CSV");
    std::string cal_input, cal_kind, cal_out = "calibration.json";
    int cal_degree = 2, cal_day_start = 8, cal_day_end = 19;
    cal->add_option("--input", cal_input, "input CSV (t_hours,value)")->required();
    cal->add_option("--kind", cal_kind, "price|load")->required();
    cal->add_option("--out", cal_out, "output report JSON");
    cal->add_option("--degree", cal_degree, "trigonometric degree");
    cal->add_option("--day-start", cal_day_start, "day regime start hour");
    cal->add_option("--day-end", cal_day_end, "day regime end hour");

    // train
    auto* tr = app.add_subcommand("train", "train the decoupling-field network");
    std::string tr_config, tr_out = "run";
    tr->add_option("--config", tr_config, "run config JSON")->required();
    tr->add_option("--out", tr_out, "output directory");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Monte Carlo evaluation of one policy");
    std::string ev_config, ev_policy = "passive", ev_ckpt, ev_out = "eval";
    std::uint64_t ev_id = 0;
    double ev_band = 0.9;
    ev->add_option("--config", ev_config, "run config JSON")->required();
    ev->add_option("--policy", ev_policy, "neural|passive|zero");
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint for the neural policy");
    ev->add_option("--out", ev_out, "output directory");
    ev->add_option("--eval-id", ev_id, "evaluation path substream id");
    ev->add_option("--band", ev_band, "percentile band level");

    // compare
    auto* cp = app.add_subcommand("compare", "controlled vs passive benchmark, paired seeds");
    std::string cp_config, cp_ckpt, cp_out = "compare";
    std::uint64_t cp_id = 0;
    double cp_band = 0.9;
    cp->add_option("--config", cp_config, "run config JSON")->required();
    cp->add_option("--checkpoint", cp_ckpt, "trained checkpoint")->required();
    cp->add_option("--out", cp_out, "output directory");
    cp->add_option("--eval-id", cp_id, "evaluation path substream id");
    cp->add_option("--band", cp_band, "percentile band level");

    // oracle
    auto* orc = app.add_subcommand("oracle", "run an analytic oracle suite");
    std::string orc_suite, orc_out = "oracle.json";
    orc->add_option("--suite", orc_suite, "kernel|lq|ou")->required();
    orc->add_option("--out", orc_out, "output report JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cal->parsed()) {
            return cmd_calibrate(cal_input, cal_kind, cal_out, cal_degree, cal_day_start,
                                 cal_day_end);
        }
        if (tr->parsed()) return cmd_train(tr_config, tr_out);
        if (ev->parsed()) return cmd_evaluate(ev_config, ev_policy, ev_ckpt, ev_out, ev_id, ev_band);
        if (cp->parsed()) return cmd_compare(cp_config, cp_ckpt, cp_out, cp_id, cp_band);
        if (orc->parsed()) return cmd_oracle(orc_suite, orc_out);
    } catch (const ks::Error& e) {
        const json err = {{"error",
                           {{"kind", e.kind() == ks::Error::Kind::validation ? "validation"
                                                                             : "runtime"},
                            {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        const json err = {{"error", {{"kind", "runtime"}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
