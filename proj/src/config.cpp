#include "kinstor/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace kinstor::config {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) {
            throw ValidationError(where + ": unknown key '" + key + "'");
        }
    }
}

template <class T>
T require(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ValidationError(where + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError(where + ": key '" + key + "' has the wrong type");
    }
}

template <class T>
T optional_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    return j.at(key).get<T>();
}

models::SeasonalProfile profile_from_json(const json& j, const std::string& where) {
    check_keys(j, {"period_hours", "coefficients"}, where);
    models::SeasonalProfile p;
    p.period_hours = require<double>(j, "period_hours", where);
    p.coefficients = require<std::vector<double>>(j, "coefficients", where);
    return p;
}

json profile_to_json(const models::SeasonalProfile& p) {
    return {{"period_hours", p.period_hours}, {"coefficients", p.coefficients}};
}

models::RegimeSchedule schedule_from_json(const json& j, const std::string& where) {
    check_keys(j, {"day_start_hour", "day_end_hour", "day", "night"}, where);
    models::RegimeSchedule s;
    s.day_start_hour = require<int>(j, "day_start_hour", where);
    s.day_end_hour = require<int>(j, "day_end_hour", where);
    s.day_value = require<double>(j, "day", where);
    s.night_value = require<double>(j, "night", where);
    return s;
}

json schedule_to_json(const models::RegimeSchedule& s) {
    return {{"day_start_hour", s.day_start_hour},
            {"day_end_hour", s.day_end_hour},
            {"day", s.day_value},
            {"night", s.night_value}};
}

}  // namespace

models::SeasonalOuSpec spec_from_json(const json& j) {
    const std::string where = "spec";
    check_keys(j, {"space", "initial_value", "mean_profile", "weekly_profile", "kappa", "sigma"},
               where);
    models::SeasonalOuSpec spec;
    const auto space = require<std::string>(j, "space", where);
    if (space == "log") {
        spec.space = models::StateSpace::log_price;
    } else if (space == "level") {
        spec.space = models::StateSpace::level;
    } else {
        throw ValidationError("spec: space must be 'log' or 'level'");
    }
    spec.initial_value = require<double>(j, "initial_value", where);
    spec.mean_profile = profile_from_json(j.at("mean_profile"), where + ".mean_profile");
    if (j.contains("weekly_profile") && !j.at("weekly_profile").is_null()) {
        spec.weekly_profile = profile_from_json(j.at("weekly_profile"), where + ".weekly_profile");
    }
    spec.kappa = schedule_from_json(j.at("kappa"), where + ".kappa");
    spec.sigma = schedule_from_json(j.at("sigma"), where + ".sigma");
    spec.validate();
    return spec;
}

json spec_to_json(const models::SeasonalOuSpec& spec) {
    json j;
    j["space"] = spec.space == models::StateSpace::log_price ? "log" : "level";
    j["initial_value"] = spec.initial_value;
    j["mean_profile"] = profile_to_json(spec.mean_profile);
    if (spec.weekly_profile) {
        j["weekly_profile"] = profile_to_json(*spec.weekly_profile);
    } else {
        j["weekly_profile"] = nullptr;
    }
    j["kappa"] = schedule_to_json(spec.kappa);
    j["sigma"] = schedule_to_json(spec.sigma);
    return j;
}

namespace {

battery::BatteryParams battery_from_json(const json& j) {
    const std::string where = "battery";
    check_keys(j,
               {"c1", "c2", "x_max", "v_max", "v_min", "delta", "sigma_v", "sigma_v_h",
                "sigma_v_v", "sigma_v_kappa"},
               where);
    battery::BatteryParams p;
    p.c1 = optional_or(j, "c1", p.c1);
    p.c2 = optional_or(j, "c2", p.c2);
    p.x_max = optional_or(j, "x_max", p.x_max);
    p.v_max = optional_or(j, "v_max", p.v_max);
    p.v_min = optional_or(j, "v_min", p.v_min);
    p.delta = optional_or(j, "delta", p.delta);
    p.sigma_v = optional_or(j, "sigma_v", p.sigma_v);
    p.sigma_v_h = optional_or(j, "sigma_v_h", p.sigma_v_h);
    p.sigma_v_v = optional_or(j, "sigma_v_v", p.sigma_v_v);
    p.sigma_v_kappa = optional_or(j, "sigma_v_kappa", p.sigma_v_kappa);
    p.validate();
    return p;
}

json battery_to_json(const battery::BatteryParams& p) {
    return {{"c1", p.c1},
            {"c2", p.c2},
            {"x_max", p.x_max},
            {"v_max", p.v_max},
            {"v_min", p.v_min},
            {"delta", p.delta},
            {"sigma_v", p.sigma_v},
            {"sigma_v_h", p.sigma_v_h},
            {"sigma_v_v", p.sigma_v_v},
            {"sigma_v_kappa", p.sigma_v_kappa}};
}

costs::CostParams costs_from_json(const json& j) {
    check_keys(j, {"lambda_v", "lambda_a", "gamma", "omega", "c_bat", "c_con"}, "costs");
    costs::CostParams p;
    p.lambda_v = optional_or(j, "lambda_v", p.lambda_v);
    p.lambda_a = optional_or(j, "lambda_a", p.lambda_a);
    p.gamma = optional_or(j, "gamma", p.gamma);
    p.omega = optional_or(j, "omega", p.omega);
    p.c_bat = optional_or(j, "c_bat", p.c_bat);
    p.c_con = optional_or(j, "c_con", p.c_con);
    p.validate();
    return p;
}

json costs_to_json(const costs::CostParams& p) {
    return {{"lambda_v", p.lambda_v}, {"lambda_a", p.lambda_a}, {"gamma", p.gamma},
            {"omega", p.omega},       {"c_bat", p.c_bat},       {"c_con", p.c_con}};
}

solver::TrainingConfig training_from_json(const json& j, std::uint64_t master_seed) {
    const std::string where = "training";
    check_keys(j,
               {"n_steps", "n_particles", "epochs", "hidden_layers", "lr_schedule", "clip_norm",
                "momentum", "antithetic", "freeze_paths", "ramp_clip", "chunk_width",
                "n_workers"},
               where);
    solver::TrainingConfig c;
    c.n_steps = optional_or(j, "n_steps", c.n_steps);
    c.n_particles = optional_or<std::size_t>(j, "n_particles", c.n_particles);
    c.epochs = optional_or(j, "epochs", c.epochs);
    c.hidden_layers = optional_or(j, "hidden_layers", c.hidden_layers);
    if (j.contains("lr_schedule") && !j.at("lr_schedule").is_null()) {
        for (const auto& stage : j.at("lr_schedule")) {
            check_keys(stage, {"until_epoch", "learning_rate"}, where + ".lr_schedule[]");
            c.lr_schedule.push_back({require<int>(stage, "until_epoch", where),
                                     require<double>(stage, "learning_rate", where)});
        }
    }
    c.clip_norm = optional_or(j, "clip_norm", c.clip_norm);
    c.momentum = optional_or(j, "momentum", c.momentum);
    c.antithetic = optional_or(j, "antithetic", c.antithetic);
    c.freeze_paths = optional_or(j, "freeze_paths", c.freeze_paths);
    if (j.contains("ramp_clip") && !j.at("ramp_clip").is_null()) {
        c.ramp_clip = j.at("ramp_clip").get<double>();
    }
    c.chunk_width = optional_or<std::uint32_t>(j, "chunk_width", c.chunk_width);
    c.n_workers = optional_or(j, "n_workers", c.n_workers);
    c.master_seed = master_seed;
    c.validate();
    return c;
}

json training_to_json(const solver::TrainingConfig& c) {
    json stages = json::array();
    for (const auto& st : c.lr_schedule) {
        stages.push_back({{"until_epoch", st.until_epoch}, {"learning_rate", st.learning_rate}});
    }
    json j = {{"n_steps", c.n_steps},
              {"n_particles", c.n_particles},
              {"epochs", c.epochs},
              {"hidden_layers", c.hidden_layers},
              {"lr_schedule", stages},
              {"clip_norm", c.clip_norm},
              {"momentum", c.momentum},
              {"antithetic", c.antithetic},
              {"freeze_paths", c.freeze_paths},
              {"chunk_width", c.chunk_width},
              {"n_workers", c.n_workers}};
    if (c.ramp_clip) {
        j["ramp_clip"] = *c.ramp_clip;
    } else {
        j["ramp_clip"] = nullptr;
    }
    return j;
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    const std::string where = "config";
    check_keys(j,
               {"schema_version", "master_seed", "horizon_hours", "initial_soc_kwh", "policy",
                "literal_price_sigma", "price", "load", "battery", "costs", "training"},
               where);
    RunConfig cfg;
    cfg.schema_version = require<int>(j, "schema_version", where);
    if (cfg.schema_version != 1) {
        throw ValidationError("config: unsupported schema_version (expected 1)");
    }
    cfg.master_seed = require<std::uint64_t>(j, "master_seed", where);
    cfg.horizon_hours = optional_or(j, "horizon_hours", cfg.horizon_hours);
    cfg.initial_soc_kwh = optional_or(j, "initial_soc_kwh", cfg.initial_soc_kwh);
    const auto pol = optional_or<std::string>(j, "policy", "neural");
    if (pol == "neural") {
        cfg.policy = policy::PolicyKind::neural;
    } else if (pol == "passive") {
        cfg.policy = policy::PolicyKind::passive;
    } else if (pol == "zero") {
        cfg.policy = policy::PolicyKind::zero;
    } else {
        throw ValidationError("config: policy must be neural|passive|zero");
    }
    cfg.literal_price_sigma = optional_or(j, "literal_price_sigma", false);
    if (!j.contains("price") || !j.contains("load")) {
        throw ValidationError("config: price and load specs are required");
    }
    cfg.price = spec_from_json(j.at("price"));
    cfg.load = spec_from_json(j.at("load"));
    cfg.battery = j.contains("battery") ? battery_from_json(j.at("battery"))
                                        : battery::BatteryParams{};
    cfg.costs = j.contains("costs") ? costs_from_json(j.at("costs")) : costs::CostParams{};
    cfg.training = j.contains("training") ? training_from_json(j.at("training"), cfg.master_seed)
                                          : solver::TrainingConfig{};
    cfg.training.master_seed = cfg.master_seed;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open config: " + path);
    json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_run_config(j);
}

json to_json(const RunConfig& cfg) {
    json j;
    j["schema_version"] = cfg.schema_version;
    j["master_seed"] = cfg.master_seed;
    j["horizon_hours"] = cfg.horizon_hours;
    j["initial_soc_kwh"] = cfg.initial_soc_kwh;
    switch (cfg.policy) {
        case policy::PolicyKind::neural: j["policy"] = "neural"; break;
        case policy::PolicyKind::passive: j["policy"] = "passive"; break;
        case policy::PolicyKind::zero: j["policy"] = "zero"; break;
    }
    j["literal_price_sigma"] = cfg.literal_price_sigma;
    j["price"] = spec_to_json(cfg.price);
    j["load"] = spec_to_json(cfg.load);
    j["battery"] = battery_to_json(cfg.battery);
    j["costs"] = costs_to_json(cfg.costs);
    j["training"] = training_to_json(cfg.training);
    return j;
}

solver::StorageProblem RunConfig::make_problem() const {
    return solver::StorageProblem(price, load, battery, costs, horizon_hours, initial_soc_kwh,
                                  literal_price_sigma);
}

void RunConfig::validate() const {
    price.validate();
    load.validate();
    battery.validate();
    costs.validate();
    training.validate();
    if (horizon_hours <= 0.0) throw ValidationError("config: horizon_hours must be > 0");
    if (price.space != models::StateSpace::log_price) {
        throw ValidationError("config: price spec must use space 'log'");
    }
    if (initial_soc_kwh < 0.0 || initial_soc_kwh > battery.x_max) {
        throw ValidationError("config: initial_soc_kwh must lie in [0, x_max]");
    }
}

json report_to_json(const calibrate::CalibrationReport& report) {
    json j;
    j["spec"] = spec_to_json(report.spec);
    j["residual_std_day"] = report.residual_std_day;
    j["residual_std_night"] = report.residual_std_night;
    j["r_squared"] = report.r_squared;
    j["n_day"] = report.n_day;
    j["n_night"] = report.n_night;
    j["kappa_floored_day"] = report.kappa_floored_day;
    j["kappa_floored_night"] = report.kappa_floored_night;
    return j;
}

std::string config_hash(const json& canonical) {
    const std::string dump = canonical.dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string Provenance::csv_comment() const {
    return "# config_hash=" + hash + " master_seed=" + std::to_string(master_seed) + "\n";
}

void Provenance::attach(json& j) const {
    j["provenance"] = {{"config_hash", hash}, {"master_seed", master_seed}};
}

calibrate::ObservedSeries read_series_csv(const std::string& path, calibrate::SeriesKind kind) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open series CSV: " + path);
    std::string line;
    if (!std::getline(is, line)) throw TooFewSamples("series CSV is empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t_hours,value") {
        throw ValidationError("line 1: expected header 't_hours,value', got '" + line + "'");
    }

    calibrate::ObservedSeries series;
    series.kind = kind;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw ValidationError("line " + std::to_string(line_no) + ": expected 't,value'");
        }
        auto parse = [&](const std::string& field) {
            double out = 0.0;
            const auto* begin = field.data();
            const auto* end = field.data() + field.size();
            const auto [ptr, ec] = std::from_chars(begin, end, out);
            if (ec != std::errc() || ptr != end) {
                throw ValidationError("line " + std::to_string(line_no) +
                                      ": cannot parse number '" + field + "'");
            }
            return out;
        };
        const double t = parse(line.substr(0, comma));
        const double v = parse(line.substr(comma + 1));
        if (kind == calibrate::SeriesKind::price && v <= 0.0) {
            throw ValidationError("line " + std::to_string(line_no) +
                                  ": price must be positive, got " + line.substr(comma + 1));
        }
        series.timestamps.push_back(t);
        series.values.push_back(v);
    }
    series.validate();
    return series;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os.precision(17);
    os << v;
    // Trim to the shortest representation that round-trips.
    for (int prec = 1; prec < 17; ++prec) {
        std::ostringstream trial;
        trial.precision(prec);
        trial << v;
        double back = 0.0;
        std::istringstream(trial.str()) >> back;
        if (back == v) return trial.str();
    }
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw RuntimeFailure("cannot open for writing: " + path);
    os << content;
    if (!os) throw RuntimeFailure("write failed: " + path);
}

void write_json_file(const std::string& path, const json& j, const Provenance& prov) {
    json out = j;
    prov.attach(out);
    write_text_file(path, out.dump(2) + "\n");
}

void write_trace_csv(const std::string& path, const solver::TrainingTrace& trace,
                     const Provenance& prov) {
    std::ostringstream os;
    os << prov.csv_comment();
    os << "epoch,loss,loss_path,loss_terminal_value,loss_terminal_gradient,grad_norm,picard,"
          "learning_rate\n";
    for (const auto& e : trace.epochs) {
        os << e.epoch << ',' << format_double(e.loss) << ',' << format_double(e.loss_path) << ','
           << format_double(e.loss_terminal_value) << ','
           << format_double(e.loss_terminal_gradient) << ',' << format_double(e.grad_norm) << ','
           << format_double(e.picard) << ',' << format_double(e.learning_rate) << '\n';
    }
    write_text_file(path, os.str());
}

void write_cost_series_csv(const std::string& path, const evaluate::EvaluationRun& run,
                           const evaluate::SeriesStats& stats, const Provenance& prov) {
    std::ostringstream os;
    os << prov.csv_comment();
    os << "time,series,statistic,value\n";
    const char* name = run.kind == policy::PolicyKind::passive ? "benchmark" : "controlled";
    const auto& grid = run.particles.time_grid();
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const std::string t = format_double(grid[n]);
        os << t << ',' << name << ",mean," << format_double(stats.mean[n]) << '\n';
        os << t << ',' << name << ",median," << format_double(stats.median[n]) << '\n';
        os << t << ',' << name << ",p_lo," << format_double(stats.lower[n]) << '\n';
        os << t << ',' << name << ",p_hi," << format_double(stats.upper[n]) << '\n';
    }
    write_text_file(path, os.str());
}

void write_state_stats_csv(const std::string& path, const ensemble::ParticleEnsemble& particles,
                           double band_level, const Provenance& prov) {
    std::ostringstream os;
    os << prov.csv_comment();
    os << "time,variable,statistic,value\n";
    const auto& grid = particles.time_grid();
    const struct {
        const char* name;
        double battery::StateVector::* field;
    } fields[] = {{"S", &battery::StateVector::s},
                  {"V", &battery::StateVector::v},
                  {"X", &battery::StateVector::x}};
    for (const auto& f : fields) {
        const auto stats = evaluate::state_statistics(particles, f.field, band_level);
        for (std::size_t n = 0; n < grid.size(); ++n) {
            const std::string t = format_double(grid[n]);
            os << t << ',' << f.name << ",mean," << format_double(stats.mean[n]) << '\n';
            os << t << ',' << f.name << ",p_lo," << format_double(stats.lower[n]) << '\n';
            os << t << ',' << f.name << ",p_hi," << format_double(stats.upper[n]) << '\n';
            for (int k = 0; k < 3; ++k) {
                os << t << ',' << f.name << ",sample_" << (k + 1) << ','
                   << format_double(stats.samples[static_cast<std::size_t>(k)][n]) << '\n';
            }
        }
    }
    write_text_file(path, os.str());
}

void write_comparison_csv(const std::string& path, const evaluate::ComparisonReport& report,
                          const evaluate::EvaluationRun& controlled, const Provenance& prov) {
    std::ostringstream os;
    os << prov.csv_comment();
    os << "time,series,statistic,value\n";
    const std::size_t m = controlled.particles.n_particles();
    for (std::size_t n = 0; n < report.time.size(); ++n) {
        const std::string t = format_double(report.time[n]);
        auto emit = [&](const char* series, const evaluate::SeriesStats& s) {
            os << t << ',' << series << ",mean," << format_double(s.mean[n]) << '\n';
            os << t << ',' << series << ",median," << format_double(s.median[n]) << '\n';
            os << t << ',' << series << ",p_lo," << format_double(s.lower[n]) << '\n';
            os << t << ',' << series << ",p_hi," << format_double(s.upper[n]) << '\n';
        };
        emit("controlled", report.controlled);
        emit("benchmark", report.benchmark);
        for (int k = 0; k < 3; ++k) {
            const std::size_t idx = report.sample_indices[static_cast<std::size_t>(k)];
            os << t << ",controlled,sample_" << (k + 1) << ','
               << format_double(controlled.j[n * m + idx]) << '\n';
        }
    }
    write_text_file(path, os.str());
}

}  // namespace kinstor::config
