#pragma once

#include <string>

#include <json.hpp>

#include "kinstor/calibrate.hpp"
#include "kinstor/evaluate.hpp"
#include "kinstor/solver.hpp"

namespace kinstor::config {

using json = nlohmann::ordered_json;

/// Full run description (schema_version 1). Parsing is strict: unknown keys
/// are rejected at every level.
struct RunConfig {
    int schema_version = 1;
    std::uint64_t master_seed = 42;
    double horizon_hours = 24.0;
    double initial_soc_kwh = 5.0;
    policy::PolicyKind policy = policy::PolicyKind::neural;
    bool literal_price_sigma = false;
    models::SeasonalOuSpec price;
    models::SeasonalOuSpec load;
    battery::BatteryParams battery;
    costs::CostParams costs;
    solver::TrainingConfig training;

    solver::StorageProblem make_problem() const;
    void validate() const;
};

RunConfig parse_run_config(const json& j);
RunConfig load_run_config(const std::string& path);
json to_json(const RunConfig& cfg);

json spec_to_json(const models::SeasonalOuSpec& spec);
models::SeasonalOuSpec spec_from_json(const json& j);

json report_to_json(const calibrate::CalibrationReport& report);

/// FNV-1a 64-bit hash of the canonical (re-serialized) config, hex encoded.
/// Stamped into every output file.
std::string config_hash(const json& canonical);

struct Provenance {
    std::string hash;
    std::uint64_t master_seed = 0;

    std::string csv_comment() const;
    void attach(json& j) const;
};

/// Input CSV schema: header `t_hours,value`, uniform monotone hours, '.'
/// decimal separator, UTF-8/LF. Errors carry 1-based line numbers.
calibrate::ObservedSeries read_series_csv(const std::string& path, calibrate::SeriesKind kind);

// Output writers. All are deterministic byte-for-byte given identical inputs.
void write_text_file(const std::string& path, const std::string& content);
void write_json_file(const std::string& path, const json& j, const Provenance& prov);
void write_trace_csv(const std::string& path, const solver::TrainingTrace& trace,
                     const Provenance& prov);
void write_cost_series_csv(const std::string& path, const evaluate::EvaluationRun& run,
                           const evaluate::SeriesStats& stats, const Provenance& prov);
void write_state_stats_csv(const std::string& path, const ensemble::ParticleEnsemble& particles,
                           double band_level, const Provenance& prov);
void write_comparison_csv(const std::string& path, const evaluate::ComparisonReport& report,
                          const evaluate::EvaluationRun& controlled, const Provenance& prov);

/// Deterministic shortest-round-trip decimal formatting shared by all CSV
/// writers.
std::string format_double(double v);

}  // namespace kinstor::config
