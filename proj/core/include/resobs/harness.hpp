#pragma once

#include "resobs/attack.hpp"
#include "resobs/l1_solver.hpp"
#include "resobs/trace.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace resobs::harness {

inline constexpr const char* kVersion = "1.0.0";

enum class ObserverKind { Luenberger, L1, MultiModel };

ObserverKind observer_kind_from_string(const std::string& name);
const char* to_string(ObserverKind kind);

struct ObserverSpec {
    ObserverKind kind = ObserverKind::MultiModel;
    std::string name;
    double pole_scale = 0.5;  ///< Luenberger only
    SolverSettings solver;    ///< horizon observers only
};

struct PriorSpec {
    double sigma_fraction = 0.05;  ///< sigma_i = sigma_fraction * max(|y_nominal_i|, range_floor)
    double range_floor = 0.1;
    double offset_fraction = 0.5;
};

struct AttackSpec {
    bool enabled = true;
    std::string channels = "p_net";  ///< candidate pool: p_net | all
    double fraction = 0.3;           ///< ceil(fraction * m) channels drawn from the pool
    std::vector<int> support;        ///< explicit support; overrides fraction when non-empty
    int onset = 200;
    attack::MagnitudeLaw law = attack::MagnitudeLaw::Ramp;
    double magnitude_fraction = 0.2;  ///< of the nominal channel value
    double magnitude_floor = 0.1;
    int ramp_samples = 10;
    double random_low = 0.5;
    bool stealth = true;
    double stealth_threshold = 0.01;
    double leak_weight = 100.0;
};

struct ScenarioConfig {
    std::string name = "scenario";
    std::string grid_case;  ///< resolved path to the case file
    double dt = 0.01;
    int horizon = 10;
    double tau = 0.99;
    int run_length = 1000;
    std::uint64_t seed = 1;
    double noise_std = 0.0;
    double demand_fluctuation = 0.01;
    double bdd_threshold = 0.05;
    double kp = 2.0;
    double ki = 10.0;
    double integral_limit = 1e3;
    PriorSpec prior;
    AttackSpec attack;
    std::vector<ObserverSpec> observers;
    bool post_onset_only = false;
    std::string output_dir;

    /// Field-level checks; `states` is n of the model when known (0 skips T >= n).
    void validate(int states = 0) const;
};

/// Parses a scenario document. Relative grid case paths resolve against `base_dir`.
ScenarioConfig scenario_from_json(const std::string& text, const std::string& base_dir = ".");

/// Reads a scenario file and applies the RESOBS_SEED override.
ScenarioConfig load_scenario_config(const std::string& path);

/// Replaces the seed with RESOBS_SEED when set. Throws Config on a malformed value.
void apply_env_overrides(ScenarioConfig& cfg);

std::string scenario_to_json(const ScenarioConfig& cfg);

struct MetricEntry {
    double rms = 0.0;
    double max_abs = 0.0;
    double mean = 0.0;
    int count = 0;    ///< samples with an estimate
    int missing = 0;  ///< samples where the observer reported nothing
};

struct MetricsTable {
    std::vector<std::string> rows;     ///< state names
    std::vector<std::string> columns;  ///< observer names
    std::vector<std::vector<MetricEntry>> entries;  ///< [row][column]
    int begin = 0;
    int end = 0;

    [[nodiscard]] const MetricEntry& at(std::size_t row, std::size_t col) const { return entries.at(row).at(col); }
    [[nodiscard]] std::size_t column_index(const std::string& name) const;
};

/// RMS, max-abs and mean error over samples [begin, end) for the listed state
/// indices (all rotor angles when empty).
MetricsTable compute_metrics(const EstimateTrace& trace, int begin, int end, std::vector<int> states = {});

struct ScenarioResult {
    EstimateTrace trace;
    MetricsTable metrics;
    std::optional<MetricsTable> pre_attack;
    std::vector<int> attack_support;
    double max_prior_mahalanobis = 0.0;  ///< over all samples, true measurement
    double prior_radius = 0.0;
    double runtime_seconds = 0.0;
};

/// Builds the model, prior and observers, runs the closed loop and computes
/// metrics. Writes trace.csv, metrics.csv and manifest.json when
/// cfg.output_dir is set.
ScenarioResult run_scenario(const ScenarioConfig& cfg);

void write_trace_csv(const EstimateTrace& trace, std::ostream& out);
void write_metrics_csv(const MetricsTable& table, std::ostream& out);
void write_outputs(const ScenarioResult& result, const ScenarioConfig& cfg, const std::string& dir);

}  // namespace resobs::harness
