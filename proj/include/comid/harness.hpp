#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "comid/pipeline.hpp"
#include "comid/simulator.hpp"

namespace comid {

enum class Ablation { full, context_only, multi_only, baseline };

inline constexpr std::array<Ablation, 4> kAllAblations{Ablation::full, Ablation::context_only,
                                                        Ablation::multi_only, Ablation::baseline};

const char* to_string(Ablation a) noexcept;
/// Throws UnknownAblation.
Ablation ablation_from_string(const std::string& s);

struct EvalConfig {
    std::size_t folds = 10;
    Ablation ablation = Ablation::full;
    PipelineConfig pipeline;
    std::uint64_t rng_seed = 1;

    void validate() const;
};

/// Pipeline settings for the configured ablation.
PipelineConfig apply_ablation(const EvalConfig& cfg);

/// Shuffles 0..n-1 with `seed` and deals the indices round-robin into
/// `folds` disjoint parts.
std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed);

struct EvalRow {
    std::string scenario;
    Ablation ablation = Ablation::full;
    double tp = 0;
    double fp = 0;
    std::size_t safe = 0;
    std::size_t unsafe = 0;
    double invariants = 0;  // mean over folds
    double groups = 0;      // mean over folds
    double train_ms = 0;    // wall clock, informational
    double check_ms = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
};

/// Returns true when a trace is classified failing.
using TraceClassifier = std::function<bool(const Trace&, const Model&, const DetectorConfig&)>;

/// Trains on safe folds, tests on the held-out safe fold and all unsafe
/// traces. Throws TooFewTraces.
EvalRow cross_validate(const AttributeSchema& schema, const std::vector<Trace>& traces, const EvalConfig& cfg,
                       const std::string& scenario = "all");
EvalRow cross_validate(const AttributeSchema& schema, const std::vector<Trace>& traces, const EvalConfig& cfg,
                       const std::string& scenario, const TraceClassifier& classify);

/// Scenario name of a trace id `<scenario>-NNNN`.
std::string scenario_of(const std::string& trace_id);
std::map<std::string, std::vector<Trace>> split_by_scenario(const std::vector<Trace>& traces);

/// One row per scenario x ablation.
EvalReport evaluate(const AttributeSchema& schema, const std::vector<Trace>& traces, const EvalConfig& base,
                    const std::vector<Ablation>& ablations);

struct ArmStats {
    std::size_t runs = 0;
    std::size_t successes = 0;
    double success_rate = 0;
    /// Mean steps over successful runs; 0 when there are none.
    double mean_steps = 0;
    std::size_t remedies = 0;
};

struct SuccessRow {
    std::string scenario;
    ArmStats unmonitored;
    ArmStats monitored;
};

struct SuccessReport {
    std::vector<SuccessRow> rows;
};

using MonitorFactory = std::function<std::unique_ptr<sim::RunMonitor>()>;

/// Runs seeds first_run .. first_run+runs-1 with and without a monitor.
SuccessRow success_rate_experiment(const sim::ScenarioConfig& scenario, std::size_t runs, std::size_t first_run,
                                   const MonitorFactory& monitor);

/// Monitors with a detector over `model`.
SuccessRow success_rate_experiment(const sim::ScenarioConfig& scenario, std::size_t runs, std::size_t first_run,
                                   const Model& model, const DetectorConfig& cfg);

void write_csv(const EvalReport& report, const std::filesystem::path& path);
void write_csv(const SuccessReport& report, const std::filesystem::path& path);
nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const SuccessReport& report);
/// Writes `path` (CSV) and the JSON mirror next to it.
void write_report(const EvalReport& report, const std::filesystem::path& path);
void write_report(const SuccessReport& report, const std::filesystem::path& path);

}  // namespace comid
