#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "comid/detector.hpp"
#include "comid/trace.hpp"

namespace comid::sim {

enum class FloorType { wood, brick, slippery };
enum class ObstacleHeight { low, high };
enum class FailureKind { fall, crash, trapped };

const char* to_string(FloorType f) noexcept;
const char* to_string(ObstacleHeight h) noexcept;
const char* to_string(FailureKind k) noexcept;

/// Cells [begin, end) share one floor type.
struct Zone {
    std::size_t begin = 0;
    std::size_t end = 0;
    FloorType floor = FloorType::wood;
};

struct Obstacle {
    std::size_t cell = 0;
    ObstacleHeight height = ObstacleHeight::high;
};

/// Additive noise per sensor. A range bound of 0 means a noiseless sensor.
struct NoiseModel {
    UncertaintySpec pressure = noiseless();
    UncertaintySpec distance = noiseless();
    UncertaintySpec imu = noiseless();
    UncertaintySpec odometry = noiseless();

    static UncertaintySpec noiseless() {
        UncertaintySpec s;
        s.range_bound = 0.0;
        return s;
    }

    /// Multiplies every range bound (and sigma) by `factor`.
    NoiseModel scaled(double factor) const;
};

struct ScenarioConfig {
    std::string name = "scenario";
    std::size_t length = 40;
    std::vector<Zone> zones;
    std::vector<Obstacle> obstacles;
    NoiseModel noise;
    std::size_t steps_max = 150;
    std::uint64_t rng_seed = 1;

    /// Per-run wetness of slippery floors, drawn uniformly from this range.
    double wetness_min = 0.0;
    double wetness_max = 0.0;
    double tilt_limit = 15.0;
    std::size_t remedy_delay = 2;

    /// Throws InvalidScenario.
    void validate() const;
    FloorType floor_at(std::size_t cell) const;
};

nlohmann::json to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const nlohmann::json& j);
/// A file holds either one scenario object or an array of them.
std::vector<ScenarioConfig> load_scenarios(const std::filesystem::path& path);

/// Environmental attributes sensed at the start of every iteration.
AttributeSchema robot_schema();

/// Online observer of completed iterations. Returning true requests the
/// remedy (halt, then re-plan with a cautious gait).
class RunMonitor {
public:
    virtual ~RunMonitor() = default;
    virtual bool observe(const Segment& segment) = 0;
    virtual void on_remedy() {}
};

/// Adapts a Detector; windows restart after each remedy.
class DetectorMonitor final : public RunMonitor {
public:
    DetectorMonitor(const Model& model, const DetectorConfig& cfg) : detector_(model, cfg) {}

    bool observe(const Segment& segment) override;
    void on_remedy() override { detector_.reset(); }

private:
    Detector detector_;
};

struct RobotState {
    double position = 0;  // cells
    double tilt = 0;      // degrees
    double arm_angle = 0; // degrees, [0, 90]
    bool fallen = false;
    std::size_t trapped_counter = 0;
};

struct RunResult {
    Trace trace;
    Label label = Label::safe;
    std::optional<FailureKind> failure_kind;
    std::size_t steps_used = 0;
    std::size_t remedies = 0;
    double wetness = 0;
};

/// One deterministic run. `monitor` may be null.
RunResult run_scenario(const ScenarioConfig& cfg, RunMonitor* monitor = nullptr);

/// Seed of run `i` of a scenario.
std::uint64_t run_seed(const ScenarioConfig& cfg, std::size_t run);

struct CorpusEntry {
    std::string scenario;
    std::uint64_t seed = 0;
    Label label = Label::safe;
    std::string trace_id;
};

struct Corpus {
    std::vector<Trace> traces;
    std::vector<CorpusEntry> manifest;
};

Corpus generate_corpus(const std::vector<ScenarioConfig>& scenarios, std::size_t runs_per_scenario);

/// Writes one `<scenario>.jsonl` per scenario plus `manifest.csv`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// The six hazardous evaluation scenarios.
std::vector<ScenarioConfig> builtin_scenarios();
/// All-wood, noiseless, obstacle-free.
ScenarioConfig easy_scenario();

}  // namespace comid::sim
