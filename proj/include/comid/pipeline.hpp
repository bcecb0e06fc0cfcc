#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "comid/detector.hpp"
#include "comid/grouping.hpp"
#include "comid/invariants.hpp"
#include "comid/model.hpp"

namespace comid {

/// Training and detection settings that travel with a model.
struct PipelineConfig {
    ContextMode mode = ContextMode::clustered;
    GroupingConfig grouping;
    InferenceConfig inference;
    DetectorConfig detector;
    /// When present, detector.delta is solved from it.
    std::optional<UncertaintySpec> uncertainty;

    /// Detector settings with delta resolved.
    DetectorConfig resolved_detector() const;
};

/// Learns a model from the non-unsafe traces.
Model train_model(const AttributeSchema& schema, const std::vector<Trace>& traces, const PipelineConfig& cfg);

inline constexpr const char* kModelFormat = "comid-model/1";

nlohmann::json to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);

struct ModelFile {
    Model model;
    PipelineConfig config;
};

void save_model(const Model& model, const PipelineConfig& cfg, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

nlohmann::json to_json(const Verdict& v, const std::string& trace_id);

}  // namespace comid
