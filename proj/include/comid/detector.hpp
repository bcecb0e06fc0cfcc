#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "comid/model.hpp"

namespace comid {

enum class Distribution { uniform, normal, custom };

/// Error model of the sensing uncertainty: error range [-U, U] and shape.
struct UncertaintySpec {
    Distribution dist = Distribution::uniform;
    double range_bound = 1.0;  // U
    double sigma = 1.0;        // normal only
    double confidence = 0.9;   // C
    std::function<double(double)> cdf;  // custom only

    void validate() const;
    /// CDF of the error distribution.
    double cdf_at(double x) const;
};

struct DeltaSolution {
    double delta = 1.0;
    /// No delta <= 1 reaches the requested confidence.
    bool saturated = false;
};

/// Solves F(U*delta) - F(-U*delta) = C on [0, 1] by bisection
/// (closed form for uniform). Throws InvalidSpec.
DeltaSolution solve_delta(const UncertaintySpec& spec);

enum class Aggregation { any_family, fraction_of_families };

struct DetectorConfig {
    std::size_t window = 5;
    double delta = 0.9;
    double dos_threshold = 0.8;
    Aggregation aggregation = Aggregation::any_family;
    /// fraction_of_families: failing when at least this share of the
    /// evaluated families exceed delta. Experimental.
    double family_fraction = 0.5;
    /// Only a window holding w values may raise a failing verdict.
    bool require_full_window = true;

    void validate() const;
};

struct MemberResult {
    double p;
    bool violated;
};

/// Weighted ensemble score in [-1, 1]: violations weigh p_i / sum(p),
/// satisfactions -(1 - p_i) / sum(1 - p). Throws EmptyResults.
double est_iteration(std::span<const MemberResult> results);

/// Mean of the stored values. Throws EmptyHistory.
double est_window(std::span<const double> history);

/// Families whose context equals the segment's: program-context DoS to the
/// group representative >= dos_threshold and the same environmental cluster.
std::vector<std::size_t> match_families(const Segment& segment, const Model& model, double dos_threshold);

enum class Classification { passing, failing, unknown_context };
const char* to_string(Classification c) noexcept;

struct FamilyScore {
    std::size_t family_id = 0;
    double est = 0;
    double windowed_est = 0;
    std::size_t window_size = 0;
};

struct Verdict {
    std::size_t iteration = 0;
    std::vector<std::size_t> matched;
    std::vector<FamilyScore> scores;  // families with at least one applicable member
    Classification classification = Classification::passing;
    std::size_t checks = 0;  // invariant evaluations performed
};

/// Per-stream detection state over a model. One writer per instance.
class Detector {
public:
    /// Throws ModelMissing when the model has no families.
    Detector(const Model& model, DetectorConfig cfg);

    Verdict step(const Segment& segment);
    /// Clears all windows and the iteration counter.
    void reset();

    const DetectorConfig& config() const noexcept { return cfg_; }
    std::size_t iterations() const noexcept { return iteration_; }

private:
    const Model* model_;
    DetectorConfig cfg_;
    std::vector<std::vector<std::size_t>> groups_by_cluster_;
    std::vector<std::vector<std::size_t>> families_by_group_;
    std::vector<std::deque<double>> windows_;  // per family
    std::size_t iteration_ = 0;

    std::vector<std::size_t> match(const Segment& segment) const;
};

struct TraceVerdict {
    Classification classification = Classification::passing;  // passing | failing
    std::size_t unknown_context = 0;
    std::optional<std::size_t> first_failing;
    std::size_t checks = 0;
};

/// Replays a trace through a fresh detector; failing iff any iteration fails.
TraceVerdict classify_trace(const Trace& trace, const Model& model, const DetectorConfig& cfg);

}  // namespace comid
