#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "comid/trace.hpp"

namespace comid {

/// Per-attribute population variance over a context population. Attributes
/// with zero variance are inactive and drop out of the distance.
struct EnvStats {
    std::vector<double> variances;
    std::vector<bool> active_mask;

    static EnvStats from_variances(std::vector<double> variances);
    static EnvStats compute(std::span<const EnvContext> contexts);

    std::size_t arity() const noexcept { return variances.size(); }
};

/// Sum over active attributes of |a_i - b_i| / s_i.
double env_distance(const EnvContext& a, const EnvContext& b, const EnvStats& stats);

struct ClusterModel {
    std::size_t k = 0;
    std::vector<EnvContext> centroids;
    EnvStats stats;
    std::vector<std::size_t> assignments;  // per input context
    /// Total distance of every context to its centroid, one entry per
    /// accepted k-means round.
    std::vector<double> objective_history;
    std::size_t rounds = 0;
};

/// Number of distinct context vectors.
std::size_t count_distinct(std::span<const EnvContext> contexts);

/// k-means under env_distance with farthest-point seeding from a
/// seed-chosen first point. Stats are computed from `contexts`.
/// Throws KTooLarge when k exceeds the number of distinct contexts.
ClusterModel cluster_env(std::span<const EnvContext> contexts, std::size_t k, std::uint64_t seed);
ClusterModel cluster_env(std::span<const EnvContext> contexts, std::size_t k, std::uint64_t seed,
                         const EnvStats& stats);

/// Nearest centroid, lower index on ties.
std::size_t classify_env(const EnvContext& ctx, const ClusterModel& model);

/// Mean distance from ctx to each member. Throws EmptyCluster.
double deviation(const EnvContext& ctx, std::span<const EnvContext> members, const EnvStats& stats);

enum class KMode { fixed_percent, grid_search };

struct GroupingConfig {
    KMode k_mode = KMode::fixed_percent;
    double k_percent = 0.20;
    double dos_threshold = 0.8;
    std::vector<double> candidate_percents = default_candidates();
    std::size_t folds = 10;
    std::uint64_t rng_seed = 1;

    static std::vector<double> default_candidates();
    void validate() const;
};

/// Cross-validated score of one candidate percent.
struct CandidateScore {
    double percent = 0;
    std::size_t k_full = 0;         // percent applied to the full population
    double average_deviation = 0;   // over every held-out context
};

/// k for a percent of a population, clamped to [1, distinct].
std::size_t k_for_percent(double percent, std::size_t population, std::size_t distinct);

/// Scores every candidate percent by cfg.folds-fold cross-validation.
/// Throws TooFewContexts when |contexts| < folds.
std::vector<CandidateScore> score_k_candidates(std::span<const EnvContext> contexts, const GroupingConfig& cfg);

/// Candidate with minimal average deviation (ties toward smaller k).
std::size_t grid_search_k(std::span<const EnvContext> contexts, const GroupingConfig& cfg);

/// Jaccard index of two statement sets. Throws EmptyContext.
double dos(const ProgContext& a, const ProgContext& b);

/// A segment with its corpus identity; the pointee must outlive its use.
struct TracedSegment {
    SegmentRef ref;
    const Segment* segment = nullptr;
};

/// Collects every segment of every trace, in trace order.
std::vector<TracedSegment> collect_segments(const std::vector<Trace>& traces);

struct GroupModel {
    std::size_t group_id = 0;
    std::size_t cluster = 0;
    EnvContext centroid;
    ProgContext representative_prog;
    std::vector<SegmentRef> members;
};

/// Splits each cluster into seed-anchored groups: the lowest-ref unassigned
/// segment seeds a group that takes every remaining cluster member with
/// DoS >= threshold to the seed. `segments` must be in assignment order.
std::vector<GroupModel> refine_clusters(const ClusterModel& model, std::span<const TracedSegment> segments,
                                        const GroupingConfig& cfg);

struct GroupingResult {
    ClusterModel clusters;
    std::vector<GroupModel> groups;
};

/// Environmental clustering (k from cfg.k_mode) followed by refinement.
GroupingResult group_segments(std::span<const TracedSegment> segments, const GroupingConfig& cfg);

}  // namespace comid
