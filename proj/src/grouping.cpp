#include "comid/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "comid/error.hpp"
#include "comid/rng.hpp"

namespace comid {

EnvStats EnvStats::from_variances(std::vector<double> variances) {
    EnvStats s;
    s.active_mask.reserve(variances.size());
    for (double v : variances) {
        if (!(v >= 0.0)) throw Error("InvalidStats", "variance must be non-negative");
        s.active_mask.push_back(v > 0.0);
    }
    s.variances = std::move(variances);
    return s;
}

EnvStats EnvStats::compute(std::span<const EnvContext> contexts) {
    if (contexts.empty()) return {};
    const std::size_t d = contexts.front().arity();
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (const auto& c : contexts) {
        if (c.arity() != d) throw ArityMismatch("contexts have differing arity");
        for (std::size_t i = 0; i < d; ++i) mean[i] += c.values[i];
    }
    const auto n = static_cast<double>(contexts.size());
    for (auto& m : mean) m /= n;
    for (const auto& c : contexts) {
        for (std::size_t i = 0; i < d; ++i) {
            const double dv = c.values[i] - mean[i];
            var[i] += dv * dv;
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        var[i] /= n;
        // Round-off on constant columns leaves tiny positive residue.
        bool constant = std::all_of(contexts.begin(), contexts.end(),
                                    [&](const EnvContext& c) { return c.values[i] == contexts.front().values[i]; });
        if (constant) var[i] = 0.0;
    }
    return from_variances(std::move(var));
}

double env_distance(const EnvContext& a, const EnvContext& b, const EnvStats& stats) {
    if (a.arity() != stats.arity() || b.arity() != stats.arity()) {
        throw ArityMismatch("env_distance: context arity does not match stats");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < a.arity(); ++i) {
        if (!stats.active_mask[i]) continue;
        total += std::abs(a.values[i] - b.values[i]) / std::sqrt(stats.variances[i]);
    }
    return total;
}

std::size_t count_distinct(std::span<const EnvContext> contexts) {
    std::vector<const std::vector<double>*> v;
    v.reserve(contexts.size());
    for (const auto& c : contexts) v.push_back(&c.values);
    std::sort(v.begin(), v.end(), [](auto* x, auto* y) { return *x < *y; });
    auto last = std::unique(v.begin(), v.end(), [](auto* x, auto* y) { return *x == *y; });
    return static_cast<std::size_t>(last - v.begin());
}

namespace {

struct Nearest {
    std::size_t index;
    double distance;
};

Nearest nearest(const EnvContext& ctx, const std::vector<EnvContext>& centroids, const EnvStats& stats) {
    Nearest best{0, std::numeric_limits<double>::infinity()};
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = env_distance(ctx, centroids[c], stats);
        if (d < best.distance) best = {c, d};
    }
    return best;
}

std::vector<EnvContext> farthest_point_seeds(std::span<const EnvContext> contexts, std::size_t k, std::uint64_t seed,
                                             const EnvStats& stats) {
    Rng rng(seed);
    std::vector<EnvContext> seeds;
    seeds.push_back(contexts[rng.below(contexts.size())]);
    std::vector<double> min_dist(contexts.size());
    for (std::size_t i = 0; i < contexts.size(); ++i) min_dist[i] = env_distance(contexts[i], seeds[0], stats);
    while (seeds.size() < k) {
        const auto far = static_cast<std::size_t>(std::max_element(min_dist.begin(), min_dist.end()) - min_dist.begin());
        seeds.push_back(contexts[far]);
        for (std::size_t i = 0; i < contexts.size(); ++i) {
            min_dist[i] = std::min(min_dist[i], env_distance(contexts[i], seeds.back(), stats));
        }
    }
    return seeds;
}

struct Assignment {
    std::vector<std::size_t> labels;
    std::vector<double> distances;
    double objective = 0;
};

Assignment assign(std::span<const EnvContext> contexts, const std::vector<EnvContext>& centroids,
                  const EnvStats& stats) {
    Assignment a;
    a.labels.resize(contexts.size());
    a.distances.resize(contexts.size());
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        const auto n = nearest(contexts[i], centroids, stats);
        a.labels[i] = n.index;
        a.distances[i] = n.distance;
        a.objective += n.distance;
    }
    return a;
}

std::vector<EnvContext> update_centroids(std::span<const EnvContext> contexts, const Assignment& a,
                                         const std::vector<EnvContext>& previous) {
    const std::size_t k = previous.size();
    const std::size_t d = contexts.front().arity();
    std::vector<EnvContext> next(k, EnvContext{std::vector<double>(d, 0.0)});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        auto& c = next[a.labels[i]].values;
        for (std::size_t j = 0; j < d; ++j) c[j] += contexts[i].values[j];
        ++counts[a.labels[i]];
    }
    std::vector<bool> taken(contexts.size(), false);
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] > 0) {
            for (auto& v : next[c].values) v /= static_cast<double>(counts[c]);
            continue;
        }
        // Empty cluster: reseed with the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < contexts.size(); ++i) {
            if (!taken[i] && a.distances[i] > far_d) {
                far_d = a.distances[i];
                far = i;
            }
        }
        taken[far] = true;
        next[c] = contexts[far];
    }
    return next;
}

}  // namespace

ClusterModel cluster_env(std::span<const EnvContext> contexts, std::size_t k, std::uint64_t seed) {
    return cluster_env(contexts, k, seed, EnvStats::compute(contexts));
}

ClusterModel cluster_env(std::span<const EnvContext> contexts, std::size_t k, std::uint64_t seed,
                         const EnvStats& stats) {
    constexpr std::size_t kMaxRounds = 100;
    if (k == 0) throw KTooLarge("k must be positive");
    const std::size_t distinct = count_distinct(contexts);
    if (k > distinct) {
        throw KTooLarge("k=" + std::to_string(k) + " exceeds " + std::to_string(distinct) + " distinct contexts");
    }

    ClusterModel model;
    model.k = k;
    model.stats = stats;

    auto centroids = farthest_point_seeds(contexts, k, seed, stats);
    auto current = assign(contexts, centroids, stats);
    // The first mean update is always taken; afterwards a round is accepted
    // only if it does not raise the total distance.
    centroids = update_centroids(contexts, current, centroids);
    current = assign(contexts, centroids, stats);
    model.objective_history.push_back(current.objective);
    model.rounds = 1;

    for (std::size_t round = 1; round < kMaxRounds; ++round) {
        auto next_centroids = update_centroids(contexts, current, centroids);
        auto next = assign(contexts, next_centroids, stats);
        if (next.objective > current.objective) break;
        const bool converged = next.labels == current.labels && next_centroids == centroids;
        centroids = std::move(next_centroids);
        current = std::move(next);
        model.objective_history.push_back(current.objective);
        ++model.rounds;
        if (converged) break;
    }

    model.centroids = std::move(centroids);
    model.assignments = std::move(current.labels);
    return model;
}

std::size_t classify_env(const EnvContext& ctx, const ClusterModel& model) {
    if (ctx.arity() != model.stats.arity()) throw ArityMismatch("classify_env: context arity does not match model");
    return nearest(ctx, model.centroids, model.stats).index;
}

double deviation(const EnvContext& ctx, std::span<const EnvContext> members, const EnvStats& stats) {
    if (members.empty()) throw EmptyCluster("deviation against an empty cluster");
    double total = 0.0;
    for (const auto& m : members) total += env_distance(ctx, m, stats);
    return total / static_cast<double>(members.size());
}

std::vector<double> GroupingConfig::default_candidates() {
    std::vector<double> out;
    for (int i = 1; i <= 30; ++i) out.push_back(i / 100.0);
    return out;
}

void GroupingConfig::validate() const {
    if (!(k_percent > 0.0 && k_percent <= 1.0)) throw Error("InvalidConfig", "k_percent must be in (0, 1]");
    if (!(dos_threshold > 0.0 && dos_threshold <= 1.0)) throw Error("InvalidConfig", "dos_threshold must be in (0, 1]");
    if (folds < 2) throw Error("InvalidConfig", "folds must be at least 2");
    if (candidate_percents.empty()) throw Error("InvalidConfig", "no candidate percents");
}

std::size_t k_for_percent(double percent, std::size_t population, std::size_t distinct) {
    const auto k = static_cast<std::size_t>(std::max(1.0, std::round(percent * static_cast<double>(population))));
    return std::min(k, std::max<std::size_t>(distinct, 1));
}

std::vector<CandidateScore> score_k_candidates(std::span<const EnvContext> contexts, const GroupingConfig& cfg) {
    cfg.validate();
    const std::size_t n = contexts.size();
    if (n < cfg.folds) {
        throw TooFewContexts(std::to_string(n) + " contexts for " + std::to_string(cfg.folds) + " folds");
    }
    const EnvStats stats = EnvStats::compute(contexts);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.rng_seed);
    rng.shuffle(order.begin(), order.end());

    struct Fold {
        std::vector<EnvContext> train;
        std::vector<EnvContext> test;
        std::size_t distinct = 0;
    };
    std::vector<Fold> folds(cfg.folds);
    for (std::size_t f = 0; f < cfg.folds; ++f) {
        const std::size_t lo = f * n / cfg.folds, hi = (f + 1) * n / cfg.folds;
        for (std::size_t pos = 0; pos < n; ++pos) {
            auto& dst = (pos >= lo && pos < hi) ? folds[f].test : folds[f].train;
            dst.push_back(contexts[order[pos]]);
        }
        folds[f].distinct = count_distinct(folds[f].train);
    }

    const std::size_t distinct_all = count_distinct(contexts);
    std::vector<CandidateScore> scores;
    for (double p : cfg.candidate_percents) {
        double total = 0.0;
        std::size_t tested = 0;
        for (std::size_t f = 0; f < cfg.folds; ++f) {
            const auto& fold = folds[f];
            const std::size_t k = k_for_percent(p, fold.train.size(), fold.distinct);
            const auto model = cluster_env(fold.train, k, combine_seed(cfg.rng_seed, f), stats);
            std::vector<std::vector<EnvContext>> members(model.k);
            for (std::size_t i = 0; i < fold.train.size(); ++i) members[model.assignments[i]].push_back(fold.train[i]);
            for (const auto& t : fold.test) {
                const auto c = classify_env(t, model);
                total += deviation(t, members[c], stats);
                ++tested;
            }
        }
        scores.push_back({p, k_for_percent(p, n, distinct_all), total / static_cast<double>(tested)});
    }
    return scores;
}

std::size_t grid_search_k(std::span<const EnvContext> contexts, const GroupingConfig& cfg) {
    const auto scores = score_k_candidates(contexts, cfg);
    const CandidateScore* best = &scores.front();
    for (const auto& s : scores) {
        if (s.average_deviation < best->average_deviation ||
            (s.average_deviation == best->average_deviation && s.k_full < best->k_full)) {
            best = &s;
        }
    }
    return best->k_full;
}

double dos(const ProgContext& a, const ProgContext& b) {
    if (a.empty() || b.empty()) throw EmptyContext("DoS of an empty program context");
    const auto& x = a.ids();
    const auto& y = b.ids();
    std::size_t common = 0, i = 0, j = 0;
    while (i < x.size() && j < y.size()) {
        if (x[i] < y[j]) {
            ++i;
        } else if (y[j] < x[i]) {
            ++j;
        } else {
            ++common;
            ++i;
            ++j;
        }
    }
    const std::size_t uni = x.size() + y.size() - common;
    return static_cast<double>(common) / static_cast<double>(uni);
}

std::vector<TracedSegment> collect_segments(const std::vector<Trace>& traces) {
    std::vector<TracedSegment> out;
    for (const auto& t : traces) {
        for (const auto& s : t.segments) out.push_back({{t.trace_id, s.index}, &s});
    }
    return out;
}

std::vector<GroupModel> refine_clusters(const ClusterModel& model, std::span<const TracedSegment> segments,
                                        const GroupingConfig& cfg) {
    if (segments.size() != model.assignments.size()) {
        throw Error("InvalidInput", "refine_clusters: segment count does not match cluster assignments");
    }
    std::vector<std::vector<std::size_t>> by_cluster(model.k);
    for (std::size_t i = 0; i < segments.size(); ++i) by_cluster[model.assignments[i]].push_back(i);

    std::vector<GroupModel> groups;
    for (std::size_t c = 0; c < model.k; ++c) {
        auto pool = by_cluster[c];
        std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) { return segments[a].ref < segments[b].ref; });
        std::vector<bool> taken(pool.size(), false);
        for (std::size_t s = 0; s < pool.size(); ++s) {
            if (taken[s]) continue;
            const auto& seed = *segments[pool[s]].segment;
            GroupModel g;
            g.group_id = groups.size();
            g.cluster = c;
            g.centroid = model.centroids[c];
            g.representative_prog = seed.prog;
            for (std::size_t m = s; m < pool.size(); ++m) {
                if (taken[m]) continue;
                if (m == s || dos(seed.prog, segments[pool[m]].segment->prog) >= cfg.dos_threshold) {
                    taken[m] = true;
                    g.members.push_back(segments[pool[m]].ref);
                }
            }
            groups.push_back(std::move(g));
        }
    }
    return groups;
}

GroupingResult group_segments(std::span<const TracedSegment> segments, const GroupingConfig& cfg) {
    cfg.validate();
    std::vector<EnvContext> contexts;
    contexts.reserve(segments.size());
    for (const auto& s : segments) contexts.push_back(s.segment->env);

    std::size_t k = 0;
    if (cfg.k_mode == KMode::grid_search) {
        k = grid_search_k(contexts, cfg);
    } else {
        k = k_for_percent(cfg.k_percent, contexts.size(), count_distinct(contexts));
    }
    GroupingResult r;
    r.clusters = cluster_env(contexts, k, cfg.rng_seed);
    r.groups = refine_clusters(r.clusters, segments, cfg);
    return r;
}

}  // namespace comid
