#include "comid/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "comid/error.hpp"

namespace comid {

std::size_t Model::invariant_count() const {
    std::size_t n = 0;
    for (const auto& f : families) n += f.members.size();
    return n;
}

void UncertaintySpec::validate() const {
    if (!(range_bound > 0.0) || !std::isfinite(range_bound)) throw InvalidSpec("range bound U must be positive");
    if (!(confidence > 0.0 && confidence <= 1.0)) throw InvalidSpec("confidence must be in (0, 1]");
    if (dist == Distribution::normal && !(sigma > 0.0 && std::isfinite(sigma))) {
        throw InvalidSpec("sigma must be positive");
    }
    if (dist == Distribution::custom && !cdf) throw InvalidSpec("custom distribution needs a CDF");
}

double UncertaintySpec::cdf_at(double x) const {
    switch (dist) {
        case Distribution::uniform:
            return std::clamp((x + range_bound) / (2.0 * range_bound), 0.0, 1.0);
        case Distribution::normal:
            return 0.5 * std::erfc(-x / (sigma * std::sqrt(2.0)));
        case Distribution::custom:
            return cdf(x);
    }
    return 0.0;
}

DeltaSolution solve_delta(const UncertaintySpec& spec) {
    spec.validate();
    if (spec.dist == Distribution::uniform) return {spec.confidence, false};

    auto mass = [&](double delta) {
        const double r = spec.range_bound * delta;
        return spec.cdf_at(r) - spec.cdf_at(-r);
    };
    if (mass(1.0) < spec.confidence) return {1.0, true};

    double lo = 0.0, hi = 1.0;
    while (hi - lo > 1e-9) {
        const double mid = 0.5 * (lo + hi);
        if (mass(mid) < spec.confidence) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return {0.5 * (lo + hi), false};
}

void DetectorConfig::validate() const {
    if (window == 0) throw Error("InvalidConfig", "window must be positive");
    if (!(delta >= 0.0 && delta <= 1.0)) throw Error("InvalidConfig", "delta must be in [0, 1]");
    if (!(dos_threshold > 0.0 && dos_threshold <= 1.0)) throw Error("InvalidConfig", "dos_threshold must be in (0, 1]");
    if (!(family_fraction > 0.0 && family_fraction <= 1.0)) throw Error("InvalidConfig", "family_fraction must be in (0, 1]");
}

double est_iteration(std::span<const MemberResult> results) {
    if (results.empty()) throw EmptyResults("no applicable invariant results");
    double sum_p = 0.0, sum_q = 0.0;
    for (const auto& r : results) {
        sum_p += r.p;
        sum_q += 1.0 - r.p;
    }
    double est = 0.0;
    for (const auto& r : results) {
        if (r.violated) {
            est += r.p / sum_p;
        } else if (sum_q > 0.0) {
            est -= (1.0 - r.p) / sum_q;
        }
    }
    return std::clamp(est, -1.0, 1.0);
}

double est_window(std::span<const double> history) {
    if (history.empty()) throw EmptyHistory("empty EST history");
    return std::accumulate(history.begin(), history.end(), 0.0) / static_cast<double>(history.size());
}

std::vector<std::size_t> match_families(const Segment& segment, const Model& model, double dos_threshold) {
    std::vector<std::size_t> out;
    if (model.mode == ContextMode::global) {
        for (const auto& f : model.families) out.push_back(f.family_id);
        return out;
    }
    if (segment.prog.empty()) return out;
    const auto cluster = classify_env(segment.env, model.clusters);
    std::vector<bool> group_ok(model.groups.size(), false);
    for (const auto& g : model.groups) {
        group_ok[g.group_id] = g.cluster == cluster && dos(segment.prog, g.representative_prog) >= dos_threshold;
    }
    for (const auto& f : model.families) {
        if (group_ok[f.group_id]) out.push_back(f.family_id);
    }
    return out;
}

const char* to_string(Classification c) noexcept {
    switch (c) {
        case Classification::passing: return "passing";
        case Classification::failing: return "failing";
        case Classification::unknown_context: return "unknown-context";
    }
    return "?";
}

Detector::Detector(const Model& model, DetectorConfig cfg) : model_(&model), cfg_(cfg) {
    cfg_.validate();
    if (model.families.empty()) throw ModelMissing("model has no invariant families");
    groups_by_cluster_.resize(model.clusters.k);
    families_by_group_.resize(model.groups.size());
    for (const auto& g : model.groups) {
        if (g.cluster < groups_by_cluster_.size()) groups_by_cluster_[g.cluster].push_back(g.group_id);
    }
    for (const auto& f : model.families) families_by_group_.at(f.group_id).push_back(f.family_id);
    windows_.resize(model.families.size());
}

void Detector::reset() {
    for (auto& w : windows_) w.clear();
    iteration_ = 0;
}

std::vector<std::size_t> Detector::match(const Segment& segment) const {
    const auto& model = *model_;
    if (model.mode == ContextMode::global) {
        std::vector<std::size_t> all(model.families.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    std::vector<std::size_t> out;
    if (segment.prog.empty()) return out;
    const auto cluster = classify_env(segment.env, model.clusters);
    for (auto gid : groups_by_cluster_[cluster]) {
        if (dos(segment.prog, model.groups[gid].representative_prog) >= cfg_.dos_threshold) {
            const auto& fams = families_by_group_[gid];
            out.insert(out.end(), fams.begin(), fams.end());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

Verdict Detector::step(const Segment& segment) {
    Verdict v;
    v.iteration = iteration_++;
    v.matched = match(segment);
    if (v.matched.empty()) {
        v.classification = Classification::unknown_context;
        return v;
    }

    std::size_t exceeding = 0;
    std::vector<MemberResult> results;
    for (auto fid : v.matched) {
        const auto& fam = model_->families[fid];
        results.clear();
        for (const auto& inv : fam.members) {
            const auto r = check_invariant(inv, segment);
            ++v.checks;
            if (r == CheckResult::inapplicable) continue;
            results.push_back({inv.p, r == CheckResult::violated});
        }
        if (results.empty()) continue;

        FamilyScore s;
        s.family_id = fid;
        s.est = est_iteration(results);
        auto& window = windows_[fid];
        window.push_back(s.est);
        if (window.size() > cfg_.window) window.pop_front();
        const std::vector<double> hist(window.begin(), window.end());
        s.windowed_est = est_window(hist);
        s.window_size = window.size();
        const bool eligible = !cfg_.require_full_window || window.size() == cfg_.window;
        if (eligible && s.windowed_est > cfg_.delta) ++exceeding;
        v.scores.push_back(s);
    }

    if (v.scores.empty()) {
        v.classification = Classification::passing;
    } else if (cfg_.aggregation == Aggregation::any_family) {
        v.classification = exceeding > 0 ? Classification::failing : Classification::passing;
    } else {
        const double share = static_cast<double>(exceeding) / static_cast<double>(v.scores.size());
        v.classification = share >= cfg_.family_fraction && exceeding > 0 ? Classification::failing
                                                                          : Classification::passing;
    }
    return v;
}

TraceVerdict classify_trace(const Trace& trace, const Model& model, const DetectorConfig& cfg) {
    TraceVerdict out;
    Detector det(model, cfg);
    for (const auto& seg : trace.segments) {
        const auto v = det.step(seg);
        out.checks += v.checks;
        if (v.classification == Classification::unknown_context) ++out.unknown_context;
        if (v.classification == Classification::failing) {
            out.classification = Classification::failing;
            if (!out.first_failing) out.first_failing = v.iteration;
        }
    }
    return out;
}

}  // namespace comid
