#include "comid/invariants.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include "comid/error.hpp"
#include "comid/rng.hpp"

namespace comid {

const char* to_string(TemplateId t) noexcept {
    switch (t) {
        case TemplateId::upper: return "UPPER";
        case TemplateId::lower: return "LOWER";
        case TemplateId::range: return "RANGE";
        case TemplateId::constant: return "CONST";
        case TemplateId::pair_le: return "PAIR_LE";
        case TemplateId::linear: return "LINEAR";
        case TemplateId::poly2: return "POLY2";
    }
    return "?";
}

TemplateId template_from_string(const std::string& s) {
    for (auto t : kAllTemplates) {
        if (s == to_string(t)) return t;
    }
    throw Error("ParseError", "unknown template '" + s + "'");
}

std::size_t template_arity(TemplateId t) noexcept {
    switch (t) {
        case TemplateId::pair_le:
        case TemplateId::linear:
        case TemplateId::poly2: return 2;
        default: return 1;
    }
}

std::optional<double> VariableSlot::read(const MethodRecord& rec) const {
    if (rec.name != method) return std::nullopt;
    if (is_return()) return rec.ret;
    if (position < 0 || static_cast<std::size_t>(position) >= rec.args.size()) return std::nullopt;
    return rec.args[static_cast<std::size_t>(position)];
}

bool VariableSlot::operator<(const VariableSlot& other) const {
    auto key = [](const VariableSlot& s) {
        return std::tuple<const std::string&, int>(s.method, s.is_return() ? std::numeric_limits<int>::max() : s.position);
    };
    return key(*this) < key(other);
}

std::string VariableSlot::to_string() const {
    return method + (is_return() ? std::string(".ret") : ".arg" + std::to_string(position));
}

std::string Invariant::to_string() const {
    std::ostringstream os;
    os.precision(17);
    const auto x = slots.empty() ? std::string("?") : slots[0].to_string();
    const auto y = slots.size() > 1 ? slots[1].to_string() : std::string();
    const auto& c = params.constants;
    switch (tmpl) {
        case TemplateId::upper: os << x << " <= " << c.at(0); break;
        case TemplateId::lower: os << x << " >= " << c.at(0); break;
        case TemplateId::range: os << c.at(0) << " <= " << x << " <= " << c.at(1); break;
        case TemplateId::constant: os << x << " == " << c.at(0); break;
        case TemplateId::pair_le: os << x << " <= " << y; break;
        case TemplateId::linear: os << y << " == " << c.at(0) << " * " << x << " + " << c.at(1); break;
        case TemplateId::poly2: os << "(" << x << ", " << y << ") in polygon[" << params.hull.size() << "]"; break;
    }
    os << ", p=" << p;
    return os.str();
}

namespace {

constexpr double kLinearTol = 1e-9;

bool linear_fits(double a, double b, double x, double y) {
    return std::abs(y - (a * x + b)) <= kLinearTol * std::max(1.0, std::abs(y));
}

}  // namespace

std::optional<InvariantParams> infer_template(TemplateId tmpl, std::span<const std::vector<double>> samples) {
    if (samples.empty()) throw Error("InvalidInput", "infer_template needs at least one sample");
    const std::size_t arity = template_arity(tmpl);
    for (const auto& s : samples) {
        if (s.size() != arity) {
            throw ArityMismatch(std::string(to_string(tmpl)) + " expects " + std::to_string(arity) +
                                "-tuples, got " + std::to_string(s.size()));
        }
    }

    InvariantParams out;
    switch (tmpl) {
        case TemplateId::upper:
        case TemplateId::lower:
        case TemplateId::range: {
            auto [lo, hi] = std::minmax_element(samples.begin(), samples.end(),
                                                [](const auto& a, const auto& b) { return a[0] < b[0]; });
            if (tmpl == TemplateId::upper) out.constants = {(*hi)[0]};
            if (tmpl == TemplateId::lower) out.constants = {(*lo)[0]};
            if (tmpl == TemplateId::range) out.constants = {(*lo)[0], (*hi)[0]};
            return out;
        }
        case TemplateId::constant: {
            const double c = samples.front()[0];
            for (const auto& s : samples) {
                if (s[0] != c) return std::nullopt;
            }
            out.constants = {c};
            return out;
        }
        case TemplateId::pair_le:
            for (const auto& s : samples) {
                if (!(s[0] <= s[1])) return std::nullopt;
            }
            return out;
        case TemplateId::linear: {
            const auto& first = samples.front();
            auto second = std::find_if(samples.begin(), samples.end(), [&](const auto& s) { return s[0] != first[0]; });
            if (second == samples.end()) return std::nullopt;
            const double a = ((*second)[1] - first[1]) / ((*second)[0] - first[0]);
            const double b = first[1] - a * first[0];
            for (const auto& s : samples) {
                if (!linear_fits(a, b, s[0], s[1])) return std::nullopt;
            }
            out.constants = {a, b};
            return out;
        }
        case TemplateId::poly2: {
            std::vector<Point2> pts;
            pts.reserve(samples.size());
            for (const auto& s : samples) pts.push_back({s[0], s[1]});
            out.hull = convex_hull(pts);
            if (out.hull.size() < 3 || out.hull.size() > 12) return std::nullopt;
            return out;
        }
    }
    return std::nullopt;
}

bool holds(TemplateId tmpl, const InvariantParams& params, std::span<const double> v) {
    const auto& c = params.constants;
    switch (tmpl) {
        case TemplateId::upper: return v[0] <= c[0];
        case TemplateId::lower: return v[0] >= c[0];
        case TemplateId::range: return c[0] <= v[0] && v[0] <= c[1];
        case TemplateId::constant: return v[0] == c[0];
        case TemplateId::pair_le: return v[0] <= v[1];
        case TemplateId::linear: return linear_fits(c[0], c[1], v[0], v[1]);
        case TemplateId::poly2: return in_convex_polygon({v[0], v[1]}, params.hull);
    }
    return false;
}

CheckResult check_invariant(const Invariant& inv, const Segment& segment) {
    bool applicable = false;
    std::array<double, 2> sample{};
    for (const auto& rec : segment.methods) {
        bool complete = true;
        for (std::size_t i = 0; i < inv.slots.size(); ++i) {
            const auto v = inv.slots[i].read(rec);
            if (!v) {
                complete = false;
                break;
            }
            sample[i] = *v;
        }
        if (!complete) continue;
        applicable = true;
        if (!holds(inv.tmpl, inv.params, std::span<const double>(sample.data(), inv.slots.size()))) {
            return CheckResult::violated;
        }
    }
    return applicable ? CheckResult::satisfied : CheckResult::inapplicable;
}

std::size_t subset_size(double ratio, std::size_t n) {
    return static_cast<std::size_t>(std::max(1.0, std::round(ratio * static_cast<double>(n))));
}

std::map<double, std::vector<SegmentRef>> sample_subsets(const GroupModel& group, std::uint64_t seed,
                                                         std::span<const double> ratios) {
    std::map<double, std::vector<SegmentRef>> out;
    const std::size_t n = group.members.size();
    for (double p : ratios) {
        const auto ratio_key = static_cast<std::uint64_t>(std::llround(p * 1000.0));
        Rng rng(combine_seed(combine_seed(seed, group.group_id), ratio_key));
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        const std::size_t m = std::min(subset_size(p, n), n);
        // Partial Fisher-Yates: the first m positions form the sample.
        for (std::size_t i = 0; i < m; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(n - i));
            std::swap(idx[i], idx[j]);
        }
        std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m));
        auto& subset = out[p];
        for (std::size_t i = 0; i < m; ++i) subset.push_back(group.members[idx[i]]);
    }
    out[1.0] = group.members;
    return out;
}

SegmentIndex::SegmentIndex(std::span<const TracedSegment> segments) {
    for (const auto& s : segments) map_.emplace(s.ref, s.segment);
}

const Segment& SegmentIndex::at(const SegmentRef& ref) const {
    auto it = map_.find(ref);
    if (it == map_.end()) {
        throw Error("UnknownSegment", "no segment " + ref.trace_id + "#" + std::to_string(ref.index));
    }
    return *it->second;
}

namespace {

std::set<VariableSlot> slots_of(const Segment& seg) {
    std::set<VariableSlot> out;
    for (const auto& rec : seg.methods) {
        for (std::size_t i = 0; i < rec.args.size(); ++i) out.insert(VariableSlot::arg(rec.name, static_cast<int>(i)));
        if (rec.ret) out.insert(VariableSlot::ret(rec.name));
    }
    return out;
}

std::vector<std::vector<double>> gather(const std::vector<const Segment*>& segs, const std::vector<VariableSlot>& slots) {
    std::vector<std::vector<double>> samples;
    for (const auto* seg : segs) {
        for (const auto& rec : seg->methods) {
            std::vector<double> s;
            for (const auto& slot : slots) {
                auto v = slot.read(rec);
                if (!v) break;
                s.push_back(*v);
            }
            if (s.size() == slots.size()) samples.push_back(std::move(s));
        }
    }
    return samples;
}

struct Candidate {
    std::vector<VariableSlot> slots;
    TemplateId tmpl;
};

bool family_less(const InvariantFamily& a, const InvariantFamily& b) {
    if (a.group_id != b.group_id) return a.group_id < b.group_id;
    if (a.slots != b.slots) {
        return std::lexicographical_compare(a.slots.begin(), a.slots.end(), b.slots.begin(), b.slots.end());
    }
    return a.tmpl < b.tmpl;
}

}  // namespace

std::vector<InvariantFamily> build_families(std::span<const GroupModel> groups, const SegmentIndex& index,
                                            const InferenceConfig& cfg) {
    auto enabled = [&](TemplateId t) { return std::find(cfg.templates.begin(), cfg.templates.end(), t) != cfg.templates.end(); };

    std::vector<InvariantFamily> out;
    for (const auto& group : groups) {
        if (group.members.empty()) continue;

        std::set<VariableSlot> common;
        for (std::size_t i = 0; i < group.members.size(); ++i) {
            auto s = slots_of(index.at(group.members[i]));
            if (i == 0) {
                common = std::move(s);
            } else {
                std::set<VariableSlot> both;
                std::set_intersection(common.begin(), common.end(), s.begin(), s.end(), std::inserter(both, both.end()));
                common = std::move(both);
            }
        }

        std::vector<Candidate> candidates;
        const std::vector<VariableSlot> slots(common.begin(), common.end());
        for (const auto& s : slots) {
            for (auto t : {TemplateId::upper, TemplateId::lower, TemplateId::range, TemplateId::constant}) {
                if (enabled(t)) candidates.push_back({{s}, t});
            }
        }
        for (std::size_t i = 0; i < slots.size(); ++i) {
            for (std::size_t j = i + 1; j < slots.size(); ++j) {
                if (slots[i].method != slots[j].method) continue;
                if (enabled(TemplateId::pair_le)) {
                    candidates.push_back({{slots[i], slots[j]}, TemplateId::pair_le});
                    candidates.push_back({{slots[j], slots[i]}, TemplateId::pair_le});
                }
                if (enabled(TemplateId::linear)) candidates.push_back({{slots[i], slots[j]}, TemplateId::linear});
                if (enabled(TemplateId::poly2)) candidates.push_back({{slots[i], slots[j]}, TemplateId::poly2});
            }
        }

        std::map<double, std::vector<SegmentRef>> subsets;
        if (group.members.size() >= cfg.min_group_size) {
            subsets = sample_subsets(group, cfg.rng_seed, cfg.subset_ratios);
        } else {
            subsets[1.0] = group.members;
        }
        std::map<double, std::vector<const Segment*>> subset_segs;
        for (const auto& [p, refs] : subsets) {
            auto& v = subset_segs[p];
            for (const auto& r : refs) v.push_back(&index.at(r));
        }

        for (const auto& cand : candidates) {
            auto infer_at = [&](double p) -> std::optional<Invariant> {
                const auto samples = gather(subset_segs.at(p), cand.slots);
                if (samples.empty()) return std::nullopt;
                auto params = infer_template(cand.tmpl, samples);
                if (!params) return std::nullopt;
                if (cand.tmpl == TemplateId::poly2 && params->hull.size() > cfg.max_hull_vertices) return std::nullopt;
                return Invariant{cand.tmpl, cand.slots, std::move(*params), p};
            };
            auto principal = infer_at(1.0);
            if (!principal) continue;

            InvariantFamily fam;
            fam.group_id = group.group_id;
            fam.tmpl = cand.tmpl;
            fam.slots = cand.slots;
            for (const auto& [p, _] : subset_segs) {
                if (p == 1.0) continue;
                if (auto inv = infer_at(p)) fam.members.push_back(std::move(*inv));
            }
            fam.members.push_back(std::move(*principal));
            out.push_back(std::move(fam));
        }
    }
    std::stable_sort(out.begin(), out.end(), family_less);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].family_id = i;
    return out;
}

}  // namespace comid
