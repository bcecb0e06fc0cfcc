#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "comid/error.hpp"
#include "comid/geometry.hpp"
#include "comid/invariants.hpp"
#include "comid/rng.hpp"

using namespace comid;

namespace {

std::vector<std::vector<double>> unary(std::initializer_list<double> xs) {
    std::vector<std::vector<double>> out;
    for (double x : xs) out.push_back({x});
    return out;
}

Segment angle_segment(std::size_t index, double angle) {
    Segment s;
    s.index = index;
    s.prog = ProgContext({"walk"});
    s.env.values = {0.0};
    s.methods.push_back({"angleMove", {angle}, angle});
    return s;
}

// Random corpus with one group over all segments; slot values follow a few
// relations so that every template gets exercised.
struct Corpus {
    std::vector<Trace> traces;
    std::vector<TracedSegment> segments;
    GroupModel group;
};

Corpus random_corpus(Rng& rng, std::size_t n) {
    Corpus c;
    Trace t{"t", Label::safe, {}};
    const double slope = rng.uniform(-2, 2);
    for (std::size_t i = 0; i < n; ++i) {
        Segment s;
        s.index = i;
        s.prog = ProgContext({"loop"});
        s.env.values = {0.0};
        const double x = rng.uniform(-10, 10);
        s.methods.push_back({"f", {x, x + rng.uniform(0, 3)}, slope * x + 1.0});
        s.methods.push_back({"g", {4.0, rng.normal()}, std::nullopt});
        t.segments.push_back(s);
    }
    c.traces.push_back(t);
    c.segments = collect_segments(c.traces);
    c.group.group_id = 3;
    c.group.centroid = {{0.0}};
    c.group.representative_prog = ProgContext({"loop"});
    for (const auto& s : c.segments) c.group.members.push_back(s.ref);
    return c;
}

}  // namespace

TEST_CASE("UPPER over the angle samples") {
    auto three = unary({48, 52, 55});
    CHECK(infer_template(TemplateId::upper, three)->constants == std::vector<double>{55});
    auto two = unary({48, 52});
    CHECK(infer_template(TemplateId::upper, two)->constants == std::vector<double>{52});
}

TEST_CASE("other unary templates") {
    auto s = unary({3, -1, 7});
    CHECK(infer_template(TemplateId::lower, s)->constants == std::vector<double>{-1});
    CHECK(infer_template(TemplateId::range, s)->constants == std::vector<double>{-1, 7});
    CHECK_FALSE(infer_template(TemplateId::constant, s).has_value());
    auto seven = unary({7});
    CHECK(infer_template(TemplateId::constant, seven)->constants == std::vector<double>{7});
    auto seven_eight = unary({7, 8});
    CHECK_FALSE(infer_template(TemplateId::constant, seven_eight).has_value());
    std::vector<std::vector<double>> bad{{1.0, 2.0}};
    CHECK_THROWS_AS(infer_template(TemplateId::upper, bad), ArityMismatch);
}

TEST_CASE("binary templates") {
    std::vector<std::vector<double>> le{{1, 2}, {3, 3}, {-4, 0}};
    CHECK(infer_template(TemplateId::pair_le, le).has_value());
    std::vector<std::vector<double>> not_le{{1, 2}, {3, 2.5}};
    CHECK_FALSE(infer_template(TemplateId::pair_le, not_le).has_value());

    std::vector<std::vector<double>> line{{1, 5}, {1, 5}, {2, 7}, {-3, -3}};
    const auto fit = infer_template(TemplateId::linear, line);
    REQUIRE(fit.has_value());
    CHECK(fit->constants[0] == doctest::Approx(2.0));
    CHECK(fit->constants[1] == doctest::Approx(3.0));
    std::vector<std::vector<double>> bent{{1, 5}, {2, 7}, {3, 9.5}};
    CHECK_FALSE(infer_template(TemplateId::linear, bent).has_value());
    std::vector<std::vector<double>> vertical{{1, 5}, {1, 6}};
    CHECK_FALSE(infer_template(TemplateId::linear, vertical).has_value());

    std::vector<std::vector<double>> tri{{0, 0}, {2, 0}, {0, 2}, {0.5, 0.5}};
    const auto hull = infer_template(TemplateId::poly2, tri);
    REQUIRE(hull.has_value());
    CHECK(hull->hull.size() == 3);
    std::vector<std::vector<double>> collinear{{0, 0}, {1, 1}, {2, 2}};
    CHECK_FALSE(infer_template(TemplateId::poly2, collinear).has_value());
}

TEST_CASE("check_invariant examples") {
    Invariant upper{TemplateId::upper, {VariableSlot::arg("angleMove", 0)}, {{55.0}, {}}, 1.0};
    CHECK(check_invariant(upper, angle_segment(0, 60)) == CheckResult::violated);
    CHECK(check_invariant(upper, angle_segment(0, 55)) == CheckResult::satisfied);
    Segment other;
    other.methods.push_back({"balance", {1.0}, 0.0});
    CHECK(check_invariant(upper, other) == CheckResult::inapplicable);

    // Any violating record makes the iteration violate.
    auto twice = angle_segment(0, 50);
    twice.methods.push_back({"angleMove", {70.0}, 70.0});
    CHECK(check_invariant(upper, twice) == CheckResult::violated);

    Invariant poly{TemplateId::poly2,
                   {VariableSlot::arg("m", 0), VariableSlot::arg("m", 1)},
                   {{}, {{0, 0}, {2, 0}, {0, 2}}},
                   1.0};
    Segment in, out, edge;
    in.methods.push_back({"m", {0.5, 0.5}, std::nullopt});
    out.methods.push_back({"m", {2, 2}, std::nullopt});
    edge.methods.push_back({"m", {1, 1}, std::nullopt});
    CHECK(check_invariant(poly, in) == CheckResult::satisfied);
    CHECK(check_invariant(poly, out) == CheckResult::violated);
    CHECK(check_invariant(poly, edge) == CheckResult::satisfied);
}

TEST_CASE("property: hull is convex, counterclockwise and contains its points") {
    Rng rng(31);
    for (int round = 0; round < 200; ++round) {
        std::vector<Point2> pts;
        for (std::size_t i = 0; i < 3 + rng.below(40); ++i) pts.push_back({rng.normal() * 5, rng.uniform(-3, 8)});
        const auto hull = convex_hull(pts);
        if (hull.size() < 3) continue;
        for (std::size_t i = 0; i < hull.size(); ++i) {
            const auto& a = hull[i];
            const auto& b = hull[(i + 1) % hull.size()];
            const auto& c = hull[(i + 2) % hull.size()];
            CHECK((b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x) > 0.0);
        }
        for (const auto& p : pts) CHECK(in_convex_polygon(p, hull));
        CHECK_FALSE(in_convex_polygon({1e3, 1e3}, hull));
    }
}

TEST_CASE("subset sizes") {
    GroupModel g;
    for (std::size_t i = 0; i < 10; ++i) g.members.push_back({"t", i});
    std::vector<std::size_t> sizes;
    for (const auto& [p, refs] : sample_subsets(g, 1)) sizes.push_back(refs.size());
    CHECK(sizes == std::vector<std::size_t>{2, 4, 6, 8, 10});

    g.members.resize(3);
    sizes.clear();
    for (const auto& [p, refs] : sample_subsets(g, 1)) sizes.push_back(refs.size());
    CHECK(sizes == std::vector<std::size_t>{1, 1, 2, 2, 3});

    g.members.clear();
    for (std::size_t i = 0; i < 50; ++i) g.members.push_back({"t", i});
    const auto a = sample_subsets(g, 77);
    const auto b = sample_subsets(g, 77);
    CHECK(a == b);
    for (const auto& [p, refs] : a) {
        auto sorted = refs;
        std::sort(sorted.begin(), sorted.end());
        CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    }
}

TEST_CASE("family of five for a group of ten") {
    Trace t{"t", Label::safe, {}};
    for (std::size_t i = 0; i < 10; ++i) t.segments.push_back(angle_segment(i, 40.0 + static_cast<double>(i)));
    std::vector<Trace> traces{t};
    const auto segs = collect_segments(traces);
    GroupModel g;
    for (const auto& s : segs) g.members.push_back(s.ref);
    InferenceConfig cfg;
    cfg.templates = {TemplateId::upper};
    std::vector<GroupModel> groups{g};
    const auto fams = build_families(groups, SegmentIndex(segs), cfg);
    REQUIRE(fams.size() == 2);  // argument and return value
    for (const auto& f : fams) {
        REQUIRE(f.members.size() == 5);
        CHECK(f.principal().p == 1.0);
        CHECK(f.principal().params.constants[0] == 49.0);
        for (std::size_t i = 1; i < f.members.size(); ++i) CHECK(f.members[i - 1].p < f.members[i].p);
    }

    // Small groups keep only the principal.
    g.members.resize(3);
    groups = {g};
    for (const auto& f : build_families(groups, SegmentIndex(segs), cfg)) {
        REQUIRE(f.members.size() == 1);
        CHECK(f.members[0].p == 1.0);
    }
}

TEST_CASE("no family when the principal fails") {
    // y = 2x on the first segment pair only; the full set breaks the line.
    Trace t{"t", Label::safe, {}};
    for (std::size_t i = 0; i < 10; ++i) {
        Segment s;
        s.index = i;
        s.prog = ProgContext({"a"});
        s.env.values = {0.0};
        const double x = static_cast<double>(i);
        s.methods.push_back({"m", {x, i == 9 ? 100.0 : 2 * x}, std::nullopt});
        t.segments.push_back(s);
    }
    std::vector<Trace> traces{t};
    const auto segs = collect_segments(traces);
    GroupModel g;
    for (const auto& s : segs) g.members.push_back(s.ref);
    InferenceConfig cfg;
    cfg.templates = {TemplateId::linear};
    std::vector<GroupModel> groups{g};
    CHECK(build_families(groups, SegmentIndex(segs), cfg).empty());

    // The 20% subset alone fits a line.
    const auto subsets = sample_subsets(g, cfg.rng_seed);
    std::vector<std::vector<double>> small;
    for (const auto& r : subsets.at(0.2)) small.push_back(segs[r.index].segment->methods[0].args);
    if (std::none_of(small.begin(), small.end(), [](auto& v) { return v[1] == 100.0; })) {
        CHECK(infer_template(TemplateId::linear, small).has_value());
    }
}

TEST_CASE("property: every member is sound on the subset it came from") {
    Rng rng(55);
    for (int round = 0; round < 25; ++round) {
        auto c = random_corpus(rng, 5 + rng.below(40));
        InferenceConfig cfg;
        cfg.rng_seed = rng.next();
        std::vector<GroupModel> groups{c.group};
        const SegmentIndex index(c.segments);
        const auto fams = build_families(groups, index, cfg);
        CHECK_FALSE(fams.empty());
        const auto subsets = sample_subsets(c.group, cfg.rng_seed, cfg.subset_ratios);
        for (const auto& f : fams) {
            CHECK(f.principal().p == 1.0);
            for (const auto& inv : f.members) {
                for (const auto& ref : subsets.at(inv.p)) {
                    CHECK(check_invariant(inv, index.at(ref)) != CheckResult::violated);
                }
            }
        }
        // Determinism.
        const auto again = build_families(groups, index, cfg);
        REQUIRE(again.size() == fams.size());
        for (std::size_t i = 0; i < fams.size(); ++i) {
            CHECK(again[i].slots == fams[i].slots);
            REQUIRE(again[i].members.size() == fams[i].members.size());
            for (std::size_t j = 0; j < fams[i].members.size(); ++j) {
                CHECK(again[i].members[j].params == fams[i].members[j].params);
            }
        }
    }
}

TEST_CASE("property: UPPER and LOWER weaken on supersets") {
    Rng rng(12);
    for (int round = 0; round < 300; ++round) {
        std::vector<std::vector<double>> s;
        for (std::size_t i = 0; i < 1 + rng.below(20); ++i) s.push_back({rng.normal() * 10});
        auto super = s;
        for (std::size_t i = 0; i < rng.below(10); ++i) super.push_back({rng.normal() * 10});
        const double up = infer_template(TemplateId::upper, s)->constants[0];
        const double up2 = infer_template(TemplateId::upper, super)->constants[0];
        const double lo = infer_template(TemplateId::lower, s)->constants[0];
        const double lo2 = infer_template(TemplateId::lower, super)->constants[0];
        CHECK(up2 >= up);
        CHECK(lo2 <= lo);
        const auto r = infer_template(TemplateId::range, super)->constants;
        CHECK(r[0] == lo2);
        CHECK(r[1] == up2);
    }
}

TEST_CASE("template names round trip") {
    for (auto t : kAllTemplates) CHECK(template_from_string(to_string(t)) == t);
    CHECK(VariableSlot::arg("f", 0) < VariableSlot::arg("f", 1));
    CHECK(VariableSlot::arg("f", 3) < VariableSlot::ret("f"));
    CHECK(VariableSlot::ret("f").to_string() == "f.ret");
}
