#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "comid/error.hpp"
#include "comid/pipeline.hpp"
#include "comid/rng.hpp"

using namespace comid;

namespace {

// Two environmental regimes with different program paths and bounds.
std::vector<Trace> two_regime_traces(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Trace> out;
    for (std::size_t t = 0; t < count; ++t) {
        Trace tr{"run-" + std::to_string(t), Label::safe, {}};
        for (std::size_t i = 0; i < 12; ++i) {
            const bool hot = i >= 6;
            Segment s;
            s.index = i;
            s.env.values = {hot ? 80.0 + rng.uniform(-1, 1) : 20.0 + rng.uniform(-1, 1), 5.0};
            s.prog = hot ? ProgContext({"loop", "cool"}) : ProgContext({"loop", "heat"});
            const double v = hot ? rng.uniform(0, 2) : rng.uniform(10, 12);
            s.methods.push_back({"actuate", {v}, 2 * v});
            tr.segments.push_back(s);
        }
        out.push_back(tr);
    }
    return out;
}

const AttributeSchema kSchema{{"temp", "const"}, {"C", ""}};

}  // namespace

TEST_CASE("training groups by context") {
    const auto traces = two_regime_traces(10, 1);
    PipelineConfig cfg;
    cfg.grouping.k_percent = 0.02;
    const auto model = train_model(kSchema, traces, cfg);
    CHECK(model.clusters.k >= 2);
    CHECK(model.groups.size() >= 2);
    CHECK_FALSE(model.families.empty());
    CHECK(model.invariant_count() > model.families.size());

    // A cool-phase call with a heat-phase value violates only under context.
    Segment s;
    s.env.values = {80.0, 5.0};
    s.prog = ProgContext({"loop", "cool"});
    s.methods.push_back({"actuate", {11.0}, 22.0});
    Detector d(model, cfg.resolved_detector());
    Classification last = Classification::passing;
    for (std::size_t i = 0; i < 5; ++i) {
        s.index = i;
        last = d.step(s).classification;
    }
    CHECK(last == Classification::failing);

    PipelineConfig global = cfg;
    global.mode = ContextMode::global;
    const auto gm = train_model(kSchema, traces, global);
    CHECK(gm.groups.size() == 1);
    Detector gd(gm, global.resolved_detector());
    for (std::size_t i = 0; i < 5; ++i) {
        s.index = i;
        last = gd.step(s).classification;
    }
    CHECK(last == Classification::passing);
}

TEST_CASE("unsafe traces are not used for training") {
    auto traces = two_regime_traces(6, 2);
    auto poisoned = traces;
    for (auto& t : poisoned) {
        t.label = Label::unsafe;
        for (auto& s : t.segments) s.methods[0].args[0] = 1e6;
    }
    PipelineConfig cfg;
    const auto clean = train_model(kSchema, traces, cfg);
    auto mixed = traces;
    mixed.insert(mixed.end(), poisoned.begin(), poisoned.end());
    const auto with_unsafe = train_model(kSchema, mixed, cfg);
    CHECK(to_json(clean) == to_json(with_unsafe));
}

TEST_CASE("model and config survive a file round trip") {
    const auto traces = two_regime_traces(8, 3);
    PipelineConfig cfg;
    cfg.grouping.k_mode = KMode::grid_search;
    cfg.detector.window = 4;
    UncertaintySpec u;
    u.dist = Distribution::normal;
    u.range_bound = 2.53;
    u.sigma = 1.0;
    cfg.uncertainty = u;
    const auto model = train_model(kSchema, traces, cfg);
    const auto path = std::filesystem::temp_directory_path() / "comid-tests" / "model.json";
    std::filesystem::create_directories(path.parent_path());
    save_model(model, cfg, path);
    const auto back = load_model(path);
    CHECK(to_json(back.model) == to_json(model));
    CHECK(to_json(back.config) == to_json(cfg));
    CHECK(back.config.resolved_detector().delta == doctest::Approx(0.65).epsilon(0.02));
    CHECK(back.config.resolved_detector().window == 4);

    const auto j = to_json(model);
    CHECK(j.at("format") == "comid-model/1");
    CHECK(j.at("groups").at(0).contains("member_refs"));
    CHECK(j.at("families").at(0).contains("members"));
}

TEST_CASE("training needs safe traces") {
    auto traces = two_regime_traces(2, 4);
    for (auto& t : traces) t.label = Label::unsafe;
    CHECK_THROWS_AS(train_model(kSchema, traces, PipelineConfig{}), Error);
}

TEST_CASE("verdict json") {
    Verdict v;
    v.iteration = 3;
    v.matched = {1, 2};
    v.scores.push_back({1, 0.5, 0.25, 2});
    v.classification = Classification::failing;
    const auto j = to_json(v, "abc");
    CHECK(j.at("trace_id") == "abc");
    CHECK(j.at("index") == 3);
    CHECK(j.at("classification") == "failing");
    CHECK(j.at("families").at(0).at("windowed_est") == 0.25);
}
