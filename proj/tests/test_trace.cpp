#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>
#include <set>

#include "comid/error.hpp"
#include "comid/rng.hpp"
#include "comid/trace.hpp"

using namespace comid;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "comid-tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

const AttributeSchema kSchema2{{"x", "y"}, {}};

}  // namespace

TEST_CASE("segmentation of a two-iteration stream") {
    std::vector<RawEvent> ev{SenseEvent{{1.0, 2.0}}, StatementEvent{"a"}, MethodEntryEvent{"f", {3.0}},
                             MethodExitEvent{"f", 7.0}, ActEvent{}, SenseEvent{{1.1, 2.1}}, StatementEvent{"b"},
                             ActEvent{}};
    auto segs = segment_events(ev, kSchema2);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].index == 0);
    CHECK(segs[0].prog.ids() == std::vector<std::string>{"a"});
    CHECK(segs[0].env.values == std::vector<double>{1.0, 2.0});
    REQUIRE(segs[0].methods.size() == 1);
    CHECK(segs[0].methods[0] == MethodRecord{"f", {3.0}, 7.0});
    CHECK(segs[1].index == 1);
    CHECK(segs[1].prog.ids() == std::vector<std::string>{"b"});
    CHECK(segs[1].env.values == std::vector<double>{1.1, 2.1});
    CHECK(segs[1].methods.empty());
}

TEST_CASE("segmentation edge cases") {
    CHECK(segment_events({}, kSchema2).empty());
    CHECK_THROWS_AS(segment_events({StatementEvent{"a"}, SenseEvent{{1.0}}}, AttributeSchema{{"x"}, {}}),
                    MalformedStream);
    CHECK_THROWS_AS(segment_events({ActEvent{}}, kSchema2), MalformedStream);
    CHECK_THROWS_AS(segment_events({SenseEvent{{1.0, 2.0}}, MethodExitEvent{"f", 1.0}}, kSchema2), MalformedStream);
    CHECK_THROWS_AS(segment_events({SenseEvent{{1.0}}}, kSchema2), ArityMismatch);

    // A truncated final iteration is kept; an unclosed call is not recorded.
    auto segs = segment_events({SenseEvent{{1.0, 2.0}}, StatementEvent{"a"}, ActEvent{}, SenseEvent{{3.0, 4.0}},
                                StatementEvent{"c"}, MethodEntryEvent{"g", {1.0}}},
                               kSchema2);
    REQUIRE(segs.size() == 2);
    CHECK(segs[1].prog.ids() == std::vector<std::string>{"c"});
    CHECK(segs[1].methods.empty());
}

TEST_CASE("nested calls are recorded in entry order") {
    auto segs = segment_events({SenseEvent{{0.0, 0.0}}, MethodEntryEvent{"outer", {1.0}}, MethodEntryEvent{"inner", {2.0}},
                                MethodExitEvent{"inner", 3.0}, MethodExitEvent{"outer", std::nullopt}, ActEvent{}},
                               kSchema2);
    REQUIRE(segs[0].methods.size() == 2);
    CHECK(segs[0].methods[0].name == "outer");
    CHECK_FALSE(segs[0].methods[0].ret.has_value());
    CHECK(segs[0].methods[1].name == "inner");
    CHECK(*segs[0].methods[1].ret == 3.0);
}

TEST_CASE("property: segmentation partitions random streams") {
    Rng rng(42);
    for (int round = 0; round < 200; ++round) {
        std::vector<RawEvent> ev;
        // Oracle: what each span should contain, built alongside the stream.
        std::vector<std::set<std::string>> want_prog;
        std::vector<std::vector<MethodRecord>> want_methods;
        std::vector<std::vector<double>> want_env;
        const auto iterations = rng.below(8);
        for (std::size_t it = 0; it < iterations; ++it) {
            std::vector<double> env{rng.uniform(-5, 5), rng.uniform(-5, 5)};
            ev.emplace_back(SenseEvent{env});
            want_env.push_back(env);
            want_prog.emplace_back();
            want_methods.emplace_back();
            const auto items = rng.below(6);
            for (std::size_t k = 0; k < items; ++k) {
                if (rng.below(2) == 0) {
                    std::string id = "s" + std::to_string(rng.below(5));
                    ev.emplace_back(StatementEvent{id});
                    want_prog.back().insert(id);
                } else {
                    MethodRecord r{"m" + std::to_string(rng.below(3)), {rng.uniform(0, 1)}, rng.uniform(0, 1)};
                    ev.emplace_back(MethodEntryEvent{r.name, r.args});
                    ev.emplace_back(MethodExitEvent{r.name, r.ret});
                    want_methods.back().push_back(r);
                }
            }
            if (rng.below(4) != 0 || it + 1 < iterations) ev.emplace_back(ActEvent{});
        }
        const auto segs = segment_events(ev, kSchema2);
        std::size_t senses = 0;
        for (const auto& e : ev) senses += std::holds_alternative<SenseEvent>(e);
        REQUIRE(segs.size() == senses);
        std::size_t records = 0;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            CHECK(segs[i].index == i);
            CHECK(segs[i].env.values == want_env[i]);
            std::set<std::string> got(segs[i].prog.ids().begin(), segs[i].prog.ids().end());
            CHECK(got == want_prog[i]);
            CHECK(segs[i].methods == want_methods[i]);
            records += segs[i].methods.size();
        }
        std::size_t entries = 0;
        for (const auto& e : ev) entries += std::holds_alternative<MethodEntryEvent>(e);
        CHECK(records == entries);
    }
}

TEST_CASE("trace file load, labels and errors") {
    const auto p = temp_file("two.jsonl");
    write_text(p,
               "{\"format\":\"comid-trace/1\",\"attributes\":[\"a\",\"b\",\"c\"]}\n"
               "{\"trace_id\":\"t1\",\"label\":\"safe\",\"segments\":["
               "{\"index\":0,\"env\":[1,2,3],\"prog\":[\"x\"],\"methods\":[]},"
               "{\"index\":1,\"env\":[1,2,3],\"prog\":[\"x\"],\"methods\":[{\"name\":\"f\",\"args\":[1],\"ret\":2}]},"
               "{\"index\":2,\"env\":[1,2,3],\"prog\":[\"y\"],\"methods\":[]}]}\n"
               "{\"trace_id\":\"t2\",\"label\":\"unsafe\",\"segments\":["
               "{\"index\":0,\"env\":[0,0,0],\"prog\":[\"x\"],\"methods\":[]},"
               "{\"index\":1,\"env\":[0,0,1],\"prog\":[\"x\"],\"methods\":[{\"name\":\"f\",\"args\":[1],\"ret\":null}]},"
               "{\"index\":2,\"env\":[0,0,2],\"prog\":[\"z\"],\"methods\":[]}]}\n");
    const auto file = load_traces(p);
    CHECK(file.schema.names == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(file.traces.size() == 2);
    CHECK(file.traces[0].label == Label::safe);
    CHECK(file.traces[1].label == Label::unsafe);
    CHECK(file.traces[1].segments.size() == 3);
    CHECK_FALSE(file.traces[1].segments[1].methods[0].ret.has_value());

    write_text(p,
               "{\"format\":\"comid-trace/1\",\"attributes\":[\"a\"]}\n"
               "{\"trace_id\":\"t\",\"label\":\"safe\",\"segments\":[]}\n");
    try {
        load_traces(p);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }

    write_text(p,
               "{\"format\":\"comid-trace/1\",\"attributes\":[\"a\",\"b\",\"c\"]}\n"
               "{\"trace_id\":\"t\",\"label\":\"safe\",\"segments\":[{\"index\":0,\"env\":[1,2],\"prog\":[\"x\"],"
               "\"methods\":[]}]}\n");
    CHECK_THROWS_AS(load_traces(p), ArityMismatch);

    write_text(p,
               "{\"format\":\"comid-trace/1\",\"attributes\":[\"a\",\"b\"]}\n"
               "{\"format\":\"comid-trace/1\",\"attributes\":[\"b\",\"a\"]}\n");
    CHECK_THROWS_AS(load_traces(p), SchemaConflict);

    write_text(p, "{\"format\":\"comid-trace/1\",\"attributes\":[\"a\"]}\nnot json\n");
    CHECK_THROWS_AS(load_traces(p), ParseError);
    CHECK_THROWS_AS(load_traces(temp_file("does-not-exist.jsonl")), IoError);
}

TEST_CASE("property: save then load is the identity") {
    Rng rng(7);
    const AttributeSchema schema{{"p", "q", "r"}, {}};
    for (int round = 0; round < 30; ++round) {
        std::vector<Trace> traces;
        for (std::size_t t = 0; t < 1 + rng.below(4); ++t) {
            Trace tr{"trace-" + std::to_string(t), rng.below(2) ? Label::unsafe : Label::safe, {}};
            for (std::size_t i = 0; i < 1 + rng.below(6); ++i) {
                Segment s;
                s.index = i;
                // Raw bit patterns stress the shortest round-trip formatting.
                for (int a = 0; a < 3; ++a) s.env.values.push_back(rng.normal() * std::pow(10.0, rng.uniform(-300, 300)));
                s.prog = ProgContext({"s" + std::to_string(rng.below(4)), "loop"});
                s.methods.push_back({"f", {rng.uniform(-1, 1), 0.1}, rng.below(2) ? std::optional<double>(rng.normal()) : std::nullopt});
                tr.segments.push_back(std::move(s));
            }
            traces.push_back(std::move(tr));
        }
        const auto p = temp_file("roundtrip.jsonl");
        save_traces(schema, traces, p);
        const auto back = load_traces(p);
        CHECK(back.schema == schema);
        CHECK(back.traces == traces);
    }
}

TEST_CASE("0.1 is written as 0.1") {
    const AttributeSchema schema{{"v"}, {}};
    Trace t{"t", Label::unsafe, {}};
    Segment s;
    s.env.values = {0.1};
    s.prog = ProgContext({"a"});
    t.segments.push_back(s);
    const auto p = temp_file("point-one.jsonl");
    save_traces(schema, {t}, p);
    std::ifstream in(p);
    std::string header, line;
    std::getline(in, header);
    std::getline(in, line);
    CHECK(line.find("[0.1]") != std::string::npos);
    const auto back = load_traces(p);
    CHECK(back.traces[0].segments[0].env.values[0] == 0.1);
    CHECK(back.traces[0].label == Label::unsafe);
}

TEST_CASE("prog context has set semantics") {
    ProgContext p({"b", "a", "b"});
    CHECK(p.ids() == std::vector<std::string>{"a", "b"});
    p.insert("a");
    CHECK(p.size() == 2);
    CHECK(p.contains("b"));
    CHECK_FALSE(p.contains("c"));
}
