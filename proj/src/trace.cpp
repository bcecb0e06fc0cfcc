#include "comid/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "comid/error.hpp"

namespace comid {

using nlohmann::json;

void AttributeSchema::validate() const {
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) throw SchemaConflict("duplicate attribute '" + n + "'");
    }
}

ProgContext::ProgContext(std::vector<std::string> ids) : ids_(std::move(ids)) {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
}

void ProgContext::insert(const std::string& id) {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) ids_.insert(it, id);
}

bool ProgContext::contains(const std::string& id) const {
    return std::binary_search(ids_.begin(), ids_.end(), id);
}

const char* to_string(Label label) noexcept {
    switch (label) {
        case Label::safe: return "safe";
        case Label::unsafe: return "unsafe";
        case Label::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

Label label_from_string(const std::string& s) {
    if (s == "safe") return Label::safe;
    if (s == "unsafe") return Label::unsafe;
    if (s == "unlabeled") return Label::unlabeled;
    throw Error("ParseError", "unknown label '" + s + "'");
}

// ---------------------------------------------------------------------------

namespace {

struct PendingCall {
    MethodRecord record;
    bool closed = false;
};

struct SegmentBuilder {
    Segment seg;
    std::vector<PendingCall> calls;  // entry order
    std::vector<std::size_t> open;   // indices into calls, innermost last

    Segment finish() {
        for (auto& c : calls) {
            if (c.closed) seg.methods.push_back(std::move(c.record));
        }
        return std::move(seg);
    }
};

}  // namespace

std::vector<Segment> segment_events(const std::vector<RawEvent>& events, const AttributeSchema& schema) {
    std::vector<Segment> out;
    std::optional<SegmentBuilder> cur;

    auto require_open = [&](const char* what) {
        if (!cur) throw MalformedStream(std::string(what) + " before the first sense event");
    };

    for (const auto& ev : events) {
        std::visit(
            [&](const auto& e) {
                using T = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<T, SenseEvent>) {
                    if (e.values.size() != schema.arity()) {
                        throw ArityMismatch("sense payload has " + std::to_string(e.values.size()) +
                                            " values, schema has " + std::to_string(schema.arity()));
                    }
                    if (cur) out.push_back(cur->finish());
                    cur.emplace();
                    cur->seg.index = out.size();
                    cur->seg.env.values = e.values;
                } else if constexpr (std::is_same_v<T, StatementEvent>) {
                    require_open("statement");
                    cur->seg.prog.insert(e.id);
                } else if constexpr (std::is_same_v<T, MethodEntryEvent>) {
                    require_open("method entry");
                    cur->open.push_back(cur->calls.size());
                    cur->calls.push_back({MethodRecord{e.name, e.args, std::nullopt}});
                } else if constexpr (std::is_same_v<T, MethodExitEvent>) {
                    require_open("method exit");
                    auto it = std::find_if(cur->open.rbegin(), cur->open.rend(),
                                           [&](std::size_t i) { return cur->calls[i].record.name == e.name; });
                    if (it == cur->open.rend()) {
                        throw MalformedStream("exit of '" + e.name + "' without a matching entry");
                    }
                    auto& call = cur->calls[*it];
                    call.record.ret = e.ret;
                    call.closed = true;
                    cur->open.erase(std::next(it).base());
                } else {
                    require_open("act");
                }
            },
            ev);
    }
    if (cur) out.push_back(cur->finish());
    return out;
}

// ---------------------------------------------------------------------------

void validate_traces(const AttributeSchema& schema, const std::vector<Trace>& traces) {
    std::map<std::string, std::size_t> method_arity;
    auto finite = [](double v) { return std::isfinite(v); };
    for (const auto& t : traces) {
        if (t.segments.empty()) throw Error("InvalidTrace", "trace '" + t.trace_id + "' has no segments");
        for (std::size_t i = 0; i < t.segments.size(); ++i) {
            const auto& s = t.segments[i];
            if (s.index != i) {
                throw Error("InvalidTrace", "trace '" + t.trace_id + "' segment indices are not consecutive");
            }
            if (s.env.arity() != schema.arity()) {
                throw ArityMismatch("trace '" + t.trace_id + "' segment " + std::to_string(i) + " env has " +
                                    std::to_string(s.env.arity()) + " values, schema has " +
                                    std::to_string(schema.arity()));
            }
            if (!std::all_of(s.env.values.begin(), s.env.values.end(), finite)) {
                throw Error("InvalidTrace", "non-finite environment value in '" + t.trace_id + "'");
            }
            for (const auto& m : s.methods) {
                auto [it, inserted] = method_arity.emplace(m.name, m.args.size());
                if (!inserted && it->second != m.args.size()) {
                    throw ArityMismatch("method '" + m.name + "' called with inconsistent arity");
                }
                if (!std::all_of(m.args.begin(), m.args.end(), finite) || (m.ret && !std::isfinite(*m.ret))) {
                    throw Error("InvalidTrace", "non-finite value in method '" + m.name + "'");
                }
            }
        }
    }
}

namespace {

json segment_to_json(const Segment& s) {
    json methods = json::array();
    for (const auto& m : s.methods) {
        methods.push_back({{"name", m.name}, {"args", m.args}, {"ret", m.ret ? json(*m.ret) : json(nullptr)}});
    }
    return {{"index", s.index}, {"env", s.env.values}, {"prog", s.prog.ids()}, {"methods", std::move(methods)}};
}

struct LineParser {
    std::size_t line;
    std::size_t dropped = 0;

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(line, what); }

    const json& field(const json& obj, const char* key) const {
        auto it = obj.find(key);
        if (it == obj.end()) fail(std::string("missing field '") + key + "'");
        return *it;
    }

    double number(const json& v) const {
        if (!v.is_number()) fail("expected a number");
        return v.get<double>();
    }

    Segment segment(const json& j, std::size_t arity) {
        if (!j.is_object()) fail("segment is not an object");
        Segment s;
        const auto& idx = field(j, "index");
        if (!idx.is_number_unsigned()) fail("segment index must be a non-negative integer");
        s.index = idx.get<std::size_t>();

        const auto& env = field(j, "env");
        if (!env.is_array()) fail("env is not an array");
        for (const auto& v : env) s.env.values.push_back(number(v));
        if (s.env.arity() != arity) {
            throw ArityMismatch("line " + std::to_string(line) + ": env has " + std::to_string(s.env.arity()) +
                                " values, header declares " + std::to_string(arity));
        }

        const auto& prog = field(j, "prog");
        if (!prog.is_array()) fail("prog is not an array");
        std::vector<std::string> ids;
        for (const auto& v : prog) {
            if (!v.is_string()) fail("statement id must be a string");
            ids.push_back(v.get<std::string>());
        }
        s.prog = ProgContext(std::move(ids));

        const auto& methods = field(j, "methods");
        if (!methods.is_array()) fail("methods is not an array");
        for (const auto& m : methods) {
            MethodRecord rec;
            const auto& name = field(m, "name");
            if (!name.is_string()) fail("method name must be a string");
            rec.name = name.get<std::string>();
            const auto& args = field(m, "args");
            if (!args.is_array()) fail("args is not an array");
            for (const auto& a : args) {
                if (a.is_number()) {
                    rec.args.push_back(a.get<double>());
                } else {
                    ++dropped;
                }
            }
            auto ret = m.find("ret");
            if (ret != m.end() && !ret->is_null()) {
                if (ret->is_number()) {
                    rec.ret = ret->get<double>();
                } else {
                    ++dropped;
                }
            }
            s.methods.push_back(std::move(rec));
        }
        return s;
    }
};

}  // namespace

TraceFile load_traces(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());

    TraceFile file;
    std::string text;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, text)) {
        ++line_no;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        LineParser p{line_no};
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            p.fail(e.what());
        }
        if (!j.is_object()) p.fail("line is not a JSON object");

        if (!have_header) {
            const auto& fmt = p.field(j, "format");
            if (!fmt.is_string() || fmt.get<std::string>() != kTraceFormat) {
                p.fail(std::string("expected format '") + kTraceFormat + "'");
            }
            const auto& attrs = p.field(j, "attributes");
            if (!attrs.is_array()) p.fail("attributes is not an array");
            for (const auto& a : attrs) {
                if (!a.is_string()) p.fail("attribute names must be strings");
                file.schema.names.push_back(a.get<std::string>());
            }
            if (auto u = j.find("units"); u != j.end() && u->is_array()) {
                for (const auto& a : *u) file.schema.units.push_back(a.is_string() ? a.get<std::string>() : "");
            }
            file.schema.validate();
            have_header = true;
            continue;
        }

        if (j.contains("format")) {
            // A second header inside the same file.
            std::vector<std::string> names;
            if (auto a = j.find("attributes"); a != j.end() && a->is_array()) {
                for (const auto& v : *a) names.push_back(v.is_string() ? v.get<std::string>() : "");
            }
            if (names != file.schema.names) {
                throw SchemaConflict("line " + std::to_string(line_no) + ": attribute order differs from header");
            }
            continue;
        }

        Trace t;
        const auto& id = p.field(j, "trace_id");
        if (!id.is_string()) p.fail("trace_id must be a string");
        t.trace_id = id.get<std::string>();
        const auto& label = p.field(j, "label");
        if (!label.is_string()) p.fail("label must be a string");
        try {
            t.label = label_from_string(label.get<std::string>());
        } catch (const Error& e) {
            p.fail(e.what());
        }
        const auto& segs = p.field(j, "segments");
        if (!segs.is_array()) p.fail("segments is not an array");
        if (segs.empty()) p.fail("trace '" + t.trace_id + "' has no segments");
        for (const auto& s : segs) t.segments.push_back(p.segment(s, file.schema.arity()));
        for (std::size_t i = 0; i < t.segments.size(); ++i) {
            if (t.segments[i].index != i) p.fail("segment indices must be consecutive from 0");
        }
        file.dropped_values += p.dropped;
        file.traces.push_back(std::move(t));
    }
    if (!have_header) throw ParseError(line_no == 0 ? 1 : line_no, "missing header line");
    validate_traces(file.schema, file.traces);
    return file;
}

void save_traces(const AttributeSchema& schema, const std::vector<Trace>& traces, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    json header = {{"format", kTraceFormat}, {"attributes", schema.names}};
    if (!schema.units.empty()) header["units"] = schema.units;
    out << header.dump() << '\n';
    for (const auto& t : traces) {
        json segs = json::array();
        for (const auto& s : t.segments) segs.push_back(segment_to_json(s));
        json line = {{"trace_id", t.trace_id}, {"label", to_string(t.label)}, {"segments", std::move(segs)}};
        out << line.dump() << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

TraceFile load_trace_set(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(path)) return load_traces(path);

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .jsonl trace files in " + path.string());

    TraceFile merged;
    for (std::size_t i = 0; i < files.size(); ++i) {
        auto f = load_traces(files[i]);
        if (i == 0) {
            merged.schema = f.schema;
        } else if (!(f.schema == merged.schema)) {
            throw SchemaConflict(files[i].string() + " declares a different attribute order");
        }
        merged.dropped_values += f.dropped_values;
        std::move(f.traces.begin(), f.traces.end(), std::back_inserter(merged.traces));
    }
    return merged;
}

}  // namespace comid
