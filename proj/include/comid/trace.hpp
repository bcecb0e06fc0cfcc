#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace comid {

/// Ordered environmental attribute names, fixed for a whole dataset.
struct AttributeSchema {
    std::vector<std::string> names;
    std::vector<std::string> units;  // free text, may be empty

    std::size_t arity() const noexcept { return names.size(); }
    bool operator==(const AttributeSchema& other) const { return names == other.names; }

    /// Throws SchemaConflict on duplicate names.
    void validate() const;
};

/// Sensed attribute values at the start of an iteration.
struct EnvContext {
    std::vector<double> values;

    std::size_t arity() const noexcept { return values.size(); }
    bool operator==(const EnvContext&) const = default;
};

/// Statement ids executed in one iteration. Kept sorted and unique so set
/// operations are linear merges.
class ProgContext {
public:
    ProgContext() = default;
    explicit ProgContext(std::vector<std::string> ids);

    void insert(const std::string& id);
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    bool contains(const std::string& id) const;

    bool operator==(const ProgContext&) const = default;

private:
    std::vector<std::string> ids_;
};

struct MethodRecord {
    std::string name;
    std::vector<double> args;
    std::optional<double> ret;

    bool operator==(const MethodRecord&) const = default;
};

struct Segment {
    std::size_t index = 0;
    ProgContext prog;
    EnvContext env;
    std::vector<MethodRecord> methods;

    bool operator==(const Segment&) const = default;
};

enum class Label { safe, unsafe, unlabeled };

const char* to_string(Label label) noexcept;
Label label_from_string(const std::string& s);

struct Trace {
    std::string trace_id;
    Label label = Label::unlabeled;
    std::vector<Segment> segments;

    bool operator==(const Trace&) const = default;
};

/// Identifies a segment across a corpus.
struct SegmentRef {
    std::string trace_id;
    std::size_t index = 0;

    auto operator<=>(const SegmentRef&) const = default;
};

// ---------------------------------------------------------------------------
// Raw event stream (instrumentation stand-in)

struct SenseEvent {
    std::vector<double> values;
};
struct StatementEvent {
    std::string id;
};
struct MethodEntryEvent {
    std::string name;
    std::vector<double> args;
};
struct MethodExitEvent {
    std::string name;
    std::optional<double> ret;
};
struct ActEvent {};

using RawEvent = std::variant<SenseEvent, StatementEvent, MethodEntryEvent, MethodExitEvent, ActEvent>;

/// Splits a chronological event stream into one segment per sense->act cycle.
/// A segment opens at a sense event and runs until the next sense; a trailing
/// cycle without an act is kept as-is. Method exits are matched to the most
/// recent open entry of the same name; records keep entry order, and entries
/// never closed inside their span are not recorded.
///
/// Throws MalformedStream (statement/act/method before the first sense, or an
/// exit without entry) and ArityMismatch.
std::vector<Segment> segment_events(const std::vector<RawEvent>& events, const AttributeSchema& schema);

// ---------------------------------------------------------------------------
// Trace files: JSON-Lines, a header line then one trace per line.

inline constexpr const char* kTraceFormat = "comid-trace/1";

struct TraceFile {
    AttributeSchema schema;
    std::vector<Trace> traces;
    /// Non-numeric payload values skipped while reading.
    std::size_t dropped_values = 0;
};

TraceFile load_traces(const std::filesystem::path& path);
void save_traces(const AttributeSchema& schema, const std::vector<Trace>& traces, const std::filesystem::path& path);

/// Loads one file, or every `*.jsonl` in a directory (sorted by filename).
/// All files must share a schema.
TraceFile load_trace_set(const std::filesystem::path& path);

/// Throws ArityMismatch / Error on invariant violations (empty trace,
/// non-consecutive indices, non-finite numbers, inconsistent method arity).
void validate_traces(const AttributeSchema& schema, const std::vector<Trace>& traces);

}  // namespace comid
