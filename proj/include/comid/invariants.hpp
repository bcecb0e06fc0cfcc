#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comid/geometry.hpp"
#include "comid/grouping.hpp"
#include "comid/trace.hpp"

namespace comid {

/// Template catalog. Unary: UPPER x<=C, LOWER x>=C, RANGE C1<=x<=C2,
/// CONST x==C. Binary over two slots of one method record: PAIR_LE x<=y,
/// LINEAR y==a*x+b, POLY2 (x,y) inside a convex polygon.
enum class TemplateId { upper, lower, range, constant, pair_le, linear, poly2 };

inline constexpr std::array<TemplateId, 7> kAllTemplates = {
    TemplateId::upper,   TemplateId::lower,  TemplateId::range, TemplateId::constant,
    TemplateId::pair_le, TemplateId::linear, TemplateId::poly2};

const char* to_string(TemplateId t) noexcept;
TemplateId template_from_string(const std::string& s);
std::size_t template_arity(TemplateId t) noexcept;

enum class ProgramPoint { entry, exit };

/// A numeric variable observed at a method boundary: an argument at entry or
/// the return value at exit.
struct VariableSlot {
    static constexpr int kReturn = -1;

    std::string method;
    int position = 0;  // argument index, or kReturn
    ProgramPoint point = ProgramPoint::entry;

    static VariableSlot arg(std::string method, int index) { return {std::move(method), index, ProgramPoint::entry}; }
    static VariableSlot ret(std::string method) { return {std::move(method), kReturn, ProgramPoint::exit}; }

    bool is_return() const noexcept { return position == kReturn; }
    /// Value of this slot in a record, if the record has it.
    std::optional<double> read(const MethodRecord& rec) const;

    bool operator==(const VariableSlot&) const = default;
    /// Canonical order: method, then arguments by index, then return.
    bool operator<(const VariableSlot& other) const;
    std::string to_string() const;
};

struct InvariantParams {
    std::vector<double> constants;  // C | C1,C2 | a,b
    std::vector<Point2> hull;       // POLY2 only, counterclockwise

    bool operator==(const InvariantParams&) const = default;
};

struct Invariant {
    TemplateId tmpl = TemplateId::upper;
    std::vector<VariableSlot> slots;
    InvariantParams params;
    double p = 1.0;

    std::string to_string() const;
};

/// Fits a template to samples (each of the template's arity). Returns nullopt
/// when the template does not hold or is degenerate. Throws ArityMismatch.
std::optional<InvariantParams> infer_template(TemplateId tmpl, std::span<const std::vector<double>> samples);

/// Evaluates a fitted template on one sample.
bool holds(TemplateId tmpl, const InvariantParams& params, std::span<const double> sample);

enum class CheckResult { satisfied, violated, inapplicable };

/// Checks every record of the invariant's method that carries its slots.
CheckResult check_invariant(const Invariant& inv, const Segment& segment);

struct InvariantFamily {
    std::size_t family_id = 0;
    std::size_t group_id = 0;
    TemplateId tmpl = TemplateId::upper;
    std::vector<VariableSlot> slots;
    std::vector<Invariant> members;  // ascending p; the last is the principal (p = 1)

    const Invariant& principal() const { return members.back(); }
};

inline constexpr std::array<double, 4> kSubsetRatios = {0.2, 0.4, 0.6, 0.8};

struct InferenceConfig {
    std::size_t min_group_size = 5;
    std::vector<double> subset_ratios{kSubsetRatios.begin(), kSubsetRatios.end()};
    std::vector<TemplateId> templates{kAllTemplates.begin(), kAllTemplates.end()};
    /// POLY2 hulls with more vertices than this are rejected.
    std::size_t max_hull_vertices = 12;
    std::uint64_t rng_seed = 1;
};

/// Subset size for a ratio: max(1, round(p * n)).
std::size_t subset_size(double ratio, std::size_t n);

/// Independent uniform subsets per ratio, plus ratio 1.0 -> all members.
std::map<double, std::vector<SegmentRef>> sample_subsets(const GroupModel& group, std::uint64_t seed,
                                                         std::span<const double> ratios = kSubsetRatios);

/// Lookup from a segment reference to its data.
class SegmentIndex {
public:
    SegmentIndex() = default;
    explicit SegmentIndex(std::span<const TracedSegment> segments);
    const Segment& at(const SegmentRef& ref) const;

private:
    std::map<SegmentRef, const Segment*> map_;
};

/// Infers one family per (group, slot or slot pair, template) whose principal
/// succeeds. Output is sorted by (group, slots, template) and numbered.
std::vector<InvariantFamily> build_families(std::span<const GroupModel> groups, const SegmentIndex& index,
                                            const InferenceConfig& cfg);

}  // namespace comid
