#pragma once

#include <vector>

#include "comid/grouping.hpp"
#include "comid/invariants.hpp"
#include "comid/trace.hpp"

namespace comid {

/// clustered: families apply only within their group's contexts.
/// global: one context-free group; every family applies everywhere.
enum class ContextMode { clustered, global };

/// Everything learned from safe traces.
struct Model {
    AttributeSchema schema;
    ContextMode mode = ContextMode::clustered;
    ClusterModel clusters;
    std::vector<GroupModel> groups;
    std::vector<InvariantFamily> families;

    std::size_t invariant_count() const;
};

}  // namespace comid
