#pragma once

#include <span>
#include <vector>

namespace comid {

struct Point2 {
    double x = 0;
    double y = 0;

    bool operator==(const Point2&) const = default;
};

/// Convex hull in counterclockwise order starting at the lowest-leftmost
/// point. Collinear boundary points are dropped.
std::vector<Point2> convex_hull(std::span<const Point2> points);

/// Boundary counts as inside; `tol` is relative to edge and offset lengths.
bool in_convex_polygon(const Point2& p, std::span<const Point2> hull, double tol = 1e-9);

}  // namespace comid
