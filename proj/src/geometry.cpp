#include "comid/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace comid {

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

std::vector<Point2> convex_hull(std::span<const Point2> points) {
    std::vector<Point2> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;

    // Andrew's monotone chain.
    std::vector<Point2> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

bool in_convex_polygon(const Point2& p, std::span<const Point2> hull, double tol) {
    const std::size_t n = hull.size();
    if (n == 0) return false;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % n];
        const double edge = std::hypot(b.x - a.x, b.y - a.y);
        const double off = std::hypot(p.x - a.x, p.y - a.y);
        if (cross(a, b, p) < -tol * std::max(1.0, edge * off)) return false;
    }
    return true;
}

}  // namespace comid
