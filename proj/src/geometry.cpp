#include "cfdrive/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace cfdrive {

std::array<Vec2, 4> OrientedBox::corners() const noexcept {
    const Vec2 fwd{std::cos(yaw), std::sin(yaw)};
    const Vec2 left{-fwd.y, fwd.x};
    const Vec2 hl = 0.5 * length * fwd;
    const Vec2 hw = 0.5 * width * left;
    return {center + hl + hw, center - hl + hw, center - hl - hw, center + hl - hw};
}

namespace {

// Half-extent of a box projected onto a unit axis.
double projected_radius(const OrientedBox& b, Vec2 axis) noexcept {
    const Vec2 fwd{std::cos(b.yaw), std::sin(b.yaw)};
    const Vec2 left{-fwd.y, fwd.x};
    return 0.5 * b.length * std::abs(dot(fwd, axis)) + 0.5 * b.width * std::abs(dot(left, axis));
}

}  // namespace

bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) noexcept {
    const Vec2 d = b.center - a.center;
    const std::array<Vec2, 4> axes{
        Vec2{std::cos(a.yaw), std::sin(a.yaw)}, Vec2{-std::sin(a.yaw), std::cos(a.yaw)},
        Vec2{std::cos(b.yaw), std::sin(b.yaw)}, Vec2{-std::sin(b.yaw), std::cos(b.yaw)}};
    for (const Vec2& axis : axes) {
        const double gap =
            std::abs(dot(d, axis)) - projected_radius(a, axis) - projected_radius(b, axis);
        if (gap > kGeomEps) return false;
    }
    return true;
}

double point_segment_distance(Vec2 p, const Segment& s) noexcept {
    const Vec2 ab = s.b - s.a;
    const double len2 = dot(ab, ab);
    if (len2 == 0.0) return distance(p, s.a);
    const double u = std::clamp(dot(p - s.a, ab) / len2, 0.0, 1.0);
    return distance(p, s.a + u * ab);
}

bool point_on_ring_boundary(Vec2 p, std::span<const Vec2> ring) noexcept {
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (point_segment_distance(p, {ring[i], ring[(i + 1) % n]}) <= kGeomEps) return true;
    }
    return false;
}

bool point_in_ring(Vec2 p, std::span<const Vec2> ring) noexcept {
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = ring[i];
        const Vec2& b = ring[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

bool point_in_polygon(Vec2 p, const Polygon& poly) noexcept {
    bool inside = false;
    auto visit = [&](const std::vector<Ring>& rings) {
        for (const Ring& r : rings) {
            if (point_on_ring_boundary(p, r)) return true;
            if (point_in_ring(p, r)) inside = !inside;
        }
        return false;
    };
    if (visit(poly.outer) || visit(poly.holes)) return true;
    return inside;
}

LateralProjection polyline_lateral(Vec2 p, std::span<const Vec2> line) {
    if (line.size() < 2) throw std::invalid_argument("polyline_lateral: need at least 2 points");
    LateralProjection best;
    double best_dist = std::numeric_limits<double>::infinity();
    double walked = 0.0;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const Vec2 a = line[i];
        const Vec2 ab = line[i + 1] - a;
        const double len = norm(ab);
        const double u = len > 0.0 ? std::clamp(dot(p - a, ab) / (len * len), 0.0, 1.0) : 0.0;
        const Vec2 foot = a + u * ab;
        const double dist = distance(p, foot);
        if (dist < best_dist) {
            best_dist = dist;
            const double side = len > 0.0 ? cross(ab, p - a) : 0.0;
            best.lateral = side > 0.0 ? dist : (side < 0.0 ? -dist : 0.0);
            best.arclength = walked + u * len;
            best.heading = std::atan2(ab.y, ab.x);
            best.foot = foot;
            best.segment = i;
        }
        walked += len;
    }
    return best;
}

std::optional<Vec2> segments_intersect(const Segment& s1, const Segment& s2) noexcept {
    const Vec2 r = s1.b - s1.a;
    const Vec2 s = s2.b - s2.a;
    const Vec2 qp = s2.a - s1.a;
    const double denom = cross(r, s);
    const double scale = norm(r) * norm(s);

    if (scale > 0.0 && std::abs(denom) > kGeomEps * scale) {
        const double t = cross(qp, s) / denom;
        const double u = cross(qp, r) / denom;
        constexpr double tol = kGeomEps;
        if (t < -tol || t > 1.0 + tol || u < -tol || u > 1.0 + tol) return std::nullopt;
        return s1.a + std::clamp(t, 0.0, 1.0) * r;
    }

    // Parallel: only collinear segments can share points.
    if (std::abs(cross(qp, r)) > kGeomEps * std::max(norm(qp) * norm(r), 1e-300)) {
        return std::nullopt;
    }
    const double rr = dot(r, r);
    if (rr == 0.0) {
        // s1 is a point.
        if (point_segment_distance(s1.a, s2) <= kGeomEps) return s1.a;
        return std::nullopt;
    }
    double t0 = dot(s2.a - s1.a, r) / rr;
    double t1 = dot(s2.b - s1.a, r) / rr;
    if (t0 > t1) std::swap(t0, t1);
    const double lo = std::max(0.0, t0);
    const double hi = std::min(1.0, t1);
    if (lo > hi + kGeomEps) return std::nullopt;
    return s1.a + lo * r;
}

double polyline_length(std::span<const Vec2> line) noexcept {
    double len = 0.0;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) len += distance(line[i], line[i + 1]);
    return len;
}

Vec2 polyline_point_at(std::span<const Vec2> line, double s) noexcept {
    if (line.empty()) return {};
    if (s <= 0.0) return line.front();
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const double len = distance(line[i], line[i + 1]);
        if (s <= len && len > 0.0) return line[i] + (s / len) * (line[i + 1] - line[i]);
        s -= len;
    }
    return line.back();
}

}  // namespace cfdrive
