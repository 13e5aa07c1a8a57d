#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace cfdrive {

/// Tolerance for degenerate predicates (touching, collinearity).
inline constexpr double kGeomEps = 1e-9;

struct Vec2 {
    double x{0};
    double y{0};

    friend Vec2 operator+(Vec2 a, Vec2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) noexcept { return {s * a.x, s * a.y}; }
    friend Vec2 operator*(Vec2 a, double s) noexcept { return {s * a.x, s * a.y}; }
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

[[nodiscard]] inline double dot(Vec2 a, Vec2 b) noexcept { return a.x * b.x + a.y * b.y; }
[[nodiscard]] inline double cross(Vec2 a, Vec2 b) noexcept { return a.x * b.y - a.y * b.x; }
[[nodiscard]] inline double norm(Vec2 a) noexcept { return std::hypot(a.x, a.y); }
[[nodiscard]] inline double distance(Vec2 a, Vec2 b) noexcept { return norm(a - b); }

/// Wraps an angle into (-pi, pi].
[[nodiscard]] inline double normalize_angle(double a) noexcept {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

struct Segment {
    Vec2 a;
    Vec2 b;
};

struct OrientedBox {
    Vec2 center;
    double yaw{0};
    double length{0};  // along heading
    double width{0};

    /// Corners in counter-clockwise order starting front-left.
    [[nodiscard]] std::array<Vec2, 4> corners() const noexcept;
    [[nodiscard]] double circumradius() const noexcept {
        return 0.5 * std::hypot(length, width);
    }
};

using Ring = std::vector<Vec2>;

/// Outer rings plus holes. Rings are stored open (last vertex != first).
struct Polygon {
    std::vector<Ring> outer;
    std::vector<Ring> holes;
};

/// Closed-set intersection test via separating axes; touching counts as overlap.
[[nodiscard]] bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) noexcept;

/// Even-odd containment over every ring. Points on any ring boundary count as inside.
[[nodiscard]] bool point_in_polygon(Vec2 p, const Polygon& poly) noexcept;
[[nodiscard]] bool point_in_ring(Vec2 p, std::span<const Vec2> ring) noexcept;
[[nodiscard]] bool point_on_ring_boundary(Vec2 p, std::span<const Vec2> ring) noexcept;

struct LateralProjection {
    double lateral{0};    // signed, positive when left of travel direction
    double arclength{0};  // along the polyline to the foot point
    double heading{0};    // direction of the segment holding the foot point
    Vec2 foot;
    std::size_t segment{0};
};

/// Projects onto the nearest segment (first one wins ties). Requires >= 2 points.
[[nodiscard]] LateralProjection polyline_lateral(Vec2 p, std::span<const Vec2> line);

/// Proper and improper intersections. A collinear overlap reports the shared point
/// closest to `s1.a`.
[[nodiscard]] std::optional<Vec2> segments_intersect(const Segment& s1, const Segment& s2) noexcept;

[[nodiscard]] double polyline_length(std::span<const Vec2> line) noexcept;

/// Point at arclength `s` (clamped to [0, length]).
[[nodiscard]] Vec2 polyline_point_at(std::span<const Vec2> line, double s) noexcept;

[[nodiscard]] double point_segment_distance(Vec2 p, const Segment& s) noexcept;

}  // namespace cfdrive
