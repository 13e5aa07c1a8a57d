#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cfdrive/geometry.hpp"
#include "oracles/oracles.hpp"

using namespace cfdrive;

TEST(Boxes, OverlapBasics) {
    const OrientedBox a{{0, 0}, 0, 4, 2};
    EXPECT_TRUE(boxes_overlap(a, {{3, 0}, 0, 4, 2}));
    EXPECT_FALSE(boxes_overlap(a, {{4.5, 0}, 0, 4, 2}));
    // Touching edges count as overlap.
    EXPECT_TRUE(boxes_overlap(a, {{4, 0}, 0, 4, 2}));
    // Rotated 45 degrees, corner pokes into a.
    const double r = std::sqrt(2.0);
    EXPECT_TRUE(boxes_overlap(a, {{2 + r / 2 - 0.01, 0}, std::numbers::pi / 4, 1, 1}));
    EXPECT_FALSE(boxes_overlap(a, {{2 + r / 2 + 0.01, 0}, std::numbers::pi / 4, 1, 1}));
}

TEST(Boxes, CornersCounterClockwiseFromFrontLeft) {
    const auto c = OrientedBox{{1, 1}, 0, 4, 2}.corners();
    EXPECT_DOUBLE_EQ(c[0].x, 3);
    EXPECT_DOUBLE_EQ(c[0].y, 2);
    EXPECT_DOUBLE_EQ(c[2].x, -1);
    EXPECT_DOUBLE_EQ(c[2].y, 0);
}

TEST(Boxes, FuzzAgainstExactOracle) {
    std::mt19937_64 rng(11);
    int checked = 0;
    for (int i = 0; i < 3000; ++i) {
        const OrientedBox a{{oracle::uniform(rng, -3, 3), oracle::uniform(rng, -3, 3)}, oracle::uniform(rng, -4, 4),
                            oracle::uniform(rng, 0.2, 5), oracle::uniform(rng, 0.2, 3)};
        const OrientedBox b{{oracle::uniform(rng, -3, 3), oracle::uniform(rng, -3, 3)}, oracle::uniform(rng, -4, 4),
                            oracle::uniform(rng, 0.2, 5), oracle::uniform(rng, 0.2, 3)};
        const auto qa = oracle::box_corners(a), qb = oracle::box_corners(b);
        if (oracle::quads_margin(qa, qb) < 1e-6) continue;
        ++checked;
        ASSERT_EQ(boxes_overlap(a, b), oracle::quads_overlap(qa, qb)) << "case " << i;
    }
    EXPECT_GT(checked, 2900);
}

TEST(Boxes, RasterOracleAgreesAwayFromThinOverlaps) {
    std::mt19937_64 rng(12);
    const double cell = 0.02;
    for (int i = 0; i < 300; ++i) {
        const OrientedBox a{{oracle::uniform(rng, -2, 2), oracle::uniform(rng, -2, 2)}, oracle::uniform(rng, -4, 4),
                            oracle::uniform(rng, 0.5, 4), oracle::uniform(rng, 0.5, 2)};
        const OrientedBox b{{oracle::uniform(rng, -2, 2), oracle::uniform(rng, -2, 2)}, oracle::uniform(rng, -4, 4),
                            oracle::uniform(rng, 0.5, 4), oracle::uniform(rng, 0.5, 2)};
        const auto qa = oracle::box_corners(a), qb = oracle::box_corners(b);
        const bool exact = oracle::quads_overlap(qa, qb);
        if (exact && oracle::intersection_inradius(qa, qb) < cell) continue;
        ASSERT_EQ(boxes_overlap(a, b), oracle::quads_overlap_raster(qa, qb, cell)) << "case " << i;
    }
}

TEST(Polygon, SquareWithHole) {
    Polygon p{{{{0, 0}, {10, 0}, {10, 10}, {0, 10}}}, {{{4, 4}, {6, 4}, {6, 6}, {4, 6}}}};
    EXPECT_TRUE(point_in_polygon({1, 1}, p));
    EXPECT_FALSE(point_in_polygon({5, 5}, p));
    EXPECT_FALSE(point_in_polygon({11, 5}, p));
    // Boundary points of either ring count as inside.
    EXPECT_TRUE(point_in_polygon({10, 5}, p));
    EXPECT_TRUE(point_in_polygon({4, 5}, p));
}

TEST(Polygon, FuzzAgainstWindingNumber) {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 500; ++i) {
        Polygon poly;
        poly.outer.push_back(oracle::random_star(rng, {0, 0}, 3, 10, 12));
        poly.holes.push_back(oracle::random_star(rng, {0.2, 0.1}, 0.5, 1.5, 6));
        for (int j = 0; j < 20; ++j) {
            const Vec2 p{oracle::uniform(rng, -11, 11), oracle::uniform(rng, -11, 11)};
            if (oracle::boundary_distance(p, poly) < 1e-6) continue;
            ASSERT_EQ(point_in_polygon(p, poly), oracle::point_in_polygon(p, poly));
        }
    }
}

TEST(Polyline, LateralSignAndArclength) {
    const std::vector<Vec2> line{{0, 0}, {10, 0}, {10, 10}};
    auto left = polyline_lateral({5, 2}, line);
    EXPECT_DOUBLE_EQ(left.lateral, 2);
    EXPECT_DOUBLE_EQ(left.arclength, 5);
    auto right = polyline_lateral({12, 5}, line);
    EXPECT_DOUBLE_EQ(right.lateral, -2);
    EXPECT_DOUBLE_EQ(right.arclength, 15);
    EXPECT_NEAR(right.heading, std::numbers::pi / 2, 1e-12);
    EXPECT_THROW((void)polyline_lateral({0, 0}, std::vector<Vec2>{{1, 1}}), std::invalid_argument);
}

TEST(Polyline, LateralMagnitudeMatchesBruteForce) {
    std::mt19937_64 rng(14);
    for (int i = 0; i < 500; ++i) {
        std::vector<Vec2> line;
        for (int k = 0; k < 5; ++k) line.push_back({k * 3.0 + oracle::uniform(rng, 0, 1), oracle::uniform(rng, -3, 3)});
        const Vec2 p{oracle::uniform(rng, -2, 15), oracle::uniform(rng, -6, 6)};
        double best = 1e300;
        for (std::size_t k = 0; k + 1 < line.size(); ++k)
            best = std::min(best, oracle::segment_distance(p, line[k], line[k + 1]));
        EXPECT_NEAR(std::abs(polyline_lateral(p, line).lateral), best, 1e-9);
    }
}

TEST(Polyline, PointAtArclength) {
    const std::vector<Vec2> line{{0, 0}, {3, 0}, {3, 4}};
    EXPECT_DOUBLE_EQ(polyline_length(line), 7);
    const Vec2 p = polyline_point_at(line, 5);
    EXPECT_DOUBLE_EQ(p.x, 3);
    EXPECT_DOUBLE_EQ(p.y, 2);
}

TEST(Segments, Intersections) {
    auto hit = segments_intersect({{0, 0}, {2, 2}}, {{0, 2}, {2, 0}});
    ASSERT_TRUE(hit);
    EXPECT_NEAR(hit->x, 1, 1e-12);
    EXPECT_FALSE(segments_intersect({{0, 0}, {1, 0}}, {{0, 1}, {1, 1}}));
    // Collinear overlap returns the first shared point along the first segment.
    auto col = segments_intersect({{0, 0}, {4, 0}}, {{2, 0}, {6, 0}});
    ASSERT_TRUE(col);
    EXPECT_NEAR(col->x, 2, 1e-12);
    // Endpoint touch.
    EXPECT_TRUE(segments_intersect({{0, 0}, {1, 0}}, {{1, 0}, {1, 5}}));
}

TEST(Angles, NormalizeRange) {
    EXPECT_NEAR(normalize_angle(3 * std::numbers::pi), std::numbers::pi, 1e-12);
    EXPECT_NEAR(normalize_angle(-std::numbers::pi), std::numbers::pi, 1e-12);
    EXPECT_NEAR(normalize_angle(0.5), 0.5, 1e-15);
}
