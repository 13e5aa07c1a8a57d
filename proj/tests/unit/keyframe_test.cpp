#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <set>

#include "cfdrive/keyframe.hpp"
#include "oracles/oracles.hpp"

using namespace cfdrive;

namespace {

struct Blobs {
    std::vector<std::vector<double>> points;
    std::vector<std::size_t> labels;
};

Blobs three_blobs(std::uint64_t seed, std::size_t per_blob = 50) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    const std::vector<std::vector<double>> centers{{0, 0}, {10, 0}, {5, 8.660254037844386}};
    Blobs b;
    for (std::size_t c = 0; c < centers.size(); ++c) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            b.points.push_back({centers[c][0] + noise(rng), centers[c][1] + noise(rng)});
            b.labels.push_back(c);
        }
    }
    return b;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("cfdrive_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST(KMeans, IdenticalPointsOneCluster) {
    const std::vector<std::vector<double>> pts(7, {1.5, -2.0, 3.0});
    const KMeansResult r = kmeans(pts, {1, 0});
    EXPECT_EQ(r.centroids[0], pts[0]);
    EXPECT_DOUBLE_EQ(r.inertia, 0.0);
}

TEST(KMeans, RecoversThreeBlobs) {
    const Blobs b = three_blobs(1);
    const KMeansResult r = kmeans(b.points, {3, 9});
    EXPECT_GT(oracle::adjusted_rand_index(r.assignments, b.labels), 0.99);
}

TEST(KMeans, SameSeedIsBitIdentical) {
    const Blobs b = three_blobs(2);
    const KMeansResult a = kmeans(b.points, {4, 77});
    const KMeansResult c = kmeans(b.points, {4, 77});
    EXPECT_EQ(a.assignments, c.assignments);
    EXPECT_EQ(a.centroids, c.centroids);
    EXPECT_EQ(a.inertia, c.inertia);
}

TEST(KMeans, InertiaNonIncreasingAndFixedPoint) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::vector<double>> pts;
        for (int i = 0; i < 60; ++i) pts.push_back({oracle::uniform(rng, -5, 5), oracle::uniform(rng, -5, 5), oracle::uniform(rng, -5, 5)});
        const KMeansResult r = kmeans(pts, {5, static_cast<std::uint64_t>(trial), 300, 0.0});
        for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
            EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] * (1 + 1e-12));
        }
        // With zero tolerance Lloyd runs to convergence: every point is nearest its own centroid.
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double own = squared_distance(pts[i], r.centroids[r.assignments[i]]);
            for (const auto& c : r.centroids) EXPECT_LE(own, squared_distance(pts[i], c) + 1e-9);
        }
    }
}

TEST(KMeans, Errors) {
    EXPECT_THROW((void)kmeans({}, {1, 0}), std::invalid_argument);
    EXPECT_THROW((void)kmeans({{1.0}}, {2, 0}), std::invalid_argument);
    EXPECT_THROW((void)kmeans({{1.0}, {2.0}}, {0, 0}), std::invalid_argument);
    EXPECT_THROW((void)kmeans({{1.0}, {std::nan("")}}, {1, 0}), std::invalid_argument);
    EXPECT_THROW((void)kmeans({{1.0, 2.0}, {2.0}}, {1, 0}), std::invalid_argument);
}

TEST(SelectSemantic, FractionOneReturnsEverySample) {
    std::vector<EmbeddingRecord> recs;
    for (int i = 0; i < 9; ++i) recs.push_back({"s" + std::to_string(i), {float(i), float(i * i % 5)}});
    std::vector<std::string> ids = select_semantic(recs, 1.0, 0);
    std::sort(ids.begin(), ids.end());
    std::vector<std::string> expected;
    for (const auto& r : recs) expected.push_back(r.sample_id);
    EXPECT_EQ(ids, expected);
}

TEST(SelectSemantic, TwentyPercentOfTenGivesTwoMembers) {
    std::vector<EmbeddingRecord> recs;
    std::mt19937_64 rng(4);
    for (int i = 0; i < 10; ++i) {
        const float base = i < 5 ? 0.0f : 20.0f;
        recs.push_back({"f" + std::to_string(i), {base + float(oracle::uniform(rng, -1, 1)), float(oracle::uniform(rng, -1, 1))}});
    }
    const std::vector<std::string> ids = select_semantic(recs, 0.2, 0);
    ASSERT_EQ(ids.size(), 2u);
    std::set<bool> sides;
    for (const auto& id : ids) sides.insert(std::stoi(id.substr(1)) < 5);
    EXPECT_EQ(sides.size(), 2u);
}

TEST(SelectSemantic, ExemplarIsAMemberOfItsCluster) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 5 + rng() % 40;
        std::vector<std::vector<double>> pts;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < n; ++i) {
            pts.push_back({oracle::uniform(rng, -3, 3), oracle::uniform(rng, -3, 3)});
            ids.push_back("id" + std::to_string(i));
        }
        const std::size_t k = 1 + rng() % n;
        const KMeansResult km = kmeans(pts, {k, static_cast<std::uint64_t>(trial)});
        const std::vector<std::size_t> ex = cluster_exemplars(pts, ids, km);
        std::set<std::size_t> clusters_seen;
        for (std::size_t e : ex) {
            const std::size_t c = km.assignments[e];
            EXPECT_TRUE(clusters_seen.insert(c).second) << "one exemplar per cluster";
            // Nearest member of that cluster to its centroid.
            for (std::size_t i = 0; i < n; ++i) {
                if (km.assignments[i] != c) continue;
                EXPECT_LE(squared_distance(pts[e], km.centroids[c]), squared_distance(pts[i], km.centroids[c]));
            }
        }
    }
}

TEST(SelectDynamics, KEqualsNIsIdentity) {
    std::vector<std::pair<std::string, Trajectory>> trajs;
    for (int i = 0; i < 6; ++i) {
        std::vector<Vec2> pts;
        for (int j = 1; j <= 6; ++j) pts.push_back({double(i + 1) * j, double(i) * 0.1 * j});
        trajs.emplace_back("t" + std::to_string(i), Trajectory::from_points(pts));
    }
    std::vector<std::string> ids = select_dynamics(trajs, trajs.size(), 0);
    EXPECT_EQ(ids, (std::vector<std::string>{"t0", "t1", "t2", "t3", "t4", "t5"}));
}

TEST(SelectDynamics, StraightVersusUTurn) {
    std::vector<std::pair<std::string, Trajectory>> trajs;
    std::mt19937_64 rng(6);
    for (int i = 0; i < 8; ++i) {
        std::vector<Vec2> s, u;
        for (int j = 1; j <= 6; ++j) {
            const double t = 0.5 * j;
            s.push_back({4.0 * t + oracle::uniform(rng, -0.1, 0.1), oracle::uniform(rng, -0.1, 0.1)});
            const double a = M_PI * t / 3.0;
            u.push_back({4.0 * std::sin(a), 4.0 * (1 - std::cos(a))});
        }
        trajs.emplace_back("straight" + std::to_string(i), Trajectory::from_points(s));
        trajs.emplace_back("uturn" + std::to_string(i), Trajectory::from_points(u));
    }
    const std::vector<std::string> ids = select_dynamics(trajs, 2, 1);
    ASSERT_EQ(ids.size(), 2u);
    EXPECT_NE(ids[0].substr(0, 5), ids[1].substr(0, 5));
}

TEST(SelectDynamics, DefaultClusterCount) { EXPECT_EQ(kDefaultDynamicsClusters, 200u); }

TEST(Embeddings, BinaryAndJsonRoundTrip) {
    const auto dir = temp_dir("emb");
    const std::vector<EmbeddingRecord> recs{{"a", {1.0f, -2.5f, 0.125f}}, {"bb", {0.0f, 3.0f, -1.0f}}};
    for (const char* name : {"e.bin", "e.json"}) {
        save_embeddings(recs, dir / name);
        const auto back = load_embeddings(dir / name);
        ASSERT_EQ(back.size(), 2u);
        EXPECT_EQ(back[1].sample_id, "bb");
        EXPECT_EQ(back[0].vector, recs[0].vector);
    }
    std::filesystem::remove_all(dir);
}
