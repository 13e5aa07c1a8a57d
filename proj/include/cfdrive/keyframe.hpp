#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfdrive/trajectory.hpp"

namespace cfdrive {

struct KMeansOptions {
    std::size_t k{1};
    std::uint64_t seed{0};
    std::size_t max_iter{300};
    double tol{1e-4};  // relative centroid shift
};

struct KMeansResult {
    std::vector<std::vector<double>> centroids;
    std::vector<std::size_t> assignments;
    double inertia{0};
    std::vector<double> inertia_history;  // one entry per assignment step
    std::size_t iterations{0};
};

/// k-means++ seeding followed by Lloyd iterations. Deterministic for a fixed seed.
/// Empty clusters are reseeded to the point farthest from its centroid.
/// Throws std::invalid_argument on empty input, k == 0, k > n, ragged or non-finite data.
[[nodiscard]] KMeansResult kmeans(const std::vector<std::vector<double>>& points, const KMeansOptions& opts);

/// Squared Euclidean distance.
[[nodiscard]] double squared_distance(const std::vector<double>& a, const std::vector<double>& b) noexcept;

struct EmbeddingRecord {
    std::string sample_id;
    std::vector<float> vector;
};

/// Index of the member nearest each centroid (ties: smallest id). Empty clusters are skipped.
[[nodiscard]] std::vector<std::size_t> cluster_exemplars(const std::vector<std::vector<double>>& points,
                                                         const std::vector<std::string>& ids,
                                                         const KMeansResult& km);

/// k = ceil(fraction * n) clusters over the embeddings; one exemplar id per cluster, in input order.
[[nodiscard]] std::vector<std::string> select_semantic(const std::vector<EmbeddingRecord>& records,
                                                       double fraction, std::uint64_t seed);

inline constexpr std::size_t kDefaultDynamicsClusters = 200;

/// One exemplar per trajectory-feature cluster, in input order.
[[nodiscard]] std::vector<std::string> select_dynamics(
    const std::vector<std::pair<std::string, Trajectory>>& trajs, std::size_t k = kDefaultDynamicsClusters,
    std::uint64_t seed = 0);

/// JSON ("omnidrive_embeddings_v1") when the extension is .json, otherwise the binary layout:
/// "CFEMB001", u32 dim, u64 count, then per record u32 id length, id bytes, dim x f32 (little endian).
[[nodiscard]] std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::vector<EmbeddingRecord>& records, const std::filesystem::path& path);

}  // namespace cfdrive
