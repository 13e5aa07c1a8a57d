#include "cfdrive/keyframe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cfdrive/error.hpp"

namespace cfdrive {

namespace {

// Portable uniform [0, 1) from the raw engine output (distribution objects are
// implementation-defined across standard libraries).
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t nearest(const std::vector<double>& p, const std::vector<std::vector<double>>& centroids,
                    double* dist_out) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(p, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    if (dist_out) *dist_out = best_d;
    return best;
}

std::vector<std::vector<double>> seed_plus_plus(const std::vector<std::vector<double>>& pts, std::size_t k,
                                                std::mt19937_64& rng) {
    const std::size_t n = pts.size();
    std::vector<std::vector<double>> centers;
    std::vector<bool> chosen(n, false);
    std::size_t first = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
    centers.push_back(pts[first]);
    chosen[first] = true;
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(pts[i], centers[0]);

    while (centers.size() < k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = n;
        if (total > 0.0) {
            const double target = uniform01(rng) * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (d2[i] > 0.0 && acc > target) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) {
                // Rounding left target past the last positive weight.
                for (std::size_t i = n; i-- > 0;) {
                    if (d2[i] > 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
        } else {
            // All remaining points coincide with a center; pick uniformly among unchosen ones.
            std::vector<std::size_t> pool;
            for (std::size_t i = 0; i < n; ++i) {
                if (!chosen[i]) pool.push_back(i);
            }
            pick = pool[std::min(pool.size() - 1,
                                 static_cast<std::size_t>(uniform01(rng) * static_cast<double>(pool.size())))];
        }
        chosen[pick] = true;
        centers.push_back(pts[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(pts[i], centers.back()));
    }
    return centers;
}

}  // namespace

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& pts, const KMeansOptions& opts) {
    const std::size_t n = pts.size();
    if (n == 0) throw std::invalid_argument("kmeans: empty input");
    if (opts.k == 0) throw std::invalid_argument("kmeans: k must be >= 1");
    if (opts.k > n) {
        throw std::invalid_argument("kmeans: k (" + std::to_string(opts.k) + ") exceeds sample count (" +
                                    std::to_string(n) + ")");
    }
    const std::size_t dim = pts[0].size();
    for (std::size_t i = 0; i < n; ++i) {
        if (pts[i].size() != dim) throw std::invalid_argument("kmeans: ragged input at row " + std::to_string(i));
        for (double v : pts[i]) {
            if (!std::isfinite(v)) throw std::invalid_argument("kmeans: non-finite entry at row " + std::to_string(i));
        }
    }

    std::mt19937_64 rng(opts.seed);
    KMeansResult res;
    res.centroids = seed_plus_plus(pts, opts.k, rng);
    res.assignments.assign(n, 0);
    std::vector<double> dist(n, 0.0);

    auto assign = [&]() {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = nearest(pts[i], res.centroids, &dist[i]);
            changed = changed || c != res.assignments[i];
            res.assignments[i] = c;
            inertia += dist[i];
        }
        res.inertia = inertia;
        res.inertia_history.push_back(inertia);
        return changed;
    };

    assign();
    for (res.iterations = 1; res.iterations <= opts.max_iter; ++res.iterations) {
        // Update step.
        std::vector<std::vector<double>> sums(opts.k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(opts.k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[res.assignments[i]];
            for (std::size_t d = 0; d < dim; ++d) s[d] += pts[i][d];
            ++counts[res.assignments[i]];
        }
        double shift2 = 0.0;
        double scale2 = 0.0;
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < opts.k; ++c) {
            std::vector<double> next(dim, 0.0);
            if (counts[c] > 0) {
                for (std::size_t d = 0; d < dim; ++d) next[d] = sums[c][d] / static_cast<double>(counts[c]);
            } else {
                // Reseed to the farthest point not already used for reseeding (lowest index on ties).
                std::size_t far = n;
                for (std::size_t i = 0; i < n; ++i) {
                    if (!taken[i] && (far == n || dist[i] > dist[far])) far = i;
                }
                taken[far] = true;
                dist[far] = 0.0;
                next = pts[far];
            }
            shift2 += squared_distance(next, res.centroids[c]);
            scale2 += std::inner_product(next.begin(), next.end(), next.begin(), 0.0);
            res.centroids[c] = std::move(next);
        }
        const bool changed = assign();
        if (!changed) break;
        if (std::sqrt(shift2) <= opts.tol * std::max(1.0, std::sqrt(scale2))) break;
    }
    res.iterations = std::min(res.iterations, opts.max_iter);
    return res;
}

std::vector<std::size_t> cluster_exemplars(const std::vector<std::vector<double>>& pts,
                                           const std::vector<std::string>& ids, const KMeansResult& km) {
    const std::size_t k = km.centroids.size();
    std::vector<std::size_t> best(k, pts.size());
    std::vector<double> best_d(k, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const std::size_t c = km.assignments[i];
        const double d = squared_distance(pts[i], km.centroids[c]);
        if (d < best_d[c] || (d == best_d[c] && best[c] < pts.size() && ids[i] < ids[best[c]])) {
            best_d[c] = d;
            best[c] = i;
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < k; ++c) {
        if (best[c] < pts.size()) out.push_back(best[c]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

std::vector<std::string> select_by_clusters(const std::vector<std::vector<double>>& pts,
                                            const std::vector<std::string>& ids, std::size_t k,
                                            std::uint64_t seed) {
    if (pts.empty()) throw std::invalid_argument("selection: empty input");
    if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
        throw std::invalid_argument("selection: duplicate sample ids");
    }
    if (k == pts.size()) return ids;  // every sample is its own cluster
    KMeansOptions opts;
    opts.k = k;
    opts.seed = seed;
    const KMeansResult km = kmeans(pts, opts);
    std::vector<std::string> out;
    for (std::size_t i : cluster_exemplars(pts, ids, km)) out.push_back(ids[i]);
    return out;
}

}  // namespace

std::vector<std::string> select_semantic(const std::vector<EmbeddingRecord>& records, double fraction,
                                         std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0) throw std::invalid_argument("select_semantic: fraction must be in (0, 1]");
    if (records.empty()) throw std::invalid_argument("select_semantic: empty input");
    std::vector<std::vector<double>> pts;
    std::vector<std::string> ids;
    for (const auto& r : records) {
        pts.emplace_back(r.vector.begin(), r.vector.end());
        ids.push_back(r.sample_id);
    }
    const double raw = fraction * static_cast<double>(records.size());
    const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(raw - 1e-9)));
    return select_by_clusters(pts, ids, k, seed);
}

std::vector<std::string> select_dynamics(const std::vector<std::pair<std::string, Trajectory>>& trajs,
                                         std::size_t k, std::uint64_t seed) {
    std::vector<std::vector<double>> pts;
    std::vector<std::string> ids;
    for (const auto& [id, t] : trajs) {
        pts.push_back(t.feature());
        ids.push_back(id);
    }
    return select_by_clusters(pts, ids, k, seed);
}

// ---------------------------------------------------------------------------
// Embedding files

namespace {

constexpr char kMagic[8] = {'C', 'F', 'E', 'M', 'B', '0', '0', '1'};

template <typename T>
void write_le(std::ostream& out, T v) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError("embeddings: truncated " + what);
    return v;
}

}  // namespace

std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open embeddings file " + path.string());
    std::vector<EmbeddingRecord> out;
    if (path.extension() == ".json") {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("embeddings: ") + e.what(), 0, e.byte);
        }
        if (j.value("format", "") != "omnidrive_embeddings_v1") {
            throw ValidationError("format", "expected omnidrive_embeddings_v1");
        }
        const auto dim = j.at("dim").get<std::size_t>();
        const auto& recs = j.at("records");
        for (std::size_t i = 0; i < recs.size(); ++i) {
            EmbeddingRecord r;
            r.sample_id = recs[i].at("id").get<std::string>();
            r.vector = recs[i].at("vector").get<std::vector<float>>();
            if (r.vector.size() != dim) {
                throw ValidationError("records[" + std::to_string(i) + "].vector", "dimension mismatch");
            }
            out.push_back(std::move(r));
        }
        return out;
    }
    char magic[8];
    if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) throw ParseError("embeddings: bad magic");
    const auto dim = read_le<std::uint32_t>(in, "header");
    const auto count = read_le<std::uint64_t>(in, "header");
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = read_le<std::uint32_t>(in, "record id length");
        std::string id(len, '\0');
        if (!in.read(id.data(), len)) throw ParseError("embeddings: truncated record id");
        EmbeddingRecord r{std::move(id), std::vector<float>(dim)};
        for (std::uint32_t d = 0; d < dim; ++d) {
            r.vector[d] = read_le<float>(in, "vector");
            if (!std::isfinite(r.vector[d])) throw ValidationError("records[" + std::to_string(i) + "]", "non-finite entry");
        }
        out.push_back(std::move(r));
    }
    return out;
}

void save_embeddings(const std::vector<EmbeddingRecord>& records, const std::filesystem::path& path) {
    const std::size_t dim = records.empty() ? 0 : records[0].vector.size();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write embeddings file " + path.string());
    if (path.extension() == ".json") {
        nlohmann::json j{{"format", "omnidrive_embeddings_v1"}, {"dim", dim}, {"records", nlohmann::json::array()}};
        for (const auto& r : records) j["records"].push_back({{"id", r.sample_id}, {"vector", r.vector}});
        out << j.dump() << '\n';
        return;
    }
    out.write(kMagic, 8);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
    write_le<std::uint64_t>(out, records.size());
    for (const auto& r : records) {
        if (r.vector.size() != dim) throw std::invalid_argument("save_embeddings: ragged vectors");
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.sample_id.size()));
        out.write(r.sample_id.data(), static_cast<std::streamsize>(r.sample_id.size()));
        for (float v : r.vector) write_le<float>(out, v);
    }
}

}  // namespace cfdrive
