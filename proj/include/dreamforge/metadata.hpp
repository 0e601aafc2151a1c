#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <vector>

#include "dreamforge/dataset.hpp"
#include "dreamforge/io.hpp"
#include "dreamforge/network.hpp"
#include "dreamforge/rng.hpp"
#include "dreamforge/tensor.hpp"

namespace dreamforge {

/// Teacher embeddings of the real metadata subset, one row per image.
struct ActivationSet {
    Tensor vectors;  // (N, d)
    std::vector<int> labels;
};

/// One cluster's share of the metadata: centroid, top principal components
/// (rows, orthonormal) and their explained variances, plus the member count
/// used to weight target sampling.
struct ClusterRecord {
    int class_id = 0;
    Tensor centroid;              // (d)
    Tensor pcs;                   // (m', d)
    std::vector<double> explained_variances;  // length m', non-increasing
    int member_count = 0;

    bool operator==(const ClusterRecord&) const = default;
};

struct Metadata {
    Digest teacher_fingerprint{};
    int embedding_dim = 0;
    int num_classes = 0;
    std::vector<ClusterRecord> clusters;
    int k_per_class = 0;   // build parameters, not serialized
    int m_requested = 0;
};

/// Runs the real subset through the frozen teacher and keeps only the
/// average-pool embeddings.
inline ActivationSet harvest_activations(const NetworkWeights& teacher, const LabeledDataset& subset) {
    if (subset.size() == 0) throw Error("harvest_activations: empty subset");
    ForwardOutput out = forward(teacher, subset.images);
    return ActivationSet{std::move(out.embedding), subset.labels};
}

struct KmeansResult {
    std::vector<int> assignments;  // length N
    Tensor centroids;              // (k, d)
    std::vector<double> sse_trace; // within-cluster SSE per Lloyd iteration
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are repaired by
/// stealing the point farthest from its current centroid. Deterministic per
/// seed.
inline KmeansResult kmeans(const Tensor& points, int k, std::uint64_t seed, int max_iter = 100,
                           double tol = 1e-9) {
    if (points.rank() != 2) throw Error("kmeans: points must be (N,d)");
    const int N = points.dim(0), d = points.dim(1);
    if (k < 1) throw Error("kmeans: k must be >= 1");
    if (N < k) throw Error("kmeans: fewer points (" + std::to_string(N) + ") than clusters (" +
                           std::to_string(k) + ")");
    Rng rng(seed);
    const auto row = [&](int i) { return &points.data[static_cast<size_t>(i) * d]; };
    auto dist2 = [&](const double* a, const double* b) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
        return s;
    };

    // k-means++ seeding
    Tensor centroids({k, d});
    std::vector<double> mind2(static_cast<size_t>(N));
    {
        const int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(N)));
        std::copy_n(row(first), d, centroids.data.begin());
        for (int i = 0; i < N; ++i) mind2[static_cast<size_t>(i)] = dist2(row(i), row(first));
        for (int c = 1; c < k; ++c) {
            double total = std::accumulate(mind2.begin(), mind2.end(), 0.0);
            int pick = 0;
            if (total > 0.0) {
                double r = rng.uniform() * total;
                for (int i = 0; i < N; ++i) {
                    r -= mind2[static_cast<size_t>(i)];
                    if (r <= 0.0) {
                        pick = i;
                        break;
                    }
                    pick = i;
                }
            } else {
                pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(N)));
            }
            std::copy_n(row(pick), d, centroids.data.begin() + static_cast<size_t>(c) * d);
            for (int i = 0; i < N; ++i)
                mind2[static_cast<size_t>(i)] =
                    std::min(mind2[static_cast<size_t>(i)],
                             dist2(row(i), &centroids.data[static_cast<size_t>(c) * d]));
        }
    }

    KmeansResult res;
    res.assignments.assign(static_cast<size_t>(N), 0);
    res.centroids = std::move(centroids);
    for (int iter = 0; iter < max_iter; ++iter) {
        // assignment step
        double sse = 0.0;
        for (int i = 0; i < N; ++i) {
            int best = 0;
            double bd = dist2(row(i), &res.centroids.data[0]);
            for (int c = 1; c < k; ++c) {
                const double dd = dist2(row(i), &res.centroids.data[static_cast<size_t>(c) * d]);
                if (dd < bd) {
                    bd = dd;
                    best = c;
                }
            }
            res.assignments[static_cast<size_t>(i)] = best;
            sse += bd;
        }
        // empty-cluster repair: move the globally farthest point into the gap
        std::vector<int> counts(static_cast<size_t>(k), 0);
        for (int a : res.assignments) counts[static_cast<size_t>(a)]++;
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) continue;
            int far = -1;
            double fd = -1.0;
            for (int i = 0; i < N; ++i) {
                const int a = res.assignments[static_cast<size_t>(i)];
                if (counts[static_cast<size_t>(a)] <= 1) continue;
                const double dd = dist2(row(i), &res.centroids.data[static_cast<size_t>(a) * d]);
                if (dd > fd) {
                    fd = dd;
                    far = i;
                }
            }
            if (far < 0) throw Error("kmeans: cannot repair empty cluster");
            counts[static_cast<size_t>(res.assignments[static_cast<size_t>(far)])]--;
            res.assignments[static_cast<size_t>(far)] = c;
            counts[static_cast<size_t>(c)] = 1;
        }
        res.sse_trace.push_back(sse);
        // update step
        Tensor next({k, d});
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < N; ++i) {
            const int a = res.assignments[static_cast<size_t>(i)];
            counts[static_cast<size_t>(a)]++;
            const double* p = row(i);
            double* cp = &next.data[static_cast<size_t>(a) * d];
            for (int j = 0; j < d; ++j) cp[j] += p[j];
        }
        double moved2 = 0.0;
        for (int c = 0; c < k; ++c) {
            double* cp = &next.data[static_cast<size_t>(c) * d];
            for (int j = 0; j < d; ++j) cp[j] /= counts[static_cast<size_t>(c)];
            moved2 += dist2(cp, &res.centroids.data[static_cast<size_t>(c) * d]);
        }
        res.centroids = std::move(next);
        if (moved2 < tol) break;
    }
    // final assignment consistent with the returned centroids
    for (int i = 0; i < N; ++i) {
        int best = 0;
        double bd = dist2(row(i), &res.centroids.data[0]);
        for (int c = 1; c < k; ++c) {
            const double dd = dist2(row(i), &res.centroids.data[static_cast<size_t>(c) * d]);
            if (dd < bd) {
                bd = dd;
                best = c;
            }
        }
        res.assignments[static_cast<size_t>(i)] = best;
    }
    return res;
}

struct PcaResult {
    Tensor pcs;  // (m', d), orthonormal rows, eigenvalue-descending
    std::vector<double> explained_variances;
};

/// PCA of the sample covariance (divisor n-1) via cyclic Jacobi rotations.
/// Returns the top min(m, d, n-1) eigenpairs; each PC's largest-magnitude
/// component is made positive.
inline PcaResult pca(const Tensor& points, int m) {
    if (points.rank() != 2) throw Error("pca: points must be (n,d)");
    const int n = points.dim(0), d = points.dim(1);
    if (n < 2) throw Error("pca: need at least 2 points, got " + std::to_string(n));

    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += points.data[static_cast<size_t>(i) * d + j];
    for (double& v : mean) v /= n;

    // covariance, divisor n-1
    std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) {
            const double xa = points.data[static_cast<size_t>(i) * d + a] - mean[static_cast<size_t>(a)];
            for (int b = a; b < d; ++b)
                cov[static_cast<size_t>(a) * d + b] +=
                    xa * (points.data[static_cast<size_t>(i) * d + b] - mean[static_cast<size_t>(b)]);
        }
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            cov[static_cast<size_t>(a) * d + b] /= (n - 1);
            cov[static_cast<size_t>(b) * d + a] = cov[static_cast<size_t>(a) * d + b];
        }

    // cyclic Jacobi on the symmetric covariance; V accumulates eigenvectors
    std::vector<double> A = cov;
    std::vector<double> V(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) V[static_cast<size_t>(i) * d + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += A[static_cast<size_t>(p) * d + q] * A[static_cast<size_t>(p) * d + q];
        if (std::sqrt(2.0 * off) < 1e-12) break;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) {
                const double apq = A[static_cast<size_t>(p) * d + q];
                if (apq == 0.0) continue;
                const double app = A[static_cast<size_t>(p) * d + p];
                const double aqq = A[static_cast<size_t>(q) * d + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < d; ++i) {
                    const double aip = A[static_cast<size_t>(i) * d + p];
                    const double aiq = A[static_cast<size_t>(i) * d + q];
                    A[static_cast<size_t>(i) * d + p] = c * aip - s * aiq;
                    A[static_cast<size_t>(i) * d + q] = s * aip + c * aiq;
                }
                for (int i = 0; i < d; ++i) {
                    const double api = A[static_cast<size_t>(p) * d + i];
                    const double aqi = A[static_cast<size_t>(q) * d + i];
                    A[static_cast<size_t>(p) * d + i] = c * api - s * aqi;
                    A[static_cast<size_t>(q) * d + i] = s * api + c * aqi;
                }
                for (int i = 0; i < d; ++i) {
                    const double vip = V[static_cast<size_t>(i) * d + p];
                    const double viq = V[static_cast<size_t>(i) * d + q];
                    V[static_cast<size_t>(i) * d + p] = c * vip - s * viq;
                    V[static_cast<size_t>(i) * d + q] = s * vip + c * viq;
                }
            }
    }

    std::vector<int> order(static_cast<size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return A[static_cast<size_t>(a) * d + a] > A[static_cast<size_t>(b) * d + b];
    });

    const int mp = std::min({m, d, n - 1});
    PcaResult res;
    res.pcs = Tensor({std::max(mp, 0), d});
    if (mp <= 0) return res;
    for (int r = 0; r < mp; ++r) {
        const int col = order[static_cast<size_t>(r)];
        double lam = A[static_cast<size_t>(col) * d + col];
        if (lam < 0.0 && lam > -1e-12) lam = 0.0;  // clamp numerical negatives
        res.explained_variances.push_back(lam);
        // sign convention: largest-magnitude component positive
        int big = 0;
        for (int i = 1; i < d; ++i)
            if (std::abs(V[static_cast<size_t>(i) * d + col]) > std::abs(V[static_cast<size_t>(big) * d + col]))
                big = i;
        const double sgn = V[static_cast<size_t>(big) * d + col] >= 0.0 ? 1.0 : -1.0;
        for (int i = 0; i < d; ++i)
            res.pcs.data[static_cast<size_t>(r) * d + i] = sgn * V[static_cast<size_t>(i) * d + col];
    }
    return res;
}

/// Per-class k-means followed by per-cluster PCA. Clusters with fewer than
/// two members are merged into their nearest sibling before PCA. With
/// per_class=false, clustering runs once over all activations and each
/// cluster takes the majority label of its members.
inline Metadata build_metadata(const ActivationSet& acts, int k_per_class, int m, std::uint64_t seed,
                               const Digest& teacher_fp, int num_classes, bool per_class = true) {
    if (acts.vectors.rank() != 2) throw Error("build_metadata: activations must be (N,d)");
    const int d = acts.vectors.dim(1);
    Metadata md;
    md.teacher_fingerprint = teacher_fp;
    md.embedding_dim = d;
    md.num_classes = num_classes;
    md.k_per_class = k_per_class;
    md.m_requested = m;

    auto cluster_group = [&](const std::vector<int>& rows, int k, int class_id, std::uint64_t s,
                             bool majority_label) {
        Tensor pts({static_cast<int>(rows.size()), d});
        for (size_t i = 0; i < rows.size(); ++i)
            std::copy_n(acts.vectors.data.begin() + static_cast<std::int64_t>(rows[i]) * d, d,
                        pts.data.begin() + static_cast<std::int64_t>(i) * d);
        KmeansResult km = kmeans(pts, k, s);

        std::vector<std::vector<int>> members(static_cast<size_t>(k));  // indices into rows
        for (size_t i = 0; i < rows.size(); ++i) members[static_cast<size_t>(km.assignments[i])].push_back(static_cast<int>(i));

        // merge undersized clusters into the nearest sibling (by centroid)
        bool merged = true;
        while (merged) {
            merged = false;
            for (int c = 0; c < k; ++c) {
                if (members[static_cast<size_t>(c)].empty() || members[static_cast<size_t>(c)].size() >= 2) continue;
                int best = -1;
                double bd = 1e300;
                for (int o = 0; o < k; ++o) {
                    if (o == c || members[static_cast<size_t>(o)].empty()) continue;
                    double dd = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double diff = km.centroids.data[static_cast<size_t>(c) * d + j] -
                                            km.centroids.data[static_cast<size_t>(o) * d + j];
                        dd += diff * diff;
                    }
                    if (dd < bd) {
                        bd = dd;
                        best = o;
                    }
                }
                if (best < 0) break;  // single surviving cluster; keep as-is
                for (int i : members[static_cast<size_t>(c)]) members[static_cast<size_t>(best)].push_back(i);
                members[static_cast<size_t>(c)].clear();
                merged = true;
            }
        }

        for (int c = 0; c < k; ++c) {
            const auto& mem = members[static_cast<size_t>(c)];
            if (mem.empty()) continue;
            Tensor cpts({static_cast<int>(mem.size()), d});
            for (size_t i = 0; i < mem.size(); ++i)
                std::copy_n(pts.data.begin() + static_cast<std::int64_t>(mem[i]) * d, d,
                            cpts.data.begin() + static_cast<std::int64_t>(i) * d);
            ClusterRecord rec;
            rec.member_count = static_cast<int>(mem.size());
            rec.centroid = Tensor({d});
            for (size_t i = 0; i < mem.size(); ++i)
                for (int j = 0; j < d; ++j) rec.centroid[j] += cpts.data[static_cast<size_t>(i) * d + j];
            for (int j = 0; j < d; ++j) rec.centroid[j] /= static_cast<double>(mem.size());
            if (mem.size() >= 2) {
                PcaResult p = pca(cpts, m);
                rec.pcs = std::move(p.pcs);
                rec.explained_variances = std::move(p.explained_variances);
            } else {
                rec.pcs = Tensor({0, d});
            }
            if (majority_label) {
                std::vector<int> votes(static_cast<size_t>(num_classes), 0);
                for (int i : mem) votes[static_cast<size_t>(acts.labels[static_cast<size_t>(rows[static_cast<size_t>(i)])])]++;
                rec.class_id = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
            } else {
                rec.class_id = class_id;
            }
            md.clusters.push_back(std::move(rec));
        }
    };

    if (per_class) {
        for (int cls = 0; cls < num_classes; ++cls) {
            std::vector<int> rows;
            for (size_t i = 0; i < acts.labels.size(); ++i)
                if (acts.labels[i] == cls) rows.push_back(static_cast<int>(i));
            if (static_cast<int>(rows.size()) < k_per_class)
                throw Error("build_metadata: class " + std::to_string(cls) + " has only " +
                            std::to_string(rows.size()) + " points, need >= " + std::to_string(k_per_class));
            cluster_group(rows, k_per_class, cls, Rng::derive(seed, static_cast<std::uint64_t>(cls)), false);
        }
    } else {
        std::vector<int> rows(acts.labels.size());
        std::iota(rows.begin(), rows.end(), 0);
        const int k = k_per_class * num_classes;
        if (static_cast<int>(rows.size()) < k)
            throw Error("build_metadata: only " + std::to_string(rows.size()) + " points for " +
                        std::to_string(k) + " global clusters");
        cluster_group(rows, k, 0, seed, true);
        std::vector<bool> covered(static_cast<size_t>(num_classes), false);
        for (const auto& c : md.clusters) covered[static_cast<size_t>(c.class_id)] = true;
        for (int cls = 0; cls < num_classes; ++cls)
            if (!covered[static_cast<size_t>(cls)])
                throw Error("build_metadata: global clustering left class " + std::to_string(cls) +
                            " without a cluster");
    }
    return md;
}

// ---- serialization (DDMD) -------------------------------------------------

inline std::vector<std::uint8_t> serialize_metadata(const Metadata& md) {
    ByteWriter w;
    w.magic("DDMD");
    w.u32(1);
    w.raw(md.teacher_fingerprint.data(), md.teacher_fingerprint.size());
    w.u32(static_cast<std::uint32_t>(md.num_classes));
    w.u32(static_cast<std::uint32_t>(md.embedding_dim));
    for (const ClusterRecord& c : md.clusters) {
        w.u32(static_cast<std::uint32_t>(c.class_id));
        w.u32(static_cast<std::uint32_t>(c.member_count));
        w.u32(static_cast<std::uint32_t>(c.explained_variances.size()));
        w.f64s(c.centroid.data);
        w.f64s(c.pcs.data);
        w.f64s(c.explained_variances);
    }
    return std::move(w.bytes);
}

inline void save_metadata(const Metadata& md, const std::filesystem::path& path) {
    ByteWriter w;
    w.bytes = serialize_metadata(md);
    w.to_file(path);
}

/// Loads metadata; when expected_teacher is given, the stored fingerprint
/// must match (dreams must use the same teacher that built the metadata).
inline Metadata load_metadata(const std::filesystem::path& path,
                              const std::optional<Digest>& expected_teacher = std::nullopt) {
    ByteReader r = ByteReader::from_file(path);
    r.expect_magic("DDMD", "metadata file");
    const std::uint32_t version = r.u32();
    if (version != 1) throw Error("metadata file: unsupported version " + std::to_string(version));
    Metadata md;
    r.raw(md.teacher_fingerprint.data(), md.teacher_fingerprint.size());
    md.num_classes = static_cast<int>(r.u32());
    md.embedding_dim = static_cast<int>(r.u32());
    const int d = md.embedding_dim;
    if (d <= 0 || md.num_classes <= 0) throw Error("metadata file: bad header");
    while (r.remaining() > 0) {
        ClusterRecord c;
        c.class_id = static_cast<int>(r.u32());
        c.member_count = static_cast<int>(r.u32());
        const int mp = static_cast<int>(r.u32());
        if (c.class_id >= md.num_classes || c.member_count < 1 || mp < 0 || mp > d)
            throw Error("metadata file: bad cluster record");
        c.centroid = Tensor({d}, r.f64s(static_cast<size_t>(d)));
        c.pcs = Tensor({mp, d}, r.f64s(static_cast<size_t>(mp) * d));
        c.explained_variances = r.f64s(static_cast<size_t>(mp));
        md.clusters.push_back(std::move(c));
        md.k_per_class = std::max(md.k_per_class, 1);
        md.m_requested = std::max(md.m_requested, mp);
    }
    if (expected_teacher && md.teacher_fingerprint != *expected_teacher)
        throw Error("metadata file: teacher fingerprint mismatch");
    std::vector<bool> covered(static_cast<size_t>(md.num_classes), false);
    for (const auto& c : md.clusters) covered[static_cast<size_t>(c.class_id)] = true;
    for (int cls = 0; cls < md.num_classes; ++cls)
        if (!covered[static_cast<size_t>(cls)])
            throw Error("metadata file: class " + std::to_string(cls) + " has no cluster");
    return md;
}

struct SizeReport {
    std::uint64_t metadata_bytes = 0;
    std::uint64_t dataset_bytes = 0;
    double ratio = 0.0;
};

/// Serialized metadata size vs raw f64 pixel bytes of the reference dataset.
inline SizeReport size_report(const Metadata& md, const LabeledDataset& reference) {
    SizeReport r;
    r.metadata_bytes = serialize_metadata(md).size();
    r.dataset_bytes = static_cast<std::uint64_t>(reference.images.numel()) * sizeof(double);
    r.ratio = static_cast<double>(r.metadata_bytes) / static_cast<double>(r.dataset_bytes);
    return r;
}

}  // namespace dreamforge
