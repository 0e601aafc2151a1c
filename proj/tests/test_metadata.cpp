#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "dreamforge/dataset.hpp"
#include "dreamforge/metadata.hpp"

using namespace dreamforge;
namespace fs = std::filesystem;

namespace {

// brute-force oracle: best 2-partition of 4 points by within-cluster SSE
std::pair<std::vector<int>, double> brute_force_2means(const Tensor& pts) {
    const int n = pts.dim(0), d = pts.dim(1);
    double best_sse = 1e300;
    std::vector<int> best;
    for (int mask = 1; mask < (1 << n) - 1; ++mask) {
        std::vector<std::vector<int>> groups(2);
        for (int i = 0; i < n; ++i) groups[static_cast<size_t>((mask >> i) & 1)].push_back(i);
        double sse = 0.0;
        for (const auto& grp : groups) {
            std::vector<double> mean(static_cast<size_t>(d), 0.0);
            for (int i : grp)
                for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += pts.data[static_cast<size_t>(i) * d + j];
            for (double& v : mean) v /= static_cast<double>(grp.size());
            for (int i : grp)
                for (int j = 0; j < d; ++j) {
                    const double diff = pts.data[static_cast<size_t>(i) * d + j] - mean[static_cast<size_t>(j)];
                    sse += diff * diff;
                }
        }
        if (sse < best_sse) {
            best_sse = sse;
            best.assign(static_cast<size_t>(n), 0);
            for (int i = 0; i < n; ++i) best[static_cast<size_t>(i)] = (mask >> i) & 1;
        }
    }
    return {best, best_sse};
}

Metadata toy_metadata(std::uint64_t seed = 1, int k = 4, int m = 32) {
    auto [teacher_spec, student_spec] = default_specs();
    (void)student_spec;
    NetworkWeights teacher = init_weights(teacher_spec, 17);
    auto [train, test] = gen_toy(4, 60, seed);
    (void)test;
    LabeledDataset subset = subsample_fraction(train, 0.5, seed);
    ActivationSet acts = harvest_activations(teacher, subset);
    return build_metadata(acts, k, m, seed, fingerprint(teacher), 4);
}

}  // namespace

TEST_CASE("kmeans with k=1 returns the arithmetic mean", "[kmeans]") {
    Tensor pts({3, 2}, {1, 2, 3, 4, 5, 12});
    KmeansResult km = kmeans(pts, 1, 0);
    CHECK(km.centroids.data[0] == Catch::Approx(3.0));
    CHECK(km.centroids.data[1] == Catch::Approx(6.0));
}

TEST_CASE("kmeans matches the brute-force partition oracle on the 4-point instance", "[kmeans][oracle]") {
    Tensor pts({4, 2}, {0, 0, 0, 1, 10, 0, 10, 1});
    auto [oracle_assign, oracle_sse] = brute_force_2means(pts);
    KmeansResult km = kmeans(pts, 2, 5);
    // same partition up to label swap
    const bool same = (km.assignments[0] == km.assignments[1]) && (km.assignments[2] == km.assignments[3]) &&
                      (km.assignments[0] != km.assignments[2]);
    const bool oracle_same = (oracle_assign[0] == oracle_assign[1]) && (oracle_assign[2] == oracle_assign[3]);
    CHECK(same);
    CHECK(oracle_same);
    double sse = 0.0;
    for (int i = 0; i < 4; ++i) {
        const int a = km.assignments[static_cast<size_t>(i)];
        for (int j = 0; j < 2; ++j) {
            const double diff =
                pts.data[static_cast<size_t>(i) * 2 + j] - km.centroids.data[static_cast<size_t>(a) * 2 + j];
            sse += diff * diff;
        }
    }
    CHECK(sse == Catch::Approx(oracle_sse).margin(1e-12));
}

TEST_CASE("kmeans SSE is non-increasing and centroids are member means", "[kmeans][property]") {
    Rng rng(33);
    Tensor pts({30, 4});
    for (double& v : pts.data) v = rng.normal();
    KmeansResult km = kmeans(pts, 3, 8);
    for (size_t i = 1; i < km.sse_trace.size(); ++i) CHECK(km.sse_trace[i] <= km.sse_trace[i - 1] + 1e-9);

    const int d = 4;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> mean(static_cast<size_t>(d), 0.0);
        int count = 0;
        for (int i = 0; i < 30; ++i) {
            if (km.assignments[static_cast<size_t>(i)] != c) continue;
            count++;
            for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += pts.data[static_cast<size_t>(i) * d + j];
        }
        REQUIRE(count > 0);
        for (int j = 0; j < d; ++j)
            CHECK(mean[static_cast<size_t>(j)] / count ==
                  Catch::Approx(km.centroids.data[static_cast<size_t>(c) * d + j]).margin(1e-12));
    }
}

TEST_CASE("kmeans rejects N < k", "[kmeans][errors]") {
    Tensor pts({2, 2});
    CHECK_THROWS_AS(kmeans(pts, 3, 0), Error);
}

TEST_CASE("pca: axis-aligned line", "[pca]") {
    // variance 4 along e1 (n-1 divisor): points -2,0,2 -> var = (4+0+4)/2 = 4
    Tensor pts({3, 3}, {-2, 0, 0, 0, 0, 0, 2, 0, 0});
    PcaResult p = pca(pts, 3);
    REQUIRE(p.explained_variances.size() >= 1);
    CHECK(p.explained_variances[0] == Catch::Approx(4.0));
    CHECK(p.pcs.data[0] == Catch::Approx(1.0));  // sign convention: +e1
    CHECK(std::abs(p.pcs.data[1]) < 1e-12);
    CHECK(std::abs(p.pcs.data[2]) < 1e-12);
    for (size_t i = 1; i < p.explained_variances.size(); ++i)
        CHECK(std::abs(p.explained_variances[i]) < 1e-12);
}

TEST_CASE("pca: isotropic 2-D diamond has equal eigenvalues 2/3", "[pca][oracle]") {
    Tensor pts({4, 2}, {1, 0, -1, 0, 0, 1, 0, -1});
    PcaResult p = pca(pts, 2);
    REQUIRE(p.explained_variances.size() == 2);
    CHECK(p.explained_variances[0] == Catch::Approx(2.0 / 3.0));
    CHECK(p.explained_variances[1] == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("pca: eigenvalue sum equals covariance trace", "[pca][oracle]") {
    Rng rng(44);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor pts({5, 3});
        for (double& v : pts.data) v = rng.normal(0, 2);
        PcaResult p = pca(pts, 3);
        double lsum = 0.0;
        for (double l : p.explained_variances) lsum += l;
        // trace of sample covariance
        double trace = 0.0;
        for (int j = 0; j < 3; ++j) {
            double mean = 0.0;
            for (int i = 0; i < 5; ++i) mean += pts.data[static_cast<size_t>(i) * 3 + j];
            mean /= 5.0;
            for (int i = 0; i < 5; ++i)
                trace += (pts.data[static_cast<size_t>(i) * 3 + j] - mean) *
                         (pts.data[static_cast<size_t>(i) * 3 + j] - mean) / 4.0;
        }
        CHECK(lsum == Catch::Approx(trace).margin(1e-10));
    }
}

TEST_CASE("pca rejects fewer than two points", "[pca][errors]") {
    CHECK_THROWS_AS(pca(Tensor({1, 3}), 3), Error);
}

TEST_CASE("harvest_activations matches per-example forwards", "[metadata][oracle]") {
    auto [teacher_spec, student_spec] = default_specs();
    (void)student_spec;
    NetworkWeights teacher = init_weights(teacher_spec, 2);
    auto [train, test] = gen_toy(4, 10, 1);
    (void)test;
    ActivationSet acts = harvest_activations(teacher, train);
    REQUIRE(acts.vectors.dim(0) == train.size());
    for (int i = 0; i < train.size(); ++i) {
        const Tensor img = train.image(i);
        Tensor batch({1, img.dim(0), img.dim(1), img.dim(2)}, img.data);
        const Tensor emb = forward(teacher, batch).embedding;
        for (int j = 0; j < acts.vectors.dim(1); ++j)
            CHECK(acts.vectors.data[static_cast<size_t>(i) * acts.vectors.dim(1) + j] ==
                  Catch::Approx(emb[j]).margin(1e-12));
    }

    SECTION("zero teacher gives zero rows") {
        for (Tensor& p : teacher.params) std::fill(p.data.begin(), p.data.end(), 0.0);
        ActivationSet zero = harvest_activations(teacher, train);
        for (double v : zero.vectors.data) CHECK(v == 0.0);
    }
}

TEST_CASE("build_metadata: counts, centroid consistency, coverage", "[metadata]") {
    Metadata md = toy_metadata();
    CHECK(md.embedding_dim == 32);
    CHECK(md.num_classes == 4);
    CHECK(md.clusters.size() <= 16);
    std::vector<bool> covered(4, false);
    int total_members = 0;
    for (const ClusterRecord& c : md.clusters) {
        covered[static_cast<size_t>(c.class_id)] = true;
        total_members += c.member_count;
        CHECK(c.member_count >= 1);
        // variances sorted non-increasing and non-negative
        for (size_t i = 1; i < c.explained_variances.size(); ++i)
            CHECK(c.explained_variances[i] <= c.explained_variances[i - 1] + 1e-12);
        for (double l : c.explained_variances) CHECK(l >= -1e-12);
        // pcs rows orthonormal
        const int mp = c.pcs.dim(0), d = md.embedding_dim;
        for (int a = 0; a < mp; ++a)
            for (int b = 0; b < mp; ++b) {
                double dot = 0.0;
                for (int j = 0; j < d; ++j)
                    dot += c.pcs.data[static_cast<size_t>(a) * d + j] * c.pcs.data[static_cast<size_t>(b) * d + j];
                CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-8);
            }
    }
    for (bool b : covered) CHECK(b);
    CHECK(total_members == 120);  // all activation rows are assigned
}

TEST_CASE("build_metadata errors when a class is too small", "[metadata][errors]") {
    auto [teacher_spec, student_spec] = default_specs();
    (void)student_spec;
    NetworkWeights teacher = init_weights(teacher_spec, 2);
    auto [train, test] = gen_toy(4, 3, 1);
    (void)test;
    ActivationSet acts = harvest_activations(teacher, train);
    CHECK_THROWS_WITH(build_metadata(acts, 4, 8, 0, fingerprint(teacher), 4),
                      Catch::Matchers::ContainsSubstring("class"));
}

TEST_CASE("identical points in a class collapse to one cluster with zero variances", "[metadata]") {
    auto [teacher_spec, student_spec] = default_specs();
    (void)student_spec;
    const int d = 32;
    ActivationSet acts;
    acts.vectors = Tensor({12, d});
    for (int i = 0; i < 12; ++i) {
        acts.labels.push_back(i < 6 ? 0 : 1);
        for (int j = 0; j < d; ++j)
            acts.vectors.data[static_cast<size_t>(i) * d + j] = (i < 6) ? 1.5 : static_cast<double>(i + j);
    }
    Metadata md = build_metadata(acts, 3, 8, 4, Digest{}, 2);
    int class0_clusters = 0;
    for (const ClusterRecord& c : md.clusters)
        if (c.class_id == 0) {
            class0_clusters++;
            CHECK(c.member_count == 6);
            for (double l : c.explained_variances) CHECK(std::abs(l) < 1e-12);
            for (int j = 0; j < d; ++j) CHECK(c.centroid[j] == Catch::Approx(1.5));
        }
    CHECK(class0_clusters == 1);
}

TEST_CASE("metadata round-trips through the DDMD file", "[metadata][serialization]") {
    Metadata md = toy_metadata();
    const fs::path path = fs::temp_directory_path() / "dreamforge_test" / "md.ddmd";
    fs::create_directories(path.parent_path());
    save_metadata(md, path);
    Metadata loaded = load_metadata(path);
    CHECK(loaded.teacher_fingerprint == md.teacher_fingerprint);
    CHECK(loaded.num_classes == md.num_classes);
    CHECK(loaded.embedding_dim == md.embedding_dim);
    REQUIRE(loaded.clusters.size() == md.clusters.size());
    for (size_t i = 0; i < md.clusters.size(); ++i) CHECK(loaded.clusters[i] == md.clusters[i]);

    SECTION("fingerprint mismatch on load is rejected") {
        Digest other{};
        other[0] = 0xFF;
        CHECK_THROWS_WITH(load_metadata(path, other), Catch::Matchers::ContainsSubstring("fingerprint"));
    }
}

TEST_CASE("size accounting: metadata is smaller than its source subset", "[metadata]") {
    auto [teacher_spec, student_spec] = default_specs();
    (void)student_spec;
    NetworkWeights teacher = init_weights(teacher_spec, 17);
    auto [train, test] = gen_toy(4, 150, 1);
    (void)test;
    LabeledDataset subset = subsample_fraction(train, 0.1, 1);
    ActivationSet acts = harvest_activations(teacher, subset);
    Metadata md = build_metadata(acts, 4, 32, 1, fingerprint(teacher), 4);
    SizeReport r = size_report(md, subset);
    CHECK(r.metadata_bytes < r.dataset_bytes);
    CHECK(r.ratio < 1.0);

    // large-scale sanity on the ratio arithmetic: 0.58 MB vs 58 MB
    CHECK(0.58 / 58.0 == Catch::Approx(0.01));
}

TEST_CASE("global clustering flag covers every class via majority labels", "[metadata]") {
    auto [teacher_spec, student_spec] = default_specs();
    (void)student_spec;
    NetworkWeights teacher = init_weights(teacher_spec, 17);
    auto [train, test] = gen_toy(4, 40, 9);
    (void)test;
    ActivationSet acts = harvest_activations(teacher, train);
    Metadata md = build_metadata(acts, 4, 16, 9, fingerprint(teacher), 4, /*per_class=*/false);
    std::vector<bool> covered(4, false);
    for (const ClusterRecord& c : md.clusters) covered[static_cast<size_t>(c.class_id)] = true;
    for (bool b : covered) CHECK(b);
}
