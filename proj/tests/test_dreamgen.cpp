#include <catch2/catch_amalgamated.hpp>

#include "dreamforge/distill.hpp"
#include "dreamforge/dreamgen.hpp"

using namespace dreamforge;

namespace {

/// Linear embedding: g(X) is just the per-channel mean (no convolutions),
/// so the dream objective has a closed-form feasible set.
NetworkWeights linear_teacher(int channels = 3, int size = 4) {
    NetworkSpec spec;
    spec.in_channels = channels;
    spec.in_height = size;
    spec.in_width = size;
    spec.num_classes = 2;
    spec.layers = {{LayerKind::GlobalAvgPool, 0}, {LayerKind::Dense, 2}};
    spec.validate();
    return init_weights(spec, 0);
}

Metadata tiny_metadata(int d, const Digest& fp) {
    Metadata md;
    md.teacher_fingerprint = fp;
    md.embedding_dim = d;
    md.num_classes = 2;
    ClusterRecord a;
    a.class_id = 0;
    a.centroid = Tensor(Shape{d});
    for (int j = 0; j < d; ++j) a.centroid[j] = 0.3 + 0.1 * j;
    a.pcs = Tensor({1, d});
    a.pcs.data[0] = 1.0;
    a.explained_variances = {0.0};
    a.member_count = 3;
    ClusterRecord b = a;
    b.class_id = 1;
    b.member_count = 1;
    for (int j = 0; j < d; ++j) b.centroid[j] = 0.6;
    md.clusters = {a, b};
    return md;
}

}  // namespace

TEST_CASE("sample_targets: zero variances reproduce centroids exactly", "[dreamgen]") {
    Metadata md = tiny_metadata(3, Digest{});
    auto targets = sample_targets(md, 8, 5);
    REQUIRE(targets.size() == 8);
    for (const TargetActivation& t : targets) {
        const ClusterRecord& c = md.clusters[static_cast<size_t>(t.cluster_index)];
        for (int j = 0; j < 3; ++j) CHECK(t.t[j] == c.centroid[j]);
        CHECK(t.class_id == c.class_id);
    }
}

TEST_CASE("sample_targets: allocation is proportional with every cluster covered", "[dreamgen]") {
    Metadata md = tiny_metadata(3, Digest{});
    auto targets = sample_targets(md, 100, 5);
    int first = 0;
    for (const TargetActivation& t : targets)
        if (t.cluster_index == 0) first++;
    CHECK(first == 75);  // member counts 3:1
    CHECK(100 - first == 25);

    SECTION("n >= cluster count guarantees coverage") {
        auto two = sample_targets(md, 2, 9);
        CHECK(two[0].cluster_index != two[1].cluster_index);
    }
    SECTION("n < 1 rejected") { CHECK_THROWS_AS(sample_targets(md, 0, 1), Error); }
}

TEST_CASE("sample_targets: PC noise has the explained variance", "[dreamgen][oracle]") {
    Metadata md = tiny_metadata(3, Digest{});
    md.clusters.pop_back();  // single cluster
    md.clusters[0].explained_variances = {4.0};
    const int n = 10000;
    auto targets = sample_targets(md, n, 12);
    double mean = 0.0, var = 0.0;
    std::vector<double> proj;
    for (const TargetActivation& t : targets) {
        double p = 0.0;
        for (int j = 0; j < 3; ++j)
            p += (t.t[j] - md.clusters[0].centroid[j]) * md.clusters[0].pcs.data[static_cast<size_t>(j)];
        proj.push_back(p);
        mean += p;
    }
    mean /= n;
    for (double p : proj) var += (p - mean) * (p - mean);
    var /= (n - 1);
    CHECK(var == Catch::Approx(4.0).epsilon(0.05));
}

TEST_CASE("generate_dream reaches the closed-form optimum of a linear teacher", "[dreamgen][oracle]") {
    NetworkWeights teacher = linear_teacher();
    TargetActivation target;
    target.t = Tensor({3}, {0.3, 0.5, 0.7});
    target.noise_seed = 99;
    DreamOptConfig cfg;  // defaults: lr 0.05, 500 iterations
    DreamImage dream = generate_dream(teacher, target, cfg);
    // feasible set: any image whose per-channel means equal the target
    CHECK(dream.final_loss <= 1e-6);
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (int i = 0; i < 16; ++i) mean += dream.pixels.data[static_cast<size_t>(c) * 16 + i];
        mean /= 16.0;
        CHECK(mean == Catch::Approx(target.t[c]).margin(2e-3));
    }
    CHECK(dream.final_loss == dream.loss_trace.back());
    for (double v : dream.pixels.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("dream defaults match the published recipe", "[dreamgen]") {
    DreamOptConfig cfg;
    CHECK(cfg.lr == 0.05);
    CHECK(cfg.iterations == 500);
    CHECK(cfg.beta1 == 0.9);
    CHECK(cfg.beta2 == 0.999);
}

TEST_CASE("self-consistent targets are recovered on a small conv teacher", "[dreamgen][oracle]") {
    auto [teacher_spec, student_spec] = default_specs();
    (void)student_spec;
    // a briefly trained teacher gives structured (non-degenerate) embeddings
    auto [train, test] = gen_toy(4, 30, 21);
    KDConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 2;
    auto [teacher, report] = train_teacher(teacher_spec, train, test, cfg);
    (void)report;

    const Tensor x0 = train.image(0);
    Tensor batch({1, x0.dim(0), x0.dim(1), x0.dim(2)}, x0.data);
    const Tensor emb = forward(teacher, batch).embedding;
    TargetActivation target;
    target.t = Tensor(Shape{emb.dim(1)}, emb.data);
    target.noise_seed = 7;
    DreamOptConfig dc;
    DreamImage dream = generate_dream(teacher, target, dc);
    double t_norm2 = 0.0;
    for (double v : target.t.data) t_norm2 += v * v;
    CHECK(dream.final_loss <= 1e-4 * t_norm2);

    SECTION("loss trend: last window beats first window") {
        auto median_of = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            return v[v.size() / 2];
        };
        std::vector<double> first(dream.loss_trace.begin(), dream.loss_trace.begin() + 50);
        std::vector<double> last(dream.loss_trace.end() - 50, dream.loss_trace.end());
        CHECK(median_of(last) < median_of(first));
    }
}

TEST_CASE("generate_dream validates target dimension", "[dreamgen][errors]") {
    NetworkWeights teacher = linear_teacher();
    TargetActivation target;
    target.t = Tensor({5});
    CHECK_THROWS_AS(generate_dream(teacher, target, DreamOptConfig{}), Error);
}

TEST_CASE("generate_batch: worker count never changes results", "[dreamgen]") {
    NetworkWeights teacher = linear_teacher();
    Metadata md = tiny_metadata(3, fingerprint(teacher));
    auto targets = sample_targets(md, 6, 4);
    DreamOptConfig cfg;
    cfg.iterations = 40;
    auto serial = generate_batch(teacher, targets, cfg, 1);
    auto parallel = generate_batch(teacher, targets, cfg, 4);
    REQUIRE(serial.size() == parallel.size());
    for (size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].pixels == parallel[i].pixels);
        CHECK(serial[i].final_loss == parallel[i].final_loss);
        CHECK(serial[i].class_id == targets[i].class_id);
    }
    CHECK(generate_batch(teacher, {}, cfg, 2).empty());
}
