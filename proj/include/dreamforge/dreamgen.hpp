#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <thread>
#include <vector>

#include "dreamforge/adam.hpp"
#include "dreamforge/graph.hpp"
#include "dreamforge/metadata.hpp"
#include "dreamforge/network.hpp"
#include "dreamforge/rng.hpp"

namespace dreamforge {

/// One dream's optimization goal: a cluster centroid perturbed along the
/// cluster's principal components.
struct TargetActivation {
    Tensor t;  // (d)
    int class_id = 0;
    int cluster_index = 0;
    std::uint64_t noise_seed = 0;
};

struct DreamOptConfig {
    double lr = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int iterations = 500;
    double init_std = 0.5;  // for the pre-sigmoid pixel parameterization
};

struct DreamImage {
    Tensor pixels;  // (C,H,W) in [0,1]
    int class_id = 0;
    int cluster_index = 0;
    double final_loss = 0.0;
    std::vector<double> loss_trace;
    std::uint64_t seed = 0;
};

/// Draws n targets, allocated across clusters proportionally to member count
/// (largest-remainder rounding; every cluster gets at least one when
/// n >= cluster count). Per-PC noise is Normal(0, lambda_j).
inline std::vector<TargetActivation> sample_targets(const Metadata& md, int n, std::uint64_t seed) {
    if (n < 1) throw Error("sample_targets: n must be >= 1");
    if (md.clusters.empty()) throw Error("sample_targets: metadata has no clusters");
    const int nc = static_cast<int>(md.clusters.size());
    const int d = md.embedding_dim;

    std::int64_t total_members = 0;
    for (const auto& c : md.clusters) total_members += c.member_count;

    // largest-remainder allocation
    std::vector<int> alloc(static_cast<size_t>(nc), 0);
    std::vector<std::pair<double, int>> remainders;
    int assigned = 0;
    for (int c = 0; c < nc; ++c) {
        const double exact = static_cast<double>(n) * md.clusters[static_cast<size_t>(c)].member_count /
                             static_cast<double>(total_members);
        alloc[static_cast<size_t>(c)] = static_cast<int>(exact);
        assigned += alloc[static_cast<size_t>(c)];
        remainders.push_back({exact - alloc[static_cast<size_t>(c)], c});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (int i = 0; assigned < n; ++i, ++assigned) alloc[static_cast<size_t>(remainders[static_cast<size_t>(i % nc)].second)]++;
    if (n >= nc)
        for (int c = 0; c < nc; ++c)
            if (alloc[static_cast<size_t>(c)] == 0) {
                // steal from the largest allocation
                int big = static_cast<int>(std::max_element(alloc.begin(), alloc.end()) - alloc.begin());
                alloc[static_cast<size_t>(big)]--;
                alloc[static_cast<size_t>(c)] = 1;
            }

    Rng rng(seed);
    std::vector<TargetActivation> targets;
    targets.reserve(static_cast<size_t>(n));
    for (int c = 0; c < nc; ++c) {
        const ClusterRecord& rec = md.clusters[static_cast<size_t>(c)];
        const int mp = static_cast<int>(rec.explained_variances.size());
        for (int i = 0; i < alloc[static_cast<size_t>(c)]; ++i) {
            TargetActivation ta;
            ta.t = rec.centroid;
            for (int j = 0; j < mp; ++j) {
                const double eps = rng.normal(0.0, std::sqrt(std::max(0.0, rec.explained_variances[static_cast<size_t>(j)])));
                for (int a = 0; a < d; ++a) ta.t[a] += eps * rec.pcs.data[static_cast<size_t>(j) * d + a];
            }
            ta.class_id = rec.class_id;
            ta.cluster_index = c;
            ta.noise_seed = Rng::derive(seed, static_cast<std::uint64_t>(targets.size()));
            targets.push_back(std::move(ta));
        }
    }
    return targets;
}

/// Synthesizes one image by running Adam on the pre-sigmoid pixels Z,
/// minimizing the squared distance between the teacher's average-pool
/// embedding of sigmoid(Z) and the target. The teacher stays frozen; all
/// randomness comes from target.noise_seed.
inline DreamImage generate_dream(const NetworkWeights& teacher, const TargetActivation& target,
                                 const DreamOptConfig& cfg) {
    if (cfg.iterations < 1 || cfg.lr <= 0.0) throw Error("generate_dream: bad config");
    if (target.t.numel() != teacher.spec.embedding_dim())
        throw Error("generate_dream: target dim " + std::to_string(target.t.numel()) +
                    " != teacher embedding_dim " + std::to_string(teacher.spec.embedding_dim()));

    const int C = teacher.spec.in_channels, H = teacher.spec.in_height, W = teacher.spec.in_width;
    Rng rng(target.noise_seed);
    std::vector<Tensor> z{Tensor({1, C, H, W})};
    for (double& v : z[0].data) v = rng.normal(0.0, cfg.init_std);

    Tensor t_row({1, static_cast<int>(target.t.numel())}, target.t.data);
    AdamState adam = AdamState::init(z, cfg.lr, cfg.beta1, cfg.beta2);

    DreamImage dream;
    dream.class_id = target.class_id;
    dream.cluster_index = target.cluster_index;
    dream.seed = target.noise_seed;

    auto loss_graph = [&](Graph& g) {
        const Graph::NodeId zid = g.leaf(z[0], /*differentiable=*/true);
        const Graph::NodeId x = g.sigmoid(zid);
        const ForwardGraph fg = build_forward(g, teacher, x, /*weights_differentiable=*/false);
        return std::pair{g.squared_l2(fg.embedding, g.leaf(t_row)), zid};
    };

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        Graph g;
        auto [loss, zid] = loss_graph(g);
        const double lv = g.value(loss)[0];
        if (!std::isfinite(lv)) throw Error("generate_dream: NaN loss at iteration " + std::to_string(iter));
        dream.loss_trace.push_back(lv);
        auto grads = g.backward(loss);
        std::vector<Tensor> gz{std::move(grads.at(zid))};
        adam_step(z, gz, adam);
    }

    // final objective at the returned pixels
    Graph g;
    auto [loss, zid] = loss_graph(g);
    (void)zid;
    dream.final_loss = g.value(loss)[0];
    if (!std::isfinite(dream.final_loss))
        throw Error("generate_dream: NaN loss at iteration " + std::to_string(cfg.iterations));
    dream.loss_trace.push_back(dream.final_loss);

    dream.pixels = Tensor({C, H, W});
    for (std::int64_t i = 0; i < dream.pixels.numel(); ++i) dream.pixels[i] = 1.0 / (1.0 + std::exp(-z[0][i]));
    return dream;
}

/// Generates dreams for all targets, fanning out across workers. Each image
/// depends only on its own noise_seed, so results are identical regardless of
/// worker count and arrive in target order.
inline std::vector<DreamImage> generate_batch(const NetworkWeights& teacher,
                                              const std::vector<TargetActivation>& targets,
                                              const DreamOptConfig& cfg, int workers = 1) {
    if (workers < 1) throw Error("generate_batch: workers must be >= 1");
    std::vector<DreamImage> out(targets.size());
    if (targets.empty()) return out;

    std::atomic<size_t> next{0};
    std::mutex err_mutex;
    size_t first_err = targets.size();
    std::string err_msg;

    auto run = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= targets.size()) return;
            try {
                out[i] = generate_dream(teacher, targets[i], cfg);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lk(err_mutex);
                if (i < first_err) {
                    first_err = i;
                    err_msg = e.what();
                }
            }
        }
    };

    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(run);
        for (auto& th : pool) th.join();
    }
    if (first_err < targets.size())
        throw Error("generate_batch: dream " + std::to_string(first_err) + " failed: " + err_msg);
    return out;
}

}  // namespace dreamforge
