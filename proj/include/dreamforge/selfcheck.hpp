#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dreamforge/graph.hpp"
#include "dreamforge/metadata.hpp"
#include "dreamforge/rng.hpp"

namespace dreamforge {

/// Builds a scalar-rooted graph from a fresh copy of the given inputs.
/// Rebuilding from scratch lets the checker evaluate perturbed inputs.
using GraphBuilder = std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>;

/// Test hook: invoked on the analytic gradients before comparison, so a
/// deliberately corrupted gradient can prove the checker catches bugs.
using GradMutator = std::function<void(const std::string& case_name, std::vector<Tensor>& grads)>;

struct GradCheckFailure {
    std::string case_name;
    int input_index;
    std::int64_t element;
    double analytic, numeric;
};

/// Central-difference gradient check (h = 1e-5). Relative error per element
/// must stay below tol against a floor denominator of 1e-4.
inline std::optional<GradCheckFailure> gradient_check(const std::string& case_name,
                                                      const std::vector<Tensor>& inputs,
                                                      const GraphBuilder& build, double tol = 1e-4,
                                                      const GradMutator& mutate = nullptr) {
    const double h = 1e-5;
    auto eval = [&](const std::vector<Tensor>& ins) {
        Graph g;
        std::vector<Graph::NodeId> ids;
        for (const Tensor& t : ins) ids.push_back(g.leaf(t, /*differentiable=*/true));
        const Graph::NodeId root = build(g, ids);
        return std::pair{g.value(root)[0], std::move(g)};
    };

    Graph g;
    std::vector<Graph::NodeId> ids;
    for (const Tensor& t : inputs) ids.push_back(g.leaf(t, /*differentiable=*/true));
    const Graph::NodeId root = build(g, ids);
    auto grad_map = g.backward(root);
    std::vector<Tensor> analytic;
    for (Graph::NodeId id : ids) analytic.push_back(std::move(grad_map.at(id)));
    if (mutate) mutate(case_name, analytic);

    std::vector<Tensor> work = inputs;
    for (size_t k = 0; k < inputs.size(); ++k)
        for (std::int64_t e = 0; e < inputs[k].numel(); ++e) {
            const double orig = work[k][e];
            work[k][e] = orig + h;
            const double fp = eval(work).first;
            work[k][e] = orig - h;
            const double fm = eval(work).first;
            work[k][e] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[k][e];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
            if (std::abs(a - numeric) / denom > tol)
                return GradCheckFailure{case_name, static_cast<int>(k), e, a, numeric};
        }
    return std::nullopt;
}

namespace detail {

inline Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

/// Pushes values away from the ReLU kink so central differences stay on one
/// side of it.
inline void avoid_kink(Tensor& t, double margin = 1e-2) {
    for (double& v : t.data)
        if (std::abs(v) < margin) v = v >= 0.0 ? margin : -margin;
}

}  // namespace detail

struct CheckResult {
    std::string name;
    bool passed;
    std::string detail;
};

/// Gradient checks for every op in the suite, `seeds` random instances each.
inline std::vector<CheckResult> run_gradient_checks(int seeds = 100, const GradMutator& mutate = nullptr) {
    using detail::avoid_kink;
    using detail::random_tensor;
    std::vector<CheckResult> results;

    struct Case {
        std::string name;
        std::function<std::vector<Tensor>(Rng&)> make_inputs;
        GraphBuilder build;
    };

    // non-scalar outputs are reduced to a scalar with squared_l2 against
    // zeros, i.e. the check runs on sum(y^2)
    auto reduce = [](Graph& g, Graph::NodeId y) {
        return g.squared_l2(y, g.leaf(Tensor::zeros(g.value(y).shape)));
    };

    const std::vector<Case> cases = {
        {"matmul",
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 4}, r), random_tensor({4, 2}, r)}; },
         [reduce](Graph& g, const std::vector<Graph::NodeId>& in) { return reduce(g, g.matmul(in[0], in[1])); }},
        {"conv2d",
         [](Rng& r) {
             return std::vector<Tensor>{random_tensor({1, 2, 4, 4}, r), random_tensor({2, 2, 3, 3}, r)};
         },
         [reduce](Graph& g, const std::vector<Graph::NodeId>& in) { return reduce(g, g.conv2d(in[0], in[1])); }},
        {"relu",
         [](Rng& r) {
             Tensor t = random_tensor({2, 5}, r);
             avoid_kink(t);
             return std::vector<Tensor>{std::move(t)};
         },
         [reduce](Graph& g, const std::vector<Graph::NodeId>& in) { return reduce(g, g.relu(in[0])); }},
        {"sigmoid",
         [](Rng& r) { return std::vector<Tensor>{random_tensor({2, 5}, r)}; },
         [reduce](Graph& g, const std::vector<Graph::NodeId>& in) { return reduce(g, g.sigmoid(in[0])); }},
        {"avg_pool2x2",
         [](Rng& r) { return std::vector<Tensor>{random_tensor({1, 2, 4, 4}, r)}; },
         [reduce](Graph& g, const std::vector<Graph::NodeId>& in) { return reduce(g, g.avg_pool2x2(in[0])); }},
        {"global_avg_pool",
         [](Rng& r) { return std::vector<Tensor>{random_tensor({2, 3, 4, 4}, r)}; },
         [reduce](Graph& g, const std::vector<Graph::NodeId>& in) { return reduce(g, g.global_avg_pool(in[0])); }},
        {"add",
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 3}, r), random_tensor({3, 3}, r)}; },
         [reduce](Graph& g, const std::vector<Graph::NodeId>& in) { return reduce(g, g.add(in[0], in[1])); }},
        {"scale",
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 3}, r)}; },
         [reduce](Graph& g, const std::vector<Graph::NodeId>& in) { return reduce(g, g.scale(in[0], -1.7)); }},
        {"bias_add_2d",
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 4}, r), random_tensor({4}, r)}; },
         [reduce](Graph& g, const std::vector<Graph::NodeId>& in) { return reduce(g, g.bias_add(in[0], in[1])); }},
        {"bias_add_4d",
         [](Rng& r) { return std::vector<Tensor>{random_tensor({2, 3, 2, 2}, r), random_tensor({3}, r)}; },
         [reduce](Graph& g, const std::vector<Graph::NodeId>& in) { return reduce(g, g.bias_add(in[0], in[1])); }},
        {"softmax",
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 4}, r)}; },
         [reduce](Graph& g, const std::vector<Graph::NodeId>& in) { return reduce(g, g.softmax(in[0])); }},
        {"cross_entropy",
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 4}, r)}; },
         [](Graph& g, const std::vector<Graph::NodeId>& in) { return g.cross_entropy(in[0], {0, 2, 3}); }},
        {"squared_l2",
         [](Rng& r) { return std::vector<Tensor>{random_tensor({2, 3}, r), random_tensor({2, 3}, r)}; },
         [](Graph& g, const std::vector<Graph::NodeId>& in) { return g.squared_l2(in[0], in[1]); }},
        {"kl_div",
         [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 4}, r), random_tensor({3, 4}, r)}; },
         [](Graph& g, const std::vector<Graph::NodeId>& in) {
             return g.kl_div(g.softmax(in[0]), g.softmax(in[1]));
         }},
        {"composite",
         [](Rng& r) {
             // small conv net: conv -> bias -> relu -> gap -> matmul -> softmax-CE
             Tensor x = random_tensor({2, 1, 4, 4}, r);
             Tensor k = random_tensor({2, 1, 3, 3}, r);
             Tensor b = random_tensor({2}, r, 0.5);
             b.data[0] += 1.0;  // keep relu inputs clear of the kink
             b.data[1] -= 1.0;
             Tensor w = random_tensor({2, 3}, r);
             return std::vector<Tensor>{std::move(x), std::move(k), std::move(b), std::move(w)};
         },
         [](Graph& g, const std::vector<Graph::NodeId>& in) {
             Graph::NodeId y = g.relu(g.bias_add(g.conv2d(in[0], in[1]), in[2]));
             return g.cross_entropy(g.matmul(g.global_avg_pool(y), in[3]), {1, 0});
         }},
    };

    for (const Case& c : cases) {
        bool ok = true;
        std::string detail;
        for (int s = 0; s < seeds && ok; ++s) {
            Rng rng(0xD1CE + static_cast<std::uint64_t>(s) * 977);
            std::vector<Tensor> inputs = c.make_inputs(rng);
            if (c.name == "composite") {
                // reject draws whose relu pre-activations sit near the kink
                for (int attempt = 0; attempt < 16; ++attempt) {
                    Graph g;
                    Graph::NodeId pre = g.bias_add(g.conv2d(g.leaf(inputs[0]), g.leaf(inputs[1])), g.leaf(inputs[2]));
                    double closest = 1e300;
                    for (double v : g.value(pre).data) closest = std::min(closest, std::abs(v));
                    if (closest > 1e-3) break;
                    Rng retry(0xD1CE + static_cast<std::uint64_t>(s) * 977 + 31337 * (attempt + 1ULL));
                    inputs = c.make_inputs(retry);
                }
            }
            if (auto fail = gradient_check(c.name, inputs, c.build, 1e-4, mutate)) {
                ok = false;
                detail = "seed " + std::to_string(s) + " input " + std::to_string(fail->input_index) +
                         " elem " + std::to_string(fail->element) + ": analytic " +
                         std::to_string(fail->analytic) + " vs numeric " + std::to_string(fail->numeric);
            }
        }
        results.push_back({"gradient_check/" + c.name, ok, detail});
    }
    return results;
}

/// K-means on the canonical 4-point instance plus Lloyd-invariant checks.
inline std::vector<CheckResult> run_kmeans_checks() {
    std::vector<CheckResult> results;
    {
        Tensor pts({4, 2}, {0, 0, 0, 1, 10, 0, 10, 1});
        KmeansResult km = kmeans(pts, 2, 7);
        const bool split_ok = km.assignments[0] == km.assignments[1] && km.assignments[2] == km.assignments[3] &&
                              km.assignments[0] != km.assignments[2];
        bool centroid_ok = false;
        if (split_ok) {
            const int lo = km.assignments[0];
            const int hi = km.assignments[2];
            centroid_ok = std::abs(km.centroids.data[static_cast<size_t>(lo) * 2] - 0.0) < 1e-12 &&
                          std::abs(km.centroids.data[static_cast<size_t>(lo) * 2 + 1] - 0.5) < 1e-12 &&
                          std::abs(km.centroids.data[static_cast<size_t>(hi) * 2] - 10.0) < 1e-12 &&
                          std::abs(km.centroids.data[static_cast<size_t>(hi) * 2 + 1] - 0.5) < 1e-12;
        }
        results.push_back({"kmeans/4_point_partition", split_ok && centroid_ok, ""});
    }
    {
        Rng rng(99);
        Tensor pts({40, 3});
        for (double& v : pts.data) v = rng.normal();
        KmeansResult km = kmeans(pts, 5, 3);
        bool mono = true;
        for (size_t i = 1; i < km.sse_trace.size(); ++i)
            if (km.sse_trace[i] > km.sse_trace[i - 1] + 1e-9) mono = false;
        results.push_back({"kmeans/sse_non_increasing", mono, ""});
    }
    return results;
}

/// PCA orthonormality, eigen residual and trace identity on random clusters.
inline std::vector<CheckResult> run_pca_checks() {
    std::vector<CheckResult> results;
    bool ortho_ok = true, resid_ok = true, trace_ok = true;
    for (int s = 0; s < 20; ++s) {
        Rng rng(500 + static_cast<std::uint64_t>(s));
        const int n = 5 + static_cast<int>(rng.below(10));
        const int d = 3 + static_cast<int>(rng.below(4));
        Tensor pts({n, d});
        for (double& v : pts.data) v = rng.normal(0.0, 1.0 + rng.uniform());
        PcaResult p = pca(pts, d);
        const int mp = p.pcs.dim(0);
        // orthonormality
        for (int a = 0; a < mp; ++a)
            for (int b = 0; b < mp; ++b) {
                double dot = 0.0;
                for (int j = 0; j < d; ++j)
                    dot += p.pcs.data[static_cast<size_t>(a) * d + j] * p.pcs.data[static_cast<size_t>(b) * d + j];
                if (std::abs(dot - (a == b ? 1.0 : 0.0)) > 1e-8) ortho_ok = false;
            }
        // covariance for residual/trace
        std::vector<double> mean(static_cast<size_t>(d), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += pts.data[static_cast<size_t>(i) * d + j];
        for (double& v : mean) v /= n;
        std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b)
                    cov[static_cast<size_t>(a) * d + b] += (pts.data[static_cast<size_t>(i) * d + a] - mean[static_cast<size_t>(a)]) *
                                                           (pts.data[static_cast<size_t>(i) * d + b] - mean[static_cast<size_t>(b)]);
        for (double& v : cov) v /= (n - 1);
        for (int r = 0; r < mp; ++r) {
            double rn = 0.0;
            for (int a = 0; a < d; ++a) {
                double cp = 0.0;
                for (int b = 0; b < d; ++b) cp += cov[static_cast<size_t>(a) * d + b] * p.pcs.data[static_cast<size_t>(r) * d + b];
                const double diff = cp - p.explained_variances[static_cast<size_t>(r)] * p.pcs.data[static_cast<size_t>(r) * d + a];
                rn += diff * diff;
            }
            if (std::sqrt(rn) > 1e-8) resid_ok = false;
        }
        if (mp == std::min(d, n - 1) && mp == d) {
            double trace = 0.0, lsum = 0.0;
            for (int a = 0; a < d; ++a) trace += cov[static_cast<size_t>(a) * d + a];
            for (double l : p.explained_variances) lsum += l;
            if (std::abs(trace - lsum) > 1e-10) trace_ok = false;
        }
    }
    results.push_back({"pca/orthonormality", ortho_ok, ""});
    results.push_back({"pca/eigen_residual", resid_ok, ""});
    results.push_back({"pca/trace_identity", trace_ok, ""});
    return results;
}

/// Full self-check bundle: autodiff gradient oracle, k-means and PCA
/// invariants. Intended to finish well under a minute.
inline std::vector<CheckResult> run_selfcheck(int grad_seeds = 100, const GradMutator& mutate = nullptr) {
    std::vector<CheckResult> all = run_gradient_checks(grad_seeds, mutate);
    for (auto& r : run_kmeans_checks()) all.push_back(std::move(r));
    for (auto& r : run_pca_checks()) all.push_back(std::move(r));
    return all;
}

}  // namespace dreamforge
