#include <catch2/catch_amalgamated.hpp>

#include "dreamforge/graph.hpp"
#include "dreamforge/selfcheck.hpp"

using namespace dreamforge;

TEST_CASE("backward of squared_l2 is 2(x - t)", "[autodiff]") {
    Graph g;
    Graph::NodeId x = g.leaf(Tensor({3}, {1, -2, 0.5}), true);
    Graph::NodeId t = g.leaf(Tensor({3}, {0, 1, 2}));
    auto grads = g.backward(g.squared_l2(x, t));
    const Tensor& gx = grads.at(x);
    CHECK(gx[0] == Catch::Approx(2.0));
    CHECK(gx[1] == Catch::Approx(-6.0));
    CHECK(gx[2] == Catch::Approx(-3.0));
}

TEST_CASE("backward of summed relu masks negative inputs", "[autodiff]") {
    Graph g;
    Graph::NodeId x = g.leaf(Tensor({1, 2}, {-1, 2}), true);
    // sum via matmul with a ones column
    Graph::NodeId total = g.matmul(g.relu(x), g.leaf(Tensor({2, 1}, {1, 1})));
    auto grads = g.backward(total);
    CHECK(grads.at(x).data == std::vector<double>{0, 1});
}

TEST_CASE("backward rejects non-scalar roots", "[autodiff][errors]") {
    Graph g;
    Graph::NodeId x = g.leaf(Tensor({2, 2}), true);
    CHECK_THROWS_AS(g.backward(g.relu(x)), Error);
}

TEST_CASE("leaves not reachable from the root get zero gradients", "[autodiff]") {
    Graph g;
    Graph::NodeId x = g.leaf(Tensor({2}, {1, 2}), true);
    Graph::NodeId unused = g.leaf(Tensor({3}, {5, 5, 5}), true);
    auto grads = g.backward(g.squared_l2(x, g.leaf(Tensor({2}))));
    CHECK(grads.at(unused).data == std::vector<double>{0, 0, 0});
}

// independent oracle: central finite differences on every op, many seeds
TEST_CASE("gradients match finite differences across the op suite", "[autodiff][oracle]") {
    for (const CheckResult& r : run_gradient_checks(/*seeds=*/25)) {
        INFO(r.name << " " << r.detail);
        CHECK(r.passed);
    }
}

TEST_CASE("the gradient checker catches an injected relu sign bug", "[autodiff][mutation]") {
    bool caught = false;
    GradMutator flip = [&](const std::string& name, std::vector<Tensor>& grads) {
        if (name != "relu") return;
        for (Tensor& t : grads)
            for (double& v : t.data) v = -v;
    };
    for (const CheckResult& r : run_gradient_checks(/*seeds=*/3, flip))
        if (r.name == "gradient_check/relu" && !r.passed) caught = true;
    CHECK(caught);
}
