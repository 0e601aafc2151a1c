#include <catch2/catch_amalgamated.hpp>

#include "dreamforge/graph.hpp"
#include "dreamforge/rng.hpp"

using namespace dreamforge;

namespace {
Tensor eval_unary(Graph::NodeId (Graph::*op)(Graph::NodeId), const Tensor& x) {
    Graph g;
    return g.value((g.*op)(g.leaf(x)));
}
}  // namespace

TEST_CASE("relu clamps negatives", "[ops]") {
    Tensor out = eval_unary(&Graph::relu, Tensor({3}, {-1, 0, 2}));
    CHECK(out.data == std::vector<double>{0, 0, 2});
}

TEST_CASE("conv2d with identity delta kernel is the identity", "[ops]") {
    Rng rng(4);
    Tensor img({1, 1, 5, 5});
    for (double& v : img.data) v = rng.uniform();
    Tensor kernel({1, 1, 3, 3});
    kernel.data[4] = 1.0;  // center tap
    Graph g;
    Tensor out = g.value(g.conv2d(g.leaf(img), g.leaf(kernel)));
    REQUIRE(out.shape == img.shape);
    for (std::int64_t i = 0; i < img.numel(); ++i) CHECK(out[i] == Catch::Approx(img[i]).margin(1e-15));
}

TEST_CASE("global_avg_pool is the per-channel spatial mean", "[ops]") {
    Graph g;
    Tensor out = g.value(g.global_avg_pool(g.leaf(Tensor({1, 1, 2, 2}, {1, 2, 3, 5}))));
    REQUIRE(out.shape == Shape{1, 1});
    CHECK(out[0] == Catch::Approx(2.75));
}

TEST_CASE("squared_l2 sums squared differences", "[ops]") {
    Graph g;
    Tensor out = g.value(g.squared_l2(g.leaf(Tensor({2}, {1, 2})), g.leaf(Tensor({2}, {0, 0}))));
    CHECK(out[0] == Catch::Approx(5.0));
}

TEST_CASE("avg_pool2x2 averages disjoint 2x2 blocks", "[ops]") {
    Graph g;
    Tensor out = g.value(g.avg_pool2x2(g.leaf(Tensor({1, 1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8}))));
    REQUIRE(out.shape == Shape{1, 1, 1, 2});
    CHECK(out[0] == Catch::Approx(3.5));
    CHECK(out[1] == Catch::Approx(5.5));
}

TEST_CASE("softmax rows sum to one and survive large logits", "[ops]") {
    Rng rng(11);
    Tensor x({4, 6});
    for (double& v : x.data) v = 500.0 * rng.normal();  // overflow-safety via max subtraction
    Graph g;
    Tensor y = g.value(g.softmax(g.leaf(x)));
    for (int i = 0; i < 4; ++i) {
        double s = 0.0;
        for (int j = 0; j < 6; ++j) s += y.data[static_cast<size_t>(i) * 6 + j];
        CHECK(s == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("kl_div of a distribution with itself is zero", "[ops]") {
    Graph g;
    Graph::NodeId p = g.softmax(g.leaf(Tensor({2, 3}, {1, 2, 3, -1, 0, 4})));
    CHECK(std::abs(g.value(g.kl_div(p, p))[0]) < 1e-12);
}

TEST_CASE("cross_entropy is non-negative", "[ops]") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x({3, 4});
        for (double& v : x.data) v = 3.0 * rng.normal();
        Graph g;
        CHECK(g.value(g.cross_entropy(g.leaf(x), {0, 1, 2}))[0] >= 0.0);
    }
}

TEST_CASE("conv2d is linear in its input", "[ops][property]") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x({1, 2, 4, 4}), y({1, 2, 4, 4}), k({3, 2, 3, 3});
        for (double& v : x.data) v = rng.normal();
        for (double& v : y.data) v = rng.normal();
        for (double& v : k.data) v = rng.normal();
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        Tensor mix({1, 2, 4, 4});
        for (std::int64_t i = 0; i < mix.numel(); ++i) mix[i] = a * x[i] + b * y[i];
        Graph g;
        Graph::NodeId kid = g.leaf(k);
        Tensor lhs = g.value(g.conv2d(g.leaf(mix), kid));
        Tensor cx = g.value(g.conv2d(g.leaf(x), kid));
        Tensor cy = g.value(g.conv2d(g.leaf(y), kid));
        for (std::int64_t i = 0; i < lhs.numel(); ++i)
            CHECK(lhs[i] == Catch::Approx(a * cx[i] + b * cy[i]).margin(1e-9));
    }
}

TEST_CASE("forward evaluation is deterministic", "[ops]") {
    Rng rng(77);
    Tensor x({2, 2, 4, 4}), k({2, 2, 3, 3});
    for (double& v : x.data) v = rng.normal();
    for (double& v : k.data) v = rng.normal();
    auto run = [&]() {
        Graph g;
        return g.value(g.global_avg_pool(g.relu(g.conv2d(g.leaf(x), g.leaf(k)))));
    };
    CHECK(run() == run());
}

TEST_CASE("shape mismatches raise structured errors naming the op", "[ops][errors]") {
    Graph g;
    Graph::NodeId a = g.leaf(Tensor({2, 3}));
    Graph::NodeId b = g.leaf(Tensor({2, 3}));
    CHECK_THROWS_WITH(g.matmul(a, b), Catch::Matchers::ContainsSubstring("matmul"));
    CHECK_THROWS_WITH(g.add(a, g.leaf(Tensor({3, 2}))), Catch::Matchers::ContainsSubstring("add"));
    CHECK_THROWS_WITH(g.squared_l2(a, g.leaf(Tensor({6}))), Catch::Matchers::ContainsSubstring("squared_l2"));
    CHECK_THROWS_WITH(g.bias_add(a, g.leaf(Tensor({2}))), Catch::Matchers::ContainsSubstring("bias_add"));
    CHECK_THROWS_WITH(g.conv2d(a, b), Catch::Matchers::ContainsSubstring("conv2d"));
}

TEST_CASE("non-finite inputs are rejected", "[ops][errors]") {
    Graph g;
    Tensor bad({2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
    CHECK_THROWS_AS(g.leaf(bad), Error);
}
