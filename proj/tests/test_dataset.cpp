#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "dreamforge/dataset.hpp"

using namespace dreamforge;
namespace fs = std::filesystem;

TEST_CASE("gen_toy: determinism, counts, and dataset invariants", "[dataset]") {
    auto [train1, test1] = gen_toy(4, 100, 7);
    auto [train2, test2] = gen_toy(4, 100, 7);
    CHECK(train1.images == train2.images);
    CHECK(test1.images == test2.images);
    CHECK(train1.labels == train2.labels);

    CHECK(train1.size() == 400);
    std::vector<int> per_class(4, 0);
    for (int l : train1.labels) per_class[static_cast<size_t>(l)]++;
    for (int c : per_class) CHECK(c == 100);
    CHECK_NOTHROW(train1.validate());
    CHECK_NOTHROW(test1.validate());
    CHECK(test1.images.data != train1.images.data);  // disjoint seed streams
}

TEST_CASE("gen_toy classes are separable: nearest-prototype classifier", "[dataset][oracle]") {
    auto [train, test] = gen_toy(4, 50, 3);
    (void)train;
    // noiseless prototypes as centroids
    std::vector<Tensor> protos;
    for (int c = 0; c < 4; ++c) protos.push_back(detail::toy_prototype(c, 4, 16, 16, false));
    int correct = 0;
    for (int i = 0; i < test.size(); ++i) {
        const Tensor img = test.image(i);
        int best = 0;
        double bd = 1e300;
        for (int c = 0; c < 4; ++c) {
            double d2 = 0.0;
            for (std::int64_t j = 0; j < img.numel(); ++j)
                d2 += (img[j] - protos[static_cast<size_t>(c)][j]) * (img[j] - protos[static_cast<size_t>(c)][j]);
            if (d2 < bd) {
                bd = d2;
                best = c;
            }
        }
        if (best == test.labels[static_cast<size_t>(i)]) correct++;
    }
    CHECK(static_cast<double>(correct) / test.size() >= 0.95);
}

TEST_CASE("gen_toy: prototypes dominate the pixel noise", "[dataset][property]") {
    double sum = 0.0;
    int pairs = 0;
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) {
            const Tensor pa = detail::toy_prototype(a, 4, 16, 16, false);
            const Tensor pb = detail::toy_prototype(b, 4, 16, 16, false);
            double d2 = 0.0;
            for (std::int64_t i = 0; i < pa.numel(); ++i) d2 += (pa[i] - pb[i]) * (pa[i] - pb[i]);
            sum += std::sqrt(d2);
            pairs++;
        }
    CHECK(sum / pairs > 10.0 * 0.15);
}

TEST_CASE("alternate toy distribution differs from the primary one", "[dataset]") {
    const Tensor primary = detail::toy_prototype(0, 4, 16, 16, false);
    const Tensor alt = detail::toy_prototype(0, 4, 16, 16, true);
    CHECK_FALSE(primary == alt);
}

TEST_CASE("subsample_fraction: stratified counts and determinism", "[dataset]") {
    auto [train, test] = gen_toy(4, 100, 5);
    (void)test;
    LabeledDataset sub = subsample_fraction(train, 0.1, 11);
    CHECK(sub.size() == 40);
    std::vector<int> per_class(4, 0);
    for (int l : sub.labels) per_class[static_cast<size_t>(l)]++;
    for (int c : per_class) CHECK(c == 10);

    LabeledDataset again = subsample_fraction(train, 0.1, 11);
    CHECK(sub.images == again.images);

    SECTION("fraction 1 keeps everything") {
        LabeledDataset full = subsample_fraction(train, 1.0, 2);
        CHECK(full.size() == train.size());
        std::multiset<double> a(full.images.data.begin(), full.images.data.end());
        std::multiset<double> b(train.images.data.begin(), train.images.data.end());
        CHECK(a == b);
    }

    SECTION("different seeds usually pick different subsets") {
        int distinct = 0;
        for (std::uint64_t s = 0; s < 10; ++s)
            if (!(subsample_fraction(train, 0.1, s).images == sub.images)) distinct++;
        CHECK(distinct >= 8);
    }
}

TEST_CASE("gen_noise_dataset: statistics and labels", "[dataset]") {
    LabeledDataset noise = gen_noise_dataset(500, 1, 16, 16, 4, 9);
    CHECK_NOTHROW(noise.validate());
    double mean = 0.0;
    for (double v : noise.images.data) mean += v;
    mean /= static_cast<double>(noise.images.numel());  // 128000 draws
    CHECK(mean == Catch::Approx(0.5).margin(0.01));

    LabeledDataset again = gen_noise_dataset(500, 1, 16, 16, 4, 9);
    CHECK(noise.images == again.images);

    LabeledDataset tiny = gen_noise_dataset(4, 1, 8, 8, 4, 1);
    CHECK(tiny.labels == std::vector<int>{0, 1, 2, 3});
    CHECK_THROWS_AS(gen_noise_dataset(3, 1, 8, 8, 4, 1), Error);
}

TEST_CASE("cifar10 loader error paths", "[dataset][errors]") {
    const fs::path dir = fs::temp_directory_path() / "dreamforge_cifar";
    fs::create_directories(dir);

    auto write_record = [&](const fs::path& p, int n, std::uint8_t label) {
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        std::vector<char> rec(3073, 0);
        rec[0] = static_cast<char>(label);
        for (int i = 0; i < n; ++i) f.write(rec.data(), 3073);
    };

    SECTION("missing file") {
        fs::remove_all(dir);
        fs::create_directories(dir);
        CHECK_THROWS_WITH(load_cifar10(dir), Catch::Matchers::ContainsSubstring("missing file"));
    }
    SECTION("well-formed files load with the right count") {
        for (int i = 1; i <= 5; ++i) write_record(dir / ("data_batch_" + std::to_string(i) + ".bin"), 2, 3);
        write_record(dir / "test_batch.bin", 10, 1);
        auto [train, test] = load_cifar10(dir);
        CHECK(train.size() == 10);
        CHECK(test.size() == 10);
        CHECK(train.images.shape == Shape{10, 3, 32, 32});
        CHECK_NOTHROW(train.validate());
    }
    SECTION("bad size") {
        for (int i = 1; i <= 5; ++i) write_record(dir / ("data_batch_" + std::to_string(i) + ".bin"), 1, 0);
        std::ofstream f(dir / "data_batch_1.bin", std::ios::binary | std::ios::trunc);
        std::vector<char> bytes(3072, 0);
        f.write(bytes.data(), 3072);
        f.close();
        CHECK_THROWS_WITH(load_cifar10(dir), Catch::Matchers::ContainsSubstring("multiple of 3073"));
    }
    SECTION("bad label byte") {
        for (int i = 1; i <= 5; ++i) write_record(dir / ("data_batch_" + std::to_string(i) + ".bin"), 1, 0);
        write_record(dir / "data_batch_2.bin", 1, 200);
        write_record(dir / "test_batch.bin", 1, 0);
        CHECK_THROWS_WITH(load_cifar10(dir), Catch::Matchers::ContainsSubstring("label byte"));
    }
}
