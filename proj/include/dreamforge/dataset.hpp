#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "dreamforge/rng.hpp"
#include "dreamforge/tensor.hpp"

namespace dreamforge {

struct LabeledDataset {
    Tensor images;  // (n, C, H, W), pixels in [0,1]
    std::vector<int> labels;
    std::vector<std::string> class_names;

    int size() const { return images.rank() == 4 ? images.dim(0) : 0; }
    int num_classes() const { return static_cast<int>(class_names.size()); }

    Tensor image(int i) const {
        const int C = images.dim(1), H = images.dim(2), W = images.dim(3);
        const std::int64_t stride = static_cast<std::int64_t>(C) * H * W;
        Tensor out({C, H, W});
        std::copy_n(images.data.begin() + i * stride, stride, out.data.begin());
        return out;
    }

    void validate() const {
        if (images.rank() != 4) throw Error("dataset: images must be (n,C,H,W)");
        if (images.dim(0) != static_cast<int>(labels.size())) throw Error("dataset: n != len(labels)");
        for (double v : images.data)
            if (!(v >= 0.0 && v <= 1.0)) throw Error("dataset: pixel outside [0,1]");
        for (int l : labels)
            if (l < 0 || l >= num_classes()) throw Error("dataset: label out of range");
    }
};

namespace detail {

/// Per-class generator parameters for the toy patterns: oriented stripes of a
/// class-specific frequency plus a bright blob at a class-specific position.
struct ToyParams {
    double angle;
    double freq;
    double blob_x, blob_y;
    double blob2_amp;  // faint diffuse glow distinguishing pair members
    double blob2_x, blob2_y;
};

inline ToyParams toy_params(int cls, int num_classes, bool alternate) {
    const double pi = 3.14159265358979323846;
    // the alternate distribution shifts every parameter: same renderer,
    // different classes (stands in for a related-but-different dataset)
    const double a0 = alternate ? pi / (2.0 * num_classes) : 0.0;
    // classes come in confusable pairs: members of a pair share the exact same
    // stripes and primary blob and differ only by a faint diffuse glow, so
    // that, like real datasets, some class boundaries are genuinely close
    // while the pairs themselves are far apart
    const int pair = cls / 2;
    const int member = cls % 2;
    const int num_pairs = (num_classes + 1) / 2;
    ToyParams p;
    p.angle = a0 + pi * pair / num_pairs;
    p.freq = (alternate ? 2.5 : 2.0) + pair * (alternate ? 1.25 : 1.0);
    p.blob_x = 0.2 + 0.6 * (((pair * 5 + (alternate ? 2 : 0)) % num_pairs) / std::max(1.0, num_pairs - 1.0));
    p.blob_y = alternate ? 0.72 - 0.4 * (pair % 2) : 0.28 + 0.4 * (pair % 2);
    p.blob2_amp = member ? 0.15 : 0.0;
    p.blob2_x = 1.0 - p.blob_x;
    p.blob2_y = 1.0 - p.blob_y;
    return p;
}

/// Noise-free class prototype, (H,W) pixels in [0,1].
inline Tensor toy_prototype(int cls, int num_classes, int H, int W, bool alternate) {
    const ToyParams p = toy_params(cls, num_classes, alternate);
    const double pi = 3.14159265358979323846;
    Tensor img({1, H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double u = (x + 0.5) / W, v = (y + 0.5) / H;
            const double t = u * std::cos(p.angle) + v * std::sin(p.angle);
            double val = 0.5 + 0.3 * std::sin(2.0 * pi * p.freq * t);
            const double dx = u - p.blob_x, dy = v - p.blob_y;
            val += 0.45 * std::exp(-(dx * dx + dy * dy) / (2.0 * 0.01));
            if (p.blob2_amp > 0.0) {
                // wider and fainter than the primary blob: a diffuse glow
                const double ex = u - p.blob2_x, ey = v - p.blob2_y;
                val += p.blob2_amp * std::exp(-(ex * ex + ey * ey) / (2.0 * 0.03));
            }
            img.data[static_cast<size_t>(y) * W + x] = std::clamp(val, 0.0, 1.0);
        }
    return img;
}

inline LabeledDataset toy_split(int num_classes, int per_class, int H, int W, double noise_std,
                                bool alternate, Rng& rng) {
    LabeledDataset ds;
    ds.images = Tensor({num_classes * per_class, 1, H, W});
    std::vector<Tensor> protos;
    for (int c = 0; c < num_classes; ++c) protos.push_back(toy_prototype(c, num_classes, H, W, alternate));
    std::int64_t off = 0;
    for (int c = 0; c < num_classes; ++c)
        for (int i = 0; i < per_class; ++i) {
            for (std::int64_t j = 0; j < protos[static_cast<size_t>(c)].numel(); ++j)
                ds.images.data[static_cast<size_t>(off++)] =
                    std::clamp(protos[static_cast<size_t>(c)][j] + rng.normal(0.0, noise_std), 0.0, 1.0);
            ds.labels.push_back(c);
        }
    for (int c = 0; c < num_classes; ++c)
        ds.class_names.push_back((alternate ? "alt_class_" : "class_") + std::to_string(c));
    return ds;
}

}  // namespace detail

/// Deterministic procedural dataset: 16x16 grayscale class patterns with
/// additive Gaussian pixel noise (sigma 0.15, clipped). Train and test are
/// i.i.d. draws from the same generator under disjoint seed streams.
/// `alternate` produces the related-but-different class family used as the
/// alternate-data arm of the comparison experiment.
inline std::pair<LabeledDataset, LabeledDataset> gen_toy(int num_classes, int per_class, std::uint64_t seed,
                                                         bool alternate = false, int size = 16,
                                                         double noise_std = 0.15) {
    if (num_classes < 2 || num_classes > 10) throw Error("gen_toy: num_classes must be in [2,10]");
    // separability guard: on average, prototypes must dominate the pixel noise
    // (individual pairs are allowed to be close: that is what makes the task
    // non-trivial)
    double dist_sum = 0.0;
    int pairs = 0;
    for (int a = 0; a < num_classes; ++a)
        for (int b = a + 1; b < num_classes; ++b) {
            const Tensor pa = detail::toy_prototype(a, num_classes, size, size, alternate);
            const Tensor pb = detail::toy_prototype(b, num_classes, size, size, alternate);
            double d2 = 0.0;
            for (std::int64_t i = 0; i < pa.numel(); ++i) d2 += (pa[i] - pb[i]) * (pa[i] - pb[i]);
            dist_sum += std::sqrt(d2);
            ++pairs;
        }
    if (dist_sum / std::max(1, pairs) <= 10.0 * noise_std)
        throw Error("gen_toy: class prototypes are not separable enough for noise sigma " +
                    std::to_string(noise_std));
    Rng train_rng(Rng::derive(seed, 1));
    Rng test_rng(Rng::derive(seed, 2));
    auto train = detail::toy_split(num_classes, per_class, size, size, noise_std, alternate, train_rng);
    auto test = detail::toy_split(num_classes, per_class, size, size, noise_std, alternate, test_rng);
    return {std::move(train), std::move(test)};
}

/// Standard CIFAR-10 binary layout: 3073 bytes per record, 1 label byte then
/// 3072 RGB bytes. Expects data_batch_{1..5}.bin and test_batch.bin.
inline std::pair<LabeledDataset, LabeledDataset> load_cifar10(const std::filesystem::path& dir) {
    auto load_file = [](const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw Error("cifar10: missing file " + path.string());
        std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
        if (bytes.empty() || bytes.size() % 3073 != 0)
            throw Error("cifar10: file size " + std::to_string(bytes.size()) + " not a multiple of 3073 in " +
                        path.string());
        return bytes;
    };
    auto parse = [](const std::vector<std::vector<std::uint8_t>>& files) {
        size_t n = 0;
        for (const auto& b : files) n += b.size() / 3073;
        LabeledDataset ds;
        ds.images = Tensor({static_cast<int>(n), 3, 32, 32});
        std::int64_t off = 0;
        for (const auto& bytes : files)
            for (size_t rec = 0; rec < bytes.size() / 3073; ++rec) {
                const std::uint8_t* p = bytes.data() + rec * 3073;
                if (p[0] > 9) throw Error("cifar10: label byte " + std::to_string(p[0]) + " out of range");
                ds.labels.push_back(p[0]);
                for (int i = 0; i < 3072; ++i) ds.images.data[static_cast<size_t>(off++)] = p[1 + i] / 255.0;
            }
        ds.class_names = {"airplane", "automobile", "bird", "cat", "deer",
                          "dog",      "frog",       "horse", "ship", "truck"};
        return ds;
    };
    std::vector<std::vector<std::uint8_t>> train_files;
    for (int i = 1; i <= 5; ++i) train_files.push_back(load_file(dir / ("data_batch_" + std::to_string(i) + ".bin")));
    LabeledDataset train = parse(train_files);
    LabeledDataset test = parse({load_file(dir / "test_batch.bin")});
    return {std::move(train), std::move(test)};
}

/// Stratified per-class subsample: floor(fraction * class size), at least 1
/// per class. Deterministic per seed.
inline LabeledDataset subsample_fraction(const LabeledDataset& d, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("subsample_fraction: fraction must be in (0,1]");
    Rng rng(seed);
    std::vector<std::vector<int>> by_class(static_cast<size_t>(d.num_classes()));
    for (int i = 0; i < d.size(); ++i) by_class[static_cast<size_t>(d.labels[static_cast<size_t>(i)])].push_back(i);
    std::vector<int> chosen;
    for (auto& idx : by_class) {
        if (idx.empty()) continue;
        // Fisher-Yates prefix of the needed size
        const size_t take = std::max<size_t>(1, static_cast<size_t>(fraction * static_cast<double>(idx.size())));
        for (size_t i = 0; i < take; ++i) {
            const size_t j = i + static_cast<size_t>(rng.below(idx.size() - i));
            std::swap(idx[i], idx[j]);
            chosen.push_back(idx[i]);
        }
    }
    if (chosen.empty()) throw Error("subsample_fraction: empty result");
    const int C = d.images.dim(1), H = d.images.dim(2), W = d.images.dim(3);
    const std::int64_t stride = static_cast<std::int64_t>(C) * H * W;
    LabeledDataset out;
    out.images = Tensor({static_cast<int>(chosen.size()), C, H, W});
    out.class_names = d.class_names;
    std::int64_t off = 0;
    for (int i : chosen) {
        std::copy_n(d.images.data.begin() + i * stride, stride, out.images.data.begin() + off);
        off += stride;
        out.labels.push_back(d.labels[static_cast<size_t>(i)]);
    }
    return out;
}

/// I.i.d. uniform [0,1] pixels with round-robin placeholder labels.
inline LabeledDataset gen_noise_dataset(int n, int C, int H, int W, int num_classes, std::uint64_t seed) {
    if (n < num_classes) throw Error("gen_noise_dataset: n must be >= num_classes");
    Rng rng(seed);
    LabeledDataset ds;
    ds.images = Tensor({n, C, H, W});
    for (double& v : ds.images.data) v = rng.uniform();
    for (int i = 0; i < n; ++i) ds.labels.push_back(i % num_classes);
    for (int c = 0; c < num_classes; ++c) ds.class_names.push_back("noise_" + std::to_string(c));
    return ds;
}

}  // namespace dreamforge
