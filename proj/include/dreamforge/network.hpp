#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dreamforge/graph.hpp"
#include "dreamforge/io.hpp"
#include "dreamforge/rng.hpp"
#include "dreamforge/tensor.hpp"

namespace dreamforge {

/// Layer descriptors for the small fixed convolutional architectures.
/// All convolutions are 3x3, stride 1, same padding.
enum class LayerKind : std::uint32_t { Conv = 0, Relu = 1, AvgPool2x2 = 2, GlobalAvgPool = 3, Dense = 4 };

struct Layer {
    LayerKind kind;
    int out = 0;  // out_channels for Conv, output width for Dense; unused otherwise

    bool operator==(const Layer&) const = default;
};

struct NetworkSpec {
    std::vector<Layer> layers;
    int in_channels = 1;
    int in_height = 16;
    int in_width = 16;
    int num_classes = 4;

    bool operator==(const NetworkSpec&) const = default;

    /// Channel count entering the global average pool.
    int embedding_dim() const {
        int c = in_channels;
        for (const Layer& l : layers) {
            if (l.kind == LayerKind::GlobalAvgPool) return c;
            if (l.kind == LayerKind::Conv) c = l.out;
        }
        throw Error("network spec has no global_avg_pool layer");
    }

    /// Enforces: exactly one global_avg_pool, followed only by dense layers;
    /// spatial dims stay positive and even where pooling requires it.
    void validate() const {
        if (in_channels <= 0 || in_height <= 0 || in_width <= 0 || num_classes <= 0)
            throw Error("network spec: bad input shape or class count");
        int h = in_height, w = in_width;
        bool seen_gap = false;
        for (const Layer& l : layers) {
            if (seen_gap && l.kind != LayerKind::Dense)
                throw Error("network spec: only dense layers may follow global_avg_pool");
            switch (l.kind) {
                case LayerKind::Conv:
                    if (l.out <= 0) throw Error("network spec: conv out_channels must be positive");
                    break;
                case LayerKind::Relu:
                    break;
                case LayerKind::AvgPool2x2:
                    if (h % 2 != 0 || w % 2 != 0) throw Error("network spec: avgpool2x2 needs even spatial dims");
                    h /= 2;
                    w /= 2;
                    break;
                case LayerKind::GlobalAvgPool:
                    if (seen_gap) throw Error("network spec: multiple global_avg_pool layers");
                    seen_gap = true;
                    break;
                case LayerKind::Dense:
                    if (!seen_gap) throw Error("network spec: dense before global_avg_pool");
                    if (l.out <= 0) throw Error("network spec: dense out must be positive");
                    break;
            }
        }
        if (!seen_gap) throw Error("network spec: missing global_avg_pool");
        if (layers.empty() || layers.back().kind != LayerKind::Dense || layers.back().out != num_classes)
            throw Error("network spec: last layer must be dense(num_classes)");
    }

    /// Ordered parameter shapes (conv kernel, conv bias, dense weight, dense
    /// bias per parameterized layer).
    std::vector<Shape> param_shapes() const {
        std::vector<Shape> shapes;
        int c = in_channels;
        int width = 0;  // dense input width once flattened by global_avg_pool
        for (const Layer& l : layers) {
            switch (l.kind) {
                case LayerKind::Conv:
                    shapes.push_back({l.out, c, 3, 3});
                    shapes.push_back({l.out});
                    c = l.out;
                    break;
                case LayerKind::GlobalAvgPool:
                    width = c;
                    break;
                case LayerKind::Dense:
                    shapes.push_back({width, l.out});
                    shapes.push_back({l.out});
                    width = l.out;
                    break;
                default:
                    break;
            }
        }
        return shapes;
    }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (const Shape& s : param_shapes()) n += shape_numel(s);
        return n;
    }
};

struct NetworkWeights {
    NetworkSpec spec;
    std::vector<Tensor> params;  // order given by spec.param_shapes()
};

struct ForwardOutput {
    Tensor embedding;  // (batch, embedding_dim)
    Tensor logits;     // (batch, num_classes)
};

/// Desk-scale teacher/student pair. Teacher: conv8-relu-pool-conv16-relu-
/// pool-conv32-relu-gap-dense; student: conv4-relu-pool-conv8-relu-gap-dense.
inline std::pair<NetworkSpec, NetworkSpec> default_specs(int num_classes = 4) {
    NetworkSpec teacher;
    teacher.in_channels = 1;
    teacher.in_height = 16;
    teacher.in_width = 16;
    teacher.num_classes = num_classes;
    teacher.layers = {{LayerKind::Conv, 8},  {LayerKind::Relu, 0}, {LayerKind::AvgPool2x2, 0},
                      {LayerKind::Conv, 16}, {LayerKind::Relu, 0}, {LayerKind::AvgPool2x2, 0},
                      {LayerKind::Conv, 32}, {LayerKind::Relu, 0}, {LayerKind::GlobalAvgPool, 0},
                      {LayerKind::Dense, num_classes}};
    NetworkSpec student = teacher;
    student.layers = {{LayerKind::Conv, 4}, {LayerKind::Relu, 0}, {LayerKind::AvgPool2x2, 0},
                      {LayerKind::Conv, 8}, {LayerKind::Relu, 0}, {LayerKind::GlobalAvgPool, 0},
                      {LayerKind::Dense, num_classes}};
    teacher.validate();
    student.validate();
    return {teacher, student};
}

/// Kaiming-style init: weights ~ Normal(0, 2/fan_in), biases zero.
inline NetworkWeights init_weights(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    NetworkWeights w;
    w.spec = spec;
    for (const Shape& s : spec.param_shapes()) {
        Tensor t(s);
        if (s.size() == 1) {
            // bias: zeros
        } else {
            const std::int64_t fan_in = s.size() == 4 ? static_cast<std::int64_t>(s[1]) * s[2] * s[3] : s[0];
            const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (double& v : t.data) v = rng.normal(0.0, std);
        }
        w.params.push_back(std::move(t));
    }
    return w;
}

/// Node ids of interest when a network forward pass is built on a tape.
struct ForwardGraph {
    Graph::NodeId input;
    std::vector<Graph::NodeId> params;  // aligned with NetworkWeights::params
    Graph::NodeId embedding;
    Graph::NodeId logits;
};

/// Builds the forward pass on an existing tape, starting from an existing
/// input node (which may itself be the output of other ops, e.g. sigmoid(Z)).
inline ForwardGraph build_forward(Graph& g, const NetworkWeights& w, Graph::NodeId input,
                                  bool weights_differentiable) {
    const Tensor& in = g.value(input);
    if (in.rank() != 4 || in.dim(1) != w.spec.in_channels || in.dim(2) != w.spec.in_height ||
        in.dim(3) != w.spec.in_width)
        throw Error("forward: batch shape " + shape_str(in.shape) + " does not match spec input (" +
                    std::to_string(w.spec.in_channels) + "," + std::to_string(w.spec.in_height) + "," +
                    std::to_string(w.spec.in_width) + ")");
    ForwardGraph fg;
    fg.input = input;
    size_t pi = 0;
    auto next_param = [&]() {
        if (pi >= w.params.size()) throw Error("forward: weight list shorter than spec");
        return fg.params.emplace_back(g.leaf(w.params[pi++], weights_differentiable));
    };
    Graph::NodeId cur = input;
    fg.embedding = -1;
    for (const Layer& l : w.spec.layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                Graph::NodeId k = next_param();
                Graph::NodeId b = next_param();
                cur = g.bias_add(g.conv2d(cur, k), b);
                break;
            }
            case LayerKind::Relu:
                cur = g.relu(cur);
                break;
            case LayerKind::AvgPool2x2:
                cur = g.avg_pool2x2(cur);
                break;
            case LayerKind::GlobalAvgPool:
                cur = g.global_avg_pool(cur);
                fg.embedding = cur;
                break;
            case LayerKind::Dense: {
                Graph::NodeId wt = next_param();
                Graph::NodeId b = next_param();
                cur = g.bias_add(g.matmul(cur, wt), b);
                break;
            }
        }
    }
    fg.logits = cur;
    return fg;
}

inline ForwardGraph build_forward(Graph& g, const NetworkWeights& w, const Tensor& batch,
                                  bool weights_differentiable, bool input_differentiable = false) {
    return build_forward(g, w, g.leaf(batch, input_differentiable), weights_differentiable);
}

/// Pure forward pass; embedding and logits from the same evaluation.
inline ForwardOutput forward(const NetworkWeights& w, const Tensor& batch) {
    Graph g;
    ForwardGraph fg = build_forward(g, w, batch, /*weights_differentiable=*/false);
    return ForwardOutput{g.value(fg.embedding), g.value(fg.logits)};
}

// ---- serialization (DDWT) -------------------------------------------------

namespace detail {
inline void write_spec(ByteWriter& w, const NetworkSpec& spec) {
    w.u32(static_cast<std::uint32_t>(spec.layers.size()));
    for (const Layer& l : spec.layers) {
        w.u32(static_cast<std::uint32_t>(l.kind));
        w.u32(static_cast<std::uint32_t>(l.out));
    }
    w.u32(static_cast<std::uint32_t>(spec.in_channels));
    w.u32(static_cast<std::uint32_t>(spec.in_height));
    w.u32(static_cast<std::uint32_t>(spec.in_width));
    w.u32(static_cast<std::uint32_t>(spec.num_classes));
    w.u32(static_cast<std::uint32_t>(spec.embedding_dim()));
}

inline NetworkSpec read_spec(ByteReader& r) {
    NetworkSpec spec;
    const std::uint32_t n = r.u32();
    if (n > 1000) throw Error("weight file: implausible layer count");
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t kind = r.u32();
        const std::uint32_t out = r.u32();
        if (kind > 4) throw Error("weight file: unknown layer kind");
        spec.layers.push_back(Layer{static_cast<LayerKind>(kind), static_cast<int>(out)});
    }
    spec.in_channels = static_cast<int>(r.u32());
    spec.in_height = static_cast<int>(r.u32());
    spec.in_width = static_cast<int>(r.u32());
    spec.num_classes = static_cast<int>(r.u32());
    const int edim = static_cast<int>(r.u32());
    spec.validate();
    if (edim != spec.embedding_dim()) throw Error("weight file: embedding_dim disagrees with layers");
    return spec;
}
}  // namespace detail

inline std::vector<std::uint8_t> serialize_weights(const NetworkWeights& w) {
    ByteWriter out;
    out.magic("DDWT");
    out.u32(1);
    detail::write_spec(out, w.spec);
    for (const Tensor& p : w.params) {
        out.u32(static_cast<std::uint32_t>(p.rank()));
        for (int d : p.shape) out.u32(static_cast<std::uint32_t>(d));
        out.f64s(p.data);
    }
    return std::move(out.bytes);
}

inline NetworkWeights deserialize_weights(ByteReader& r) {
    r.expect_magic("DDWT", "weight file");
    const std::uint32_t version = r.u32();
    if (version != 1) throw Error("weight file: unsupported version " + std::to_string(version));
    NetworkWeights w;
    w.spec = detail::read_spec(r);
    for (const Shape& expect : w.spec.param_shapes()) {
        const std::uint32_t rank = r.u32();
        Shape got;
        for (std::uint32_t i = 0; i < rank; ++i) got.push_back(static_cast<int>(r.u32()));
        if (got != expect)
            throw Error("weight file: param shape disagreement, file has " + shape_str(got) +
                        ", spec needs " + shape_str(expect));
        Tensor t(got, r.f64s(static_cast<size_t>(shape_numel(got))));
        t.require_finite("weight file param");
        w.params.push_back(std::move(t));
    }
    if (r.remaining() != 0) throw Error("weight file: trailing bytes");
    return w;
}

inline void save_weights(const NetworkWeights& w, const std::filesystem::path& path) {
    ByteWriter out;
    out.bytes = serialize_weights(w);
    out.to_file(path);
}

/// Loads weights; when expected_spec is given, the file's architecture must
/// match it exactly.
inline NetworkWeights load_weights(const std::filesystem::path& path,
                                   const std::optional<NetworkSpec>& expected_spec = std::nullopt) {
    ByteReader r = ByteReader::from_file(path);
    NetworkWeights w = deserialize_weights(r);
    if (expected_spec && !(w.spec == *expected_spec))
        throw Error("weight file: architecture disagrees with requested spec");
    return w;
}

/// SHA-256 of the serialized weights; binds metadata and dreams to the
/// exact teacher that produced them.
inline Digest fingerprint(const NetworkWeights& w) { return sha256(serialize_weights(w)); }

}  // namespace dreamforge
