#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "dreamforge/tensor.hpp"

namespace dreamforge {

/// Reverse-mode tape over a fixed op set. Nodes are appended in evaluation
/// order, so the insertion order is already a topological order and the
/// backward pass is a single reverse sweep. One graph per thread; tensors
/// held by the graph are never mutated after insertion.
class Graph {
public:
    enum class Op {
        Leaf,
        Matmul,
        Conv2d,
        Relu,
        Sigmoid,
        AvgPool2x2,
        GlobalAvgPool,
        Add,
        Scale,
        BiasAdd,
        Softmax,
        CrossEntropy,
        SquaredL2,
        KlDiv,
    };

    using NodeId = int;

    /// Adds an input tensor. Differentiable leaves receive gradients from
    /// backward(); constants do not.
    NodeId leaf(Tensor t, bool differentiable = false) {
        t.require_finite("leaf");
        return push(Op::Leaf, {}, std::move(t), differentiable);
    }

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }

    // ---- op suite -------------------------------------------------------

    /// (n,k) x (k,m) -> (n,m)
    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
            throw Error("matmul: incompatible shapes " + shape_str(A.shape) + " x " + shape_str(B.shape));
        const int n = A.dim(0), k = A.dim(1), m = B.dim(1);
        Tensor C({n, m});
        for (int i = 0; i < n; ++i) {
            const double* arow = &A.data[static_cast<size_t>(i) * k];
            double* crow = &C.data[static_cast<size_t>(i) * m];
            for (int p = 0; p < k; ++p) {
                const double av = arow[p];
                if (av == 0.0) continue;
                const double* brow = &B.data[static_cast<size_t>(p) * m];
                for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
            }
        }
        return push(Op::Matmul, {a, b}, std::move(C));
    }

    /// input (N,Ci,H,W), kernel (Co,Ci,kh,kw) with odd kh,kw; stride 1,
    /// zero "same" padding -> (N,Co,H,W)
    NodeId conv2d(NodeId x, NodeId kernel) {
        const Tensor& X = value(x);
        const Tensor& K = value(kernel);
        if (X.rank() != 4 || K.rank() != 4 || X.dim(1) != K.dim(1) || K.dim(2) % 2 == 0 || K.dim(3) % 2 == 0)
            throw Error("conv2d: incompatible shapes " + shape_str(X.shape) + " * " + shape_str(K.shape));
        const int N = X.dim(0), Ci = X.dim(1), H = X.dim(2), W = X.dim(3);
        const int Co = K.dim(0), kh = K.dim(2), kw = K.dim(3);
        const int ph = kh / 2, pw = kw / 2;
        Tensor Y({N, Co, H, W});
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Co; ++co) {
                double* yp = &Y.data[(static_cast<size_t>(n) * Co + co) * H * W];
                for (int ci = 0; ci < Ci; ++ci) {
                    const double* xp = &X.data[(static_cast<size_t>(n) * Ci + ci) * H * W];
                    const double* kp = &K.data[(static_cast<size_t>(co) * Ci + ci) * kh * kw];
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const double kv = kp[ky * kw + kx];
                            if (kv == 0.0) continue;
                            const int y0 = std::max(0, ph - ky), y1 = std::min(H, H + ph - ky);
                            const int x0 = std::max(0, pw - kx), x1 = std::min(W, W + pw - kx);
                            for (int oy = y0; oy < y1; ++oy) {
                                const double* xrow = xp + (oy + ky - ph) * W + (kx - pw);
                                double* yrow = yp + oy * W;
                                for (int ox = x0; ox < x1; ++ox) yrow[ox] += kv * xrow[ox];
                            }
                        }
                }
            }
        return push(Op::Conv2d, {x, kernel}, std::move(Y));
    }

    NodeId relu(NodeId x) {
        Tensor Y = value(x);
        for (double& v : Y.data) v = v > 0.0 ? v : 0.0;
        return push(Op::Relu, {x}, std::move(Y));
    }

    NodeId sigmoid(NodeId x) {
        Tensor Y = value(x);
        for (double& v : Y.data) v = 1.0 / (1.0 + std::exp(-v));
        return push(Op::Sigmoid, {x}, std::move(Y));
    }

    /// 2x2 mean pooling, stride 2; H and W must be even.
    NodeId avg_pool2x2(NodeId x) {
        const Tensor& X = value(x);
        if (X.rank() != 4 || X.dim(2) % 2 != 0 || X.dim(3) % 2 != 0)
            throw Error("avg_pool2x2: need (N,C,even,even), got " + shape_str(X.shape));
        const int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
        Tensor Y({N, C, H / 2, W / 2});
        for (int nc = 0; nc < N * C; ++nc) {
            const double* xp = &X.data[static_cast<size_t>(nc) * H * W];
            double* yp = &Y.data[static_cast<size_t>(nc) * (H / 2) * (W / 2)];
            for (int oy = 0; oy < H / 2; ++oy)
                for (int ox = 0; ox < W / 2; ++ox)
                    yp[oy * (W / 2) + ox] = 0.25 * (xp[(2 * oy) * W + 2 * ox] + xp[(2 * oy) * W + 2 * ox + 1] +
                                                    xp[(2 * oy + 1) * W + 2 * ox] + xp[(2 * oy + 1) * W + 2 * ox + 1]);
        }
        return push(Op::AvgPool2x2, {x}, std::move(Y));
    }

    /// (N,C,H,W) -> (N,C), per-channel spatial mean.
    NodeId global_avg_pool(NodeId x) {
        const Tensor& X = value(x);
        if (X.rank() != 4) throw Error("global_avg_pool: need rank-4 input, got " + shape_str(X.shape));
        const int N = X.dim(0), C = X.dim(1), HW = X.dim(2) * X.dim(3);
        Tensor Y({N, C});
        for (int nc = 0; nc < N * C; ++nc) {
            const double* xp = &X.data[static_cast<size_t>(nc) * HW];
            double s = 0.0;
            for (int i = 0; i < HW; ++i) s += xp[i];
            Y.data[static_cast<size_t>(nc)] = s / HW;
        }
        return push(Op::GlobalAvgPool, {x}, std::move(Y));
    }

    NodeId add(NodeId a, NodeId b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (!A.same_shape(B))
            throw Error("add: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
        Tensor Y = A;
        for (std::int64_t i = 0; i < Y.numel(); ++i) Y[i] += B[i];
        return push(Op::Add, {a, b}, std::move(Y));
    }

    /// Multiply by a compile-time-constant scalar (not a graph node).
    NodeId scale(NodeId x, double s) {
        Tensor Y = value(x);
        for (double& v : Y.data) v *= s;
        NodeId id = push(Op::Scale, {x}, std::move(Y));
        nodes_[static_cast<size_t>(id)].scalar = s;
        return id;
    }

    /// (n,m)+(m) or (N,C,H,W)+(C).
    NodeId bias_add(NodeId x, NodeId bias) {
        const Tensor& X = value(x);
        const Tensor& B = value(bias);
        if (B.rank() != 1) throw Error("bias_add: bias must be rank 1, got " + shape_str(B.shape));
        Tensor Y = X;
        if (X.rank() == 2 && X.dim(1) == B.dim(0)) {
            const int n = X.dim(0), m = X.dim(1);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) Y.data[static_cast<size_t>(i) * m + j] += B[j];
        } else if (X.rank() == 4 && X.dim(1) == B.dim(0)) {
            const int N = X.dim(0), C = X.dim(1), HW = X.dim(2) * X.dim(3);
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    for (int i = 0; i < HW; ++i) Y.data[(static_cast<size_t>(n) * C + c) * HW + i] += B[c];
        } else {
            throw Error("bias_add: shape mismatch " + shape_str(X.shape) + " + " + shape_str(B.shape));
        }
        return push(Op::BiasAdd, {x, bias}, std::move(Y));
    }

    /// Row-wise max-subtracted softmax on (n,m).
    NodeId softmax(NodeId x) {
        const Tensor& X = value(x);
        if (X.rank() != 2) throw Error("softmax: need rank-2 input, got " + shape_str(X.shape));
        X.require_finite("softmax");
        const int n = X.dim(0), m = X.dim(1);
        Tensor Y({n, m});
        for (int i = 0; i < n; ++i) {
            const double* xr = &X.data[static_cast<size_t>(i) * m];
            double* yr = &Y.data[static_cast<size_t>(i) * m];
            double mx = xr[0];
            for (int j = 1; j < m; ++j) mx = std::max(mx, xr[j]);
            double s = 0.0;
            for (int j = 0; j < m; ++j) s += (yr[j] = std::exp(xr[j] - mx));
            for (int j = 0; j < m; ++j) yr[j] /= s;
        }
        return push(Op::Softmax, {x}, std::move(Y));
    }

    /// Mean over batch of -log softmax(logits)[label]. Labels are constants.
    NodeId cross_entropy(NodeId logits, std::vector<int> labels) {
        const Tensor& X = value(logits);
        if (X.rank() != 2 || X.dim(0) != static_cast<int>(labels.size()))
            throw Error("cross_entropy: logits " + shape_str(X.shape) + " vs " +
                        std::to_string(labels.size()) + " labels");
        const int n = X.dim(0), m = X.dim(1);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            const double* xr = &X.data[static_cast<size_t>(i) * m];
            if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= m)
                throw Error("cross_entropy: label out of range");
            double mx = xr[0];
            for (int j = 1; j < m; ++j) mx = std::max(mx, xr[j]);
            double s = 0.0;
            for (int j = 0; j < m; ++j) s += std::exp(xr[j] - mx);
            total += std::log(s) + mx - xr[labels[static_cast<size_t>(i)]];
        }
        NodeId id = push(Op::CrossEntropy, {logits}, Tensor::scalar(total / n));
        nodes_[static_cast<size_t>(id)].labels = std::move(labels);
        return id;
    }

    /// Sum of squares of the elementwise difference; scalar.
    NodeId squared_l2(NodeId a, NodeId b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (!A.same_shape(B))
            throw Error("squared_l2: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
        double s = 0.0;
        for (std::int64_t i = 0; i < A.numel(); ++i) {
            const double d = A[i] - B[i];
            s += d * d;
        }
        return push(Op::SquaredL2, {a, b}, Tensor::scalar(s));
    }

    /// Mean over batch of row-wise KL(p || q); rows of p and q are
    /// probability vectors. Terms with p == 0 contribute 0.
    NodeId kl_div(NodeId p, NodeId q) {
        const Tensor& P = value(p);
        const Tensor& Q = value(q);
        if (P.rank() != 2 || !P.same_shape(Q))
            throw Error("kl_div: shape mismatch " + shape_str(P.shape) + " vs " + shape_str(Q.shape));
        P.require_finite("kl_div p");
        Q.require_finite("kl_div q");
        const int n = P.dim(0), m = P.dim(1);
        double total = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                const double pv = P.data[static_cast<size_t>(i) * m + j];
                if (pv <= 0.0) continue;
                total += pv * (std::log(pv) - std::log(Q.data[static_cast<size_t>(i) * m + j]));
            }
        return push(Op::KlDiv, {p, q}, Tensor::scalar(total / n));
    }

    // ---- backward -------------------------------------------------------

    /// Reverse sweep from a scalar root. Returns gradients for every
    /// differentiable leaf; leaves not reachable from the root get zeros.
    std::unordered_map<NodeId, Tensor> backward(NodeId root) const {
        const auto& rnode = nodes_[static_cast<size_t>(root)];
        if (rnode.value.numel() != 1) throw Error("backward: root must be scalar");

        std::vector<char> reachable(nodes_.size(), 0);
        reachable[static_cast<size_t>(root)] = 1;
        for (int i = root; i >= 0; --i) {
            if (!reachable[static_cast<size_t>(i)]) continue;
            for (NodeId in : nodes_[static_cast<size_t>(i)].inputs) reachable[static_cast<size_t>(in)] = 1;
        }

        std::vector<Tensor> grad(nodes_.size());
        auto g = [&](NodeId id) -> Tensor& {
            Tensor& t = grad[static_cast<size_t>(id)];
            if (t.data.empty()) t = Tensor::zeros(nodes_[static_cast<size_t>(id)].value.shape);
            return t;
        };
        g(root)[0] = 1.0;

        for (int i = root; i >= 0; --i) {
            if (!reachable[static_cast<size_t>(i)]) continue;
            const Node& node = nodes_[static_cast<size_t>(i)];
            if (node.op == Op::Leaf) continue;
            const Tensor& gy = g(i);
            accumulate(node, gy, g);
        }

        std::unordered_map<NodeId, Tensor> out;
        for (size_t i = 0; i < nodes_.size(); ++i) {
            if (!nodes_[i].differentiable) continue;
            const NodeId id = static_cast<NodeId>(i);
            out.emplace(id, reachable[i] && !grad[i].data.empty() ? std::move(grad[i])
                                                                  : Tensor::zeros(nodes_[i].value.shape));
        }
        return out;
    }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Op op;
        std::vector<NodeId> inputs;
        Tensor value;
        bool differentiable = false;
        double scalar = 0.0;           // Scale
        std::vector<int> labels;       // CrossEntropy
    };

    NodeId push(Op op, std::vector<NodeId> inputs, Tensor value, bool differentiable = false) {
        value.require_finite(op_name(op));
        nodes_.push_back(Node{op, std::move(inputs), std::move(value), differentiable, 0.0, {}});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    static const char* op_name(Op op) {
        switch (op) {
            case Op::Leaf: return "leaf";
            case Op::Matmul: return "matmul";
            case Op::Conv2d: return "conv2d";
            case Op::Relu: return "relu";
            case Op::Sigmoid: return "sigmoid";
            case Op::AvgPool2x2: return "avg_pool2x2";
            case Op::GlobalAvgPool: return "global_avg_pool";
            case Op::Add: return "add";
            case Op::Scale: return "scale";
            case Op::BiasAdd: return "bias_add";
            case Op::Softmax: return "softmax";
            case Op::CrossEntropy: return "cross_entropy";
            case Op::SquaredL2: return "squared_l2";
            case Op::KlDiv: return "kl_div";
        }
        return "?";
    }

    template <typename GradOf>
    void accumulate(const Node& node, const Tensor& gy, GradOf&& g) const {
        const auto in = [&](int idx) -> const Tensor& { return nodes_[static_cast<size_t>(node.inputs[static_cast<size_t>(idx)])].value; };
        switch (node.op) {
            case Op::Leaf:
                break;
            case Op::Matmul: {
                const Tensor& A = in(0);
                const Tensor& B = in(1);
                Tensor& ga = g(node.inputs[0]);
                Tensor& gb = g(node.inputs[1]);
                const int n = A.dim(0), k = A.dim(1), m = B.dim(1);
                for (int i = 0; i < n; ++i)
                    for (int p = 0; p < k; ++p) {
                        double s = 0.0;
                        const double* gyr = &gy.data[static_cast<size_t>(i) * m];
                        const double* br = &B.data[static_cast<size_t>(p) * m];
                        for (int j = 0; j < m; ++j) s += gyr[j] * br[j];
                        ga.data[static_cast<size_t>(i) * k + p] += s;
                    }
                for (int p = 0; p < k; ++p)
                    for (int j = 0; j < m; ++j) {
                        double s = 0.0;
                        for (int i = 0; i < n; ++i)
                            s += A.data[static_cast<size_t>(i) * k + p] * gy.data[static_cast<size_t>(i) * m + j];
                        gb.data[static_cast<size_t>(p) * m + j] += s;
                    }
                break;
            }
            case Op::Conv2d: {
                const Tensor& X = in(0);
                const Tensor& K = in(1);
                Tensor& gx = g(node.inputs[0]);
                Tensor& gk = g(node.inputs[1]);
                const int N = X.dim(0), Ci = X.dim(1), H = X.dim(2), W = X.dim(3);
                const int Co = K.dim(0), kh = K.dim(2), kw = K.dim(3);
                const int ph = kh / 2, pw = kw / 2;
                for (int n = 0; n < N; ++n)
                    for (int co = 0; co < Co; ++co) {
                        const double* gyp = &gy.data[(static_cast<size_t>(n) * Co + co) * H * W];
                        for (int ci = 0; ci < Ci; ++ci) {
                            const double* xp = &X.data[(static_cast<size_t>(n) * Ci + ci) * H * W];
                            double* gxp = &gx.data[(static_cast<size_t>(n) * Ci + ci) * H * W];
                            const double* kp = &K.data[(static_cast<size_t>(co) * Ci + ci) * kh * kw];
                            double* gkp = &gk.data[(static_cast<size_t>(co) * Ci + ci) * kh * kw];
                            for (int ky = 0; ky < kh; ++ky)
                                for (int kx = 0; kx < kw; ++kx) {
                                    const double kv = kp[ky * kw + kx];
                                    double ks = 0.0;
                                    const int y0 = std::max(0, ph - ky), y1 = std::min(H, H + ph - ky);
                                    const int x0 = std::max(0, pw - kx), x1 = std::min(W, W + pw - kx);
                                    for (int oy = y0; oy < y1; ++oy) {
                                        const int iy = oy + ky - ph;
                                        const double* gyrow = gyp + oy * W;
                                        const double* xrow = xp + iy * W + (kx - pw);
                                        double* gxrow = gxp + iy * W + (kx - pw);
                                        for (int ox = x0; ox < x1; ++ox) {
                                            gxrow[ox] += kv * gyrow[ox];
                                            ks += xrow[ox] * gyrow[ox];
                                        }
                                    }
                                    gkp[ky * kw + kx] += ks;
                                }
                        }
                    }
                break;
            }
            case Op::Relu: {
                const Tensor& X = in(0);
                Tensor& gx = g(node.inputs[0]);
                for (std::int64_t i = 0; i < X.numel(); ++i)
                    if (X[i] > 0.0) gx[i] += gy[i];
                break;
            }
            case Op::Sigmoid: {
                Tensor& gx = g(node.inputs[0]);
                const Tensor& Y = node.value;
                for (std::int64_t i = 0; i < Y.numel(); ++i) gx[i] += gy[i] * Y[i] * (1.0 - Y[i]);
                break;
            }
            case Op::AvgPool2x2: {
                const Tensor& X = in(0);
                Tensor& gx = g(node.inputs[0]);
                const int H = X.dim(2), W = X.dim(3);
                const int NC = X.dim(0) * X.dim(1);
                for (int nc = 0; nc < NC; ++nc) {
                    const double* gyp = &gy.data[static_cast<size_t>(nc) * (H / 2) * (W / 2)];
                    double* gxp = &gx.data[static_cast<size_t>(nc) * H * W];
                    for (int oy = 0; oy < H / 2; ++oy)
                        for (int ox = 0; ox < W / 2; ++ox) {
                            const double v = 0.25 * gyp[oy * (W / 2) + ox];
                            gxp[(2 * oy) * W + 2 * ox] += v;
                            gxp[(2 * oy) * W + 2 * ox + 1] += v;
                            gxp[(2 * oy + 1) * W + 2 * ox] += v;
                            gxp[(2 * oy + 1) * W + 2 * ox + 1] += v;
                        }
                }
                break;
            }
            case Op::GlobalAvgPool: {
                const Tensor& X = in(0);
                Tensor& gx = g(node.inputs[0]);
                const int HW = X.dim(2) * X.dim(3);
                const int NC = X.dim(0) * X.dim(1);
                for (int nc = 0; nc < NC; ++nc) {
                    const double v = gy[nc] / HW;
                    double* gxp = &gx.data[static_cast<size_t>(nc) * HW];
                    for (int i = 0; i < HW; ++i) gxp[i] += v;
                }
                break;
            }
            case Op::Add: {
                Tensor& ga = g(node.inputs[0]);
                for (std::int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i];
                Tensor& gb = g(node.inputs[1]);
                for (std::int64_t i = 0; i < gy.numel(); ++i) gb[i] += gy[i];
                break;
            }
            case Op::Scale: {
                Tensor& gx = g(node.inputs[0]);
                for (std::int64_t i = 0; i < gy.numel(); ++i) gx[i] += node.scalar * gy[i];
                break;
            }
            case Op::BiasAdd: {
                const Tensor& X = in(0);
                Tensor& gx = g(node.inputs[0]);
                Tensor& gb = g(node.inputs[1]);
                for (std::int64_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
                if (X.rank() == 2) {
                    const int n = X.dim(0), m = X.dim(1);
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < m; ++j) gb[j] += gy.data[static_cast<size_t>(i) * m + j];
                } else {
                    const int N = X.dim(0), C = X.dim(1), HW = X.dim(2) * X.dim(3);
                    for (int n = 0; n < N; ++n)
                        for (int c = 0; c < C; ++c)
                            for (int i = 0; i < HW; ++i) gb[c] += gy.data[(static_cast<size_t>(n) * C + c) * HW + i];
                }
                break;
            }
            case Op::Softmax: {
                Tensor& gx = g(node.inputs[0]);
                const Tensor& Y = node.value;
                const int n = Y.dim(0), m = Y.dim(1);
                for (int i = 0; i < n; ++i) {
                    const double* yr = &Y.data[static_cast<size_t>(i) * m];
                    const double* gyr = &gy.data[static_cast<size_t>(i) * m];
                    double dot = 0.0;
                    for (int j = 0; j < m; ++j) dot += yr[j] * gyr[j];
                    for (int j = 0; j < m; ++j) gx.data[static_cast<size_t>(i) * m + j] += yr[j] * (gyr[j] - dot);
                }
                break;
            }
            case Op::CrossEntropy: {
                const Tensor& X = in(0);
                Tensor& gx = g(node.inputs[0]);
                const int n = X.dim(0), m = X.dim(1);
                const double go = gy[0] / n;
                for (int i = 0; i < n; ++i) {
                    const double* xr = &X.data[static_cast<size_t>(i) * m];
                    double mx = xr[0];
                    for (int j = 1; j < m; ++j) mx = std::max(mx, xr[j]);
                    double s = 0.0;
                    for (int j = 0; j < m; ++j) s += std::exp(xr[j] - mx);
                    for (int j = 0; j < m; ++j) {
                        double p = std::exp(xr[j] - mx) / s;
                        if (j == node.labels[static_cast<size_t>(i)]) p -= 1.0;
                        gx.data[static_cast<size_t>(i) * m + j] += go * p;
                    }
                }
                break;
            }
            case Op::SquaredL2: {
                const Tensor& A = in(0);
                const Tensor& B = in(1);
                Tensor& ga = g(node.inputs[0]);
                Tensor& gb = g(node.inputs[1]);
                const double go = gy[0];
                for (std::int64_t i = 0; i < A.numel(); ++i) {
                    const double d = 2.0 * (A[i] - B[i]) * go;
                    ga[i] += d;
                    gb[i] -= d;
                }
                break;
            }
            case Op::KlDiv: {
                const Tensor& P = in(0);
                const Tensor& Q = in(1);
                Tensor& gp = g(node.inputs[0]);
                Tensor& gq = g(node.inputs[1]);
                const int n = P.dim(0);
                const double go = gy[0] / n;
                for (std::int64_t i = 0; i < P.numel(); ++i) {
                    const double pv = P[i];
                    if (pv <= 0.0) continue;
                    gp[i] += go * (std::log(pv) - std::log(Q[i]) + 1.0);
                    gq[i] -= go * pv / Q[i];
                }
                break;
            }
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace dreamforge
