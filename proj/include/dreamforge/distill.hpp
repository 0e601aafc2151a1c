#pragma once

#include <chrono>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dreamforge/adam.hpp"
#include "dreamforge/dataset.hpp"
#include "dreamforge/graph.hpp"
#include "dreamforge/network.hpp"
#include "dreamforge/rng.hpp"

namespace dreamforge {

struct KDConfig {
    double temperature = 4.0;
    double alpha = 1.0;  // weight on the soft (teacher) term
    int epochs = 30;
    int batch_size = 32;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::uint64_t seed = 0;
};

struct TrainReport {
    std::vector<double> train_loss;  // per epoch
    std::vector<double> test_acc;    // per epoch
    double final_accuracy = 0.0;
    double wall_seconds = 0.0;
};

/// Builds the soft-target distillation loss on a tape:
///   alpha * T^2 * KL(softmax(teacher/T) || softmax(student/T))
///   + (1-alpha) * cross_entropy(student_logits, labels)
/// Teacher logits enter as constants; labels are required only when
/// alpha < 1.
inline Graph::NodeId build_kd_loss(Graph& g, Graph::NodeId student_logits, const Tensor& teacher_logits,
                                   const std::vector<int>* hard_labels, const KDConfig& cfg) {
    if (cfg.temperature <= 0.0) throw Error("kd_loss: temperature must be > 0");
    const Tensor& sl = g.value(student_logits);
    if (!sl.same_shape(teacher_logits))
        throw Error("kd_loss: logits shape mismatch " + shape_str(sl.shape) + " vs " +
                    shape_str(teacher_logits.shape));
    const double T = cfg.temperature;
    const Graph::NodeId teacher_soft = g.softmax(g.scale(g.leaf(teacher_logits), 1.0 / T));
    const Graph::NodeId student_soft = g.softmax(g.scale(student_logits, 1.0 / T));
    Graph::NodeId loss = g.scale(g.kl_div(teacher_soft, student_soft), cfg.alpha * T * T);
    if (cfg.alpha < 1.0) {
        if (!hard_labels) throw Error("kd_loss: alpha < 1 requires hard labels");
        loss = g.add(loss, g.scale(g.cross_entropy(student_logits, *hard_labels), 1.0 - cfg.alpha));
    }
    return loss;
}

/// Value-level kd_loss for tests and diagnostics.
inline double kd_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                      const std::vector<int>* hard_labels, const KDConfig& cfg) {
    Graph g;
    return g.value(build_kd_loss(g, g.leaf(student_logits), teacher_logits, hard_labels, cfg))[0];
}

/// Fraction of argmax(logits) == label; argmax ties break to the lowest
/// class index.
inline double evaluate(const NetworkWeights& w, const LabeledDataset& test) {
    if (test.size() == 0) throw Error("evaluate: empty test set");
    int correct = 0;
    const int batch = 64;
    const int C = test.images.dim(1), H = test.images.dim(2), W = test.images.dim(3);
    const std::int64_t stride = static_cast<std::int64_t>(C) * H * W;
    for (int start = 0; start < test.size(); start += batch) {
        const int n = std::min(batch, test.size() - start);
        Tensor chunk({n, C, H, W});
        std::copy_n(test.images.data.begin() + start * stride, n * stride, chunk.data.begin());
        const Tensor logits = forward(w, chunk).logits;
        const int m = logits.dim(1);
        for (int i = 0; i < n; ++i) {
            int arg = 0;
            for (int j = 1; j < m; ++j)
                if (logits.data[static_cast<size_t>(i) * m + j] > logits.data[static_cast<size_t>(i) * m + arg])
                    arg = j;
            if (arg == test.labels[static_cast<size_t>(start + i)]) correct++;
        }
    }
    return static_cast<double>(correct) / test.size();
}

namespace detail {

inline Tensor gather_batch(const Tensor& images, const std::vector<int>& order, int start, int n) {
    const int C = images.dim(1), H = images.dim(2), W = images.dim(3);
    const std::int64_t stride = static_cast<std::int64_t>(C) * H * W;
    Tensor batch({n, C, H, W});
    for (int i = 0; i < n; ++i)
        std::copy_n(images.data.begin() + static_cast<std::int64_t>(order[static_cast<size_t>(start + i)]) * stride,
                    stride, batch.data.begin() + static_cast<std::int64_t>(i) * stride);
    return batch;
}

/// Shared epoch/batch loop. loss_builder receives the tape, the student
/// logits node and the batch's example indices, and returns the loss node.
template <typename LossBuilder>
std::pair<NetworkWeights, TrainReport> train_loop(const NetworkSpec& spec, const Tensor& images, int n_examples,
                                                  const LabeledDataset* eval_set, const KDConfig& cfg,
                                                  LossBuilder&& loss_builder) {
    const auto t0 = std::chrono::steady_clock::now();
    NetworkWeights w = init_weights(spec, Rng::derive(cfg.seed, 0xC0FFEE));
    AdamState adam = AdamState::init(w.params, cfg.lr, cfg.beta1, cfg.beta2);
    Rng shuffle_rng(Rng::derive(cfg.seed, 0x5AFF1E));

    std::vector<int> order(static_cast<size_t>(n_examples));
    std::iota(order.begin(), order.end(), 0);

    TrainReport report;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.below(i))]);
        double epoch_loss = 0.0;
        int batches = 0;
        for (int start = 0; start < n_examples; start += cfg.batch_size) {
            const int n = std::min(cfg.batch_size, n_examples - start);
            Tensor batch = gather_batch(images, order, start, n);
            Graph g;
            ForwardGraph fg = build_forward(g, w, batch, /*weights_differentiable=*/true);
            Graph::NodeId loss = loss_builder(g, fg.logits, order, start, n);
            const double lv = g.value(loss)[0];
            if (!std::isfinite(lv)) throw Error("training diverged: NaN loss at epoch " + std::to_string(epoch));
            epoch_loss += lv;
            batches++;
            auto grads = g.backward(loss);
            std::vector<Tensor> gp;
            gp.reserve(fg.params.size());
            for (Graph::NodeId pid : fg.params) gp.push_back(std::move(grads.at(pid)));
            adam_step(w.params, gp, adam);
        }
        report.train_loss.push_back(epoch_loss / std::max(1, batches));
        report.test_acc.push_back(eval_set ? evaluate(w, *eval_set) : 0.0);
    }
    report.final_accuracy = report.test_acc.empty() ? 0.0 : report.test_acc.back();
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(w), std::move(report)};
}

}  // namespace detail

/// Plain cross-entropy training (used for the teacher and for the
/// hard-label baselines).
inline std::pair<NetworkWeights, TrainReport> train_hard_label(const NetworkSpec& spec, const Tensor& images,
                                                               const std::vector<int>& labels,
                                                               const LabeledDataset* eval_set,
                                                               const KDConfig& cfg) {
    if (images.rank() != 4 || images.dim(0) != static_cast<int>(labels.size()))
        throw Error("train_hard_label: image/label count mismatch");
    return detail::train_loop(spec, images, images.dim(0), eval_set, cfg,
                              [&](Graph& g, Graph::NodeId logits, const std::vector<int>& order, int start, int n) {
                                  std::vector<int> batch_labels(static_cast<size_t>(n));
                                  for (int i = 0; i < n; ++i)
                                      batch_labels[static_cast<size_t>(i)] =
                                          labels[static_cast<size_t>(order[static_cast<size_t>(start + i)])];
                                  return g.cross_entropy(logits, std::move(batch_labels));
                              });
}

inline std::pair<NetworkWeights, TrainReport> train_teacher(const NetworkSpec& spec, const LabeledDataset& train,
                                                            const LabeledDataset& test, const KDConfig& cfg) {
    train.validate();
    return train_hard_label(spec, train.images, train.labels, &test, cfg);
}

/// Knowledge distillation: the student minimizes the soft-target loss
/// against teacher logits computed fresh per batch; the teacher is never
/// updated. Labels are optional and only consulted when alpha < 1.
inline std::pair<NetworkWeights, TrainReport> distill_student(const NetworkSpec& student_spec,
                                                              const Tensor& images,
                                                              const std::vector<int>* labels,
                                                              const NetworkWeights& teacher,
                                                              const LabeledDataset* eval_set,
                                                              const KDConfig& cfg) {
    if (images.rank() != 4) throw Error("distill_student: images must be (n,C,H,W)");
    if (images.dim(1) != teacher.spec.in_channels || images.dim(2) != teacher.spec.in_height ||
        images.dim(3) != teacher.spec.in_width)
        throw Error("distill_student: image shape does not match teacher input");
    const bool need_labels = cfg.alpha < 1.0;
    if (need_labels && (!labels || static_cast<int>(labels->size()) != images.dim(0)))
        throw Error("distill_student: alpha < 1 requires one hard label per image");
    return detail::train_loop(
        student_spec, images, images.dim(0), eval_set, cfg,
        [&](Graph& g, Graph::NodeId logits, const std::vector<int>& order, int start, int n) {
            Tensor batch = detail::gather_batch(images, order, start, n);
            const Tensor teacher_logits = forward(teacher, batch).logits;
            std::optional<std::vector<int>> batch_labels;
            if (need_labels) {
                batch_labels.emplace(static_cast<size_t>(n));
                for (int i = 0; i < n; ++i)
                    (*batch_labels)[static_cast<size_t>(i)] =
                        (*labels)[static_cast<size_t>(order[static_cast<size_t>(start + i)])];
            }
            return build_kd_loss(g, logits, teacher_logits, batch_labels ? &*batch_labels : nullptr, cfg);
        });
}

}  // namespace dreamforge
