#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dreamforge/config.hpp"
#include "dreamforge/dataset.hpp"
#include "dreamforge/distill.hpp"
#include "dreamforge/dreamgen.hpp"
#include "dreamforge/metadata.hpp"
#include "dreamforge/network.hpp"

namespace dreamforge {

namespace fs = std::filesystem;

inline std::string fmt_f64(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Everything a pipeline run needs, resolved from the flat config file.
/// DREAMFORGE_SEED in the environment overrides the config seed.
struct PipelineSettings {
    std::uint64_t seed = 1;

    // dataset
    std::string dataset_kind = "toy";  // toy | cifar10
    int num_classes = 4;
    int per_class = 300;
    std::string cifar_dir;

    // metadata
    double fraction = 0.1;
    int k_per_class = 4;
    int m = 32;
    bool global_clusters = false;

    // dreams
    int dream_n = 480;
    DreamOptConfig dream;

    // distillation / training; the student needs fewer epochs than the
    // teacher: its training sets (dreams or a same-sized real set) are small
    // and the KL objective overfits them past this point
    KDConfig distill = [] {
        KDConfig c;
        c.epochs = 20;
        return c;
    }();
    KDConfig teacher_train;

    fs::path output_dir = "out";
    std::string config_hash;

    static PipelineSettings from_config(const Config& cfg) {
        PipelineSettings s;
        s.seed = cfg.get_u64("seed", 1);
        if (const char* env = std::getenv("DREAMFORGE_SEED")) s.seed = std::stoull(env);

        s.dataset_kind = cfg.get_str("dataset.kind", "toy");
        if (s.dataset_kind != "toy" && s.dataset_kind != "cifar10")
            throw Error("config: dataset.kind must be toy or cifar10");
        s.num_classes = static_cast<int>(cfg.get_i64("dataset.num_classes", 4));
        s.per_class = static_cast<int>(cfg.get_i64("dataset.per_class", 300));
        s.cifar_dir = cfg.get_str("dataset.cifar_dir", "");

        s.fraction = cfg.get_f64("metadata.fraction", 0.1);
        if (!(s.fraction > 0.0 && s.fraction <= 1.0)) throw Error("config: metadata.fraction must be in (0,1]");
        s.k_per_class = static_cast<int>(cfg.get_i64("metadata.k_per_class", 4));
        s.m = static_cast<int>(cfg.get_i64("metadata.m", 32));
        s.global_clusters = cfg.get_i64("metadata.global_clusters", 0) != 0;

        s.dream_n = static_cast<int>(cfg.get_i64("dream.n", 480));
        if (s.dream_n < 1) throw Error("config: dream.n must be >= 1");
        s.dream.lr = cfg.get_f64("dream.lr", 0.05);
        s.dream.iterations = static_cast<int>(cfg.get_i64("dream.iterations", 500));
        s.dream.init_std = cfg.get_f64("dream.init_std", 0.5);

        s.distill.temperature = cfg.get_f64("distill.temperature", 4.0);
        s.distill.alpha = cfg.get_f64("distill.alpha", 1.0);
        s.distill.epochs = static_cast<int>(cfg.get_i64("distill.epochs", 20));
        s.distill.batch_size = static_cast<int>(cfg.get_i64("distill.batch_size", 32));
        s.distill.lr = cfg.get_f64("distill.lr", 1e-3);
        s.distill.seed = s.seed;

        s.teacher_train.epochs = static_cast<int>(cfg.get_i64("teacher.epochs", 30));
        s.teacher_train.batch_size = static_cast<int>(cfg.get_i64("teacher.batch_size", 32));
        s.teacher_train.lr = cfg.get_f64("teacher.lr", 1e-3);
        s.teacher_train.seed = s.seed;

        s.output_dir = cfg.get_str("output_dir", "out");
        s.config_hash = cfg.hash();
        return s;
    }

    std::pair<LabeledDataset, LabeledDataset> load_real_data() const {
        if (dataset_kind == "cifar10") {
            if (cifar_dir.empty()) throw Error("config: dataset.cifar_dir required for cifar10");
            return load_cifar10(cifar_dir);
        }
        return gen_toy(num_classes, per_class, seed);
    }

    std::pair<LabeledDataset, LabeledDataset> load_alternate_data() const {
        if (dataset_kind == "cifar10")
            throw Error("alternate arm is only defined for the toy dataset");
        return gen_toy(num_classes, per_class, Rng::derive(seed, 0xA17), /*alternate=*/true);
    }

    std::pair<NetworkSpec, NetworkSpec> specs() const {
        auto [teacher, student] = default_specs(num_classes);
        if (dataset_kind == "cifar10") {
            teacher.in_channels = student.in_channels = 3;
            teacher.in_height = student.in_height = 32;
            teacher.in_width = student.in_width = 32;
            teacher.num_classes = student.num_classes = 10;
            teacher.layers.back().out = 10;
            student.layers.back().out = 10;
            teacher.validate();
            student.validate();
        }
        return {teacher, student};
    }

    fs::path teacher_path() const { return output_dir / "teacher.ddwt"; }
    fs::path metadata_path() const { return output_dir / "metadata.ddmd"; }
    fs::path dream_dir() const { return output_dir / "dreams"; }

    void write_provenance(const fs::path& artifact, const std::string& teacher_fp_hex) const {
        write_text_file(artifact.string() + ".prov", "config_hash=" + config_hash + " seed=" +
                                                          std::to_string(seed) + " teacher_fingerprint=" +
                                                          teacher_fp_hex + "\n");
    }
};

inline void write_train_report_csv(const fs::path& path, const TrainReport& report) {
    std::string csv = "epoch,train_loss,test_acc\n";
    for (size_t e = 0; e < report.train_loss.size(); ++e)
        csv += std::to_string(e) + "," + fmt_f64(report.train_loss[e]) + "," + fmt_f64(report.test_acc[e]) + "\n";
    write_text_file(path, csv);
}

// ---- stage: train-teacher ---------------------------------------------

struct TeacherResult {
    NetworkWeights weights;
    TrainReport report;
    fs::path weight_file;
};

inline TeacherResult run_train_teacher(const PipelineSettings& s, bool quiet = false) {
    fs::create_directories(s.output_dir);
    auto [train, test] = s.load_real_data();
    auto [teacher_spec, student_spec] = s.specs();
    (void)student_spec;
    auto [weights, report] = train_teacher(teacher_spec, train, test, s.teacher_train);
    save_weights(weights, s.teacher_path());
    const std::string fp = hex(fingerprint(weights));
    s.write_provenance(s.teacher_path(), fp);
    write_train_report_csv(s.output_dir / "teacher_train_report.csv", report);
    s.write_provenance(s.output_dir / "teacher_train_report.csv", fp);
    if (!quiet)
        std::printf("teacher: accuracy=%.4f epochs=%d params=%lld file=%s\n", report.final_accuracy,
                    s.teacher_train.epochs, static_cast<long long>(weights.spec.param_count()),
                    s.teacher_path().string().c_str());
    return {std::move(weights), std::move(report), s.teacher_path()};
}

// ---- stage: extract-metadata -------------------------------------------

struct MetadataResult {
    Metadata metadata;
    SizeReport sizes;
    fs::path metadata_file;
};

inline MetadataResult run_extract_metadata(const PipelineSettings& s, const NetworkWeights& teacher,
                                           bool quiet = false) {
    fs::create_directories(s.output_dir);
    auto [train, test] = s.load_real_data();
    (void)test;
    LabeledDataset subset = subsample_fraction(train, s.fraction, Rng::derive(s.seed, 0x5B5));
    ActivationSet acts = harvest_activations(teacher, subset);
    Metadata md = build_metadata(acts, s.k_per_class, s.m, Rng::derive(s.seed, 0x3D), fingerprint(teacher),
                                 train.num_classes(), !s.global_clusters);
    save_metadata(md, s.metadata_path());
    s.write_provenance(s.metadata_path(), hex(md.teacher_fingerprint));
    SizeReport sizes = size_report(md, subset);
    if (!quiet)
        std::printf("metadata: fraction=%.3f clusters=%zu metadata_bytes=%llu dataset_bytes=%llu ratio=%.6f\n",
                    s.fraction, md.clusters.size(), static_cast<unsigned long long>(sizes.metadata_bytes),
                    static_cast<unsigned long long>(sizes.dataset_bytes), sizes.ratio);
    return {std::move(md), sizes, s.metadata_path()};
}

// ---- stage: dream -------------------------------------------------------

struct DreamSet {
    std::vector<DreamImage> dreams;
    double mean_final_loss = 0.0;
    double class_consistency = 0.0;  // fraction whose teacher-argmax == class_id
};

inline DreamSet make_dreams(const PipelineSettings& s, const NetworkWeights& teacher, const Metadata& md,
                            int workers) {
    if (fingerprint(teacher) != md.teacher_fingerprint)
        throw Error("fingerprint mismatch: metadata was built from a different teacher");
    std::vector<TargetActivation> targets = sample_targets(md, s.dream_n, Rng::derive(s.seed, 0xD2EA));
    DreamSet set;
    set.dreams = generate_batch(teacher, targets, s.dream, workers);
    int consistent = 0;
    for (const DreamImage& d : set.dreams) {
        set.mean_final_loss += d.final_loss;
        Tensor batch({1, d.pixels.dim(0), d.pixels.dim(1), d.pixels.dim(2)}, d.pixels.data);
        const Tensor logits = forward(teacher, batch).logits;
        int arg = 0;
        for (int j = 1; j < logits.dim(1); ++j)
            if (logits[j] > logits[arg]) arg = j;
        if (arg == d.class_id) consistent++;
    }
    set.mean_final_loss /= static_cast<double>(set.dreams.size());
    set.class_consistency = static_cast<double>(consistent) / static_cast<double>(set.dreams.size());
    return set;
}

/// Writes the dream directory: one PGM/PPM per image plus manifest.csv. The
/// manifest's final_loss column is recomputed from the quantized pixels that
/// actually land in the files, so reloading and re-evaluating reproduces it.
inline void write_dream_dir(const fs::path& dir, const DreamSet& set, const NetworkWeights& teacher,
                            const std::vector<TargetActivation>& targets, const PipelineSettings& s) {
    fs::create_directories(dir);
    std::string manifest = "filename,class_id,cluster_index,final_loss,seed\n";
    std::map<std::pair<int, int>, int> counters;
    const bool color = teacher.spec.in_channels == 3;
    for (size_t i = 0; i < set.dreams.size(); ++i) {
        const DreamImage& d = set.dreams[i];
        const int idx = counters[{d.class_id, d.cluster_index}]++;
        const std::string name = "class" + std::to_string(d.class_id) + "_cluster" +
                                 std::to_string(d.cluster_index) + "_" + std::to_string(idx) +
                                 (color ? ".ppm" : ".pgm");
        write_pnm(dir / name, d.pixels);
        // loss on the quantized pixels as stored on disk
        const Tensor quantized = read_pnm(dir / name);
        Tensor batch({1, quantized.dim(0), quantized.dim(1), quantized.dim(2)}, quantized.data);
        const Tensor emb = forward(teacher, batch).embedding;
        double loss = 0.0;
        for (std::int64_t j = 0; j < emb.numel(); ++j) {
            const double diff = emb[j] - targets[i].t[j];
            loss += diff * diff;
        }
        manifest += name + "," + std::to_string(d.class_id) + "," + std::to_string(d.cluster_index) + "," +
                    fmt_f64(loss) + "," + std::to_string(d.seed) + "\n";
    }
    write_text_file(dir / "manifest.csv", manifest);
    s.write_provenance(dir / "manifest.csv", hex(fingerprint(teacher)));
}

/// Loads a dream directory back into a trainable image set.
inline std::pair<Tensor, std::vector<int>> load_dream_dir(const fs::path& dir) {
    const std::string manifest = read_text_file(dir / "manifest.csv");
    std::istringstream in(manifest);
    std::string line;
    if (!std::getline(in, line) || line.rfind("filename,", 0) != 0)
        throw Error("dream manifest: missing header in " + (dir / "manifest.csv").string());
    std::vector<Tensor> images;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string fname, cls;
        if (!std::getline(row, fname, ',') || !std::getline(row, cls, ','))
            throw Error("dream manifest: malformed row: " + line);
        images.push_back(read_pnm(dir / fname));
        labels.push_back(std::stoi(cls));
    }
    if (images.empty()) throw Error("dream manifest: no rows");
    const int C = images[0].dim(0), H = images[0].dim(1), W = images[0].dim(2);
    Tensor stack({static_cast<int>(images.size()), C, H, W});
    std::int64_t off = 0;
    for (const Tensor& img : images) {
        std::copy(img.data.begin(), img.data.end(), stack.data.begin() + off);
        off += img.numel();
    }
    return {std::move(stack), std::move(labels)};
}

inline DreamSet run_dream(const PipelineSettings& s, const NetworkWeights& teacher, const Metadata& md,
                          int workers, bool quiet = false) {
    std::vector<TargetActivation> targets = sample_targets(md, s.dream_n, Rng::derive(s.seed, 0xD2EA));
    DreamSet set = make_dreams(s, teacher, md, workers);
    write_dream_dir(s.dream_dir(), set, teacher, targets, s);
    if (!quiet)
        std::printf("dreams: n=%zu mean_final_loss=%.6f class_consistency=%.4f dir=%s\n", set.dreams.size(),
                    set.mean_final_loss, set.class_consistency, s.dream_dir().string().c_str());
    return set;
}

// ---- stage: distill ------------------------------------------------------

/// Image source for one training arm.
struct ArmData {
    Tensor images;
    std::vector<int> labels;  // may be placeholders; KD with alpha=1 ignores them
};

inline ArmData arm_images(const std::string& arm, const PipelineSettings& s, const DreamSet* dreams) {
    if (arm == "real") {
        auto [train, test] = s.load_real_data();
        (void)test;
        return {std::move(train.images), std::move(train.labels)};
    }
    if (arm == "alternate") {
        auto [train, test] = s.load_alternate_data();
        (void)test;
        return {std::move(train.images), std::move(train.labels)};
    }
    if (arm == "random") {
        auto [teacher_spec, student_spec] = s.specs();
        (void)student_spec;
        LabeledDataset noise = gen_noise_dataset(s.dream_n, teacher_spec.in_channels, teacher_spec.in_height,
                                                 teacher_spec.in_width, teacher_spec.num_classes,
                                                 Rng::derive(s.seed, 0xA015E));
        return {std::move(noise.images), std::move(noise.labels)};
    }
    if (arm == "dream") {
        if (dreams) {
            ArmData a;
            const auto& ds = dreams->dreams;
            const int C = ds[0].pixels.dim(0), H = ds[0].pixels.dim(1), W = ds[0].pixels.dim(2);
            a.images = Tensor({static_cast<int>(ds.size()), C, H, W});
            std::int64_t off = 0;
            for (const DreamImage& d : ds) {
                std::copy(d.pixels.data.begin(), d.pixels.data.end(), a.images.data.begin() + off);
                off += d.pixels.numel();
                a.labels.push_back(d.class_id);
            }
            return a;
        }
        auto [images, labels] = load_dream_dir(s.dream_dir());
        return {std::move(images), std::move(labels)};
    }
    throw Error("unknown arm '" + arm + "' (expected real, alternate, random or dream)");
}

struct DistillResult {
    NetworkWeights student;
    TrainReport report;
};

inline DistillResult run_distill(const PipelineSettings& s, const NetworkWeights& teacher,
                                 const std::string& arm, const DreamSet* dreams = nullptr,
                                 bool quiet = false) {
    fs::create_directories(s.output_dir);
    ArmData data = arm_images(arm, s, dreams);
    auto [teacher_spec, student_spec] = s.specs();
    (void)teacher_spec;
    auto [train, test] = s.load_real_data();
    (void)train;
    auto [student, report] = distill_student(student_spec, data.images, &data.labels, teacher, &test, s.distill);
    const fs::path student_file = s.output_dir / ("student_" + arm + ".ddwt");
    const fs::path report_file = s.output_dir / ("student_" + arm + "_report.csv");
    save_weights(student, student_file);
    write_train_report_csv(report_file, report);
    const std::string fp = hex(fingerprint(teacher));
    s.write_provenance(student_file, fp);
    s.write_provenance(report_file, fp);
    if (!quiet)
        std::printf("distill[%s]: accuracy=%.4f images=%d epochs=%d\n", arm.c_str(), report.final_accuracy,
                    data.images.dim(0), s.distill.epochs);
    return {std::move(student), std::move(report)};
}

// ---- stage: experiment ---------------------------------------------------

struct ExperimentRow {
    std::string arm;
    double data_fraction;
    double student_accuracy;
    std::uint64_t seed;
};

/// Runs the full comparison: dream arm at fractions {0.1,0.25,0.5,1.0} of the
/// generated dream set plus the three reference arms at full size, 3 seeds
/// each. Rows are flushed to the CSV as they complete.
inline std::vector<ExperimentRow> run_experiment(const PipelineSettings& s, int workers, bool quiet = false) {
    fs::create_directories(s.output_dir);
    const fs::path csv_path = s.output_dir / "experiment.csv";

    auto [train, test] = s.load_real_data();
    (void)train;
    NetworkWeights teacher = load_weights(s.teacher_path());
    Metadata md = load_metadata(s.metadata_path(), fingerprint(teacher));
    DreamSet dreams = make_dreams(s, teacher, md, workers);
    auto [teacher_spec, student_spec] = s.specs();
    (void)teacher_spec;

    std::string csv = "arm,data_fraction,student_accuracy,seed\n";
    write_text_file(csv_path, csv);
    std::vector<ExperimentRow> rows;
    const std::vector<double> fractions = {0.1, 0.25, 0.5, 1.0};
    const std::vector<std::string> ref_arms = {"random", "alternate", "real"};

    auto flush_row = [&](const ExperimentRow& r) {
        rows.push_back(r);
        csv += r.arm + "," + fmt_f64(r.data_fraction) + "," + fmt_f64(r.student_accuracy) + "," +
               std::to_string(r.seed) + "\n";
        write_text_file(csv_path, csv);
        if (!quiet)
            std::printf("experiment: arm=%s fraction=%.2f seed=%llu accuracy=%.4f\n", r.arm.c_str(),
                        r.data_fraction, static_cast<unsigned long long>(r.seed), r.student_accuracy);
    };

    for (std::uint64_t rep = 0; rep < 3; ++rep) {
        const std::uint64_t run_seed = s.seed + rep;
        KDConfig kd = s.distill;
        kd.seed = run_seed;

        ArmData dream_all = arm_images("dream", s, &dreams);
        const int n_total = dream_all.images.dim(0);
        // seeded permutation so fraction prefixes are unbiased across clusters
        std::vector<int> perm(static_cast<size_t>(n_total));
        std::iota(perm.begin(), perm.end(), 0);
        Rng prng(Rng::derive(run_seed, 0xF2AC));
        for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[static_cast<size_t>(prng.below(i))]);

        for (double frac : fractions) {
            const int n = std::max(1, static_cast<int>(frac * n_total));
            const int C = dream_all.images.dim(1), H = dream_all.images.dim(2), W = dream_all.images.dim(3);
            const std::int64_t stride = static_cast<std::int64_t>(C) * H * W;
            Tensor subset({n, C, H, W});
            std::vector<int> labels;
            for (int i = 0; i < n; ++i) {
                std::copy_n(dream_all.images.data.begin() + perm[static_cast<size_t>(i)] * stride, stride,
                            subset.data.begin() + i * stride);
                labels.push_back(dream_all.labels[static_cast<size_t>(perm[static_cast<size_t>(i)])]);
            }
            auto [student, report] = distill_student(student_spec, subset, &labels, teacher, &test, kd);
            flush_row({"dream", frac, report.final_accuracy, run_seed});
        }
        for (const std::string& arm : ref_arms) {
            PipelineSettings arm_settings = s;
            if (arm == "random") arm_settings.seed = run_seed;  // fresh noise draw per rep
            ArmData data = arm_images(arm, arm_settings, nullptr);
            auto [student, report] = distill_student(student_spec, data.images, &data.labels, teacher, &test, kd);
            flush_row({arm, 1.0, report.final_accuracy, run_seed});
        }
    }
    s.write_provenance(csv_path, hex(fingerprint(teacher)));
    return rows;
}

}  // namespace dreamforge
