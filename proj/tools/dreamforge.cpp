// dreamforge: pipeline driver for data-independent model compression.
// Subcommands cover each stage: train-teacher, extract-metadata, dream,
// distill, experiment, selfcheck. Exit codes: 0 ok, 1 selfcheck failure,
// 2 config error, 3 training error, 4 fingerprint mismatch.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <string>

#include "dreamforge/pipeline.hpp"
#include "dreamforge/selfcheck.hpp"

namespace df = dreamforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSelfcheck = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitFingerprint = 4;

df::PipelineSettings load_settings(const std::string& config_path) {
    return df::PipelineSettings::from_config(df::Config::load(config_path));
}

int classify_error(const std::string& what) {
    if (what.find("fingerprint") != std::string::npos) return kExitFingerprint;
    if (what.find("diverged") != std::string::npos || what.find("NaN") != std::string::npos)
        return kExitTraining;
    return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dreamforge: data-independent model compression pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    int workers = 1;
    std::string arm = "dream";

    auto* train_teacher = app.add_subcommand("train-teacher", "train the teacher on the real dataset");
    train_teacher->add_option("--config", config_path, "config file")->required();

    auto* extract = app.add_subcommand("extract-metadata",
                                       "harvest activations from a real subset and build cluster metadata");
    extract->add_option("--config", config_path, "config file")->required();

    auto* dream = app.add_subcommand("dream", "synthesize dream images from metadata");
    dream->add_option("--config", config_path, "config file")->required();
    dream->add_option("--workers", workers, "parallel dream workers")->check(CLI::PositiveNumber);

    auto* distill = app.add_subcommand("distill", "train a student via KD on one data arm");
    distill->add_option("--config", config_path, "config file")->required();
    distill->add_option("--arm", arm, "image source: real | alternate | random | dream");

    auto* experiment = app.add_subcommand("experiment", "run the full arm/fraction comparison");
    experiment->add_option("--config", config_path, "config file")->required();
    experiment->add_option("--workers", workers, "parallel dream workers")->check(CLI::PositiveNumber);

    auto* selfcheck = app.add_subcommand("selfcheck", "run gradient, k-means and PCA invariant suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (selfcheck->parsed()) {
            const auto t0 = std::chrono::steady_clock::now();
            bool all_ok = true;
            for (const df::CheckResult& r : df::run_selfcheck()) {
                std::printf("%-32s %s%s%s\n", r.name.c_str(), r.passed ? "ok" : "FAIL",
                            r.detail.empty() ? "" : "  ", r.detail.c_str());
                all_ok = all_ok && r.passed;
            }
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("selfcheck: %s in %.1fs\n", all_ok ? "pass" : "FAIL", secs);
            return all_ok ? kExitOk : kExitSelfcheck;
        }

        const df::PipelineSettings settings = load_settings(config_path);

        if (train_teacher->parsed()) {
            df::run_train_teacher(settings);
            return kExitOk;
        }
        if (extract->parsed()) {
            df::NetworkWeights teacher = df::load_weights(settings.teacher_path());
            df::run_extract_metadata(settings, teacher);
            return kExitOk;
        }
        if (dream->parsed()) {
            df::NetworkWeights teacher = df::load_weights(settings.teacher_path());
            df::Metadata md = df::load_metadata(settings.metadata_path(), df::fingerprint(teacher));
            df::run_dream(settings, teacher, md, workers);
            return kExitOk;
        }
        if (distill->parsed()) {
            df::NetworkWeights teacher = df::load_weights(settings.teacher_path());
            df::run_distill(settings, teacher, arm);
            return kExitOk;
        }
        if (experiment->parsed()) {
            df::run_experiment(settings, workers);
            return kExitOk;
        }
    } catch (const df::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return classify_error(e.what());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return kExitConfig;
}
