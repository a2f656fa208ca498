// hscnn command-line driver.
#include "hscnn/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace hscnn;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kDivergence = 4 };

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Hierarchical semantic 3D CNN for lung nodule malignancy"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    std::uint64_t seed = 0;
    int threads = 1;
    app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Override the configured seed");
    auto* threads_opt = app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output directory");
    app.add_flag("--resume", g.resume, "Skip cross-validation folds that already finished");

    Index count = 0;
    auto* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom dataset with manifest");
    auto* count_opt = phantom->add_option("-n,--count", count, "Number of phantoms")->check(CLI::PositiveNumber);

    std::string data, model, input, report_a, report_b;
    auto* preprocess = app.add_subcommand("preprocess", "Extract normalized cubes from a manifest");
    preprocess->add_option("manifest_dir", data, "Directory containing manifest.csv");

    auto* train_cmd = app.add_subcommand("train", "Train one model with validation-based selection");
    train_cmd->add_option("data", data, "Manifest or sample directory");

    auto* crossval = app.add_subcommand("crossval", "Four-fold cross-validation");
    crossval->add_option("data", data, "Manifest or sample directory");

    auto* predict_cmd = app.add_subcommand("predict", "Per-sample semantic and malignancy probabilities");
    predict_cmd->add_option("model", model, "Model file");
    predict_cmd->add_option("input", input, "Sample file, sample directory or manifest directory");

    auto* evaluate = app.add_subcommand("evaluate", "Metrics of a model on a labelled dataset");
    evaluate->add_option("model", model, "Model file");
    evaluate->add_option("data", data, "Manifest or sample directory");

    auto* stats = app.add_subcommand("stats", "Paired t-test on per-fold malignancy AUCs");
    stats->add_option("report_a", report_a, "aggregate.json of the first model")->required();
    stats->add_option("report_b", report_b, "aggregate.json of the second model")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*seed_opt)
            g.seed = seed;
        if (*threads_opt)
            g.threads = threads;
        if (stats->parsed()) {
            cmd_stats(report_a, report_b, g.out);
            return kOk;
        }
        RunConfig config = resolve_config(g);
        if (phantom->parsed()) {
            if (*count_opt)
                config.phantom.count = count;
            config.validate();
            cmd_phantom(config, g.out);
        } else if (preprocess->parsed()) {
            cmd_preprocess(config, data, g.out);
        } else if (train_cmd->parsed()) {
            cmd_train(config, data, g.out);
        } else if (crossval->parsed()) {
            cmd_crossval(config, data, g.out, g.resume);
        } else if (predict_cmd->parsed()) {
            cmd_predict(config, model, input, g.out);
        } else if (evaluate->parsed()) {
            cmd_evaluate(config, model, data, g.out);
        }
        return kOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const NumericError& e) {
        std::cerr << "numerical divergence: " << e.what() << '\n';
        return kDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
}
