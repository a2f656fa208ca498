#pragma once

#include "hscnn/config.hpp"
#include "hscnn/folds.hpp"
#include "hscnn/report.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hscnn {

/// Flags shared by every subcommand; overrides win over the config file.
struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out;
    bool resume = false;
};

RunConfig resolve_config(const GlobalOptions& options);

/// Progress verbosity from HSCNN_VERBOSE: 0 silent, 1 per fold (default), 2 per epoch.
int verbosity();

/// Reads a dataset from a manifest directory (preprocessed on the fly), a
/// sample-cache directory, or a single `.smp` file, and checks the cube size.
std::vector<NoduleSample> load_dataset(const std::string& path, const RunConfig& config);

/// Class weights from a census for the heads the network has; absent heads keep (0.5, 0.5).
LossWeights loss_weights_for(const RunConfig& config, const Census& train_census);

std::string census_text(const Census& census);

/// Phantom CT volumes plus manifest, census.txt and phantoms.csv (ground truth).
void cmd_phantom(const RunConfig& config, const std::string& out_dir);

/// Manifest directory to sample-cache directory.
void cmd_preprocess(const RunConfig& config, const std::string& data_path, const std::string& out_dir);

/// Trains on three subsets of a case-level split and selects on the fourth;
/// writes model.bin, history.log and report.json (validation metrics).
void cmd_train(const RunConfig& config, const std::string& data_path, const std::string& out_dir);

struct CrossvalResult {
    FoldPlan plan;
    std::vector<EvalReport> reports;
    AggregateReport aggregate;
    std::vector<int> trained_folds; // folds computed in this run (others resumed)
};

/// Four folds; writes fold_<k>/{model.bin, history.log, report.json,
/// predictions.csv, roc_<task>.csv, DONE}, folds.txt and aggregate.json.
/// With `resume`, a fold holding both DONE and model.bin is read back instead
/// of retrained.
CrossvalResult run_crossval(const RunConfig& config, const std::vector<NoduleSample>& samples,
                            const std::string& out_dir, bool resume);

void cmd_crossval(const RunConfig& config, const std::string& data_path, const std::string& out_dir, bool resume);

/// Prints per-sample probabilities; writes predictions.csv when out_dir is set.
void cmd_predict(const RunConfig& config, const std::string& model_path, const std::string& input,
                 const std::string& out_dir);

/// Writes report.json, predictions.csv and roc_<task>.csv.
void cmd_evaluate(const RunConfig& config, const std::string& model_path, const std::string& data_path,
                  const std::string& out_dir);

/// Paired t-test on per-fold malignancy AUCs of two aggregate reports.
PairedTestResult cmd_stats(const std::string& report_a, const std::string& report_b, const std::string& out_dir);

} // namespace hscnn
