#pragma once

#include "hscnn/adam.hpp"
#include "hscnn/augment.hpp"
#include "hscnn/loss.hpp"
#include "hscnn/sample.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hscnn {

struct TrainOptions {
    int epochs = 300;
    Index batch_size = 32;
    double learning_rate = 1e-3;
    bool augment = true;
    /// Chance that a training sample is replaced by an augmented copy in an epoch.
    double augment_probability = 1.0;
    /// Scores validation on the originals plus one fixed augmented copy of each.
    bool augment_validation = true;
    AugmentOptions augment_options{};
    /// Re-estimates batch-norm running statistics after every epoch (see
    /// recalibrate_batchnorm); otherwise only the momentum average is kept.
    bool recalibrate_batchnorm = true;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    LossBreakdown train;
    LossBreakdown validation;
    double validation_malignancy = 0.0; // unweighted, used for selection
    bool best = false;                  // set a new minimum of validation_malignancy
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_validation_malignancy = 0.0;
};

struct TrainResult {
    Model<float> best;
    Model<float> last;
    TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam on the global loss with per-epoch shuffling and online augmentation.
/// Returns the snapshot with the lowest unweighted validation malignancy loss
/// (earliest epoch on ties). Throws NumericError on a non-finite loss.
TrainResult train(Model<float> model, const std::vector<NoduleSample>& train_set,
                  const std::vector<NoduleSample>& validation_set, const LossWeights& weights,
                  const TrainOptions& options, const EpochCallback& on_epoch = {});

/// Replaces every batch-norm running mean and variance with the average of
/// the per-batch statistics over `samples` (dropout off, fixed order),
/// computed with the current weights.
void recalibrate_batchnorm(Model<float>& model, const std::vector<NoduleSample>& samples, Index batch_size,
                           int threads = 1);

/// Minibatch boundaries over n items; a trailing batch of one joins the previous batch.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, Index batch_size);

struct Predictions {
    std::vector<Task> tasks;                        // heads present, semantic first, malignancy last
    std::vector<std::vector<double>> probabilities; // per task, P(label = 1) per sample

    bool has(Task t) const;
    const std::vector<double>& of(Task t) const;
};

/// Eval-mode softmax probabilities for every head.
Predictions predict(const Model<float>& model, const std::vector<NoduleSample>& samples, Index batch_size = 32,
                    int threads = 1);

struct DatasetLoss {
    LossBreakdown breakdown;        // sample-weighted means
    double unweighted_malignancy = 0.0;
};

DatasetLoss evaluate_loss(const Model<float>& model, const std::vector<NoduleSample>& samples,
                          const LossWeights& weights, Index batch_size = 32, int threads = 1);

/// History log, one line per epoch:
///   epoch=<n> train.global=<x> train.<task>=<x>... val.global=<x> val.<task>=<x>...
///   val.malignancy_unweighted=<x> best=<0|1>
/// preceded by a `# hscnn-history 1` line; numbers use %.9g.
std::string format_history(const TrainHistory& history);
void write_history(const TrainHistory& history, const std::string& path);

} // namespace hscnn
