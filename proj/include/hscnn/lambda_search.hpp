#pragma once

#include "hscnn/trainer.hpp"

#include <array>
#include <string>
#include <vector>

namespace hscnn {

using LambdaVector = std::array<double, kSemanticTaskCount>;

struct LambdaSearchOptions {
    std::vector<double> grid{0.05, 0.1, 0.2, 0.5, 1.0};
    int budget = 8;       // candidates trained in total; the coarse stage takes ceil(budget / 2)
    int epochs = 20;      // per candidate
    TrainOptions train{}; // everything but the epoch count
    std::uint64_t model_seed = 0;

    void validate() const;
};

struct LambdaCandidate {
    LambdaVector lambda{};
    double score = 0.0; // best validation malignancy loss; +inf when training diverged
    bool fine = false;
};

struct LambdaSearchResult {
    LambdaVector best{};
    double best_score = 0.0;
    std::vector<LambdaCandidate> candidates;
};

/// Randomized coarse-to-fine search. Coarse candidates are uniform over
/// grid^5; fine candidates move each coordinate of the best coarse point by
/// -1, 0 or +1 grid steps (clamped). Repeated vectors reuse their score.
LambdaSearchResult lambda_search(const NetworkConfig& config, const std::vector<NoduleSample>& train_set,
                                 const std::vector<NoduleSample>& validation_set, const LossWeights& base,
                                 const LambdaSearchOptions& options, std::uint64_t seed);

} // namespace hscnn
