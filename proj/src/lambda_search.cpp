#include "hscnn/lambda_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace hscnn {

void LambdaSearchOptions::validate() const
{
    if (grid.empty())
        throw ConfigError("lambda grid is empty");
    for (double g : grid)
        if (!(g >= 0.0) || !std::isfinite(g))
            throw ConfigError("lambda grid values must be finite and non-negative");
    if (!std::is_sorted(grid.begin(), grid.end()))
        throw ConfigError("lambda grid must be sorted ascending");
    if (budget < 1)
        throw ConfigError("lambda search budget must be at least 1");
    if (epochs < 1)
        throw ConfigError("lambda search epochs must be at least 1");
}

LambdaSearchResult lambda_search(const NetworkConfig& config, const std::vector<NoduleSample>& train_set,
                                 const std::vector<NoduleSample>& validation_set, const LossWeights& base,
                                 const LambdaSearchOptions& options, std::uint64_t seed)
{
    options.validate();
    if (config.variant != Variant::Hscnn)
        throw ConfigError("lambda search needs the hscnn variant");

    using Index5 = std::array<int, kSemanticTaskCount>;
    const int g = static_cast<int>(options.grid.size());
    Rng rng = make_rng(seed, 700);
    std::uniform_int_distribution<int> pick(0, g - 1);
    std::uniform_int_distribution<int> step(-1, 1);
    std::map<Index5, double> scored;
    LambdaSearchResult result;
    result.best_score = std::numeric_limits<double>::infinity();
    Index5 best_index{};
    bool have_best = false;

    auto evaluate = [&](const Index5& idx, bool fine) {
        LambdaCandidate c;
        c.fine = fine;
        for (std::size_t j = 0; j < idx.size(); ++j)
            c.lambda[j] = options.grid[static_cast<std::size_t>(idx[j])];
        if (auto it = scored.find(idx); it != scored.end()) {
            c.score = it->second;
        } else {
            LossWeights weights = base;
            weights.lambda = c.lambda;
            TrainOptions to = options.train;
            to.epochs = options.epochs;
            try {
                const auto r = train(build_model<float>(config, options.model_seed), train_set, validation_set,
                                     weights, to);
                c.score = r.history.best_validation_malignancy;
            } catch (const NumericError&) {
                c.score = std::numeric_limits<double>::infinity();
            }
            scored.emplace(idx, c.score);
        }
        result.candidates.push_back(c);
        if (std::isfinite(c.score) && c.score < result.best_score) {
            result.best_score = c.score;
            result.best = c.lambda;
            best_index = idx;
            have_best = true;
        }
    };

    const int coarse = (options.budget + 1) / 2;
    for (int n = 0; n < coarse; ++n) {
        Index5 idx;
        for (int& v : idx)
            v = pick(rng);
        evaluate(idx, false);
    }
    if (!have_best && options.budget > coarse)
        throw NumericError("lambda search: every coarse candidate diverged");
    const Index5 centre = best_index;
    for (int n = coarse; n < options.budget; ++n) {
        Index5 idx;
        for (std::size_t j = 0; j < idx.size(); ++j)
            idx[j] = std::clamp(centre[j] + step(rng), 0, g - 1);
        evaluate(idx, true);
    }
    if (!have_best)
        throw NumericError("lambda search budget exhausted without a finite score");
    return result;
}

} // namespace hscnn
