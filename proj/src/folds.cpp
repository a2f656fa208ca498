#include "hscnn/folds.hpp"
#include "hscnn/network.hpp"

#include <algorithm>
#include <map>

namespace hscnn {

std::size_t FoldPlan::subset_size(int subset) const
{
    return static_cast<std::size_t>(std::count(sample_subset.begin(), sample_subset.end(), subset));
}

FoldSplit FoldPlan::split(int fold) const
{
    if (fold < 0 || fold >= kFoldCount)
        throw ConfigError("fold index must lie in 0..3");
    FoldSplit s;
    for (std::size_t i = 0; i < sample_subset.size(); ++i) {
        const int sub = sample_subset[i];
        if (sub == test_subset(fold))
            s.test.push_back(i);
        else if (sub == validation_subset(fold))
            s.validation.push_back(i);
        else
            s.train.push_back(i);
    }
    return s;
}

FoldPlan build_folds(const std::vector<std::string>& sample_case_ids, std::uint64_t seed)
{
    std::map<std::string, std::size_t> counts;
    for (const auto& c : sample_case_ids)
        ++counts[c];
    if (counts.size() < static_cast<std::size_t>(kFoldCount))
        throw DataError("cross validation needs at least 4 distinct cases, found " + std::to_string(counts.size()));

    std::vector<std::pair<std::string, std::size_t>> cases(counts.begin(), counts.end());
    Rng rng = make_rng(seed, 300);
    std::shuffle(cases.begin(), cases.end(), rng);
    std::stable_sort(cases.begin(), cases.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    FoldPlan plan;
    std::array<std::size_t, kFoldCount> load{};
    std::map<std::string, int> subset_of;
    for (const auto& [id, n] : cases) {
        const auto best = static_cast<int>(std::min_element(load.begin(), load.end()) - load.begin());
        load[static_cast<std::size_t>(best)] += n;
        plan.subset_cases[static_cast<std::size_t>(best)].push_back(id);
        subset_of[id] = best;
    }
    for (auto& s : plan.subset_cases)
        std::sort(s.begin(), s.end());
    for (const auto& c : sample_case_ids)
        plan.sample_subset.push_back(subset_of.at(c));
    return plan;
}

} // namespace hscnn
