#pragma once

#include "hscnn/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hscnn {

inline constexpr int kFoldCount = 4;

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Case-level partition into four subsets with rotating roles: in fold k
/// subset k is the test set, subset (k+1) mod 4 the validation set and the
/// other two the training set.
struct FoldPlan {
    std::array<std::vector<std::string>, kFoldCount> subset_cases;
    std::vector<int> sample_subset; // subset of every sample

    std::size_t subset_size(int subset) const;
    FoldSplit split(int fold) const;
    static int test_subset(int fold) { return fold; }
    static int validation_subset(int fold) { return (fold + 1) % kFoldCount; }
};

/// Greedy balancing: cases ordered by descending nodule count (ties broken
/// by a seeded shuffle) are assigned to the subset with the fewest samples.
FoldPlan build_folds(const std::vector<std::string>& sample_case_ids, std::uint64_t seed);

} // namespace hscnn
