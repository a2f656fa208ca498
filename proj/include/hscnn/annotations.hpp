#pragma once

#include "hscnn/common.hpp"

#include <string>
#include <vector>

namespace hscnn {

/// One reader's ratings, indexed by task_index(). Calcification is rated
/// 1..6 (6 = absent); every other characteristic 1..5.
using ReaderRatings = std::array<int, kTaskCount>;

struct AnnotationRecord {
    std::string case_id;
    std::string nodule_id;
    int reader_count = 0;
    double slice_thickness_mm = 0.0;
    std::array<double, 3> center_mm{}; // x, y, z
    std::string volume_path;           // relative to the manifest directory
    std::vector<ReaderRatings> readers;

    /// Throws DataError describing the first violated invariant.
    void validate() const;

    bool operator==(const AnnotationRecord&) const = default;
};

inline constexpr int kMinReaders = 3;
inline constexpr double kMaxSliceThicknessMm = 3.0;

/// Keeps nodules marked by at least three readers on scans thinner than 3 mm.
std::vector<AnnotationRecord> filter_annotations(const std::vector<AnnotationRecord>& records);

/// 1 iff the mean rating is at least 4.
int binarize_semantic(const std::vector<int>& ratings);

/// 1 (calcification absent) iff strictly more than half of the ratings are 6.
int binarize_calcification(const std::vector<int>& ratings);

/// Six binary labels for a nodule from all of its readers' ratings.
LabelSet nodule_labels(const AnnotationRecord& record);

/// One entry per retained reader annotation; every annotation of a nodule
/// shares that nodule's labels.
struct AnnotationSample {
    std::size_t record = 0;
    int annotation = 0;
    LabelSet labels{};
};

std::vector<AnnotationSample> expand_annotations(const std::vector<AnnotationRecord>& records);

} // namespace hscnn
