#include "hscnn/annotations.hpp"

#include <algorithm>
#include <numeric>

namespace hscnn {

namespace {

int max_rating(Task t) { return t == Task::Calcification ? 6 : 5; }

void check_ratings(const std::vector<int>& ratings, int max, const char* what)
{
    if (ratings.empty())
        throw DataError(std::string(what) + ": no ratings");
    for (int r : ratings)
        if (r < 1 || r > max)
            throw DataError(std::string(what) + ": rating " + std::to_string(r) + " outside 1.." +
                            std::to_string(max));
}

} // namespace

void AnnotationRecord::validate() const
{
    const std::string who = "nodule " + case_id + "/" + nodule_id;
    if (reader_count < 1)
        throw DataError(who + ": reader_count must be at least 1");
    if (static_cast<std::size_t>(reader_count) != readers.size())
        throw DataError(who + ": reader_count " + std::to_string(reader_count) + " but " +
                        std::to_string(readers.size()) + " rating sets");
    if (!(slice_thickness_mm > 0.0))
        throw DataError(who + ": slice thickness must be positive");
    for (const auto& r : readers)
        for (Task t : kAllTasks) {
            const int v = r[static_cast<std::size_t>(task_index(t))];
            if (v < 1 || v > max_rating(t))
                throw DataError(who + ": " + std::string(task_name(t)) + " rating " + std::to_string(v) +
                                " outside 1.." + std::to_string(max_rating(t)));
        }
}

std::vector<AnnotationRecord> filter_annotations(const std::vector<AnnotationRecord>& records)
{
    std::vector<AnnotationRecord> kept;
    for (const auto& r : records)
        if (r.reader_count >= kMinReaders && r.slice_thickness_mm < kMaxSliceThicknessMm)
            kept.push_back(r);
    return kept;
}

int binarize_semantic(const std::vector<int>& ratings)
{
    check_ratings(ratings, 5, "binarize_semantic");
    // mean >= 4  <=>  sum >= 4 n, kept in integers so the boundary is exact
    const long sum = std::accumulate(ratings.begin(), ratings.end(), 0L);
    return sum >= 4L * static_cast<long>(ratings.size()) ? 1 : 0;
}

int binarize_calcification(const std::vector<int>& ratings)
{
    check_ratings(ratings, 6, "binarize_calcification");
    const auto absent = std::count(ratings.begin(), ratings.end(), 6);
    return 2 * absent > static_cast<long>(ratings.size()) ? 1 : 0;
}

LabelSet nodule_labels(const AnnotationRecord& record)
{
    LabelSet labels{};
    for (Task t : kAllTasks) {
        std::vector<int> ratings;
        for (const auto& r : record.readers)
            ratings.push_back(r[static_cast<std::size_t>(task_index(t))]);
        labels[static_cast<std::size_t>(task_index(t))] =
            t == Task::Calcification ? binarize_calcification(ratings) : binarize_semantic(ratings);
    }
    return labels;
}

std::vector<AnnotationSample> expand_annotations(const std::vector<AnnotationRecord>& records)
{
    std::vector<AnnotationSample> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const LabelSet labels = nodule_labels(records[i]);
        for (int a = 0; a < records[i].reader_count; ++a)
            out.push_back({i, a, labels});
    }
    return out;
}

} // namespace hscnn
