#pragma once

#include "hscnn/tensor.hpp"

#include <string>
#include <vector>

namespace hscnn {

struct Provenance {
    std::string case_id;
    std::string nodule_id;
    int annotation = 0;

    bool operator==(const Provenance&) const = default;
};

/// Preprocessed cube (1, S, S, S) in [0, 1] with its six binary labels.
struct NoduleSample {
    Tensor<float> cube;
    LabelSet labels{};
    Provenance provenance;

    Index extent() const { return cube.rank() == 4 ? cube.dim(1) : 0; }
    void validate(Index expected_extent) const;

    int label(Task t) const { return labels[static_cast<std::size_t>(task_index(t))]; }
};

std::vector<LabelSet> labels_of(const std::vector<NoduleSample>& samples);

/// Cached sample file (`.smp`):
///   HSCNN-SAMPLE 1 / case_id <id> / nodule_id <id> / annotation <k> /
///   size <S> / labels calcification=<0|1> ... malignancy=<0|1> /
///   data float32le <S^3>
/// followed by S^3 little-endian f32 values (z, y, x order).
void write_sample(const NoduleSample& sample, const std::string& path);
NoduleSample read_sample(const std::string& path);

/// Writes one file per sample plus `index.txt` listing them in order.
void write_sample_dir(const std::vector<NoduleSample>& samples, const std::string& dir);

/// Reads the samples listed in `index.txt`, or every `.smp` file in name order.
std::vector<NoduleSample> read_sample_dir(const std::string& dir);

std::string sample_file_name(const Provenance& p);

} // namespace hscnn
