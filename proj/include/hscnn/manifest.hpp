#pragma once

#include "hscnn/annotations.hpp"
#include "hscnn/sample.hpp"
#include "hscnn/volume.hpp"

#include <string>
#include <vector>

namespace hscnn {

inline constexpr int kMaxReaders = 4;

/// Rating columns per reader, in manifest order.
inline constexpr std::array<Task, kTaskCount> kManifestRatingOrder = {
    Task::Malignancy, Task::Sphericity, Task::Margin, Task::Subtlety, Task::Texture, Task::Calcification};

/// Header of `manifest.csv`.
std::vector<std::string> manifest_columns();

struct Manifest {
    std::string directory;
    std::vector<AnnotationRecord> records;

    /// Reads the record's volume file (path relative to the manifest directory).
    SourceVolume load_volume(const AnnotationRecord& record) const;
};

/// Parses `<dir>/manifest.csv`. Every violation (schema, rating range,
/// dangling volume path) is collected and reported together with its line
/// number and column.
Manifest load_manifest(const std::string& dir);

void write_manifest(const std::string& dir, const std::vector<AnnotationRecord>& records);

struct PreprocessOptions {
    Index cube_voxels = 52;
    double cube_mm = kCubeMm;
};

/// filter -> binarize -> normalize HU -> extract cube, one sample per
/// retained reader annotation.
std::vector<NoduleSample> build_samples(const Manifest& manifest, const PreprocessOptions& options);

} // namespace hscnn
