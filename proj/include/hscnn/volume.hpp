#pragma once

#include "hscnn/tensor.hpp"

#include <array>
#include <string>

namespace hscnn {

/// CT volume on a regular grid. Values are stored x-fastest:
/// index = (z * ny + y) * nx + x; voxel (x, y, z) sits at
/// origin + (x, y, z) * spacing in millimetres.
struct SourceVolume {
    std::array<Index, 3> dims{};       // nx, ny, nz
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::array<double, 3> origin_mm{};
    Vector<float> values;

    Index voxel_count() const { return dims[0] * dims[1] * dims[2]; }
    float at(Index x, Index y, Index z) const { return values[(z * dims[1] + y) * dims[0] + x]; }
    float& at(Index x, Index y, Index z) { return values[(z * dims[1] + y) * dims[0] + x]; }

    void validate() const;
};

/// `.vol` file: a text header
///   HSCNNVOL 1 / dims nx ny nz / spacing sx sy sz / origin ox oy oz /
///   dtype float32le / end
/// followed by nx*ny*nz little-endian f32 values, x fastest.
void write_volume(const SourceVolume& volume, const std::string& path);
SourceVolume read_volume(const std::string& path);

inline constexpr double kHuLow = -1000.0;
inline constexpr double kHuHigh = 500.0;

/// v -> clamp((v + 1000) / 1500, 0, 1).
SourceVolume normalize_hu(const SourceVolume& volume);

inline constexpr double kCubeMm = 40.0;

/// Resamples a `cube_mm` cube centred on `center_mm` onto an S^3 isotropic grid
/// by trilinear interpolation; neighbours outside the volume read as 0.
/// Output is (1, S, S, S) ordered (z, y, x).
Tensor<float> extract_cube(const SourceVolume& volume, const std::array<double, 3>& center_mm, Index out_voxels,
                           double cube_mm = kCubeMm);

} // namespace hscnn
