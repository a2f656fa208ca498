#pragma once

#include "hscnn/layers.hpp"
#include "hscnn/sample.hpp"

namespace hscnn {

/// Mirrors a (1, S, S, S) cube along axis 0 (z), 1 (y) or 2 (x).
Tensor<float> flip(const Tensor<float>& cube, int axis);

/// Integer-voxel shift; vacated voxels are filled with 0 (air).
/// offsets are (z, y, x); output(p) = input(p - offset).
Tensor<float> translate(const Tensor<float>& cube, const std::array<Index, 3>& offsets);

/// Largest shift in voxels for a physical limit: round(shift_mm / (cube_mm / S)).
Index max_shift_voxels(Index extent, double shift_mm = 4.0, double cube_mm = 40.0);

struct AugmentOptions {
    Index max_shift = 5;
};

/// Applies a flip, a translation, or both (chosen uniformly). The flip axis
/// is uniform over the three axes; each offset is uniform in [-max_shift,
/// max_shift]. Labels are untouched.
NoduleSample augment(const NoduleSample& sample, Rng& rng, const AugmentOptions& options);

} // namespace hscnn
