#include "hscnn/augment.hpp"

#include <cmath>

namespace hscnn {

namespace {

Index cube_extent(const Tensor<float>& cube)
{
    if (cube.rank() != 4 || cube.dim(0) != 1 || cube.dim(1) != cube.dim(2) || cube.dim(2) != cube.dim(3))
        throw ShapeError("expected a (1, S, S, S) cube, got " + shape_string(cube.shape()));
    return cube.dim(1);
}

} // namespace

Tensor<float> flip(const Tensor<float>& cube, int axis)
{
    const Index S = cube_extent(cube);
    if (axis < 0 || axis > 2)
        throw ShapeError("flip axis must be 0, 1 or 2");
    Tensor<float> out(cube.shape());
    for (Index z = 0; z < S; ++z)
        for (Index y = 0; y < S; ++y)
            for (Index x = 0; x < S; ++x) {
                std::array<Index, 3> src{z, y, x};
                src[static_cast<std::size_t>(axis)] = S - 1 - src[static_cast<std::size_t>(axis)];
                out[(z * S + y) * S + x] = cube[(src[0] * S + src[1]) * S + src[2]];
            }
    return out;
}

Tensor<float> translate(const Tensor<float>& cube, const std::array<Index, 3>& offsets)
{
    const Index S = cube_extent(cube);
    Tensor<float> out(cube.shape());
    for (Index z = 0; z < S; ++z) {
        const Index sz = z - offsets[0];
        if (sz < 0 || sz >= S)
            continue;
        for (Index y = 0; y < S; ++y) {
            const Index sy = y - offsets[1];
            if (sy < 0 || sy >= S)
                continue;
            for (Index x = 0; x < S; ++x) {
                const Index sx = x - offsets[2];
                if (sx >= 0 && sx < S)
                    out[(z * S + y) * S + x] = cube[(sz * S + sy) * S + sx];
            }
        }
    }
    return out;
}

Index max_shift_voxels(Index extent, double shift_mm, double cube_mm)
{
    return static_cast<Index>(std::lround(shift_mm / (cube_mm / static_cast<double>(extent))));
}

NoduleSample augment(const NoduleSample& sample, Rng& rng, const AugmentOptions& options)
{
    NoduleSample out = sample;
    const int op = std::uniform_int_distribution<int>(0, 2)(rng);
    if (op == 0 || op == 2) {
        const int axis = std::uniform_int_distribution<int>(0, 2)(rng);
        out.cube = flip(out.cube, axis);
    }
    if (op == 1 || op == 2) {
        std::uniform_int_distribution<Index> shift(-options.max_shift, options.max_shift);
        std::array<Index, 3> offsets{};
        for (auto& o : offsets)
            o = shift(rng);
        out.cube = translate(out.cube, offsets);
    }
    return out;
}

} // namespace hscnn
