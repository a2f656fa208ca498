#include "hscnn/volume.hpp"

#include "binary_io.hpp"

#include <cmath>
#include <sstream>

namespace hscnn {

void SourceVolume::validate() const
{
    for (int a = 0; a < 3; ++a) {
        if (dims[static_cast<std::size_t>(a)] <= 0)
            throw DataError("volume extents must be positive");
        if (!(spacing_mm[static_cast<std::size_t>(a)] > 0.0))
            throw DataError("volume spacing must be positive");
    }
    if (values.size() != voxel_count())
        throw DataError("volume value count does not match its extents");
}

void write_volume(const SourceVolume& volume, const std::string& path)
{
    volume.validate();
    std::ostringstream header;
    header.precision(17);
    header << "HSCNNVOL 1\n"
           << "dims " << volume.dims[0] << ' ' << volume.dims[1] << ' ' << volume.dims[2] << '\n'
           << "spacing " << volume.spacing_mm[0] << ' ' << volume.spacing_mm[1] << ' ' << volume.spacing_mm[2] << '\n'
           << "origin " << volume.origin_mm[0] << ' ' << volume.origin_mm[1] << ' ' << volume.origin_mm[2] << '\n'
           << "dtype float32le\n"
           << "end\n";
    detail::ByteWriter w;
    w.put_raw(header.str());
    for (Index i = 0; i < volume.values.size(); ++i)
        w.put_f32(volume.values[i]);
    detail::write_file(path, w.bytes());
}

SourceVolume read_volume(const std::string& path)
{
    const auto bytes = detail::read_file(path);
    const std::string what = "volume file '" + path + "'";
    SourceVolume v;
    std::size_t pos = 0;
    auto next_line = [&]() {
        const auto* begin = bytes.data() + pos;
        const auto* end = static_cast<const char*>(std::memchr(begin, '\n', bytes.size() - pos));
        if (!end)
            throw DataError(what + ": malformed header");
        std::string line(begin, end);
        pos += line.size() + 1;
        return line;
    };
    if (next_line() != "HSCNNVOL 1")
        throw DataError(what + ": not a version-1 volume file");
    bool have_dims = false, have_spacing = false, have_origin = false;
    for (;;) {
        const std::string line = next_line();
        if (line == "end")
            break;
        std::istringstream is(line);
        std::string key;
        is >> key;
        if (key == "dims") {
            is >> v.dims[0] >> v.dims[1] >> v.dims[2];
            have_dims = static_cast<bool>(is);
        } else if (key == "spacing") {
            is >> v.spacing_mm[0] >> v.spacing_mm[1] >> v.spacing_mm[2];
            have_spacing = static_cast<bool>(is);
        } else if (key == "origin") {
            is >> v.origin_mm[0] >> v.origin_mm[1] >> v.origin_mm[2];
            have_origin = static_cast<bool>(is);
        } else if (key == "dtype") {
            std::string dtype;
            is >> dtype;
            if (dtype != "float32le")
                throw DataError(what + ": unsupported dtype '" + dtype + "'");
        } else {
            throw DataError(what + ": unknown header key '" + key + "'");
        }
    }
    if (!have_dims || !have_spacing || !have_origin)
        throw DataError(what + ": incomplete header");
    for (Index d : v.dims)
        if (d <= 0)
            throw DataError(what + ": extents must be positive");
    const Index n = v.dims[0] * v.dims[1] * v.dims[2];
    detail::ByteReader r(bytes.data() + pos, bytes.size() - pos, what);
    if (r.remaining() != static_cast<std::size_t>(n) * 4)
        throw DataError(what + ": expected " + std::to_string(n) + " voxels, found " +
                        std::to_string(r.remaining() / 4));
    v.values.resize(n);
    for (Index i = 0; i < n; ++i)
        v.values[i] = r.get_f32();
    try {
        v.validate();
    } catch (const DataError& e) {
        throw DataError(what + ": " + e.what());
    }
    return v;
}

SourceVolume normalize_hu(const SourceVolume& volume)
{
    SourceVolume out = volume;
    out.values = ((volume.values.array() - static_cast<float>(kHuLow)) / static_cast<float>(kHuHigh - kHuLow))
                     .cwiseMax(0.0f)
                     .cwiseMin(1.0f);
    return out;
}

Tensor<float> extract_cube(const SourceVolume& volume, const std::array<double, 3>& center_mm, Index out_voxels,
                           double cube_mm)
{
    volume.validate();
    if (out_voxels <= 0 || !(cube_mm > 0.0))
        throw ConfigError("cube size must be positive");
    for (std::size_t a = 0; a < 3; ++a) {
        const double lo = volume.origin_mm[a];
        const double hi = lo + static_cast<double>(volume.dims[a] - 1) * volume.spacing_mm[a];
        if (!(center_mm[a] >= lo && center_mm[a] <= hi))
            throw DataError("cube centre lies outside the volume");
    }

    const double step = cube_mm / static_cast<double>(out_voxels);
    auto fetch = [&](Index x, Index y, Index z) -> double {
        if (x < 0 || y < 0 || z < 0 || x >= volume.dims[0] || y >= volume.dims[1] || z >= volume.dims[2])
            return 0.0;
        return volume.at(x, y, z);
    };

    // Per-axis lower neighbour and fractional weight of every output sample.
    std::array<std::vector<Index>, 3> base;
    std::array<std::vector<double>, 3> frac;
    for (std::size_t a = 0; a < 3; ++a) {
        base[a].resize(static_cast<std::size_t>(out_voxels));
        frac[a].resize(static_cast<std::size_t>(out_voxels));
        for (Index i = 0; i < out_voxels; ++i) {
            const double p = center_mm[a] - cube_mm / 2.0 + (static_cast<double>(i) + 0.5) * step;
            const double f = (p - volume.origin_mm[a]) / volume.spacing_mm[a];
            const double fl = std::floor(f);
            base[a][static_cast<std::size_t>(i)] = static_cast<Index>(fl);
            frac[a][static_cast<std::size_t>(i)] = f - fl;
        }
    }

    Tensor<float> cube({1, out_voxels, out_voxels, out_voxels});
    Index o = 0;
    for (Index k = 0; k < out_voxels; ++k) {
        const Index z0 = base[2][static_cast<std::size_t>(k)];
        const double tz = frac[2][static_cast<std::size_t>(k)];
        for (Index j = 0; j < out_voxels; ++j) {
            const Index y0 = base[1][static_cast<std::size_t>(j)];
            const double ty = frac[1][static_cast<std::size_t>(j)];
            for (Index i = 0; i < out_voxels; ++i, ++o) {
                const Index x0 = base[0][static_cast<std::size_t>(i)];
                const double tx = frac[0][static_cast<std::size_t>(i)];
                double acc = 0.0;
                for (int dz = 0; dz < 2; ++dz) {
                    const double wz = dz ? tz : 1.0 - tz;
                    if (wz == 0.0)
                        continue;
                    for (int dy = 0; dy < 2; ++dy) {
                        const double wy = dy ? ty : 1.0 - ty;
                        if (wy == 0.0)
                            continue;
                        for (int dx = 0; dx < 2; ++dx) {
                            const double wx = dx ? tx : 1.0 - tx;
                            if (wx == 0.0)
                                continue;
                            acc += wz * wy * wx * fetch(x0 + dx, y0 + dy, z0 + dz);
                        }
                    }
                }
                cube[o] = static_cast<float>(acc);
            }
        }
    }
    return cube;
}

} // namespace hscnn
