#include "hscnn/phantom.hpp"
#include "hscnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace hscnn {

void PhantomSpec::validate(double cube_mm, double shift_mm) const
{
    for (int a : attributes)
        if (a != 0 && a != 1)
            throw ConfigError("phantom attributes must be 0 or 1");
    if (!(diameter_mm >= 5.0 && diameter_mm <= 25.0))
        throw ConfigError("phantom diameter must lie in [5, 25] mm");
    if (!(noise_sigma >= 0.0))
        throw ConfigError("phantom noise sigma must be non-negative");
    const auto axes = semi_axes_mm();
    const double longest = *std::max_element(axes.begin(), axes.end());
    if (2.0 * longest + 2.0 * shift_mm > cube_mm)
        throw ConfigError("phantom diameter " + std::to_string(diameter_mm) + " mm is too large for a " +
                          std::to_string(cube_mm) + " mm cube");
}

std::array<double, 3> PhantomSpec::semi_axes_mm() const
{
    const double r = diameter_mm / 2.0;
    if (attribute(Task::Sphericity) == 1)
        return {r, r, r};
    return {r, 0.5 * r, 2.0 * r};
}

double GenerativeRule::logit(const PhantomSpec& spec) const
{
    double z = intercept + diameter_coefficient * (spec.diameter_mm - diameter_reference_mm);
    for (std::size_t j = 0; j < kSemanticTaskCount; ++j)
        z += coefficients[j] * spec.attributes[j];
    return z;
}

double GenerativeRule::probability(const PhantomSpec& spec) const
{
    return 1.0 / (1.0 + std::exp(-logit(spec)));
}

LabelSet phantom_labels(const PhantomSpec& spec, const GenerativeRule& rule)
{
    LabelSet labels{};
    for (Task t : kSemanticTasks)
        labels[static_cast<std::size_t>(task_index(t))] = spec.attribute(t);
    labels[static_cast<std::size_t>(task_index(Task::Malignancy))] = rule.malignancy(spec);
    return labels;
}

namespace {

// Samples the phantom field at grid points p = first + index * step (mm,
// relative to the nodule centre), z-major then y then x.
struct Grid {
    Index n = 0;
    double first = 0.0;
    double step = 1.0;
};

Vector<float> render(const PhantomSpec& spec, const Grid& grid, const PhantomIntensities& in)
{
    spec.validate();
    const auto axes = spec.semi_axes_mm();
    const bool solid = spec.attribute(Task::Texture) == 1;
    const double level = solid ? in.solid : in.ground_glass;
    const double contrast = spec.attribute(Task::Subtlety) == 1 ? 1.0 : in.low_contrast;
    const double amplitude = contrast * (level - in.background);
    const double texture_sigma = solid ? in.solid_noise : in.ground_glass_noise;
    const double edge = spec.attribute(Task::Margin) == 1 ? in.sharp_edge_mm : in.blurred_edge_mm;
    const bool calcified = spec.attribute(Task::Calcification) == 0;

    // Calcified blob centred on the grid point nearest the nodule centre.
    const double snap = grid.first + std::round(-grid.first / grid.step) * grid.step;
    const double min_axis = *std::min_element(axes.begin(), axes.end());
    const double blob_radius = std::max(in.blob_fraction * min_axis, in.min_blob_voxels * grid.step);

    Rng rng = make_rng(spec.seed, 400);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector<float> values(grid.n * grid.n * grid.n);
    Index o = 0;
    for (Index k = 0; k < grid.n; ++k) {
        const double z = grid.first + static_cast<double>(k) * grid.step;
        for (Index j = 0; j < grid.n; ++j) {
            const double y = grid.first + static_cast<double>(j) * grid.step;
            for (Index i = 0; i < grid.n; ++i, ++o) {
                const double x = grid.first + static_cast<double>(i) * grid.step;
                const double n_bg = normal(rng) * spec.noise_sigma;
                const double n_tex = normal(rng) * texture_sigma;
                const double rho =
                    std::sqrt(x * x / (axes[0] * axes[0]) + y * y / (axes[1] * axes[1]) + z * z / (axes[2] * axes[2]));
                // distance to the surface along the ray from the centre
                const double radius_along_ray = rho > 0.0 ? std::sqrt(x * x + y * y + z * z) / rho : min_axis;
                const double depth = (1.0 - rho) * radius_along_ray;
                const double inside = 0.5 * std::erfc(-depth / (std::sqrt(2.0) * edge));
                double v = in.background + n_bg + inside * (amplitude + n_tex);
                if (calcified) {
                    const double dx = x - snap, dy = y - snap, dz = z - snap;
                    if (dx * dx + dy * dy + dz * dz <= blob_radius * blob_radius)
                        v = in.calcification;
                }
                values[o] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return values;
}

} // namespace

NoduleSample generate_phantom(const PhantomSpec& spec, Index cube_voxels, const GenerativeRule& rule,
                              const PhantomIntensities& intensities)
{
    if (cube_voxels <= 0)
        throw ConfigError("cube size must be positive");
    const double step = kCubeMm / static_cast<double>(cube_voxels);
    const Grid grid{cube_voxels, -kCubeMm / 2.0 + 0.5 * step, step};
    NoduleSample s;
    s.cube = Tensor<float>({1, cube_voxels, cube_voxels, cube_voxels}, render(spec, grid, intensities));
    s.labels = phantom_labels(spec, rule);
    return s;
}

std::array<double, 3> phantom_center_mm(Index voxels_per_axis, double spacing_mm)
{
    const double c = 0.5 * static_cast<double>(voxels_per_axis - 1) * spacing_mm;
    return {c, c, c};
}

SourceVolume render_phantom_volume(const PhantomSpec& spec, Index voxels_per_axis, double spacing_mm,
                                   const PhantomIntensities& intensities)
{
    const double c = phantom_center_mm(voxels_per_axis, spacing_mm)[0];
    const Grid grid{voxels_per_axis, -c, spacing_mm};
    SourceVolume v;
    v.dims = {voxels_per_axis, voxels_per_axis, voxels_per_axis};
    v.spacing_mm = {spacing_mm, spacing_mm, spacing_mm};
    v.origin_mm = {0.0, 0.0, 0.0};
    v.values = (render(spec, grid, intensities).array() * static_cast<float>(kHuHigh - kHuLow) +
                static_cast<float>(kHuLow))
                   .matrix();
    return v;
}

std::string phantom_case_id(Index i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "P%05lld", static_cast<long long>(i));
    return buf;
}

std::vector<PhantomSpec> sample_phantom_specs(Index n, std::uint64_t seed, const PhantomDatasetOptions& options)
{
    if (n < 1)
        throw ConfigError("phantom count must be at least 1");
    if (!(options.class_balance > 0.0 && options.class_balance < 1.0))
        throw ConfigError("class balance must lie strictly between 0 and 1");
    const auto positives = static_cast<Index>(std::llround(options.class_balance * static_cast<double>(n)));
    if (n >= 2 && (positives == 0 || positives == n))
        throw ConfigError("class balance " + std::to_string(options.class_balance) + " leaves a class empty for n=" +
                          std::to_string(n));
    if (!(options.min_diameter_mm <= options.max_diameter_mm))
        throw ConfigError("diameter range is empty");

    Rng rng = make_rng(seed, 500);
    std::vector<PhantomSpec> specs(static_cast<std::size_t>(n));
    std::vector<int> column(static_cast<std::size_t>(n));
    for (std::size_t a = 0; a < kSemanticTaskCount; ++a) {
        std::fill(column.begin(), column.end(), 0);
        std::fill(column.begin(), column.begin() + positives, 1);
        std::shuffle(column.begin(), column.end(), rng);
        for (std::size_t i = 0; i < specs.size(); ++i)
            specs[i].attributes[a] = column[i];
    }
    std::uniform_real_distribution<double> diameter(options.min_diameter_mm, options.max_diameter_mm);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        specs[i].diameter_mm = diameter(rng);
        specs[i].noise_sigma = options.noise_sigma;
        specs[i].seed = rng();
        specs[i].validate();
    }
    return specs;
}

PhantomDataset generate_dataset(Index n, std::uint64_t seed, const PhantomDatasetOptions& options)
{
    PhantomDataset d;
    d.specs = sample_phantom_specs(n, seed, options);
    for (std::size_t i = 0; i < d.specs.size(); ++i) {
        NoduleSample s = generate_phantom(d.specs[i], options.cube_voxels, options.rule);
        s.provenance = {phantom_case_id(static_cast<Index>(i)), "1", 0};
        d.samples.push_back(std::move(s));
    }
    d.census = census_of(labels_of(d.samples));
    return d;
}

} // namespace hscnn
