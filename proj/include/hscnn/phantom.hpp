#pragma once

#include "hscnn/loss.hpp"
#include "hscnn/sample.hpp"
#include "hscnn/volume.hpp"

#include <cstdint>
#include <vector>

namespace hscnn {

/// Ground-truth attributes of a synthetic nodule, using the label polarity
/// of the semantic heads:
///   sphericity    1 round (axes 1:1:1)        0 elongated (x:y:z = 1:0.5:2)
///   margin        1 sharp edge                0 wide blurred edge
///   subtlety      1 full contrast             0 reduced contrast
///   texture       1 solid (~0.85, low noise)  0 ground glass (~0.55, noisy)
///   calcification 1 absent                    0 bright blob (1.0) present
struct PhantomSpec {
    std::array<int, kSemanticTaskCount> attributes{1, 1, 1, 1, 1}; // indexed by task_index
    double diameter_mm = 12.0;
    double noise_sigma = 0.03;
    std::uint64_t seed = 0;

    int attribute(Task t) const { return attributes.at(static_cast<std::size_t>(task_index(t))); }
    int& attribute(Task t) { return attributes.at(static_cast<std::size_t>(task_index(t))); }

    /// The nodule must fit the 40 mm cube with room for a 4 mm shift each side.
    void validate(double cube_mm = kCubeMm, double shift_mm = 4.0) const;

    /// Semi-axes (x, y, z) in mm; volume-preserving across sphericity classes.
    std::array<double, 3> semi_axes_mm() const;
};

/// Logistic malignancy rule over the attributes and the diameter:
///   z = intercept + sum_j coef_j * attribute_j + diameter_coef * (d - diameter_ref)
/// label = 1 iff sigmoid(z) >= 0.5. The label is a deterministic function of
/// the attributes, so the rule is learnable to full accuracy.
struct GenerativeRule {
    double intercept = -3.5;
    std::array<double, kSemanticTaskCount> coefficients{3.0, 1.0, 0.0, 2.0, 1.0}; // calc, margin, subtlety, texture, sph
    double diameter_coefficient = 0.1;
    double diameter_reference_mm = 11.0;

    double logit(const PhantomSpec& spec) const;
    double probability(const PhantomSpec& spec) const;
    int malignancy(const PhantomSpec& spec) const { return probability(spec) >= 0.5 ? 1 : 0; }
};

/// Intensity anchors in normalized units.
struct PhantomIntensities {
    double background = 0.10;
    double ground_glass = 0.55;
    double solid = 0.85;
    double calcification = 1.0;
    double low_contrast = 0.75;      // fraction of the nodule/background difference kept when subtle
    double ground_glass_noise = 0.08;
    double solid_noise = 0.02;
    double sharp_edge_mm = 0.2;
    double blurred_edge_mm = 2.0;
    double blob_fraction = 0.5;      // calcified blob radius relative to the shortest semi-axis
    double min_blob_voxels = 1.0;    // lower bound on the blob radius in grid steps
};

LabelSet phantom_labels(const PhantomSpec& spec, const GenerativeRule& rule = {});

/// Renders the nodule on the S^3 grid of a 40 mm cube centred on it.
NoduleSample generate_phantom(const PhantomSpec& spec, Index cube_voxels, const GenerativeRule& rule = {},
                              const PhantomIntensities& intensities = {});

/// Renders the nodule into a CT volume in Hounsfield units with the nodule at
/// the volume centre (see phantom_center_mm).
SourceVolume render_phantom_volume(const PhantomSpec& spec, Index voxels_per_axis, double spacing_mm,
                                   const PhantomIntensities& intensities = {});

std::array<double, 3> phantom_center_mm(Index voxels_per_axis, double spacing_mm);

struct PhantomDatasetOptions {
    Index cube_voxels = 52;
    double class_balance = 0.5; // fraction of positives per attribute
    double min_diameter_mm = 6.0;
    double max_diameter_mm = 16.0;
    double noise_sigma = 0.03;
    GenerativeRule rule{};
};

struct PhantomDataset {
    std::vector<PhantomSpec> specs;
    std::vector<NoduleSample> samples;
    Census census;
};

/// Attribute labels are stratified: exactly round(balance * n) positives per
/// attribute, randomly assigned. Each phantom is its own case `P<index>`.
std::vector<PhantomSpec> sample_phantom_specs(Index n, std::uint64_t seed, const PhantomDatasetOptions& options);

PhantomDataset generate_dataset(Index n, std::uint64_t seed, const PhantomDatasetOptions& options = {});

std::string phantom_case_id(Index i);

} // namespace hscnn
