#pragma once

#include "hscnn/lambda_search.hpp"
#include "hscnn/network.hpp"
#include "hscnn/trainer.hpp"

#include <cstdint>
#include <string>

namespace hscnn {

struct PhantomConfig {
    Index count = 400;
    double class_balance = 0.5;
    double min_diameter_mm = 6.0;
    double max_diameter_mm = 16.0;
    double noise_sigma = 0.03;
    Index volume_voxels = 48; // per axis of each rendered CT volume
    double spacing_mm = 1.0;
    int readers = 3;
    double slice_thickness_mm = 1.0;
};

/// Everything a run needs. JSON layout (all keys optional, unknown keys rejected):
///   {
///     "seed": 0, "threads": 1,
///     "network": {"variant": "hscnn", "cube_voxels": 52, "conv_channels": [16, 32],
///                 "branch_hidden": [256, 64], "highlevel_hidden": 256, "dropout": 0.5},
///     "training": {"epochs": 300, "batch_size": 32, "learning_rate": 0.001,
///                  "augment": true, "augment_probability": 1.0,
///                  "augment_validation": true, "max_shift_mm": 4.0,
///                  "recalibrate_batchnorm": true},
///     "loss": {"lambda": {"calcification": 0.2, "margin": 0.2, "subtlety": 0.2,
///                         "texture": 0.2, "sphericity": 0.2}},
///     "lambda_search": {"enabled": false, "budget": 8, "epochs": 20,
///                       "grid": [0.05, 0.1, 0.2, 0.5, 1.0]},
///     "preprocess": {"cube_mm": 40.0},
///     "evaluation": {"threshold": 0.5},
///     "phantom": {"count": 400, "class_balance": 0.5, "min_diameter_mm": 6.0,
///                 "max_diameter_mm": 16.0, "noise_sigma": 0.03, "volume_voxels": 48,
///                 "spacing_mm": 1.0, "readers": 3, "slice_thickness_mm": 1.0},
///     "paths": {"data": "", "model": ""}
///   }
struct RunConfig {
    std::uint64_t seed = 0;
    int threads = 1;
    NetworkConfig network{};

    int epochs = 300;
    Index batch_size = 32;
    double learning_rate = 1e-3;
    bool augment = true;
    double augment_probability = 1.0;
    bool augment_validation = true;
    double max_shift_mm = 4.0;
    bool recalibrate_batchnorm = true;

    LambdaVector lambda{0.2, 0.2, 0.2, 0.2, 0.2}; // indexed by task_index
    bool lambda_search = false;
    int search_budget = 8;
    int search_epochs = 20;
    std::vector<double> search_grid{0.05, 0.1, 0.2, 0.5, 1.0};

    double cube_mm = 40.0;
    double threshold = 0.5;
    PhantomConfig phantom{};

    std::string data_path;
    std::string model_path;

    void validate() const;

    /// Training options with the shift converted to voxels for the cube size.
    TrainOptions train_options() const;
    LambdaSearchOptions search_options() const;
};

/// Throws ConfigError naming the offending key.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Fully resolved config, every key present.
std::string run_config_json(const RunConfig& config);

} // namespace hscnn
