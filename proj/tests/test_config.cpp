#include "hscnn/config.hpp"

#include <gtest/gtest.h>

using namespace hscnn;

TEST(Config, EmptyDocumentGivesDefaults)
{
    const RunConfig c = parse_run_config("{}");
    EXPECT_EQ(c.network, NetworkConfig{});
    EXPECT_EQ(c.epochs, 300);
    EXPECT_EQ(c.batch_size, 32);
    EXPECT_EQ(c.learning_rate, 1e-3);
    EXPECT_EQ(c.lambda, (LambdaVector{0.2, 0.2, 0.2, 0.2, 0.2}));
    EXPECT_EQ(c.threshold, 0.5);
    EXPECT_EQ(c.train_options().augment_options.max_shift, 5);
}

TEST(Config, ResolvedJsonRoundTrips)
{
    const RunConfig c = parse_run_config(R"({
        "seed": 7, "threads": 2,
        "network": {"variant": "baseline", "cube_voxels": 24, "conv_channels": [8, 16],
                    "branch_hidden": [64, 32], "highlevel_hidden": 128, "dropout": 0.25},
        "training": {"epochs": 30, "batch_size": 16, "augment_probability": 0.5,
                     "recalibrate_batchnorm": false},
        "loss": {"lambda": {"texture": 0.5}},
        "phantom": {"count": 40}
    })");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.network.variant, Variant::Baseline);
    EXPECT_TRUE(c.network.semantic_tasks.empty());
    EXPECT_EQ(c.network.input_cube_voxels, 24);
    EXPECT_EQ(c.lambda[static_cast<std::size_t>(task_index(Task::Texture))], 0.5);
    EXPECT_EQ(c.lambda[0], 0.2);
    EXPECT_FALSE(c.train_options().recalibrate_batchnorm);
    EXPECT_EQ(c.train_options().augment_options.max_shift, 2);
    EXPECT_EQ(c.phantom.count, 40);
    const std::string text = run_config_json(c);
    EXPECT_EQ(run_config_json(parse_run_config(text)), text);
}

TEST(Config, UnknownKeysAreRejected)
{
    EXPECT_THROW(parse_run_config(R"({"sede": 1})"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"network": {"channels": [1]}})"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"loss": {"lambda": {"spiculation": 0.1}}})"), ConfigError);
    try {
        parse_run_config(R"({"training": {"epoch": 3}})");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
    }
}

TEST(Config, InvalidValuesAreRejected)
{
    EXPECT_THROW(parse_run_config("{"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"training": {"epochs": 0}})"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"training": {"epochs": "ten"}})"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"training": {"learning_rate": -1}})"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"network": {"cube_voxels": 50}})"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"network": {"variant": "resnet"}})"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"loss": {"lambda": {"margin": -0.5}}})"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"evaluation": {"threshold": 1.5}})"), ConfigError);
    EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError);
}
