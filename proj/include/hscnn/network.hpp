#pragma once

#include "hscnn/layers.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hscnn {

enum class Variant { Hscnn, Baseline };

const char* variant_name(Variant v);
Variant variant_from_name(std::string_view name);

/// Architecture hyperparameters. Defaults are the full-size network on
/// 52-voxel cubes; every width is configurable so reduced networks can be
/// trained and gradient-checked quickly.
struct NetworkConfig {
    Index input_cube_voxels = 52;
    std::vector<Index> conv_module_channels{16, 32};
    std::vector<Index> branch_hidden{256, 64};
    Index highlevel_hidden = 256;
    double dropout_rate = 0.5;
    std::vector<Task> semantic_tasks{kSemanticTasks.begin(), kSemanticTasks.end()};
    Variant variant = Variant::Hscnn;

    void validate() const;

    /// Spatial extent after the last pooling stage.
    Index pooled_extent() const;
    /// Length of the flattened trunk output.
    Index trunk_features() const;
    /// Input length of the high-level head (trunk plus branch taps).
    Index concat_features() const;
    /// Width of the branch layer feeding the high-level head.
    Index tap_width() const { return branch_hidden.front(); }

    /// One `key=value` line per field, in a fixed order.
    std::string canonical_text() const;
    static NetworkConfig parse_canonical(const std::string& text);

    bool operator==(const NetworkConfig&) const = default;
};

template <typename Scalar>
struct ConvBlock {
    ConvParams<Scalar> conv;
    BatchNormParams<Scalar> bn;
};

template <typename Scalar>
struct DenseBlock {
    DenseParams<Scalar> dense;
    BatchNormParams<Scalar> bn;
};

/// One semantic-feature branch: hidden dense blocks then a 2-unit output.
template <typename Scalar>
struct Branch {
    Task task = Task::Calcification;
    std::vector<DenseBlock<Scalar>> hidden;
    DenseParams<Scalar> output;
};

template <typename Scalar>
struct HighLevelHead {
    DenseBlock<Scalar> hidden;
    DenseParams<Scalar> output;
};

/// Named view of one parameter tensor inside a model.
template <typename Scalar>
struct ParamView {
    std::string name;
    Eigen::Map<Vector<Scalar>> values;
    bool trainable;
};

template <typename Scalar>
struct Model {
    NetworkConfig config;
    std::uint64_t seed = 0;
    std::vector<ConvBlock<Scalar>> trunk; // two blocks per conv module
    std::vector<Branch<Scalar>> branches; // empty for the baseline
    HighLevelHead<Scalar> head;

    /// Trainable tensors and (optionally) batch-norm running statistics, in a
    /// fixed order that is also the serialization order.
    std::vector<ParamView<Scalar>> parameters(bool include_buffers = false);

    Index parameter_count() const;

    /// Same structure with every tensor zeroed; used as a gradient container.
    Model zeros_like() const;

    template <typename Other>
    Model<Other> cast() const;
};

/// Xavier-uniform weights, zero biases, unit gamma, zero beta. Trunk, each
/// branch and the head draw from independent streams derived from `seed`, so
/// an HSCNN and a baseline built from one seed share their trunk.
template <typename Scalar>
Model<Scalar> build_model(const NetworkConfig& config, std::uint64_t seed);

Rng make_rng(std::uint64_t seed, std::uint64_t stream);

template <typename Scalar>
struct DenseStage {
    Tensor<Scalar> input;
    BatchNormCache<Scalar> bn;
    Tensor<Scalar> normalized; // batch-norm output (ReLU input)
    Tensor<Scalar> activated;
    Tensor<Scalar> dropout_mask;
};

template <typename Scalar>
struct ForwardCache {
    struct ConvStage {
        Tensor<Scalar> input;
        BatchNormCache<Scalar> bn;
        Tensor<Scalar> normalized;
    };
    struct PoolStage {
        Shape input_shape;
        std::vector<Index> argmax;
    };
    struct BranchStage {
        std::vector<DenseStage<Scalar>> hidden;
        Tensor<Scalar> output_input;
    };

    bool valid = false;
    std::vector<ConvStage> conv;
    std::vector<PoolStage> pools;
    Shape pooled_shape;
    Tensor<Scalar> flat; // (B, trunk_features)
    std::vector<BranchStage> branches;
    Tensor<Scalar> concat;
    DenseStage<Scalar> head;
    Tensor<Scalar> head_output_input;
};

template <typename Scalar>
struct HeadOutputs {
    Matrix<Scalar> malignancy_logits;            // (2, B)
    std::vector<Matrix<Scalar>> semantic_logits; // per semantic_tasks, each (2, B)
    std::vector<Task> semantic_tasks;
    std::vector<Shape> module_shapes;            // per-sample trunk shape after each conv module
    Index flat_features = 0;
    Index concat_features = 0;
    ForwardCache<Scalar> cache;

    Index batch_size() const { return malignancy_logits.cols(); }
};

struct ForwardOptions {
    int threads = 1;
    bool keep_cache = true;
};

/// batch is (B, 1, S, S, S) with S == config.input_cube_voxels. Train mode
/// uses batch statistics and dropout drawn from `rng`.
template <typename Scalar>
HeadOutputs<Scalar> forward(const Model<Scalar>& model, const Tensor<Scalar>& batch, Mode mode, Rng& rng,
                            const ForwardOptions& options = {});

/// Gradients of a scalar loss with respect to each head's logits.
template <typename Scalar>
struct LogitGrads {
    Matrix<Scalar> malignancy;
    std::vector<Matrix<Scalar>> semantic;
};

/// Exact gradients of every trainable parameter; buffers are left at zero.
template <typename Scalar>
Model<Scalar> backward(const Model<Scalar>& model, const HeadOutputs<Scalar>& outputs,
                       const LogitGrads<Scalar>& grads, int threads = 1);

/// Folds the batch statistics of a train-mode forward pass into the running
/// statistics of every batch-norm layer.
template <typename Scalar>
void update_running_stats(Model<Scalar>& model, const ForwardCache<Scalar>& cache);

extern template struct Model<float>;
extern template struct Model<double>;

} // namespace hscnn
