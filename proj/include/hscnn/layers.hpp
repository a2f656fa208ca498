#pragma once

#include "hscnn/tensor.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace hscnn {

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// 3D convolution: 3x3x3 kernels, zero padding of one voxel, unit stride,
// cross-correlation orientation. Spatial extents are preserved.

inline constexpr Index kKernelExtent = 3;
inline constexpr Index kKernelVolume = kKernelExtent * kKernelExtent * kKernelExtent;

template <typename Scalar>
struct ConvParams {
    Tensor<Scalar> kernels; // (C_out, C_in, 3, 3, 3)
    Vector<Scalar> bias;    // (C_out)

    static ConvParams zeros(Index out_channels, Index in_channels);

    Index out_channels() const { return kernels.dim(0); }
    Index in_channels() const { return kernels.dim(1); }
    void validate() const;
};

template <typename Scalar>
struct ConvGrads {
    Tensor<Scalar> input;
    Tensor<Scalar> kernels;
    Vector<Scalar> bias;
};

/// input is (C_in, D, H, W) or (B, C_in, D, H, W); the output keeps the rank.
template <typename Scalar>
Tensor<Scalar> conv3d_forward(const Tensor<Scalar>& input, const ConvParams<Scalar>& params, int threads = 1);

/// Exact gradients of conv3d_forward. The input gradient is skipped (left
/// empty) when `want_input_grad` is false, e.g. for the first network layer.
template <typename Scalar>
ConvGrads<Scalar> conv3d_backward(const Tensor<Scalar>& input, const ConvParams<Scalar>& params,
                                  const Tensor<Scalar>& grad_output, bool want_input_grad = true,
                                  int threads = 1);

// ---------------------------------------------------------------------------
// 3D max pooling over the three trailing extents.

struct PoolSpec {
    std::array<Index, 3> window{2, 2, 2};
    std::array<Index, 3> stride{2, 2, 2};
};

template <typename Scalar>
struct PoolResult {
    Tensor<Scalar> output;
    std::vector<Index> argmax; // flat input offset of each output element
};

/// Ties resolve to the first maximal element in row-major scan order.
template <typename Scalar>
PoolResult<Scalar> maxpool3d_forward(const Tensor<Scalar>& input, const PoolSpec& spec = {});

template <typename Scalar>
Tensor<Scalar> maxpool3d_backward(const std::vector<Index>& argmax, const Tensor<Scalar>& grad_output,
                                  const Shape& input_shape, const PoolSpec& spec = {});

// ---------------------------------------------------------------------------
// Batch normalization over channel axis 1 of a (B, C, ...) tensor. Dense
// activations (B, F) normalize each feature over the batch.

template <typename Scalar>
struct BatchNormParams {
    Vector<Scalar> gamma;
    Vector<Scalar> beta;
    Vector<Scalar> running_mean;
    Vector<Scalar> running_var;
    Scalar epsilon = Scalar(1e-5);
    Scalar momentum = Scalar(0.9);

    static BatchNormParams identity(Index channels);

    Index channels() const { return gamma.size(); }
    void validate() const;
};

template <typename Scalar>
struct BatchNormCache {
    Mode mode = Mode::Eval;
    Shape shape;
    Tensor<Scalar> normalized; // x-hat
    Vector<Scalar> mean;       // statistics actually used
    Vector<Scalar> var;
    Vector<Scalar> inv_std;
};

template <typename Scalar>
struct BatchNormResult {
    Tensor<Scalar> output;
    BatchNormCache<Scalar> cache;
};

template <typename Scalar>
struct BatchNormGrads {
    Tensor<Scalar> input;
    Vector<Scalar> gamma;
    Vector<Scalar> beta;
};

/// Train mode uses batch statistics (biased variance); eval mode uses the
/// running statistics. Running statistics are folded in separately by
/// update_running_stats so the forward pass stays a pure function.
template <typename Scalar>
BatchNormResult<Scalar> batchnorm_forward(const Tensor<Scalar>& input, const BatchNormParams<Scalar>& params,
                                          Mode mode);

/// running <- momentum * running + (1 - momentum) * batch, with the unbiased
/// batch variance. No-op for an eval-mode cache.
template <typename Scalar>
void update_running_stats(BatchNormParams<Scalar>& params, const BatchNormCache<Scalar>& cache);

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const BatchNormCache<Scalar>& cache, const BatchNormParams<Scalar>& params,
                                          const Tensor<Scalar>& grad_output);

// ---------------------------------------------------------------------------
// Fully connected layer: y = W x + b.

template <typename Scalar>
struct DenseParams {
    Matrix<Scalar> weights; // (out_units, in_units)
    Vector<Scalar> bias;    // (out_units)

    static DenseParams zeros(Index out_units, Index in_units);

    Index in_units() const { return weights.cols(); }
    Index out_units() const { return weights.rows(); }
    void validate() const;
};

template <typename Scalar>
struct DenseGrads {
    Tensor<Scalar> input;
    Matrix<Scalar> weights;
    Vector<Scalar> bias;
};

/// input is (in_units) or (B, in_units).
template <typename Scalar>
Tensor<Scalar> dense_forward(const Tensor<Scalar>& input, const DenseParams<Scalar>& params);

template <typename Scalar>
DenseGrads<Scalar> dense_backward(const Tensor<Scalar>& input, const DenseParams<Scalar>& params,
                                  const Tensor<Scalar>& grad_output);

// ---------------------------------------------------------------------------
// Elementwise and output-layer functions.

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input);

/// Subgradient at zero is zero.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_output);

/// Max-subtracted softmax over a vector expression.
template <typename Derived>
typename Derived::PlainObject softmax(const Eigen::MatrixBase<Derived>& logits)
{
    using Scalar = typename Derived::Scalar;
    typename Derived::PlainObject shifted = logits.array() - logits.maxCoeff();
    shifted = shifted.array().exp();
    const Scalar total = shifted.sum();
    return shifted / total;
}

/// log(softmax(logits)) computed without forming the probabilities.
template <typename Derived>
typename Derived::PlainObject log_softmax(const Eigen::MatrixBase<Derived>& logits)
{
    using std::exp;
    using std::log;
    const auto max = logits.maxCoeff();
    const auto lse = max + log((logits.array() - max).exp().sum());
    return (logits.array() - lse).matrix();
}

template <typename Scalar>
struct DropoutResult {
    Tensor<Scalar> output;
    Tensor<Scalar> mask; // 0 or 1/(1-rate); empty when the layer is the identity
};

/// Inverted dropout: survivors are scaled by 1/(1-rate) so eval mode is the identity.
template <typename Scalar>
DropoutResult<Scalar> dropout(const Tensor<Scalar>& input, double rate, Mode mode, Rng& rng);

template <typename Scalar>
Tensor<Scalar> dropout_backward(const Tensor<Scalar>& mask, const Tensor<Scalar>& grad_output);

} // namespace hscnn
