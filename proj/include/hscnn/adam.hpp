#pragma once

#include "hscnn/network.hpp"

#include <vector>

namespace hscnn {

template <typename Scalar>
struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long long step = 0;
    std::vector<Vector<Scalar>> first_moment;
    std::vector<Vector<Scalar>> second_moment;
};

/// Bias-corrected Adam update applied in place to `params`. Moments are
/// created on the first call and must keep their shapes afterwards.
template <typename Scalar>
void adam_step(std::vector<Eigen::Map<Vector<Scalar>>>& params,
               const std::vector<Eigen::Map<Vector<Scalar>>>& grads, AdamState<Scalar>& state);

/// Updates every trainable tensor of `model` from the matching tensor of `grads`.
template <typename Scalar>
void adam_step(Model<Scalar>& model, Model<Scalar>& grads, AdamState<Scalar>& state);

} // namespace hscnn
