#include "hscnn/adam.hpp"

#include <cmath>

namespace hscnn {

template <typename Scalar>
void adam_step(std::vector<Eigen::Map<Vector<Scalar>>>& params,
               const std::vector<Eigen::Map<Vector<Scalar>>>& grads, AdamState<Scalar>& state)
{
    if (params.size() != grads.size())
        throw ShapeError("adam_step: parameter and gradient lists differ in length");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size())
            throw ShapeError("adam_step: gradient " + std::to_string(i) + " has the wrong size");
        if (!grads[i].allFinite())
            throw NumericError("adam_step: non-finite gradient");
    }
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.push_back(Vector<Scalar>::Zero(p.size()));
            state.second_moment.push_back(Vector<Scalar>::Zero(p.size()));
        }
    }
    if (state.first_moment.size() != params.size())
        throw ShapeError("adam_step: optimizer state does not match the parameter list");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (state.first_moment[i].size() != params[i].size())
            throw ShapeError("adam_step: moment shape mismatch");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const Scalar b1 = static_cast<Scalar>(state.beta1);
    const Scalar b2 = static_cast<Scalar>(state.beta2);
    const Scalar c1 = static_cast<Scalar>(1.0 / (1.0 - std::pow(state.beta1, t)));
    const Scalar c2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(state.beta2, t)));
    const Scalar lr = static_cast<Scalar>(state.learning_rate);
    const Scalar eps = static_cast<Scalar>(state.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        m = b1 * m + (1 - b1) * grads[i];
        v = b2 * v + (1 - b2) * grads[i].cwiseAbs2();
        params[i].array() -= lr * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
    }
}

template <typename Scalar>
void adam_step(Model<Scalar>& model, Model<Scalar>& grads, AdamState<Scalar>& state)
{
    std::vector<Eigen::Map<Vector<Scalar>>> p, g;
    for (auto& v : model.parameters())
        p.push_back(v.values);
    for (auto& v : grads.parameters())
        g.push_back(v.values);
    adam_step(p, g, state);
}

template void adam_step(std::vector<Eigen::Map<Vector<float>>>&, const std::vector<Eigen::Map<Vector<float>>>&,
                        AdamState<float>&);
template void adam_step(std::vector<Eigen::Map<Vector<double>>>&, const std::vector<Eigen::Map<Vector<double>>>&,
                        AdamState<double>&);
template void adam_step(Model<float>&, Model<float>&, AdamState<float>&);
template void adam_step(Model<double>&, Model<double>&, AdamState<double>&);

} // namespace hscnn
