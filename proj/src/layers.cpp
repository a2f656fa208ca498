#include "hscnn/layers.hpp"
#include "hscnn/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace hscnn {

namespace {

struct ConvGeometry {
    Index batch = 1;
    Index channels = 0;
    Index depth = 0, height = 0, width = 0;
    bool batched = false;

    Index voxels() const { return depth * height * width; }
};

template <typename Scalar>
ConvGeometry conv_geometry(const Tensor<Scalar>& input)
{
    ConvGeometry g;
    if (input.rank() == 4) {
        g.channels = input.dim(0);
        g.depth = input.dim(1);
        g.height = input.dim(2);
        g.width = input.dim(3);
    } else if (input.rank() == 5) {
        g.batched = true;
        g.batch = input.dim(0);
        g.channels = input.dim(1);
        g.depth = input.dim(2);
        g.height = input.dim(3);
        g.width = input.dim(4);
    } else {
        throw ShapeError("conv3d expects a (C,D,H,W) or (B,C,D,H,W) tensor, got " + shape_string(input.shape()));
    }
    return g;
}

// Gathers the 27 shifted copies of every input channel into the rows of a
// (C_in*27, D*H*W) row-major matrix.
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, RowMatrix<Scalar>& col)
{
    const Index D = g.depth, H = g.height, W = g.width;
    col.resize(g.channels * kKernelVolume, g.voxels());
    for (Index ci = 0; ci < g.channels; ++ci) {
        for (Index k = 0; k < kKernelVolume; ++k) {
            const Index kd = k / 9 - 1, kh = (k / 3) % 3 - 1, kw = k % 3 - 1;
            Scalar* dst = col.row(ci * kKernelVolume + k).data();
            for (Index d = 0; d < D; ++d) {
                const Index sd = d + kd;
                for (Index h = 0; h < H; ++h) {
                    const Index sh = h + kh;
                    Scalar* drow = dst + (d * H + h) * W;
                    if (sd < 0 || sd >= D || sh < 0 || sh >= H) {
                        std::fill(drow, drow + W, Scalar(0));
                        continue;
                    }
                    const Scalar* src = x + ((ci * D + sd) * H + sh) * W;
                    if (kw == 0) {
                        std::copy(src, src + W, drow);
                    } else if (kw < 0) {
                        drow[0] = Scalar(0);
                        std::copy(src, src + W - 1, drow + 1);
                    } else {
                        std::copy(src + 1, src + W, drow);
                        drow[W - 1] = Scalar(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters-and-adds every row back onto the input grid.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& col, const ConvGeometry& g, Scalar* gx)
{
    const Index D = g.depth, H = g.height, W = g.width;
    std::fill(gx, gx + g.channels * g.voxels(), Scalar(0));
    for (Index ci = 0; ci < g.channels; ++ci) {
        for (Index k = 0; k < kKernelVolume; ++k) {
            const Index kd = k / 9 - 1, kh = (k / 3) % 3 - 1, kw = k % 3 - 1;
            const Scalar* src = col.row(ci * kKernelVolume + k).data();
            for (Index d = 0; d < D; ++d) {
                const Index sd = d + kd;
                if (sd < 0 || sd >= D)
                    continue;
                for (Index h = 0; h < H; ++h) {
                    const Index sh = h + kh;
                    if (sh < 0 || sh >= H)
                        continue;
                    const Scalar* srow = src + (d * H + h) * W;
                    Scalar* dst = gx + ((ci * D + sd) * H + sh) * W;
                    const Index w0 = std::max<Index>(0, -kw);
                    const Index w1 = std::min<Index>(W, W - kw);
                    for (Index w = w0; w < w1; ++w)
                        dst[w + kw] += srow[w];
                }
            }
        }
    }
}

template <typename Scalar>
Eigen::Map<const RowMatrix<Scalar>> kernel_matrix(const ConvParams<Scalar>& p)
{
    return {p.kernels.data(), p.out_channels(), p.in_channels() * kKernelVolume};
}

} // namespace

template <typename Scalar>
ConvParams<Scalar> ConvParams<Scalar>::zeros(Index out_channels, Index in_channels)
{
    return {Tensor<Scalar>({out_channels, in_channels, kKernelExtent, kKernelExtent, kKernelExtent}),
            Vector<Scalar>::Zero(out_channels)};
}

template <typename Scalar>
void ConvParams<Scalar>::validate() const
{
    if (kernels.rank() != 5 || kernels.dim(2) != kKernelExtent || kernels.dim(3) != kKernelExtent ||
        kernels.dim(4) != kKernelExtent)
        throw ShapeError("conv kernels must be (C_out, C_in, 3, 3, 3), got " + shape_string(kernels.shape()));
    if (bias.size() != out_channels())
        throw ShapeError("conv bias length must equal C_out");
}

template <typename Scalar>
Tensor<Scalar> conv3d_forward(const Tensor<Scalar>& input, const ConvParams<Scalar>& params, int threads)
{
    params.validate();
    const ConvGeometry g = conv_geometry(input);
    if (g.channels != params.in_channels())
        throw ShapeError("conv3d channel mismatch: input has " + std::to_string(g.channels) + ", kernels expect " +
                         std::to_string(params.in_channels()));
    require_finite(input, "conv3d input");

    const Index cout = params.out_channels();
    const Index n = g.voxels();
    Shape out_shape = input.shape();
    out_shape[g.batched ? 1 : 0] = cout;
    Tensor<Scalar> output(out_shape);
    const auto K = kernel_matrix(params);

    parallel_for(g.batch, threads, [&](Index b) {
        RowMatrix<Scalar> col;
        im2col(input.data() + b * g.channels * n, g, col);
        Eigen::Map<RowMatrix<Scalar>> out(output.data() + b * cout * n, cout, n);
        out.noalias() = K * col;
        out.colwise() += params.bias;
    });
    return output;
}

template <typename Scalar>
ConvGrads<Scalar> conv3d_backward(const Tensor<Scalar>& input, const ConvParams<Scalar>& params,
                                  const Tensor<Scalar>& grad_output, bool want_input_grad, int threads)
{
    params.validate();
    const ConvGeometry g = conv_geometry(input);
    const Index cout = params.out_channels();
    Shape out_shape = input.shape();
    out_shape[g.batched ? 1 : 0] = cout;
    if (g.channels != params.in_channels() || grad_output.shape() != out_shape)
        throw ShapeError("conv3d_backward shape mismatch: grad_output " + shape_string(grad_output.shape()) +
                         ", expected " + shape_string(out_shape));

    const Index n = g.voxels();
    const auto K = kernel_matrix(params);
    ConvGrads<Scalar> grads;
    if (want_input_grad)
        grads.input = Tensor<Scalar>(input.shape());

    std::vector<RowMatrix<Scalar>> partial_k(static_cast<std::size_t>(g.batch));
    std::vector<Vector<Scalar>> partial_b(static_cast<std::size_t>(g.batch));
    parallel_for(g.batch, threads, [&](Index b) {
        RowMatrix<Scalar> col;
        im2col(input.data() + b * g.channels * n, g, col);
        Eigen::Map<const RowMatrix<Scalar>> G(grad_output.data() + b * cout * n, cout, n);
        partial_k[static_cast<std::size_t>(b)].noalias() = G * col.transpose();
        partial_b[static_cast<std::size_t>(b)] = G.rowwise().sum();
        if (want_input_grad) {
            col.noalias() = K.transpose() * G;
            col2im(col, g, grads.input.data() + b * g.channels * n);
        }
    });

    grads.kernels = Tensor<Scalar>(params.kernels.shape());
    Eigen::Map<RowMatrix<Scalar>> gk(grads.kernels.data(), cout, g.channels * kKernelVolume);
    grads.bias = Vector<Scalar>::Zero(cout);
    for (Index b = 0; b < g.batch; ++b) {
        gk += partial_k[static_cast<std::size_t>(b)];
        grads.bias += partial_b[static_cast<std::size_t>(b)];
    }
    return grads;
}

// ---------------------------------------------------------------------------

namespace {

struct PoolGeometry {
    Index planes = 1;
    std::array<Index, 3> in{};
    std::array<Index, 3> out{};
};

PoolGeometry pool_geometry(const Shape& shape, const PoolSpec& spec)
{
    if (shape.size() < 3)
        throw ShapeError("maxpool3d needs at least three extents, got " + shape_string(shape));
    PoolGeometry g;
    const std::size_t lead = shape.size() - 3;
    for (std::size_t i = 0; i < lead; ++i)
        g.planes *= shape[i];
    for (std::size_t a = 0; a < 3; ++a) {
        const Index e = shape[lead + a];
        const Index s = spec.stride[a], d = spec.window[a];
        if (s <= 0 || d <= 0)
            throw ShapeError("pool window and stride must be positive");
        if (e % s != 0 || e < d)
            throw ShapeError("maxpool3d extent " + std::to_string(e) + " not divisible by stride " +
                             std::to_string(s));
        g.in[a] = e;
        g.out[a] = (e - d) / s + 1;
    }
    return g;
}

Shape pooled_shape(const Shape& shape, const PoolGeometry& g)
{
    Shape out = shape;
    const std::size_t lead = shape.size() - 3;
    for (std::size_t a = 0; a < 3; ++a)
        out[lead + a] = g.out[a];
    return out;
}

} // namespace

template <typename Scalar>
PoolResult<Scalar> maxpool3d_forward(const Tensor<Scalar>& input, const PoolSpec& spec)
{
    const PoolGeometry g = pool_geometry(input.shape(), spec);
    require_finite(input, "maxpool3d input");
    PoolResult<Scalar> r;
    r.output = Tensor<Scalar>(pooled_shape(input.shape(), g));
    r.argmax.resize(static_cast<std::size_t>(r.output.size()));

    const auto [D, H, W] = g.in;
    const auto [OD, OH, OW] = g.out;
    Index o = 0;
    for (Index p = 0; p < g.planes; ++p) {
        const Index base = p * D * H * W;
        for (Index x = 0; x < OD; ++x)
            for (Index y = 0; y < OH; ++y)
                for (Index z = 0; z < OW; ++z, ++o) {
                    Index best = -1;
                    Scalar best_val = Scalar(0);
                    for (Index i = x * spec.stride[0]; i < x * spec.stride[0] + spec.window[0]; ++i)
                        for (Index j = y * spec.stride[1]; j < y * spec.stride[1] + spec.window[1]; ++j)
                            for (Index k = z * spec.stride[2]; k < z * spec.stride[2] + spec.window[2]; ++k) {
                                const Index idx = base + (i * H + j) * W + k;
                                if (best < 0 || input[idx] > best_val) {
                                    best = idx;
                                    best_val = input[idx];
                                }
                            }
                    r.output[o] = best_val;
                    r.argmax[static_cast<std::size_t>(o)] = best;
                }
    }
    return r;
}

template <typename Scalar>
Tensor<Scalar> maxpool3d_backward(const std::vector<Index>& argmax, const Tensor<Scalar>& grad_output,
                                  const Shape& input_shape, const PoolSpec& spec)
{
    const PoolGeometry g = pool_geometry(input_shape, spec);
    if (grad_output.shape() != pooled_shape(input_shape, g) ||
        static_cast<Index>(argmax.size()) != grad_output.size())
        throw ShapeError("maxpool3d_backward: indices do not match grad_output " +
                         shape_string(grad_output.shape()));

    const auto [D, H, W] = g.in;
    const auto [OD, OH, OW] = g.out;
    Tensor<Scalar> grad_input(input_shape);
    Index o = 0;
    for (Index p = 0; p < g.planes; ++p)
        for (Index x = 0; x < OD; ++x)
            for (Index y = 0; y < OH; ++y)
                for (Index z = 0; z < OW; ++z, ++o) {
                    const Index idx = argmax[static_cast<std::size_t>(o)];
                    const Index local = idx - p * D * H * W;
                    const Index i = local / (H * W), j = (local / W) % H, k = local % W;
                    const bool inside = local >= 0 && local < D * H * W && i >= x * spec.stride[0] &&
                                        i < x * spec.stride[0] + spec.window[0] && j >= y * spec.stride[1] &&
                                        j < y * spec.stride[1] + spec.window[1] && k >= z * spec.stride[2] &&
                                        k < z * spec.stride[2] + spec.window[2];
                    if (!inside)
                        throw ShapeError("maxpool3d_backward: stale argmax index outside its pooling window");
                    grad_input[idx] += grad_output[o];
                }
    return grad_input;
}

// ---------------------------------------------------------------------------

namespace {

struct NormGeometry {
    Index batch = 0, channels = 0, inner = 1;
};

NormGeometry norm_geometry(const Shape& shape)
{
    if (shape.size() < 2)
        throw ShapeError("batchnorm expects a (B, C, ...) tensor, got " + shape_string(shape));
    NormGeometry g{shape[0], shape[1], 1};
    for (std::size_t i = 2; i < shape.size(); ++i)
        g.inner *= shape[i];
    return g;
}

} // namespace

template <typename Scalar>
BatchNormParams<Scalar> BatchNormParams<Scalar>::identity(Index channels)
{
    BatchNormParams p;
    p.gamma = Vector<Scalar>::Ones(channels);
    p.beta = Vector<Scalar>::Zero(channels);
    p.running_mean = Vector<Scalar>::Zero(channels);
    p.running_var = Vector<Scalar>::Ones(channels);
    return p;
}

template <typename Scalar>
void BatchNormParams<Scalar>::validate() const
{
    const Index c = gamma.size();
    if (beta.size() != c || running_mean.size() != c || running_var.size() != c)
        throw ShapeError("batchnorm parameter lengths disagree");
    if (!(epsilon > 0))
        throw ConfigError("batchnorm epsilon must be positive");
    if (!(momentum > 0 && momentum < 1))
        throw ConfigError("batchnorm momentum must lie in (0, 1)");
    if ((running_var.array() < 0).any())
        throw NumericError("batchnorm running variance is negative");
}

template <typename Scalar>
BatchNormResult<Scalar> batchnorm_forward(const Tensor<Scalar>& input, const BatchNormParams<Scalar>& params,
                                          Mode mode)
{
    params.validate();
    const NormGeometry g = norm_geometry(input.shape());
    if (g.channels != params.channels())
        throw ShapeError("batchnorm channel mismatch");
    require_finite(input, "batchnorm input");

    BatchNormResult<Scalar> r;
    auto& c = r.cache;
    c.mode = mode;
    c.shape = input.shape();
    if (mode == Mode::Train) {
        if (g.batch < 2)
            throw ShapeError("batchnorm in train mode needs a batch of at least 2");
        const Scalar count = Scalar(g.batch * g.inner);
        c.mean = Vector<Scalar>::Zero(g.channels);
        c.var = Vector<Scalar>::Zero(g.channels);
        for (Index b = 0; b < g.batch; ++b)
            for (Index ch = 0; ch < g.channels; ++ch)
                c.mean[ch] += input.flat().segment((b * g.channels + ch) * g.inner, g.inner).sum();
        c.mean /= count;
        for (Index b = 0; b < g.batch; ++b)
            for (Index ch = 0; ch < g.channels; ++ch)
                c.var[ch] += (input.flat().segment((b * g.channels + ch) * g.inner, g.inner).array() - c.mean[ch])
                                 .square()
                                 .sum();
        c.var /= count;
    } else {
        c.mean = params.running_mean;
        c.var = params.running_var;
    }
    c.inv_std = (c.var.array() + params.epsilon).rsqrt();

    c.normalized = Tensor<Scalar>(input.shape());
    r.output = Tensor<Scalar>(input.shape());
    for (Index b = 0; b < g.batch; ++b)
        for (Index ch = 0; ch < g.channels; ++ch) {
            const Index off = (b * g.channels + ch) * g.inner;
            auto xhat = c.normalized.flat().segment(off, g.inner);
            xhat = (input.flat().segment(off, g.inner).array() - c.mean[ch]) * c.inv_std[ch];
            r.output.flat().segment(off, g.inner) = (xhat.array() * params.gamma[ch] + params.beta[ch]).matrix();
        }
    return r;
}

template <typename Scalar>
void update_running_stats(BatchNormParams<Scalar>& params, const BatchNormCache<Scalar>& cache)
{
    if (cache.mode != Mode::Train)
        return;
    const NormGeometry g = norm_geometry(cache.shape);
    const Scalar count = Scalar(g.batch * g.inner);
    const Scalar m = params.momentum;
    params.running_mean = m * params.running_mean + (1 - m) * cache.mean;
    params.running_var = m * params.running_var + (1 - m) * cache.var * (count / (count - 1));
}

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const BatchNormCache<Scalar>& cache, const BatchNormParams<Scalar>& params,
                                          const Tensor<Scalar>& grad_output)
{
    if (grad_output.shape() != cache.shape)
        throw ShapeError("batchnorm_backward shape mismatch");
    const NormGeometry g = norm_geometry(cache.shape);
    BatchNormGrads<Scalar> grads;
    grads.gamma = Vector<Scalar>::Zero(g.channels);
    grads.beta = Vector<Scalar>::Zero(g.channels);
    for (Index b = 0; b < g.batch; ++b)
        for (Index ch = 0; ch < g.channels; ++ch) {
            const Index off = (b * g.channels + ch) * g.inner;
            const auto dy = grad_output.flat().segment(off, g.inner);
            grads.beta[ch] += dy.sum();
            grads.gamma[ch] += dy.dot(cache.normalized.flat().segment(off, g.inner));
        }

    grads.input = Tensor<Scalar>(cache.shape);
    const Scalar count = Scalar(g.batch * g.inner);
    for (Index b = 0; b < g.batch; ++b)
        for (Index ch = 0; ch < g.channels; ++ch) {
            const Index off = (b * g.channels + ch) * g.inner;
            const auto dy = grad_output.flat().segment(off, g.inner).array();
            auto dx = grads.input.flat().segment(off, g.inner).array();
            const Scalar scale = params.gamma[ch] * cache.inv_std[ch];
            if (cache.mode == Mode::Train) {
                const auto xhat = cache.normalized.flat().segment(off, g.inner).array();
                dx = scale * (dy - grads.beta[ch] / count - xhat * (grads.gamma[ch] / count));
            } else {
                dx = scale * dy;
            }
        }
    return grads;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
DenseParams<Scalar> DenseParams<Scalar>::zeros(Index out_units, Index in_units)
{
    return {Matrix<Scalar>::Zero(out_units, in_units), Vector<Scalar>::Zero(out_units)};
}

template <typename Scalar>
void DenseParams<Scalar>::validate() const
{
    if (bias.size() != weights.rows())
        throw ShapeError("dense bias length must equal out_units");
}

namespace {

template <typename Scalar>
Index dense_batch(const Tensor<Scalar>& input, Index in_units)
{
    if (input.rank() == 1 && input.dim(0) == in_units)
        return 1;
    if (input.rank() == 2 && input.dim(1) == in_units)
        return input.dim(0);
    throw ShapeError("dense input " + shape_string(input.shape()) + " does not have " + std::to_string(in_units) +
                     " features");
}

} // namespace

template <typename Scalar>
Tensor<Scalar> dense_forward(const Tensor<Scalar>& input, const DenseParams<Scalar>& params)
{
    params.validate();
    const Index batch = dense_batch(input, params.in_units());
    require_finite(input, "dense input");
    Tensor<Scalar> output(input.rank() == 1 ? Shape{params.out_units()} : Shape{batch, params.out_units()});
    Eigen::Map<const Matrix<Scalar>> X(input.data(), params.in_units(), batch);
    Eigen::Map<Matrix<Scalar>> Y(output.data(), params.out_units(), batch);
    Y.noalias() = params.weights * X;
    Y.colwise() += params.bias;
    return output;
}

template <typename Scalar>
DenseGrads<Scalar> dense_backward(const Tensor<Scalar>& input, const DenseParams<Scalar>& params,
                                  const Tensor<Scalar>& grad_output)
{
    params.validate();
    const Index batch = dense_batch(input, params.in_units());
    if (grad_output.size() != batch * params.out_units())
        throw ShapeError("dense_backward grad_output size mismatch");
    Eigen::Map<const Matrix<Scalar>> X(input.data(), params.in_units(), batch);
    Eigen::Map<const Matrix<Scalar>> G(grad_output.data(), params.out_units(), batch);
    DenseGrads<Scalar> grads;
    grads.weights.noalias() = G * X.transpose();
    grads.bias = G.rowwise().sum();
    grads.input = Tensor<Scalar>(input.shape());
    Eigen::Map<Matrix<Scalar>> GX(grads.input.data(), params.in_units(), batch);
    GX.noalias() = params.weights.transpose() * G;
    return grads;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input)
{
    return Tensor<Scalar>(input.shape(), input.flat().cwiseMax(Scalar(0)));
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_output)
{
    if (input.shape() != grad_output.shape())
        throw ShapeError("relu_backward shape mismatch");
    Vector<Scalar> g = (input.flat().array() > Scalar(0)).select(grad_output.flat(), Scalar(0));
    return Tensor<Scalar>(input.shape(), std::move(g));
}

template <typename Scalar>
DropoutResult<Scalar> dropout(const Tensor<Scalar>& input, double rate, Mode mode, Rng& rng)
{
    if (!(rate >= 0.0 && rate < 1.0))
        throw ConfigError("dropout rate must lie in [0, 1)");
    if (mode == Mode::Eval || rate == 0.0)
        return {input, Tensor<Scalar>()};
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
    Tensor<Scalar> mask(input.shape());
    for (Index i = 0; i < mask.size(); ++i)
        mask[i] = uniform(rng) < rate ? Scalar(0) : keep_scale;
    return {Tensor<Scalar>(input.shape(), input.flat().cwiseProduct(mask.flat())), std::move(mask)};
}

template <typename Scalar>
Tensor<Scalar> dropout_backward(const Tensor<Scalar>& mask, const Tensor<Scalar>& grad_output)
{
    if (mask.empty())
        return grad_output;
    if (mask.shape() != grad_output.shape())
        throw ShapeError("dropout_backward shape mismatch");
    return Tensor<Scalar>(mask.shape(), grad_output.flat().cwiseProduct(mask.flat()));
}

#define HSCNN_INSTANTIATE_LAYERS(S)                                                                                  \
    template struct ConvParams<S>;                                                                                   \
    template struct BatchNormParams<S>;                                                                              \
    template struct DenseParams<S>;                                                                                  \
    template Tensor<S> conv3d_forward(const Tensor<S>&, const ConvParams<S>&, int);                                  \
    template ConvGrads<S> conv3d_backward(const Tensor<S>&, const ConvParams<S>&, const Tensor<S>&, bool, int);      \
    template PoolResult<S> maxpool3d_forward(const Tensor<S>&, const PoolSpec&);                                     \
    template Tensor<S> maxpool3d_backward(const std::vector<Index>&, const Tensor<S>&, const Shape&,                 \
                                          const PoolSpec&);                                                          \
    template BatchNormResult<S> batchnorm_forward(const Tensor<S>&, const BatchNormParams<S>&, Mode);                \
    template void update_running_stats(BatchNormParams<S>&, const BatchNormCache<S>&);                              \
    template BatchNormGrads<S> batchnorm_backward(const BatchNormCache<S>&, const BatchNormParams<S>&,               \
                                                  const Tensor<S>&);                                                 \
    template Tensor<S> dense_forward(const Tensor<S>&, const DenseParams<S>&);                                       \
    template DenseGrads<S> dense_backward(const Tensor<S>&, const DenseParams<S>&, const Tensor<S>&);                \
    template Tensor<S> relu(const Tensor<S>&);                                                                       \
    template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);                                            \
    template DropoutResult<S> dropout(const Tensor<S>&, double, Mode, Rng&);                                         \
    template Tensor<S> dropout_backward(const Tensor<S>&, const Tensor<S>&);

HSCNN_INSTANTIATE_LAYERS(float)
HSCNN_INSTANTIATE_LAYERS(double)

} // namespace hscnn
