#include "hscnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace hscnn {

const char* variant_name(Variant v) { return v == Variant::Hscnn ? "hscnn" : "baseline"; }

Variant variant_from_name(std::string_view name)
{
    if (name == "hscnn")
        return Variant::Hscnn;
    if (name == "baseline")
        return Variant::Baseline;
    throw ConfigError("unknown variant '" + std::string(name) + "' (expected hscnn or baseline)");
}

void NetworkConfig::validate() const
{
    if (conv_module_channels.empty())
        throw ConfigError("at least one convolution module is required");
    for (Index c : conv_module_channels)
        if (c <= 0)
            throw ConfigError("convolution channel counts must be positive");
    const Index factor = Index(1) << conv_module_channels.size();
    if (input_cube_voxels <= 0 || input_cube_voxels % factor != 0)
        throw ConfigError("input_cube_voxels must be a positive multiple of " + std::to_string(factor));
    if (branch_hidden.empty())
        throw ConfigError("branch_hidden needs at least one layer");
    for (Index w : branch_hidden)
        if (w <= 0)
            throw ConfigError("branch widths must be positive");
    if (highlevel_hidden <= 0)
        throw ConfigError("highlevel_hidden must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw ConfigError("dropout_rate must lie in [0, 1)");
    std::set<Task> seen;
    for (Task t : semantic_tasks) {
        if (t == Task::Malignancy)
            throw ConfigError("malignancy cannot be a semantic task");
        if (!seen.insert(t).second)
            throw ConfigError("duplicate semantic task");
    }
    if (variant == Variant::Hscnn && semantic_tasks.size() != kSemanticTaskCount)
        throw ConfigError("the hscnn variant needs exactly five semantic tasks");
    if (variant == Variant::Baseline && !semantic_tasks.empty())
        throw ConfigError("the baseline variant has no semantic tasks");
}

Index NetworkConfig::pooled_extent() const
{
    return input_cube_voxels >> conv_module_channels.size();
}

Index NetworkConfig::trunk_features() const
{
    const Index e = pooled_extent();
    return e * e * e * conv_module_channels.back();
}

Index NetworkConfig::concat_features() const
{
    return trunk_features() + static_cast<Index>(semantic_tasks.size()) * tap_width();
}

namespace {

template <typename T>
std::string join(const std::vector<T>& values)
{
    std::ostringstream os;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i)
            os << ',';
        if constexpr (std::is_same_v<T, Task>)
            os << task_name(values[i]);
        else
            os << values[i];
    }
    return os.str();
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    if (s.empty())
        return out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep))
        out.push_back(item);
    return out;
}

Index parse_index(const std::string& s)
{
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size())
            throw DataError("bad integer '" + s + "'");
        return static_cast<Index>(v);
    } catch (const std::logic_error&) {
        throw DataError("bad integer '" + s + "'");
    }
}

} // namespace

std::string NetworkConfig::canonical_text() const
{
    std::ostringstream os;
    os.precision(17);
    os << "variant=" << variant_name(variant) << '\n'
       << "input_cube_voxels=" << input_cube_voxels << '\n'
       << "conv_module_channels=" << join(conv_module_channels) << '\n'
       << "branch_hidden=" << join(branch_hidden) << '\n'
       << "highlevel_hidden=" << highlevel_hidden << '\n'
       << "dropout_rate=" << dropout_rate << '\n'
       << "semantic_tasks=" << join(semantic_tasks) << '\n';
    return os.str();
}

NetworkConfig NetworkConfig::parse_canonical(const std::string& text)
{
    NetworkConfig c;
    std::set<std::string> seen;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("malformed config line '" + line + "'");
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        seen.insert(key);
        if (key == "variant") {
            c.variant = variant_from_name(value);
        } else if (key == "input_cube_voxels") {
            c.input_cube_voxels = parse_index(value);
        } else if (key == "conv_module_channels") {
            c.conv_module_channels.clear();
            for (const auto& v : split(value, ','))
                c.conv_module_channels.push_back(parse_index(v));
        } else if (key == "branch_hidden") {
            c.branch_hidden.clear();
            for (const auto& v : split(value, ','))
                c.branch_hidden.push_back(parse_index(v));
        } else if (key == "highlevel_hidden") {
            c.highlevel_hidden = parse_index(value);
        } else if (key == "dropout_rate") {
            c.dropout_rate = std::stod(value);
        } else if (key == "semantic_tasks") {
            c.semantic_tasks.clear();
            for (const auto& v : split(value, ','))
                c.semantic_tasks.push_back(task_from_name(v));
        } else {
            throw DataError("unknown config key '" + key + "'");
        }
    }
    if (seen.size() != 7)
        throw DataError("incomplete network config header");
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

Rng make_rng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

namespace {

constexpr std::uint64_t kTrunkStream = 1;
constexpr std::uint64_t kBranchStream = 100;
constexpr std::uint64_t kHeadStream = 200;

template <typename Scalar, typename Derived>
void xavier_fill(Eigen::DenseBase<Derived>& values, Index fan_in, Index fan_out, Rng& rng)
{
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (Index i = 0; i < values.size(); ++i)
        values.derived().data()[i] = static_cast<Scalar>(uniform(rng));
}

template <typename Scalar>
DenseBlock<Scalar> make_dense_block(Index out, Index in, Rng& rng)
{
    DenseBlock<Scalar> b{DenseParams<Scalar>::zeros(out, in), BatchNormParams<Scalar>::identity(out)};
    xavier_fill<Scalar>(b.dense.weights, in, out, rng);
    return b;
}

template <typename Scalar>
DenseParams<Scalar> make_dense(Index out, Index in, Rng& rng)
{
    auto d = DenseParams<Scalar>::zeros(out, in);
    xavier_fill<Scalar>(d.weights, in, out, rng);
    return d;
}

} // namespace

template <typename Scalar>
Model<Scalar> build_model(const NetworkConfig& config, std::uint64_t seed)
{
    config.validate();
    Model<Scalar> m;
    m.config = config;
    m.seed = seed;

    Rng trunk_rng = make_rng(seed, kTrunkStream);
    Index in_channels = 1;
    for (Index channels : config.conv_module_channels) {
        for (int layer = 0; layer < 2; ++layer) {
            ConvBlock<Scalar> block{ConvParams<Scalar>::zeros(channels, in_channels),
                                    BatchNormParams<Scalar>::identity(channels)};
            xavier_fill<Scalar>(block.conv.kernels.flat(), in_channels * kKernelVolume, channels * kKernelVolume,
                                trunk_rng);
            m.trunk.push_back(std::move(block));
            in_channels = channels;
        }
    }

    for (Task task : config.semantic_tasks) {
        Rng rng = make_rng(seed, kBranchStream + static_cast<std::uint64_t>(task_index(task)));
        Branch<Scalar> branch;
        branch.task = task;
        Index in = config.trunk_features();
        for (Index width : config.branch_hidden) {
            branch.hidden.push_back(make_dense_block<Scalar>(width, in, rng));
            in = width;
        }
        branch.output = make_dense<Scalar>(2, in, rng);
        m.branches.push_back(std::move(branch));
    }

    Rng head_rng = make_rng(seed, kHeadStream);
    m.head.hidden = make_dense_block<Scalar>(config.highlevel_hidden, config.concat_features(), head_rng);
    m.head.output = make_dense<Scalar>(2, config.highlevel_hidden, head_rng);
    return m;
}

namespace {

template <typename Scalar>
Eigen::Map<Vector<Scalar>> view(Vector<Scalar>& v)
{
    return {v.data(), v.size()};
}

template <typename Scalar>
Eigen::Map<Vector<Scalar>> view(Matrix<Scalar>& m)
{
    return {m.data(), m.size()};
}

template <typename Scalar>
Eigen::Map<Vector<Scalar>> view(Tensor<Scalar>& t)
{
    return {t.data(), t.size()};
}

template <typename Scalar>
void add_bn(std::vector<ParamView<Scalar>>& out, const std::string& prefix, BatchNormParams<Scalar>& bn,
            bool buffers)
{
    out.push_back({prefix + ".gamma", view(bn.gamma), true});
    out.push_back({prefix + ".beta", view(bn.beta), true});
    if (buffers) {
        out.push_back({prefix + ".running_mean", view(bn.running_mean), false});
        out.push_back({prefix + ".running_var", view(bn.running_var), false});
    }
}

template <typename Scalar>
void add_dense(std::vector<ParamView<Scalar>>& out, const std::string& prefix, DenseParams<Scalar>& d)
{
    out.push_back({prefix + ".weights", view(d.weights), true});
    out.push_back({prefix + ".bias", view(d.bias), true});
}

} // namespace

template <typename Scalar>
std::vector<ParamView<Scalar>> Model<Scalar>::parameters(bool include_buffers)
{
    std::vector<ParamView<Scalar>> out;
    for (std::size_t i = 0; i < trunk.size(); ++i) {
        const std::string p = "trunk.module" + std::to_string(i / 2) + ".conv" + std::to_string(i % 2);
        out.push_back({p + ".kernels", view(trunk[i].conv.kernels), true});
        out.push_back({p + ".bias", view(trunk[i].conv.bias), true});
        add_bn(out, p + ".bn", trunk[i].bn, include_buffers);
    }
    for (auto& branch : branches) {
        const std::string p = "branch." + std::string(task_name(branch.task));
        for (std::size_t l = 0; l < branch.hidden.size(); ++l) {
            add_dense(out, p + ".fc" + std::to_string(l), branch.hidden[l].dense);
            add_bn(out, p + ".fc" + std::to_string(l) + ".bn", branch.hidden[l].bn, include_buffers);
        }
        add_dense(out, p + ".out", branch.output);
    }
    add_dense(out, "head.fc", head.hidden.dense);
    add_bn(out, "head.fc.bn", head.hidden.bn, include_buffers);
    add_dense(out, "head.out", head.output);
    return out;
}

template <typename Scalar>
Index Model<Scalar>::parameter_count() const
{
    Index n = 0;
    for (auto& p : const_cast<Model*>(this)->parameters())
        n += p.values.size();
    return n;
}

template <typename Scalar>
Model<Scalar> Model<Scalar>::zeros_like() const
{
    Model z = *this;
    for (auto& p : z.parameters(true))
        p.values.setZero();
    return z;
}

template <typename Scalar>
template <typename Other>
Model<Other> Model<Scalar>::cast() const
{
    Model<Other> out = build_model<Other>(config, seed);
    auto src = const_cast<Model*>(this)->parameters(true);
    auto dst = out.parameters(true);
    for (std::size_t i = 0; i < src.size(); ++i)
        dst[i].values = src[i].values.template cast<Other>();
    auto copy_bn = [](const BatchNormParams<Scalar>& a, BatchNormParams<Other>& b) {
        b.epsilon = static_cast<Other>(a.epsilon);
        b.momentum = static_cast<Other>(a.momentum);
    };
    for (std::size_t i = 0; i < trunk.size(); ++i)
        copy_bn(trunk[i].bn, out.trunk[i].bn);
    for (std::size_t b = 0; b < branches.size(); ++b)
        for (std::size_t l = 0; l < branches[b].hidden.size(); ++l)
            copy_bn(branches[b].hidden[l].bn, out.branches[b].hidden[l].bn);
    copy_bn(head.hidden.bn, out.head.hidden.bn);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

template <typename Scalar>
DenseStage<Scalar> dense_stage_forward(const DenseBlock<Scalar>& block, Tensor<Scalar> input, Mode mode,
                                       double dropout_rate, Rng& rng)
{
    DenseStage<Scalar> s;
    auto z = dense_forward(input, block.dense);
    auto bn = batchnorm_forward(z, block.bn, mode);
    s.input = std::move(input);
    s.bn = std::move(bn.cache);
    s.activated = relu(bn.output);
    s.normalized = std::move(bn.output);
    if (dropout_rate > 0.0) {
        auto d = dropout(s.activated, dropout_rate, mode, rng);
        s.dropout_mask = std::move(d.mask);
    }
    return s;
}

template <typename Scalar>
Tensor<Scalar> dropped(const DenseStage<Scalar>& s)
{
    if (s.dropout_mask.empty())
        return s.activated;
    return Tensor<Scalar>(s.activated.shape(), s.activated.flat().cwiseProduct(s.dropout_mask.flat()));
}

template <typename Scalar>
Matrix<Scalar> to_logits(const Tensor<Scalar>& t)
{
    return t.as_matrix();
}

template <typename Scalar>
void accumulate_bn(BatchNormParams<Scalar>& g, const BatchNormGrads<Scalar>& bg)
{
    g.gamma += bg.gamma;
    g.beta += bg.beta;
}

template <typename Scalar>
void accumulate_dense(DenseParams<Scalar>& g, const DenseGrads<Scalar>& dg)
{
    g.weights += dg.weights;
    g.bias += dg.bias;
}

// Backward through dense -> batchnorm -> relu, given the gradient at the ReLU
// output. Returns the gradient at the dense input.
template <typename Scalar>
Tensor<Scalar> dense_stage_backward(const DenseBlock<Scalar>& block, const DenseStage<Scalar>& s,
                                    const Tensor<Scalar>& grad_activated, DenseBlock<Scalar>& grads)
{
    auto g = relu_backward(s.normalized, grad_activated);
    auto bg = batchnorm_backward(s.bn, block.bn, g);
    accumulate_bn(grads.bn, bg);
    auto dg = dense_backward(s.input, block.dense, bg.input);
    accumulate_dense(grads.dense, dg);
    return std::move(dg.input);
}

} // namespace

template <typename Scalar>
HeadOutputs<Scalar> forward(const Model<Scalar>& model, const Tensor<Scalar>& batch, Mode mode, Rng& rng,
                            const ForwardOptions& options)
{
    const NetworkConfig& cfg = model.config;
    const Index S = cfg.input_cube_voxels;
    if (batch.rank() != 5 || batch.dim(1) != 1 || batch.dim(2) != S || batch.dim(3) != S || batch.dim(4) != S)
        throw ShapeError("forward expects a (B,1," + std::to_string(S) + "," + std::to_string(S) + "," +
                         std::to_string(S) + ") batch, got " + shape_string(batch.shape()));
    require_finite(batch, "network input");
    const Index B = batch.dim(0);

    HeadOutputs<Scalar> out;
    out.semantic_tasks = cfg.semantic_tasks;
    ForwardCache<Scalar>& cache = out.cache;
    const bool keep = options.keep_cache;

    Tensor<Scalar> x = batch;
    Index extent = S;
    for (std::size_t module = 0; module < cfg.conv_module_channels.size(); ++module) {
        for (int layer = 0; layer < 2; ++layer) {
            const auto& block = model.trunk[module * 2 + static_cast<std::size_t>(layer)];
            auto z = conv3d_forward(x, block.conv, options.threads);
            auto bn = batchnorm_forward(z, block.bn, mode);
            z = Tensor<Scalar>();
            Tensor<Scalar> a = relu(bn.output);
            if (keep)
                cache.conv.push_back({std::move(x), std::move(bn.cache), std::move(bn.output)});
            else if (mode == Mode::Train)
                cache.conv.push_back({Tensor<Scalar>(), std::move(bn.cache), Tensor<Scalar>()});
            x = std::move(a);
        }
        auto pooled = maxpool3d_forward(x);
        if (keep)
            cache.pools.push_back({x.shape(), std::move(pooled.argmax)});
        x = std::move(pooled.output);
        extent /= 2;
        const Shape expected{B, cfg.conv_module_channels[module], extent, extent, extent};
        if (x.shape() != expected)
            throw ShapeError("trunk module " + std::to_string(module) + " produced " + shape_string(x.shape()) +
                             ", expected " + shape_string(expected));
        out.module_shapes.push_back(Shape(expected.begin() + 1, expected.end()));
    }
    cache.pooled_shape = x.shape();

    const Index F = cfg.trunk_features();
    Tensor<Scalar> flat = x.reshaped({B, F});
    out.flat_features = F;

    const Index tap = cfg.tap_width();
    Tensor<Scalar> concat({B, cfg.concat_features()});
    concat.as_matrix().topRows(F) = flat.as_matrix();

    for (std::size_t bi = 0; bi < model.branches.size(); ++bi) {
        const auto& branch = model.branches[bi];
        typename ForwardCache<Scalar>::BranchStage stage;
        Tensor<Scalar> h = flat;
        for (std::size_t l = 0; l < branch.hidden.size(); ++l) {
            auto s = dense_stage_forward(branch.hidden[l], std::move(h), mode, cfg.dropout_rate, rng);
            if (l == 0)
                concat.as_matrix().middleRows(F + static_cast<Index>(bi) * tap, tap) = s.activated.as_matrix();
            h = dropped(s);
            stage.hidden.push_back(std::move(s));
        }
        auto logits = dense_forward(h, branch.output);
        out.semantic_logits.push_back(to_logits(logits));
        stage.output_input = std::move(h);
        if (keep || mode == Mode::Train)
            cache.branches.push_back(std::move(stage));
    }
    out.concat_features = concat.dim(1);

    auto head = dense_stage_forward(model.head.hidden, concat, mode, 0.0, rng);
    auto logits = dense_forward(head.activated, model.head.output);
    out.malignancy_logits = to_logits(logits);
    if (!out.malignancy_logits.allFinite())
        throw NumericError("non-finite malignancy logits");
    for (const auto& l : out.semantic_logits)
        if (!l.allFinite())
            throw NumericError("non-finite semantic logits");

    if (keep) {
        cache.flat = std::move(flat);
        cache.concat = std::move(concat);
        cache.head_output_input = head.activated;
        cache.valid = true;
    }
    if (keep || mode == Mode::Train)
        cache.head = std::move(head);
    return out;
}

template <typename Scalar>
Model<Scalar> backward(const Model<Scalar>& model, const HeadOutputs<Scalar>& outputs,
                       const LogitGrads<Scalar>& grads, int threads)
{
    const ForwardCache<Scalar>& cache = outputs.cache;
    if (!cache.valid)
        throw Error("backward needs the cache of a forward pass run with keep_cache");
    const NetworkConfig& cfg = model.config;
    const Index B = outputs.batch_size();
    if (grads.malignancy.rows() != 2 || grads.malignancy.cols() != B ||
        grads.semantic.size() != model.branches.size())
        throw ShapeError("logit gradients do not match the head outputs");

    Model<Scalar> g = model.zeros_like();
    const Index F = cfg.trunk_features();
    const Index tap = cfg.tap_width();

    // High-level head.
    Tensor<Scalar> gl({B, 2});
    gl.as_matrix() = grads.malignancy;
    auto dout = dense_backward(cache.head_output_input, model.head.output, gl);
    accumulate_dense(g.head.output, dout);
    Tensor<Scalar> gconcat = dense_stage_backward(model.head.hidden, cache.head, dout.input, g.head.hidden);

    Tensor<Scalar> gflat({B, F});
    gflat.as_matrix() = gconcat.as_matrix().topRows(F);

    // Semantic branches; the first hidden layer also receives the jump-connection gradient.
    for (std::size_t bi = 0; bi < model.branches.size(); ++bi) {
        const auto& branch = model.branches[bi];
        const auto& stage = cache.branches[bi];
        auto& gb = g.branches[bi];
        if (grads.semantic[bi].rows() != 2 || grads.semantic[bi].cols() != B)
            throw ShapeError("semantic logit gradient shape mismatch");
        Tensor<Scalar> gs({B, 2});
        gs.as_matrix() = grads.semantic[bi];
        auto dg = dense_backward(stage.output_input, branch.output, gs);
        accumulate_dense(gb.output, dg);
        Tensor<Scalar> gh = std::move(dg.input);
        for (std::size_t l = branch.hidden.size(); l-- > 0;) {
            const auto& s = stage.hidden[l];
            Tensor<Scalar> gact = dropout_backward(s.dropout_mask, gh);
            if (l == 0)
                gact.as_matrix() += gconcat.as_matrix().middleRows(F + static_cast<Index>(bi) * tap, tap);
            gh = dense_stage_backward(branch.hidden[l], s, gact, gb.hidden[l]);
        }
        gflat.flat() += gh.flat();
    }

    // Trunk.
    Tensor<Scalar> gx = gflat.reshaped(cache.pooled_shape);
    for (std::size_t module = cfg.conv_module_channels.size(); module-- > 0;) {
        const auto& pool = cache.pools[module];
        gx = maxpool3d_backward(pool.argmax, gx, pool.input_shape);
        for (int layer = 1; layer >= 0; --layer) {
            const std::size_t idx = module * 2 + static_cast<std::size_t>(layer);
            const auto& stage = cache.conv[idx];
            gx = relu_backward(stage.normalized, gx);
            auto bg = batchnorm_backward(stage.bn, model.trunk[idx].bn, gx);
            accumulate_bn(g.trunk[idx].bn, bg);
            auto cg = conv3d_backward(stage.input, model.trunk[idx].conv, bg.input, idx != 0, threads);
            g.trunk[idx].conv.kernels.flat() += cg.kernels.flat();
            g.trunk[idx].conv.bias += cg.bias;
            gx = std::move(cg.input);
        }
    }
    return g;
}

template <typename Scalar>
void update_running_stats(Model<Scalar>& model, const ForwardCache<Scalar>& cache)
{
    for (std::size_t i = 0; i < cache.conv.size() && i < model.trunk.size(); ++i)
        update_running_stats(model.trunk[i].bn, cache.conv[i].bn);
    for (std::size_t b = 0; b < cache.branches.size() && b < model.branches.size(); ++b)
        for (std::size_t l = 0; l < cache.branches[b].hidden.size(); ++l)
            update_running_stats(model.branches[b].hidden[l].bn, cache.branches[b].hidden[l].bn);
    update_running_stats(model.head.hidden.bn, cache.head.bn);
}

template struct Model<float>;
template struct Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;
template Model<float> build_model(const NetworkConfig&, std::uint64_t);
template Model<double> build_model(const NetworkConfig&, std::uint64_t);
template HeadOutputs<float> forward(const Model<float>&, const Tensor<float>&, Mode, Rng&, const ForwardOptions&);
template HeadOutputs<double> forward(const Model<double>&, const Tensor<double>&, Mode, Rng&,
                                     const ForwardOptions&);
template Model<float> backward(const Model<float>&, const HeadOutputs<float>&, const LogitGrads<float>&, int);
template Model<double> backward(const Model<double>&, const HeadOutputs<double>&, const LogitGrads<double>&, int);
template void update_running_stats(Model<float>&, const ForwardCache<float>&);
template void update_running_stats(Model<double>&, const ForwardCache<double>&);

} // namespace hscnn
