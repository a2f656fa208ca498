#include "hscnn/trainer.hpp"
#include "binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace hscnn {

void TrainOptions::validate() const
{
    if (epochs < 1)
        throw ConfigError("epochs must be at least 1");
    if (batch_size < 1)
        throw ConfigError("batch size must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning rate must be positive");
    if (!(augment_probability >= 0.0 && augment_probability <= 1.0))
        throw ConfigError("augmentation probability must lie in [0, 1]");
    if (augment_options.max_shift < 0)
        throw ConfigError("maximum shift must be non-negative");
    if (threads < 1)
        throw ConfigError("thread count must be at least 1");
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, Index batch_size)
{
    const auto b = static_cast<std::size_t>(batch_size);
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (std::size_t begin = 0; begin < n; begin += b)
        ranges.emplace_back(begin, std::min(n, begin + b));
    if (ranges.size() >= 2 && ranges.back().second - ranges.back().first == 1) {
        ranges[ranges.size() - 2].second = n;
        ranges.pop_back();
    }
    return ranges;
}

namespace {

Tensor<float> make_batch(const std::vector<const NoduleSample*>& samples)
{
    std::vector<const Tensor<float>*> cubes;
    cubes.reserve(samples.size());
    for (const NoduleSample* s : samples)
        cubes.push_back(&s->cube);
    return stack(cubes);
}

struct Accumulator {
    double count = 0.0;
    LossBreakdown sum;
    double unweighted = 0.0;

    void add(const LossBreakdown& b, double unweighted_malignancy, double n)
    {
        if (count == 0.0) {
            sum.semantic_tasks = b.semantic_tasks;
            sum.semantic.assign(b.semantic.size(), 0.0);
        }
        for (std::size_t j = 0; j < b.semantic.size(); ++j)
            sum.semantic[j] += n * b.semantic[j];
        sum.malignancy += n * b.malignancy;
        sum.global += n * b.global;
        unweighted += n * unweighted_malignancy;
        count += n;
    }

    LossBreakdown mean() const
    {
        LossBreakdown m = sum;
        if (count > 0.0) {
            for (double& v : m.semantic)
                v /= count;
            m.malignancy /= count;
            m.global /= count;
        }
        return m;
    }
};

void check_finite(const LossBreakdown& b, int epoch, const char* where)
{
    if (!std::isfinite(b.global))
        throw NumericError(std::string("non-finite ") + where + " loss at epoch " + std::to_string(epoch) +
                           " (global=" + std::to_string(b.global) + ", malignancy=" + std::to_string(b.malignancy) +
                           ")");
}

void check_samples(const std::vector<NoduleSample>& samples, Index extent, const char* what)
{
    for (const NoduleSample& s : samples)
        s.validate(extent);
    (void)what;
}

} // namespace

void recalibrate_batchnorm(Model<float>& model, const std::vector<NoduleSample>& samples, Index batch_size,
                           int threads)
{
    if (samples.size() < 2)
        return;
    Model<float> probe = model;
    probe.config.dropout_rate = 0.0;
    Rng unused = make_rng(0, 0);
    const ForwardOptions fo{threads, true};

    std::vector<BatchNormParams<float>*> layers;
    for (auto& block : model.trunk)
        layers.push_back(&block.bn);
    for (auto& branch : model.branches)
        for (auto& layer : branch.hidden)
            layers.push_back(&layer.bn);
    layers.push_back(&model.head.hidden.bn);
    std::vector<Vector<double>> mean_sum(layers.size()), var_sum(layers.size());

    double batches = 0.0;
    for (auto [begin, end] : batch_ranges(samples.size(), batch_size)) {
        std::vector<const NoduleSample*> items;
        for (std::size_t i = begin; i < end; ++i)
            items.push_back(&samples[i]);
        const auto out = forward(probe, make_batch(items), Mode::Train, unused, fo);
        std::vector<const BatchNormCache<float>*> caches;
        for (const auto& stage : out.cache.conv)
            caches.push_back(&stage.bn);
        for (const auto& branch : out.cache.branches)
            for (const auto& stage : branch.hidden)
                caches.push_back(&stage.bn);
        caches.push_back(&out.cache.head.bn);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const double count = static_cast<double>(shape_size(caches[l]->shape) / caches[l]->mean.size());
            const Vector<double> var = caches[l]->var.cast<double>() * (count / (count - 1.0));
            if (batches == 0.0) {
                mean_sum[l] = caches[l]->mean.cast<double>();
                var_sum[l] = var;
            } else {
                mean_sum[l] += caches[l]->mean.cast<double>();
                var_sum[l] += var;
            }
        }
        batches += 1.0;
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l]->running_mean = (mean_sum[l] / batches).cast<float>();
        layers[l]->running_var = (var_sum[l] / batches).cast<float>();
    }
}

DatasetLoss evaluate_loss(const Model<float>& model, const std::vector<NoduleSample>& samples,
                          const LossWeights& weights, Index batch_size, int threads)
{
    if (samples.empty())
        throw DataError("cannot evaluate a loss on an empty dataset");
    Accumulator acc;
    Rng unused = make_rng(0, 0);
    ForwardOptions fo{threads, false};
    for (auto [begin, end] : batch_ranges(samples.size(), batch_size)) {
        std::vector<const NoduleSample*> items;
        std::vector<LabelSet> labels;
        for (std::size_t i = begin; i < end; ++i) {
            items.push_back(&samples[i]);
            labels.push_back(samples[i].labels);
        }
        const auto outputs = forward(model, make_batch(items), Mode::Eval, unused, fo);
        const auto loss = global_loss(outputs, labels, weights);
        acc.add(loss.breakdown, unweighted_malignancy_loss(outputs, labels), static_cast<double>(items.size()));
    }
    return {acc.mean(), acc.unweighted / acc.count};
}

TrainResult train(Model<float> model, const std::vector<NoduleSample>& train_set,
                  const std::vector<NoduleSample>& validation_set, const LossWeights& weights,
                  const TrainOptions& options, const EpochCallback& on_epoch)
{
    options.validate();
    weights.validate();
    if (train_set.empty())
        throw DataError("training set is empty");
    if (validation_set.empty())
        throw DataError("validation set is empty");
    const Index extent = model.config.input_cube_voxels;
    check_samples(train_set, extent, "training");
    check_samples(validation_set, extent, "validation");

    Rng shuffle_rng = make_rng(options.seed, 600);
    Rng augment_rng = make_rng(options.seed, 601);
    Rng dropout_rng = make_rng(options.seed, 602);

    std::vector<NoduleSample> validation = validation_set;
    if (options.augment_validation) {
        Rng val_rng = make_rng(options.seed, 603);
        for (const NoduleSample& s : validation_set)
            validation.push_back(augment(s, val_rng, options.augment_options));
    }

    AdamState<float> adam;
    adam.learning_rate = options.learning_rate;
    const ForwardOptions fo{options.threads, true};
    std::bernoulli_distribution coin(options.augment_probability);

    TrainResult result{model, model, {}};
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        Accumulator acc;
        for (auto [begin, end] : batch_ranges(order.size(), options.batch_size)) {
            std::vector<NoduleSample> augmented;
            augmented.reserve(end - begin);
            std::vector<const NoduleSample*> items;
            std::vector<LabelSet> labels;
            for (std::size_t i = begin; i < end; ++i) {
                const NoduleSample& s = train_set[order[i]];
                if (options.augment && coin(augment_rng)) {
                    augmented.push_back(augment(s, augment_rng, options.augment_options));
                    items.push_back(&augmented.back());
                } else {
                    items.push_back(&s);
                }
                labels.push_back(s.labels);
            }
            const auto outputs = forward(model, make_batch(items), Mode::Train, dropout_rng, fo);
            const auto loss = global_loss(outputs, labels, weights);
            check_finite(loss.breakdown, epoch, "training");
            Model<float> grads = backward(model, outputs, loss.grads, options.threads);
            adam_step(model, grads, adam);
            update_running_stats(model, outputs.cache);
            acc.add(loss.breakdown, unweighted_malignancy_loss(outputs, labels), static_cast<double>(items.size()));
        }

        if (options.recalibrate_batchnorm)
            recalibrate_batchnorm(model, train_set, options.batch_size, options.threads);

        EpochRecord record;
        record.epoch = epoch;
        record.train = acc.mean();
        const DatasetLoss val = evaluate_loss(model, validation, weights, options.batch_size, options.threads);
        record.validation = val.breakdown;
        record.validation_malignancy = val.unweighted_malignancy;
        check_finite(record.validation, epoch, "validation");
        if (!std::isfinite(record.validation_malignancy))
            throw NumericError("non-finite validation malignancy loss at epoch " + std::to_string(epoch));

        if (epoch == 1 || record.validation_malignancy < result.history.best_validation_malignancy) {
            record.best = true;
            result.best = model;
            result.history.best_epoch = epoch;
            result.history.best_validation_malignancy = record.validation_malignancy;
        }
        result.history.epochs.push_back(record);
        if (on_epoch)
            on_epoch(record);
    }
    result.last = std::move(model);
    return result;
}

bool Predictions::has(Task t) const
{
    return std::find(tasks.begin(), tasks.end(), t) != tasks.end();
}

const std::vector<double>& Predictions::of(Task t) const
{
    const auto it = std::find(tasks.begin(), tasks.end(), t);
    if (it == tasks.end())
        throw Error(std::string("model has no ") + task_name(t) + " head");
    return probabilities[static_cast<std::size_t>(it - tasks.begin())];
}

Predictions predict(const Model<float>& model, const std::vector<NoduleSample>& samples, Index batch_size,
                    int threads)
{
    Predictions p;
    p.tasks = model.config.semantic_tasks;
    p.tasks.push_back(Task::Malignancy);
    p.probabilities.assign(p.tasks.size(), {});
    Rng unused = make_rng(0, 0);
    const ForwardOptions fo{threads, false};
    for (const NoduleSample& s : samples)
        s.validate(model.config.input_cube_voxels);
    for (auto [begin, end] : batch_ranges(samples.size(), batch_size)) {
        std::vector<const NoduleSample*> items;
        for (std::size_t i = begin; i < end; ++i)
            items.push_back(&samples[i]);
        const auto out = forward(model, make_batch(items), Mode::Eval, unused, fo);
        auto append = [&](std::size_t slot, const Matrix<float>& logits) {
            for (Index b = 0; b < logits.cols(); ++b) {
                const Vector<double> prob = softmax(Vector<double>(logits.col(b).cast<double>()));
                p.probabilities[slot].push_back(prob[1]);
            }
        };
        for (std::size_t j = 0; j < out.semantic_logits.size(); ++j)
            append(j, out.semantic_logits[j]);
        append(p.tasks.size() - 1, out.malignancy_logits);
    }
    return p;
}

namespace {

void append_value(std::string& out, const std::string& key, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, " %s=%.9g", key.c_str(), v);
    out += buf;
}

void append_breakdown(std::string& out, const char* prefix, const LossBreakdown& b)
{
    append_value(out, std::string(prefix) + ".global", b.global);
    for (std::size_t j = 0; j < b.semantic_tasks.size(); ++j)
        append_value(out, std::string(prefix) + "." + task_name(b.semantic_tasks[j]), b.semantic[j]);
    append_value(out, std::string(prefix) + ".malignancy", b.malignancy);
}

} // namespace

std::string format_history(const TrainHistory& history)
{
    std::string out = "# hscnn-history 1\n";
    for (const EpochRecord& r : history.epochs) {
        out += "epoch=" + std::to_string(r.epoch);
        append_breakdown(out, "train", r.train);
        append_breakdown(out, "val", r.validation);
        append_value(out, "val.malignancy_unweighted", r.validation_malignancy);
        out += r.best ? " best=1\n" : " best=0\n";
    }
    return out;
}

void write_history(const TrainHistory& history, const std::string& path)
{
    detail::write_text_file(path, format_history(history));
}

} // namespace hscnn
