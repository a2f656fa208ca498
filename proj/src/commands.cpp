#include "hscnn/commands.hpp"
#include "hscnn/manifest.hpp"
#include "hscnn/model_io.hpp"
#include "hscnn/phantom.hpp"
#include "binary_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

namespace fs = std::filesystem;

namespace hscnn {

namespace {

void require_out(const std::string& out_dir, const char* command)
{
    if (out_dir.empty())
        throw ConfigError(std::string(command) + " needs --out");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        throw Error("cannot create output directory " + out_dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& name)
{
    return (fs::path(dir) / name).string();
}

void echo_config(const RunConfig& config, const std::string& out_dir)
{
    detail::write_text_file(join(out_dir, "config.json"), run_config_json(config));
}

void log(int level, const std::string& message)
{
    if (verbosity() >= level)
        std::cerr << message << '\n';
}

std::string data_path_or_config(const std::string& path, const RunConfig& config)
{
    const std::string p = path.empty() ? config.data_path : path;
    if (p.empty())
        throw ConfigError("no data path given on the command line or in paths.data");
    return p;
}

std::string fmt(const char* spec, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

void write_eval_outputs(const EvalReport& report, const std::vector<NoduleSample>& samples,
                        const Predictions& predictions, double threshold, const std::string& dir)
{
    detail::write_text_file(join(dir, "report.json"), eval_report_json(report));
    detail::write_text_file(join(dir, "predictions.csv"), predictions_csv(samples, predictions, threshold));
    for (const TaskMetrics& m : report.tasks)
        if (m.auc_defined)
            detail::write_text_file(join(dir, std::string("roc_") + task_name(m.task) + ".csv"), roc_csv(m.roc));
}

std::vector<NoduleSample> pick(const std::vector<NoduleSample>& samples, const std::vector<std::size_t>& idx)
{
    std::vector<NoduleSample> out;
    out.reserve(idx.size());
    for (std::size_t i : idx)
        out.push_back(samples[i]);
    return out;
}

std::vector<std::string> case_ids_of(const std::vector<NoduleSample>& samples)
{
    std::vector<std::string> ids;
    for (const NoduleSample& s : samples)
        ids.push_back(s.provenance.case_id);
    return ids;
}

EpochCallback epoch_logger(const std::string& prefix)
{
    return [prefix](const EpochRecord& r) {
        log(2, prefix + "epoch " + std::to_string(r.epoch) + " train=" + fmt("%.5f", r.train.global) +
                   " val_malignancy=" + fmt("%.5f", r.validation_malignancy) + (r.best ? " *" : ""));
    };
}

struct FitOutcome {
    TrainResult result;
    LossWeights weights;
};

FitOutcome fit(const RunConfig& config, const std::vector<NoduleSample>& train_set,
               const std::vector<NoduleSample>& validation_set, std::uint64_t seed, const std::string& prefix)
{
    RunConfig c = config;
    c.seed = seed;
    LossWeights weights = loss_weights_for(c, census_of(labels_of(train_set)));
    if (c.lambda_search && c.network.variant == Variant::Hscnn) {
        const auto search = lambda_search(c.network, train_set, validation_set, weights, c.search_options(), seed);
        weights.lambda = search.best;
        std::string chosen;
        for (double l : search.best)
            chosen += " " + fmt("%g", l);
        log(1, prefix + "lambda search chose" + chosen);
    }
    TrainResult r = train(build_model<float>(c.network, seed), train_set, validation_set, weights,
                          c.train_options(), epoch_logger(prefix));
    return {std::move(r), weights};
}

} // namespace

int verbosity()
{
    const char* v = std::getenv("HSCNN_VERBOSE");
    if (v == nullptr || *v == '\0')
        return 1;
    return std::atoi(v);
}

RunConfig resolve_config(const GlobalOptions& options)
{
    RunConfig c = options.config_path.empty() ? RunConfig{} : load_run_config(options.config_path);
    if (options.seed)
        c.seed = *options.seed;
    if (options.threads)
        c.threads = *options.threads;
    c.validate();
    return c;
}

std::vector<NoduleSample> load_dataset(const std::string& path, const RunConfig& config)
{
    std::vector<NoduleSample> samples;
    if (fs::is_regular_file(path)) {
        samples.push_back(read_sample(path));
    } else if (fs::exists(fs::path(path) / "manifest.csv")) {
        PreprocessOptions po;
        po.cube_voxels = config.network.input_cube_voxels;
        po.cube_mm = config.cube_mm;
        samples = build_samples(load_manifest(path), po);
    } else if (fs::is_directory(path)) {
        samples = read_sample_dir(path);
    } else {
        throw DataError("no dataset at " + path);
    }
    for (const NoduleSample& s : samples)
        if (s.extent() != config.network.input_cube_voxels)
            throw DataError("sample " + sample_file_name(s.provenance) + " has cube size " +
                            std::to_string(s.extent()) + " but the network expects " +
                            std::to_string(config.network.input_cube_voxels));
    return samples;
}

LossWeights loss_weights_for(const RunConfig& config, const Census& census)
{
    LossWeights w;
    w.lambda = config.lambda;
    std::vector<Task> heads = config.network.semantic_tasks;
    heads.push_back(Task::Malignancy);
    for (Task t : heads) {
        const auto k = static_cast<std::size_t>(task_index(t));
        try {
            w.class_weights[k] = class_weights_from_counts(census.negatives[k], census.positives[k]);
        } catch (const DataError& e) {
            throw DataError(std::string(task_name(t)) + ": " + e.what());
        }
    }
    return w;
}

std::string census_text(const Census& census)
{
    std::string out = "task negatives positives\n";
    for (Task t : kAllTasks) {
        const auto k = static_cast<std::size_t>(task_index(t));
        out += std::string(task_name(t)) + " " + std::to_string(census.negatives[k]) + " " +
               std::to_string(census.positives[k]) + "\n";
    }
    return out;
}

void cmd_phantom(const RunConfig& config, const std::string& out_dir)
{
    require_out(out_dir, "phantom");
    const PhantomConfig& pc = config.phantom;
    PhantomDatasetOptions options;
    options.cube_voxels = config.network.input_cube_voxels;
    options.class_balance = pc.class_balance;
    options.min_diameter_mm = pc.min_diameter_mm;
    options.max_diameter_mm = pc.max_diameter_mm;
    options.noise_sigma = pc.noise_sigma;
    const auto specs = sample_phantom_specs(pc.count, config.seed, options);

    fs::create_directories(fs::path(out_dir) / "volumes");
    Rng rating_rng = make_rng(config.seed, 800);
    std::uniform_int_distribution<int> high(4, 5), low(1, 3), calcified(1, 5);
    std::vector<AnnotationRecord> records;
    std::vector<LabelSet> labels;
    std::string truth = "case_id,diameter_mm";
    for (Task t : kAllTasks)
        truth += std::string(",") + task_name(t);
    truth += "\n";

    for (std::size_t i = 0; i < specs.size(); ++i) {
        const PhantomSpec& spec = specs[i];
        const LabelSet l = phantom_labels(spec, options.rule);
        labels.push_back(l);
        AnnotationRecord r;
        r.case_id = phantom_case_id(static_cast<Index>(i));
        r.nodule_id = "1";
        r.reader_count = pc.readers;
        r.slice_thickness_mm = pc.slice_thickness_mm;
        r.center_mm = phantom_center_mm(pc.volume_voxels, pc.spacing_mm);
        r.volume_path = "volumes/" + r.case_id + ".vol";
        for (int k = 0; k < pc.readers; ++k) {
            ReaderRatings rating{};
            for (Task t : kAllTasks) {
                const int y = l[static_cast<std::size_t>(task_index(t))];
                int v;
                if (t == Task::Calcification)
                    v = y == 1 ? 6 : calcified(rating_rng);
                else
                    v = y == 1 ? high(rating_rng) : low(rating_rng);
                rating[static_cast<std::size_t>(task_index(t))] = v;
            }
            r.readers.push_back(rating);
        }
        write_volume(render_phantom_volume(spec, pc.volume_voxels, pc.spacing_mm), join(out_dir, r.volume_path));
        records.push_back(std::move(r));

        truth += phantom_case_id(static_cast<Index>(i)) + "," + fmt("%.9g", spec.diameter_mm);
        for (Task t : kAllTasks)
            truth += "," + std::to_string(l[static_cast<std::size_t>(task_index(t))]);
        truth += "\n";
    }
    write_manifest(out_dir, records);
    detail::write_text_file(join(out_dir, "census.txt"), census_text(census_of(labels)));
    detail::write_text_file(join(out_dir, "phantoms.csv"), truth);
    echo_config(config, out_dir);
    log(1, "wrote " + std::to_string(specs.size()) + " phantoms to " + out_dir);
}

void cmd_preprocess(const RunConfig& config, const std::string& data_path, const std::string& out_dir)
{
    require_out(out_dir, "preprocess");
    const std::string path = data_path_or_config(data_path, config);
    PreprocessOptions po;
    po.cube_voxels = config.network.input_cube_voxels;
    po.cube_mm = config.cube_mm;
    const auto samples = build_samples(load_manifest(path), po);
    write_sample_dir(samples, out_dir);
    detail::write_text_file(join(out_dir, "census.txt"), census_text(census_of(labels_of(samples))));
    echo_config(config, out_dir);
    log(1, "wrote " + std::to_string(samples.size()) + " samples to " + out_dir);
}

void cmd_train(const RunConfig& config, const std::string& data_path, const std::string& out_dir)
{
    require_out(out_dir, "train");
    const auto samples = load_dataset(data_path_or_config(data_path, config), config);
    const FoldPlan plan = build_folds(case_ids_of(samples), config.seed);
    const FoldSplit split = plan.split(0);
    std::vector<std::size_t> train_idx = split.train;
    train_idx.insert(train_idx.end(), split.test.begin(), split.test.end());
    std::sort(train_idx.begin(), train_idx.end());
    const auto train_set = pick(samples, train_idx);
    const auto validation_set = pick(samples, split.validation);

    echo_config(config, out_dir);
    const FitOutcome fitted = fit(config, train_set, validation_set, config.seed, "");
    save_model(fitted.result.best, join(out_dir, "model.bin"));
    write_history(fitted.result.history, join(out_dir, "history.log"));
    const Predictions p = predict(fitted.result.best, validation_set, config.batch_size, config.threads);
    const EvalReport report = evaluate_predictions(p, labels_of(validation_set),
                                                   std::string(variant_name(config.network.variant)), -1,
                                                   config.threshold);
    write_eval_outputs(report, validation_set, p, config.threshold, out_dir);
    log(1, "best epoch " + std::to_string(fitted.result.history.best_epoch) + ", validation malignancy loss " +
               fmt("%.5f", fitted.result.history.best_validation_malignancy));
}

CrossvalResult run_crossval(const RunConfig& config, const std::vector<NoduleSample>& samples,
                            const std::string& out_dir, bool resume)
{
    require_out(out_dir, "crossval");
    std::set<std::string> cases;
    for (const NoduleSample& s : samples)
        cases.insert(s.provenance.case_id);
    if (cases.size() < static_cast<std::size_t>(kFoldCount))
        throw DataError("cross-validation needs at least 4 cases, got " + std::to_string(cases.size()));

    CrossvalResult out;
    out.plan = build_folds(case_ids_of(samples), config.seed);
    std::string folds_txt = "case_id subset\n";
    for (int s = 0; s < kFoldCount; ++s)
        for (const std::string& c : out.plan.subset_cases[static_cast<std::size_t>(s)])
            folds_txt += c + " " + std::to_string(s) + "\n";
    detail::write_text_file(join(out_dir, "folds.txt"), folds_txt);
    echo_config(config, out_dir);

    const std::string variant(variant_name(config.network.variant));
    for (int fold = 0; fold < kFoldCount; ++fold) {
        const std::string dir = join(out_dir, "fold_" + std::to_string(fold));
        const std::string model_path = join(dir, "model.bin");
        const std::string done_path = join(dir, "DONE");
        if (resume && fs::exists(done_path) && fs::exists(model_path)) {
            out.reports.push_back(parse_eval_report(detail::read_text_file(join(dir, "report.json"))));
            log(1, "fold " + std::to_string(fold) + ": resumed");
            continue;
        }
        fs::create_directories(dir);
        fs::remove(done_path);
        const FoldSplit split = out.plan.split(fold);
        const auto train_set = pick(samples, split.train);
        const auto validation_set = pick(samples, split.validation);
        const auto test_set = pick(samples, split.test);
        if (train_set.empty() || validation_set.empty() || test_set.empty())
            throw DataError("fold " + std::to_string(fold) + " has an empty split");

        const std::uint64_t fold_seed = make_rng(config.seed, 310 + static_cast<std::uint64_t>(fold))();
        const std::string prefix = "fold " + std::to_string(fold) + ": ";
        const FitOutcome fitted = fit(config, train_set, validation_set, fold_seed, prefix);
        const Predictions p = predict(fitted.result.best, test_set, config.batch_size, config.threads);
        const EvalReport report = evaluate_predictions(p, labels_of(test_set), variant, fold, config.threshold);

        save_model(fitted.result.best, model_path);
        write_history(fitted.result.history, join(dir, "history.log"));
        write_eval_outputs(report, test_set, p, config.threshold, dir);
        detail::write_text_file(done_path, "fold " + std::to_string(fold) + "\n");
        out.reports.push_back(report);
        out.trained_folds.push_back(fold);
        const TaskMetrics& m = report.at(Task::Malignancy);
        log(1, prefix + "best epoch " + std::to_string(fitted.result.history.best_epoch) + ", test malignancy AUC " +
                   (m.auc_defined ? fmt("%.4f", m.auc) : std::string("undefined")));
    }
    out.aggregate = aggregate_folds(out.reports);
    detail::write_text_file(join(out_dir, "aggregate.json"), aggregate_json(out.aggregate));
    return out;
}

void cmd_crossval(const RunConfig& config, const std::string& data_path, const std::string& out_dir, bool resume)
{
    require_out(out_dir, "crossval");
    const auto samples = load_dataset(data_path_or_config(data_path, config), config);
    const CrossvalResult r = run_crossval(config, samples, out_dir, resume);
    const MetricAggregate& auc = r.aggregate.metric(Task::Malignancy, "auc");
    log(1, "malignancy AUC " + fmt("%.4f", auc.mean) + " (" + fmt("%.4f", auc.sd) + ")");
}

void cmd_predict(const RunConfig& config, const std::string& model_path, const std::string& input,
                 const std::string& out_dir)
{
    const std::string mpath = model_path.empty() ? config.model_path : model_path;
    if (mpath.empty())
        throw ConfigError("predict needs a model path");
    const Model<float> model = load_model(mpath);
    RunConfig c = config;
    c.network = model.config;
    const auto samples = load_dataset(data_path_or_config(input, c), c);
    const Predictions p = predict(model, samples, c.batch_size, c.threads);
    if (model.config.variant == Variant::Baseline)
        std::cerr << "notice: baseline model has no semantic heads; reporting malignancy only\n";

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Provenance& pv = samples[i].provenance;
        std::string line = pv.case_id + "/" + pv.nodule_id + "/" + std::to_string(pv.annotation);
        for (std::size_t k = p.tasks.size(); k-- > 0;) { // malignancy first
            const double prob = p.probabilities[k][i];
            line += std::string(" ") + task_name(p.tasks[k]) + "=" + fmt("%.4f", prob) + "(" +
                    (prob >= c.threshold ? "1" : "0") + ")";
        }
        std::cout << line << '\n';
    }
    if (!out_dir.empty()) {
        require_out(out_dir, "predict");
        detail::write_text_file(join(out_dir, "predictions.csv"), predictions_csv(samples, p, c.threshold));
    }
}

void cmd_evaluate(const RunConfig& config, const std::string& model_path, const std::string& data_path,
                  const std::string& out_dir)
{
    require_out(out_dir, "evaluate");
    const std::string mpath = model_path.empty() ? config.model_path : model_path;
    if (mpath.empty())
        throw ConfigError("evaluate needs a model path");
    const Model<float> model = load_model(mpath);
    RunConfig c = config;
    c.network = model.config;
    const auto samples = load_dataset(data_path_or_config(data_path, c), c);
    const Predictions p = predict(model, samples, c.batch_size, c.threads);
    const EvalReport report =
        evaluate_predictions(p, labels_of(samples), std::string(variant_name(model.config.variant)), -1, c.threshold);
    write_eval_outputs(report, samples, p, c.threshold, out_dir);
    echo_config(c, out_dir);
    for (const TaskMetrics& m : report.tasks)
        std::cout << task_name(m.task) << " auc=" << (m.auc_defined ? fmt("%.4f", m.auc) : "undefined")
                  << " accuracy=" << fmt("%.4f", m.confusion.accuracy) << '\n';
}

PairedTestResult cmd_stats(const std::string& report_a, const std::string& report_b, const std::string& out_dir)
{
    const AggregateReport a = parse_aggregate(detail::read_text_file(report_a));
    const AggregateReport b = parse_aggregate(detail::read_text_file(report_b));
    if (a.folds != b.folds)
        throw DataError("reports cover different folds (" + std::to_string(a.folds.size()) + " vs " +
                        std::to_string(b.folds.size()) + ")");
    const auto va = a.fold_values(Task::Malignancy, "auc");
    const auto vb = b.fold_values(Task::Malignancy, "auc");
    std::string name_a = a.variant, name_b = b.variant;
    if (name_a == name_b) {
        name_a += "(a)";
        name_b += "(b)";
    }
    const PairedTestResult r = paired_ttest(va, vb);
    const std::string table = format_paired_test(r, va, vb, name_a, name_b);
    std::cout << table;
    if (!out_dir.empty()) {
        require_out(out_dir, "stats");
        detail::write_text_file(join(out_dir, "ttest.txt"), table);
        detail::write_text_file(join(out_dir, "ttest.json"), paired_test_json(r, name_a, name_b));
    }
    return r;
}

} // namespace hscnn
