#include "hscnn/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace hscnn {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double v, bool defined = true)
{
    if (!defined || !std::isfinite(v))
        return nullptr;
    return v;
}

double number_from(const json& j)
{
    if (j.is_null())
        return kNaN;
    if (!j.is_number())
        throw DataError("expected a number in report, got " + j.dump());
    return j.get<double>();
}

const json& field(const json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key))
        throw DataError(std::string("report is missing field '") + key + "'");
    return j.at(key);
}

json parse_json(const std::string& text, const char* what)
{
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed ") + what + ": " + e.what());
    }
}

void check_format(const json& j, const char* format)
{
    if (field(j, "format") != format)
        throw DataError(std::string("expected a document of format '") + format + "'");
    if (field(j, "version") != 1)
        throw DataError(std::string("unsupported ") + format + " version");
}

std::size_t metric_slot(const std::string& name)
{
    for (std::size_t i = 0; i < std::size(kAggregateMetrics); ++i)
        if (name == kAggregateMetrics[i])
            return i;
    throw ConfigError("unknown metric '" + name + "'");
}

std::string fmt(const char* spec, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

} // namespace

const TaskMetrics& EvalReport::at(Task t) const
{
    for (const TaskMetrics& m : tasks)
        if (m.task == t)
            return m;
    throw DataError(std::string("report has no ") + task_name(t) + " entry");
}

EvalReport evaluate_predictions(const Predictions& predictions, const std::vector<LabelSet>& labels,
                                const std::string& variant, int fold, double threshold)
{
    EvalReport r;
    r.variant = variant;
    r.fold = fold;
    r.samples = static_cast<Index>(labels.size());
    r.threshold = threshold;
    for (std::size_t k = 0; k < predictions.tasks.size(); ++k) {
        const Task t = predictions.tasks[k];
        const auto& probs = predictions.probabilities[k];
        if (probs.size() != labels.size())
            throw ShapeError("prediction and label counts differ");
        ScoredSet set;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const int y = labels[i][static_cast<std::size_t>(task_index(t))];
            if (y == kMissingLabel)
                throw DataError(std::string("sample ") + std::to_string(i) + " has no " + task_name(t) + " label");
            set.scores.push_back(probs[i]);
            set.labels.push_back(y);
        }
        TaskMetrics m;
        m.task = t;
        m.count = static_cast<Index>(set.size());
        m.positives = static_cast<Index>(set.positives());
        m.confusion = confusion_metrics(set, threshold);
        m.auc_defined = set.positives() > 0 && set.negatives() > 0;
        if (m.auc_defined) {
            m.auc = auc(set);
            m.roc = roc_curve(set);
        }
        r.tasks.push_back(std::move(m));
    }
    return r;
}

std::string eval_report_json(const EvalReport& report)
{
    json tasks = json::object();
    for (const TaskMetrics& m : report.tasks) {
        json roc = json::array();
        for (const RocPoint& p : m.roc)
            roc.push_back({p.fpr, p.tpr});
        tasks[task_name(m.task)] = {
            {"count", m.count},
            {"positives", m.positives},
            {"auc", number_or_null(m.auc, m.auc_defined)},
            {"accuracy", m.confusion.accuracy},
            {"sensitivity", number_or_null(m.confusion.sensitivity, m.confusion.sensitivity_defined)},
            {"specificity", number_or_null(m.confusion.specificity, m.confusion.specificity_defined)},
            {"confusion", {{"tp", m.confusion.tp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}, {"fp", m.confusion.fp}}},
            {"roc", roc},
        };
    }
    json j = {{"format", "hscnn-eval"}, {"version", 1},         {"variant", report.variant},
              {"fold", report.fold},    {"samples", report.samples}, {"threshold", report.threshold},
              {"tasks", tasks}};
    return j.dump(2) + "\n";
}

EvalReport parse_eval_report(const std::string& text)
{
    const json j = parse_json(text, "evaluation report");
    check_format(j, "hscnn-eval");
    EvalReport r;
    r.variant = field(j, "variant").get<std::string>();
    r.fold = field(j, "fold").get<int>();
    r.samples = field(j, "samples").get<Index>();
    r.threshold = field(j, "threshold").get<double>();
    for (Task t : kAllTasks) {
        const json& tasks = field(j, "tasks");
        if (!tasks.contains(task_name(t)))
            continue;
        const json& e = tasks.at(task_name(t));
        TaskMetrics m;
        m.task = t;
        m.count = field(e, "count").get<Index>();
        m.positives = field(e, "positives").get<Index>();
        m.auc = number_from(field(e, "auc"));
        m.auc_defined = !std::isnan(m.auc);
        m.confusion.accuracy = number_from(field(e, "accuracy"));
        m.confusion.sensitivity = number_from(field(e, "sensitivity"));
        m.confusion.sensitivity_defined = !std::isnan(m.confusion.sensitivity);
        m.confusion.specificity = number_from(field(e, "specificity"));
        m.confusion.specificity_defined = !std::isnan(m.confusion.specificity);
        const json& c = field(e, "confusion");
        m.confusion.tp = field(c, "tp").get<long long>();
        m.confusion.fn = field(c, "fn").get<long long>();
        m.confusion.tn = field(c, "tn").get<long long>();
        m.confusion.fp = field(c, "fp").get<long long>();
        for (const json& p : field(e, "roc"))
            m.roc.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        r.tasks.push_back(std::move(m));
    }
    return r;
}

std::string roc_csv(const std::vector<RocPoint>& points)
{
    std::string out = "fpr,tpr\n";
    for (const RocPoint& p : points)
        out += fmt("%.17g", p.fpr) + "," + fmt("%.17g", p.tpr) + "\n";
    return out;
}

std::string predictions_csv(const std::vector<NoduleSample>& samples, const Predictions& predictions,
                            double threshold)
{
    std::string out = "case_id,nodule_id,annotation";
    for (Task t : predictions.tasks) {
        const std::string n = task_name(t);
        out += "," + n + "_probability," + n + "_predicted," + n + "_label";
    }
    out += "\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Provenance& p = samples[i].provenance;
        out += p.case_id + "," + p.nodule_id + "," + std::to_string(p.annotation);
        for (std::size_t k = 0; k < predictions.tasks.size(); ++k) {
            const double prob = predictions.probabilities[k].at(i);
            const int truth = samples[i].label(predictions.tasks[k]);
            out += "," + fmt("%.9g", prob) + "," + (prob >= threshold ? "1" : "0") + "," +
                   (truth == kMissingLabel ? std::string() : std::to_string(truth));
        }
        out += "\n";
    }
    return out;
}

const MetricAggregate& AggregateReport::metric(Task t, const std::string& name) const
{
    for (const TaskAggregate& a : tasks)
        if (a.task == t)
            return a.metrics[metric_slot(name)];
    throw DataError(std::string("aggregate report has no ") + task_name(t) + " entry");
}

std::vector<double> AggregateReport::fold_values(Task t, const std::string& name) const
{
    const MetricAggregate& m = metric(t, name);
    for (std::size_t i = 0; i < m.per_fold.size(); ++i)
        if (std::isnan(m.per_fold[i]))
            throw DataError(std::string(task_name(t)) + " " + name + " is undefined in fold " +
                            std::to_string(folds.at(i)));
    return m.per_fold;
}

AggregateReport aggregate_folds(const std::vector<EvalReport>& reports)
{
    if (reports.size() < 2)
        throw DataError("aggregation needs at least two folds");
    std::vector<const EvalReport*> ordered;
    for (const EvalReport& r : reports)
        ordered.push_back(&r);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const EvalReport* a, const EvalReport* b) { return a->fold < b->fold; });

    AggregateReport agg;
    agg.variant = ordered.front()->variant;
    for (const EvalReport* r : ordered) {
        if (!agg.folds.empty() && agg.folds.back() == r->fold)
            throw DataError("fold " + std::to_string(r->fold) + " is reported twice");
        if (r->variant != agg.variant)
            throw DataError("folds mix variants '" + agg.variant + "' and '" + r->variant + "'");
        agg.folds.push_back(r->fold);
        if (r->tasks.size() != ordered.front()->tasks.size())
            throw DataError("folds report different task sets");
        for (std::size_t k = 0; k < r->tasks.size(); ++k)
            if (r->tasks[k].task != ordered.front()->tasks[k].task)
                throw DataError("folds report different task sets");
    }
    for (std::size_t k = 0; k < ordered.front()->tasks.size(); ++k) {
        TaskAggregate ta;
        ta.task = ordered.front()->tasks[k].task;
        for (const EvalReport* r : ordered) {
            const TaskMetrics& m = r->tasks[k];
            ta.metrics[0].per_fold.push_back(m.auc_defined ? m.auc : kNaN);
            ta.metrics[1].per_fold.push_back(m.confusion.accuracy);
            ta.metrics[2].per_fold.push_back(m.confusion.sensitivity_defined ? m.confusion.sensitivity : kNaN);
            ta.metrics[3].per_fold.push_back(m.confusion.specificity_defined ? m.confusion.specificity : kNaN);
        }
        for (MetricAggregate& m : ta.metrics) {
            std::vector<double> defined;
            for (double v : m.per_fold)
                if (!std::isnan(v))
                    defined.push_back(v);
            m.defined = static_cast<int>(defined.size());
            if (defined.empty()) {
                m.mean = m.sd = kNaN;
                continue;
            }
            const MeanSd s = mean_sd(defined);
            m.mean = s.mean;
            m.sd = s.sd;
        }
        agg.tasks.push_back(std::move(ta));
    }
    return agg;
}

std::string aggregate_json(const AggregateReport& report)
{
    json tasks = json::object();
    for (const TaskAggregate& ta : report.tasks) {
        json metrics = json::object();
        for (std::size_t i = 0; i < ta.metrics.size(); ++i) {
            const MetricAggregate& m = ta.metrics[i];
            json per_fold = json::array();
            for (double v : m.per_fold)
                per_fold.push_back(number_or_null(v));
            metrics[kAggregateMetrics[i]] = {{"per_fold", per_fold},
                                             {"mean", number_or_null(m.mean)},
                                             {"sd", number_or_null(m.sd, m.defined >= 2)}};
        }
        tasks[task_name(ta.task)] = metrics;
    }
    json j = {{"format", "hscnn-aggregate"}, {"version", 1}, {"variant", report.variant},
              {"folds", report.folds},       {"tasks", tasks}};
    return j.dump(2) + "\n";
}

AggregateReport parse_aggregate(const std::string& text)
{
    const json j = parse_json(text, "aggregate report");
    check_format(j, "hscnn-aggregate");
    AggregateReport r;
    r.variant = field(j, "variant").get<std::string>();
    r.folds = field(j, "folds").get<std::vector<int>>();
    const json& tasks = field(j, "tasks");
    for (Task t : kAllTasks) {
        if (!tasks.contains(task_name(t)))
            continue;
        TaskAggregate ta;
        ta.task = t;
        for (std::size_t i = 0; i < ta.metrics.size(); ++i) {
            const json& e = field(tasks.at(task_name(t)), kAggregateMetrics[i]);
            MetricAggregate& m = ta.metrics[i];
            for (const json& v : field(e, "per_fold"))
                m.per_fold.push_back(number_from(v));
            if (m.per_fold.size() != r.folds.size())
                throw DataError(std::string(task_name(t)) + " " + kAggregateMetrics[i] +
                                " has a per-fold count different from the fold list");
            m.defined = static_cast<int>(
                std::count_if(m.per_fold.begin(), m.per_fold.end(), [](double v) { return !std::isnan(v); }));
            m.mean = number_from(field(e, "mean"));
            m.sd = number_from(field(e, "sd"));
        }
        r.tasks.push_back(std::move(ta));
    }
    return r;
}

std::string format_paired_test(const PairedTestResult& result, const std::vector<double>& a,
                               const std::vector<double>& b, const std::string& name_a, const std::string& name_b)
{
    std::string out = "Paired t-test on malignancy AUC (" + name_a + " - " + name_b + ")\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-6s %12s %12s %12s\n", "fold", name_a.c_str(), name_b.c_str(), "difference");
    out += line;
    for (std::size_t i = 0; i < result.differences.size(); ++i) {
        std::snprintf(line, sizeof line, "%-6zu %12.4f %12.4f %12.4f\n", i + 1, a[i], b[i], result.differences[i]);
        out += line;
    }
    std::snprintf(line, sizeof line,
                  "Mean_difference=%.4f  SD=%.4f  t=%.3f  df=%d  P-value=%.3f  CI%.0f=[%.4f, %.4f]\n",
                  result.mean_difference, result.sd_difference, result.t, result.df, result.p_value,
                  100.0 * result.confidence, result.ci_low, result.ci_high);
    out += line;
    return out;
}

std::string paired_test_json(const PairedTestResult& result, const std::string& name_a, const std::string& name_b)
{
    json j = {{"format", "hscnn-paired-ttest"},
              {"version", 1},
              {"a", name_a},
              {"b", name_b},
              {"metric", "malignancy.auc"},
              {"differences", result.differences},
              {"mean_difference", result.mean_difference},
              {"sd_difference", result.sd_difference},
              {"standard_error", result.standard_error},
              {"t", number_or_null(result.t)},
              {"df", result.df},
              {"p_value", result.p_value},
              {"confidence", result.confidence},
              {"ci", {result.ci_low, result.ci_high}}};
    return j.dump(2) + "\n";
}

} // namespace hscnn
