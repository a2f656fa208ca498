#include "hscnn/config.hpp"
#include "binary_io.hpp"

#include <json.hpp>

#include <cmath>
#include <initializer_list>

namespace hscnn {

using nlohmann::json;

void RunConfig::validate() const
{
    network.validate();
    if (threads < 1)
        throw ConfigError("threads must be at least 1");
    train_options().validate();
    if (!(max_shift_mm >= 0.0))
        throw ConfigError("training.max_shift_mm must be non-negative");
    LossWeights w;
    w.lambda = lambda;
    w.validate();
    if (lambda_search)
        search_options().validate();
    if (!(cube_mm > 0.0))
        throw ConfigError("preprocess.cube_mm must be positive");
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ConfigError("evaluation.threshold must lie in [0, 1]");
    if (phantom.count < 1)
        throw ConfigError("phantom.count must be at least 1");
    if (!(phantom.class_balance > 0.0 && phantom.class_balance < 1.0))
        throw ConfigError("phantom.class_balance must lie strictly between 0 and 1");
    if (!(phantom.min_diameter_mm >= 5.0 && phantom.min_diameter_mm <= phantom.max_diameter_mm &&
          phantom.max_diameter_mm <= 25.0))
        throw ConfigError("phantom diameters must satisfy 5 <= min <= max <= 25");
    if (!(phantom.noise_sigma >= 0.0))
        throw ConfigError("phantom.noise_sigma must be non-negative");
    if (phantom.volume_voxels < 8 || !(phantom.spacing_mm > 0.0))
        throw ConfigError("phantom volume must be at least 8 voxels per axis with positive spacing");
    if (phantom.readers < 1 || phantom.readers > 4)
        throw ConfigError("phantom.readers must lie in [1, 4]");
    if (!(phantom.slice_thickness_mm > 0.0))
        throw ConfigError("phantom.slice_thickness_mm must be positive");
}

TrainOptions RunConfig::train_options() const
{
    TrainOptions o;
    o.epochs = epochs;
    o.batch_size = batch_size;
    o.learning_rate = learning_rate;
    o.augment = augment;
    o.augment_probability = augment_probability;
    o.augment_validation = augment_validation;
    o.recalibrate_batchnorm = recalibrate_batchnorm;
    o.augment_options.max_shift = max_shift_voxels(network.input_cube_voxels, max_shift_mm, cube_mm);
    o.seed = seed;
    o.threads = threads;
    return o;
}

LambdaSearchOptions RunConfig::search_options() const
{
    LambdaSearchOptions o;
    o.grid = search_grid;
    o.budget = search_budget;
    o.epochs = search_epochs;
    o.train = train_options();
    o.model_seed = seed;
    return o;
}

namespace {

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys)
{
    if (!obj.is_object())
        throw ConfigError("config section '" + where + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : keys)
            known = known || it.key() == k;
        if (!known)
            throw ConfigError("unknown config key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
    }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& out)
{
    if (!obj.contains(key))
        return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + (where.empty() ? "" : where + ".") + key + "' has the wrong type: " +
                          obj.at(key).dump());
    }
}

} // namespace

RunConfig parse_run_config(const std::string& json_text)
{
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    RunConfig c;
    allow_keys(j, "", {"seed", "threads", "network", "training", "loss", "lambda_search", "preprocess",
                       "evaluation", "phantom", "paths"});
    read(j, "seed", "", c.seed);
    read(j, "threads", "", c.threads);

    if (j.contains("network")) {
        const json& n = j.at("network");
        allow_keys(n, "network",
                   {"variant", "cube_voxels", "conv_channels", "branch_hidden", "highlevel_hidden", "dropout"});
        std::string variant(variant_name(c.network.variant));
        read(n, "variant", "network", variant);
        try {
            c.network.variant = variant_from_name(variant);
        } catch (const Error& e) {
            throw ConfigError(std::string("network.variant: ") + e.what());
        }
        read(n, "cube_voxels", "network", c.network.input_cube_voxels);
        read(n, "conv_channels", "network", c.network.conv_module_channels);
        read(n, "branch_hidden", "network", c.network.branch_hidden);
        read(n, "highlevel_hidden", "network", c.network.highlevel_hidden);
        read(n, "dropout", "network", c.network.dropout_rate);
    }
    if (c.network.variant == Variant::Baseline)
        c.network.semantic_tasks.clear();

    if (j.contains("training")) {
        const json& t = j.at("training");
        allow_keys(t, "training", {"epochs", "batch_size", "learning_rate", "augment", "augment_probability",
                                   "augment_validation", "max_shift_mm", "recalibrate_batchnorm"});
        read(t, "epochs", "training", c.epochs);
        read(t, "batch_size", "training", c.batch_size);
        read(t, "learning_rate", "training", c.learning_rate);
        read(t, "augment", "training", c.augment);
        read(t, "augment_probability", "training", c.augment_probability);
        read(t, "augment_validation", "training", c.augment_validation);
        read(t, "max_shift_mm", "training", c.max_shift_mm);
        read(t, "recalibrate_batchnorm", "training", c.recalibrate_batchnorm);
    }
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        allow_keys(l, "loss", {"lambda"});
        if (l.contains("lambda")) {
            const json& lam = l.at("lambda");
            allow_keys(lam, "loss.lambda", {"calcification", "margin", "subtlety", "texture", "sphericity"});
            for (Task t : kSemanticTasks)
                read(lam, task_name(t), "loss.lambda", c.lambda[static_cast<std::size_t>(task_index(t))]);
        }
    }
    if (j.contains("lambda_search")) {
        const json& s = j.at("lambda_search");
        allow_keys(s, "lambda_search", {"enabled", "budget", "epochs", "grid"});
        read(s, "enabled", "lambda_search", c.lambda_search);
        read(s, "budget", "lambda_search", c.search_budget);
        read(s, "epochs", "lambda_search", c.search_epochs);
        read(s, "grid", "lambda_search", c.search_grid);
    }
    if (j.contains("preprocess")) {
        allow_keys(j.at("preprocess"), "preprocess", {"cube_mm"});
        read(j.at("preprocess"), "cube_mm", "preprocess", c.cube_mm);
    }
    if (j.contains("evaluation")) {
        allow_keys(j.at("evaluation"), "evaluation", {"threshold"});
        read(j.at("evaluation"), "threshold", "evaluation", c.threshold);
    }
    if (j.contains("phantom")) {
        const json& p = j.at("phantom");
        allow_keys(p, "phantom", {"count", "class_balance", "min_diameter_mm", "max_diameter_mm", "noise_sigma",
                                  "volume_voxels", "spacing_mm", "readers", "slice_thickness_mm"});
        read(p, "count", "phantom", c.phantom.count);
        read(p, "class_balance", "phantom", c.phantom.class_balance);
        read(p, "min_diameter_mm", "phantom", c.phantom.min_diameter_mm);
        read(p, "max_diameter_mm", "phantom", c.phantom.max_diameter_mm);
        read(p, "noise_sigma", "phantom", c.phantom.noise_sigma);
        read(p, "volume_voxels", "phantom", c.phantom.volume_voxels);
        read(p, "spacing_mm", "phantom", c.phantom.spacing_mm);
        read(p, "readers", "phantom", c.phantom.readers);
        read(p, "slice_thickness_mm", "phantom", c.phantom.slice_thickness_mm);
    }
    if (j.contains("paths")) {
        allow_keys(j.at("paths"), "paths", {"data", "model"});
        read(j.at("paths"), "data", "paths", c.data_path);
        read(j.at("paths"), "model", "paths", c.model_path);
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::string& path)
{
    std::string text;
    try {
        text = detail::read_text_file(path);
    } catch (const Error& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    return parse_run_config(text);
}

std::string run_config_json(const RunConfig& c)
{
    json lambda = json::object();
    for (Task t : kSemanticTasks)
        lambda[task_name(t)] = c.lambda[static_cast<std::size_t>(task_index(t))];
    json j = {
        {"seed", c.seed},
        {"threads", c.threads},
        {"network",
         {{"variant", std::string(variant_name(c.network.variant))},
          {"cube_voxels", c.network.input_cube_voxels},
          {"conv_channels", c.network.conv_module_channels},
          {"branch_hidden", c.network.branch_hidden},
          {"highlevel_hidden", c.network.highlevel_hidden},
          {"dropout", c.network.dropout_rate}}},
        {"training",
         {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"augment", c.augment},
          {"augment_probability", c.augment_probability},
          {"augment_validation", c.augment_validation},
          {"max_shift_mm", c.max_shift_mm},
          {"recalibrate_batchnorm", c.recalibrate_batchnorm}}},
        {"loss", {{"lambda", lambda}}},
        {"lambda_search",
         {{"enabled", c.lambda_search},
          {"budget", c.search_budget},
          {"epochs", c.search_epochs},
          {"grid", c.search_grid}}},
        {"preprocess", {{"cube_mm", c.cube_mm}}},
        {"evaluation", {{"threshold", c.threshold}}},
        {"phantom",
         {{"count", c.phantom.count},
          {"class_balance", c.phantom.class_balance},
          {"min_diameter_mm", c.phantom.min_diameter_mm},
          {"max_diameter_mm", c.phantom.max_diameter_mm},
          {"noise_sigma", c.phantom.noise_sigma},
          {"volume_voxels", c.phantom.volume_voxels},
          {"spacing_mm", c.phantom.spacing_mm},
          {"readers", c.phantom.readers},
          {"slice_thickness_mm", c.phantom.slice_thickness_mm}}},
        {"paths", {{"data", c.data_path}, {"model", c.model_path}}},
    };
    return j.dump(2) + "\n";
}

} // namespace hscnn
