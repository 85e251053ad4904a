#include "ssnas/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace ssnas {

using nlohmann::json;

namespace {

template <class T>
void read_key(const json& j, std::set<std::string>& seen, const char* key, T& out) {
    seen.insert(key);
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: bad value for key '") + key + "'");
    }
}

} // namespace

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");

    RunConfig c;
    std::set<std::string> known;
    read_key(j, known, "seed", c.seed);
    read_key(j, known, "output_dir", c.output_dir);
    read_key(j, known, "data_source", c.data_source);
    read_key(j, known, "data_dir", c.data_dir);
    read_key(j, known, "phantom_count", c.phantom_count);
    read_key(j, known, "phantom_size", c.phantom_size);
    read_key(j, known, "speckle", c.speckle);
    read_key(j, known, "bias", c.bias);
    read_key(j, known, "num_classes", c.num_classes);
    read_key(j, known, "test_fraction", c.test_fraction);
    read_key(j, known, "labeled_fraction", c.labeled_fraction);
    read_key(j, known, "layers", c.layers);
    read_key(j, known, "nodes", c.nodes);
    read_key(j, known, "base_channels", c.base_channels);
    read_key(j, known, "channel_fraction", c.channel_fraction);
    read_key(j, known, "in_channels", c.in_channels);
    read_key(j, known, "decoder_op_set", c.decoder_op_set);
    read_key(j, known, "epochs", c.epochs);
    read_key(j, known, "arch_warmup", c.arch_warmup);
    read_key(j, known, "g_steps", c.g_steps);
    read_key(j, known, "batch_labeled", c.batch_labeled);
    read_key(j, known, "batch_unlabeled", c.batch_unlabeled);
    read_key(j, known, "lr_weights", c.lr_weights);
    read_key(j, known, "momentum", c.momentum);
    read_key(j, known, "wd_weights", c.wd_weights);
    read_key(j, known, "lr_arch", c.lr_arch);
    read_key(j, known, "wd_arch", c.wd_arch);
    read_key(j, known, "lr_g", c.lr_g);
    read_key(j, known, "lambda1", c.lambda1);
    read_key(j, known, "lambda3", c.lambda3);
    read_key(j, known, "ramp_epochs", c.ramp_epochs);
    read_key(j, known, "contrastive_resolutions", c.contrastive_resolutions);
    read_key(j, known, "uncertainty_mean", c.uncertainty_mean);

    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");
    c.validate();
    return c;
}

std::string RunConfig::to_json_text() const {
    json j;
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["data_source"] = data_source;
    j["data_dir"] = data_dir;
    j["phantom_count"] = phantom_count;
    j["phantom_size"] = phantom_size;
    j["speckle"] = speckle;
    j["bias"] = bias;
    j["num_classes"] = num_classes;
    j["test_fraction"] = test_fraction;
    j["labeled_fraction"] = labeled_fraction;
    j["layers"] = layers;
    j["nodes"] = nodes;
    j["base_channels"] = base_channels;
    j["channel_fraction"] = channel_fraction;
    j["in_channels"] = in_channels;
    j["decoder_op_set"] = decoder_op_set;
    j["epochs"] = epochs;
    j["arch_warmup"] = arch_warmup;
    j["g_steps"] = g_steps;
    j["batch_labeled"] = batch_labeled;
    j["batch_unlabeled"] = batch_unlabeled;
    j["lr_weights"] = lr_weights;
    j["momentum"] = momentum;
    j["wd_weights"] = wd_weights;
    j["lr_arch"] = lr_arch;
    j["wd_arch"] = wd_arch;
    j["lr_g"] = lr_g;
    j["lambda1"] = lambda1;
    j["lambda3"] = lambda3;
    j["ramp_epochs"] = ramp_epochs;
    j["contrastive_resolutions"] = contrastive_resolutions;
    j["uncertainty_mean"] = uncertainty_mean;
    return j.dump(2) + "\n";
}

void RunConfig::validate() const {
    if (data_source != "phantom" && data_source != "directory")
        throw ConfigError("config: data_source must be 'phantom' or 'directory'");
    if (data_source == "directory" && data_dir.empty())
        throw ConfigError("config: missing required key 'data_dir' for directory data");
    if (decoder_op_set != "exclude_pool_zero" && decoder_op_set != "include_pool_zero")
        throw ConfigError("config: decoder_op_set must be exclude_pool_zero or include_pool_zero");
    if (uncertainty_mean != "spatial" && uncertainty_mean != "channel")
        throw ConfigError("config: uncertainty_mean must be 'spatial' or 'channel'");
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0))
        throw ConfigError("config: labeled_fraction must be in (0,1]");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0))
        throw ConfigError("config: test_fraction must be in [0,1)");
    if (phantom_count < 1) throw ConfigError("config: phantom_count must be >= 1");
    supernet_config().validate();
    train_config().validate();
    loss_weights().validate();
    if (data_source == "phantom") phantom_spec().validate();
}

SupernetConfig RunConfig::supernet_config() const {
    SupernetConfig cfg;
    cfg.encoder.layers = layers;
    cfg.encoder.nodes = nodes;
    cfg.encoder.base_channels = base_channels;
    cfg.encoder.channel_fraction = channel_fraction;
    cfg.encoder.in_channels = in_channels;
    cfg.num_classes = num_classes;
    cfg.include_pool_zero = decoder_op_set == "include_pool_zero";
    return cfg;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.arch_warmup = arch_warmup;
    tc.g_steps = g_steps;
    tc.batch_labeled = batch_labeled;
    tc.batch_unlabeled = batch_unlabeled;
    tc.lr_weights = lr_weights;
    tc.momentum = momentum;
    tc.wd_weights = wd_weights;
    tc.lr_arch = lr_arch;
    tc.wd_arch = wd_arch;
    tc.lr_g = lr_g;
    tc.seed = seed;
    tc.contrastive_resolutions = contrastive_resolutions;
    tc.uncertainty_channel_mean = uncertainty_mean == "channel";
    return tc;
}

LossWeights RunConfig::loss_weights() const {
    LossWeights lw;
    lw.lambda1 = lambda1;
    lw.lambda3 = lambda3;
    lw.ramp_epochs = ramp_epochs;
    return lw;
}

PhantomSpec RunConfig::phantom_spec() const {
    PhantomSpec spec;
    spec.size = phantom_size;
    spec.num_classes = num_classes;
    spec.speckle = speckle;
    spec.bias = bias;
    return spec;
}

} // namespace ssnas
