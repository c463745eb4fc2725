#include "colorshift/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace colorshift {

using nlohmann::json;

namespace {

// Reads fields out of `j` with presence tracking so leftovers can be named.
class StrictObject {
  public:
    StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j.is_object()) throw ConfigError(where_ + " must be a JSON object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        auto it = j_.find(key);
        if (it == j_.end()) return;  // all fields optional; defaults apply
        seen_.insert(key);
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(where_ + "." + key + ": wrong type");
        }
    }

    const json* sub(const char* key) {
        auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        seen_.insert(key);
        return &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("unknown config key: " + where_ + "." + it.key());
    }

  private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

void read_model(const json& j, ModelConfig& m) {
    StrictObject o(j, "model");
    o.get("extractor_depth", m.extractor_depth);
    o.get("extractor_width", m.extractor_width);
    o.get("generator_width", m.generator_width);
    o.get("cose_kernel", m.cose_kernel);
    o.get("deform_mode", m.deform_mode);
    o.get("como_dim", m.como_dim);
    o.get("como_max_tokens", m.como_max_tokens);
    o.get("separate_extractors", m.separate_extractors);
    o.get("opposed_maps", m.opposed_maps);
    o.get("illum_channels", m.illum_channels);
    o.get("share_generator", m.share_generator);
    o.get("attention_mode", m.attention_mode);
    o.get("epsilon_floor", m.epsilon_floor);
    o.finish();
}

void read_train(const json& j, TrainConfig& t) {
    StrictObject o(j, "train");
    o.get("iterations", t.iterations);
    o.get("batch_size", t.batch_size);
    o.get("patch_size", t.patch_size);
    o.get("lr", t.lr);
    o.get("lr_final", t.lr_final);
    o.get("seed", t.seed);
    o.get("checkpoint_interval", t.checkpoint_interval);
    o.get("log_interval", t.log_interval);
    o.get("device", t.device);
    o.get("dataset", t.dataset);
    o.get("manifest", t.manifest);
    o.get("val_dataset", t.val_dataset);
    o.get("val_manifest", t.val_manifest);
    o.get("output_dir", t.output_dir);
    o.get("augment_flip", t.augment_flip);
    o.get("augment_rot90", t.augment_rot90);
    o.finish();
}

void read_loss(const json& j, LossConfig& l) {
    StrictObject o(j, "loss");
    o.get("lambda1", l.weights.lambda1);
    o.get("lambda2", l.weights.lambda2);
    o.get("lambda3", l.weights.lambda3);
    o.get("lambda4", l.weights.lambda4);
    o.get("lambda_p", l.weights.lambda_p);
    o.get("lambda_o", l.weights.lambda_o);
    o.get("use_ssim", l.weights.use_ssim);
    o.get("use_vgg", l.weights.use_vgg);
    o.get("use_pseudo", l.weights.use_pseudo);
    o.get("perceptual_weights", l.perceptual_weights);
    o.get("perceptual_seed", l.perceptual_seed);
    o.finish();
}

json model_to_json(const ModelConfig& m) {
    // nlohmann objects keep keys sorted, so dump() is canonical
    json j;
    j["extractor_depth"] = m.extractor_depth;
    j["extractor_width"] = m.extractor_width;
    j["generator_width"] = m.generator_width;
    j["cose_kernel"] = m.cose_kernel;
    j["deform_mode"] = m.deform_mode;
    j["como_dim"] = m.como_dim;
    j["como_max_tokens"] = m.como_max_tokens;
    j["separate_extractors"] = m.separate_extractors;
    j["opposed_maps"] = m.opposed_maps;
    j["illum_channels"] = m.illum_channels;
    j["share_generator"] = m.share_generator;
    j["attention_mode"] = m.attention_mode;
    j["epsilon_floor"] = m.epsilon_floor;
    return j;
}

}  // namespace

FullConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    FullConfig cfg;
    StrictObject top(j, "config");
    if (const json* m = top.sub("model")) read_model(*m, cfg.model);
    if (const json* t = top.sub("train")) read_train(*t, cfg.train);
    if (const json* l = top.sub("loss")) read_loss(*l, cfg.loss);
    top.finish();
    cfg.model.validate();
    return cfg;
}

FullConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string dump_config(const FullConfig& cfg) {
    json j;
    j["model"] = model_to_json(cfg.model);
    json t;
    t["iterations"] = cfg.train.iterations;
    t["batch_size"] = cfg.train.batch_size;
    t["patch_size"] = cfg.train.patch_size;
    t["lr"] = cfg.train.lr;
    t["lr_final"] = cfg.train.lr_final;
    t["seed"] = cfg.train.seed;
    t["checkpoint_interval"] = cfg.train.checkpoint_interval;
    t["log_interval"] = cfg.train.log_interval;
    t["device"] = cfg.train.device;
    t["dataset"] = cfg.train.dataset;
    t["manifest"] = cfg.train.manifest;
    t["val_dataset"] = cfg.train.val_dataset;
    t["val_manifest"] = cfg.train.val_manifest;
    t["output_dir"] = cfg.train.output_dir;
    t["augment_flip"] = cfg.train.augment_flip;
    t["augment_rot90"] = cfg.train.augment_rot90;
    j["train"] = t;
    json l;
    l["lambda1"] = cfg.loss.weights.lambda1;
    l["lambda2"] = cfg.loss.weights.lambda2;
    l["lambda3"] = cfg.loss.weights.lambda3;
    l["lambda4"] = cfg.loss.weights.lambda4;
    l["lambda_p"] = cfg.loss.weights.lambda_p;
    l["lambda_o"] = cfg.loss.weights.lambda_o;
    l["use_ssim"] = cfg.loss.weights.use_ssim;
    l["use_vgg"] = cfg.loss.weights.use_vgg;
    l["use_pseudo"] = cfg.loss.weights.use_pseudo;
    l["perceptual_weights"] = cfg.loss.perceptual_weights;
    l["perceptual_seed"] = cfg.loss.perceptual_seed;
    j["loss"] = l;
    return j.dump(2);
}

std::string canonical_model_json(const ModelConfig& cfg) { return model_to_json(cfg).dump(); }

ModelConfig parse_model_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model json invalid: ") + e.what());
    }
    ModelConfig m;
    read_model(j, m);
    m.validate();
    return m;
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t config_hash(const ModelConfig& cfg) {
    std::string s = canonical_model_json(cfg);
    return fnv1a64(s.data(), s.size());
}

}  // namespace colorshift
