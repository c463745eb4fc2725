#pragma once

#include <cstdint>
#include <string>

#include "colorshift/data.hpp"
#include "colorshift/losses.hpp"
#include "colorshift/model.hpp"

namespace colorshift {

struct TrainConfig {
    int iterations = 500;
    int batch_size = 4;
    int patch_size = 128;
    float lr = 1e-4f;
    float lr_final = 1e-6f;
    uint32_t seed = 1;
    int checkpoint_interval = 100;
    int log_interval = 10;
    std::string device = "cpu";  // hint only; this build is CPU
    std::string dataset;         // root with input/ + gt/, or manifest below
    std::string manifest;
    std::string val_dataset;
    std::string val_manifest;
    std::string output_dir = "run";
    bool augment_flip = true;
    bool augment_rot90 = true;

    void validate() const {
        if (iterations < 1) throw ConfigError("iterations must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (patch_size < 8) throw ConfigError("patch_size must be >= 8");
        if (!(lr > 0)) throw ConfigError("lr must be > 0");
        if (!(lr_final > 0) || lr_final > lr)
            throw ConfigError("lr_final must be in (0, lr]");
        if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
        if (log_interval < 1) throw ConfigError("log_interval must be >= 1");
        if (device != "cpu") throw ConfigError("device: only \"cpu\" is supported");
        if (dataset.empty() && manifest.empty())
            throw ConfigError("train config needs dataset or manifest");
    }
};

// Extra loss knobs that live in the config file next to LossWeights.
struct LossConfig {
    LossWeights weights;
    std::string perceptual_weights;  // optional file; empty -> seeded fallback
    uint32_t perceptual_seed = 977;
};

struct FullConfig {
    ModelConfig model;
    TrainConfig train;
    LossConfig loss;
};

// Strict JSON: unknown keys anywhere raise ConfigError naming the key.
FullConfig parse_config(const std::string& json_text);
FullConfig load_config_file(const std::string& path);

std::string dump_config(const FullConfig& cfg);

// Canonical JSON for the model section alone (sorted keys); its hash guards
// checkpoint/model compatibility.
std::string canonical_model_json(const ModelConfig& cfg);
ModelConfig parse_model_json(const std::string& json_text);

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t config_hash(const ModelConfig& cfg);

}  // namespace colorshift
