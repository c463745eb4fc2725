#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace colorshift {

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Versioned, checksummed container of named float arrays plus run metadata.
// Binary layout (little-endian): "CSFT", u32 version, u64 iteration,
// u64 config_hash, model-config JSON (u32 len + bytes), RNG state string
// (u32 len + bytes), u64 optimizer step, u32 array count, then per array
// u32 name length, name, u64 element count, f32 elements; the file ends with
// the 64-bit FNV-1a of everything before it. Saving preserves array order,
// so save -> load -> save reproduces the bytes exactly.
struct CheckpointData {
    uint32_t version = 1;
    uint64_t iteration = 0;
    uint64_t config_hash = 0;
    std::string model_json;
    std::string rng_state;
    uint64_t optimizer_step = 0;
    std::vector<std::pair<std::string, std::vector<float>>> arrays;

    const std::vector<float>* find(const std::string& name) const {
        for (const auto& [n, v] : arrays)
            if (n == name) return &v;
        return nullptr;
    }
};

void save_checkpoint(const std::string& path, const CheckpointData& data);

// Throws CheckpointError on checksum failure (including truncation), bad
// magic, or unsupported version.
CheckpointData load_checkpoint(const std::string& path);

}  // namespace colorshift
