#include "colorshift/checkpoint.hpp"

#include <cstdio>
#include <cstring>

#include "colorshift/config.hpp"

namespace colorshift {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'F', 'T'};
constexpr uint32_t kVersion = 1;

void put(std::string& buf, const void* p, size_t n) {
    buf.append(static_cast<const char*>(p), n);
}
template <typename T>
void put_pod(std::string& buf, T v) {
    put(buf, &v, sizeof v);
}
void put_str(std::string& buf, const std::string& s) {
    put_pod(buf, static_cast<uint32_t>(s.size()));
    put(buf, s.data(), s.size());
}

class Reader {
  public:
    Reader(const std::string& buf, size_t limit) : buf_(buf), limit_(limit) {}

    void read(void* p, size_t n) {
        if (pos_ + n > limit_) throw CheckpointError("checkpoint corrupt: record overruns file");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    template <typename T>
    T pod() {
        T v;
        read(&v, sizeof v);
        return v;
    }
    std::string str() {
        uint32_t n = pod<uint32_t>();
        if (pos_ + n > limit_) throw CheckpointError("checkpoint corrupt: record overruns file");
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    size_t pos() const { return pos_; }

  private:
    const std::string& buf_;
    size_t limit_, pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
    std::string buf;
    put(buf, kMagic, 4);
    put_pod(buf, data.version);
    put_pod(buf, data.iteration);
    put_pod(buf, data.config_hash);
    put_str(buf, data.model_json);
    put_str(buf, data.rng_state);
    put_pod(buf, data.optimizer_step);
    put_pod(buf, static_cast<uint32_t>(data.arrays.size()));
    for (const auto& [name, vals] : data.arrays) {
        put_str(buf, name);
        put_pod(buf, static_cast<uint64_t>(vals.size()));
        put(buf, vals.data(), vals.size() * sizeof(float));
    }
    uint64_t sum = fnv1a64(buf.data(), buf.size());
    put_pod(buf, sum);

    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw CheckpointError("cannot write checkpoint: " + path);
    size_t written = std::fwrite(buf.data(), 1, buf.size(), f);
    std::fclose(f);
    if (written != buf.size()) throw CheckpointError("short write saving checkpoint: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw CheckpointError("cannot open checkpoint: " + path);
    std::string buf;
    char chunk[1 << 16];
    size_t n;
    while ((n = std::fread(chunk, 1, sizeof chunk, f)) > 0) buf.append(chunk, n);
    std::fclose(f);

    if (buf.size() < 12)
        throw CheckpointError("checkpoint checksum mismatch (file truncated): " + path);
    uint64_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
    if (fnv1a64(buf.data(), buf.size() - 8) != stored)
        throw CheckpointError("checkpoint checksum mismatch (file truncated or corrupt): " + path);

    Reader r(buf, buf.size() - 8);
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("not a checkpoint file (bad magic): " + path);
    CheckpointData d;
    d.version = r.pod<uint32_t>();
    if (d.version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(d.version) +
                              " (expected " + std::to_string(kVersion) + "): " + path);
    d.iteration = r.pod<uint64_t>();
    d.config_hash = r.pod<uint64_t>();
    d.model_json = r.str();
    d.rng_state = r.str();
    d.optimizer_step = r.pod<uint64_t>();
    uint32_t count = r.pod<uint32_t>();
    d.arrays.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        uint64_t numel = r.pod<uint64_t>();
        std::vector<float> vals(numel);
        r.read(vals.data(), numel * sizeof(float));
        d.arrays.emplace_back(std::move(name), std::move(vals));
    }
    if (r.pos() != buf.size() - 8)
        throw CheckpointError("checkpoint corrupt: trailing bytes after arrays: " + path);
    return d;
}

}  // namespace colorshift
