#pragma once

#include <cstdint>
#include <stdexcept>

#include "colorshift/como.hpp"
#include "colorshift/cose.hpp"

namespace colorshift {

// Configuration / CLI errors map to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ModelConfig {
    int extractor_depth = 3;
    int extractor_width = 16;
    int generator_width = 16;
    int cose_kernel = 3;
    std::string deform_mode = "full";
    int como_dim = 8;
    int como_max_tokens = 4096;
    bool separate_extractors = false;
    bool opposed_maps = false;
    int illum_channels = 1;
    bool share_generator = true;
    std::string attention_mode = "como";  // or "nonlocal_concat"
    float epsilon_floor = 1e-3f;

    void validate() const {
        if (extractor_depth < 1 || extractor_depth > 6)
            throw ConfigError("extractor_depth must be in [1,6]");
        if (extractor_width < 2) throw ConfigError("extractor_width must be >= 2");
        if (generator_width < 1) throw ConfigError("generator_width must be >= 1");
        if (cose_kernel != 3)
            throw ConfigError("cose_kernel: only 3 is supported");
        try {
            deform_mode_from_string(deform_mode);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());  // config errors must exit 2, not 1
        }
        if (como_dim < 1) throw ConfigError("como_dim must be >= 1");
        if (como_max_tokens < 1) throw ConfigError("como_max_tokens must be >= 1");
        if (illum_channels != 1 && illum_channels != 3)
            throw ConfigError("illum_channels must be 1 or 3");
        if (attention_mode != "como" && attention_mode != "nonlocal_concat")
            throw ConfigError("unknown attention_mode: " + attention_mode);
        if (!(epsilon_floor > 0.0f) || epsilon_floor >= 0.5f)
            throw ConfigError("epsilon_floor must be in (0, 0.5)");
    }
};

template <typename T>
struct ForwardResult {
    Var<T> iy;     // enhanced output
    Var<T> fn;     // pseudo-normal image
    Var<T> lum_u;  // illumination for the under-exposed path
    Var<T> lum_o;  // illumination for the over-exposed path
    Var<T> fb, fd; // brightened / darkened maps
    Var<T> ob, od; // per-path correction outputs feeding the attention stage
};

// Named non-trainable state (batch-norm running statistics).
template <typename T>
struct NamedState {
    std::string name;
    Tensor<T>* tensor;
};

template <typename T>
class Model {
  public:
    ModelConfig cfg;
    ExtractorWeights<T> ext, ext2;
    ComoBranchWeights<T> br_i, br_b, br_d;
    ComoMixWeights<T> mix;
    GeneratorWeights<T> gen;
    CoseWeights<T> cose_b, cose_d;
    NonLocalWeights<T> nl;
    bool training = true;

    Model(const ModelConfig& c, uint32_t seed) : cfg(c) {
        cfg.validate();
        std::mt19937 g(seed);
        T eps = static_cast<T>(cfg.epsilon_floor);
        ext.init(cfg.extractor_depth, cfg.extractor_width, cfg.illum_channels, eps, g);
        if (cfg.separate_extractors)
            ext2.init(cfg.extractor_depth, cfg.extractor_width, cfg.illum_channels, eps, g);
        bool como = cfg.attention_mode == "como";
        if (como) {
            br_i.init(cfg.como_dim, g);
            br_b.init(cfg.como_dim, g);
            br_d.init(cfg.como_dim, g);
            mix.init(cfg.como_dim, g);
        }
        if (como && cfg.share_generator) {
            gen.lift_b = br_b.z;
            gen.lift_d = br_d.z;
            gen.lift_i = br_i.z;
            gen.owns_lifts = false;
        } else {
            gen.init_lifts(cfg.como_dim, g);
        }
        gen.init_trunk(cfg.como_dim, cfg.generator_width, g);
        DeformMode dm = deform_mode_from_string(cfg.deform_mode);
        cose_b.init(dm, g);
        cose_d.init(dm, g);
        if (!como) nl.init(cfg.como_dim, g);
    }

    std::vector<NamedParam<T>> params() {
        std::vector<NamedParam<T>> out;
        ext.collect("ext", out);
        if (cfg.separate_extractors) ext2.collect("ext2", out);
        if (cfg.attention_mode == "como") {
            br_i.collect("como.i", out);
            br_b.collect("como.b", out);
            br_d.collect("como.d", out);
            mix.collect("como.mix", out);
        }
        gen.collect("gen", out);
        cose_b.collect("cose_b", out);
        cose_d.collect("cose_d", out);
        if (cfg.attention_mode != "como") nl.collect("nl", out);
        return out;
    }

    std::vector<NamedState<T>> states() {
        std::vector<NamedState<T>> out;
        if (cfg.attention_mode == "como") {
            out.push_back({"como.mix.bnB.running_mean", &mix.bnB_state.running_mean});
            out.push_back({"como.mix.bnB.running_var", &mix.bnB_state.running_var});
            out.push_back({"como.mix.bnD.running_mean", &mix.bnD_state.running_mean});
            out.push_back({"como.mix.bnD.running_var", &mix.bnD_state.running_var});
        }
        return out;
    }

    int64_t param_count() {
        int64_t n = 0;
        for (auto& p : params()) n += static_cast<int64_t>(p.var.value().numel());
        return n;
    }

    // Full pipeline for a batch. Inputs must be (3,H,W) with H,W divisible
    // by 2^extractor_depth (pad beforehand for arbitrary sizes). The batch is
    // processed jointly so normalization statistics pool every image's
    // tokens; a batch of one matches the single-image path bit for bit.
    std::vector<ForwardResult<T>> forward_batch(const std::vector<Var<T>>& imgs) {
        T floor_val = static_cast<T>(cfg.epsilon_floor);
        std::vector<ForwardResult<T>> rs(imgs.size());
        for (size_t i = 0; i < imgs.size(); ++i) {
            const Var<T>& img = imgs[i];
            ForwardResult<T>& r = rs[i];
            r.lum_u = extract_illumination(img, ext);
            if (cfg.opposed_maps) {
                r.lum_o = rsub_scalar(T(1), r.lum_u);
                // opposition can reach 1 - 1 = 0; brighten() floors it
            } else {
                const ExtractorWeights<T>& e2 = cfg.separate_extractors ? ext2 : ext;
                r.lum_o = extract_illumination(rsub_scalar(T(1), img), e2);
            }
            r.fb = brighten(img, r.lum_u, floor_val);
            r.fd = darken(img, r.lum_o, floor_val);
            r.fn = generate_pseudo_normal(r.fb, r.fd, img, gen);
            r.ob = cose_forward(r.fn, r.fb, cose_b);
            r.od = cose_forward(r.fn, r.fd, cose_d);
        }
        if (cfg.attention_mode == "como") {
            std::vector<Var<T>> is, obs, ods;
            for (size_t i = 0; i < imgs.size(); ++i) {
                is.push_back(imgs[i]);
                obs.push_back(rs[i].ob);
                ods.push_back(rs[i].od);
            }
            std::vector<Var<T>> iys = como_forward_batch(is, obs, ods, br_i, br_b, br_d, mix,
                                                         training, cfg.como_max_tokens);
            for (size_t i = 0; i < imgs.size(); ++i) rs[i].iy = iys[i];
        } else {
            for (size_t i = 0; i < imgs.size(); ++i)
                rs[i].iy = nonlocal_forward(imgs[i], rs[i].ob, rs[i].od, nl, cfg.como_max_tokens);
        }
        return rs;
    }

    ForwardResult<T> forward(const Var<T>& img) {
        return forward_batch(std::vector<Var<T>>{img})[0];
    }
};

// Reflect-pads (bottom/right) so both spatial dims are divisible by
// `multiple`; returns the original size so the caller can crop back.
template <typename T>
Tensor<T> reflect_pad_multiple(const Tensor<T>& x, int multiple, int& orig_h, int& orig_w) {
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    orig_h = H;
    orig_w = W;
    int ph = (multiple - H % multiple) % multiple;
    int pw = (multiple - W % multiple) % multiple;
    if (ph == 0 && pw == 0) return x;
    int nh = H + ph, nw = W + pw;
    if (H < 2 && ph > 0) throw std::invalid_argument("image too small to reflect-pad");
    if (W < 2 && pw > 0) throw std::invalid_argument("image too small to reflect-pad");
    // mirror tiling with period 2n-2 survives pads wider than the source
    auto reflect = [](int i, int n) {
        int period = 2 * n - 2;
        int m = i % period;
        return m < n ? m : period - m;
    };
    Tensor<T> out({C, nh, nw});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < nh; ++y) {
            int sy = reflect(y, H);
            for (int xcol = 0; xcol < nw; ++xcol)
                out.at(c, y, xcol) = x.at(c, sy, reflect(xcol, W));
        }
    return out;
}

template <typename T>
Tensor<T> crop_origin(const Tensor<T>& x, int h, int w) {
    int C = x.dim(0);
    if (h > x.dim(1) || w > x.dim(2)) throw std::invalid_argument("crop larger than source");
    Tensor<T> out({C, h, w});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < h; ++y)
            for (int xcol = 0; xcol < w; ++xcol) out.at(c, y, xcol) = x.at(c, y, xcol);
    return out;
}

}  // namespace colorshift
