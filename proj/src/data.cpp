#include "colorshift/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace colorshift {

const std::pair<Tensor<float>, Tensor<float>>& PairedDataset::pair(size_t index) const {
    if (index >= records.size()) throw DataError("dataset index out of range");
    if (cache_.size() != records.size()) cache_.resize(records.size());
    auto& slot = cache_[index];
    if (!slot) {
        ImageTensor in = load_image(records[index].input_path);
        ImageTensor gt = load_image(records[index].gt_path);
        slot = std::make_pair(std::move(in.data), std::move(gt.data));
    }
    return *slot;
}

namespace {

bool is_image_file(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e == ".png" || e == ".jpg" || e == ".jpeg";
}

void check_dims(const PairRecord& r) {
    ImageTensor in = load_image(r.input_path);
    ImageTensor gt = load_image(r.gt_path);
    if (in.height() != gt.height() || in.width() != gt.width())
        throw DataError("dimension mismatch between " + r.input_path + " (" +
                        std::to_string(in.width()) + "x" + std::to_string(in.height()) +
                        ") and " + r.gt_path + " (" + std::to_string(gt.width()) + "x" +
                        std::to_string(gt.height()) + ")");
}

}  // namespace

PairedDataset scan_dataset(const std::string& root, const std::string& manifest) {
    PairedDataset ds;
    if (!manifest.empty()) {
        std::ifstream f(manifest);
        if (!f) throw DataError("cannot open manifest: " + manifest);
        fs::path base = fs::path(manifest).parent_path();
        std::string line;
        size_t lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw DataError("manifest line " + std::to_string(lineno) +
                                " is not tab-separated: " + line);
            auto resolve = [&](std::string p) {
                fs::path q(p);
                return (q.is_absolute() ? q : base / q).string();
            };
            ds.records.push_back({resolve(line.substr(0, tab)), resolve(line.substr(tab + 1))});
        }
    } else {
        fs::path in_dir = fs::path(root) / "input";
        fs::path gt_dir = fs::path(root) / "gt";
        if (!fs::is_directory(in_dir) || !fs::is_directory(gt_dir))
            throw DataError("dataset root must contain input/ and gt/: " + root);
        std::vector<fs::path> inputs;
        for (const auto& e : fs::directory_iterator(in_dir))
            if (e.is_regular_file() && is_image_file(e.path())) inputs.push_back(e.path());
        std::sort(inputs.begin(), inputs.end());
        for (const auto& in : inputs) {
            fs::path gt = gt_dir / in.filename();
            if (!fs::exists(gt)) {
                // allow gt stored under a different extension
                bool found = false;
                for (const char* ext : {".png", ".jpg", ".jpeg"}) {
                    fs::path alt = gt_dir / in.stem();
                    alt += ext;
                    if (fs::exists(alt)) {
                        gt = alt;
                        found = true;
                        break;
                    }
                }
                if (!found)
                    throw DataError("input without gt counterpart: " + in.string());
            }
            ds.records.push_back({in.string(), gt.string()});
        }
    }
    for (const auto& r : ds.records) {
        if (!fs::exists(r.input_path)) throw DataError("missing input file: " + r.input_path);
        if (!fs::exists(r.gt_path)) throw DataError("missing gt file: " + r.gt_path);
        check_dims(r);
    }
    return ds;
}

namespace {

Tensor<float> crop(const Tensor<float>& x, int y0, int x0, int s) {
    Tensor<float> out({x.dim(0), s, s});
    for (int c = 0; c < x.dim(0); ++c)
        for (int y = 0; y < s; ++y)
            for (int xx = 0; xx < s; ++xx) out.at(c, y, xx) = x.at(c, y0 + y, x0 + xx);
    return out;
}

void hflip_inplace(Tensor<float>& x) {
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W / 2; ++xx) std::swap(x.at(c, y, xx), x.at(c, y, W - 1 - xx));
}

// 90 degrees clockwise; square inputs only.
Tensor<float> rot90(const Tensor<float>& x) {
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor<float> out({C, W, H});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) out.at(c, xx, H - 1 - y) = x.at(c, y, xx);
    return out;
}

}  // namespace

std::pair<Tensor<float>, Tensor<float>> sample_patch(const PairedDataset& ds, size_t index,
                                                     std::mt19937& g) {
    const auto& [in, gt] = ds.pair(index);
    int H = in.dim(1), W = in.dim(2), s = ds.patch_size;
    if (s > H || s > W)
        throw DataError("patch_size " + std::to_string(s) + " exceeds image " +
                        std::to_string(W) + "x" + std::to_string(H));
    int y0 = static_cast<int>(canonical_u01(g) * (H - s + 1));
    int x0 = static_cast<int>(canonical_u01(g) * (W - s + 1));
    y0 = std::min(y0, H - s);
    x0 = std::min(x0, W - s);
    Tensor<float> pi = crop(in, y0, x0, s), pg = crop(gt, y0, x0, s);
    if (ds.augment_flip && canonical_u01(g) < 0.5) {
        hflip_inplace(pi);
        hflip_inplace(pg);
    }
    if (ds.augment_rot90) {
        int k = static_cast<int>(canonical_u01(g) * 4) & 3;
        for (int i = 0; i < k; ++i) {
            pi = rot90(pi);
            pg = rot90(pg);
        }
    }
    return {std::move(pi), std::move(pg)};
}

void DegradationSpec::validate() const {
    if (region_count < 1) throw DataError("region_count must be >= 1");
    if (!(gamma_over_lo <= gamma_over_hi) || !(gamma_under_lo <= gamma_under_hi))
        throw DataError("degradation gamma range inverted");
    if (gamma_over_hi > 0.9f + 1e-6f || gamma_over_lo <= 0.0f)
        throw DataError("over-exposure gamma range must sit in (0, 0.9]");
    if (gamma_under_lo < 1.1f - 1e-6f)
        throw DataError("under-exposure gamma range must start at >= 1.1");
    if (tone_shift_magnitude < 0 || noise_sigma < 0)
        throw DataError("negative degradation magnitude");
}

namespace {

// Coarse random grid bilinearly upsampled to (h,w): cheap smooth field whose
// bump granularity follows `cells`.
Tensor<float> smooth_field(int h, int w, int cells, std::mt19937& g) {
    int gh = cells + 2, gw = cells + 2;
    Tensor<float> coarse({1, gh, gw});
    for (auto& v : coarse.v) v = static_cast<float>(normal_sample(g));
    Tensor<float> out({1, h, w});
    for (int y = 0; y < h; ++y) {
        double fy = (h == 1) ? 0 : static_cast<double>(y) / (h - 1) * (gh - 1);
        int y0 = std::min(static_cast<int>(fy), gh - 2);
        double wy = fy - y0;
        for (int x = 0; x < w; ++x) {
            double fx = (w == 1) ? 0 : static_cast<double>(x) / (w - 1) * (gw - 1);
            int x0 = std::min(static_cast<int>(fx), gw - 2);
            double wx = fx - x0;
            double v = (1 - wy) * ((1 - wx) * coarse.at(0, y0, x0) + wx * coarse.at(0, y0, x0 + 1)) +
                       wy * ((1 - wx) * coarse.at(0, y0 + 1, x0) + wx * coarse.at(0, y0 + 1, x0 + 1));
            out.at(0, y, x) = static_cast<float>(v);
        }
    }
    return out;
}

float quantile(std::vector<float> v, double q) {
    size_t k = static_cast<size_t>(q * (v.size() - 1));
    std::nth_element(v.begin(), v.begin() + static_cast<ptrdiff_t>(k), v.end());
    return v[k];
}

}  // namespace

DegradedPair synthesize_degraded(const Tensor<float>& gt, const DegradationSpec& spec) {
    spec.validate();
    if (gt.ndim() != 3 || gt.dim(0) != 3) throw DataError("synthesize_degraded: want (3,H,W)");
    int H = gt.dim(1), W = gt.dim(2);
    std::mt19937 g(spec.seed);

    Tensor<float> field = smooth_field(H, W, spec.region_count, g);
    float q_lo = quantile(field.v, 1.0 / 3.0);
    float q_hi = quantile(field.v, 2.0 / 3.0);

    float go = spec.gamma_over_lo +
               static_cast<float>(canonical_u01(g)) * (spec.gamma_over_hi - spec.gamma_over_lo);
    float gu = spec.gamma_under_lo +
               static_cast<float>(canonical_u01(g)) * (spec.gamma_under_hi - spec.gamma_under_lo);
    // zero-sum chroma cast: +delta in over regions, -delta in under regions
    float d[3];
    float dm = 0;
    for (auto& v : d) {
        v = static_cast<float>(canonical_u01(g) * 2 - 1);
        dm += v;
    }
    for (auto& v : d) v = (v - dm / 3) * spec.tone_shift_magnitude;

    DegradedPair out;
    out.input = Tensor<float>({3, H, W});
    out.over_mask = Tensor<float>({1, H, W});
    out.under_mask = Tensor<float>({1, H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            float f = field.at(0, y, x);
            bool over = f > q_hi, under = f < q_lo;
            out.over_mask.at(0, y, x) = over ? 1.0f : 0.0f;
            out.under_mask.at(0, y, x) = under ? 1.0f : 0.0f;
            for (int c = 0; c < 3; ++c) {
                float v = gt.at(c, y, x);
                if (over) {
                    v = std::pow(std::max(v, 0.0f), go) + d[c];
                } else if (under) {
                    v = std::pow(std::max(v, 0.0f), gu) - d[c];
                    if (spec.noise_sigma > 0)
                        v += spec.noise_sigma * static_cast<float>(normal_sample(g));
                }
                out.input.at(c, y, x) = std::clamp(v, 0.0f, 1.0f);
            }
        }
    return out;
}

Tensor<float> synthetic_gt(int height, int width, uint32_t seed) {
    std::mt19937 g(seed);
    Tensor<float> img({3, height, width});
    for (int c = 0; c < 3; ++c) {
        Tensor<float> f = smooth_field(height, width, 2, g);
        float lo = *std::min_element(f.v.begin(), f.v.end());
        float hi = *std::max_element(f.v.begin(), f.v.end());
        float span = std::max(hi - lo, 1e-6f);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                // mid-range so gamma curves have room in both directions
                img.at(c, y, x) = 0.2f + 0.6f * (f.at(0, y, x) - lo) / span;
    }
    return img;
}

void write_synthetic_dataset(const std::string& root, int count, int height, int width,
                             const DegradationSpec& spec) {
    fs::create_directories(fs::path(root) / "input");
    fs::create_directories(fs::path(root) / "gt");
    for (int i = 0; i < count; ++i) {
        Tensor<float> gt = synthetic_gt(height, width, spec.seed + 1000u * (i + 1u));
        DegradationSpec s = spec;
        s.seed = spec.seed + static_cast<uint32_t>(i);
        DegradedPair p = synthesize_degraded(gt, s);
        char name[32];
        std::snprintf(name, sizeof name, "%04d.png", i);
        save_image({p.input, ColorSpace::SRGB}, (fs::path(root) / "input" / name).string());
        save_image({gt, ColorSpace::SRGB}, (fs::path(root) / "gt" / name).string());
    }
}

}  // namespace colorshift
