#pragma once

#include <cstdio>
#include <string>

#include "colorshift/ops.hpp"

namespace colorshift {

struct LossWeights {
    float lambda1 = 1.0f;   // L1
    float lambda2 = 0.5f;   // cosine
    float lambda3 = 0.2f;   // SSIM
    float lambda4 = 0.04f;  // perceptual
    float lambda_p = 1.0f;  // pseudo-supervision
    float lambda_o = 1.0f;  // output loss
    bool use_ssim = true;
    bool use_vgg = true;
    bool use_pseudo = true;
};

template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& gt) {
    return mean_all(abs(sub(pred, gt)));
}

// mean over pixels of 1 - cos angle between the 3-vectors, norms floored at
// 1e-8 to keep the division defined.
template <typename T>
Var<T> cosine_loss(const Var<T>& pred, const Var<T>& gt) {
    Var<T> dot = sum_channels(mul(pred, gt));
    Var<T> np = clamp_min(sqrt(sum_channels(square(pred))), T(1e-8));
    Var<T> ng = clamp_min(sqrt(sum_channels(square(gt))), T(1e-8));
    Var<T> cosv = div(dot, mul(np, ng));
    return mean_all(rsub_scalar(T(1), cosv));
}

template <typename T>
Tensor<T> gaussian_window(int size, T sigma) {
    Tensor<T> w({size, size});
    int c = size / 2;
    T sum = 0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            T d2 = static_cast<T>((y - c) * (y - c) + (x - c) * (x - c));
            T v = std::exp(-d2 / (2 * sigma * sigma));
            w.at2(y, x) = v;
            sum += v;
        }
    for (auto& v : w.v) v /= sum;
    return w;
}

// 1 - SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01 K2=0.03, dynamic range 1,
// valid windows only, averaged over channels. Inputs are clamped to [0,1]
// before windowing.
template <typename T>
Var<T> ssim_loss(const Var<T>& pred, const Var<T>& gt) {
    const T C1 = T(0.01 * 0.01), C2 = T(0.03 * 0.03);
    static const Tensor<T> window = gaussian_window<T>(11, T(1.5));
    Var<T> p = clamp(pred, T(0), T(1));
    Var<T> g = clamp(gt, T(0), T(1));
    Var<T> mp = depthwise_conv_valid(p, window);
    Var<T> mg = depthwise_conv_valid(g, window);
    Var<T> spp = sub(depthwise_conv_valid(mul(p, p), window), mul(mp, mp));
    Var<T> sgg = sub(depthwise_conv_valid(mul(g, g), window), mul(mg, mg));
    Var<T> spg = sub(depthwise_conv_valid(mul(p, g), window), mul(mp, mg));
    Var<T> n = mul(add_scalar(mul_scalar(mul(mp, mg), T(2)), C1),
                   add_scalar(mul_scalar(spg, T(2)), C2));
    Var<T> d = mul(add_scalar(add(mul(mp, mp), mul(mg, mg)), C1),
                   add_scalar(add(spp, sgg), C2));
    return rsub_scalar(T(1), mean_all(div(n, d)));
}

// Fixed (non-trainable) three-stage conv stack standing in for a pretrained
// perceptual network: either seeded random filters or filters loaded from a
// small binary file (see README for the format).
template <typename T>
struct PerceptualExtractor {
    Tensor<T> w1, b1, w2, b2, w3, b3;

    static PerceptualExtractor seeded(uint32_t seed) {
        std::mt19937 g(seed);
        PerceptualExtractor pe;
        auto kaiming = [&](std::vector<int> s) {
            int fan = s[1] * s[2] * s[3];
            return randn<T>(std::move(s), g, static_cast<T>(std::sqrt(2.0 / fan)));
        };
        pe.w1 = kaiming({8, 3, 3, 3});
        pe.b1 = Tensor<T>({8});
        pe.w2 = kaiming({16, 8, 3, 3});
        pe.b2 = Tensor<T>({16});
        pe.w3 = kaiming({16, 16, 3, 3});
        pe.b3 = Tensor<T>({16});
        return pe;
    }

    // Binary blob: "CSPE", u32 version=1, then w1,b1,w2,b2,w3,b3 as
    // (u8 ndim, i32 dims..., f32 data...) in that order.
    static PerceptualExtractor from_file(const std::string& path) {
        FILE* f = std::fopen(path.c_str(), "rb");
        if (!f) throw std::runtime_error("perceptual weights not found: " + path);
        auto fail = [&](const char* msg) {
            std::fclose(f);
            throw std::runtime_error(std::string(msg) + ": " + path);
        };
        char magic[4];
        if (std::fread(magic, 1, 4, f) != 4 || std::string(magic, 4) != "CSPE")
            fail("bad perceptual weights magic");
        uint32_t version = 0;
        if (std::fread(&version, 4, 1, f) != 1 || version != 1)
            fail("unsupported perceptual weights version");
        auto read_arr = [&](Tensor<T>& t) {
            uint8_t nd = 0;
            if (std::fread(&nd, 1, 1, f) != 1) fail("truncated perceptual weights");
            std::vector<int> shape(nd);
            for (auto& d : shape)
                if (std::fread(&d, 4, 1, f) != 1) fail("truncated perceptual weights");
            t = Tensor<T>(shape);
            for (auto& v : t.v) {
                float x;
                if (std::fread(&x, 4, 1, f) != 1) fail("truncated perceptual weights");
                v = static_cast<T>(x);
            }
        };
        PerceptualExtractor pe;
        read_arr(pe.w1);
        read_arr(pe.b1);
        read_arr(pe.w2);
        read_arr(pe.b2);
        read_arr(pe.w3);
        read_arr(pe.b3);
        std::fclose(f);
        return pe;
    }

    std::vector<Var<T>> features(const Var<T>& x) const {
        const T slope = T(0.1);
        std::vector<Var<T>> fs;
        Var<T> h = leaky_relu(conv2d(x, Var<T>::constant(w1), Var<T>::constant(b1), 1), slope);
        fs.push_back(h);
        h = avg_pool(h, 2);
        h = leaky_relu(conv2d(h, Var<T>::constant(w2), Var<T>::constant(b2), 1), slope);
        fs.push_back(h);
        h = avg_pool(h, 2);
        fs.push_back(conv2d(h, Var<T>::constant(w3), Var<T>::constant(b3), 1));
        return fs;
    }
};

template <typename T>
Var<T> perceptual_loss(const Var<T>& pred, const Var<T>& gt, const PerceptualExtractor<T>& pe) {
    auto fp = pe.features(pred);
    auto fg = pe.features(gt);
    Var<T> acc;
    for (size_t i = 0; i < fp.size(); ++i) {
        Var<T> term = l1_loss(fp[i], fg[i]);
        acc = acc.defined() ? add(acc, term) : term;
    }
    return mul_scalar(acc, T(1) / static_cast<T>(fp.size()));
}

template <typename T>
Var<T> pseudo_loss(const Var<T>& fn, const Var<T>& gt) {
    return l1_loss(fn, gt);
}

struct LossBreakdown {
    double l1 = 0, cosine = 0, ssim = 0, vgg = 0, pseudo = 0, total = 0;

    std::string to_string() const {
        char buf[192];
        std::snprintf(buf, sizeof buf,
                      "total=%.6g l1=%.6g cos=%.6g ssim=%.6g vgg=%.6g pseudo=%.6g", total, l1,
                      cosine, ssim, vgg, pseudo);
        return buf;
    }
};

// lambda_p * pseudo + lambda_o * (l1 + cos + ssim + vgg weighted by lambda1-4).
// Terms disabled by flag or by a zero weight are skipped entirely.
template <typename T>
std::pair<Var<T>, LossBreakdown> total_loss(const Var<T>& pred, const Var<T>& fn,
                                            const Var<T>& gt, const LossWeights& w,
                                            const PerceptualExtractor<T>* pe) {
    LossBreakdown bd;
    Var<T> acc;
    auto push = [&](Var<T> term, double lambda, double* slot) {
        *slot = static_cast<double>(term.value().v[0]);
        Var<T> scaled = mul_scalar(term, static_cast<T>(lambda));
        acc = acc.defined() ? add(acc, scaled) : scaled;
    };
    if (w.lambda_o > 0) {
        if (w.lambda1 > 0) push(l1_loss(pred, gt), double(w.lambda_o) * w.lambda1, &bd.l1);
        if (w.lambda2 > 0) push(cosine_loss(pred, gt), double(w.lambda_o) * w.lambda2, &bd.cosine);
        if (w.use_ssim && w.lambda3 > 0)
            push(ssim_loss(pred, gt), double(w.lambda_o) * w.lambda3, &bd.ssim);
        if (w.use_vgg && w.lambda4 > 0) {
            if (!pe) throw std::invalid_argument("perceptual loss enabled but no extractor");
            push(perceptual_loss(pred, gt, *pe), double(w.lambda_o) * w.lambda4, &bd.vgg);
        }
    }
    if (w.use_pseudo && w.lambda_p > 0 && fn.defined())
        push(pseudo_loss(fn, gt), w.lambda_p, &bd.pseudo);
    if (!acc.defined()) acc = Var<T>::constant(Tensor<T>({1}));
    bd.total = static_cast<double>(acc.value().v[0]);
    return {acc, bd};
}

}  // namespace colorshift
