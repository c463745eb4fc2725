#pragma once

#include <random>
#include <string>

#include "colorshift/ops.hpp"

namespace colorshift {

template <typename T>
struct NamedParam {
    std::string name;
    Var<T> var;
};

// 3x3 conv parameters.
template <typename T>
struct ConvP {
    Var<T> w, b;
};

// 1x1 conv stored as a (out,in) matrix plus bias, applied over flattened
// pixels; the same object doubles as a token-space linear map, which is what
// lets the generator tie weights with the attention value branches.
template <typename T>
struct MatP {
    Var<T> w, b;
};

template <typename T>
Var<T> apply_conv3(const Var<T>& x, const ConvP<T>& c) {
    return conv2d(x, c.w, c.b, 1);
}

// (C,H,W) -> (out,H,W) through a MatP.
template <typename T>
Var<T> conv1x1(const Var<T>& x, const MatP<T>& m) {
    int C = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2);
    Var<T> t = matmul(m.w, reshape(x, {C, H * W}));
    if (m.b.defined()) t = add_row_bias(t, m.b);
    return reshape(t, {m.w.value().dim(0), H, W});
}

namespace init {

template <typename T>
Var<T> kaiming_conv(int cout, int cin, int k, std::mt19937& g) {
    T std = static_cast<T>(std::sqrt(2.0 / (static_cast<double>(cin) * k * k)));
    return Var<T>::leaf(randn<T>({cout, cin, k, k}, g, std), true);
}
template <typename T>
Var<T> kaiming_mat(int rows, int cols, std::mt19937& g) {
    T std = static_cast<T>(std::sqrt(2.0 / static_cast<double>(cols)));
    return Var<T>::leaf(randn<T>({rows, cols}, g, std), true);
}
template <typename T>
Var<T> zeros(std::vector<int> shape) {
    return Var<T>::leaf(Tensor<T>(std::move(shape)), true);
}
template <typename T>
Var<T> ones(std::vector<int> shape) {
    return Var<T>::leaf(Tensor<T>(std::move(shape), T(1)), true);
}

}  // namespace init

// Encoder-decoder illumination extractor: `depth` 2x downsamplings from
// `width` base channels (two convs per encoder level, one per decoder level,
// skip connections, bilinear upsampling), sigmoid head rescaled to
// [epsilon_floor, 1].
template <typename T>
struct ExtractorWeights {
    int depth = 3, width = 16, out_channels = 1;
    T eps = T(1e-3);
    std::vector<ConvP<T>> enc_a, enc_b;
    ConvP<T> bott;
    std::vector<ConvP<T>> dec;  // deepest level first
    ConvP<T> head;

    void init(int depth_, int width_, int out_ch, T eps_, std::mt19937& g) {
        depth = depth_;
        width = width_;
        out_channels = out_ch;
        eps = eps_;
        enc_a.clear();
        enc_b.clear();
        dec.clear();
        int cin = 3;
        for (int i = 0; i < depth; ++i) {
            int c = width << i;
            enc_a.push_back({init::kaiming_conv<T>(c, cin, 3, g), init::zeros<T>({c})});
            enc_b.push_back({init::kaiming_conv<T>(c, c, 3, g), init::zeros<T>({c})});
            cin = c;
        }
        int cb = width << depth;
        bott = {init::kaiming_conv<T>(cb, cin, 3, g), init::zeros<T>({cb})};
        for (int i = depth - 1; i >= 0; --i) {
            int skip = width << i;
            int up = width << (i + 1);
            dec.push_back({init::kaiming_conv<T>(skip, up + skip, 3, g), init::zeros<T>({skip})});
        }
        // Small-std head keeps the initial illumination near mid-range.
        Tensor<T> hw = randn<T>({out_channels, width, 3, 3}, g, T(0.01));
        head = {Var<T>::leaf(std::move(hw), true), init::zeros<T>({out_channels})};
    }

    void collect(const std::string& p, std::vector<NamedParam<T>>& out) {
        for (size_t i = 0; i < enc_a.size(); ++i) {
            std::string lv = p + ".enc" + std::to_string(i);
            out.push_back({lv + ".a.w", enc_a[i].w});
            out.push_back({lv + ".a.b", enc_a[i].b});
            out.push_back({lv + ".b.w", enc_b[i].w});
            out.push_back({lv + ".b.b", enc_b[i].b});
        }
        out.push_back({p + ".bott.w", bott.w});
        out.push_back({p + ".bott.b", bott.b});
        for (size_t i = 0; i < dec.size(); ++i) {
            out.push_back({p + ".dec" + std::to_string(i) + ".w", dec[i].w});
            out.push_back({p + ".dec" + std::to_string(i) + ".b", dec[i].b});
        }
        out.push_back({p + ".head.w", head.w});
        out.push_back({p + ".head.b", head.b});
    }
};

template <typename T>
Var<T> extract_illumination(const Var<T>& img, const ExtractorWeights<T>& w) {
    int H = img.value().dim(1), W = img.value().dim(2);
    int m = 1 << w.depth;
    if (H % m != 0 || W % m != 0)
        throw std::invalid_argument("extract_illumination: dims must be divisible by " +
                                    std::to_string(m));
    const T slope = T(0.1);
    std::vector<Var<T>> skips;
    Var<T> h = img;
    for (int i = 0; i < w.depth; ++i) {
        h = leaky_relu(apply_conv3(h, w.enc_a[static_cast<size_t>(i)]), slope);
        h = leaky_relu(apply_conv3(h, w.enc_b[static_cast<size_t>(i)]), slope);
        skips.push_back(h);
        h = avg_pool(h, 2);
    }
    h = leaky_relu(apply_conv3(h, w.bott), slope);
    for (int i = w.depth - 1; i >= 0; --i) {
        const Var<T>& skip = skips[static_cast<size_t>(i)];
        h = upsample_bilinear(h, skip.value().dim(1), skip.value().dim(2));
        h = concat_channels(std::vector<Var<T>>{h, skip});
        h = leaky_relu(apply_conv3(h, w.dec[static_cast<size_t>(w.depth - 1 - i)]), slope);
    }
    Var<T> z = apply_conv3(h, w.head);
    // sigmoid rescaled into [eps, 1]
    return add_scalar(mul_scalar(sigmoid(z), T(1) - w.eps), w.eps);
}

// I / max(L, floor), the illumination broadcast over channels when single.
template <typename T>
Var<T> brighten(const Var<T>& img, const Var<T>& lum, T floor_val) {
    Var<T> lc = clamp_min(lum, floor_val);
    if (lc.value().dim(0) == 1 && img.value().dim(0) != 1)
        lc = broadcast_channels(lc, img.value().dim(0));
    return div(img, lc);
}

// 1 - (1-I)/max(L, floor). Written as the literal inversion sandwich so the
// brighten/darken duality holds bitwise, not just analytically.
template <typename T>
Var<T> darken(const Var<T>& img, const Var<T>& lum, T floor_val) {
    return rsub_scalar(T(1), brighten(rsub_scalar(T(1), img), lum, floor_val));
}

// Pseudo-normal generator g(F_B, F_D, I_x): per-input 1x1 lifts (tied to the
// attention value branches when the config shares them), then three 3x3 convs
// and a residual from the input image.
template <typename T>
struct GeneratorWeights {
    MatP<T> lift_b, lift_d, lift_i;  // (d,3); possibly shared Vars
    ConvP<T> c1, c2, c3;
    bool owns_lifts = true;

    void init_lifts(int d, std::mt19937& g) {
        lift_b = {init::kaiming_mat<T>(d, 3, g), init::zeros<T>({d})};
        lift_d = {init::kaiming_mat<T>(d, 3, g), init::zeros<T>({d})};
        lift_i = {init::kaiming_mat<T>(d, 3, g), init::zeros<T>({d})};
        owns_lifts = true;
    }
    void init_trunk(int d, int width, std::mt19937& g) {
        c1 = {init::kaiming_conv<T>(width, 3 * d, 3, g), init::zeros<T>({width})};
        c2 = {init::kaiming_conv<T>(width, width, 3, g), init::zeros<T>({width})};
        c3 = {init::kaiming_conv<T>(3, width, 3, g), init::zeros<T>({3})};
    }
    void collect(const std::string& p, std::vector<NamedParam<T>>& out) {
        if (owns_lifts) {
            out.push_back({p + ".lift_b.w", lift_b.w});
            out.push_back({p + ".lift_b.b", lift_b.b});
            out.push_back({p + ".lift_d.w", lift_d.w});
            out.push_back({p + ".lift_d.b", lift_d.b});
            out.push_back({p + ".lift_i.w", lift_i.w});
            out.push_back({p + ".lift_i.b", lift_i.b});
        }
        out.push_back({p + ".c1.w", c1.w});
        out.push_back({p + ".c1.b", c1.b});
        out.push_back({p + ".c2.w", c2.w});
        out.push_back({p + ".c2.b", c2.b});
        out.push_back({p + ".c3.w", c3.w});
        out.push_back({p + ".c3.b", c3.b});
    }
};

template <typename T>
Var<T> generate_pseudo_normal(const Var<T>& fb, const Var<T>& fd, const Var<T>& img,
                              const GeneratorWeights<T>& w) {
    const T slope = T(0.1);
    Var<T> zb = conv1x1(fb, w.lift_b);
    Var<T> zd = conv1x1(fd, w.lift_d);
    Var<T> zi = conv1x1(img, w.lift_i);
    Var<T> h = concat_channels(std::vector<Var<T>>{zb, zd, zi});
    h = leaky_relu(apply_conv3(h, w.c1), slope);
    h = leaky_relu(apply_conv3(h, w.c2), slope);
    return add(apply_conv3(h, w.c3), img);
}

}  // namespace colorshift
