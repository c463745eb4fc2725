#pragma once

#include <array>

#include "colorshift/deformable.hpp"
#include "colorshift/illumination.hpp"

namespace colorshift {

// Which parts of the deformation are active. `none` degrades the whole
// module to a plain 3x3 convolution.
enum class DeformMode { None, Spatial, SpatialModulation, SpatialColor, Full };

inline DeformMode deform_mode_from_string(const std::string& s) {
    if (s == "none") return DeformMode::None;
    if (s == "spatial") return DeformMode::Spatial;
    if (s == "spatial_modulation") return DeformMode::SpatialModulation;
    if (s == "spatial_color") return DeformMode::SpatialColor;
    if (s == "full") return DeformMode::Full;
    throw std::invalid_argument("unknown deform_mode: " + s);
}

template <typename T>
struct OffsetBundle {
    Var<T> dp;  // (18,H,W)
    Var<T> dc;  // (27,H,W), undefined unless the mode carries color offsets
    Var<T> dm;  // (9,H,W),  undefined unless the mode carries modulation
};

template <typename T>
struct CoseWeights {
    ConvP<T> offset_head, color_head, modulation_head;  // over concat(F_N, F_X)
    Var<T> main_kernel;                                 // (3,3,3,3), bias-free
    DeformMode mode = DeformMode::Full;

    void init(DeformMode m, std::mt19937& g) {
        mode = m;
        main_kernel = init::kaiming_conv<T>(3, 3, 3, g);
        auto zero_head = [](int cout) {
            return ConvP<T>{init::zeros<T>({cout, 6, 3, 3}), init::zeros<T>({cout})};
        };
        if (mode != DeformMode::None) offset_head = zero_head(18);
        if (mode == DeformMode::Full || mode == DeformMode::SpatialColor)
            color_head = zero_head(27);
        if (mode == DeformMode::Full || mode == DeformMode::SpatialModulation)
            modulation_head = zero_head(9);
    }

    void collect(const std::string& p, std::vector<NamedParam<T>>& out) {
        out.push_back({p + ".kernel", main_kernel});
        if (offset_head.w.defined()) {
            out.push_back({p + ".offset.w", offset_head.w});
            out.push_back({p + ".offset.b", offset_head.b});
        }
        if (color_head.w.defined()) {
            out.push_back({p + ".color.w", color_head.w});
            out.push_back({p + ".color.b", color_head.b});
        }
        if (modulation_head.w.defined()) {
            out.push_back({p + ".modulation.w", modulation_head.w});
            out.push_back({p + ".modulation.b", modulation_head.b});
        }
    }
};

template <typename T>
OffsetBundle<T> predict_offsets(const Var<T>& fn, const Var<T>& fx, const CoseWeights<T>& w) {
    if (w.mode == DeformMode::None)
        throw std::logic_error("predict_offsets: deform_mode none has no offsets");
    if (fn.value().dim(1) != fx.value().dim(1) || fn.value().dim(2) != fx.value().dim(2))
        throw std::invalid_argument("predict_offsets: spatial mismatch");
    Var<T> cat = concat_channels(std::vector<Var<T>>{fn, fx});
    OffsetBundle<T> b;
    b.dp = apply_conv3(cat, w.offset_head);
    if (w.color_head.w.defined()) b.dc = apply_conv3(cat, w.color_head);
    if (w.modulation_head.w.defined()) b.dm = sigmoid(apply_conv3(cat, w.modulation_head));
    return b;
}

// One zero-padded bilinear read of a 3-channel map at (y,x); exact at
// in-bounds integer coordinates.
template <typename T>
std::array<T, 3> bilinear_sample_point(const Tensor<T>& feat, T y, T x) {
    auto t = detail::bilinear_taps(static_cast<double>(y), static_cast<double>(x));
    int H = feat.dim(1), W = feat.dim(2);
    std::array<T, 3> out{};
    for (int c = 0; c < 3; ++c) {
        T val, dy, dx;
        detail::bilinear_value_grad(feat.data() + static_cast<size_t>(c) * H * W, H, W, t, val,
                                    dy, dx);
        out[static_cast<size_t>(c)] = val;
    }
    return out;
}

template <typename T>
Var<T> cose_forward(const Var<T>& fn, const Var<T>& fx, const CoseWeights<T>& w) {
    if (w.mode == DeformMode::None) return conv2d(fx, w.main_kernel, 1);
    OffsetBundle<T> b = predict_offsets(fn, fx, w);
    return color_deformable_conv(fx, w.main_kernel, b.dp, b.dc, b.dm);
}

}  // namespace colorshift
