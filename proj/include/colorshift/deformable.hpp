#pragma once

#include <cmath>

#include "colorshift/ops.hpp"

namespace colorshift {

namespace detail {

// Corner data for one fractional sampling location, zero padding outside.
struct BilinearTaps {
    int y0, x0;
    double wy, wx;  // fractional parts
};

inline BilinearTaps bilinear_taps(double sy, double sx) {
    double fy = std::floor(sy), fx = std::floor(sx);
    return {static_cast<int>(fy), static_cast<int>(fx), sy - fy, sx - fx};
}

template <typename T>
inline T plane_at(const T* plane, int H, int W, int y, int x) {
    if (y < 0 || y >= H || x < 0 || x >= W) return T(0);
    return plane[static_cast<size_t>(y) * W + x];
}

// Sampled value plus derivatives wrt the (y,x) coordinate for one channel.
template <typename T>
inline void bilinear_value_grad(const T* plane, int H, int W, const BilinearTaps& t, T& val,
                                T& dval_dy, T& dval_dx) {
    T v00 = plane_at(plane, H, W, t.y0, t.x0);
    T v01 = plane_at(plane, H, W, t.y0, t.x0 + 1);
    T v10 = plane_at(plane, H, W, t.y0 + 1, t.x0);
    T v11 = plane_at(plane, H, W, t.y0 + 1, t.x0 + 1);
    T wy = static_cast<T>(t.wy), wx = static_cast<T>(t.wx);
    T top = (T(1) - wx) * v00 + wx * v01;
    T bot = (T(1) - wx) * v10 + wx * v11;
    val = (T(1) - wy) * top + wy * bot;
    dval_dy = bot - top;
    dval_dx = (T(1) - wy) * (v01 - v00) + wy * (v11 - v10);
}

template <typename T>
inline void bilinear_scatter(T* gplane, int H, int W, const BilinearTaps& t, T g) {
    T wy = static_cast<T>(t.wy), wx = static_cast<T>(t.wx);
    auto put = [&](int y, int x, T w) {
        if (y < 0 || y >= H || x < 0 || x >= W) return;
        gplane[static_cast<size_t>(y) * W + x] += g * w;
    };
    put(t.y0, t.x0, (T(1) - wy) * (T(1) - wx));
    put(t.y0, t.x0 + 1, (T(1) - wy) * wx);
    put(t.y0 + 1, t.x0, wy * (T(1) - wx));
    put(t.y0 + 1, t.x0 + 1, wy * wx);
}

}  // namespace detail

// Samples x:(C,H,W) at absolute pixel coordinates coords:(2,Ho,Wo), channel 0
// holding y and channel 1 holding x. Out-of-range reads are zero; integer
// coordinates inside the image reproduce the pixel exactly.
template <typename T>
Var<T> bilinear_sample(const Var<T>& x, const Var<T>& coords) {
    const auto& xv = x.value();
    const auto& cv = coords.value();
    if (cv.dim(0) != 2) throw std::invalid_argument("bilinear_sample: coords must be (2,Ho,Wo)");
    int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    int Ho = cv.dim(1), Wo = cv.dim(2);
    size_t np = static_cast<size_t>(Ho) * Wo;
    Tensor<T> out({C, Ho, Wo});
    for (size_t p = 0; p < np; ++p) {
        auto t = detail::bilinear_taps(cv.v[p], cv.v[np + p]);
        for (int c = 0; c < C; ++c) {
            T val, dy, dx;
            detail::bilinear_value_grad(xv.data() + static_cast<size_t>(c) * H * W, H, W, t, val,
                                        dy, dx);
            out.v[c * np + p] = val;
        }
    }
    auto *xn = x.node(), *cn = coords.node();
    return Var<T>::make(std::move(out), {x, coords}, [xn, cn, C, H, W, np](const Tensor<T>& g) {
        const auto& xv = xn->value;
        const auto& cv = cn->value;
        for (size_t p = 0; p < np; ++p) {
            auto t = detail::bilinear_taps(cv.v[p], cv.v[np + p]);
            T gy = 0, gx = 0;
            for (int c = 0; c < C; ++c) {
                T go = g.v[c * np + p];
                if (cn->requires_grad) {
                    T val, dy, dx;
                    detail::bilinear_value_grad(xv.data() + static_cast<size_t>(c) * H * W, H, W,
                                                t, val, dy, dx);
                    gy += go * dy;
                    gx += go * dx;
                }
                if (xn->requires_grad)
                    detail::bilinear_scatter(xn->grad.data() + static_cast<size_t>(c) * H * W, H,
                                             W, t, go);
            }
            if (cn->requires_grad) {
                cn->grad.v[p] += gy;
                cn->grad.v[np + p] += gx;
            }
        }
    });
}

// Deformable 3x3 convolution with per-tap color compensation and modulation:
//   y[co,p] = sum_n ( sum_ci w[co,ci,n] * x~(ci, p + r_n + dp_n(p)) + dc[n*Cout+co](p) ) * dm[n](p)
// where x~ is the zero-padded bilinear read and r_n runs over the 3x3 grid.
// dc and/or dm may be undefined Vars (treated as zero / one), which is how the
// reduced offset modes are expressed.
template <typename T>
Var<T> color_deformable_conv(const Var<T>& x, const Var<T>& w, const Var<T>& dp, const Var<T>& dc,
                             const Var<T>& dm) {
    const auto& xv = x.value();
    const auto& wv = w.value();
    const auto& dpv = dp.value();
    int Cin = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    int Cout = wv.dim(0);
    if (wv.dim(1) != Cin || wv.dim(2) != 3 || wv.dim(3) != 3)
        throw std::invalid_argument("color_deformable_conv: kernel must be (Cout,Cin,3,3)");
    if (dpv.dim(0) != 18 || dpv.dim(1) != H || dpv.dim(2) != W)
        throw std::invalid_argument("color_deformable_conv: offsets must be (18,H,W)");
    const bool has_dc = dc.defined(), has_dm = dm.defined();
    if (has_dc && dc.value().dim(0) != 9 * Cout)
        throw std::invalid_argument("color_deformable_conv: dc must be (9*Cout,H,W)");
    if (has_dm && dm.value().dim(0) != 9)
        throw std::invalid_argument("color_deformable_conv: dm must be (9,H,W)");

    size_t np = static_cast<size_t>(H) * W;
    Tensor<T> out({Cout, H, W});
    std::vector<T> s(Cin), a(Cout);
    for (int y = 0; y < H; ++y)
        for (int x2 = 0; x2 < W; ++x2) {
            size_t p = static_cast<size_t>(y) * W + x2;
            for (int n = 0; n < 9; ++n) {
                int ry = n / 3 - 1, rx = n % 3 - 1;
                double sy = y + ry + static_cast<double>(dpv.v[(2 * n) * np + p]);
                double sx = x2 + rx + static_cast<double>(dpv.v[(2 * n + 1) * np + p]);
                auto t = detail::bilinear_taps(sy, sx);
                for (int ci = 0; ci < Cin; ++ci) {
                    T val, dyy, dxx;
                    detail::bilinear_value_grad(xv.data() + static_cast<size_t>(ci) * np, H, W, t,
                                                val, dyy, dxx);
                    s[ci] = val;
                }
                T m = has_dm ? dm.value().v[static_cast<size_t>(n) * np + p] : T(1);
                for (int co = 0; co < Cout; ++co) {
                    T acc = has_dc ? dc.value().v[(static_cast<size_t>(n) * Cout + co) * np + p]
                                   : T(0);
                    const T* wr = wv.data() + (static_cast<size_t>(co) * Cin) * 9 + n;
                    for (int ci = 0; ci < Cin; ++ci) acc += wr[static_cast<size_t>(ci) * 9] * s[ci];
                    out.v[static_cast<size_t>(co) * np + p] += acc * m;
                }
            }
        }

    auto *xn = x.node(), *wn = w.node(), *dpn = dp.node();
    auto* dcn = has_dc ? dc.node() : nullptr;
    auto* dmn = has_dm ? dm.node() : nullptr;
    std::vector<Var<T>> parents{x, w, dp};
    if (has_dc) parents.push_back(dc);
    if (has_dm) parents.push_back(dm);
    return Var<T>::make(
        std::move(out), parents,
        [xn, wn, dpn, dcn, dmn, Cin, Cout, H, W, np](const Tensor<T>& g) {
            const auto& xv = xn->value;
            const auto& wv = wn->value;
            const auto& dpv = dpn->value;
            std::vector<T> s(Cin), dsy(Cin), dsx(Cin), gb(Cout), gs(Cin);
            for (int y = 0; y < H; ++y)
                for (int x2 = 0; x2 < W; ++x2) {
                    size_t p = static_cast<size_t>(y) * W + x2;
                    for (int n = 0; n < 9; ++n) {
                        int ry = n / 3 - 1, rx = n % 3 - 1;
                        double sy = y + ry + static_cast<double>(dpv.v[(2 * n) * np + p]);
                        double sx = x2 + rx + static_cast<double>(dpv.v[(2 * n + 1) * np + p]);
                        auto t = detail::bilinear_taps(sy, sx);
                        for (int ci = 0; ci < Cin; ++ci)
                            detail::bilinear_value_grad(xv.data() + static_cast<size_t>(ci) * np,
                                                        H, W, t, s[ci], dsy[ci], dsx[ci]);
                        T m = dmn ? dmn->value.v[static_cast<size_t>(n) * np + p] : T(1);
                        T gm = 0;
                        for (int co = 0; co < Cout; ++co) {
                            T go = g.v[static_cast<size_t>(co) * np + p];
                            gb[co] = go * m;
                            if (dmn && dmn->requires_grad) {
                                T acc = dcn ? dcn->value
                                                  .v[(static_cast<size_t>(n) * Cout + co) * np + p]
                                            : T(0);
                                const T* wr = wv.data() + (static_cast<size_t>(co) * Cin) * 9 + n;
                                for (int ci = 0; ci < Cin; ++ci)
                                    acc += wr[static_cast<size_t>(ci) * 9] * s[ci];
                                gm += go * acc;
                            }
                            if (dcn && dcn->requires_grad)
                                dcn->grad.v[(static_cast<size_t>(n) * Cout + co) * np + p] += gb[co];
                        }
                        if (dmn && dmn->requires_grad)
                            dmn->grad.v[static_cast<size_t>(n) * np + p] += gm;
                        // into kernel and samples
                        T gpy = 0, gpx = 0;
                        for (int ci = 0; ci < Cin; ++ci) gs[ci] = T(0);
                        for (int co = 0; co < Cout; ++co) {
                            if (gb[co] == T(0)) continue;
                            const T* wr = wv.data() + (static_cast<size_t>(co) * Cin) * 9 + n;
                            T* gwr = wn->requires_grad
                                         ? wn->grad.data() + (static_cast<size_t>(co) * Cin) * 9 + n
                                         : nullptr;
                            for (int ci = 0; ci < Cin; ++ci) {
                                if (gwr) gwr[static_cast<size_t>(ci) * 9] += gb[co] * s[ci];
                                gs[ci] += gb[co] * wr[static_cast<size_t>(ci) * 9];
                            }
                        }
                        if (xn->requires_grad || dpn->requires_grad) {
                            for (int ci = 0; ci < Cin; ++ci) {
                                if (dpn->requires_grad) {
                                    gpy += gs[ci] * dsy[ci];
                                    gpx += gs[ci] * dsx[ci];
                                }
                                if (xn->requires_grad && gs[ci] != T(0))
                                    detail::bilinear_scatter(
                                        xn->grad.data() + static_cast<size_t>(ci) * np, H, W, t,
                                        gs[ci]);
                            }
                            if (dpn->requires_grad) {
                                dpn->grad.v[(2 * n) * np + p] += gpy;
                                dpn->grad.v[(2 * n + 1) * np + p] += gpx;
                            }
                        }
                    }
                }
        });
}

}  // namespace colorshift
