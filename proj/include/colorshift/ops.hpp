#pragma once

#include <algorithm>
#include <cmath>

#include "colorshift/autograd.hpp"

namespace colorshift {

namespace detail {
template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.value().shape) + " vs " +
                                    shape_str(b.value().shape));
}
}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "add");
    Tensor<T> out = a.value();
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.value().v[i];
    auto *an = a.node(), *bn = b.node();
    return Var<T>::make(std::move(out), {a, b}, [an, bn](const Tensor<T>& g) {
        Var<T>::add_grad(an, g);
        Var<T>::add_grad(bn, g);
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "sub");
    Tensor<T> out = a.value();
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.value().v[i];
    auto *an = a.node(), *bn = b.node();
    return Var<T>::make(std::move(out), {a, b}, [an, bn](const Tensor<T>& g) {
        Var<T>::add_grad(an, g);
        if (bn->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i) bn->grad.v[i] -= g.v[i];
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "mul");
    Tensor<T> out = a.value();
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.value().v[i];
    auto *an = a.node(), *bn = b.node();
    return Var<T>::make(std::move(out), {a, b}, [an, bn](const Tensor<T>& g) {
        if (an->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i) an->grad.v[i] += g.v[i] * bn->value.v[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i) bn->grad.v[i] += g.v[i] * an->value.v[i];
    });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "div");
    Tensor<T> out = a.value();
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] /= b.value().v[i];
    auto *an = a.node(), *bn = b.node();
    return Var<T>::make(std::move(out), {a, b}, [an, bn](const Tensor<T>& g) {
        if (an->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i) an->grad.v[i] += g.v[i] / bn->value.v[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i) {
                T bv = bn->value.v[i];
                bn->grad.v[i] -= g.v[i] * an->value.v[i] / (bv * bv);
            }
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
    Tensor<T> out = a.value();
    for (auto& x : out.v) x += s;
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a},
                        [an](const Tensor<T>& g) { Var<T>::add_grad(an, g); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T s) {
    Tensor<T> out = a.value();
    for (auto& x : out.v) x *= s;
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an, s](const Tensor<T>& g) {
        if (an->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i) an->grad.v[i] += g.v[i] * s;
    });
}

// s - a
template <typename T>
Var<T> rsub_scalar(T s, const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& x : out.v) x = s - x;
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an](const Tensor<T>& g) {
        if (an->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i) an->grad.v[i] -= g.v[i];
    });
}

template <typename T>
Var<T> clamp_min(const Var<T>& a, T lo) {
    Tensor<T> out = a.value();
    for (auto& x : out.v) x = std::max(x, lo);
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an, lo](const Tensor<T>& g) {
        if (an->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i)
                if (an->value.v[i] > lo) an->grad.v[i] += g.v[i];
    });
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
    Tensor<T> out = a.value();
    for (auto& x : out.v) x = std::min(std::max(x, lo), hi);
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an, lo, hi](const Tensor<T>& g) {
        if (an->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i) {
                T x = an->value.v[i];
                if (x > lo && x < hi) an->grad.v[i] += g.v[i];
            }
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& x : out.v) x = T(1) / (T(1) + std::exp(-x));
    Tensor<T> saved = out;
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an, saved](const Tensor<T>& g) {
        if (an->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i) {
                T y = saved.v[i];
                an->grad.v[i] += g.v[i] * y * (T(1) - y);
            }
    });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
    Tensor<T> out = a.value();
    for (auto& x : out.v) x = x > T(0) ? x : slope * x;
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an, slope](const Tensor<T>& g) {
        if (an->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i)
                an->grad.v[i] += g.v[i] * (an->value.v[i] > T(0) ? T(1) : slope);
    });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& x : out.v) x = std::fabs(x);
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an](const Tensor<T>& g) {
        if (an->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i) {
                T x = an->value.v[i];
                an->grad.v[i] += x > T(0) ? g.v[i] : (x < T(0) ? -g.v[i] : T(0));
            }
    });
}

template <typename T>
Var<T> square(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& x : out.v) x = x * x;
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an](const Tensor<T>& g) {
        if (an->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i)
                an->grad.v[i] += T(2) * an->value.v[i] * g.v[i];
    });
}

template <typename T>
Var<T> sqrt(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& x : out.v) x = std::sqrt(x);
    Tensor<T> saved = out;
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an, saved](const Tensor<T>& g) {
        if (an->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i)
                an->grad.v[i] += g.v[i] * T(0.5) / std::max(saved.v[i], T(1e-20));
    });
}

// ------------------------------------------------------------ shape plumbing

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<int> shape) {
    if (Tensor<T>::numel_of(shape) != a.value().numel())
        throw std::invalid_argument("reshape: numel mismatch");
    Tensor<T> out(shape);
    out.v = a.value().v;
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an](const Tensor<T>& g) {
        if (an->requires_grad)
            for (size_t i = 0; i < g.v.size(); ++i) an->grad.v[i] += g.v[i];
    });
}

// (1,H,W) -> (c,H,W)
template <typename T>
Var<T> broadcast_channels(const Var<T>& a, int c) {
    const auto& in = a.value();
    if (in.ndim() != 3 || in.dim(0) != 1)
        throw std::invalid_argument("broadcast_channels expects (1,H,W)");
    int H = in.dim(1), W = in.dim(2);
    Tensor<T> out({c, H, W});
    size_t plane = static_cast<size_t>(H) * W;
    for (int ch = 0; ch < c; ++ch)
        std::copy(in.v.begin(), in.v.end(), out.v.begin() + ch * plane);
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an, c, plane](const Tensor<T>& g) {
        if (!an->requires_grad) return;
        for (int ch = 0; ch < c; ++ch)
            for (size_t i = 0; i < plane; ++i) an->grad.v[i] += g.v[ch * plane + i];
    });
}

// (C,H,W) -> (1,H,W)
template <typename T>
Var<T> sum_channels(const Var<T>& a) {
    const auto& in = a.value();
    int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    Tensor<T> out({1, H, W});
    size_t plane = static_cast<size_t>(H) * W;
    for (int c = 0; c < C; ++c)
        for (size_t i = 0; i < plane; ++i) out.v[i] += in.v[c * plane + i];
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an, C, plane](const Tensor<T>& g) {
        if (!an->requires_grad) return;
        for (int c = 0; c < C; ++c)
            for (size_t i = 0; i < plane; ++i) an->grad.v[c * plane + i] += g.v[i];
    });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: empty");
    int H = parts[0].value().dim(1), W = parts[0].value().dim(2), C = 0;
    for (const auto& p : parts) {
        if (p.value().ndim() != 3 || p.value().dim(1) != H || p.value().dim(2) != W)
            throw std::invalid_argument("concat_channels: spatial mismatch");
        C += p.value().dim(0);
    }
    Tensor<T> out({C, H, W});
    size_t off = 0;
    std::vector<typename Var<T>::Node*> nodes;
    std::vector<size_t> sizes;
    for (const auto& p : parts) {
        std::copy(p.value().v.begin(), p.value().v.end(), out.v.begin() + off);
        off += p.value().v.size();
        nodes.push_back(p.node());
        sizes.push_back(p.value().v.size());
    }
    return Var<T>::make(std::move(out), parts, [nodes, sizes](const Tensor<T>& g) {
        size_t off = 0;
        for (size_t k = 0; k < nodes.size(); ++k) {
            if (nodes[k]->requires_grad)
                for (size_t i = 0; i < sizes[k]; ++i) nodes[k]->grad.v[i] += g.v[off + i];
            off += sizes[k];
        }
    });
}

template <typename T>
Var<T> crop_spatial(const Var<T>& a, int y0, int x0, int h, int w) {
    const auto& in = a.value();
    int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    if (y0 < 0 || x0 < 0 || y0 + h > H || x0 + w > W)
        throw std::invalid_argument("crop_spatial: window out of range");
    Tensor<T> out({C, h, w});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = in.at(c, y0 + y, x0 + x);
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an, y0, x0, h, w, C](const Tensor<T>& g) {
        if (!an->requires_grad) return;
        int H = an->value.dim(1), W = an->value.dim(2);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    an->grad.v[(static_cast<size_t>(c) * H + y0 + y) * W + x0 + x] +=
                        g.at(c, y, x);
    });
}

// ------------------------------------------------------------------ reduces

template <typename T>
Var<T> sum_all(const Var<T>& a) {
    T s = 0;
    for (T x : a.value().v) s += x;
    Tensor<T> out({1});
    out.v[0] = s;
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an](const Tensor<T>& g) {
        if (an->requires_grad)
            for (auto& x : an->grad.v) x += g.v[0];
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
    T s = 0;
    for (T x : a.value().v) s += x;
    T n = static_cast<T>(a.value().numel());
    Tensor<T> out({1});
    out.v[0] = s / n;
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an, n](const Tensor<T>& g) {
        if (an->requires_grad) {
            T gi = g.v[0] / n;
            for (auto& x : an->grad.v) x += gi;
        }
    });
}

// -------------------------------------------------------------- convolution

// Direct stride-1 convolution with zero padding. x:(Cin,H,W) w:(Cout,Cin,k,k)
// b:(Cout) optional (pass undefined Var to omit). Inner loops run along the
// contiguous width axis so the compiler can vectorize them.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int pad) {
    const auto& xv = x.value();
    const auto& wv = w.value();
    if (xv.ndim() != 3 || wv.ndim() != 4) throw std::invalid_argument("conv2d: bad ranks");
    int Cin = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    int Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    if (wv.dim(1) != Cin) throw std::invalid_argument("conv2d: channel mismatch");
    int Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: output would be empty");

    Tensor<T> out({Cout, Ho, Wo});
    const bool has_bias = b.defined();
    for (int co = 0; co < Cout; ++co) {
        T bias = has_bias ? b.value().v[co] : T(0);
        T* oc = out.data() + static_cast<size_t>(co) * Ho * Wo;
        std::fill(oc, oc + static_cast<size_t>(Ho) * Wo, bias);
        for (int ci = 0; ci < Cin; ++ci) {
            const T* xc = xv.data() + static_cast<size_t>(ci) * H * W;
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    T wk = wv.v[((static_cast<size_t>(co) * Cin + ci) * kh + ky) * kw + kx];
                    int xlo = std::max(0, pad - kx), xhi = std::min(Wo, W + pad - kx);
                    for (int y = 0; y < Ho; ++y) {
                        int iy = y + ky - pad;
                        if (iy < 0 || iy >= H) continue;
                        const T* xr = xc + static_cast<size_t>(iy) * W + (xlo + kx - pad);
                        T* orow = oc + static_cast<size_t>(y) * Wo + xlo;
                        for (int i = 0; i < xhi - xlo; ++i) orow[i] += wk * xr[i];
                    }
                }
        }
    }

    auto *xn = x.node(), *wn = w.node();
    auto* bn = has_bias ? b.node() : nullptr;
    std::vector<Var<T>> parents = has_bias ? std::vector<Var<T>>{x, w, b}
                                           : std::vector<Var<T>>{x, w};
    return Var<T>::make(
        std::move(out), parents,
        [xn, wn, bn, Cin, Cout, H, W, Ho, Wo, kh, kw, pad](const Tensor<T>& g) {
            if (bn && bn->requires_grad) {
                for (int co = 0; co < Cout; ++co) {
                    T s = 0;
                    const T* gc = g.data() + static_cast<size_t>(co) * Ho * Wo;
                    for (size_t i = 0; i < static_cast<size_t>(Ho) * Wo; ++i) s += gc[i];
                    bn->grad.v[co] += s;
                }
            }
            if (wn->requires_grad) {
                for (int co = 0; co < Cout; ++co) {
                    const T* gc = g.data() + static_cast<size_t>(co) * Ho * Wo;
                    for (int ci = 0; ci < Cin; ++ci) {
                        const T* xc = xn->value.data() + static_cast<size_t>(ci) * H * W;
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                int xlo = std::max(0, pad - kx), xhi = std::min(Wo, W + pad - kx);
                                // independent partial sums: fixed summation
                                // order, but the FMAs pipeline/vectorize
                                T part[8] = {};
                                for (int y = 0; y < Ho; ++y) {
                                    int iy = y + ky - pad;
                                    if (iy < 0 || iy >= H) continue;
                                    const T* xr = xc + static_cast<size_t>(iy) * W + (xlo + kx - pad);
                                    const T* gr = gc + static_cast<size_t>(y) * Wo + xlo;
                                    int len = xhi - xlo, i = 0;
                                    for (; i + 8 <= len; i += 8)
                                        for (int k = 0; k < 8; ++k)
                                            part[k] += gr[i + k] * xr[i + k];
                                    for (; i < len; ++i) part[i & 7] += gr[i] * xr[i];
                                }
                                T acc = 0;
                                for (T p : part) acc += p;
                                wn->grad.v[((static_cast<size_t>(co) * Cin + ci) * kh + ky) * kw +
                                           kx] += acc;
                            }
                    }
                }
            }
            if (xn->requires_grad) {
                for (int co = 0; co < Cout; ++co) {
                    const T* gc = g.data() + static_cast<size_t>(co) * Ho * Wo;
                    for (int ci = 0; ci < Cin; ++ci) {
                        T* gxc = xn->grad.data() + static_cast<size_t>(ci) * H * W;
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                T wk = wn->value
                                           .v[((static_cast<size_t>(co) * Cin + ci) * kh + ky) * kw +
                                              kx];
                                int xlo = std::max(0, pad - kx), xhi = std::min(Wo, W + pad - kx);
                                for (int y = 0; y < Ho; ++y) {
                                    int iy = y + ky - pad;
                                    if (iy < 0 || iy >= H) continue;
                                    T* gxr = gxc + static_cast<size_t>(iy) * W + (xlo + kx - pad);
                                    const T* gr = gc + static_cast<size_t>(y) * Wo + xlo;
                                    for (int i = 0; i < xhi - xlo; ++i) gxr[i] += wk * gr[i];
                                }
                            }
                    }
                }
            }
        });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, int pad) {
    return conv2d(x, w, Var<T>(), pad);
}

// Fixed-kernel per-channel correlation, valid windows only. Used by the SSIM
// windowing; the kernel is a constant (no gradient).
template <typename T>
Var<T> depthwise_conv_valid(const Var<T>& x, const Tensor<T>& kern) {
    const auto& xv = x.value();
    int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    int kh = kern.dim(0), kw = kern.dim(1);
    if (H < kh || W < kw) throw std::invalid_argument("depthwise_conv_valid: image smaller than window");
    int Ho = H - kh + 1, Wo = W - kw + 1;
    Tensor<T> out({C, Ho, Wo});
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                T wk = kern.v[static_cast<size_t>(ky) * kw + kx];
                for (int y = 0; y < Ho; ++y) {
                    const T* xr = xv.data() + (static_cast<size_t>(c) * H + y + ky) * W + kx;
                    T* orow = out.data() + (static_cast<size_t>(c) * Ho + y) * Wo;
                    for (int i = 0; i < Wo; ++i) orow[i] += wk * xr[i];
                }
            }
    auto* xn = x.node();
    return Var<T>::make(std::move(out), {x}, [xn, kern, C, H, W, Ho, Wo, kh, kw](const Tensor<T>& g) {
        if (!xn->requires_grad) return;
        for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    T wk = kern.v[static_cast<size_t>(ky) * kw + kx];
                    for (int y = 0; y < Ho; ++y) {
                        T* gxr = xn->grad.data() + (static_cast<size_t>(c) * H + y + ky) * W + kx;
                        const T* gr = g.data() + (static_cast<size_t>(c) * Ho + y) * Wo;
                        for (int i = 0; i < Wo; ++i) gxr[i] += wk * gr[i];
                    }
                }
    });
}

// --------------------------------------------------------- pooling / resize

// Average pooling with stride = kernel = s, ceil mode; edge windows are
// averaged over the pixels they actually cover.
template <typename T>
Var<T> avg_pool(const Var<T>& x, int s) {
    const auto& xv = x.value();
    int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    int Ho = (H + s - 1) / s, Wo = (W + s - 1) / s;
    Tensor<T> out({C, Ho, Wo});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < Ho; ++y)
            for (int x2 = 0; x2 < Wo; ++x2) {
                int y1 = std::min(y * s + s, H), x1 = std::min(x2 * s + s, W);
                T acc = 0;
                for (int iy = y * s; iy < y1; ++iy)
                    for (int ix = x2 * s; ix < x1; ++ix) acc += xv.at(c, iy, ix);
                out.at(c, y, x2) = acc / static_cast<T>((y1 - y * s) * (x1 - x2 * s));
            }
    auto* xn = x.node();
    return Var<T>::make(std::move(out), {x}, [xn, s, C, H, W, Ho, Wo](const Tensor<T>& g) {
        if (!xn->requires_grad) return;
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < Ho; ++y)
                for (int x2 = 0; x2 < Wo; ++x2) {
                    int y1 = std::min(y * s + s, H), x1 = std::min(x2 * s + s, W);
                    T gi = g.at(c, y, x2) / static_cast<T>((y1 - y * s) * (x1 - x2 * s));
                    for (int iy = y * s; iy < y1; ++iy)
                        for (int ix = x2 * s; ix < x1; ++ix)
                            xn->grad.v[(static_cast<size_t>(c) * H + iy) * W + ix] += gi;
                }
    });
}

// Bilinear resize, half-pixel centers, border-clamped corners.
template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, int oh, int ow) {
    const auto& xv = x.value();
    int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    Tensor<T> out({C, oh, ow});
    double sy = static_cast<double>(H) / oh, sx = static_cast<double>(W) / ow;
    // Corner indices and weights shared across channels.
    std::vector<int> y0s(oh), x0s(ow);
    std::vector<T> wys(oh), wxs(ow);
    for (int y = 0; y < oh; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::max(0.0, std::min(fy, static_cast<double>(H - 1)));
        int y0 = std::min(static_cast<int>(fy), H - 1);
        y0s[y] = y0;
        wys[y] = static_cast<T>(fy - y0);
    }
    for (int x2 = 0; x2 < ow; ++x2) {
        double fx = (x2 + 0.5) * sx - 0.5;
        fx = std::max(0.0, std::min(fx, static_cast<double>(W - 1)));
        int x0 = std::min(static_cast<int>(fx), W - 1);
        x0s[x2] = x0;
        wxs[x2] = static_cast<T>(fx - x0);
    }
    auto ix = [&](int i, int n) { return std::min(i, n - 1); };
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < oh; ++y) {
            int y0 = y0s[y], y1 = ix(y0 + 1, H);
            T wy = wys[y];
            for (int x2 = 0; x2 < ow; ++x2) {
                int x0 = x0s[x2], x1 = ix(x0 + 1, W);
                T wx = wxs[x2];
                out.at(c, y, x2) = (T(1) - wy) * ((T(1) - wx) * xv.at(c, y0, x0) + wx * xv.at(c, y0, x1)) +
                                   wy * ((T(1) - wx) * xv.at(c, y1, x0) + wx * xv.at(c, y1, x1));
            }
        }
    auto* xn = x.node();
    return Var<T>::make(std::move(out), {x},
                        [xn, C, H, W, oh, ow, y0s, x0s, wys, wxs](const Tensor<T>& g) {
                            if (!xn->requires_grad) return;
                            auto ix = [&](int i, int n) { return std::min(i, n - 1); };
                            for (int c = 0; c < C; ++c)
                                for (int y = 0; y < oh; ++y) {
                                    int y0 = y0s[y], y1 = ix(y0 + 1, H);
                                    T wy = wys[y];
                                    for (int x2 = 0; x2 < ow; ++x2) {
                                        int x0 = x0s[x2], x1 = ix(x0 + 1, W);
                                        T wx = wxs[x2];
                                        T gi = g.at(c, y, x2);
                                        auto& gr = xn->grad;
                                        gr.v[(static_cast<size_t>(c) * H + y0) * W + x0] +=
                                            gi * (T(1) - wy) * (T(1) - wx);
                                        gr.v[(static_cast<size_t>(c) * H + y0) * W + x1] +=
                                            gi * (T(1) - wy) * wx;
                                        gr.v[(static_cast<size_t>(c) * H + y1) * W + x0] +=
                                            gi * wy * (T(1) - wx);
                                        gr.v[(static_cast<size_t>(c) * H + y1) * W + x1] += gi * wy * wx;
                                    }
                                }
                        });
}

// ------------------------------------------------------------ linear algebra

namespace detail {
// C(m,n) += op(A)·op(B); A,B given with their storage shapes.
template <typename T>
void gemm_acc(bool ta, bool tb, int m, int n, int k, const T* A, int lda, const T* B, int ldb,
              T* C, int ldc) {
    for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
            T a = ta ? A[static_cast<size_t>(l) * lda + i] : A[static_cast<size_t>(i) * lda + l];
            const T* brow = tb ? nullptr : B + static_cast<size_t>(l) * ldb;
            T* crow = C + static_cast<size_t>(i) * ldc;
            if (!tb) {
                for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
            } else {
                for (int j = 0; j < n; ++j) crow[j] += a * B[static_cast<size_t>(j) * ldb + l];
            }
        }
}
}  // namespace detail

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta = false, bool tb = false) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.ndim() != 2 || bv.ndim() != 2) throw std::invalid_argument("matmul: rank != 2");
    int m = ta ? av.dim(1) : av.dim(0);
    int k = ta ? av.dim(0) : av.dim(1);
    int kb = tb ? bv.dim(1) : bv.dim(0);
    int n = tb ? bv.dim(0) : bv.dim(1);
    if (k != kb) throw std::invalid_argument("matmul: inner dim mismatch");
    Tensor<T> out({m, n});
    detail::gemm_acc(ta, tb, m, n, k, av.data(), av.dim(1), bv.data(), bv.dim(1), out.data(), n);
    auto *an = a.node(), *bn = b.node();
    return Var<T>::make(std::move(out), {a, b}, [an, bn, ta, tb, m, n, k](const Tensor<T>& g) {
        const auto& av = an->value;
        const auto& bv = bn->value;
        if (an->requires_grad) {
            // dA = dC·op(B)^T (or its transpose when A is transposed in the op)
            if (!ta)
                detail::gemm_acc(false, !tb, m, k, n, g.data(), n, bv.data(), bv.dim(1),
                                 an->grad.data(), an->grad.dim(1));
            else
                detail::gemm_acc(tb, true, k, m, n, bv.data(), bv.dim(1), g.data(), n,
                                 an->grad.data(), an->grad.dim(1));
        }
        if (bn->requires_grad) {
            if (!tb)
                detail::gemm_acc(!ta, false, k, n, m, av.data(), av.dim(1), g.data(), n,
                                 bn->grad.data(), bn->grad.dim(1));
            else
                detail::gemm_acc(true, ta, n, k, m, g.data(), n, av.data(), av.dim(1),
                                 bn->grad.data(), bn->grad.dim(1));
        }
    });
}

template <typename T>
Var<T> transpose2d(const Var<T>& a) {
    const auto& av = a.value();
    int m = av.dim(0), n = av.dim(1);
    Tensor<T> out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at2(j, i) = av.at2(i, j);
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an, m, n](const Tensor<T>& g) {
        if (!an->requires_grad) return;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) an->grad.at2(i, j) += g.at2(j, i);
    });
}

// out[r][c] = x[r][c] + bias[r]
template <typename T>
Var<T> add_row_bias(const Var<T>& x, const Var<T>& bias) {
    const auto& xv = x.value();
    int m = xv.dim(0), n = xv.dim(1);
    if (bias.value().numel() != m) throw std::invalid_argument("add_row_bias: bias size");
    Tensor<T> out = xv;
    for (int r = 0; r < m; ++r) {
        T bv = bias.value().v[r];
        for (int c = 0; c < n; ++c) out.v[static_cast<size_t>(r) * n + c] += bv;
    }
    auto *xn = x.node(), *bn = bias.node();
    return Var<T>::make(std::move(out), {x, bias}, [xn, bn, m, n](const Tensor<T>& g) {
        Var<T>::add_grad(xn, g);
        if (bn->requires_grad)
            for (int r = 0; r < m; ++r) {
                T s = 0;
                for (int c = 0; c < n; ++c) s += g.v[static_cast<size_t>(r) * n + c];
                bn->grad.v[r] += s;
            }
    });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& a) {
    const auto& av = a.value();
    int m = av.dim(0), n = av.dim(1);
    Tensor<T> out({m, n});
    for (int i = 0; i < m; ++i) {
        const T* r = av.data() + static_cast<size_t>(i) * n;
        T* o = out.data() + static_cast<size_t>(i) * n;
        T mx = r[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, r[j]);
        T s = 0;
        for (int j = 0; j < n; ++j) {
            o[j] = std::exp(r[j] - mx);
            s += o[j];
        }
        for (int j = 0; j < n; ++j) o[j] /= s;
    }
    Tensor<T> saved = out;
    auto* an = a.node();
    return Var<T>::make(std::move(out), {a}, [an, saved, m, n](const Tensor<T>& g) {
        if (!an->requires_grad) return;
        for (int i = 0; i < m; ++i) {
            const T* y = saved.data() + static_cast<size_t>(i) * n;
            const T* gr = g.data() + static_cast<size_t>(i) * n;
            T dot = 0;
            for (int j = 0; j < n; ++j) dot += gr[j] * y[j];
            T* gx = an->grad.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) gx[j] += (gr[j] - dot) * y[j];
        }
    });
}

// Joins 2-D (d, Mi) matrices along columns into (d, sum Mi).
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: empty input");
    int d = xs[0].value().dim(0);
    int total = 0;
    for (const auto& x : xs) {
        if (x.value().ndim() != 2 || x.value().dim(0) != d)
            throw std::invalid_argument("concat_cols: row mismatch");
        total += x.value().dim(1);
    }
    Tensor<T> out({d, total});
    int off = 0;
    for (const auto& x : xs) {
        int M = x.value().dim(1);
        for (int r = 0; r < d; ++r)
            std::copy_n(x.value().data() + static_cast<size_t>(r) * M, M,
                        out.data() + static_cast<size_t>(r) * total + off);
        off += M;
    }
    std::vector<typename Var<T>::Node*> nodes;
    std::vector<int> widths;
    for (const auto& x : xs) {
        nodes.push_back(x.node());
        widths.push_back(x.value().dim(1));
    }
    return Var<T>::make(std::move(out), xs, [nodes, widths, d, total](const Tensor<T>& g) {
        int off = 0;
        for (size_t i = 0; i < nodes.size(); ++i) {
            int M = widths[i];
            if (nodes[i]->requires_grad)
                for (int r = 0; r < d; ++r) {
                    const T* gr = g.data() + static_cast<size_t>(r) * total + off;
                    T* dst = nodes[i]->grad.data() + static_cast<size_t>(r) * M;
                    for (int j = 0; j < M; ++j) dst[j] += gr[j];
                }
            off += M;
        }
    });
}

// Columns [c0, c0+len) of a 2-D matrix.
template <typename T>
Var<T> slice_cols(const Var<T>& x, int c0, int len) {
    const auto& xv = x.value();
    if (xv.ndim() != 2) throw std::invalid_argument("slice_cols: want 2-D");
    int d = xv.dim(0), M = xv.dim(1);
    if (c0 < 0 || len < 0 || c0 + len > M) throw std::invalid_argument("slice_cols: bad range");
    Tensor<T> out({d, len});
    for (int r = 0; r < d; ++r)
        std::copy_n(xv.data() + static_cast<size_t>(r) * M + c0, len,
                    out.data() + static_cast<size_t>(r) * len);
    auto* xn = x.node();
    return Var<T>::make(std::move(out), {x}, [xn, c0, len, d, M](const Tensor<T>& g) {
        if (!xn->requires_grad) return;
        for (int r = 0; r < d; ++r) {
            const T* gr = g.data() + static_cast<size_t>(r) * len;
            T* dst = xn->grad.data() + static_cast<size_t>(r) * M + c0;
            for (int j = 0; j < len; ++j) dst[j] += gr[j];
        }
    });
}

// -------------------------------------------------------- batch normalization

template <typename T>
struct BatchNormState {
    Tensor<T> running_mean;  // (d)
    Tensor<T> running_var;   // (d)
    explicit BatchNormState(int d = 0)
        : running_mean({d}), running_var({d}) {
        for (auto& x : running_var.v) x = T(1);
    }
};

// Per-channel normalization of a (d,M) token map over the token axis.
// Training mode uses batch statistics and updates the running ones
// (unbiased variance, like the usual framework convention).
template <typename T>
Var<T> batch_norm_tokens(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                         BatchNormState<T>& state, bool training, T momentum = T(0.1),
                         T eps = T(1e-5)) {
    const auto& xv = x.value();
    int d = xv.dim(0), M = xv.dim(1);
    Tensor<T> out({d, M});
    Tensor<T> mu({d}), ivstd({d});
    if (training) {
        for (int c = 0; c < d; ++c) {
            const T* r = xv.data() + static_cast<size_t>(c) * M;
            T m = 0;
            for (int j = 0; j < M; ++j) m += r[j];
            m /= static_cast<T>(M);
            T var = 0;
            for (int j = 0; j < M; ++j) var += (r[j] - m) * (r[j] - m);
            var /= static_cast<T>(M);
            mu.v[c] = m;
            ivstd.v[c] = T(1) / std::sqrt(var + eps);
            T unbiased = M > 1 ? var * static_cast<T>(M) / static_cast<T>(M - 1) : var;
            state.running_mean.v[c] = (T(1) - momentum) * state.running_mean.v[c] + momentum * m;
            state.running_var.v[c] = (T(1) - momentum) * state.running_var.v[c] + momentum * unbiased;
        }
    } else {
        for (int c = 0; c < d; ++c) {
            mu.v[c] = state.running_mean.v[c];
            ivstd.v[c] = T(1) / std::sqrt(state.running_var.v[c] + eps);
        }
    }
    Tensor<T> xhat({d, M});
    for (int c = 0; c < d; ++c) {
        T m = mu.v[c], iv = ivstd.v[c], gsc = gamma.value().v[c], bsc = beta.value().v[c];
        const T* r = xv.data() + static_cast<size_t>(c) * M;
        T* xh = xhat.data() + static_cast<size_t>(c) * M;
        T* o = out.data() + static_cast<size_t>(c) * M;
        for (int j = 0; j < M; ++j) {
            xh[j] = (r[j] - m) * iv;
            o[j] = gsc * xh[j] + bsc;
        }
    }
    auto *xn = x.node(), *gn = gamma.node(), *bn = beta.node();
    return Var<T>::make(
        std::move(out), {x, gamma, beta},
        [xn, gn, bn, xhat, ivstd, d, M, training](const Tensor<T>& g) {
            for (int c = 0; c < d; ++c) {
                const T* gr = g.data() + static_cast<size_t>(c) * M;
                const T* xh = xhat.data() + static_cast<size_t>(c) * M;
                T sg = 0, sgx = 0;
                for (int j = 0; j < M; ++j) {
                    sg += gr[j];
                    sgx += gr[j] * xh[j];
                }
                if (gn->requires_grad) gn->grad.v[c] += sgx;
                if (bn->requires_grad) bn->grad.v[c] += sg;
                if (xn->requires_grad) {
                    T gsc = gn->value.v[c], iv = ivstd.v[c];
                    T* gx = xn->grad.data() + static_cast<size_t>(c) * M;
                    if (training) {
                        T invM = T(1) / static_cast<T>(M);
                        for (int j = 0; j < M; ++j)
                            gx[j] += gsc * iv * (gr[j] - sg * invM - xh[j] * sgx * invM);
                    } else {
                        for (int j = 0; j < M; ++j) gx[j] += gsc * iv * gr[j];
                    }
                }
            }
        });
}

}  // namespace colorshift
