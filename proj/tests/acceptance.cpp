// End-to-end acceptance gate. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Criteria are self-contained and re-verify the
// library against naive scalar references, so this binary is the one to run
// after any substantive change. Budget: the learning checks (7) dominate and
// keep the whole run under ~45 minutes on one core.
#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "colorshift/analysis.hpp"
#include "colorshift/config.hpp"
#include "colorshift/fpmode.hpp"
#include "colorshift/model.hpp"
#include "colorshift/trainer.hpp"

using namespace colorshift;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int n, bool ok, const std::string& detail) {
    std::printf("criterion %2d: %s  %s\n", n, ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double now_s() {
    using clk = std::chrono::steady_clock;
    return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

template <typename T>
Tensor<T> rand_tensor(std::vector<int> shape, std::mt19937& g, T lo, T hi) {
    Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& v : t.v) v = static_cast<T>(d(g));
    return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double m = 0;
    for (size_t i = 0; i < a.v.size(); ++i)
        m = std::max(m, std::abs(double(a.v[i]) - double(b.v[i])));
    return m;
}

// --- naive scalar references (independent of the library kernels) ---------

double ref_bilinear(const Tensor<double>& x, int c, double sy, double sx) {
    int H = x.dim(1), W = x.dim(2);
    int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
    double wy = sy - y0, wx = sx - x0;
    auto px = [&](int y, int xx) -> double {
        if (y < 0 || y >= H || xx < 0 || xx >= W) return 0.0;
        return x.at(c, y, xx);
    };
    return (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x0 + 1)) +
           wy * ((1 - wx) * px(y0 + 1, x0) + wx * px(y0 + 1, x0 + 1));
}

// Deformed, color-compensated, modulated 3x3 conv; empty dc/dm disable the
// respective part. Written as six nested loops, nothing shared with the
// library implementation.
Tensor<double> ref_color_deform(const Tensor<double>& x, const Tensor<double>& w,
                                const Tensor<double>& dp, const Tensor<double>& dc,
                                const Tensor<double>& dm) {
    int Cin = x.dim(0), H = x.dim(1), W = x.dim(2), Cout = w.dim(0);
    Tensor<double> out({Cout, H, W});
    for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
            for (int n = 0; n < 9; ++n) {
                double sy = y + n / 3 - 1 + dp.at(2 * n, y, xx);
                double sx = xx + n % 3 - 1 + dp.at(2 * n + 1, y, xx);
                for (int co = 0; co < Cout; ++co) {
                    double acc = dc.numel() ? dc.at(n * Cout + co, y, xx) : 0.0;
                    for (int ci = 0; ci < Cin; ++ci)
                        acc += w.v[((size_t(co) * Cin + ci) * 3 + n / 3) * 3 + n % 3] *
                               ref_bilinear(x, ci, sy, sx);
                    out.at(co, y, xx) += acc * (dm.numel() ? dm.at(n, y, xx) : 1.0);
                }
            }
    return out;
}

Tensor<double> ref_plain_conv3(const Tensor<double>& x, const Tensor<double>& w) {
    int Cin = x.dim(0), H = x.dim(1), W = x.dim(2), Cout = w.dim(0);
    Tensor<double> out({Cout, H, W});
    for (int co = 0; co < Cout; ++co)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                double acc = 0;
                for (int ci = 0; ci < Cin; ++ci)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            int iy = y + ky - 1, ix = xx + kx - 1;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            acc += w.v[((size_t(co) * Cin + ci) * 3 + ky) * 3 + kx] *
                                   x.at(ci, iy, ix);
                        }
                out.at(co, y, xx) = acc;
            }
    return out;
}

// Scalar token-attention reference: project pooled maps, symmetrize the
// affinity, row-softmax, cross-modulate, and mix. Plain std::vector math.
struct RefMat {
    int r = 0, c = 0;
    std::vector<double> v;
    RefMat() = default;
    RefMat(int r_, int c_) : r(r_), c(c_), v(size_t(r_) * c_, 0.0) {}
    double& at(int i, int j) { return v[size_t(i) * c + j]; }
    double at(int i, int j) const { return v[size_t(i) * c + j]; }
};

RefMat ref_mm(const RefMat& a, const RefMat& b, bool ta, bool tb) {
    int m = ta ? a.c : a.r, k = ta ? a.r : a.c, n = tb ? b.r : b.c;
    RefMat o(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int l = 0; l < k; ++l)
                acc += (ta ? a.at(l, i) : a.at(i, l)) * (tb ? b.at(j, l) : b.at(l, j));
            o.at(i, j) = acc;
        }
    return o;
}

RefMat ref_project(const Tensor<double>& pooled3, const Tensor<float>& w,
                   const Tensor<float>& b) {
    int M = pooled3.dim(1) * pooled3.dim(2), d = w.dim(0);
    RefMat o(d, M);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < M; ++j) {
            double acc = b.v[i];
            for (int c = 0; c < 3; ++c) acc += double(w.at2(i, c)) * pooled3.v[size_t(c) * M + j];
            o.at(i, j) = acc;
        }
    return o;
}

RefMat ref_affinity_norm(const RefMat& psi, const RefMat& phi) {
    RefMat s = ref_mm(psi, phi, true, false);  // (M,M)
    RefMat pre(s.r, s.c);
    for (int i = 0; i < s.r; ++i)
        for (int j = 0; j < s.c; ++j) pre.at(i, j) = 0.5 * (s.at(i, j) + s.at(j, i));
    RefMat nrm(s.r, s.c);
    for (int i = 0; i < s.r; ++i) {
        double mx = pre.at(i, 0);
        for (int j = 1; j < s.c; ++j) mx = std::max(mx, pre.at(i, j));
        double den = 0;
        for (int j = 0; j < s.c; ++j) den += std::exp(pre.at(i, j) - mx);
        for (int j = 0; j < s.c; ++j) nrm.at(i, j) = std::exp(pre.at(i, j) - mx) / den;
    }
    return nrm;
}

Tensor<double> widen(const Tensor<float>& t) {
    Tensor<double> o(t.shape);
    for (size_t i = 0; i < size_t(t.numel()); ++i) o.v[i] = t.v[i];
    return o;
}

// --- criteria --------------------------------------------------------------

void criterion1_degeneracy() {
    const double tol = 1e-5;
    double worst = 0;
    std::mt19937 g(11);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor<float> x = rand_tensor<float>({3, 16, 16}, g, 0.0f, 1.0f);
        Tensor<float> w = rand_tensor<float>({3, 3, 3, 3}, g, -0.5f, 0.5f);
        Tensor<float> dp({18, 16, 16});           // zero spatial offsets
        Tensor<float> dc({27, 16, 16});           // zero color compensation
        Tensor<float> dm({9, 16, 16}, 1.0f);      // unit modulation
        Var<float> out = color_deformable_conv(
            Var<float>::constant(x), Var<float>::constant(w), Var<float>::constant(dp),
            Var<float>::constant(dc), Var<float>::constant(dm));
        Tensor<double> ref = ref_plain_conv3(widen(x), widen(w));
        worst = std::max(worst, max_abs_diff(widen(out.value()), ref));
    }
    report(1, worst <= tol,
           fmt("neutral offsets reduce the deformable conv to a plain conv: "
               "max |diff| %.3g <= %.1g over 100 random (3,16,16) inputs",
               worst, tol));
}

void criterion2_oracles() {
    const double tol = 1e-5;
    double worst_deform = 0, worst_att = 0;
    std::mt19937 g(22);
    // 20 randomized deformable-conv instances vs the scalar reference.
    for (int trial = 0; trial < 20; ++trial) {
        int H = 4 + trial % 4, W = 5 + trial % 3;
        int Cin = 1 + trial % 3, Cout = 1 + (trial / 3) % 3;
        Tensor<float> x = rand_tensor<float>({Cin, H, W}, g, -1.0f, 1.0f);
        Tensor<float> w = rand_tensor<float>({Cout, Cin, 3, 3}, g, -0.7f, 0.7f);
        Tensor<float> dp = rand_tensor<float>({18, H, W}, g, -1.5f, 1.5f);
        bool with_dc = trial % 2 == 0, with_dm = trial % 3 != 0;
        Tensor<float> dc = with_dc ? rand_tensor<float>({9 * Cout, H, W}, g, -0.3f, 0.3f)
                                   : Tensor<float>();
        Tensor<float> dm = with_dm ? rand_tensor<float>({9, H, W}, g, 0.0f, 1.2f)
                                   : Tensor<float>();
        Var<float> out = color_deformable_conv(
            Var<float>::constant(x), Var<float>::constant(w), Var<float>::constant(dp),
            with_dc ? Var<float>::constant(dc) : Var<float>(),
            with_dm ? Var<float>::constant(dm) : Var<float>());
        Tensor<double> ref = ref_color_deform(widen(x), widen(w), widen(dp), widen(dc), widen(dm));
        worst_deform = std::max(worst_deform, max_abs_diff(widen(out.value()), ref));
    }
    // 24 randomized token-attention instances vs the scalar reference:
    // affinity normalization, cross-modulation, and the final token mix.
    for (int trial = 0; trial < 24; ++trial) {
        int hw = 2 + trial % 3;  // 4, 9 or 16 tokens
        int d = 4 + (trial % 2) * 4;
        std::mt19937 ig(100 + trial);
        ComoBranchWeights<float> bi, bb, bd;
        bi.init(d, ig);
        bb.init(d, ig);
        bd.init(d, ig);
        ComoMixWeights<float> mix;
        mix.init(d, ig);
        // Non-trivial output stage: fill w4 so the mix path is exercised.
        for (size_t i = 0; i < mix.w4.w.value().numel(); ++i)
            mix.w4.w.node()->value.v[i] = 0.05f * std::sin(0.3 * double(i + 1));
        Tensor<float> img = rand_tensor<float>({3, hw, hw}, g, 0.0f, 1.0f);
        Tensor<float> ob = rand_tensor<float>({3, hw, hw}, g, 0.0f, 1.3f);
        Tensor<float> od = rand_tensor<float>({3, hw, hw}, g, -0.2f, 1.0f);

        ComoMixWeights<float> mix_run = mix;  // eval mode: running stats stay zero/one
        Var<float> out = como_forward(Var<float>::constant(img), Var<float>::constant(ob),
                                      Var<float>::constant(od), bi, bb, bd, mix_run,
                                      /*training=*/false, /*max_tokens=*/4096);

        // Scalar replay. Stride is 1 at these sizes, so pooling is a no-op.
        auto proj = [&](const Tensor<float>& map, const ComoBranchWeights<float>& bw) {
            Tensor<double> m = widen(map);
            return std::array<RefMat, 3>{ref_project(m, bw.psi.w.value(), bw.psi.b.value()),
                                         ref_project(m, bw.phi.w.value(), bw.phi.b.value()),
                                         ref_project(m, bw.z.w.value(), bw.z.b.value())};
        };
        auto ti = proj(img, bi), tb = proj(ob, bb), td = proj(od, bd);
        RefMat ai = ref_affinity_norm(ti[0], ti[1]);
        RefMat ab = ref_affinity_norm(tb[0], tb[1]);
        RefMat ad = ref_affinity_norm(td[0], td[1]);
        RefMat w1(d, d), w2(d, d), w3(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                w1.at(i, j) = mix.w1.value().at2(i, j);
                w2.at(i, j) = mix.w2.value().at2(i, j);
                w3.at(i, j) = mix.w3.value().at2(i, j);
            }
        auto modulate = [&](const RefMat& a, const RefMat& zj) {
            RefMat t1 = ref_mm(zj, a, false, true), t2 = ref_mm(ti[2], a, false, true);
            RefMat m1 = ref_mm(w1, t1, false, false), m2 = ref_mm(w2, t2, false, false);
            RefMat o(m1.r, m1.c);
            for (size_t i = 0; i < o.v.size(); ++i) o.v[i] = m1.v[i] + m2.v[i];
            return o;
        };
        RefMat fb = modulate(ab, tb[2]), fd = modulate(ad, td[2]);
        RefMat self = ref_mm(w3, ref_mm(ti[2], ai, false, true), false, false);
        // Evaluation-mode batch norm with fresh running stats: x / sqrt(1+eps).
        int M = hw * hw;
        RefMat sum(d, M);
        const double bn_eps = 1e-5;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < M; ++j)
                sum.at(i, j) = fb.at(i, j) / std::sqrt(1.0 + bn_eps) +
                               fd.at(i, j) / std::sqrt(1.0 + bn_eps) + self.at(i, j);
        Tensor<double> ref({3, hw, hw});
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < M; ++j) {
                double acc = mix.w4.b.value().v[c];
                for (int i = 0; i < d; ++i) acc += double(mix.w4.w.value().at2(c, i)) * sum.at(i, j);
                ref.v[size_t(c) * M + j] = acc + img.v[size_t(c) * M + j];
            }
        worst_att = std::max(worst_att, max_abs_diff(widen(out.value()), ref));
    }
    double worst = std::max(worst_deform, worst_att);
    report(2, worst <= tol,
           fmt("library kernels match naive scalar references: max |diff| %.3g <= %.1g "
               "(20 deformable-conv + 24 token-attention instances)",
               worst, tol));
}

// Central finite differences at step 1e-4 on double-precision graphs.
struct GradCheck {
    double worst = 0;
    std::string worst_site = "-";

    template <typename F>
    void check(const std::string& site, std::vector<Var<double>> leaves, F&& build,
               int max_coords = 24) {
        Var<double> loss = build();
        for (auto& l : leaves) l.node()->grad = Tensor<double>();
        loss.backward();
        const double h = 1e-4;
        std::mt19937 pick(std::hash<std::string>{}(site) & 0xffffffffu);
        for (auto& leaf : leaves) {
            auto& node = *leaf.node();
            size_t n = node.value.numel();
            std::vector<size_t> idx(n);
            for (size_t i = 0; i < n; ++i) idx[i] = i;
            if (int(n) > max_coords) {
                std::shuffle(idx.begin(), idx.end(), pick);
                idx.resize(max_coords);
            }
            for (size_t i : idx) {
                double keep = node.value.v[i];
                node.value.v[i] = keep + h;
                double up = build().value().v[0];
                node.value.v[i] = keep - h;
                double dn = build().value().v[0];
                node.value.v[i] = keep;
                double fd = (up - dn) / (2 * h);
                double an = node.grad.numel() ? node.grad.v[i] : 0.0;
                double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
                if (rel > worst) {
                    worst = rel;
                    worst_site = site;
                }
            }
        }
    }
};

void criterion3_gradients() {
    const double tol = 1e-3, budget_s = 300;
    double t0 = now_s();
    GradCheck gc;
    std::mt19937 g(33);

    auto leafd = [&](std::vector<int> shape, double lo, double hi) {
        return Var<double>::leaf(rand_tensor<double>(std::move(shape), g, lo, hi), true);
    };

    {  // exposure-path ops: brighten, darken, and the sigmoid rescale
        Var<double> img = leafd({3, 6, 7}, 0.05, 0.95);
        Var<double> lum = leafd({1, 6, 7}, 0.2, 0.9);
        gc.check("brighten", {img, lum},
                 [&] { return mean_all(square(brighten(img, lum, 1e-3))); });
        gc.check("darken", {img, lum}, [&] { return mean_all(square(darken(img, lum, 1e-3))); });
    }
    {  // deformable conv wrt every input
        Var<double> x = leafd({2, 5, 6}, -1, 1);
        Var<double> w = leafd({2, 2, 3, 3}, -0.5, 0.5);
        Var<double> dp = leafd({18, 5, 6}, -0.6, 0.6);
        Var<double> dc = leafd({18, 5, 6}, -0.2, 0.2);
        Var<double> dm = leafd({9, 5, 6}, 0.3, 1.1);
        gc.check("color_deform", {x, w, dp, dc, dm}, [&] {
            return mean_all(square(color_deformable_conv(x, w, dp, dc, dm)));
        });
    }
    {  // token attention end to end (training-mode batch norm included)
        std::mt19937 ig(7);
        ComoBranchWeights<double> bi, bb, bd;
        bi.init(6, ig);
        bb.init(6, ig);
        bd.init(6, ig);
        ComoMixWeights<double> mix;
        mix.init(6, ig);
        for (size_t i = 0; i < mix.w4.w.value().numel(); ++i)
            mix.w4.w.node()->value.v[i] = 0.03 * std::cos(0.5 * double(i + 1));
        Var<double> img = leafd({3, 3, 3}, 0, 1);
        Var<double> ob = leafd({3, 3, 3}, 0, 1.2);
        Var<double> od = leafd({3, 3, 3}, -0.1, 1.0);
        std::vector<Var<double>> leaves = {img, ob, od, bi.psi.w, bb.phi.w, bd.z.w,
                                           mix.w1, mix.w2, mix.w3, mix.w4.w, mix.w4.b,
                                           mix.bnB_gamma, mix.bnB_beta};
        gc.check("token_attention", leaves, [&] {
            ComoMixWeights<double> mix_run = mix;  // fresh running stats per eval
            return mean_all(square(
                como_forward(img, ob, od, bi, bb, bd, mix_run, true, 4096)));
        });
    }
    {  // every loss term
        Var<double> pred = leafd({3, 14, 14}, 0.02, 0.98);
        Var<double> fn = leafd({3, 14, 14}, 0.02, 0.98);
        Var<double> gt = leafd({3, 14, 14}, 0.02, 0.98);
        auto pe = PerceptualExtractor<double>::seeded(977);
        gc.check("l1_loss", {pred}, [&] { return l1_loss(pred, gt); });
        gc.check("cosine_loss", {pred}, [&] { return cosine_loss(pred, gt); });
        gc.check("ssim_loss", {pred}, [&] { return ssim_loss(pred, gt); });
        gc.check("perceptual_loss", {pred}, [&] { return perceptual_loss(pred, gt, pe); });
        gc.check("pseudo_loss", {fn}, [&] { return pseudo_loss(fn, gt); });
    }
    {  // illumination extractor wrt input and a sampling of weights
        std::mt19937 ig(5);
        ExtractorWeights<double> ew;
        ew.init(2, 4, 1, 1e-3, ig);
        Var<double> img = leafd({3, 8, 8}, 0, 1);
        gc.check("illumination", {img, ew.enc_a[0].w, ew.bott.w, ew.dec[0].w, ew.head.w},
                 [&] { return mean_all(square(extract_illumination(img, ew))); });
    }
    double dt = now_s() - t0;
    report(3, gc.worst <= tol && dt <= budget_s,
           fmt("analytic gradients vs central differences (step 1e-4): max rel err %.3g <= %.1g "
               "(worst at %s), suite %.1fs <= %.0fs",
               gc.worst, tol, gc.worst_site.c_str(), dt, budget_s));
}

void criterion4_identities() {
    bool ok = true;
    std::string why;

    // (a) inversion is an exact involution on dyadic pixel values
    {
        ImageTensor img;
        img.data = Tensor<float>({3, 4, 4});
        std::mt19937 g(4);
        for (auto& v : img.data.v) v = float(g() % 257) / 256.0f;
        ImageTensor twice = invert(invert(img));
        for (size_t i = 0; i < size_t(img.data.numel()); ++i)
            if (twice.data.v[i] != img.data.v[i]) ok = false, why = "involution";
    }
    double dual_worst = 0;
    {  // (b) darken(I,L) == 1 - brighten(1-I,L) to 1e-6
        std::mt19937 g(44);
        Tensor<float> img = rand_tensor<float>({3, 8, 8}, g, 0.0f, 1.0f);
        Tensor<float> lum = rand_tensor<float>({1, 8, 8}, g, 0.05f, 1.0f);
        Var<float> vi = Var<float>::constant(img), vl = Var<float>::constant(lum);
        Tensor<float> d = darken(vi, vl, 1e-3f).value();
        Tensor<float> b = brighten(rsub_scalar(1.0f, vi), vl, 1e-3f).value();
        for (size_t i = 0; i < d.numel(); ++i)
            dual_worst = std::max(dual_worst, std::abs(double(d.v[i]) - (1.0 - double(b.v[i]))));
        if (dual_worst > 1e-6) ok = false, why = "duality";
    }
    {  // (c) fresh model (zero-init output stage) is bit-exact identity
        for (const char* mode : {"como", "nonlocal_concat"}) {
            ModelConfig mc;
            mc.attention_mode = mode;
            Model<float> m(mc, 123);
            m.training = false;
            std::mt19937 g(45);
            Tensor<float> img = rand_tensor<float>({3, 16, 16}, g, 0.0f, 1.0f);
            Tensor<float> out = m.forward(Var<float>::constant(img)).iy.value();
            for (size_t i = 0; i < img.numel(); ++i)
                if (out.v[i] != img.v[i]) ok = false, why = "residual-identity";
        }
    }
    double sym_worst = 0, row_worst = 0;
    {  // (d) affinity: pre-normalization exactly symmetric, rows sum to 1
        std::mt19937 ig(6);
        ComoBranchWeights<float> bw;
        bw.init(8, ig);
        std::mt19937 g(46);
        Tensor<float> map = rand_tensor<float>({3, 4, 4}, g, 0.0f, 1.0f);
        auto toks = branch_project(Var<float>::constant(map), bw);
        auto aff = affinity(toks.psi, toks.phi);
        const auto& pre = aff.pre.value();
        int M = pre.dim(0);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < M; ++j)
                sym_worst = std::max(sym_worst,
                                     std::abs(double(pre.at2(i, j)) - double(pre.at2(j, i))));
        if (sym_worst != 0.0) ok = false, why = "affinity-symmetry";
        const auto& nrm = aff.norm.value();
        for (int i = 0; i < M; ++i) {
            double s = 0;
            for (int j = 0; j < M; ++j) s += nrm.at2(i, j);
            row_worst = std::max(row_worst, std::abs(s - 1.0));
        }
        if (row_worst > 1e-5) ok = false, why = "affinity-rows";
    }
    report(4, ok,
           fmt("structural identities hold%s%s: involution exact, duality %.2g <= 1e-6, "
               "fresh-model residual bit-exact, affinity symmetry exact, row sums 1 +/- %.2g",
               ok ? "" : " EXCEPT ", ok ? "" : why.c_str(), dual_worst, row_worst));
}

void criterion5_metrics() {
    bool ok = true;
    // The +0.1 anchor needs the per-pixel difference to be exactly 0.1f, so
    // the offset sits on a black frame; random bases would smear the MSE by
    // one float ulp per pixel.
    Tensor<float> zero({3, 12, 12}), tenth({3, 12, 12}, 0.1f);
    double p = psnr(tenth, zero);
    if (std::abs(p - 20.0) > 1e-6) ok = false;

    std::mt19937 g(55);
    Tensor<float> base = rand_tensor<float>({3, 12, 12}, g, 0.1f, 0.8f);
    Tensor<float> self = base;
    double s = ssim(self, base);
    if (std::abs(s - 1.0) > 1e-9) ok = false;
    double r0 = rmse_lab(self, base);
    if (r0 != 0.0) ok = false;

    Tensor<float> black({3, 8, 8}), white({3, 8, 8}, 1.0f);
    double rbw = rmse_lab(black, white);
    const double expect = 100.0 / std::sqrt(3.0);
    if (std::abs(rbw - expect) > 0.1) ok = false;

    report(5, ok,
           fmt("metric anchors: psnr(+0.1)=%.7f (20 +/- 1e-6), ssim(x,x)=%.9f, "
               "rmse_lab(x,x)=%.1f, rmse_lab(black,white)=%.4f (%.4f +/- 0.1)",
               p, s, r0, rbw, expect));
}

void criterion6_params() {
    ModelConfig mc;
    Model<float> m(mc, 1);
    int64_t n = m.parameter_count();
    bool ok = n >= 200000 && n <= 450000;
    report(6, ok, fmt("default model has %lld trainable parameters in [200000, 450000]",
                      static_cast<long long>(n)));
}

FullConfig desk_config(const std::string& out_dir) {
    FullConfig cfg;
    cfg.model.como_max_tokens = 1024;
    cfg.train.output_dir = out_dir;
    cfg.train.batch_size = 4;
    cfg.train.patch_size = 64;
    cfg.train.lr = 2e-3f;
    cfg.train.lr_final = 1e-6f;
    cfg.train.log_interval = 100;
    cfg.train.checkpoint_interval = 100000;
    cfg.train.seed = 1;
    cfg.train.augment_flip = false;
    cfg.train.augment_rot90 = false;
    return cfg;
}

void criterion7_learning(const fs::path& work) {
    // Part 1: overfit four synthetic pairs to >= 30 dB train PSNR within 500
    // iterations and 10 minutes of CPU.
    const double psnr_goal = 30.0, overfit_budget_s = 600.0;
    fs::path d4 = work / "overfit_set";
    DegradationSpec spec;
    spec.seed = 7;
    write_synthetic_dataset(d4.string(), 4, 64, 64, spec);
    PairedDataset ds4 = scan_dataset(d4.string());

    FullConfig cfg = desk_config((work / "overfit_run").string());
    cfg.train.iterations = 500;

    double t0 = now_s();
    TrainResult res = train_with_datasets(cfg, ds4, nullptr);
    double overfit_s = now_s() - t0;

    Model<float> trained = model_from_checkpoint(load_checkpoint(res.final_checkpoint));
    auto rows = evaluate_model(trained, ds4, "");
    double train_psnr = mean_metrics(rows).psnr;

    // Training-loss trend: the 50-iteration smoothed loss must decrease.
    auto smooth = [&](size_t end) {  // mean of history[end-50, end)
        double s = 0;
        for (size_t i = end - 50; i < end; ++i) s += res.loss_history[i];
        return s / 50;
    };
    double early = smooth(50), late = smooth(res.loss_history.size());
    bool trend_ok = late < early;

    // The pseudo-normal map must sit closer to the reference than the input.
    double fn_gap = 0, in_gap = 0;
    {
        trained.training = false;
        for (size_t i = 0; i < ds4.size(); ++i) {
            const auto& [in, gt] = ds4.pair(i);
            auto fr = trained.forward(Var<float>::constant(in));
            const auto& fn = fr.fn.value();
            for (size_t k = 0; k < gt.numel(); ++k) {
                fn_gap += std::abs(double(fn.v[k]) - double(gt.v[k]));
                in_gap += std::abs(double(in.v[k]) - double(gt.v[k]));
            }
        }
    }
    bool fn_ok = fn_gap < in_gap;

    bool part1 = train_psnr >= psnr_goal && overfit_s <= overfit_budget_s && trend_ok && fn_ok;

    // Part 2: a 30-minute-budget run on a synthetic training set must beat
    // the identity baseline on 20 held-out pairs by >= 2 dB mean PSNR.
    const double gain_goal = 2.0, heldout_budget_s = 1800.0;
    fs::path dtr = work / "train_set", dte = work / "heldout_set";
    DegradationSpec tr_spec;
    tr_spec.seed = 101;
    write_synthetic_dataset(dtr.string(), 24, 64, 64, tr_spec);
    DegradationSpec te_spec;
    te_spec.seed = 900;
    write_synthetic_dataset(dte.string(), 20, 64, 64, te_spec);
    PairedDataset dstr = scan_dataset(dtr.string());
    PairedDataset dste = scan_dataset(dte.string());

    FullConfig cfg2 = desk_config((work / "heldout_run").string());
    cfg2.train.iterations = 700;
    cfg2.train.augment_flip = true;
    cfg2.train.augment_rot90 = true;

    t0 = now_s();
    TrainResult res2 = train_with_datasets(cfg2, dstr, nullptr);
    double heldout_s = now_s() - t0;

    Model<float> trained2 = model_from_checkpoint(load_checkpoint(res2.final_checkpoint));
    double model_psnr = mean_metrics(evaluate_model(trained2, dste, "")).psnr;
    double ident_psnr = mean_metrics(evaluate_identity(dste, "")).psnr;
    double gain = model_psnr - ident_psnr;
    bool part2 = gain >= gain_goal && heldout_s <= heldout_budget_s;

    report(7, part1 && part2,
           fmt("desk-scale learning: overfit 4 pairs to %.2f dB >= %.0f in 500 iters / %.0fs <= "
               "%.0fs (loss %.3f -> %.3f, pseudo-normal closer than input: %s); held-out gain "
               "%.2f dB >= %.0f over identity %.2f dB in %.0fs <= %.0fs",
               train_psnr, psnr_goal, overfit_s, overfit_budget_s, early, late,
               fn_ok ? "yes" : "NO", gain, gain_goal, ident_psnr, heldout_s, heldout_budget_s));
}

void criterion8_shift_structure(const fs::path& work) {
    fs::path root = work / "shift_set";
    DegradationSpec spec;
    spec.seed = 31;
    write_synthetic_dataset(root.string(), 20, 32, 32, spec);
    PairedDataset ds = scan_dataset(root.string());
    PcaShiftResult r = pca_color_shift(ds, 200, 3);
    bool ok = r.over_under_dot < 0 && r.over_count > 0 && r.under_count > 0;
    report(8, ok,
           fmt("shift-plane structure over %zu pairs: mean over / mean under projections point "
               "oppositely (dot %.4f < 0; %zu over, %zu under samples)",
               ds.size(), r.over_under_dot, r.over_count, r.under_count));
}

void criterion9_documentation() {
    std::ifstream in(CS_README_PATH);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    auto lower = text;
    for (auto& c : lower) c = char(std::tolower(static_cast<unsigned char>(c)));
    bool has_disclaimer = lower.find("not reproduce") != std::string::npos ||
                          lower.find("does not reproduce") != std::string::npos ||
                          lower.find("are not reproduced") != std::string::npos;
    bool has_protocol = lower.find("evaluation protocol") != std::string::npos;
    bool has_eval_cmd = lower.find("eval") != std::string::npos &&
                        lower.find("psnr") != std::string::npos &&
                        lower.find("ssim") != std::string::npos;
    bool ok = in.good() || !text.empty();
    ok = ok && has_disclaimer && has_protocol && has_eval_cmd;
    report(9, ok,
           fmt("README documents the benchmark non-reproduction and the evaluation protocol "
               "(disclaimer: %s, protocol section: %s, metric/CLI coverage: %s)",
               has_disclaimer ? "yes" : "NO", has_protocol ? "yes" : "NO",
               has_eval_cmd ? "yes" : "NO"));
}

void criterion10_ablations(const fs::path& work) {
    fs::path root = work / "ablation_set";
    DegradationSpec spec;
    spec.seed = 77;
    write_synthetic_dataset(root.string(), 4, 24, 24, spec);
    PairedDataset ds = scan_dataset(root.string());

    struct Variant {
        std::string name;
        void (*tweak)(FullConfig&);
    };
    std::vector<Variant> variants = {
        {"baseline", [](FullConfig&) {}},
        {"deform=none", [](FullConfig& c) { c.model.deform_mode = "none"; }},
        {"deform=spatial", [](FullConfig& c) { c.model.deform_mode = "spatial"; }},
        {"deform=spatial_modulation",
         [](FullConfig& c) { c.model.deform_mode = "spatial_modulation"; }},
        {"deform=spatial_color", [](FullConfig& c) { c.model.deform_mode = "spatial_color"; }},
        {"attention=nonlocal_concat",
         [](FullConfig& c) { c.model.attention_mode = "nonlocal_concat"; }},
        {"opposed_maps", [](FullConfig& c) { c.model.opposed_maps = true; }},
        {"separate_extractors", [](FullConfig& c) { c.model.separate_extractors = true; }},
        {"share_generator=false", [](FullConfig& c) { c.model.share_generator = false; }},
        {"illum_channels=3", [](FullConfig& c) { c.model.illum_channels = 3; }},
        {"no_ssim_vgg", [](FullConfig& c) { c.loss.weights.use_ssim = false;
                                            c.loss.weights.use_vgg = false; }},
        {"no_pseudo", [](FullConfig& c) { c.loss.weights.use_pseudo = false; }},
    };

    int done = 0;
    std::string failed;
    for (auto& v : variants) {
        FullConfig cfg;
        cfg.train.output_dir = (work / ("abl_" + std::to_string(done))).string();
        cfg.train.iterations = 10;
        cfg.train.batch_size = 2;
        cfg.train.patch_size = 16;
        cfg.train.log_interval = 10;
        cfg.train.checkpoint_interval = 100000;
        cfg.train.seed = 3;
        v.tweak(cfg);
        try {
            TrainResult r = train_with_datasets(cfg, ds, nullptr);
            bool finite = true;
            for (double l : r.loss_history) finite = finite && std::isfinite(l);
            if (!finite) throw std::runtime_error("non-finite loss history");
            // Round-trip: the saved checkpoint must rebuild the exact model.
            CheckpointData data = load_checkpoint(r.final_checkpoint);
            Model<float> back = model_from_checkpoint(data);
            Model<float> probe(back.cfg, 999);
            apply_checkpoint(data, probe);
            for (auto p : back.params()) {
                bool matched = false;
                for (auto q : probe.params())
                    if (q.name == p.name) {
                        matched = p.var.value().v == q.var.value().v;
                        break;
                    }
                if (!matched) throw std::runtime_error("round-trip mismatch at " + p.name);
            }
            ++done;
        } catch (const std::exception& e) {
            failed = v.name + std::string(": ") + e.what();
            break;
        }
    }
    report(10, done == int(variants.size()),
           failed.empty()
               ? fmt("all %d config variants train 10 iterations with finite losses and "
                     "round-trip through checkpoints",
                     done)
               : fmt("variant %s failed after %d ok", failed.c_str(), done));
}

}  // namespace

int main() {
    flush_denormals();
    fs::path work = fs::temp_directory_path() / "colorshift_acceptance";
    std::error_code ec;
    fs::remove_all(work, ec);
    fs::create_directories(work);

    criterion1_degeneracy();
    criterion2_oracles();
    criterion3_gradients();
    criterion4_identities();
    criterion5_metrics();
    criterion6_params();
    criterion7_learning(work);
    criterion8_shift_structure(work);
    criterion9_documentation();
    criterion10_ablations(work);

    fs::remove_all(work, ec);
    if (g_failures) {
        std::printf("ACCEPTANCE: %d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("ACCEPTANCE: all criteria passed\n");
    return 0;
}
