#include "colorshift/selftest.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

#include "colorshift/checkpoint.hpp"
#include "colorshift/metrics.hpp"
#include "colorshift/trainer.hpp"

namespace colorshift {

namespace {

// Scalar-loop reference for the color-space deformable convolution: for each
// output pixel, nine bilinear reads at p + p_n + dp_n, each scaled by the
// kernel, shifted by dc and weighted by dm.
Tensor<double> naive_color_deform(const Tensor<double>& x, const Tensor<double>& w,
                                  const Tensor<double>& dp, const Tensor<double>& dc,
                                  const Tensor<double>& dm) {
    int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    int Cout = w.dim(0);
    auto sample = [&](int c, double y, double xx) {
        int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(xx));
        double fy = y - y0, fx = xx - x0;
        auto px = [&](int yy, int xc) -> double {
            if (yy < 0 || yy >= H || xc < 0 || xc >= W) return 0.0;
            return x.at(c, yy, xc);
        };
        return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
               fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
    };
    Tensor<double> out({Cout, H, W});
    for (int co = 0; co < Cout; ++co)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx)
                for (int n = 0; n < 9; ++n) {
                    int ky = n / 3 - 1, kx = n % 3 - 1;
                    double sy = y + ky + dp.at(2 * n, y, xx);
                    double sx = xx + kx + dp.at(2 * n + 1, y, xx);
                    double acc = 0;
                    for (int ci = 0; ci < Cin; ++ci)
                        acc += w.v[static_cast<size_t>(((co * Cin + ci) * 3 + ky + 1) * 3 +
                                                       kx + 1)] *
                               sample(ci, sy, sx);
                    if (dc.numel()) acc += dc.at(n * Cout + co, y, xx);
                    double mod = dm.numel() ? dm.at(n, y, xx) : 1.0;
                    out.at(co, y, xx) += acc * mod;
                }
    return out;
}

struct Runner {
    std::ostream& out;
    bool all_ok = true;

    void check(const std::string& name, bool ok, const std::string& detail = "") {
        out << (ok ? "PASS " : "FAIL ") << name;
        if (!ok && !detail.empty()) out << " (" << detail << ")";
        out << "\n";
        all_ok = all_ok && ok;
    }
};

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
    double m = 0;
    for (size_t i = 0; i < a.v.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.v[i]) - b.v[i]));
    return m;
}

// Central-difference check of d(readout(f(inputs)))/d(inputs[0]) on a few
// elements; relative tolerance 1e-3.
bool quick_grad_check(
    const std::function<Var<double>(std::vector<Var<double>>&)>& build,
    std::vector<Tensor<double>> inputs, double* worst_out) {
    std::vector<Var<double>> vars;
    for (auto& t : inputs) vars.push_back(Var<double>::leaf(t, true));
    Var<double> y = build(vars);
    y.backward();
    double worst = 0;
    bool ok = true;
    for (size_t vi = 0; vi < vars.size(); ++vi) {
        const Tensor<double>& g = vars[vi].grad();
        size_t n = inputs[vi].numel();
        size_t stride = std::max<size_t>(1, n / 16);
        for (size_t j = 0; j < n; j += stride) {
            double x0 = inputs[vi].v[j];
            double h = 1e-4;
            auto eval = [&](double xv) {
                std::vector<Var<double>> vs;
                for (size_t k = 0; k < inputs.size(); ++k) {
                    Tensor<double> t = inputs[k];
                    if (k == vi) t.v[j] = xv;
                    vs.push_back(Var<double>::leaf(t, false));
                }
                return build(vs).value().v[0];
            };
            double fd = (eval(x0 + h) - eval(x0 - h)) / (2 * h);
            double err = std::abs(g.v[j] - fd) / std::max({std::abs(g.v[j]), std::abs(fd), 1e-6});
            worst = std::max(worst, err);
            ok = ok && err <= 1e-3;
        }
    }
    if (worst_out) *worst_out = worst;
    return ok;
}

}  // namespace

bool run_selftest(const SelftestOptions& opt, std::ostream& out) {
    Runner r{out};
    std::mt19937 g(20240601u);

    {  // deformable conv degrades to plain convolution at zero offsets
        double worst = 0;
        for (int t = 0; t < 10; ++t) {
            Tensor<float> xv = rand_uniform<float>({3, 16, 16}, g, 0.0f, 1.0f);
            Tensor<float> wv = randn<float>({3, 3, 3, 3}, g, 0.3f);
            Var<float> x = Var<float>::constant(xv);
            Tensor<float> ref = conv2d(x, Var<float>::constant(wv), 1).value();
            if (opt.perturb_kernel) wv.v[4] += 1e-3f;
            Var<float> dp = Var<float>::constant(Tensor<float>({18, 16, 16}));
            Var<float> dc = Var<float>::constant(Tensor<float>({27, 16, 16}));
            Var<float> dm = Var<float>::constant(Tensor<float>({9, 16, 16}, 1.0f));
            Tensor<float> got =
                color_deformable_conv(x, Var<float>::constant(wv), dp, dc, dm).value();
            worst = std::max(worst, max_abs_diff(ref, got));
        }
        std::ostringstream d;
        d << "max abs diff " << worst;
        r.check("conv_degeneracy", worst <= 1e-5, d.str());
    }

    {  // deformable conv against the scalar-loop oracle
        Tensor<double> xv = rand_uniform<double>({3, 8, 8}, g, 0.0, 1.0);
        Tensor<double> wv = randn<double>({3, 3, 3, 3}, g, 0.3);
        Tensor<double> dpv = randn<double>({18, 8, 8}, g, 0.4);
        Tensor<double> dcv = randn<double>({27, 8, 8}, g, 0.2);
        Tensor<double> dmv = rand_uniform<double>({9, 8, 8}, g, 0.0, 1.0);
        Tensor<double> ref = naive_color_deform(xv, wv, dpv, dcv, dmv);
        Tensor<double> got = color_deformable_conv(
                                 Var<double>::constant(xv), Var<double>::constant(wv),
                                 Var<double>::constant(dpv), Var<double>::constant(dcv),
                                 Var<double>::constant(dmv))
                                 .value();
        double worst = 0;
        for (size_t i = 0; i < ref.v.size(); ++i)
            worst = std::max(worst, std::abs(ref.v[i] - got.v[i]));
        std::ostringstream d;
        d << "max abs diff " << worst;
        r.check("dcconv_oracle", worst <= 1e-9, d.str());
    }

    {  // gradient spot checks in double precision
        double worst = 0;
        bool ok = quick_grad_check(
            [](std::vector<Var<double>>& v) {
                return mean_all(square(brighten(v[0], v[1], 1e-3)));
            },
            {rand_uniform<double>({3, 6, 6}, g, 0.1, 0.9),
             rand_uniform<double>({1, 6, 6}, g, 0.3, 1.0)},
            &worst);
        std::ostringstream d;
        d << "worst rel err " << worst;
        r.check("brighten_gradient", ok, d.str());

        Tensor<double> dc_img = rand_uniform<double>({3, 5, 5}, g, 0.0, 1.0);
        ok = quick_grad_check(
            [&dc_img](std::vector<Var<double>>& v) {
                Var<double> dm = sigmoid(v[3]);
                return mean_all(square(color_deformable_conv(Var<double>::constant(dc_img),
                                                             v[0], v[1], v[2], dm)));
            },
            {randn<double>({2, 3, 3, 3}, g, 0.3), randn<double>({18, 5, 5}, g, 0.3),
             randn<double>({18, 5, 5}, g, 0.2), randn<double>({9, 5, 5}, g, 0.5)},
            &worst);
        d.str("");
        d << "worst rel err " << worst;
        r.check("dcconv_gradient", ok, d.str());

        ok = quick_grad_check(
            [](std::vector<Var<double>>& v) { return cosine_loss(v[0], v[1]); },
            {rand_uniform<double>({3, 6, 6}, g, 0.1, 0.9),
             rand_uniform<double>({3, 6, 6}, g, 0.1, 0.9)},
            &worst);
        d.str("");
        d << "worst rel err " << worst;
        r.check("cosine_loss_gradient", ok, d.str());
    }

    {  // metric identities
        Tensor<float> a = rand_uniform<float>({3, 16, 16}, g, 0.0f, 0.85f);
        Tensor<float> b = a;
        for (auto& v : b.v) v += 0.1f;
        bool ok = std::abs(psnr(b, a) - 20.0) <= 1e-5 && ssim(a, a) == 1.0 &&
                  rmse_lab(a, a) == 0.0;
        r.check("metric_identities", ok);
    }

    {  // default model starts as the identity and round-trips its checkpoint
        ModelConfig mc;
        mc.como_max_tokens = 64;
        Model<float> m(mc, 5);
        m.training = false;
        Tensor<float> img = rand_uniform<float>({3, 16, 16}, g, 0.0f, 1.0f);
        auto res = m.forward(Var<float>::constant(img));
        bool identity = res.iy.value().v == img.v;
        r.check("model_identity_at_init", identity);

        CheckpointData d = checkpoint_from_model(m, nullptr, 0, "");
        std::string path = "/tmp/colorshift_selftest.cspt";
        save_checkpoint(path, d);
        CheckpointData d2 = load_checkpoint(path);
        Model<float> m2 = model_from_checkpoint(d2);
        bool same = true;
        auto pa = m.params();
        auto pb = m2.params();
        for (size_t i = 0; i < pa.size(); ++i)
            same = same && pa[i].var.value().v == pb[i].var.value().v;
        std::remove(path.c_str());
        r.check("checkpoint_roundtrip", same);
    }

    {  // attention affinity: symmetric logits, rows summing to one
        Tensor<float> pooled = rand_uniform<float>({3, 4, 4}, g, 0.0f, 1.0f);
        ComoBranchWeights<float> bw;
        std::mt19937 g2(3);
        bw.init(8, g2);
        auto tk = branch_project(Var<float>::constant(pooled), bw);
        auto af = affinity(tk.psi, tk.phi);
        const Tensor<float>& pre = af.pre.value();
        const Tensor<float>& nrm = af.norm.value();
        int M = pre.dim(0);
        bool sym = true;
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < M; ++j) sym = sym && pre.at2(i, j) == pre.at2(j, i);
        double worst_row = 0;
        for (int i = 0; i < M; ++i) {
            double s = 0;
            for (int j = 0; j < M; ++j) s += nrm.at2(i, j);
            worst_row = std::max(worst_row, std::abs(s - 1.0));
        }
        r.check("affinity_identities", sym && worst_row <= 1e-5);
    }

    out << (r.all_ok ? "selftest: all checks passed\n" : "selftest: FAILURES above\n");
    return r.all_ok;
}

}  // namespace colorshift
