#pragma once

#include "colorshift/illumination.hpp"

namespace colorshift {

// Token-space attention over stride-s average-pooled maps; the stride is the
// smallest one that keeps the token count within budget.
inline int attention_stride(int h, int w, int max_tokens) {
    int s = 1;
    auto tokens = [&](int st) {
        return static_cast<int64_t>((h + st - 1) / st) * ((w + st - 1) / st);
    };
    while (tokens(s) > max_tokens) ++s;
    return s;
}

template <typename T>
struct ComoBranchWeights {
    MatP<T> psi, phi, z;  // each (d,3)+(d)

    void init(int d, std::mt19937& g) {
        psi = {init::kaiming_mat<T>(d, 3, g), init::zeros<T>({d})};
        phi = {init::kaiming_mat<T>(d, 3, g), init::zeros<T>({d})};
        z = {init::kaiming_mat<T>(d, 3, g), init::zeros<T>({d})};
    }
    void collect(const std::string& p, std::vector<NamedParam<T>>& out) {
        out.push_back({p + ".psi.w", psi.w});
        out.push_back({p + ".psi.b", psi.b});
        out.push_back({p + ".phi.w", phi.w});
        out.push_back({p + ".phi.b", phi.b});
        out.push_back({p + ".z.w", z.w});
        out.push_back({p + ".z.b", z.b});
    }
};

template <typename T>
struct ComoMixWeights {
    Var<T> w1, w2, w3;  // (d,d), bias-free
    MatP<T> w4;         // (3,d)+(3), zero-initialized: the model starts as identity
    Var<T> bnB_gamma, bnB_beta, bnD_gamma, bnD_beta;
    BatchNormState<T> bnB_state, bnD_state;

    void init(int d, std::mt19937& g) {
        w1 = init::kaiming_mat<T>(d, d, g);
        w2 = init::kaiming_mat<T>(d, d, g);
        w3 = init::kaiming_mat<T>(d, d, g);
        w4 = {init::zeros<T>({3, d}), init::zeros<T>({3})};
        bnB_gamma = init::ones<T>({d});
        bnB_beta = init::zeros<T>({d});
        bnD_gamma = init::ones<T>({d});
        bnD_beta = init::zeros<T>({d});
        bnB_state = BatchNormState<T>(d);
        bnD_state = BatchNormState<T>(d);
    }
    void collect(const std::string& p, std::vector<NamedParam<T>>& out) {
        out.push_back({p + ".w1", w1});
        out.push_back({p + ".w2", w2});
        out.push_back({p + ".w3", w3});
        out.push_back({p + ".w4.w", w4.w});
        out.push_back({p + ".w4.b", w4.b});
        out.push_back({p + ".bnB.gamma", bnB_gamma});
        out.push_back({p + ".bnB.beta", bnB_beta});
        out.push_back({p + ".bnD.gamma", bnD_gamma});
        out.push_back({p + ".bnD.beta", bnD_beta});
    }
};

// (3,h,w) pooled map -> psi/phi/z token matrices (d,M).
template <typename T>
struct BranchTokens {
    Var<T> psi, phi, z;
};

template <typename T>
BranchTokens<T> branch_project(const Var<T>& pooled, const ComoBranchWeights<T>& w) {
    int H = pooled.value().dim(1), W = pooled.value().dim(2);
    Var<T> x2d = reshape(pooled, {3, H * W});
    auto lin = [&](const MatP<T>& m) { return add_row_bias(matmul(m.w, x2d), m.b); };
    return {lin(w.psi), lin(w.phi), lin(w.z)};
}

template <typename T>
struct Affinity {
    Var<T> pre;   // symmetrized psi^T phi, exactly symmetric
    Var<T> norm;  // row-softmax of pre; rows sum to 1
};

template <typename T>
Affinity<T> affinity(const Var<T>& psi, const Var<T>& phi) {
    Var<T> s = matmul(psi, phi, true, false);             // (M,M)
    Var<T> pre = mul_scalar(add(s, transpose2d(s)), T(0.5));
    return {pre, softmax_rows(pre)};
}

// f_j = w1 (Z_j A_j^T) + w2 (Z_I A_j^T)
template <typename T>
Var<T> cross_modulate(const Var<T>& a_norm, const Var<T>& z_j, const Var<T>& z_i,
                      const Var<T>& w1, const Var<T>& w2) {
    Var<T> t1 = matmul(z_j, a_norm, false, true);
    Var<T> t2 = matmul(z_i, a_norm, false, true);
    return add(matmul(w1, t1), matmul(w2, t2));
}

// Per-image token features, ready for the shared normalization stage.
template <typename T>
struct ComoPartial {
    Var<T> img;
    int H = 0, W = 0;  // full resolution
    int h = 0, w = 0;  // pooled resolution
    int s = 1;
    Var<T> fb, fd, self;  // (d,M), M = h*w
};

template <typename T>
ComoPartial<T> como_prepare(const Var<T>& img, const Var<T>& ob, const Var<T>& od,
                            const ComoBranchWeights<T>& br_i, const ComoBranchWeights<T>& br_b,
                            const ComoBranchWeights<T>& br_d, const ComoMixWeights<T>& mix,
                            int max_tokens) {
    ComoPartial<T> p;
    p.img = img;
    p.H = img.value().dim(1);
    p.W = img.value().dim(2);
    p.s = attention_stride(p.H, p.W, max_tokens);
    auto pool = [&](const Var<T>& x) { return p.s > 1 ? avg_pool(x, p.s) : x; };
    Var<T> pi = pool(img), pb = pool(ob), pd = pool(od);
    p.h = pi.value().dim(1);
    p.w = pi.value().dim(2);

    BranchTokens<T> ti = branch_project(pi, br_i);
    BranchTokens<T> tb = branch_project(pb, br_b);
    BranchTokens<T> td = branch_project(pd, br_d);
    Var<T> ab = affinity(tb.psi, tb.phi).norm;
    Var<T> ad = affinity(td.psi, td.phi).norm;
    Var<T> ai = affinity(ti.psi, ti.phi).norm;

    p.fb = cross_modulate(ab, tb.z, ti.z, mix.w1, mix.w2);
    p.fd = cross_modulate(ad, td.z, ti.z, mix.w1, mix.w2);
    p.self = matmul(mix.w3, matmul(ti.z, ai, false, true));
    return p;
}

template <typename T>
Var<T> como_finish(const ComoPartial<T>& p, const ComoMixWeights<T>& mix, const Var<T>& nb,
                   const Var<T>& nd) {
    Var<T> sum = add(add(nb, nd), p.self);
    Var<T> tok3 = add_row_bias(matmul(mix.w4.w, sum), mix.w4.b);  // (3,M)
    Var<T> map3 = reshape(tok3, {3, p.h, p.w});
    if (p.s > 1) map3 = upsample_bilinear(map3, p.H, p.W);
    return add(map3, p.img);
}

// I_y = w4( BN(f_B) + BN(f_D) + w3 (Z_I A_I^T) ) + I_x, computed on pooled
// tokens and upsampled back before the residual. Normalization statistics
// pool the token matrices of the whole batch, so the running averages see
// between-image variation and evaluation (which replays them) is consistent
// with training.
template <typename T>
std::vector<Var<T>> como_forward_batch(const std::vector<Var<T>>& imgs,
                                       const std::vector<Var<T>>& obs,
                                       const std::vector<Var<T>>& ods,
                                       const ComoBranchWeights<T>& br_i,
                                       const ComoBranchWeights<T>& br_b,
                                       const ComoBranchWeights<T>& br_d, ComoMixWeights<T>& mix,
                                       bool training, int max_tokens) {
    std::vector<ComoPartial<T>> parts;
    parts.reserve(imgs.size());
    std::vector<Var<T>> fbs, fds;
    for (size_t i = 0; i < imgs.size(); ++i) {
        parts.push_back(como_prepare(imgs[i], obs[i], ods[i], br_i, br_b, br_d, mix, max_tokens));
        fbs.push_back(parts.back().fb);
        fds.push_back(parts.back().fd);
    }
    Var<T> nb = batch_norm_tokens(concat_cols(fbs), mix.bnB_gamma, mix.bnB_beta, mix.bnB_state,
                                  training);
    Var<T> nd = batch_norm_tokens(concat_cols(fds), mix.bnD_gamma, mix.bnD_beta, mix.bnD_state,
                                  training);
    std::vector<Var<T>> out;
    out.reserve(parts.size());
    int off = 0;
    for (const auto& p : parts) {
        int M = p.fb.value().dim(1);
        out.push_back(como_finish(p, mix, slice_cols(nb, off, M), slice_cols(nd, off, M)));
        off += M;
    }
    return out;
}

template <typename T>
Var<T> como_forward(const Var<T>& img, const Var<T>& ob, const Var<T>& od,
                    const ComoBranchWeights<T>& br_i, const ComoBranchWeights<T>& br_b,
                    const ComoBranchWeights<T>& br_d, ComoMixWeights<T>& mix, bool training,
                    int max_tokens) {
    return como_forward_batch(std::vector<Var<T>>{img}, std::vector<Var<T>>{ob},
                              std::vector<Var<T>>{od}, br_i, br_b, br_d, mix, training,
                              max_tokens)[0];
}

// Plain non-local block over the 9-channel concatenation, used by the
// `nonlocal_concat` attention mode. The output projection is zero-initialized
// so this variant also starts as the identity.
template <typename T>
struct NonLocalWeights {
    MatP<T> theta, phi, g;  // (d,9)+(d)
    MatP<T> out;            // (3,d)+(3), zero-init

    void init(int d, std::mt19937& rg) {
        theta = {init::kaiming_mat<T>(d, 9, rg), init::zeros<T>({d})};
        phi = {init::kaiming_mat<T>(d, 9, rg), init::zeros<T>({d})};
        g = {init::kaiming_mat<T>(d, 9, rg), init::zeros<T>({d})};
        out = {init::zeros<T>({3, d}), init::zeros<T>({3})};
    }
    void collect(const std::string& p, std::vector<NamedParam<T>>& o) {
        o.push_back({p + ".theta.w", theta.w});
        o.push_back({p + ".theta.b", theta.b});
        o.push_back({p + ".phi.w", phi.w});
        o.push_back({p + ".phi.b", phi.b});
        o.push_back({p + ".g.w", g.w});
        o.push_back({p + ".g.b", g.b});
        o.push_back({p + ".out.w", out.w});
        o.push_back({p + ".out.b", out.b});
    }
};

template <typename T>
Var<T> nonlocal_forward(const Var<T>& img, const Var<T>& ob, const Var<T>& od,
                        const NonLocalWeights<T>& w, int max_tokens) {
    int H = img.value().dim(1), W = img.value().dim(2);
    Var<T> cat = concat_channels(std::vector<Var<T>>{img, ob, od});
    int s = attention_stride(H, W, max_tokens);
    Var<T> pooled = s > 1 ? avg_pool(cat, s) : cat;
    int h = pooled.value().dim(1), ww = pooled.value().dim(2);
    Var<T> x2d = reshape(pooled, {9, h * ww});
    auto lin = [&](const MatP<T>& m) { return add_row_bias(matmul(m.w, x2d), m.b); };
    Var<T> th = lin(w.theta), ph = lin(w.phi), gg = lin(w.g);
    Var<T> a = softmax_rows(matmul(th, ph, true, false));
    Var<T> y = matmul(gg, a, false, true);
    Var<T> tok3 = add_row_bias(matmul(w.out.w, y), w.out.b);
    Var<T> map3 = reshape(tok3, {3, h, ww});
    if (s > 1) map3 = upsample_bilinear(map3, H, W);
    return add(map3, img);
}

}  // namespace colorshift
