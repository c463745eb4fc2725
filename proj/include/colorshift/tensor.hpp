#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace colorshift {

// Dense row-major tensor. Shapes used throughout: (C,H,W) feature maps,
// (rows,cols) matrices, {1} scalars.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(numel_of(shape)), fill);
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("negative tensor dim");
            n *= d;
        }
        return n;
    }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape); }
    static Tensor full(std::vector<int> s, T val) { return Tensor(std::move(s), val); }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // (C,H,W) accessors
    T& at(int c, int y, int x) {
        return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    T at(int c, int y, int x) const {
        return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    // (rows,cols) accessors
    T& at2(int r, int c) { return v[static_cast<size_t>(r) * shape[1] + c]; }
    T at2(int r, int c) const { return v[static_cast<size_t>(r) * shape[1] + c]; }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string r = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + ")";
}

// Deterministic value generation. std:: distributions are
// implementation-defined, so uniform/normal are derived from the raw
// engine stream directly.
inline double canonical_u01(std::mt19937& g) {
    // 53 random bits -> [0,1)
    uint64_t hi = g() >> 5;   // 27 bits
    uint64_t lo = g() >> 6;   // 26 bits
    return (static_cast<double>(hi) * 67108864.0 + static_cast<double>(lo)) *
           (1.0 / 9007199254740992.0);
}

inline double normal_sample(std::mt19937& g) {
    // Box-Muller, first component only (keeps the stream position simple)
    double u1 = canonical_u01(g);
    double u2 = canonical_u01(g);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <typename T>
Tensor<T> randn(std::vector<int> shape, std::mt19937& g, T stddev = T(1)) {
    Tensor<T> t(std::move(shape));
    for (auto& x : t.v) x = static_cast<T>(normal_sample(g) * static_cast<double>(stddev));
    return t;
}

template <typename T>
Tensor<T> rand_uniform(std::vector<int> shape, std::mt19937& g, T lo, T hi) {
    Tensor<T> t(std::move(shape));
    for (auto& x : t.v)
        x = static_cast<T>(static_cast<double>(lo) +
                           canonical_u01(g) * (static_cast<double>(hi) - static_cast<double>(lo)));
    return t;
}

}  // namespace colorshift
