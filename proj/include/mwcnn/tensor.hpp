#pragma once

// Dense 4-D tensor in row-major (n, c, h, w) order plus a seedable RNG.
// Everything else in the library is built on these two types.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mwcnn {

template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor4() = default;

    Tensor4(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
        if (n < 1 || c < 1 || h < 1 || w < 1)
            throw std::invalid_argument("Tensor4: all dimensions must be >= 1");
        data.assign(checked_numel(n, c, h, w), T(0));
    }

    static std::size_t checked_numel(int n, int c, int h, int w) {
        // Guard the index space: every offset must fit in int64 arithmetic.
        std::uint64_t total = 1;
        for (std::uint64_t d : {std::uint64_t(n), std::uint64_t(c), std::uint64_t(h), std::uint64_t(w)}) {
            if (d != 0 && total > std::uint64_t(std::numeric_limits<std::int64_t>::max()) / d)
                throw std::invalid_argument("Tensor4: dimension product overflows index space");
            total *= d;
        }
        return static_cast<std::size_t>(total);
    }

    std::size_t numel() const { return data.size(); }

    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string shape_str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }

    std::size_t index(int ni, int ci, int hi, int wi) const {
        return ((std::size_t(ni) * c + ci) * h + hi) * w + wi;
    }

    T& at(int ni, int ci, int hi, int wi) { return data[index(ni, ci, hi, wi)]; }
    const T& at(int ni, int ci, int hi, int wi) const { return data[index(ni, ci, hi, wi)]; }

    // Pointer to the start of one (n, c) spatial slab.
    T* slab(int ni, int ci) { return data.data() + index(ni, ci, 0, 0); }
    const T* slab(int ni, int ci) const { return data.data() + index(ni, ci, 0, 0); }
};

using Tensor4f = Tensor4<float>;
using Tensor4d = Tensor4<double>;

template <typename T>
Tensor4<T> zeros(int n, int c, int h, int w) {
    return Tensor4<T>(n, c, h, w);
}

template <typename T>
Tensor4<T> full(int n, int c, int h, int w, T value) {
    Tensor4<T> t(n, c, h, w);
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
}

enum class EwiseOp { add, sub, mul };

template <typename T>
Tensor4<T> ewise(EwiseOp op, const Tensor4<T>& a, const Tensor4<T>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("ewise: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor4<T> out(a.n, a.c, a.h, a.w);
    const std::size_t len = a.numel();
    switch (op) {
        case EwiseOp::add:
            for (std::size_t i = 0; i < len; ++i) out.data[i] = a.data[i] + b.data[i];
            break;
        case EwiseOp::sub:
            for (std::size_t i = 0; i < len; ++i) out.data[i] = a.data[i] - b.data[i];
            break;
        case EwiseOp::mul:
            for (std::size_t i = 0; i < len; ++i) out.data[i] = a.data[i] * b.data[i];
            break;
    }
    return out;
}

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) { return ewise(EwiseOp::add, a, b); }
template <typename T>
Tensor4<T> sub(const Tensor4<T>& a, const Tensor4<T>& b) { return ewise(EwiseOp::sub, a, b); }
template <typename T>
Tensor4<T> mul(const Tensor4<T>& a, const Tensor4<T>& b) { return ewise(EwiseOp::mul, a, b); }

template <typename T>
Tensor4<T> scale(const Tensor4<T>& a, T s) {
    Tensor4<T> out = a;
    for (auto& v : out.data) v *= s;
    return out;
}

template <typename T>
bool bitwise_equal(const Tensor4<T>& a, const Tensor4<T>& b) {
    return a.same_shape(b) && a.data == b.data;
}

template <typename T>
bool all_finite(const Tensor4<T>& t) {
    for (T v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

template <typename T>
void ensure_finite(const Tensor4<T>& t, const char* what) {
    if (!all_finite(t))
        throw std::runtime_error(std::string("non-finite values in ") + what);
}

template <typename To, typename From>
Tensor4<To> cast(const Tensor4<From>& t) {
    Tensor4<To> out(t.n, t.c, t.h, t.w);
    for (std::size_t i = 0; i < t.numel(); ++i) out.data[i] = static_cast<To>(t.data[i]);
    return out;
}

// xoshiro256++ seeded through splitmix64, with a Box-Muller pair cache for
// normal deviates. Identical seeds give identical streams on every platform,
// which the tests and checkpoint format rely on.
struct Rng {
    std::uint64_t s[4];
    bool has_spare = false;
    double spare = 0.0;

    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& si : s) si = splitmix64(x);
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Unbiased integer in [0, bound) by rejection.
    std::uint64_t below(std::uint64_t bound) {
        if (bound == 0) throw std::invalid_argument("Rng::below: bound must be positive");
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    double normal() {
        if (has_spare) {
            has_spare = false;
            return spare;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare = r * std::sin(theta);
        has_spare = true;
        return r * std::cos(theta);
    }
};

template <typename T>
Tensor4<T> randn(Rng& rng, int n, int c, int h, int w, double std_dev) {
    if (!(std_dev > 0.0))
        throw std::invalid_argument("randn: std must be positive");
    Tensor4<T> t(n, c, h, w);
    for (auto& v : t.data) v = static_cast<T>(rng.normal() * std_dev);
    return t;
}

}  // namespace mwcnn
