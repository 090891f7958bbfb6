#pragma once

// 2-D DWT as four stride-2 subband correlations, its exact inverse, and the
// recursive multi-level wavelet packet transform built from them.
//
// Index convention: subband s(i,j) correlates the filter with the input block
// anchored at (2i, 2j), 0-based. The Haar bank keeps the unnormalized +-1 taps
// with the 1/4 restored during synthesis, so the analysis step is literally
//   x1(i,j) = x(2i,2j) + x(2i,2j+1) + x(2i+1,2j) + x(2i+1,2j+1)
// and the synthesis step is
//   x(2i,2j)     = (x1 - x2 - x3 + x4)(i,j) / 4
//   x(2i,2j+1)   = (x1 - x2 + x3 - x4)(i,j) / 4
//   x(2i+1,2j)   = (x1 + x2 - x3 - x4)(i,j) / 4
//   x(2i+1,2j+1) = (x1 + x2 + x3 + x4)(i,j) / 4
// Filters wider than 2 taps wrap periodically at the edges, which keeps the
// transform exactly invertible on even-sized inputs.

#include <string>
#include <utility>
#include <vector>

#include "mwcnn/tensor.hpp"

namespace mwcnn {

template <typename T>
struct FilterBank {
    std::string name;
    int tap = 0;
    // tap x tap analysis filters, row-major.
    std::vector<T> f_ll, f_lh, f_hl, f_hh;
    // 1-D prototype taps the 2-D filters are outer products of.
    std::vector<T> lo, hi;
    // Scale applied once during synthesis; the analysis rows of the bank are
    // orthogonal with squared norm 1/synth_gain.
    T synth_gain = 1;

    const std::vector<T>& band(int i) const {
        switch (i) {
            case 0: return f_ll;
            case 1: return f_lh;
            case 2: return f_hl;
            case 3: return f_hh;
        }
        throw std::invalid_argument("FilterBank::band: index out of range");
    }
};

template <typename T>
FilterBank<T> haar_bank() {
    FilterBank<T> b;
    b.name = "haar";
    b.tap = 2;
    b.lo = {1, 1};
    b.hi = {-1, 1};
    b.f_ll = {1, 1, 1, 1};
    b.f_lh = {-1, -1, 1, 1};
    b.f_hl = {-1, 1, -1, 1};
    b.f_hh = {1, -1, -1, 1};
    b.synth_gain = T(0.25);
    return b;
}

// Orthonormal Daubechies-2 (D4) taps; the 2-D filters are separable outer
// products and the analysis operator is orthogonal, so synthesis is the plain
// adjoint (gain 1).
template <typename T>
FilterBank<T> db2_bank() {
    const double s3 = 1.7320508075688772;  // sqrt(3)
    const double norm = 5.656854249492381; // 4*sqrt(2)
    const double h[4] = {(1 + s3) / norm, (3 + s3) / norm, (3 - s3) / norm, (1 - s3) / norm};
    const double g[4] = {h[3], -h[2], h[1], -h[0]};

    FilterBank<T> b;
    b.name = "db2";
    b.tap = 4;
    b.lo.assign(h, h + 4);
    b.hi.assign(g, g + 4);
    b.f_ll.resize(16);
    b.f_lh.resize(16);
    b.f_hl.resize(16);
    b.f_hh.resize(16);
    for (int u = 0; u < 4; ++u) {
        for (int v = 0; v < 4; ++v) {
            b.f_ll[u * 4 + v] = static_cast<T>(h[u] * h[v]);
            b.f_lh[u * 4 + v] = static_cast<T>(g[u] * h[v]);
            b.f_hl[u * 4 + v] = static_cast<T>(h[u] * g[v]);
            b.f_hh[u * 4 + v] = static_cast<T>(g[u] * g[v]);
        }
    }
    b.synth_gain = 1;
    return b;
}

template <typename T>
FilterBank<T> make_bank(const std::string& name) {
    if (name == "haar") return haar_bank<T>();
    if (name == "db2") return db2_bank<T>();
    throw std::invalid_argument("unknown filter bank: " + name);
}

template <typename T>
struct SubbandQuad {
    Tensor4<T> x1, x2, x3, x4;

    const Tensor4<T>& band(int i) const {
        switch (i) {
            case 0: return x1;
            case 1: return x2;
            case 2: return x3;
            case 3: return x4;
        }
        throw std::invalid_argument("SubbandQuad::band: index out of range");
    }
    Tensor4<T>& band(int i) { return const_cast<Tensor4<T>&>(std::as_const(*this).band(i)); }
};

template <typename T>
SubbandQuad<T> dwt2(const Tensor4<T>& x, const FilterBank<T>& bank) {
    if (x.h % 2 != 0 || x.w % 2 != 0)
        throw std::invalid_argument("dwt2: spatial dims must be even, got " + x.shape_str());
    if (bank.tap > x.h || bank.tap > x.w)
        throw std::invalid_argument("dwt2: filter tap exceeds image size");

    const int h2 = x.h / 2, w2 = x.w / 2;
    SubbandQuad<T> q;
    for (int s = 0; s < 4; ++s) q.band(s) = Tensor4<T>(x.n, x.c, h2, w2);

    const int tap = bank.tap;
    for (int ni = 0; ni < x.n; ++ni) {
        for (int ci = 0; ci < x.c; ++ci) {
            const T* xp = x.slab(ni, ci);
            for (int s = 0; s < 4; ++s) {
                const std::vector<T>& f = bank.band(s);
                T* op = q.band(s).slab(ni, ci);
                for (int i = 0; i < h2; ++i) {
                    for (int j = 0; j < w2; ++j) {
                        T acc = 0;
                        for (int u = 0; u < tap; ++u) {
                            int r = 2 * i + u;
                            if (r >= x.h) r -= x.h;  // periodic wrap (tap > 2 only)
                            const T* xrow = xp + std::size_t(r) * x.w;
                            for (int v = 0; v < tap; ++v) {
                                int cidx = 2 * j + v;
                                if (cidx >= x.w) cidx -= x.w;
                                acc += xrow[cidx] * f[u * tap + v];
                            }
                        }
                        op[std::size_t(i) * w2 + j] = acc;
                    }
                }
            }
        }
    }
    return q;
}

template <typename T>
Tensor4<T> iwt2(const SubbandQuad<T>& q, const FilterBank<T>& bank) {
    for (int s = 1; s < 4; ++s)
        if (!q.band(s).same_shape(q.x1))
            throw std::invalid_argument("iwt2: subband shapes inconsistent");

    const int h2 = q.x1.h, w2 = q.x1.w;
    const int H = 2 * h2, W = 2 * w2;
    Tensor4<T> out(q.x1.n, q.x1.c, H, W);

    const int tap = bank.tap;
    for (int ni = 0; ni < out.n; ++ni) {
        for (int ci = 0; ci < out.c; ++ci) {
            T* op = out.slab(ni, ci);
            for (int s = 0; s < 4; ++s) {
                const std::vector<T>& f = bank.band(s);
                const T* sp = q.band(s).slab(ni, ci);
                for (int i = 0; i < h2; ++i) {
                    for (int j = 0; j < w2; ++j) {
                        const T val = sp[std::size_t(i) * w2 + j];
                        for (int u = 0; u < tap; ++u) {
                            int r = 2 * i + u;
                            if (r >= H) r -= H;
                            T* orow = op + std::size_t(r) * W;
                            for (int v = 0; v < tap; ++v) {
                                int cidx = 2 * j + v;
                                if (cidx >= W) cidx -= W;
                                orow[cidx] += val * f[u * tap + v];
                            }
                        }
                    }
                }
            }
            const std::size_t len = std::size_t(H) * W;
            for (std::size_t k = 0; k < len; ++k) op[k] *= bank.synth_gain;
        }
    }
    return out;
}

// Fixed channel stacking when a quad travels onward as one tensor:
// all channels of x1 first, then x2, x3, x4.
template <typename T>
Tensor4<T> quad_stack(const SubbandQuad<T>& q) {
    const Tensor4<T>& ref = q.x1;
    Tensor4<T> out(ref.n, 4 * ref.c, ref.h, ref.w);
    const std::size_t slab = std::size_t(ref.h) * ref.w;
    for (int ni = 0; ni < ref.n; ++ni)
        for (int s = 0; s < 4; ++s)
            for (int ci = 0; ci < ref.c; ++ci) {
                const T* src = q.band(s).slab(ni, ci);
                T* dst = out.slab(ni, s * ref.c + ci);
                std::copy(src, src + slab, dst);
            }
    return out;
}

template <typename T>
SubbandQuad<T> quad_unstack(const Tensor4<T>& t) {
    if (t.c % 4 != 0)
        throw std::invalid_argument("quad_unstack: channel count not divisible by 4");
    const int c = t.c / 4;
    SubbandQuad<T> q;
    for (int s = 0; s < 4; ++s) q.band(s) = Tensor4<T>(t.n, c, t.h, t.w);
    const std::size_t slab = std::size_t(t.h) * t.w;
    for (int ni = 0; ni < t.n; ++ni)
        for (int s = 0; s < 4; ++s)
            for (int ci = 0; ci < c; ++ci) {
                const T* src = t.slab(ni, s * c + ci);
                T* dst = q.band(s).slab(ni, ci);
                std::copy(src, src + slab, dst);
            }
    return q;
}

template <typename T>
struct WptTree {
    int levels = 0;
    // Deepest-level subbands in depth-first order: the full subtree of x1
    // first, then x2, x3, x4.
    std::vector<Tensor4<T>> leaves;
    int root_n = 0, root_c = 0, root_h = 0, root_w = 0;
};

namespace detail {

template <typename T>
void wpt_decompose_rec(const Tensor4<T>& x, const FilterBank<T>& bank, int levels,
                       std::vector<Tensor4<T>>& leaves) {
    SubbandQuad<T> q = dwt2(x, bank);
    if (levels == 1) {
        for (int s = 0; s < 4; ++s) leaves.push_back(std::move(q.band(s)));
        return;
    }
    for (int s = 0; s < 4; ++s) wpt_decompose_rec(q.band(s), bank, levels - 1, leaves);
}

template <typename T>
Tensor4<T> wpt_reconstruct_rec(const Tensor4<T>* leaves, int levels, const FilterBank<T>& bank) {
    if (levels == 1) {
        SubbandQuad<T> q;
        for (int s = 0; s < 4; ++s) q.band(s) = leaves[s];
        return iwt2(q, bank);
    }
    std::size_t stride = 1;
    for (int l = 1; l < levels; ++l) stride *= 4;
    SubbandQuad<T> q;
    for (int s = 0; s < 4; ++s)
        q.band(s) = wpt_reconstruct_rec(leaves + s * stride, levels - 1, bank);
    return iwt2(q, bank);
}

}  // namespace detail

template <typename T>
WptTree<T> wpt_decompose(const Tensor4<T>& x, const FilterBank<T>& bank, int levels) {
    if (levels < 1) throw std::invalid_argument("wpt_decompose: levels must be >= 1");
    const int div = 1 << levels;
    if (x.h % div != 0 || x.w % div != 0)
        throw std::invalid_argument("wpt_decompose: spatial dims must be divisible by 2^levels");

    WptTree<T> t;
    t.levels = levels;
    t.root_n = x.n;
    t.root_c = x.c;
    t.root_h = x.h;
    t.root_w = x.w;
    t.leaves.reserve(std::size_t(1) << (2 * levels));
    detail::wpt_decompose_rec(x, bank, levels, t.leaves);
    return t;
}

template <typename T>
Tensor4<T> wpt_reconstruct(const WptTree<T>& t, const FilterBank<T>& bank) {
    std::size_t expect = 1;
    for (int l = 0; l < t.levels; ++l) expect *= 4;
    if (t.levels < 1 || t.leaves.size() != expect)
        throw std::invalid_argument("wpt_reconstruct: malformed tree (leaf count " +
                                    std::to_string(t.leaves.size()) + ", expected " +
                                    std::to_string(expect) + ")");
    return detail::wpt_reconstruct_rec(t.leaves.data(), t.levels, bank);
}

}  // namespace mwcnn
