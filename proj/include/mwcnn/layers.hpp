#pragma once

// Trainable layers with explicit forward/backward pairs. Forward passes
// record exactly what the matching backward needs on a caller-owned tape;
// backward pops records in reverse push order and verifies the layer id, so a
// mixed-up call sequence fails loudly instead of producing silent garbage.
//
// conv2d computes a cross-correlation (no kernel flip):
//   out(o, i, j) = bias(o) + sum_{c,u,v} x(c, i + d*u - pad, j + d*v - pad) * w(o, c, u, v)
// with zero padding. pad == dilation keeps 3x3 kernels size-preserving.

#include <cmath>
#include <cstdint>
#include <variant>
#include <vector>

#include "mwcnn/tensor.hpp"

namespace mwcnn {

template <typename T>
struct ConvParams {
    Tensor4<T> weight;  // (out_c, in_c, kh, kw)
    std::vector<T> bias;
    int dilation = 1;
    int pad = 1;
};

template <typename T>
struct BNParams {
    std::vector<T> gamma, beta;
    std::vector<T> running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;
};

enum class Mode { train, eval };

template <typename T>
struct ConvRecord {
    int layer_id = -1;
    Tensor4<T> x;
};

template <typename T>
struct BnRecord {
    int layer_id = -1;
    Tensor4<T> xhat;
    std::vector<T> inv_std;
};

template <typename T>
struct ReluRecord {
    int layer_id = -1;
    Tensor4<T> x;
};

template <typename T>
using TapeRecord = std::variant<ConvRecord<T>, BnRecord<T>, ReluRecord<T>>;

template <typename T>
struct Tape {
    std::vector<TapeRecord<T>> records;

    void push(TapeRecord<T> r) { records.push_back(std::move(r)); }
    bool empty() const { return records.empty(); }
    std::size_t size() const { return records.size(); }
    void clear() { records.clear(); }

    // Pops the top record, which must hold R and carry the expected id.
    template <typename R>
    R pop(int expect_id) {
        if (records.empty()) throw std::runtime_error("tape underflow: no record to pop");
        if (!std::holds_alternative<R>(records.back()))
            throw std::runtime_error("tape record mismatch: wrong layer kind on top");
        R rec = std::move(std::get<R>(records.back()));
        records.pop_back();
        if (expect_id >= 0 && rec.layer_id != expect_id)
            throw std::runtime_error("tape record mismatch: expected layer id " +
                                     std::to_string(expect_id) + ", found " +
                                     std::to_string(rec.layer_id));
        return rec;
    }
};

template <typename T>
Tensor4<T> conv2d_fwd(const Tensor4<T>& x, const ConvParams<T>& p, Tape<T>* tape,
                      int layer_id = -1) {
    const Tensor4<T>& w = p.weight;
    if (w.c != x.c)
        throw std::invalid_argument("conv2d_fwd: weight expects " + std::to_string(w.c) +
                                    " input channels, got " + std::to_string(x.c));
    if (static_cast<int>(p.bias.size()) != w.n)
        throw std::invalid_argument("conv2d_fwd: bias length mismatch");
    if (p.dilation < 1) throw std::invalid_argument("conv2d_fwd: dilation must be >= 1");
    if (p.pad < 0) throw std::invalid_argument("conv2d_fwd: negative padding");

    const int oh = x.h + 2 * p.pad - p.dilation * (w.h - 1);
    const int ow = x.w + 2 * p.pad - p.dilation * (w.w - 1);
    if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d_fwd: empty output for input " + x.shape_str());

    Tensor4<T> out(x.n, w.n, oh, ow);
    for (int ni = 0; ni < x.n; ++ni) {
        for (int oc = 0; oc < w.n; ++oc) {
            T* outp = out.slab(ni, oc);
            const std::size_t olen = std::size_t(oh) * ow;
            const T b = p.bias[oc];
            for (std::size_t k = 0; k < olen; ++k) outp[k] = b;
            for (int ci = 0; ci < x.c; ++ci) {
                const T* xp = x.slab(ni, ci);
                for (int u = 0; u < w.h; ++u) {
                    for (int v = 0; v < w.w; ++v) {
                        const T wv = w.at(oc, ci, u, v);
                        const int roff = u * p.dilation - p.pad;
                        const int coff = v * p.dilation - p.pad;
                        const int i_lo = std::max(0, -roff);
                        const int i_hi = std::min(oh, x.h - roff);
                        const int j_lo = std::max(0, -coff);
                        const int j_hi = std::min(ow, x.w - coff);
                        for (int i = i_lo; i < i_hi; ++i) {
                            const T* xrow = xp + std::size_t(i + roff) * x.w + coff;
                            T* orow = outp + std::size_t(i) * ow;
                            for (int j = j_lo; j < j_hi; ++j) orow[j] += xrow[j] * wv;
                        }
                    }
                }
            }
        }
    }
    if (tape) tape->push(ConvRecord<T>{layer_id, x});
    return out;
}

template <typename T>
struct ConvGrads {
    Tensor4<T> gx;
    Tensor4<T> gw;
    std::vector<T> gb;
};

template <typename T>
ConvGrads<T> conv2d_bwd(const Tensor4<T>& gout, const ConvRecord<T>& rec, const ConvParams<T>& p) {
    const Tensor4<T>& x = rec.x;
    const Tensor4<T>& w = p.weight;
    if (gout.n != x.n || gout.c != w.n)
        throw std::invalid_argument("conv2d_bwd: gradient shape mismatch");

    ConvGrads<T> g;
    g.gx = Tensor4<T>(x.n, x.c, x.h, x.w);
    g.gw = Tensor4<T>(w.n, w.c, w.h, w.w);
    g.gb.assign(w.n, T(0));

    const int oh = gout.h, ow = gout.w;
    for (int ni = 0; ni < x.n; ++ni) {
        for (int oc = 0; oc < w.n; ++oc) {
            const T* gp = gout.slab(ni, oc);
            const std::size_t olen = std::size_t(oh) * ow;
            T bacc = 0;
            for (std::size_t k = 0; k < olen; ++k) bacc += gp[k];
            g.gb[oc] += bacc;
            for (int ci = 0; ci < x.c; ++ci) {
                const T* xp = x.slab(ni, ci);
                T* gxp = g.gx.slab(ni, ci);
                for (int u = 0; u < w.h; ++u) {
                    for (int v = 0; v < w.w; ++v) {
                        const int roff = u * p.dilation - p.pad;
                        const int coff = v * p.dilation - p.pad;
                        const int i_lo = std::max(0, -roff);
                        const int i_hi = std::min(oh, x.h - roff);
                        const int j_lo = std::max(0, -coff);
                        const int j_hi = std::min(ow, x.w - coff);
                        const T wv = w.at(oc, ci, u, v);
                        T wacc = 0;
                        for (int i = i_lo; i < i_hi; ++i) {
                            const T* xrow = xp + std::size_t(i + roff) * x.w + coff;
                            T* gxrow = gxp + std::size_t(i + roff) * x.w + coff;
                            const T* grow = gp + std::size_t(i) * ow;
                            for (int j = j_lo; j < j_hi; ++j) {
                                wacc += grow[j] * xrow[j];
                                gxrow[j] += grow[j] * wv;
                            }
                        }
                        g.gw.at(oc, ci, u, v) += wacc;
                    }
                }
            }
        }
    }
    return g;
}

// Batch norm over (n, h, w) per channel. Training mode uses biased batch
// variance and folds it into the running estimates with the given momentum;
// eval mode applies the running estimates only. Backward requires a
// train-mode record.
template <typename T>
Tensor4<T> bn_fwd(const Tensor4<T>& x, BNParams<T>& p, Mode mode, Tape<T>* tape,
                  int layer_id = -1) {
    const int C = x.c;
    if (static_cast<int>(p.gamma.size()) != C || static_cast<int>(p.beta.size()) != C ||
        static_cast<int>(p.running_mean.size()) != C || static_cast<int>(p.running_var.size()) != C)
        throw std::invalid_argument("bn_fwd: parameter length does not match channel count");

    Tensor4<T> out(x.n, x.c, x.h, x.w);
    const std::size_t slab = std::size_t(x.h) * x.w;

    if (mode == Mode::eval) {
        for (int ci = 0; ci < C; ++ci) {
            const double inv = 1.0 / std::sqrt(double(p.running_var[ci]) + p.eps);
            const T a = static_cast<T>(double(p.gamma[ci]) * inv);
            const T b = static_cast<T>(double(p.beta[ci]) - double(p.gamma[ci]) * inv * double(p.running_mean[ci]));
            for (int ni = 0; ni < x.n; ++ni) {
                const T* xp = x.slab(ni, ci);
                T* op = out.slab(ni, ci);
                for (std::size_t k = 0; k < slab; ++k) op[k] = a * xp[k] + b;
            }
        }
        return out;
    }

    const std::int64_t m = std::int64_t(x.n) * x.h * x.w;
    if (m < 2)
        throw std::invalid_argument("bn_fwd: training statistics need n*h*w >= 2 samples per channel");

    BnRecord<T> rec;
    rec.layer_id = layer_id;
    rec.xhat = Tensor4<T>(x.n, x.c, x.h, x.w);
    rec.inv_std.resize(C);

    for (int ci = 0; ci < C; ++ci) {
        double sum = 0, sumsq = 0;
        for (int ni = 0; ni < x.n; ++ni) {
            const T* xp = x.slab(ni, ci);
            for (std::size_t k = 0; k < slab; ++k) {
                const double v = xp[k];
                sum += v;
                sumsq += v * v;
            }
        }
        const double mean = sum / double(m);
        double var = sumsq / double(m) - mean * mean;
        if (var < 0) var = 0;  // clamp the tiny negative from cancellation
        const double inv = 1.0 / std::sqrt(var + p.eps);
        rec.inv_std[ci] = static_cast<T>(inv);

        const T gmm = p.gamma[ci], bta = p.beta[ci];
        for (int ni = 0; ni < x.n; ++ni) {
            const T* xp = x.slab(ni, ci);
            T* hp = rec.xhat.slab(ni, ci);
            T* op = out.slab(ni, ci);
            for (std::size_t k = 0; k < slab; ++k) {
                const T xh = static_cast<T>((double(xp[k]) - mean) * inv);
                hp[k] = xh;
                op[k] = gmm * xh + bta;
            }
        }
        p.running_mean[ci] = static_cast<T>((1.0 - p.momentum) * double(p.running_mean[ci]) + p.momentum * mean);
        p.running_var[ci] = static_cast<T>((1.0 - p.momentum) * double(p.running_var[ci]) + p.momentum * var);
    }
    if (tape) tape->push(std::move(rec));
    return out;
}

template <typename T>
struct BNGrads {
    Tensor4<T> gx;
    std::vector<T> ggamma, gbeta;
};

template <typename T>
BNGrads<T> bn_bwd(const Tensor4<T>& gout, const BnRecord<T>& rec, const BNParams<T>& p) {
    if (!gout.same_shape(rec.xhat))
        throw std::invalid_argument("bn_bwd: gradient shape mismatch");

    const int C = gout.c;
    const std::size_t slab = std::size_t(gout.h) * gout.w;
    const double m = double(std::int64_t(gout.n) * gout.h * gout.w);

    BNGrads<T> g;
    g.gx = Tensor4<T>(gout.n, gout.c, gout.h, gout.w);
    g.ggamma.assign(C, T(0));
    g.gbeta.assign(C, T(0));

    for (int ci = 0; ci < C; ++ci) {
        double sum_g = 0, sum_gx = 0;
        for (int ni = 0; ni < gout.n; ++ni) {
            const T* gp = gout.slab(ni, ci);
            const T* hp = rec.xhat.slab(ni, ci);
            for (std::size_t k = 0; k < slab; ++k) {
                sum_g += gp[k];
                sum_gx += double(gp[k]) * hp[k];
            }
        }
        g.ggamma[ci] = static_cast<T>(sum_gx);
        g.gbeta[ci] = static_cast<T>(sum_g);

        const double mean_g = sum_g / m;
        const double mean_gx = sum_gx / m;
        const double scale = double(p.gamma[ci]) * rec.inv_std[ci];
        for (int ni = 0; ni < gout.n; ++ni) {
            const T* gp = gout.slab(ni, ci);
            const T* hp = rec.xhat.slab(ni, ci);
            T* op = g.gx.slab(ni, ci);
            for (std::size_t k = 0; k < slab; ++k)
                op[k] = static_cast<T>(scale * (double(gp[k]) - mean_g - double(hp[k]) * mean_gx));
        }
    }
    return g;
}

template <typename T>
Tensor4<T> relu_fwd(const Tensor4<T>& x, Tape<T>* tape, int layer_id = -1) {
    Tensor4<T> out(x.n, x.c, x.h, x.w);
    const std::size_t len = x.numel();
    for (std::size_t k = 0; k < len; ++k) out.data[k] = x.data[k] > T(0) ? x.data[k] : T(0);
    if (tape) tape->push(ReluRecord<T>{layer_id, x});
    return out;
}

// Subgradient at 0 is 0.
template <typename T>
Tensor4<T> relu_bwd(const Tensor4<T>& gout, const ReluRecord<T>& rec) {
    if (!gout.same_shape(rec.x)) throw std::invalid_argument("relu_bwd: gradient shape mismatch");
    Tensor4<T> gx(gout.n, gout.c, gout.h, gout.w);
    const std::size_t len = gout.numel();
    for (std::size_t k = 0; k < len; ++k)
        gx.data[k] = rec.x.data[k] > T(0) ? gout.data[k] : T(0);
    return gx;
}

// Non-overlapping 2x2 block sums; channel count is preserved.
template <typename T>
Tensor4<T> sum_pool2(const Tensor4<T>& x) {
    if (x.h % 2 != 0 || x.w % 2 != 0)
        throw std::invalid_argument("sum_pool2: spatial dims must be even, got " + x.shape_str());
    Tensor4<T> out(x.n, x.c, x.h / 2, x.w / 2);
    for (int ni = 0; ni < x.n; ++ni)
        for (int ci = 0; ci < x.c; ++ci) {
            const T* xp = x.slab(ni, ci);
            T* op = out.slab(ni, ci);
            for (int i = 0; i < out.h; ++i)
                for (int j = 0; j < out.w; ++j) {
                    const T* r0 = xp + std::size_t(2 * i) * x.w + 2 * j;
                    const T* r1 = r0 + x.w;
                    op[std::size_t(i) * out.w + j] = (r0[0] + r0[1]) + (r1[0] + r1[1]);
                }
        }
    return out;
}

// Adjoint of sum_pool2: every input cell receives its block's gradient.
template <typename T>
Tensor4<T> sum_pool2_bwd(const Tensor4<T>& gout) {
    Tensor4<T> gx(gout.n, gout.c, gout.h * 2, gout.w * 2);
    for (int ni = 0; ni < gout.n; ++ni)
        for (int ci = 0; ci < gout.c; ++ci) {
            const T* gp = gout.slab(ni, ci);
            T* xp = gx.slab(ni, ci);
            for (int i = 0; i < gx.h; ++i)
                for (int j = 0; j < gx.w; ++j)
                    xp[std::size_t(i) * gx.w + j] = gp[std::size_t(i / 2) * gout.w + j / 2];
        }
    return gx;
}

// Upsampling that inverts sum_pool2 on block-constant images: each value is
// spread over its 2x2 block with gain 1/4.
template <typename T>
Tensor4<T> sum_unpool2(const Tensor4<T>& x) {
    Tensor4<T> out(x.n, x.c, x.h * 2, x.w * 2);
    for (int ni = 0; ni < x.n; ++ni)
        for (int ci = 0; ci < x.c; ++ci) {
            const T* xp = x.slab(ni, ci);
            T* op = out.slab(ni, ci);
            for (int i = 0; i < out.h; ++i)
                for (int j = 0; j < out.w; ++j)
                    op[std::size_t(i) * out.w + j] = xp[std::size_t(i / 2) * x.w + j / 2] / T(4);
        }
    return out;
}

template <typename T>
Tensor4<T> sum_unpool2_bwd(const Tensor4<T>& gout) {
    if (gout.h % 2 != 0 || gout.w % 2 != 0)
        throw std::invalid_argument("sum_unpool2_bwd: spatial dims must be even");
    Tensor4<T> gx(gout.n, gout.c, gout.h / 2, gout.w / 2);
    for (int ni = 0; ni < gout.n; ++ni)
        for (int ci = 0; ci < gout.c; ++ci) {
            const T* gp = gout.slab(ni, ci);
            T* xp = gx.slab(ni, ci);
            for (int i = 0; i < gx.h; ++i)
                for (int j = 0; j < gx.w; ++j) {
                    const T* r0 = gp + std::size_t(2 * i) * gout.w + 2 * j;
                    const T* r1 = r0 + gout.w;
                    xp[std::size_t(i) * gx.w + j] = ((r0[0] + r0[1]) + (r1[0] + r1[1])) / T(4);
                }
        }
    return gx;
}

// Kaiming-normal fan-in init for a ReLU network: std = sqrt(2 / (in_c*kh*kw)),
// bias zero.
template <typename T>
ConvParams<T> he_init(Rng& rng, int out_c, int in_c, int kh, int kw, int dilation = 1,
                      int pad = 1) {
    const std::int64_t fan_in = std::int64_t(in_c) * kh * kw;
    if (out_c < 1 || fan_in < 1) throw std::invalid_argument("he_init: empty fan");
    ConvParams<T> p;
    p.weight = randn<T>(rng, out_c, in_c, kh, kw, std::sqrt(2.0 / double(fan_in)));
    p.bias.assign(out_c, T(0));
    p.dilation = dilation;
    p.pad = pad;
    return p;
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One ADAM update on a flat parameter vector. t is the 1-based step count
// after increment; moments update in place.
template <typename T>
void adam_update(std::vector<T>& param, const std::vector<T>& grad, std::vector<T>& m,
                 std::vector<T>& v, std::int64_t t, double lr, const AdamConfig& cfg = {}) {
    if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size())
        throw std::invalid_argument("adam_update: buffer length mismatch");
    if (t < 1) throw std::invalid_argument("adam_update: step count must be >= 1");
    const double c1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        const double mi = cfg.beta1 * double(m[i]) + (1.0 - cfg.beta1) * g;
        const double vi = cfg.beta2 * double(v[i]) + (1.0 - cfg.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        param[i] = static_cast<T>(double(param[i]) - lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps));
    }
}

}  // namespace mwcnn
