#pragma once

// Slow, obviously-correct reference implementations used to validate the fast
// paths. Everything here runs in double precision, is written as literal
// lattice sums with no shared machinery, and is capped to tiny instances so
// nobody is tempted to call it from production code.

#include <cmath>
#include <functional>
#include <vector>

#include "mwcnn/tensor.hpp"
#include "mwcnn/wavelet.hpp"

namespace mwcnn::oracle {

inline void check_small(const Tensor4<double>& x, const char* who) {
    if (x.n > 2 || x.c > 4 || x.h > 16 || x.w > 16)
        throw std::invalid_argument(std::string(who) +
                                    ": instance exceeds the 2x4x16x16 reference-size cap, got " +
                                    x.shape_str());
}

// Dilated cross-correlation with zero padding, written as the naive five-deep
// loop. out(o, i, j) = bias(o) + sum_{c,u,v} x(c, i + d*u - pad, j + d*v - pad) * w(o, c, u, v).
inline Tensor4<double> direct_conv2d_ref(const Tensor4<double>& x, const Tensor4<double>& w,
                                         const std::vector<double>& bias, int dilation, int pad) {
    check_small(x, "direct_conv2d_ref");
    if (w.c != x.c) throw std::invalid_argument("direct_conv2d_ref: channel mismatch");
    if (static_cast<int>(bias.size()) != w.n)
        throw std::invalid_argument("direct_conv2d_ref: bias length mismatch");
    if (dilation < 1) throw std::invalid_argument("direct_conv2d_ref: dilation must be >= 1");
    if (pad < 0) throw std::invalid_argument("direct_conv2d_ref: negative padding");

    const int oh = x.h + 2 * pad - dilation * (w.h - 1);
    const int ow = x.w + 2 * pad - dilation * (w.w - 1);
    if (oh < 1 || ow < 1) throw std::invalid_argument("direct_conv2d_ref: empty output");

    Tensor4<double> out(x.n, w.n, oh, ow);
    for (int ni = 0; ni < x.n; ++ni)
        for (int oc = 0; oc < w.n; ++oc)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double acc = bias[oc];
                    for (int ci = 0; ci < x.c; ++ci)
                        for (int u = 0; u < w.h; ++u)
                            for (int v = 0; v < w.w; ++v) {
                                const int r = i + dilation * u - pad;
                                const int s = j + dilation * v - pad;
                                if (r < 0 || r >= x.h || s < 0 || s >= x.w) continue;
                                acc += x.at(ni, ci, r, s) * w.at(oc, ci, u, v);
                            }
                    out.at(ni, oc, i, j) = acc;
                }
    return out;
}

// Haar analysis written directly as the 2x2 block sums and differences,
// sharing nothing with the FilterBank path.
inline SubbandQuad<double> dwt2_ref(const Tensor4<double>& x) {
    check_small(x, "dwt2_ref");
    if (x.h % 2 != 0 || x.w % 2 != 0)
        throw std::invalid_argument("dwt2_ref: spatial dims must be even");

    const int h2 = x.h / 2, w2 = x.w / 2;
    SubbandQuad<double> q;
    for (int s = 0; s < 4; ++s) q.band(s) = Tensor4<double>(x.n, x.c, h2, w2);
    for (int ni = 0; ni < x.n; ++ni)
        for (int ci = 0; ci < x.c; ++ci)
            for (int i = 0; i < h2; ++i)
                for (int j = 0; j < w2; ++j) {
                    const double a = x.at(ni, ci, 2 * i, 2 * j);
                    const double b = x.at(ni, ci, 2 * i, 2 * j + 1);
                    const double c = x.at(ni, ci, 2 * i + 1, 2 * j);
                    const double d = x.at(ni, ci, 2 * i + 1, 2 * j + 1);
                    q.x1.at(ni, ci, i, j) = a + b + c + d;
                    q.x2.at(ni, ci, i, j) = -a - b + c + d;
                    q.x3.at(ni, ci, i, j) = -a + b - c + d;
                    q.x4.at(ni, ci, i, j) = a - b - c + d;
                }
    return q;
}

struct EquivReport {
    // Max abs deviation per output phase: (even,even), (even,odd), (odd,even), (odd,odd).
    double max_abs_err[4] = {0, 0, 0, 0};
    double tol = 0;
    bool pass = false;
};

// Checks that a 3x3 convolution dilated by 2 equals, at each of the four
// output phases, a plain 3x3 convolution applied to the matching signed
// combination of the Haar subbands:
//   phase (even,even): (x1 - x2 - x3 + x4) / 4
//   phase (even,odd):  (x1 - x2 + x3 - x4) / 4
//   phase (odd,even):  (x1 + x2 - x3 - x4) / 4
//   phase (odd,odd):   (x1 + x2 + x3 + x4) / 4
// The comparison skips a one-pixel border of each subband where the two sides
// see different zero padding.
inline EquivReport dilated_equiv_check(const Tensor4<double>& x, const Tensor4<double>& kernel,
                                       double tol = 1e-5) {
    check_small(x, "dilated_equiv_check");
    if (x.c != 1 || kernel.n != 1 || kernel.c != 1 || kernel.h != 3 || kernel.w != 3)
        throw std::invalid_argument("dilated_equiv_check: expects single-channel x and a 1x1x3x3 kernel");
    if (x.h % 2 != 0 || x.w % 2 != 0)
        throw std::invalid_argument("dilated_equiv_check: spatial dims must be even");
    const int h2 = x.h / 2, w2 = x.w / 2;
    if (h2 < 3 || w2 < 3)
        throw std::invalid_argument("dilated_equiv_check: region too small for a 3x3 interior");

    const std::vector<double> no_bias(1, 0.0);
    const Tensor4<double> lhs = direct_conv2d_ref(x, kernel, no_bias, 2, 2);
    const SubbandQuad<double> q = dwt2_ref(x);

    EquivReport rep;
    rep.tol = tol;
    // Signs of (x1, x2, x3, x4) per phase.
    const int sign[4][4] = {{1, -1, -1, 1}, {1, -1, 1, -1}, {1, 1, -1, -1}, {1, 1, 1, 1}};
    for (int p = 0; p < 4; ++p) {
        Tensor4<double> combo(x.n, 1, h2, w2);
        for (int ni = 0; ni < x.n; ++ni)
            for (int i = 0; i < h2; ++i)
                for (int j = 0; j < w2; ++j) {
                    double v = 0;
                    for (int s = 0; s < 4; ++s) v += sign[p][s] * q.band(s).at(ni, 0, i, j);
                    combo.at(ni, 0, i, j) = v / 4.0;
                }
        const Tensor4<double> rhs = direct_conv2d_ref(combo, kernel, no_bias, 1, 1);
        const int pr = p >> 1, pc = p & 1;  // phase row/col offsets
        double worst = 0;
        for (int ni = 0; ni < x.n; ++ni)
            for (int i = 1; i < h2 - 1; ++i)
                for (int j = 1; j < w2 - 1; ++j) {
                    const double a = lhs.at(ni, 0, 2 * i + pr, 2 * j + pc);
                    const double b = rhs.at(ni, 0, i, j);
                    worst = std::max(worst, std::abs(a - b));
                }
        rep.max_abs_err[p] = worst;
    }
    rep.pass = true;
    for (int p = 0; p < 4; ++p) rep.pass = rep.pass && rep.max_abs_err[p] < tol;
    return rep;
}

// Central finite differences with per-coordinate step h_i = step * max(1, |theta_i|).
inline std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> theta,
    double step = 1e-3) {
    if (step <= 0) throw std::invalid_argument("finite_diff_grad: step must be positive");
    std::vector<double> grad(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        const double h = step * std::max(1.0, std::abs(saved));
        theta[i] = saved + h;
        const double fp = f(theta);
        theta[i] = saved - h;
        const double fm = f(theta);
        theta[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: objective returned a non-finite value");
        grad[i] = (fp - fm) / (2 * h);
    }
    return grad;
}

// Relative disagreement used by every gradient check: zero when both values
// are below absolute noise, |a - n| / max(|a|, |n|) otherwise.
inline double grad_rel_err(double analytic, double numeric, double both_small = 1e-6) {
    const double denom = std::max(std::abs(analytic), std::abs(numeric));
    if (denom < both_small) return 0.0;
    return std::abs(analytic - numeric) / denom;
}

}  // namespace mwcnn::oracle
