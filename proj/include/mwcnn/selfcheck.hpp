#pragma once

// Built-in verification battery behind the `selfcheck` subcommand. Each check
// compares a fast-path result against an independent route: the naive
// reference kernels, finite differences, or an algebraic identity that must
// hold exactly. Gradient checks run entirely in double precision so the
// finite-difference quotients are meaningful against a 1e-3 tolerance.

#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mwcnn/model.hpp"
#include "mwcnn/oracle.hpp"
#include "mwcnn/train.hpp"

namespace mwcnn::selfcheck {

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

inline double dot(const Tensor4<double>& a, const Tensor4<double>& b) {
    double s = 0;
    for (std::size_t k = 0; k < a.data.size(); ++k) s += a.data[k] * b.data[k];
    return s;
}

// Worst relative disagreement between an analytic gradient and central
// differences of f around theta. A coordinate whose coarse-step difference
// disagrees is re-measured with a 100x finer step before the disagreement is
// trusted: a step that straddles a ReLU kink averages the two one-sided
// slopes and can report order-1 error against a correct gradient, while a
// genuinely wrong gradient keeps disagreeing at any step.
inline double fd_worst(const std::function<double(const std::vector<double>&)>& f,
                       const std::vector<double>& theta, const std::vector<double>& analytic,
                       double step = 1e-3) {
    const std::vector<double> numeric = oracle::finite_diff_grad(f, theta, step);
    std::vector<double> th = theta;
    double worst = 0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        double err = oracle::grad_rel_err(analytic[i], numeric[i]);
        if (err > 1e-4) {
            const double saved = th[i];
            const double h = 0.01 * step * std::max(1.0, std::abs(saved));
            th[i] = saved + h;
            const double fp = f(th);
            th[i] = saved - h;
            const double fm = f(th);
            th[i] = saved;
            err = oracle::grad_rel_err(analytic[i], (fp - fm) / (2 * h));
        }
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace detail

// --- reference cross-checks ------------------------------------------------

inline double check_bank_definitions() {
    const FilterBank<double> h = haar_bank<double>();
    const std::vector<double> want_ll = {1, 1, 1, 1};
    const std::vector<double> want_lh = {-1, -1, 1, 1};
    const std::vector<double> want_hl = {-1, 1, -1, 1};
    const std::vector<double> want_hh = {1, -1, -1, 1};
    double worst = 0;
    for (int k = 0; k < 4; ++k) {
        worst = std::max(worst, std::abs(h.f_ll[k] - want_ll[k]));
        worst = std::max(worst, std::abs(h.f_lh[k] - want_lh[k]));
        worst = std::max(worst, std::abs(h.f_hl[k] - want_hl[k]));
        worst = std::max(worst, std::abs(h.f_hh[k] - want_hh[k]));
    }

    // The 4-tap bank must be orthonormal: unit-norm prototypes, orthogonal
    // low/high pair, and the 2-D filters exact outer products.
    const FilterBank<double> d = db2_bank<double>();
    double lo2 = 0, hi2 = 0, cross = 0;
    for (int k = 0; k < 4; ++k) {
        lo2 += d.lo[k] * d.lo[k];
        hi2 += d.hi[k] * d.hi[k];
        cross += d.lo[k] * d.hi[k];
    }
    worst = std::max(worst, std::abs(lo2 - 1.0));
    worst = std::max(worst, std::abs(hi2 - 1.0));
    worst = std::max(worst, std::abs(cross));
    for (int u = 0; u < 4; ++u)
        for (int v = 0; v < 4; ++v) {
            worst = std::max(worst, std::abs(d.f_ll[u * 4 + v] - d.lo[u] * d.lo[v]));
            worst = std::max(worst, std::abs(d.f_lh[u * 4 + v] - d.hi[u] * d.lo[v]));
            worst = std::max(worst, std::abs(d.f_hl[u * 4 + v] - d.lo[u] * d.hi[v]));
            worst = std::max(worst, std::abs(d.f_hh[u * 4 + v] - d.hi[u] * d.hi[v]));
        }
    return worst;
}

// Max |wpt_reconstruct(wpt_decompose(x)) - x| over random inputs, all levels
// in [1, max_levels], random even sizes up to 64.
template <typename T>
double check_reconstruction(const std::string& bank_name, int max_levels, int cases, Rng& rng) {
    const FilterBank<T> bank = make_bank<T>(bank_name);
    double worst = 0;
    for (int k = 0; k < cases; ++k) {
        const int levels = 1 + static_cast<int>(rng.below(std::uint64_t(max_levels)));
        const int div = 1 << levels;
        const int min_units = (bank.tap + div - 1) / div + 1;  // keep tap <= every level's size
        const int span = std::max(1, 64 / div - min_units + 1);
        const int h = div * (min_units + static_cast<int>(rng.below(std::uint64_t(span))));
        const int w = div * (min_units + static_cast<int>(rng.below(std::uint64_t(span))));
        Tensor4<T> x(1, 1, h, w);
        for (T& v : x.data) v = static_cast<T>(rng.uniform());
        const WptTree<T> tree = wpt_decompose(x, bank, levels);
        const Tensor4<T> back = wpt_reconstruct(tree, bank);
        for (std::size_t i = 0; i < x.data.size(); ++i)
            worst = std::max(worst, std::abs(double(back.data[i]) - double(x.data[i])));
    }
    return worst;
}

// The low-pass subband of the 2-tap bank must equal 2x2 block sums bit for
// bit on integer-valued inputs.
inline int check_ll_equals_sum_pool(int cases, Rng& rng) {
    const FilterBank<float> bank = haar_bank<float>();
    int mismatches = 0;
    for (int k = 0; k < cases; ++k) {
        const int h = 2 * (1 + static_cast<int>(rng.below(16)));
        const int w = 2 * (1 + static_cast<int>(rng.below(16)));
        Tensor4<float> x(1, 2, h, w);
        for (float& v : x.data) v = static_cast<float>(rng.below(256));
        if (!bitwise_equal(dwt2(x, bank).x1, sum_pool2(x))) ++mismatches;
    }
    return mismatches;
}

inline double check_conv_vs_reference(int cases, Rng& rng) {
    double worst = 0;
    for (int k = 0; k < cases; ++k) {
        const int n = 1 + static_cast<int>(rng.below(2));
        const int ci = 1 + static_cast<int>(rng.below(3));
        const int co = 1 + static_cast<int>(rng.below(3));
        const int h = 6 + 2 * static_cast<int>(rng.below(6));
        const int w = 6 + 2 * static_cast<int>(rng.below(6));
        const int d = 1 + static_cast<int>(rng.below(2));
        const Tensor4<double> x = randn<double>(rng, n, ci, h, w, 1.0);
        ConvParams<double> p = he_init<double>(rng, co, ci, 3, 3, d, d);
        for (double& b : p.bias) b = rng.normal();
        const Tensor4<double> fast = conv2d_fwd(x, p, static_cast<Tape<double>*>(nullptr));
        const Tensor4<double> ref = oracle::direct_conv2d_ref(x, p.weight, p.bias, d, d);
        for (std::size_t i = 0; i < fast.data.size(); ++i)
            worst = std::max(worst, std::abs(fast.data[i] - ref.data[i]));
    }
    return worst;
}

inline double check_dwt_vs_reference(int cases, Rng& rng) {
    const FilterBank<double> bank = haar_bank<double>();
    double worst = 0;
    for (int k = 0; k < cases; ++k) {
        const int h = 2 * (1 + static_cast<int>(rng.below(8)));
        const int w = 2 * (1 + static_cast<int>(rng.below(8)));
        const Tensor4<double> x = randn<double>(rng, 1, 2, h, w, 1.0);
        const SubbandQuad<double> fast = dwt2(x, bank);
        const SubbandQuad<double> ref = oracle::dwt2_ref(x);
        for (int s = 0; s < 4; ++s)
            for (std::size_t i = 0; i < fast.band(s).data.size(); ++i)
                worst = std::max(worst,
                                 std::abs(fast.band(s).data[i] - ref.band(s).data[i]));
    }
    return worst;
}

inline double check_dilated_phase_equivalence(int cases, Rng& rng, double tol = 1e-5) {
    double worst = 0;
    for (int k = 0; k < cases; ++k) {
        const int h = 12 + 2 * static_cast<int>(rng.below(3));
        const int w = 12 + 2 * static_cast<int>(rng.below(3));
        const Tensor4<double> x = randn<double>(rng, 1, 1, h, w, 1.0);
        const Tensor4<double> kernel = randn<double>(rng, 1, 1, 3, 3, 1.0);
        const oracle::EquivReport rep = oracle::dilated_equiv_check(x, kernel, tol);
        for (int p = 0; p < 4; ++p) worst = std::max(worst, rep.max_abs_err[p]);
    }
    return worst;
}

// --- gradient checks (double precision) ------------------------------------

inline double check_conv_gradient(Rng& rng, int dilation) {
    const Tensor4<double> x = randn<double>(rng, 2, 3, 6, 6, 1.0);
    ConvParams<double> p = he_init<double>(rng, 4, 3, 3, 3, dilation, dilation);
    for (double& b : p.bias) b = 0.1 * rng.normal();
    Tape<double> tape;
    const Tensor4<double> out = conv2d_fwd(x, p, &tape, 0);
    const Tensor4<double> proj = randn<double>(rng, out.n, out.c, out.h, out.w, 1.0);
    const ConvGrads<double> g = conv2d_bwd(proj, tape.pop<ConvRecord<double>>(0), p);

    std::vector<double> theta, analytic;
    theta.insert(theta.end(), x.data.begin(), x.data.end());
    theta.insert(theta.end(), p.weight.data.begin(), p.weight.data.end());
    theta.insert(theta.end(), p.bias.begin(), p.bias.end());
    analytic.insert(analytic.end(), g.gx.data.begin(), g.gx.data.end());
    analytic.insert(analytic.end(), g.gw.data.begin(), g.gw.data.end());
    analytic.insert(analytic.end(), g.gb.begin(), g.gb.end());

    auto f = [&](const std::vector<double>& th) {
        Tensor4<double> xx = x;
        ConvParams<double> pp = p;
        std::size_t at = 0;
        for (double& v : xx.data) v = th[at++];
        for (double& v : pp.weight.data) v = th[at++];
        for (double& v : pp.bias) v = th[at++];
        return detail::dot(conv2d_fwd(xx, pp, static_cast<Tape<double>*>(nullptr)), proj);
    };
    return detail::fd_worst(f, theta, analytic);
}

inline double check_bn_gradient(Rng& rng) {
    const Tensor4<double> x = randn<double>(rng, 3, 2, 4, 4, 1.0);
    BNParams<double> p;
    p.gamma = {1.1, 0.9};
    p.beta = {0.05, -0.1};
    p.running_mean.assign(2, 0.0);
    p.running_var.assign(2, 1.0);

    BNParams<double> scratch = p;
    Tape<double> tape;
    bn_fwd(x, scratch, Mode::train, &tape, 0);
    const BnRecord<double> rec = tape.pop<BnRecord<double>>(0);
    const Tensor4<double> proj = randn<double>(rng, 3, 2, 4, 4, 1.0);
    const BNGrads<double> g = bn_bwd(proj, rec, p);

    std::vector<double> theta, analytic;
    theta.insert(theta.end(), x.data.begin(), x.data.end());
    theta.insert(theta.end(), p.gamma.begin(), p.gamma.end());
    theta.insert(theta.end(), p.beta.begin(), p.beta.end());
    analytic.insert(analytic.end(), g.gx.data.begin(), g.gx.data.end());
    analytic.insert(analytic.end(), g.ggamma.begin(), g.ggamma.end());
    analytic.insert(analytic.end(), g.gbeta.begin(), g.gbeta.end());

    auto f = [&](const std::vector<double>& th) {
        Tensor4<double> xx = x;
        BNParams<double> pp = p;  // fresh running stats per evaluation
        std::size_t at = 0;
        for (double& v : xx.data) v = th[at++];
        for (double& v : pp.gamma) v = th[at++];
        for (double& v : pp.beta) v = th[at++];
        return detail::dot(bn_fwd(xx, pp, Mode::train, static_cast<Tape<double>*>(nullptr)), proj);
    };
    return detail::fd_worst(f, theta, analytic);
}

inline double check_relu_gradient(Rng& rng) {
    Tensor4<double> x = randn<double>(rng, 2, 2, 5, 5, 1.0);
    // Push values away from the kink so finite differences stay one-sided.
    for (double& v : x.data)
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
    Tape<double> tape;
    relu_fwd(x, &tape, 0);
    const ReluRecord<double> rec = tape.pop<ReluRecord<double>>(0);
    const Tensor4<double> proj = randn<double>(rng, 2, 2, 5, 5, 1.0);
    const Tensor4<double> g = relu_bwd(proj, rec);

    auto f = [&](const std::vector<double>& th) {
        Tensor4<double> xx = x;
        std::copy(th.begin(), th.end(), xx.data.begin());
        return detail::dot(relu_fwd(xx, static_cast<Tape<double>*>(nullptr)), proj);
    };
    return detail::fd_worst(f, x.data, g.data, 1e-4);
}

// The transform stacks are linear, so the analytic input gradient is the
// adjoint route used inside backward(); finite differences confirm both.
inline double check_transform_gradient(const std::string& bank_name, Rng& rng) {
    const FilterBank<double> bank = make_bank<double>(bank_name);
    const Tensor4<double> x = randn<double>(rng, 1, 2, 8, 8, 1.0);
    const Tensor4<double> proj_fwd = randn<double>(rng, 1, 8, 4, 4, 1.0);

    Tensor4<double> ga = iwt2(quad_unstack(proj_fwd), bank);
    for (double& v : ga.data) v *= 1.0 / bank.synth_gain;
    auto f1 = [&](const std::vector<double>& th) {
        Tensor4<double> xx = x;
        std::copy(th.begin(), th.end(), xx.data.begin());
        return detail::dot(quad_stack(dwt2(xx, bank)), proj_fwd);
    };
    double worst = detail::fd_worst(f1, x.data, ga.data);

    const Tensor4<double> s = randn<double>(rng, 1, 8, 4, 4, 1.0);
    const Tensor4<double> proj_inv = randn<double>(rng, 1, 2, 8, 8, 1.0);
    Tensor4<double> gs = quad_stack(dwt2(proj_inv, bank));
    for (double& v : gs.data) v *= bank.synth_gain;
    auto f2 = [&](const std::vector<double>& th) {
        Tensor4<double> ss = s;
        std::copy(th.begin(), th.end(), ss.data.begin());
        return detail::dot(iwt2(quad_unstack(ss), bank), proj_inv);
    };
    worst = std::max(worst, detail::fd_worst(f2, s.data, gs.data));
    return worst;
}

inline double check_pool_gradient(Rng& rng) {
    const Tensor4<double> x = randn<double>(rng, 1, 2, 6, 6, 1.0);
    const Tensor4<double> proj = randn<double>(rng, 1, 2, 3, 3, 1.0);
    const Tensor4<double> ga = sum_pool2_bwd(proj);
    auto f1 = [&](const std::vector<double>& th) {
        Tensor4<double> xx = x;
        std::copy(th.begin(), th.end(), xx.data.begin());
        return detail::dot(sum_pool2(xx), proj);
    };
    double worst = detail::fd_worst(f1, x.data, ga.data);

    const Tensor4<double> s = randn<double>(rng, 1, 2, 3, 3, 1.0);
    const Tensor4<double> proj2 = randn<double>(rng, 1, 2, 6, 6, 1.0);
    const Tensor4<double> gs = sum_unpool2_bwd(proj2);
    auto f2 = [&](const std::vector<double>& th) {
        Tensor4<double> ss = s;
        std::copy(th.begin(), th.end(), ss.data.begin());
        return detail::dot(sum_unpool2(ss), proj2);
    };
    worst = std::max(worst, detail::fd_worst(f2, s.data, gs.data));
    return worst;
}

namespace detail {

template <typename T>
std::vector<double> flatten_trainables(ModelGraph<T>& g) {
    std::vector<double> out;
    visit_params(g, [&out](const ParamRef<T>& p) {
        if (p.trainable) out.insert(out.end(), p.data->begin(), p.data->end());
    });
    return out;
}

template <typename T>
void load_trainables(ModelGraph<T>& g, const std::vector<double>& theta) {
    std::size_t at = 0;
    visit_params(g, [&theta, &at](const ParamRef<T>& p) {
        if (!p.trainable) return;
        for (T& v : *p.data) v = static_cast<T>(theta[at++]);
    });
    if (at != theta.size()) throw std::logic_error("load_trainables: length mismatch");
}

template <typename T>
std::vector<double> flatten_grads(ModelGraph<T>& g, ModelGrads<T>& mg) {
    std::vector<double> out;
    visit_trainable_pairs(g, mg, [&out](std::vector<T>&, std::vector<T>& grad) {
        out.insert(out.end(), grad.begin(), grad.end());
    });
    return out;
}

}  // namespace detail

// End-to-end: d loss / d theta for a tiny model against finite differences
// over every trainable scalar. The freshly built model has a zero final conv
// that would cut gradient flow to everything before it, so all trainables are
// jittered first.
inline double check_model_gradient(const MwcnnConfig& cfg, Rng& rng) {
    ModelGraph<double> base = build<double>(cfg, rng);
    visit_params(base, [&rng](const ParamRef<double>& p) {
        if (!p.trainable) return;
        for (double& v : *p.data) v += 0.1 * rng.normal();
    });
    const Tensor4<double> x = randn<double>(rng, 1, cfg.in_channels, 8, 8, 1.0);
    Tensor4<double> target = x;
    for (double& v : target.data) v += 0.3 * rng.normal();

    ModelGraph<double> g = base;
    Tape<double> tape;
    const Tensor4<double> pred = forward(g, x, Mode::train, &tape);
    const LossResult<double> lr = loss(pred, target);
    ModelGrads<double> mg = backward(g, tape, lr.grad);

    const std::vector<double> theta = detail::flatten_trainables(base);
    const std::vector<double> analytic = detail::flatten_grads(base, mg);

    auto f = [&](const std::vector<double>& th) {
        ModelGraph<double> m = base;  // fresh BN running stats per evaluation
        detail::load_trainables(m, th);
        return loss(forward(m, x, Mode::train), target).value;
    };
    return detail::fd_worst(f, theta, analytic);
}

// --- structural checks -----------------------------------------------------

template <typename T>
double check_wpt_identity(int levels, Rng& rng) {
    MwcnnConfig cfg;
    cfg.levels = levels;
    cfg.widths.assign(levels, 4);
    cfg.block_depth = 1;
    Rng build_rng(1);
    ModelGraph<T> g = build<T>(cfg, build_rng);
    const int div = 1 << levels;
    Tensor4<T> x(1, 1, div * 4, div * 4);
    for (T& v : x.data) v = static_cast<T>(rng.uniform());
    const Tensor4<T> y = forward_identity(g, x);
    double worst = 0;
    for (std::size_t k = 0; k < x.data.size(); ++k)
        worst = std::max(worst, std::abs(double(y.data[k]) - double(x.data[k])));
    return worst;
}

// Interior zeros of the theoretical footprint: positions inside the bounding
// box of the mask that the output cannot see.
template <typename T>
int mask_interior_holes(const Tensor4<T>& mask) {
    int r0 = mask.h, r1 = -1, c0 = mask.w, c1 = -1;
    for (int r = 0; r < mask.h; ++r)
        for (int c = 0; c < mask.w; ++c)
            if (mask.at(0, 0, r, c) != T(0)) {
                r0 = std::min(r0, r);
                r1 = std::max(r1, r);
                c0 = std::min(c0, c);
                c1 = std::max(c1, c);
            }
    if (r1 < 0) return -1;  // empty mask
    int holes = 0;
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
            if (mask.at(0, 0, r, c) == T(0)) ++holes;
    return holes;
}

struct GriddingReport {
    int chain_holes = 0;
    int ushape_holes = 0;
};

inline GriddingReport check_receptive_field_gridding() {
    GriddingReport rep;
    Rng rng(11);
    // Three dilation-2 convs with no residual: the classic checkerboard.
    ModelGraph<float> chain = conv_chain<float>(3, 4, 2, rng);
    chain.cfg.global_residual = false;
    rep.chain_holes = mask_interior_holes(receptive_field_mask(chain, 32, 32, 16, 16));

    MwcnnConfig cfg;
    cfg.levels = 1;
    cfg.widths = {4};
    cfg.block_depth = 2;
    ModelGraph<float> u = build<float>(cfg, rng);
    rep.ushape_holes = mask_interior_holes(receptive_field_mask(u, 32, 32, 16, 16));
    return rep;
}

inline double check_adam_first_step() {
    std::vector<double> p = {0.0, 1.0, -2.0};
    const std::vector<double> g = {0.5, -0.25, 1.0};
    std::vector<double> m(3, 0.0), v(3, 0.0);
    const double lr = 1e-3;
    adam_update(p, g, m, v, 1, lr);
    // With zero moments the first update is -lr * g / (|g| + eps): a signed
    // step of almost exactly lr.
    double worst = 0;
    const std::vector<double> want = {0.0 - lr, 1.0 + lr, -2.0 - lr};
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(p[k] - want[k]));
    return worst;
}

// A freshly built model is the identity, so its per-pixel error on noisy
// inputs is the noise variance itself.
inline double check_identity_init_mse(double sigma) {
    MwcnnConfig cfg;
    cfg.levels = 2;
    cfg.widths = {8, 16};
    cfg.block_depth = 2;
    Rng rng(5);
    ModelGraph<float> g = build<float>(cfg, rng);
    Tensor4<float> clean(8, 1, 64, 64);
    for (float& v : clean.data) v = static_cast<float>(rng.below(256));
    const Tensor4<float> noisy = add_gaussian_noise(clean, sigma, rng);
    const Tensor4<float> pred = forward(g, noisy, Mode::eval);
    double se = 0;
    for (std::size_t k = 0; k < pred.data.size(); ++k) {
        const double d = double(pred.data[k]) - double(clean.data[k]);
        se += d * d;
    }
    return se / double(pred.numel());
}

// --- aggregation -----------------------------------------------------------

inline std::vector<Check> run_all() {
    std::vector<Check> out;
    auto add = [&out](const std::string& name, bool pass, const std::string& detail) {
        out.push_back(Check{name, pass, detail});
    };

    {
        const double e = check_bank_definitions();
        add("bank_definitions", e < 1e-12, "max deviation " + detail::fmt(e));
    }
    {
        Rng rng(101);
        const double e32h = check_reconstruction<float>("haar", 3, 50, rng);
        const double e32d = check_reconstruction<float>("db2", 3, 50, rng);
        const double worst = std::max(e32h, e32d);
        add("perfect_reconstruction_f32", worst < 1e-5, "max err " + detail::fmt(worst));
    }
    {
        Rng rng(102);
        const double e64h = check_reconstruction<double>("haar", 3, 50, rng);
        const double e64d = check_reconstruction<double>("db2", 3, 50, rng);
        const double worst = std::max(e64h, e64d);
        add("perfect_reconstruction_f64", worst < 1e-10, "max err " + detail::fmt(worst));
    }
    {
        Rng rng(103);
        const int bad = check_ll_equals_sum_pool(100, rng);
        add("lowpass_equals_sum_pool", bad == 0, std::to_string(bad) + " of 100 cases differ");
    }
    {
        Rng rng(104);
        const double e = check_conv_vs_reference(100, rng);
        add("conv_vs_reference", e < 1e-9, "max err " + detail::fmt(e));
    }
    {
        Rng rng(105);
        const double e = check_dwt_vs_reference(100, rng);
        add("subband_vs_reference", e < 1e-12, "max err " + detail::fmt(e));
    }
    {
        Rng rng(106);
        const double e = check_dilated_phase_equivalence(100, rng);
        add("dilated_phase_equivalence", e < 1e-5, "max err " + detail::fmt(e));
    }
    {
        Rng rng(107);
        const double e = std::max(check_conv_gradient(rng, 1), check_conv_gradient(rng, 2));
        add("conv_gradient", e < 1e-3, "worst rel err " + detail::fmt(e));
    }
    {
        Rng rng(108);
        const double e = check_bn_gradient(rng);
        add("bn_gradient", e < 1e-3, "worst rel err " + detail::fmt(e));
    }
    {
        Rng rng(109);
        const double e = check_relu_gradient(rng);
        add("relu_gradient", e < 1e-3, "worst rel err " + detail::fmt(e));
    }
    {
        Rng rng(110);
        const double e = std::max(check_transform_gradient("haar", rng),
                                  check_transform_gradient("db2", rng));
        add("transform_gradient", e < 1e-3, "worst rel err " + detail::fmt(e));
    }
    {
        Rng rng(111);
        const double e = check_pool_gradient(rng);
        add("pool_gradient", e < 1e-3, "worst rel err " + detail::fmt(e));
    }
    {
        Rng rng(112);
        MwcnnConfig tiny;
        tiny.levels = 1;
        tiny.widths = {2};
        tiny.block_depth = 2;
        double e = check_model_gradient(tiny, rng);
        tiny.bank = tiny.bank_expand = "db2";
        e = std::max(e, check_model_gradient(tiny, rng));
        MwcnnConfig pool = tiny;
        pool.bank = pool.bank_expand = "haar";
        pool.downsampler = Downsampler::sum_pool;
        e = std::max(e, check_model_gradient(pool, rng));
        MwcnnConfig chain;
        chain.downsampler = Downsampler::dilated_chain;
        chain.widths = {2};
        chain.chain_depth = 3;
        e = std::max(e, check_model_gradient(chain, rng));
        add("model_gradient", e < 1e-3, "worst rel err " + detail::fmt(e));
    }
    {
        Rng rng(113);
        double e = 0;
        for (int l = 1; l <= 3; ++l) e = std::max(e, check_wpt_identity<float>(l, rng));
        add("wavelet_packet_identity", e < 1e-5, "max err " + detail::fmt(e));
    }
    {
        const GriddingReport rep = check_receptive_field_gridding();
        add("receptive_field_gridding", rep.chain_holes > 0 && rep.ushape_holes == 0,
            "dilated chain holes " + std::to_string(rep.chain_holes) + ", subband path holes " +
                std::to_string(rep.ushape_holes));
    }
    {
        const double e = check_adam_first_step();
        add("adam_first_step", e < 1e-6 * 1e-3 + 1e-10, "max deviation " + detail::fmt(e));
    }
    {
        const double mse = check_identity_init_mse(25.0);
        add("identity_init_noise_floor", std::abs(mse - 625.0) <= 0.03 * 625.0,
            "per-pixel mse " + detail::fmt(mse));
    }
    return out;
}

inline bool run_selfcheck(std::ostream& os) {
    const std::vector<Check> checks = run_all();
    int passed = 0;
    for (const Check& c : checks) {
        os << (c.pass ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
        if (c.pass) ++passed;
    }
    os << passed << "/" << checks.size() << " checks passed\n";
    return passed == static_cast<int>(checks.size());
}

}  // namespace mwcnn::selfcheck
