#pragma once

// The U-shaped restoration network. Each contracting level applies the
// subband transform (channels x4, spatial /2) followed by a stack of
// conv+BN+ReLU units; each expanding level applies the mirror stack whose
// last conv restores the channel count the inverse transform needs, applies
// the inverse transform, and adds the activation saved at the matching
// contracting level. At the outermost level that sum is the global residual:
// the network predicts a correction to its input. The final conv has no
// BN/ReLU and starts at zero, so a freshly built model is exactly the
// identity map.
//
// Two ablation bodies share the interface: sum_pool swaps the subband
// transforms for 2x2 block sums and quarter-gain unpooling (channel count
// unchanged), and dilated_chain is a plain fully-convolutional stack with
// dilation 2 everywhere plus the same global residual.

#include <cstdint>
#include <string>
#include <vector>

#include "mwcnn/layers.hpp"
#include "mwcnn/tensor.hpp"
#include "mwcnn/wavelet.hpp"

namespace mwcnn {

enum class Downsampler : std::uint8_t { dwt = 0, sum_pool = 1, dilated_chain = 2 };

inline const char* downsampler_name(Downsampler d) {
    switch (d) {
        case Downsampler::dwt: return "dwt";
        case Downsampler::sum_pool: return "sum_pool";
        case Downsampler::dilated_chain: return "dilated_chain";
    }
    return "?";
}

inline Downsampler downsampler_from_name(const std::string& s) {
    if (s == "dwt") return Downsampler::dwt;
    if (s == "sum_pool") return Downsampler::sum_pool;
    if (s == "dilated_chain") return Downsampler::dilated_chain;
    throw std::invalid_argument("unknown downsampler: " + s);
}

struct MwcnnConfig {
    int levels = 3;
    int block_depth = 4;              // convs per contracting block (and per expanding block)
    std::vector<int> widths = {16, 32, 64};
    std::string bank = "haar";        // contracting transform
    std::string bank_expand = "haar"; // expanding transform
    Downsampler downsampler = Downsampler::dwt;
    bool global_residual = true;
    int in_channels = 1;
    // Mixed analysis/synthesis banks are not inverses of each other; creation
    // refuses them unless this is set.
    bool allow_noninvertible = false;
    // dilated_chain only: total conv count (0 derives 2*levels*block_depth to
    // match the U-shape's budget) and the dilation used throughout.
    int chain_depth = 0;
    int chain_dilation = 2;

    bool operator==(const MwcnnConfig&) const = default;
};

template <typename T>
struct ConvUnit {
    ConvParams<T> conv;
    bool batch_norm = false;
    BNParams<T> bn;
    bool relu = false;
    int id = -1;  // tape id, assigned in forward order
};

template <typename T>
struct ModelGraph {
    MwcnnConfig cfg;
    FilterBank<T> bank_down, bank_up;
    // down[i] and up[i] are the blocks of level i+1; forward runs down[0..L)
    // then up[L-1 .. 0].
    std::vector<std::vector<ConvUnit<T>>> down, up;
    std::vector<ConvUnit<T>> chain;  // dilated_chain body
};

namespace detail {

template <typename T>
ConvUnit<T> make_unit(Rng& rng, int in_c, int out_c, int dilation, bool bn_relu) {
    ConvUnit<T> u;
    u.conv = he_init<T>(rng, out_c, in_c, 3, 3, dilation, dilation);
    u.batch_norm = bn_relu;
    u.relu = bn_relu;
    if (bn_relu) {
        u.bn.gamma.assign(out_c, T(1));
        u.bn.beta.assign(out_c, T(0));
        u.bn.running_mean.assign(out_c, T(0));
        u.bn.running_var.assign(out_c, T(1));
    }
    return u;
}

template <typename T>
void zero_fill_unit(ConvUnit<T>& u) {
    std::fill(u.conv.weight.data.begin(), u.conv.weight.data.end(), T(0));
    std::fill(u.conv.bias.begin(), u.conv.bias.end(), T(0));
}

}  // namespace detail

template <typename T>
ModelGraph<T> build(const MwcnnConfig& cfg, Rng& rng) {
    if (cfg.in_channels < 1) throw std::invalid_argument("build: in_channels must be >= 1");

    ModelGraph<T> g;
    g.cfg = cfg;

    if (cfg.downsampler == Downsampler::dilated_chain) {
        if (cfg.widths.empty() || cfg.widths[0] < 1)
            throw std::invalid_argument("build: invalid widths");
        if (cfg.chain_dilation < 1) throw std::invalid_argument("build: invalid chain dilation");
        int depth = cfg.chain_depth;
        if (depth == 0) {
            if (cfg.levels < 1 || cfg.block_depth < 1)
                throw std::invalid_argument("build: cannot derive chain depth from empty config");
            depth = 2 * cfg.levels * cfg.block_depth;
        }
        if (depth < 1) throw std::invalid_argument("build: chain depth must be >= 1");
        g.cfg.chain_depth = depth;

        const int w = cfg.widths[0], d = cfg.chain_dilation;
        for (int k = 0; k < depth; ++k) {
            const int in_c = (k == 0) ? cfg.in_channels : w;
            const int out_c = (k == depth - 1) ? cfg.in_channels : w;
            const bool inner = (k != depth - 1);
            g.chain.push_back(detail::make_unit<T>(rng, in_c, out_c, d, inner));
        }
        detail::zero_fill_unit(g.chain.back());
        for (std::size_t k = 0; k < g.chain.size(); ++k) g.chain[k].id = static_cast<int>(k);
        return g;
    }

    if (cfg.levels < 1 || cfg.levels > 6)
        throw std::invalid_argument("build: levels out of range (got " + std::to_string(cfg.levels) + ")");
    if (static_cast<int>(cfg.widths.size()) != cfg.levels)
        throw std::invalid_argument("build: widths must list one entry per level");
    for (int w : cfg.widths)
        if (w < 1) throw std::invalid_argument("build: invalid widths");
    if (cfg.block_depth < 1) throw std::invalid_argument("build: block_depth must be >= 1");

    if (cfg.downsampler == Downsampler::dwt) {
        g.bank_down = make_bank<T>(cfg.bank);
        g.bank_up = make_bank<T>(cfg.bank_expand);
        if (cfg.bank != cfg.bank_expand && !cfg.allow_noninvertible)
            throw std::invalid_argument(
                "build: contracting and expanding banks differ, so the transform pair is not an "
                "inverse; set allow_noninvertible to opt in");
    }

    const int mult = (cfg.downsampler == Downsampler::dwt) ? 4 : 1;
    const int L = cfg.levels;
    g.down.resize(L);
    g.up.resize(L);
    for (int i = 1; i <= L; ++i) {
        const int below = (i == 1) ? cfg.in_channels : cfg.widths[i - 2];
        const int wi = cfg.widths[i - 1];
        std::vector<ConvUnit<T>>& cb = g.down[i - 1];
        cb.push_back(detail::make_unit<T>(rng, below * mult, wi, 1, true));
        for (int k = 1; k < cfg.block_depth; ++k)
            cb.push_back(detail::make_unit<T>(rng, wi, wi, 1, true));

        std::vector<ConvUnit<T>>& eb = g.up[i - 1];
        for (int k = 0; k < cfg.block_depth - 1; ++k)
            eb.push_back(detail::make_unit<T>(rng, wi, wi, 1, true));
        eb.push_back(detail::make_unit<T>(rng, wi, below * mult, 1, i != 1));
    }
    detail::zero_fill_unit(g.up[0].back());

    int next_id = 0;
    for (int i = 0; i < L; ++i)
        for (ConvUnit<T>& u : g.down[i]) u.id = next_id++;
    for (int i = L - 1; i >= 0; --i)
        for (ConvUnit<T>& u : g.up[i]) u.id = next_id++;
    return g;
}

// Plain dilation-d chain of 3x3 convs: in -> width -> ... -> width -> in,
// BN+ReLU between, zero-started last conv, global residual. depth 1 collapses
// to the single zero conv.
template <typename T>
ModelGraph<T> conv_chain(int depth, int width, int dilation, Rng& rng, int in_channels = 1) {
    MwcnnConfig cfg;
    cfg.downsampler = Downsampler::dilated_chain;
    cfg.levels = 1;
    cfg.block_depth = 1;
    cfg.widths = {width};
    cfg.chain_depth = depth;
    cfg.chain_dilation = dilation;
    cfg.in_channels = in_channels;
    return build<T>(cfg, rng);
}

template <typename T>
ModelGraph<T> dilated_chain_variant(int depth, int width, Rng& rng, int in_channels = 1) {
    return conv_chain<T>(depth, width, 2, rng, in_channels);
}

namespace detail {

template <typename T>
void check_input(const ModelGraph<T>& g, const Tensor4<T>& x) {
    if (x.c != g.cfg.in_channels)
        throw std::invalid_argument("forward: model expects " + std::to_string(g.cfg.in_channels) +
                                    " input channels, got " + std::to_string(x.c));
    if (g.cfg.downsampler == Downsampler::dilated_chain) return;
    const int div = 1 << g.cfg.levels;
    if (x.h % div != 0 || x.w % div != 0)
        throw std::invalid_argument("forward: input spatial dims must be divisible by " +
                                    std::to_string(div) + " for " + std::to_string(g.cfg.levels) +
                                    " levels, got " + x.shape_str());
    if (x.h < div || x.w < div)
        throw std::invalid_argument("forward: input too small for level count");
}

template <typename T>
Tensor4<T> down_op(const ModelGraph<T>& g, const Tensor4<T>& x) {
    if (g.cfg.downsampler == Downsampler::dwt) return quad_stack(dwt2(x, g.bank_down));
    return sum_pool2(x);
}

// Adjoint of down_op: the transform is linear, so the gradient is the
// synthesis operator with its gain stripped back out.
template <typename T>
Tensor4<T> down_op_bwd(const ModelGraph<T>& g, const Tensor4<T>& gout) {
    if (g.cfg.downsampler == Downsampler::dwt) {
        Tensor4<T> gx = iwt2(quad_unstack(gout), g.bank_down);
        const T s = T(1) / g.bank_down.synth_gain;
        for (T& v : gx.data) v *= s;
        return gx;
    }
    return sum_pool2_bwd(gout);
}

template <typename T>
Tensor4<T> up_op(const ModelGraph<T>& g, const Tensor4<T>& e) {
    if (g.cfg.downsampler == Downsampler::dwt) return iwt2(quad_unstack(e), g.bank_up);
    return sum_unpool2(e);
}

template <typename T>
Tensor4<T> up_op_bwd(const ModelGraph<T>& g, const Tensor4<T>& gout) {
    if (g.cfg.downsampler == Downsampler::dwt) {
        Tensor4<T> ge = quad_stack(dwt2(gout, g.bank_up));
        const T s = g.bank_up.synth_gain;
        for (T& v : ge.data) v *= s;
        return ge;
    }
    return sum_unpool2_bwd(gout);
}

template <typename T>
Tensor4<T> run_block(std::vector<ConvUnit<T>>& block, Tensor4<T> t, Mode mode, Tape<T>* tape) {
    for (ConvUnit<T>& u : block) {
        t = conv2d_fwd(t, u.conv, tape, u.id);
        if (u.batch_norm) t = bn_fwd(t, u.bn, mode, tape, u.id);
        if (u.relu) t = relu_fwd(t, tape, u.id);
    }
    return t;
}

}  // namespace detail

// BN running statistics advance when mode == train, hence the mutable graph.
template <typename T>
Tensor4<T> forward(ModelGraph<T>& g, const Tensor4<T>& x, Mode mode, Tape<T>* tape = nullptr) {
    detail::check_input(g, x);

    if (g.cfg.downsampler == Downsampler::dilated_chain) {
        Tensor4<T> t = x;
        for (ConvUnit<T>& u : g.chain) {
            t = conv2d_fwd(t, u.conv, tape, u.id);
            if (u.batch_norm) t = bn_fwd(t, u.bn, mode, tape, u.id);
            if (u.relu) t = relu_fwd(t, tape, u.id);
        }
        return g.cfg.global_residual ? add(t, x) : t;
    }

    const int L = g.cfg.levels;
    std::vector<Tensor4<T>> a(L + 1);
    a[0] = x;
    for (int i = 1; i <= L; ++i)
        a[i] = detail::run_block(g.down[i - 1], detail::down_op(g, a[i - 1]), mode, tape);

    Tensor4<T> b = std::move(a[L]);
    for (int i = L; i >= 1; --i) {
        Tensor4<T> u = detail::up_op(g, detail::run_block(g.up[i - 1], std::move(b), mode, tape));
        if (i > 1)
            b = add(u, a[i - 1]);
        else
            b = g.cfg.global_residual ? add(u, a[0]) : std::move(u);
    }
    return b;
}

// Degeneration hook: runs only the transform stack, with every conv block
// treated as the identity and the skip sums omitted. levels analysis passes
// followed by levels synthesis passes of the contracting bank, so for an
// invertible bank the result equals the input.
template <typename T>
Tensor4<T> forward_identity(const ModelGraph<T>& g, const Tensor4<T>& x) {
    if (g.cfg.downsampler != Downsampler::dwt)
        throw std::invalid_argument("forward_identity: only the subband-transform body is invertible");
    detail::check_input(g, x);
    const int L = g.cfg.levels;
    Tensor4<T> t = x;
    for (int i = 0; i < L; ++i) t = quad_stack(dwt2(t, g.bank_down));
    for (int i = 0; i < L; ++i) t = iwt2(quad_unstack(t), g.bank_down);
    return t;
}

template <typename T>
struct UnitGrads {
    Tensor4<T> gw;
    std::vector<T> gb, ggamma, gbeta;
};

template <typename T>
struct ModelGrads {
    std::vector<std::vector<UnitGrads<T>>> down, up;
    std::vector<UnitGrads<T>> chain;
};

namespace detail {

template <typename T>
UnitGrads<T> zero_unit_grads(const ConvUnit<T>& u) {
    UnitGrads<T> ug;
    ug.gw = Tensor4<T>(u.conv.weight.n, u.conv.weight.c, u.conv.weight.h, u.conv.weight.w);
    ug.gb.assign(u.conv.bias.size(), T(0));
    if (u.batch_norm) {
        ug.ggamma.assign(u.bn.gamma.size(), T(0));
        ug.gbeta.assign(u.bn.beta.size(), T(0));
    }
    return ug;
}

// Walks one block backwards, consuming its tape records and filling its
// gradient slots; returns the gradient at the block input.
template <typename T>
Tensor4<T> block_bwd(const std::vector<ConvUnit<T>>& block, std::vector<UnitGrads<T>>& grads,
                     Tensor4<T> g, Tape<T>& tape) {
    for (std::size_t k = block.size(); k-- > 0;) {
        const ConvUnit<T>& u = block[k];
        UnitGrads<T>& ug = grads[k];
        if (u.relu) g = relu_bwd(g, tape.template pop<ReluRecord<T>>(u.id));
        if (u.batch_norm) {
            BNGrads<T> bg = bn_bwd(g, tape.template pop<BnRecord<T>>(u.id), u.bn);
            ug.ggamma = std::move(bg.ggamma);
            ug.gbeta = std::move(bg.gbeta);
            g = std::move(bg.gx);
        }
        ConvGrads<T> cg = conv2d_bwd(g, tape.template pop<ConvRecord<T>>(u.id), u.conv);
        ug.gw = std::move(cg.gw);
        ug.gb = std::move(cg.gb);
        g = std::move(cg.gx);
    }
    return g;
}

}  // namespace detail

template <typename T>
ModelGrads<T> make_zero_grads(const ModelGraph<T>& g) {
    ModelGrads<T> mg;
    mg.down.resize(g.down.size());
    mg.up.resize(g.up.size());
    for (std::size_t i = 0; i < g.down.size(); ++i)
        for (const ConvUnit<T>& u : g.down[i]) mg.down[i].push_back(detail::zero_unit_grads(u));
    for (std::size_t i = 0; i < g.up.size(); ++i)
        for (const ConvUnit<T>& u : g.up[i]) mg.up[i].push_back(detail::zero_unit_grads(u));
    for (const ConvUnit<T>& u : g.chain) mg.chain.push_back(detail::zero_unit_grads(u));
    return mg;
}

// Reverse pass over a tape produced by a train-mode forward. Consumes the
// tape completely; a leftover or missing record means forward and backward
// disagree about the architecture.
template <typename T>
ModelGrads<T> backward(const ModelGraph<T>& g, Tape<T>& tape, const Tensor4<T>& grad_out) {
    ModelGrads<T> mg = make_zero_grads(g);

    if (g.cfg.downsampler == Downsampler::dilated_chain) {
        detail::block_bwd(g.chain, mg.chain, grad_out, tape);
        if (!tape.empty()) throw std::runtime_error("backward: tape not fully consumed");
        return mg;
    }

    const int L = g.cfg.levels;
    std::vector<Tensor4<T>> sg(L);  // gradient entering a[i] through the skip at level i+1
    Tensor4<T> gb = grad_out;
    for (int i = 1; i <= L; ++i) {
        if (i > 1 || g.cfg.global_residual) sg[i - 1] = gb;
        Tensor4<T> ge = detail::up_op_bwd(g, gb);
        gb = detail::block_bwd(g.up[i - 1], mg.up[i - 1], std::move(ge), tape);
    }

    Tensor4<T> ga = std::move(gb);  // gradient at a[L]
    for (int i = L; i >= 1; --i) {
        Tensor4<T> gd = detail::block_bwd(g.down[i - 1], mg.down[i - 1], std::move(ga), tape);
        ga = detail::down_op_bwd(g, gd);
        if (sg[i - 1].numel() > 0) ga = add(ga, sg[i - 1]);
    }
    if (!tape.empty()) throw std::runtime_error("backward: tape not fully consumed");
    return mg;
}

// --- Parameter enumeration -------------------------------------------------
//
// One fixed order used by the optimizer state and the checkpoint format:
// contracting blocks level 1..L, then expanding blocks in execution order
// (level L down to 1), then the chain; within a unit, conv weight, conv bias,
// then BN gamma, beta, running_mean, running_var.

template <typename T>
struct ParamRef {
    std::string name;
    std::vector<T>* data;
    bool trainable;
    int ndim;      // 4 for conv weights, 1 for everything else
    int dims[4];
};

namespace detail {

template <typename T, typename F>
void visit_unit(const std::string& prefix, ConvUnit<T>& u, F&& fn) {
    const Tensor4<T>& w = u.conv.weight;
    fn(ParamRef<T>{prefix + ".w", &u.conv.weight.data, true, 4, {w.n, w.c, w.h, w.w}});
    fn(ParamRef<T>{prefix + ".b", &u.conv.bias, true, 1, {int(u.conv.bias.size()), 0, 0, 0}});
    if (u.batch_norm) {
        const int c = static_cast<int>(u.bn.gamma.size());
        fn(ParamRef<T>{prefix + ".bn_g", &u.bn.gamma, true, 1, {c, 0, 0, 0}});
        fn(ParamRef<T>{prefix + ".bn_b", &u.bn.beta, true, 1, {c, 0, 0, 0}});
        fn(ParamRef<T>{prefix + ".bn_rm", &u.bn.running_mean, false, 1, {c, 0, 0, 0}});
        fn(ParamRef<T>{prefix + ".bn_rv", &u.bn.running_var, false, 1, {c, 0, 0, 0}});
    }
}

}  // namespace detail

template <typename T, typename F>
void visit_params(ModelGraph<T>& g, F&& fn) {
    for (std::size_t i = 0; i < g.down.size(); ++i)
        for (std::size_t k = 0; k < g.down[i].size(); ++k)
            detail::visit_unit("d" + std::to_string(i + 1) + "." + std::to_string(k), g.down[i][k], fn);
    for (std::size_t i = g.up.size(); i-- > 0;)
        for (std::size_t k = 0; k < g.up[i].size(); ++k)
            detail::visit_unit("u" + std::to_string(i + 1) + "." + std::to_string(k), g.up[i][k], fn);
    for (std::size_t k = 0; k < g.chain.size(); ++k)
        detail::visit_unit("c." + std::to_string(k), g.chain[k], fn);
}

// Zips each trainable parameter vector with its gradient vector, in
// visit_params order.
template <typename T, typename F>
void visit_trainable_pairs(ModelGraph<T>& g, ModelGrads<T>& mg, F&& fn) {
    auto unit_pairs = [&fn](ConvUnit<T>& u, UnitGrads<T>& ug) {
        fn(u.conv.weight.data, ug.gw.data);
        fn(u.conv.bias, ug.gb);
        if (u.batch_norm) {
            fn(u.bn.gamma, ug.ggamma);
            fn(u.bn.beta, ug.gbeta);
        }
    };
    for (std::size_t i = 0; i < g.down.size(); ++i)
        for (std::size_t k = 0; k < g.down[i].size(); ++k) unit_pairs(g.down[i][k], mg.down[i][k]);
    for (std::size_t i = g.up.size(); i-- > 0;)
        for (std::size_t k = 0; k < g.up[i].size(); ++k) unit_pairs(g.up[i][k], mg.up[i][k]);
    for (std::size_t k = 0; k < g.chain.size(); ++k) unit_pairs(g.chain[k], mg.chain[k]);
}

// Number of trainable scalars (conv weights and biases, BN gains and shifts;
// running statistics are buffers, not parameters).
template <typename T>
std::int64_t param_count(ModelGraph<T>& g) {
    std::int64_t total = 0;
    visit_params(g, [&total](const ParamRef<T>& p) {
        if (p.trainable) total += static_cast<std::int64_t>(p.data->size());
    });
    return total;
}

template <typename T>
int conv_layer_count(const ModelGraph<T>& g) {
    std::size_t total = g.chain.size();
    for (const auto& b : g.down) total += b.size();
    for (const auto& b : g.up) total += b.size();
    return static_cast<int>(total);
}

template <typename T>
struct ModelAdam {
    std::vector<std::vector<T>> m, v;
    std::int64_t t = 0;
    AdamConfig cfg;
};

template <typename T>
ModelAdam<T> make_adam(ModelGraph<T>& g) {
    ModelAdam<T> st;
    visit_params(g, [&st](const ParamRef<T>& p) {
        if (!p.trainable) return;
        st.m.emplace_back(p.data->size(), T(0));
        st.v.emplace_back(p.data->size(), T(0));
    });
    return st;
}

template <typename T>
void adam_step(ModelGraph<T>& g, ModelGrads<T>& mg, ModelAdam<T>& st, double lr) {
    ++st.t;
    std::size_t idx = 0;
    visit_trainable_pairs(g, mg, [&](std::vector<T>& p, std::vector<T>& grad) {
        if (idx >= st.m.size()) throw std::runtime_error("adam_step: optimizer state too short");
        adam_update(p, grad, st.m[idx], st.v[idx], st.t, lr, st.cfg);
        ++idx;
    });
    if (idx != st.m.size()) throw std::runtime_error("adam_step: optimizer state length mismatch");
}

// --- Receptive field -------------------------------------------------------

namespace detail {

struct MaskGrid {
    int h = 0, w = 0;
    std::vector<std::uint8_t> v;
    MaskGrid() = default;
    MaskGrid(int H, int W) : h(H), w(W), v(std::size_t(H) * W, 0) {}
    std::uint8_t get(int r, int c) const { return v[std::size_t(r) * w + c]; }
    void set(int r, int c) { v[std::size_t(r) * w + c] = 1; }
};

// Dependence sets flow backward: if a set of positions in a layer's output
// matters, these helpers compute which positions of its input matter.

inline MaskGrid conv_spread(const MaskGrid& s, int kh, int kw, int dilation, int pad) {
    MaskGrid out(s.h, s.w);  // all our convs are size-preserving (pad == dilation, 3x3)
    for (int r = 0; r < s.h; ++r)
        for (int c = 0; c < s.w; ++c) {
            if (!s.get(r, c)) continue;
            for (int u = 0; u < kh; ++u)
                for (int vv = 0; vv < kw; ++vv) {
                    const int rr = r + dilation * u - pad;
                    const int cc = c + dilation * vv - pad;
                    if (rr >= 0 && rr < s.h && cc >= 0 && cc < s.w) out.set(rr, cc);
                }
        }
    return out;
}

// Subband cell (i, j) reads pixels (2i+u, 2j+v) mod size.
inline MaskGrid analysis_spread(const MaskGrid& s, int tap) {
    MaskGrid out(2 * s.h, 2 * s.w);
    for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j) {
            if (!s.get(i, j)) continue;
            for (int u = 0; u < tap; ++u)
                for (int vv = 0; vv < tap; ++vv)
                    out.set((2 * i + u) % out.h, (2 * j + vv) % out.w);
        }
    return out;
}

// Synthesized pixel (p, q) reads subband cells (i, j) with 2i+u = p mod size.
inline MaskGrid synthesis_spread(const MaskGrid& s, int tap) {
    MaskGrid out(s.h / 2, s.w / 2);
    for (int p = 0; p < s.h; ++p)
        for (int q = 0; q < s.w; ++q) {
            if (!s.get(p, q)) continue;
            for (int u = 0; u < tap; ++u) {
                const int tr = ((p - u) % s.h + s.h) % s.h;
                if (tr % 2 != 0) continue;
                for (int vv = 0; vv < tap; ++vv) {
                    const int tc = ((q - vv) % s.w + s.w) % s.w;
                    if (tc % 2 != 0) continue;
                    out.set(tr / 2, tc / 2);
                }
            }
        }
    return out;
}

inline void grid_or(MaskGrid& a, const MaskGrid& b) {
    if (a.h != b.h || a.w != b.w) throw std::logic_error("grid_or: size mismatch");
    for (std::size_t k = 0; k < a.v.size(); ++k) a.v[k] |= b.v[k];
}

template <typename T>
MaskGrid block_spread(const std::vector<ConvUnit<T>>& block, MaskGrid s) {
    // BN and ReLU are pointwise, so only the convs move the set.
    for (std::size_t k = block.size(); k-- > 0;) {
        const ConvParams<T>& c = block[k].conv;
        s = conv_spread(s, c.weight.h, c.weight.w, c.dilation, c.pad);
    }
    return s;
}

}  // namespace detail

// Exact support of d out(oy, ox) / d x as a 0/1 mask of the input plane,
// computed by propagating dependence sets backward through the architecture.
// Weights never enter; a cell is marked if any parameter setting could make
// the output read it.
template <typename T>
Tensor4<T> receptive_field_mask(const ModelGraph<T>& g, int h, int w, int oy, int ox) {
    if (h < 1 || w < 1) throw std::invalid_argument("receptive_field_mask: empty plane");
    if (oy < 0 || oy >= h || ox < 0 || ox >= w)
        throw std::invalid_argument("receptive_field_mask: output position out of range");

    detail::MaskGrid cur(h, w);
    cur.set(oy, ox);

    if (g.cfg.downsampler == Downsampler::dilated_chain) {
        cur = detail::block_spread(g.chain, std::move(cur));
        if (g.cfg.global_residual) cur.set(oy, ox);
    } else {
        const int L = g.cfg.levels;
        const int div = 1 << L;
        if (h % div != 0 || w % div != 0)
            throw std::invalid_argument("receptive_field_mask: plane dims must be divisible by 2^levels");
        const int tap_down = (g.cfg.downsampler == Downsampler::dwt) ? g.bank_down.tap : 2;
        const int tap_up = (g.cfg.downsampler == Downsampler::dwt) ? g.bank_up.tap : 2;

        std::vector<detail::MaskGrid> sg(L);
        for (int i = 1; i <= L; ++i) {
            if (i > 1 || g.cfg.global_residual) sg[i - 1] = cur;
            cur = detail::synthesis_spread(cur, tap_up);
            cur = detail::block_spread(g.up[i - 1], std::move(cur));
        }
        for (int i = L; i >= 1; --i) {
            cur = detail::block_spread(g.down[i - 1], std::move(cur));
            cur = detail::analysis_spread(cur, tap_down);
            if (sg[i - 1].h != 0) detail::grid_or(cur, sg[i - 1]);
        }
    }

    Tensor4<T> mask(1, 1, h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) mask.at(0, 0, r, c) = cur.get(r, c) ? T(1) : T(0);
    return mask;
}

}  // namespace mwcnn
