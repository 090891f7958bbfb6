#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "mwcnn/layers.hpp"
#include "mwcnn/oracle.hpp"
#include "mwcnn/wavelet.hpp"

using namespace mwcnn;

namespace {

double dot(const Tensor4<double>& a, const Tensor4<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double max_abs_diff(const Tensor4<double>& a, const Tensor4<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst;
}

template <typename T>
Tensor4<T> conv_nt(const Tensor4<T>& x, const ConvParams<T>& p) {
    Tape<T>* no_tape = nullptr;
    return conv2d_fwd(x, p, no_tape);
}

template <typename T>
Tensor4<T> bn_nt(const Tensor4<T>& x, BNParams<T>& p, Mode mode) {
    Tape<T>* no_tape = nullptr;
    return bn_fwd(x, p, mode, no_tape);
}

}  // namespace

TEST(Conv, MatchesNaiveReference) {
    Rng rng(101);
    for (int dilation : {1, 2}) {
        auto x = randn<double>(rng, 2, 3, 10, 12, 1.0);
        ConvParams<double> p = he_init<double>(rng, 5, 3, 3, 3, dilation, dilation);
        for (auto& b : p.bias) b = rng.normal();
        auto fast = conv_nt(x, p);
        auto ref = oracle::direct_conv2d_ref(x, p.weight, std::vector<double>(p.bias.begin(), p.bias.end()),
                                             p.dilation, p.pad);
        ASSERT_TRUE(fast.same_shape(ref));
        EXPECT_LT(max_abs_diff(fast, ref), 1e-12) << "dilation " << dilation;
    }
}

TEST(Conv, PreservesSpatialSizeWhenPadMatchesDilation) {
    Rng rng(5);
    auto x = randn<float>(rng, 1, 2, 9, 7, 1.0);
    auto p1 = he_init<float>(rng, 4, 2, 3, 3, 1, 1);
    auto y1 = conv_nt(x, p1);
    EXPECT_EQ(y1.h, 9);
    EXPECT_EQ(y1.w, 7);
    auto p2 = he_init<float>(rng, 4, 2, 3, 3, 2, 2);
    auto y2 = conv_nt(x, p2);
    EXPECT_EQ(y2.h, 9);
    EXPECT_EQ(y2.w, 7);
}

TEST(Conv, ErrorContracts) {
    Rng rng(6);
    auto x = randn<float>(rng, 1, 2, 6, 6, 1.0);
    auto p = he_init<float>(rng, 3, 4, 3, 3, 1, 1);
    EXPECT_THROW(conv_nt(x, p), std::invalid_argument);

    auto p2 = he_init<float>(rng, 3, 2, 3, 3, 1, 1);
    p2.bias.pop_back();
    EXPECT_THROW(conv_nt(x, p2), std::invalid_argument);

    auto p3 = he_init<float>(rng, 3, 2, 3, 3, 1, 1);
    p3.dilation = 0;
    EXPECT_THROW(conv_nt(x, p3), std::invalid_argument);
    p3.dilation = 1;
    p3.pad = -1;
    EXPECT_THROW(conv_nt(x, p3), std::invalid_argument);
    p3.pad = 0;
    EXPECT_THROW(conv_nt(randn<float>(rng, 1, 2, 2, 2, 1.0), p3),
                 std::invalid_argument);
}

TEST(Conv, GradientsMatchFiniteDifferences) {
    Rng rng(77);
    auto x = randn<double>(rng, 1, 2, 6, 6, 1.0);
    ConvParams<double> p = he_init<double>(rng, 3, 2, 3, 3, 1, 1);
    for (auto& b : p.bias) b = rng.normal();
    auto probe = randn<double>(rng, 1, 3, 6, 6, 1.0);  // fixed cotangent

    Tape<double> tape;
    auto y = conv2d_fwd(x, p, &tape, 0);
    auto rec = tape.pop<ConvRecord<double>>(0);
    auto g = conv2d_bwd(probe, rec, p);

    // d/dx_i sum(probe * conv(x; w, b)) against central differences.
    auto obj_x = [&](const std::vector<double>& theta) {
        auto xc = x;
        xc.data = theta;
        return dot(probe, conv_nt(xc, p));
    };
    auto fdx = oracle::finite_diff_grad(obj_x, std::vector<double>(x.data.begin(), x.data.end()));
    for (std::size_t i = 0; i < fdx.size(); ++i)
        ASSERT_LT(oracle::grad_rel_err(g.gx.data[i], fdx[i]), 1e-3) << "gx[" << i << "]";

    auto obj_w = [&](const std::vector<double>& theta) {
        auto pc = p;
        pc.weight.data = theta;
        return dot(probe, conv_nt(x, pc));
    };
    auto fdw = oracle::finite_diff_grad(obj_w, p.weight.data);
    for (std::size_t i = 0; i < fdw.size(); ++i)
        ASSERT_LT(oracle::grad_rel_err(g.gw.data[i], fdw[i]), 1e-3) << "gw[" << i << "]";

    auto obj_b = [&](const std::vector<double>& theta) {
        auto pc = p;
        pc.bias = theta;
        return dot(probe, conv_nt(x, pc));
    };
    auto fdb = oracle::finite_diff_grad(obj_b, p.bias);
    for (std::size_t i = 0; i < fdb.size(); ++i)
        ASSERT_LT(oracle::grad_rel_err(g.gb[i], fdb[i]), 1e-3) << "gb[" << i << "]";
}

TEST(Tape, PopChecksKindIdAndUnderflow) {
    Tape<float> tape;
    EXPECT_THROW(tape.pop<ConvRecord<float>>(0), std::runtime_error);

    tape.push(ConvRecord<float>{7, zeros<float>(1, 1, 2, 2)});
    EXPECT_THROW(tape.pop<ReluRecord<float>>(7), std::runtime_error);
    tape.push(ConvRecord<float>{7, zeros<float>(1, 1, 2, 2)});
    EXPECT_THROW(tape.pop<ConvRecord<float>>(8), std::runtime_error);

    tape.clear();
    auto x = full<float>(1, 1, 2, 2, 2.5f);
    tape.push(ConvRecord<float>{3, x});
    auto rec = tape.pop<ConvRecord<float>>(3);
    EXPECT_EQ(rec.layer_id, 3);
    EXPECT_TRUE(bitwise_equal(rec.x, x));
    EXPECT_TRUE(tape.empty());
}

TEST(Bn, TrainModeNormalizesAndTracksRunningStats) {
    Tensor4<double> x(1, 1, 2, 2);
    x.data = {1, 2, 3, 4};  // mean 2.5, biased variance 1.25
    BNParams<double> p;
    p.gamma = {2.0};
    p.beta = {3.0};
    p.running_mean = {0.0};
    p.running_var = {1.0};

    Tape<double> tape;
    auto y = bn_fwd(x, p, Mode::train, &tape, 0);

    const double inv_std = 0.894423613312618;  // 1/sqrt(1.25 + 1e-5)
    for (int i = 0; i < 4; ++i)
        EXPECT_NEAR(y.data[i], 2.0 * (x.data[i] - 2.5) * inv_std + 3.0, 1e-12);

    EXPECT_NEAR(p.running_mean[0], 0.9 * 0.0 + 0.1 * 2.5, 1e-15);
    EXPECT_NEAR(p.running_var[0], 0.9 * 1.0 + 0.1 * 1.25, 1e-15);

    auto rec = tape.pop<BnRecord<double>>(0);
    EXPECT_NEAR(rec.inv_std[0], inv_std, 1e-12);
}

TEST(Bn, EvalModeUsesRunningStatsAndLeavesThemAlone) {
    Tensor4<double> x(1, 1, 1, 2);
    x.data = {10.0, 20.0};
    BNParams<double> p;
    p.gamma = {1.0};
    p.beta = {0.0};
    p.running_mean = {10.0};
    p.running_var = {4.0};

    auto y = bn_nt(x, p, Mode::eval);
    const double inv = 1.0 / std::sqrt(4.0 + 1e-5);
    EXPECT_NEAR(y.data[0], 0.0, 1e-12);
    EXPECT_NEAR(y.data[1], 10.0 * inv, 1e-12);
    EXPECT_EQ(p.running_mean[0], 10.0);
    EXPECT_EQ(p.running_var[0], 4.0);
}

TEST(Bn, ErrorContracts) {
    BNParams<float> p;
    p.gamma = {1.0f, 1.0f};
    p.beta = {0.0f};
    p.running_mean = {0.0f, 0.0f};
    p.running_var = {1.0f, 1.0f};
    auto x = zeros<float>(1, 2, 2, 2);
    EXPECT_THROW(bn_nt(x, p, Mode::train), std::invalid_argument);

    BNParams<float> q;
    q.gamma = {1.0f};
    q.beta = {0.0f};
    q.running_mean = {0.0f};
    q.running_var = {1.0f};
    auto tiny = zeros<float>(1, 1, 1, 1);
    EXPECT_THROW(bn_nt(tiny, q, Mode::train), std::invalid_argument);
    EXPECT_NO_THROW(bn_nt(tiny, q, Mode::eval));
}

TEST(Bn, GradientsMatchFiniteDifferences) {
    Rng rng(55);
    auto x = randn<double>(rng, 2, 2, 3, 3, 1.0);
    for (auto& v : x.data) v = v * 1.5 + 0.3;
    BNParams<double> base;
    base.gamma = {1.2, 0.8};
    base.beta = {0.1, -0.2};
    base.running_mean = {0.0, 0.0};
    base.running_var = {1.0, 1.0};
    auto probe = randn<double>(rng, 2, 2, 3, 3, 1.0);

    // Forward mutates running statistics, so every objective evaluation gets
    // a fresh parameter copy.
    auto run = [&](const Tensor4<double>& xin, const BNParams<double>& pin) {
        BNParams<double> pc = pin;
        return bn_nt(xin, pc, Mode::train);
    };

    BNParams<double> p = base;
    Tape<double> tape;
    (void)bn_fwd(x, p, Mode::train, &tape, 1);
    auto rec = tape.pop<BnRecord<double>>(1);
    auto g = bn_bwd(probe, rec, base);

    auto obj_x = [&](const std::vector<double>& theta) {
        auto xc = x;
        xc.data = theta;
        return dot(probe, run(xc, base));
    };
    auto fdx = oracle::finite_diff_grad(obj_x, x.data);
    for (std::size_t i = 0; i < fdx.size(); ++i)
        ASSERT_LT(oracle::grad_rel_err(g.gx.data[i], fdx[i]), 1e-3) << "gx[" << i << "]";

    auto obj_gamma = [&](const std::vector<double>& theta) {
        BNParams<double> pc = base;
        pc.gamma = theta;
        return dot(probe, run(x, pc));
    };
    auto fdg = oracle::finite_diff_grad(obj_gamma, base.gamma);
    for (std::size_t i = 0; i < fdg.size(); ++i)
        ASSERT_LT(oracle::grad_rel_err(g.ggamma[i], fdg[i]), 1e-3);

    auto obj_beta = [&](const std::vector<double>& theta) {
        BNParams<double> pc = base;
        pc.beta = theta;
        return dot(probe, run(x, pc));
    };
    auto fdb = oracle::finite_diff_grad(obj_beta, base.beta);
    for (std::size_t i = 0; i < fdb.size(); ++i)
        ASSERT_LT(oracle::grad_rel_err(g.gbeta[i], fdb[i]), 1e-3);
}

TEST(Relu, ForwardAndSubgradient) {
    Tensor4<double> x(1, 1, 1, 4);
    x.data = {-1.0, 0.0, 0.5, 2.0};
    Tape<double> tape;
    auto y = relu_fwd(x, &tape, 2);
    EXPECT_EQ(y.data, (std::vector<double>{0.0, 0.0, 0.5, 2.0}));

    Tensor4<double> gout(1, 1, 1, 4);
    gout.data = {5.0, 5.0, 5.0, 5.0};
    auto rec = tape.pop<ReluRecord<double>>(2);
    auto gx = relu_bwd(gout, rec);
    // Exactly zero input gets zero gradient.
    EXPECT_EQ(gx.data, (std::vector<double>{0.0, 0.0, 5.0, 5.0}));
}

TEST(Pool, SumPoolMatchesHaarLowpassBitwise) {
    // Integer-valued pixels keep every partial sum exact in float, so the two
    // implementations must agree to the bit, not merely to rounding.
    Rng rng(42);
    Tensor4<float> x(2, 3, 8, 8);
    for (float& v : x.data) v = static_cast<float>(rng.below(256));
    auto pooled = sum_pool2(x);
    auto ll = dwt2(x, haar_bank<float>()).x1;
    EXPECT_TRUE(bitwise_equal(pooled, ll));

    EXPECT_THROW(sum_pool2(zeros<float>(1, 1, 3, 4)), std::invalid_argument);
}

TEST(Pool, HandValuesAndUnpoolInverse) {
    Tensor4<double> x(1, 1, 2, 2);
    x.data = {1, 2, 3, 4};
    auto p = sum_pool2(x);
    EXPECT_EQ(p.data[0], 10.0);

    auto up = sum_unpool2(p);
    ASSERT_EQ(up.h, 2);
    for (double v : up.data) EXPECT_EQ(v, 2.5);

    // On block-constant images the pair is the identity.
    auto flat = full<double>(1, 2, 4, 4, 3.25);
    EXPECT_TRUE(bitwise_equal(sum_unpool2(sum_pool2(flat)), flat));
}

TEST(Pool, BackwardsAreAdjoints) {
    Rng rng(13);
    auto x = randn<double>(rng, 1, 2, 6, 6, 1.0);
    auto y = randn<double>(rng, 1, 2, 3, 3, 1.0);
    // <pool(x), y> == <x, pool_bwd(y)>
    EXPECT_NEAR(dot(sum_pool2(x), y), dot(x, sum_pool2_bwd(y)), 1e-12);
    // <unpool(y), x> == <y, unpool_bwd(x)>
    EXPECT_NEAR(dot(sum_unpool2(y), x), dot(y, sum_unpool2_bwd(x)), 1e-12);

    EXPECT_THROW(sum_unpool2_bwd(zeros<double>(1, 1, 5, 4)), std::invalid_argument);
}

TEST(HeInit, ShapesScaleAndErrors) {
    Rng rng(99);
    auto p = he_init<float>(rng, 64, 32, 3, 3, 2, 2);
    EXPECT_EQ(p.weight.n, 64);
    EXPECT_EQ(p.weight.c, 32);
    EXPECT_EQ(p.weight.h, 3);
    EXPECT_EQ(p.dilation, 2);
    EXPECT_EQ(p.pad, 2);
    for (float b : p.bias) EXPECT_EQ(b, 0.0f);

    double sq = 0.0, sum = 0.0;
    for (float v : p.weight.data) {
        sum += v;
        sq += double(v) * v;
    }
    const double n = double(p.weight.numel());
    const double want_var = 2.0 / (32.0 * 9.0);
    EXPECT_NEAR(sum / n, 0.0, 3 * std::sqrt(want_var / n));
    EXPECT_NEAR(sq / n, want_var, want_var * 0.05);

    EXPECT_THROW(he_init<float>(rng, 0, 4, 3, 3), std::invalid_argument);
    EXPECT_THROW(he_init<float>(rng, 4, 0, 3, 3), std::invalid_argument);
}

TEST(Adam, FirstStepIsSignedLearningRateAndFrozenTrajectory) {
    std::vector<double> p = {1.0}, m = {0.0}, v = {0.0};
    adam_update(p, {2.0}, m, v, 1, 0.1);
    // First step moves by about lr regardless of gradient magnitude.
    EXPECT_NEAR(p[0], 0.9000000005, 1e-12);
    EXPECT_NEAR(m[0], 0.2, 1e-15);
    EXPECT_NEAR(v[0], 0.004, 1e-15);

    adam_update(p, {-1.0}, m, v, 2, 0.1);
    EXPECT_NEAR(p[0], 0.8733662967024315, 1e-12);
    EXPECT_NEAR(m[0], 0.08, 1e-15);
    EXPECT_NEAR(v[0], 0.004996, 1e-15);
}

TEST(Adam, ErrorContracts) {
    std::vector<float> p = {1.0f}, m = {0.0f}, v = {0.0f};
    std::vector<float> g2 = {1.0f, 2.0f};
    EXPECT_THROW(adam_update(p, g2, m, v, 1, 0.1), std::invalid_argument);
    std::vector<float> g = {1.0f};
    EXPECT_THROW(adam_update(p, g, m, v, 0, 0.1), std::invalid_argument);
}
