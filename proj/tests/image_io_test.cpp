#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "mwcnn/image_io.hpp"
#include "mwcnn/tensor.hpp"

using namespace mwcnn;

namespace {

std::string tmp_path(const std::string& name) {
    return std::string(::testing::TempDir()) + "/" + name;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    f << content;
}

ImageU8 gradient_image(int h, int w, int seed) {
    ImageU8 img;
    img.h = h;
    img.w = w;
    img.channels = 1;
    img.samples.resize(std::size_t(h) * w);
    Rng rng(seed);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            img.samples[std::size_t(r) * w + c] =
                static_cast<std::uint8_t>((r * 3 + c * 2 + int(rng.below(32))) % 256);
    return img;
}

}  // namespace

TEST(Pnm, BinaryGrayRoundtrip) {
    auto img = gradient_image(13, 17, 1);
    const auto path = tmp_path("gray.pgm");
    write_pnm(img, path);
    auto back = read_pnm(path);
    EXPECT_EQ(back.h, 13);
    EXPECT_EQ(back.w, 17);
    EXPECT_EQ(back.channels, 1);
    EXPECT_EQ(back.samples, img.samples);
}

TEST(Pnm, BinaryColorRoundtrip) {
    ImageU8 img;
    img.h = 2;
    img.w = 3;
    img.channels = 3;
    img.samples = {255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30, 0, 0, 0, 255, 255, 255};
    const auto path = tmp_path("color.ppm");
    write_pnm(img, path);
    auto back = read_pnm(path);
    EXPECT_EQ(back.channels, 3);
    EXPECT_EQ(back.samples, img.samples);
}

TEST(Pnm, AsciiFormatsWithCommentsAndOddWhitespace) {
    const auto p2 = tmp_path("a.pgm");
    write_file(p2, "P2 # magic\n# a comment line\n 3 2\n255\n0 128\t255\n# mid-data comment\n1 2 3");
    auto g = read_pnm(p2);
    EXPECT_EQ(g.w, 3);
    EXPECT_EQ(g.h, 2);
    EXPECT_EQ(g.samples, (std::vector<std::uint8_t>{0, 128, 255, 1, 2, 3}));

    const auto p3 = tmp_path("a.ppm");
    write_file(p3, "P3\n1 1\n255\n12 34 56\n");
    auto c = read_pnm(p3);
    EXPECT_EQ(c.channels, 3);
    EXPECT_EQ(c.samples, (std::vector<std::uint8_t>{12, 34, 56}));
}

TEST(Pnm, RejectsMalformedFiles) {
    EXPECT_THROW(read_pnm(tmp_path("missing.pgm")), std::runtime_error);

    const auto bad_magic = tmp_path("bad1.pnm");
    write_file(bad_magic, "P4\n2 2\n255\n....");
    EXPECT_THROW(read_pnm(bad_magic), std::runtime_error);

    const auto bad_maxval = tmp_path("bad2.pgm");
    write_file(bad_maxval, "P5\n2 2\n65535\n\0\0\0\0\0\0\0\0");
    EXPECT_THROW(read_pnm(bad_maxval), std::runtime_error);

    const auto truncated = tmp_path("bad3.pgm");
    write_file(truncated, "P5\n4 4\n255\nxyz");
    EXPECT_THROW(read_pnm(truncated), std::runtime_error);

    const auto out_of_range = tmp_path("bad4.pgm");
    write_file(out_of_range, "P2\n2 1\n255\n12 256\n");
    EXPECT_THROW(read_pnm(out_of_range), std::runtime_error);

    const auto zero_dim = tmp_path("bad5.pgm");
    write_file(zero_dim, "P5\n0 2\n255\n");
    EXPECT_THROW(read_pnm(zero_dim), std::runtime_error);

    ImageU8 two_ch;
    two_ch.h = 1;
    two_ch.w = 1;
    two_ch.channels = 2;
    two_ch.samples = {1, 2};
    EXPECT_THROW(write_pnm(two_ch, tmp_path("bad6.pnm")), std::invalid_argument);
}

TEST(Gray, Bt601Weights) {
    ImageU8 img;
    img.h = 1;
    img.w = 4;
    img.channels = 3;
    img.samples = {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255};
    auto g = to_gray(img);
    EXPECT_EQ(g.channels, 1);
    EXPECT_EQ(g.samples, (std::vector<std::uint8_t>{76, 150, 29, 255}));

    // Already-gray images pass through untouched.
    auto gg = to_gray(g);
    EXPECT_EQ(gg.samples, g.samples);
}

TEST(TensorBridge, RoundtripClampAndRounding) {
    auto img = gradient_image(6, 5, 2);
    auto t = tensor_from_image<float>(img);
    EXPECT_EQ(t.h, 6);
    EXPECT_EQ(t.w, 5);
    EXPECT_EQ(t.at(0, 0, 3, 2), float(img.at(3, 2)));

    auto back = image_from_tensor(t);
    EXPECT_EQ(back.samples, img.samples);

    Tensor4<float> vals(1, 1, 1, 6);
    vals.data = {-5.0f, 0.4f, 1.5f, 2.5f, 254.6f, 300.0f};
    auto q = image_from_tensor(vals);
    EXPECT_EQ(q.samples, (std::vector<std::uint8_t>{0, 0, 2, 3, 255, 255}));

    EXPECT_THROW(image_from_tensor(zeros<float>(1, 2, 4, 4)), std::invalid_argument);
}

TEST(Psnr, KnownValuesAndInfinity) {
    auto a = zeros<float>(1, 1, 8, 8);
    auto b = full<float>(1, 1, 8, 8, 5.0f);
    EXPECT_NEAR(psnr(a, b), 34.15140352195873, 1e-12);  // MSE 25
    EXPECT_TRUE(std::isinf(psnr(a, a)));
    EXPECT_THROW(psnr(a, zeros<float>(1, 1, 8, 9)), std::invalid_argument);

    // The two overloads agree on 8-bit data.
    auto img1 = gradient_image(16, 16, 3);
    auto img2 = gradient_image(16, 16, 4);
    EXPECT_NEAR(psnr(img1, img2),
                psnr(tensor_from_image<double>(img1), tensor_from_image<double>(img2)), 1e-12);
}

TEST(Ssim, IdenticalImagesScoreOne) {
    auto img = gradient_image(32, 24, 5);
    EXPECT_DOUBLE_EQ(ssim(img, img), 1.0);
}

TEST(Ssim, SymmetricAndOrderedByDistortion) {
    auto clean = gradient_image(32, 32, 6);
    Rng rng(7);
    auto t = tensor_from_image<double>(clean);
    auto light = t, heavy = t;
    for (std::size_t k = 0; k < t.numel(); ++k) {
        const double n = rng.normal();
        light.data[k] += 5.0 * n;
        heavy.data[k] += 40.0 * n;
    }
    const double s_light = ssim(t, light);
    const double s_heavy = ssim(t, heavy);
    EXPECT_LT(s_heavy, s_light);
    EXPECT_LT(s_light, 1.0);
    EXPECT_GT(s_heavy, 0.0);
    EXPECT_EQ(ssim(t, heavy), ssim(heavy, t));
}

TEST(Ssim, MatchesDirectWindowedComputation) {
    auto ia = gradient_image(20, 18, 8);
    auto ib = gradient_image(20, 18, 9);
    const int h = ia.h, w = ia.w;

    // Independent re-derivation: explicit 2-D Gaussian-weighted moments per
    // valid window, no separable filtering.
    std::vector<double> win(11);
    double wsum = 0;
    for (int k = 0; k < 11; ++k) {
        win[k] = std::exp(-double(k - 5) * (k - 5) / (2.0 * 1.5 * 1.5));
        wsum += win[k];
    }
    for (double& v : win) v /= wsum;

    const double c1 = 6.5025, c2 = 58.5225;  // (0.01*255)^2, (0.03*255)^2
    double total = 0;
    int windows = 0;
    for (int r = 0; r + 11 <= h; ++r)
        for (int c = 0; c + 11 <= w; ++c) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int u = 0; u < 11; ++u)
                for (int v = 0; v < 11; ++v) {
                    const double wt = win[u] * win[v];
                    const double va = ia.at(r + u, c + v);
                    const double vb = ib.at(r + u, c + v);
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            const double var_a = saa - ma * ma;
            const double var_b = sbb - mb * mb;
            const double cov = sab - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
            ++windows;
        }
    EXPECT_NEAR(ssim(ia, ib), total / windows, 1e-10);
}

TEST(Ssim, ErrorContracts) {
    auto small = gradient_image(10, 32, 10);
    EXPECT_THROW(ssim(small, small), std::invalid_argument);
    auto a = gradient_image(16, 16, 11);
    auto b = gradient_image(16, 17, 12);
    EXPECT_THROW(ssim(a, b), std::invalid_argument);

    ImageU8 rgb;
    rgb.h = 16;
    rgb.w = 16;
    rgb.channels = 3;
    rgb.samples.assign(16 * 16 * 3, 0);
    EXPECT_THROW(ssim(rgb, rgb), std::invalid_argument);

    EXPECT_THROW(ssim(zeros<float>(1, 2, 16, 16), zeros<float>(1, 2, 16, 16)),
                 std::invalid_argument);
}

TEST(Ssim, TensorAndImageOverloadsAgree) {
    auto ia = gradient_image(24, 24, 13);
    auto ib = gradient_image(24, 24, 14);
    EXPECT_EQ(ssim(ia, ib), ssim(tensor_from_image<double>(ia), tensor_from_image<double>(ib)));
}
