#pragma once

// 8-bit PNM images (P2/P3 ascii, P5/P6 binary, maxval 255), grayscale
// conversion, and the two restoration metrics. Metric conventions: PSNR on
// the 0..255 scale with +inf for identical inputs; mean SSIM over all fully
// interior 11x11 Gaussian windows (sigma 1.5, K1 0.01, K2 0.03, L 255).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "mwcnn/tensor.hpp"

namespace mwcnn {

struct ImageU8 {
    int h = 0, w = 0, channels = 1;  // samples interleaved row-major
    std::vector<std::uint8_t> samples;

    std::uint8_t at(int r, int c, int ch = 0) const {
        return samples[(std::size_t(r) * w + c) * channels + ch];
    }
};

namespace detail {

// Reads the next whitespace-delimited token, skipping '#' comments.
inline std::string pnm_token(const std::vector<char>& buf, std::size_t& pos) {
    while (pos < buf.size()) {
        const char ch = buf[pos];
        if (ch == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    std::size_t start = pos;
    while (pos < buf.size()) {
        const char ch = buf[pos];
        if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') break;
        ++pos;
    }
    if (start == pos) throw std::runtime_error("pnm: truncated header");
    return std::string(buf.begin() + start, buf.begin() + pos);
}

inline int pnm_int(const std::vector<char>& buf, std::size_t& pos) {
    const std::string tok = pnm_token(buf, pos);
    std::size_t used = 0;
    int value = 0;
    try {
        value = std::stoi(tok, &used);
    } catch (const std::exception&) {
        throw std::runtime_error("pnm: expected integer, got '" + tok + "'");
    }
    if (used != tok.size()) throw std::runtime_error("pnm: expected integer, got '" + tok + "'");
    return value;
}

}  // namespace detail

inline ImageU8 read_pnm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("pnm: cannot open " + path);
    std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    const std::string magic = detail::pnm_token(buf, pos);
    int channels;
    bool binary;
    if (magic == "P2") { channels = 1; binary = false; }
    else if (magic == "P3") { channels = 3; binary = false; }
    else if (magic == "P5") { channels = 1; binary = true; }
    else if (magic == "P6") { channels = 3; binary = true; }
    else throw std::runtime_error("pnm: unsupported magic '" + magic + "' in " + path);

    ImageU8 img;
    img.channels = channels;
    img.w = detail::pnm_int(buf, pos);
    img.h = detail::pnm_int(buf, pos);
    if (img.w < 1 || img.h < 1) throw std::runtime_error("pnm: bad dimensions in " + path);
    const int maxval = detail::pnm_int(buf, pos);
    if (maxval != 255) throw std::runtime_error("pnm: only maxval 255 is supported, got " +
                                                std::to_string(maxval));

    const std::size_t count = std::size_t(img.w) * img.h * channels;
    img.samples.resize(count);
    if (binary) {
        // Exactly one whitespace byte separates the header from the payload.
        if (pos >= buf.size()) throw std::runtime_error("pnm: truncated payload in " + path);
        ++pos;
        if (buf.size() - pos < count) throw std::runtime_error("pnm: truncated payload in " + path);
        std::copy(buf.begin() + pos, buf.begin() + pos + count, img.samples.begin());
    } else {
        for (std::size_t k = 0; k < count; ++k) {
            const int v = detail::pnm_int(buf, pos);
            if (v < 0 || v > 255) throw std::runtime_error("pnm: sample out of range in " + path);
            img.samples[k] = static_cast<std::uint8_t>(v);
        }
    }
    return img;
}

// Writes binary P5 (1 channel) or P6 (3 channels).
inline void write_pnm(const ImageU8& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("write_pnm: image must have 1 or 3 channels");
    if (img.samples.size() != std::size_t(img.w) * img.h * img.channels)
        throw std::invalid_argument("write_pnm: sample buffer length mismatch");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("pnm: cannot write " + path);
    f << (img.channels == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.samples.data()),
            static_cast<std::streamsize>(img.samples.size()));
    if (!f) throw std::runtime_error("pnm: short write to " + path);
}

// BT.601 luma: 0.299 R + 0.587 G + 0.114 B, rounded to nearest.
inline ImageU8 to_gray(const ImageU8& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3) throw std::invalid_argument("to_gray: expected 1 or 3 channels");
    ImageU8 out;
    out.h = img.h;
    out.w = img.w;
    out.channels = 1;
    out.samples.resize(std::size_t(img.h) * img.w);
    for (std::size_t k = 0; k < out.samples.size(); ++k) {
        const double y = 0.299 * img.samples[3 * k] + 0.587 * img.samples[3 * k + 1] +
                         0.114 * img.samples[3 * k + 2];
        out.samples[k] = static_cast<std::uint8_t>(std::lround(y));
    }
    return out;
}

// Grayscale image as a (1, 1, h, w) tensor on the 0..255 scale.
template <typename T = float>
Tensor4<T> tensor_from_image(const ImageU8& img) {
    const ImageU8 g = to_gray(img);
    Tensor4<T> t(1, 1, g.h, g.w);
    for (std::size_t k = 0; k < g.samples.size(); ++k) t.data[k] = static_cast<T>(g.samples[k]);
    return t;
}

// Clamp to [0, 255] and round half away from zero.
template <typename T>
ImageU8 image_from_tensor(const Tensor4<T>& t) {
    if (t.n != 1 || t.c != 1)
        throw std::invalid_argument("image_from_tensor: expected a (1,1,h,w) tensor, got " + t.shape_str());
    ImageU8 img;
    img.h = t.h;
    img.w = t.w;
    img.channels = 1;
    img.samples.resize(t.numel());
    for (std::size_t k = 0; k < img.samples.size(); ++k) {
        double v = std::round(double(t.data[k]));
        if (v < 0) v = 0;
        if (v > 255) v = 255;
        img.samples[k] = static_cast<std::uint8_t>(v);
    }
    return img;
}

template <typename T>
double psnr(const Tensor4<T>& a, const Tensor4<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
    double se = 0;
    for (std::size_t k = 0; k < a.data.size(); ++k) {
        const double d = double(a.data[k]) - double(b.data[k]);
        se += d * d;
    }
    const double mse = se / double(a.numel());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline double psnr(const ImageU8& a, const ImageU8& b) {
    if (a.h != b.h || a.w != b.w || a.channels != b.channels)
        throw std::invalid_argument("psnr: shape mismatch");
    double se = 0;
    for (std::size_t k = 0; k < a.samples.size(); ++k) {
        const double d = double(a.samples[k]) - double(b.samples[k]);
        se += d * d;
    }
    const double mse = se / double(a.samples.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace detail {

inline std::vector<double> ssim_window() {
    std::vector<double> g(11);
    double sum = 0;
    for (int k = 0; k < 11; ++k) {
        const double d = k - 5;
        g[k] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += g[k];
    }
    for (double& v : g) v /= sum;
    return g;
}

// Separable valid-region filtering with the normalized 1-D window; output is
// (h-10) x (w-10).
inline std::vector<double> ssim_filter(const std::vector<double>& img, int h, int w,
                                       const std::vector<double>& win) {
    const int oh = h - 10, ow = w - 10;
    std::vector<double> rows(std::size_t(h) * ow);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < ow; ++c) {
            double acc = 0;
            for (int k = 0; k < 11; ++k) acc += win[k] * img[std::size_t(r) * w + c + k];
            rows[std::size_t(r) * ow + c] = acc;
        }
    std::vector<double> out(std::size_t(oh) * ow);
    for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
            double acc = 0;
            for (int k = 0; k < 11; ++k) acc += win[k] * rows[std::size_t(r + k) * ow + c];
            out[std::size_t(r) * ow + c] = acc;
        }
    return out;
}

inline double ssim_planes(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
    if (h < 11 || w < 11)
        throw std::invalid_argument("ssim: both dimensions must be at least the 11-pixel window");
    const std::vector<double> win = ssim_window();
    auto mul = [](const std::vector<double>& x, const std::vector<double>& y) {
        std::vector<double> r(x.size());
        for (std::size_t k = 0; k < x.size(); ++k) r[k] = x[k] * y[k];
        return r;
    };
    const std::vector<double> mu_a = ssim_filter(a, h, w, win);
    const std::vector<double> mu_b = ssim_filter(b, h, w, win);
    const std::vector<double> saa = ssim_filter(mul(a, a), h, w, win);
    const std::vector<double> sbb = ssim_filter(mul(b, b), h, w, win);
    const std::vector<double> sab = ssim_filter(mul(a, b), h, w, win);

    const double c1 = (0.01 * 255) * (0.01 * 255);
    const double c2 = (0.03 * 255) * (0.03 * 255);
    double total = 0;
    for (std::size_t k = 0; k < mu_a.size(); ++k) {
        const double ma = mu_a[k], mb = mu_b[k];
        const double va = saa[k] - ma * ma;
        const double vb = sbb[k] - mb * mb;
        const double cov = sab[k] - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / double(mu_a.size());
}

}  // namespace detail

inline double ssim(const ImageU8& a, const ImageU8& b) {
    if (a.h != b.h || a.w != b.w) throw std::invalid_argument("ssim: shape mismatch");
    if (a.channels != 1 || b.channels != 1)
        throw std::invalid_argument("ssim: expects grayscale images");
    std::vector<double> pa(a.samples.begin(), a.samples.end());
    std::vector<double> pb(b.samples.begin(), b.samples.end());
    return detail::ssim_planes(pa, pb, a.h, a.w);
}

template <typename T>
double ssim(const Tensor4<T>& a, const Tensor4<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
    if (a.n != 1 || a.c != 1) throw std::invalid_argument("ssim: expects (1,1,h,w) tensors");
    std::vector<double> pa(a.data.begin(), a.data.end());
    std::vector<double> pb(b.data.begin(), b.data.end());
    return detail::ssim_planes(pa, pb, a.h, a.w);
}

}  // namespace mwcnn
