#pragma once

// Gaussian-denoising training loop and its on-disk checkpoint format.
//
// Determinism contract: given the same corpus, config, and seed, training is
// bitwise reproducible. Everything random flows from one Rng in a fixed
// per-step order (patch positions, per-sample augmentation choice, noise),
// execution is single threaded, and log lines are formatted with snprintf.
//
// Checkpoint layout (little-endian, "MWC1"):
//   magic, u32 version, config block, i32 epochs_done, rng state,
//   optimizer state (t, hyper-params, per-slot m and v), u32 tensor count,
//   then each tensor as name / ndim / dims / f32 payload in visit_params
//   order, and a trailing CRC-32 (IEEE) of every preceding byte.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <ostream>
#include <string>
#include <vector>

#include "mwcnn/image_io.hpp"
#include "mwcnn/model.hpp"
#include "mwcnn/tensor.hpp"

namespace mwcnn {

struct TrainConfig {
    double sigma = 25.0;       // noise std on the 0..255 scale
    int patch = 48;
    int batch = 24;
    int epochs = 40;
    int steps_per_epoch = 100;
    double lr_start = 1e-3;
    double lr_end = 1e-4;
    bool augment = true;
    std::uint64_t seed = 1;
};

template <typename T>
struct LossResult {
    double value = 0;
    Tensor4<T> grad;
};

// Half the summed squared error averaged over the batch dimension, so the
// gradient is simply (pred - target) / n.
template <typename T>
LossResult<T> loss(const Tensor4<T>& pred, const Tensor4<T>& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("loss: shape mismatch");
    LossResult<T> r;
    r.grad = Tensor4<T>(pred.n, pred.c, pred.h, pred.w);
    double se = 0;
    const double inv_n = 1.0 / double(pred.n);
    for (std::size_t k = 0; k < pred.data.size(); ++k) {
        const double d = double(pred.data[k]) - double(target.data[k]);
        se += d * d;
        r.grad.data[k] = static_cast<T>(d * inv_n);
    }
    r.value = 0.5 * se * inv_n;
    return r;
}

template <typename T>
Tensor4<T> add_gaussian_noise(const Tensor4<T>& x, double sigma, Rng& rng) {
    if (sigma < 0) throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    for (std::size_t k = 0; k < x.data.size(); ++k)
        y.data[k] = static_cast<T>(double(x.data[k]) + sigma * rng.normal());
    return y;
}

// count random patches, each from a uniformly chosen image at a uniformly
// chosen position. Draw order per patch: image index, top, left.
template <typename T>
Tensor4<T> sample_patches(const std::vector<Tensor4<T>>& corpus, int patch, int count, Rng& rng) {
    if (corpus.empty()) throw std::invalid_argument("sample_patches: empty corpus");
    if (patch < 1 || count < 1) throw std::invalid_argument("sample_patches: bad patch or count");
    const int c = corpus[0].c;
    for (const Tensor4<T>& img : corpus) {
        if (img.n != 1 || img.c != c)
            throw std::invalid_argument("sample_patches: corpus images must share (1, c, ...)");
        if (img.h < patch || img.w < patch)
            throw std::invalid_argument("sample_patches: image " + img.shape_str() +
                                        " smaller than patch " + std::to_string(patch));
    }

    Tensor4<T> out(count, c, patch, patch);
    for (int k = 0; k < count; ++k) {
        const Tensor4<T>& img = corpus[rng.below(corpus.size())];
        const int top = static_cast<int>(rng.below(std::uint64_t(img.h - patch + 1)));
        const int left = static_cast<int>(rng.below(std::uint64_t(img.w - patch + 1)));
        for (int ci = 0; ci < c; ++ci) {
            const T* src = img.slab(0, ci);
            T* dst = out.slab(k, ci);
            for (int r = 0; r < patch; ++r)
                std::copy(src + std::size_t(top + r) * img.w + left,
                          src + std::size_t(top + r) * img.w + left + patch,
                          dst + std::size_t(r) * patch);
        }
    }
    return out;
}

namespace detail {

template <typename T>
Tensor4<T> rot90_ccw(const Tensor4<T>& x) {
    Tensor4<T> out(x.n, x.c, x.w, x.h);
    for (int ni = 0; ni < x.n; ++ni)
        for (int ci = 0; ci < x.c; ++ci) {
            const T* src = x.slab(ni, ci);
            T* dst = out.slab(ni, ci);
            for (int i = 0; i < out.h; ++i)
                for (int j = 0; j < out.w; ++j)
                    dst[std::size_t(i) * out.w + j] = src[std::size_t(j) * x.w + (x.w - 1 - i)];
        }
    return out;
}

template <typename T>
Tensor4<T> hflip(const Tensor4<T>& x) {
    Tensor4<T> out(x.n, x.c, x.h, x.w);
    for (int ni = 0; ni < x.n; ++ni)
        for (int ci = 0; ci < x.c; ++ci) {
            const T* src = x.slab(ni, ci);
            T* dst = out.slab(ni, ci);
            for (int i = 0; i < x.h; ++i)
                for (int j = 0; j < x.w; ++j)
                    dst[std::size_t(i) * x.w + j] = src[std::size_t(i) * x.w + (x.w - 1 - j)];
        }
    return out;
}

}  // namespace detail

// The eight symmetries of the square: k & 3 counterclockwise quarter turns,
// then a horizontal flip if k & 4. k = 0 is the identity and k = 4 the plain
// flip (its own inverse).
template <typename T>
Tensor4<T> dihedral(const Tensor4<T>& x, int k) {
    if (k < 0 || k > 7) throw std::invalid_argument("dihedral: k must be in [0, 8)");
    if ((k & 3) % 2 == 1 && x.h != x.w)
        throw std::invalid_argument("dihedral: quarter turns need square planes");
    Tensor4<T> out = x;
    for (int r = 0; r < (k & 3); ++r) out = detail::rot90_ccw(out);
    if (k & 4) out = detail::hflip(out);
    return out;
}

// One independent symmetry draw per sample.
template <typename T>
void augment_batch(Tensor4<T>& batch, Rng& rng) {
    const std::size_t slab = std::size_t(batch.h) * batch.w;
    for (int ni = 0; ni < batch.n; ++ni) {
        const int k = static_cast<int>(rng.below(8));
        if (k == 0) continue;
        Tensor4<T> one(1, batch.c, batch.h, batch.w);
        for (int ci = 0; ci < batch.c; ++ci)
            std::copy(batch.slab(ni, ci), batch.slab(ni, ci) + slab, one.slab(0, ci));
        one = dihedral(one, k);
        for (int ci = 0; ci < batch.c; ++ci)
            std::copy(one.slab(0, ci), one.slab(0, ci) + slab, batch.slab(ni, ci));
    }
}

// Geometric interpolation from lr_start at epoch 0 to lr_end at the final
// epoch; both endpoints are hit exactly.
inline double lr_schedule(const TrainConfig& cfg, int epoch) {
    if (cfg.lr_start <= 0 || cfg.lr_end <= 0)
        throw std::invalid_argument("lr_schedule: rates must be positive");
    if (epoch < 0 || epoch >= cfg.epochs) throw std::invalid_argument("lr_schedule: epoch out of range");
    if (cfg.lr_start == cfg.lr_end) return cfg.lr_start;
    if (cfg.epochs < 2)
        throw std::invalid_argument("lr_schedule: a decaying schedule needs at least 2 epochs");
    if (epoch == 0) return cfg.lr_start;
    if (epoch == cfg.epochs - 1) return cfg.lr_end;
    return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, double(epoch) / double(cfg.epochs - 1));
}

// Center-crop to the largest size the model accepts.
template <typename T>
Tensor4<T> crop_to_multiple(const Tensor4<T>& x, int div) {
    const int h = (x.h / div) * div, w = (x.w / div) * div;
    if (h < div || w < div)
        throw std::invalid_argument("crop_to_multiple: image smaller than " + std::to_string(div));
    if (h == x.h && w == x.w) return x;
    const int top = (x.h - h) / 2, left = (x.w - w) / 2;
    Tensor4<T> out(x.n, x.c, h, w);
    for (int ni = 0; ni < x.n; ++ni)
        for (int ci = 0; ci < x.c; ++ci)
            for (int r = 0; r < h; ++r)
                std::copy(x.slab(ni, ci) + std::size_t(top + r) * x.w + left,
                          x.slab(ni, ci) + std::size_t(top + r) * x.w + left + w,
                          out.slab(ni, ci) + std::size_t(r) * w);
    return out;
}

// PSNR with a border of the given width excluded on every side.
template <typename T>
double psnr_cropped(const Tensor4<T>& a, const Tensor4<T>& b, int border) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr_cropped: shape mismatch");
    if (a.h <= 2 * border || a.w <= 2 * border)
        throw std::invalid_argument("psnr_cropped: border swallows the whole image");
    double se = 0;
    std::int64_t cnt = 0;
    for (int ni = 0; ni < a.n; ++ni)
        for (int ci = 0; ci < a.c; ++ci)
            for (int r = border; r < a.h - border; ++r)
                for (int c = border; c < a.w - border; ++c) {
                    const double d = double(a.at(ni, ci, r, c)) - double(b.at(ni, ci, r, c));
                    se += d * d;
                    ++cnt;
                }
    const double mse = se / double(cnt);
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

template <typename T>
Tensor4<T> clamp_0_255(const Tensor4<T>& x) {
    Tensor4<T> y = x;
    for (T& v : y.data) v = std::min(T(255), std::max(T(0), v));
    return y;
}

// Mean held-out PSNR: fixed noise derived from the seed (identical at every
// call, so epochs are comparable), eval-mode forward on the full image,
// clamped output, transform border excluded.
template <typename T>
double validate_psnr(ModelGraph<T>& g, const std::vector<Tensor4<T>>& val, double sigma,
                     std::uint64_t seed) {
    if (val.empty()) throw std::invalid_argument("validate_psnr: empty validation set");
    const int div = 1 << g.cfg.levels;
    Rng rng(seed ^ 0x76616c6964617465ull);  // decorrelate from the training stream
    double total = 0;
    for (const Tensor4<T>& img : val) {
        const Tensor4<T> clean = crop_to_multiple(img, div);
        const Tensor4<T> noisy = add_gaussian_noise(clean, sigma, rng);
        const Tensor4<T> restored = forward(g, noisy, Mode::eval);
        total += psnr_cropped(clamp_0_255(restored), clean, div);
    }
    return total / double(val.size());
}

// PSNR the validation set would score with no model at all, using the exact
// noise stream validate_psnr draws. The reference point every trained body
// is compared against.
template <typename T>
double noisy_baseline_psnr(const std::vector<Tensor4<T>>& val, double sigma, std::uint64_t seed,
                           int div) {
    if (val.empty()) throw std::invalid_argument("noisy_baseline_psnr: empty validation set");
    Rng rng(seed ^ 0x76616c6964617465ull);
    double total = 0;
    for (const Tensor4<T>& img : val) {
        const Tensor4<T> clean = crop_to_multiple(img, div);
        const Tensor4<T> noisy = add_gaussian_noise(clean, sigma, rng);
        total += psnr_cropped(clamp_0_255(noisy), clean, div);
    }
    return total / double(val.size());
}

template <typename T>
struct TrainResult {
    std::vector<double> epoch_loss;     // mean per-step loss of each epoch
    std::vector<double> epoch_val_psnr; // empty entries are NaN when no val set
    double final_val_psnr = std::numeric_limits<double>::quiet_NaN();
    ModelAdam<T> adam;
    Rng rng{0};
    int epochs_done = 0;
};

// Mid-run state to continue from: the optimizer moments, the random stream,
// and the number of epochs already finished.
template <typename T>
struct ResumePoint {
    ModelAdam<T> adam;
    Rng rng{0};
    int start_epoch = 0;
};

// Log format, one line per step and one per epoch end:
//   epoch step lr loss -
//   epoch step lr mean_epoch_loss val_psnr
template <typename T>
TrainResult<T> train_epochs(ModelGraph<T>& g, const std::vector<Tensor4<T>>& corpus,
                            const TrainConfig& cfg, const std::vector<Tensor4<T>>* val = nullptr,
                            std::ostream* log = nullptr,
                            const ResumePoint<T>* resume = nullptr) {
    if (cfg.epochs < 0 || cfg.steps_per_epoch < 1 || cfg.batch < 1)
        throw std::invalid_argument("train_epochs: bad schedule");
    if (g.cfg.downsampler != Downsampler::dilated_chain) {
        const int div = 1 << g.cfg.levels;
        if (cfg.patch % div != 0)
            throw std::invalid_argument("train_epochs: patch size must be divisible by " +
                                        std::to_string(div));
    }

    TrainResult<T> r;
    int start_epoch = 0;
    if (resume) {
        if (resume->start_epoch < 0 || resume->start_epoch > cfg.epochs)
            throw std::invalid_argument("train_epochs: resume epoch outside the schedule");
        r.adam = resume->adam;
        r.rng = resume->rng;
        start_epoch = resume->start_epoch;
        r.epochs_done = start_epoch;
    } else {
        r.adam = make_adam(g);
        r.rng = Rng(cfg.seed);
    }

    char line[160];
    int gstep = start_epoch * cfg.steps_per_epoch;
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(cfg, epoch);
        double loss_sum = 0;
        for (int s = 0; s < cfg.steps_per_epoch; ++s) {
            Tensor4<T> clean = sample_patches(corpus, cfg.patch, cfg.batch, r.rng);
            if (cfg.augment) augment_batch(clean, r.rng);
            const Tensor4<T> noisy = add_gaussian_noise(clean, cfg.sigma, r.rng);

            Tape<T> tape;
            const Tensor4<T> pred = forward(g, noisy, Mode::train, &tape);
            LossResult<T> lr_res = loss(pred, clean);
            if (!std::isfinite(lr_res.value)) {
                double gn = 0;
                for (const T& v : lr_res.grad.data) gn += double(v) * double(v);
                std::snprintf(line, sizeof line,
                              "train_epochs: non-finite loss at epoch %d step %d (lr %.8g, "
                              "loss-grad norm %.8g)",
                              epoch, gstep, lr, std::sqrt(gn));
                throw std::runtime_error(line);
            }
            ModelGrads<T> mg = backward(g, tape, lr_res.grad);
            adam_step(g, mg, r.adam, lr);

            loss_sum += lr_res.value;
            ++gstep;
            if (log) {
                std::snprintf(line, sizeof line, "%d %d %.8g %.8g -\n", epoch, gstep, lr,
                              lr_res.value);
                (*log) << line;
            }
        }
        const double mean_loss = loss_sum / double(cfg.steps_per_epoch);
        r.epoch_loss.push_back(mean_loss);
        double vp = std::numeric_limits<double>::quiet_NaN();
        if (val) {
            vp = validate_psnr(g, *val, cfg.sigma, cfg.seed);
            r.final_val_psnr = vp;
        }
        r.epoch_val_psnr.push_back(vp);
        if (log) {
            if (val)
                std::snprintf(line, sizeof line, "%d %d %.8g %.8g %.4f\n", epoch, gstep,
                              lr, mean_loss, vp);
            else
                std::snprintf(line, sizeof line, "%d %d %.8g %.8g -\n", epoch, gstep, lr,
                              mean_loss);
            (*log) << line;
        }
        r.epochs_done = epoch + 1;
    }
    return r;
}

// --- Checkpoints -----------------------------------------------------------

inline std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t len,
                                std::uint32_t seed = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = ~seed;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

namespace detail {

struct ByteWriter {
    std::vector<std::uint8_t> buf;

    void put_bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void put_u8(std::uint8_t v) { buf.push_back(v); }
    void put_u32(std::uint32_t v) {
        for (int k = 0; k < 4; ++k) buf.push_back(std::uint8_t(v >> (8 * k)));
    }
    void put_u64(std::uint64_t v) {
        for (int k = 0; k < 8; ++k) buf.push_back(std::uint8_t(v >> (8 * k)));
    }
    void put_i32(std::int32_t v) { put_u32(static_cast<std::uint32_t>(v)); }
    void put_i64(std::int64_t v) { put_u64(static_cast<std::uint64_t>(v)); }
    void put_f32(float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        put_u32(u);
    }
    void put_f64(double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        put_u64(u);
    }
    void put_string(const std::string& s) {
        put_u32(static_cast<std::uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }
    void put_f32_vec(const std::vector<float>& v) {
        put_u64(v.size());
        for (float x : v) put_f32(x);
    }
};

struct ByteReader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (buf.size() - pos < n) throw std::runtime_error("checkpoint: truncated file");
    }
    std::uint8_t get_u8() {
        need(1);
        return buf[pos++];
    }
    std::uint32_t get_u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= std::uint32_t(buf[pos++]) << (8 * k);
        return v;
    }
    std::uint64_t get_u64() {
        need(8);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= std::uint64_t(buf[pos++]) << (8 * k);
        return v;
    }
    std::int32_t get_i32() { return static_cast<std::int32_t>(get_u32()); }
    std::int64_t get_i64() { return static_cast<std::int64_t>(get_u64()); }
    float get_f32() {
        const std::uint32_t u = get_u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    double get_f64() {
        const std::uint64_t u = get_u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    std::string get_string() {
        const std::uint32_t n = get_u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
    std::vector<float> get_f32_vec() {
        const std::uint64_t n = get_u64();
        if (n > (std::size_t(1) << 32)) throw std::runtime_error("checkpoint: absurd vector length");
        std::vector<float> v(n);
        for (std::uint64_t k = 0; k < n; ++k) v[k] = get_f32();
        return v;
    }
};

inline void put_config(ByteWriter& w, const MwcnnConfig& c) {
    w.put_i32(c.levels);
    w.put_i32(c.block_depth);
    w.put_u32(static_cast<std::uint32_t>(c.widths.size()));
    for (int x : c.widths) w.put_i32(x);
    w.put_string(c.bank);
    w.put_string(c.bank_expand);
    w.put_u8(static_cast<std::uint8_t>(c.downsampler));
    w.put_u8(c.global_residual ? 1 : 0);
    w.put_i32(c.in_channels);
    w.put_u8(c.allow_noninvertible ? 1 : 0);
    w.put_i32(c.chain_depth);
    w.put_i32(c.chain_dilation);
}

inline MwcnnConfig get_config(ByteReader& r) {
    MwcnnConfig c;
    c.levels = r.get_i32();
    c.block_depth = r.get_i32();
    const std::uint32_t nw = r.get_u32();
    if (nw > 64) throw std::runtime_error("checkpoint: absurd width list");
    c.widths.clear();
    for (std::uint32_t k = 0; k < nw; ++k) c.widths.push_back(r.get_i32());
    c.bank = r.get_string();
    c.bank_expand = r.get_string();
    const std::uint8_t d = r.get_u8();
    if (d > 2) throw std::runtime_error("checkpoint: bad downsampler tag");
    c.downsampler = static_cast<Downsampler>(d);
    c.global_residual = r.get_u8() != 0;
    c.in_channels = r.get_i32();
    c.allow_noninvertible = r.get_u8() != 0;
    c.chain_depth = r.get_i32();
    c.chain_dilation = r.get_i32();
    return c;
}

}  // namespace detail

struct CheckpointData {
    ModelGraph<float> graph;
    ModelAdam<float> adam;
    int epochs_done = 0;
    Rng rng{0};
};

inline void checkpoint_save(const std::string& path, ModelGraph<float>& g,
                            const ModelAdam<float>& adam, int epochs_done, const Rng& rng) {
    detail::ByteWriter w;
    w.put_bytes("MWC1", 4);
    w.put_u32(1);  // format version
    detail::put_config(w, g.cfg);
    w.put_i32(epochs_done);
    for (int k = 0; k < 4; ++k) w.put_u64(rng.s[k]);
    w.put_u8(rng.has_spare ? 1 : 0);
    w.put_f64(rng.spare);

    w.put_i64(adam.t);
    w.put_f64(adam.cfg.beta1);
    w.put_f64(adam.cfg.beta2);
    w.put_f64(adam.cfg.eps);
    w.put_u32(static_cast<std::uint32_t>(adam.m.size()));
    for (std::size_t k = 0; k < adam.m.size(); ++k) {
        w.put_f32_vec(adam.m[k]);
        w.put_f32_vec(adam.v[k]);
    }

    std::vector<ParamRef<float>> refs;
    visit_params(g, [&refs](const ParamRef<float>& p) { refs.push_back(p); });
    w.put_u32(static_cast<std::uint32_t>(refs.size()));
    for (const ParamRef<float>& p : refs) {
        w.put_string(p.name);
        w.put_u8(static_cast<std::uint8_t>(p.ndim));
        for (int k = 0; k < p.ndim; ++k) w.put_i32(p.dims[k]);
        w.put_u64(p.data->size());
        for (float x : *p.data) w.put_f32(x);
    }

    const std::uint32_t crc = crc32_ieee(w.buf.data(), w.buf.size());
    w.put_u32(crc);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
    f.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
    if (!f) throw std::runtime_error("checkpoint: short write to " + path);
}

inline CheckpointData checkpoint_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    if (buf.size() < 12) throw std::runtime_error("checkpoint: truncated file");

    const std::uint32_t stored = std::uint32_t(buf[buf.size() - 4]) |
                                 std::uint32_t(buf[buf.size() - 3]) << 8 |
                                 std::uint32_t(buf[buf.size() - 2]) << 16 |
                                 std::uint32_t(buf[buf.size() - 1]) << 24;
    if (crc32_ieee(buf.data(), buf.size() - 4) != stored)
        throw std::runtime_error("checkpoint: checksum failure in " + path);

    detail::ByteReader r{buf};
    char magic[5] = {0};
    r.need(4);
    std::memcpy(magic, buf.data(), 4);
    r.pos = 4;
    if (std::string(magic) != "MWC1") throw std::runtime_error("checkpoint: bad magic in " + path);
    const std::uint32_t version = r.get_u32();
    if (version != 1)
        throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));

    CheckpointData out;
    const MwcnnConfig cfg = detail::get_config(r);
    Rng builder(0);
    out.graph = build<float>(cfg, builder);
    out.epochs_done = r.get_i32();
    for (int k = 0; k < 4; ++k) out.rng.s[k] = r.get_u64();
    out.rng.has_spare = r.get_u8() != 0;
    out.rng.spare = r.get_f64();

    out.adam.t = r.get_i64();
    out.adam.cfg.beta1 = r.get_f64();
    out.adam.cfg.beta2 = r.get_f64();
    out.adam.cfg.eps = r.get_f64();
    const std::uint32_t slots = r.get_u32();
    ModelAdam<float> expect = make_adam(out.graph);
    if (slots != expect.m.size())
        throw std::runtime_error("checkpoint: optimizer slot count does not match architecture");
    out.adam.m.resize(slots);
    out.adam.v.resize(slots);
    for (std::uint32_t k = 0; k < slots; ++k) {
        out.adam.m[k] = r.get_f32_vec();
        out.adam.v[k] = r.get_f32_vec();
        if (out.adam.m[k].size() != expect.m[k].size() || out.adam.v[k].size() != expect.v[k].size())
            throw std::runtime_error("checkpoint: optimizer slot length does not match architecture");
    }

    std::vector<ParamRef<float>> refs;
    visit_params(out.graph, [&refs](const ParamRef<float>& p) { refs.push_back(p); });
    const std::uint32_t ntensors = r.get_u32();
    if (ntensors != refs.size())
        throw std::runtime_error("checkpoint: tensor count does not match architecture");
    for (ParamRef<float>& p : refs) {
        const std::string name = r.get_string();
        if (name != p.name)
            throw std::runtime_error("checkpoint: tensor order mismatch, expected " + p.name +
                                     ", found " + name);
        const int ndim = r.get_u8();
        if (ndim != p.ndim) throw std::runtime_error("checkpoint: rank mismatch for " + name);
        for (int k = 0; k < ndim; ++k)
            if (r.get_i32() != p.dims[k])
                throw std::runtime_error("checkpoint: shape mismatch for " + name);
        const std::uint64_t len = r.get_u64();
        if (len != p.data->size())
            throw std::runtime_error("checkpoint: payload length mismatch for " + name);
        for (std::uint64_t k = 0; k < len; ++k) (*p.data)[k] = r.get_f32();
    }

    if (r.pos != buf.size() - 4) throw std::runtime_error("checkpoint: trailing garbage in " + path);
    return out;
}

// Detailed mismatch report when a checkpoint is used with a config it was not
// trained under.
inline void ensure_config_compatible(const MwcnnConfig& want, const MwcnnConfig& have) {
    if (want == have) return;
    std::string msg = "checkpoint/config mismatch:";
    auto num = [&msg](const char* field, auto a, auto b) {
        if (a != b)
            msg += std::string(" ") + field + " " + std::to_string(a) + " vs " + std::to_string(b) + ";";
    };
    num("levels", want.levels, have.levels);
    num("block_depth", want.block_depth, have.block_depth);
    if (want.widths != have.widths) msg += " widths differ;";
    if (want.bank != have.bank) msg += " bank " + want.bank + " vs " + have.bank + ";";
    if (want.bank_expand != have.bank_expand)
        msg += " bank_expand " + want.bank_expand + " vs " + have.bank_expand + ";";
    if (want.downsampler != have.downsampler)
        msg += std::string(" downsampler ") + downsampler_name(want.downsampler) + " vs " +
               downsampler_name(have.downsampler) + ";";
    num("global_residual", int(want.global_residual), int(have.global_residual));
    num("in_channels", want.in_channels, have.in_channels);
    num("chain_depth", want.chain_depth, have.chain_depth);
    num("chain_dilation", want.chain_dilation, have.chain_dilation);
    throw std::runtime_error(msg);
}

}  // namespace mwcnn
