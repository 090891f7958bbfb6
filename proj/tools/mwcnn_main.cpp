// Command-line driver: train, denoise, eval, wavelet decompose/reconstruct,
// rfmask, selfcheck, ablate. Exit codes: 0 success, 1 failed run or failed
// check, 2 usage errors.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mwcnn/mwcnn.hpp"

namespace fs = std::filesystem;
using namespace mwcnn;

namespace {

// Salt so weight init and patch sampling use unrelated streams of the same
// user-facing seed.
constexpr std::uint64_t kInitSalt = 0x696e6974ull;

struct FullConfig {
    MwcnnConfig model;
    TrainConfig train;
};

long long to_ll(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::exception&) {
        throw std::runtime_error("config: bad integer for " + what + ": '" + s + "'");
    }
    if (used != s.size()) throw std::runtime_error("config: bad integer for " + what + ": '" + s + "'");
    return v;
}

double to_dbl(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw std::runtime_error("config: bad number for " + what + ": '" + s + "'");
    }
    if (used != s.size()) throw std::runtime_error("config: bad number for " + what + ": '" + s + "'");
    return v;
}

bool to_bool(const std::string& s, const std::string& what) {
    if (s == "1" || s == "true") return true;
    if (s == "0" || s == "false") return false;
    throw std::runtime_error("config: bad boolean for " + what + ": '" + s + "'");
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

void apply_key(FullConfig& c, const std::string& key, const std::string& val, int lineno) {
    if (key == "levels") c.model.levels = static_cast<int>(to_ll(val, key));
    else if (key == "block_depth") c.model.block_depth = static_cast<int>(to_ll(val, key));
    else if (key == "widths") {
        c.model.widths.clear();
        std::string item;
        for (std::size_t i = 0; i <= val.size(); ++i) {
            if (i == val.size() || val[i] == ',') {
                if (!trim(item).empty()) c.model.widths.push_back(static_cast<int>(to_ll(trim(item), key)));
                item.clear();
            } else {
                item.push_back(val[i]);
            }
        }
    } else if (key == "bank") c.model.bank = val;
    else if (key == "bank_expand") c.model.bank_expand = val;
    else if (key == "downsampler") c.model.downsampler = downsampler_from_name(val);
    else if (key == "global_residual") c.model.global_residual = to_bool(val, key);
    else if (key == "in_channels") c.model.in_channels = static_cast<int>(to_ll(val, key));
    else if (key == "allow_noninvertible") c.model.allow_noninvertible = to_bool(val, key);
    else if (key == "chain_depth") c.model.chain_depth = static_cast<int>(to_ll(val, key));
    else if (key == "chain_dilation") c.model.chain_dilation = static_cast<int>(to_ll(val, key));
    else if (key == "sigma") c.train.sigma = to_dbl(val, key);
    else if (key == "patch") c.train.patch = static_cast<int>(to_ll(val, key));
    else if (key == "batch") c.train.batch = static_cast<int>(to_ll(val, key));
    else if (key == "epochs") c.train.epochs = static_cast<int>(to_ll(val, key));
    else if (key == "steps_per_epoch") c.train.steps_per_epoch = static_cast<int>(to_ll(val, key));
    else if (key == "lr_start") c.train.lr_start = to_dbl(val, key);
    else if (key == "lr_end") c.train.lr_end = to_dbl(val, key);
    else if (key == "augment") c.train.augment = to_bool(val, key);
    else if (key == "seed") c.train.seed = static_cast<std::uint64_t>(to_ll(val, key));
    else
        throw std::runtime_error("config: unknown key '" + key + "' at line " +
                                 std::to_string(lineno));
}

// Flat key=value file, '#' comments, blank lines ignored.
FullConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    FullConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: expected key=value at line " + std::to_string(lineno));
        apply_key(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno);
    }
    return c;
}

bool is_image_file(const fs::path& p) {
    const std::string e = p.extension().string();
    return e == ".pgm" || e == ".ppm" || e == ".pnm";
}

std::vector<std::string> list_images(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_image_file(entry.path()))
            names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw std::runtime_error("no .pgm/.ppm/.pnm images in " + dir);
    return names;
}

std::vector<Tensor4<float>> load_corpus(const std::string& dir) {
    std::vector<Tensor4<float>> out;
    for (const std::string& name : list_images(dir))
        out.push_back(tensor_from_image<float>(read_pnm((fs::path(dir) / name).string())));
    return out;
}

Tensor4<float> interior(const Tensor4<float>& t, int b) {
    Tensor4<float> out(1, 1, t.h - 2 * b, t.w - 2 * b);
    for (int r = 0; r < out.h; ++r)
        for (int c = 0; c < out.w; ++c) out.at(0, 0, r, c) = t.at(0, 0, r + b, c + b);
    return out;
}

int env_threads(int nfiles) {
    const char* raw = std::getenv("MWCNN_THREADS");
    if (!raw) return 1;
    int v = 1;
    try {
        v = std::stoi(raw);
    } catch (const std::exception&) {
        throw std::runtime_error("MWCNN_THREADS is not an integer");
    }
    return std::max(1, std::min(v, nfiles));
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
    std::string config, data, out, val, log, resume;
    std::int64_t seed_override = -1;
};

int run_train(const TrainArgs& a) {
    FullConfig fc = parse_config_file(a.config);
    if (a.seed_override >= 0) fc.train.seed = static_cast<std::uint64_t>(a.seed_override);

    const std::vector<Tensor4<float>> corpus = load_corpus(a.data);
    std::vector<Tensor4<float>> val;
    if (!a.val.empty()) val = load_corpus(a.val);

    ModelGraph<float> g;
    ResumePoint<float> rp;
    bool resuming = false;
    if (!a.resume.empty()) {
        CheckpointData cp = checkpoint_load(a.resume);
        ensure_config_compatible(fc.model, cp.graph.cfg);
        g = std::move(cp.graph);
        rp.adam = std::move(cp.adam);
        rp.rng = cp.rng;
        rp.start_epoch = cp.epochs_done;
        resuming = true;
    } else {
        Rng init_rng(fc.train.seed ^ kInitSalt);
        g = build<float>(fc.model, init_rng);
    }

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!a.log.empty()) {
        log_file.open(a.log);
        if (!log_file) throw std::runtime_error("cannot open log file " + a.log);
        log = &log_file;
    }

    const TrainResult<float> res =
        train_epochs(g, corpus, fc.train, val.empty() ? nullptr : &val, log,
                     resuming ? &rp : nullptr);
    checkpoint_save(a.out, g, res.adam, res.epochs_done, res.rng);

    char line[128];
    if (val.empty())
        std::snprintf(line, sizeof line, "trained %d epochs, checkpoint %s\n", res.epochs_done,
                      a.out.c_str());
    else
        std::snprintf(line, sizeof line, "trained %d epochs, val psnr %.4f, checkpoint %s\n",
                      res.epochs_done, res.final_val_psnr, a.out.c_str());
    std::cerr << line;
    return 0;
}

// --- denoise ---------------------------------------------------------------

struct DenoiseArgs {
    std::string ckpt, in, out, dump_noisy;
    double add_noise = -1;
    std::uint64_t seed = 1;
};

int run_denoise(const DenoiseArgs& a) {
    CheckpointData cp = checkpoint_load(a.ckpt);
    const int div = 1 << cp.graph.cfg.levels;
    const Tensor4<float> x = tensor_from_image<float>(read_pnm(a.in));
    const Tensor4<float> clean = crop_to_multiple(x, div);

    Tensor4<float> noisy = clean;
    if (a.add_noise >= 0) {
        Rng rng(a.seed);
        noisy = add_gaussian_noise(clean, a.add_noise, rng);
    }
    if (!a.dump_noisy.empty()) write_pnm(image_from_tensor(clamp_0_255(noisy)), a.dump_noisy);

    const Tensor4<float> restored = clamp_0_255(forward(cp.graph, noisy, Mode::eval));
    write_pnm(image_from_tensor(restored), a.out);

    char line[160];
    if (a.add_noise >= 0)
        std::snprintf(line, sizeof line, "noisy %.4f dB -> restored %.4f dB (border %d)\n",
                      psnr_cropped(clamp_0_255(noisy), clean, div),
                      psnr_cropped(restored, clean, div), div);
    else
        std::snprintf(line, sizeof line, "wrote %s (%dx%d)\n", a.out.c_str(), restored.h,
                      restored.w);
    std::cout << line;
    return 0;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string ckpt, data, out;
    double sigma = 25.0;
    std::uint64_t seed = 1;
};

int run_eval(const EvalArgs& a) {
    CheckpointData cp = checkpoint_load(a.ckpt);
    const int div = 1 << cp.graph.cfg.levels;
    const std::vector<std::string> names = list_images(a.data);
    const int n = static_cast<int>(names.size());
    const int nthreads = env_threads(n);

    struct Row {
        double psnr = 0, ssim = 0;
    };
    std::vector<Row> rows(n);
    std::vector<std::string> errors(nthreads);

    auto work = [&](int tid) {
        try {
            ModelGraph<float> g = cp.graph;  // private copy per worker
            for (int i = tid; i < n; i += nthreads) {
                const std::string path = (fs::path(a.data) / names[i]).string();
                const Tensor4<float> clean =
                    crop_to_multiple(tensor_from_image<float>(read_pnm(path)), div);
                // Per-file noise stream: stable under any worker count.
                Rng rng(a.seed ^ crc32_ieee(
                                     reinterpret_cast<const std::uint8_t*>(names[i].data()),
                                     names[i].size()));
                const Tensor4<float> noisy = add_gaussian_noise(clean, a.sigma, rng);
                const Tensor4<float> restored = clamp_0_255(forward(g, noisy, Mode::eval));
                rows[i].psnr = psnr_cropped(restored, clean, div);
                const Tensor4<float> ri = interior(restored, div);
                const Tensor4<float> ci = interior(clean, div);
                rows[i].ssim = (std::min(ri.h, ri.w) >= 11)
                                   ? ssim(ri, ci)
                                   : std::numeric_limits<double>::quiet_NaN();
            }
        } catch (const std::exception& e) {
            errors[tid] = e.what();
        }
    };

    if (nthreads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(work, t);
        for (std::thread& t : pool) t.join();
    }
    for (const std::string& e : errors)
        if (!e.empty()) throw std::runtime_error(e);

    std::ofstream out_file;
    std::ostream* os = &std::cout;
    if (!a.out.empty()) {
        out_file.open(a.out);
        if (!out_file) throw std::runtime_error("cannot open " + a.out);
        os = &out_file;
    }

    char line[512];
    std::snprintf(line, sizeof line,
                  "# restoration metrics: sigma %.6g, %d-pixel border cropped before psnr/ssim\n"
                  "# file\tpsnr\tssim\n",
                  a.sigma, div);
    (*os) << line;
    double psnr_sum = 0, ssim_sum = 0;
    for (int i = 0; i < n; ++i) {
        std::snprintf(line, sizeof line, "%s\t%.4f\t%.5f\n", names[i].c_str(), rows[i].psnr,
                      rows[i].ssim);
        (*os) << line;
        psnr_sum += rows[i].psnr;
        ssim_sum += rows[i].ssim;
    }
    std::snprintf(line, sizeof line, "# mean\t%.4f\t%.5f\n", psnr_sum / n, ssim_sum / n);
    (*os) << line;
    return 0;
}

// --- wavelet ---------------------------------------------------------------

struct WaveletArgs {
    std::string in, out, dir, bank = "haar";
    int levels = 2;
};

int run_wavelet_decompose(const WaveletArgs& a) {
    if (a.levels < 1 || a.levels > 4) throw std::runtime_error("levels must be in [1, 4]");
    const FilterBank<float> bank = make_bank<float>(a.bank);
    const int div = 1 << a.levels;
    const Tensor4<float> x = crop_to_multiple(tensor_from_image<float>(read_pnm(a.in)), div);
    const WptTree<float> tree = wpt_decompose(x, bank, a.levels);

    fs::create_directories(a.dir);
    std::ofstream sidecar(fs::path(a.dir) / "leaves.txt");
    if (!sidecar) throw std::runtime_error("cannot write sidecar in " + a.dir);
    sidecar << "bank " << a.bank << "\nlevels " << a.levels << "\nsize " << x.h << " " << x.w
            << "\n";

    char buf[160];
    for (std::size_t i = 0; i < tree.leaves.size(); ++i) {
        const Tensor4<float>& leaf = tree.leaves[i];
        float lo = leaf.data[0], hi = leaf.data[0];
        for (float v : leaf.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        ImageU8 img;
        img.h = leaf.h;
        img.w = leaf.w;
        img.channels = 1;
        img.samples.resize(leaf.numel());
        const double scale = (hi > lo) ? 255.0 / (double(hi) - double(lo)) : 0.0;
        for (std::size_t k = 0; k < leaf.data.size(); ++k)
            img.samples[k] =
                static_cast<std::uint8_t>(std::lround((double(leaf.data[k]) - lo) * scale));
        std::snprintf(buf, sizeof buf, "leaf_%03zu.pgm", i);
        write_pnm(img, (fs::path(a.dir) / buf).string());
        std::snprintf(buf, sizeof buf, "leaf %zu %.17g %.17g\n", i, double(lo), double(hi));
        sidecar << buf;
    }
    std::cout << "wrote " << tree.leaves.size() << " subband images to " << a.dir << "\n";
    return 0;
}

int run_wavelet_reconstruct(const WaveletArgs& a) {
    std::ifstream sidecar(fs::path(a.dir) / "leaves.txt");
    if (!sidecar) throw std::runtime_error("cannot open " + a.dir + "/leaves.txt");
    std::string key, bank_name;
    int levels = 0, h = 0, w = 0;
    sidecar >> key >> bank_name;
    if (key != "bank") throw std::runtime_error("sidecar: expected 'bank'");
    sidecar >> key >> levels;
    if (key != "levels") throw std::runtime_error("sidecar: expected 'levels'");
    sidecar >> key >> h >> w;
    if (key != "size") throw std::runtime_error("sidecar: expected 'size'");

    const FilterBank<float> bank = make_bank<float>(bank_name);
    WptTree<float> tree;
    tree.levels = levels;
    tree.root_n = 1;
    tree.root_c = 1;
    tree.root_h = h;
    tree.root_w = w;

    std::size_t nleaves = 1;
    for (int l = 0; l < levels; ++l) nleaves *= 4;
    char buf[64];
    for (std::size_t i = 0; i < nleaves; ++i) {
        std::size_t idx;
        double lo, hi;
        sidecar >> key >> idx >> lo >> hi;
        if (key != "leaf" || idx != i) throw std::runtime_error("sidecar: malformed leaf line");
        std::snprintf(buf, sizeof buf, "leaf_%03zu.pgm", i);
        const ImageU8 img = read_pnm((fs::path(a.dir) / buf).string());
        if (img.h != h >> levels || img.w != w >> levels || img.channels != 1)
            throw std::runtime_error(std::string("unexpected leaf shape in ") + buf);
        Tensor4<float> leaf(1, 1, img.h, img.w);
        const double scale = (hi - lo) / 255.0;
        for (std::size_t k = 0; k < leaf.data.size(); ++k)
            leaf.data[k] = static_cast<float>(lo + img.samples[k] * scale);
        tree.leaves.push_back(std::move(leaf));
    }
    const Tensor4<float> back = clamp_0_255(wpt_reconstruct(tree, bank));
    write_pnm(image_from_tensor(back), a.out);
    std::cout << "wrote " << a.out << " (" << back.h << "x" << back.w << ")\n";
    return 0;
}

// --- rfmask ----------------------------------------------------------------

struct RfmaskArgs {
    std::string config, variant, out;
    int size = 64;
    int at_r = -1, at_c = -1;
};

int run_rfmask(const RfmaskArgs& a) {
    FullConfig fc;
    if (!a.config.empty()) fc = parse_config_file(a.config);
    if (!a.variant.empty()) fc.model.downsampler = downsampler_from_name(a.variant);

    Rng rng(0);
    ModelGraph<float> g = build<float>(fc.model, rng);
    const int r = a.at_r >= 0 ? a.at_r : a.size / 2;
    const int c = a.at_c >= 0 ? a.at_c : a.size / 2;
    const Tensor4<float> mask = receptive_field_mask(g, a.size, a.size, r, c);

    int support = 0;
    for (float v : mask.data) support += v != 0 ? 1 : 0;
    const int holes = selfcheck::mask_interior_holes(mask);

    if (!a.out.empty()) {
        ImageU8 img;
        img.h = mask.h;
        img.w = mask.w;
        img.channels = 1;
        img.samples.resize(mask.numel());
        for (std::size_t k = 0; k < mask.data.size(); ++k)
            img.samples[k] = mask.data[k] != 0 ? 255 : 0;
        write_pnm(img, a.out);
    }
    char line[160];
    std::snprintf(line, sizeof line,
                  "body %s: output (%d,%d) sees %d of %d input cells, interior holes %d\n",
                  downsampler_name(fc.model.downsampler), r, c, support, a.size * a.size, holes);
    std::cout << line;
    return 0;
}

// --- ablate ----------------------------------------------------------------

struct AblateArgs {
    std::string config, data, val, out_dir;
    std::int64_t seed_override = -1;
};

int run_ablate(const AblateArgs& a) {
    FullConfig fc = parse_config_file(a.config);
    if (a.seed_override >= 0) fc.train.seed = static_cast<std::uint64_t>(a.seed_override);
    const std::vector<Tensor4<float>> corpus = load_corpus(a.data);
    const std::vector<Tensor4<float>> val = load_corpus(a.val);
    fs::create_directories(a.out_dir);

    const Downsampler bodies[3] = {Downsampler::dwt, Downsampler::sum_pool,
                                   Downsampler::dilated_chain};
    const int div = 1 << fc.model.levels;
    const double baseline = noisy_baseline_psnr(val, fc.train.sigma, fc.train.seed, div);

    char line[256];
    std::string table;
    std::snprintf(line, sizeof line, "# identical budget: %d epochs x %d steps, batch %d, patch %d, sigma %.6g\n# body\tval_psnr\tnoisy_psnr\tgain\n",
                  fc.train.epochs, fc.train.steps_per_epoch, fc.train.batch, fc.train.patch,
                  fc.train.sigma);
    table += line;

    for (const Downsampler body : bodies) {
        MwcnnConfig mc = fc.model;
        mc.downsampler = body;
        Rng init_rng(fc.train.seed ^ kInitSalt);
        ModelGraph<float> g = build<float>(mc, init_rng);

        const std::string name = downsampler_name(body);
        std::ofstream log((fs::path(a.out_dir) / (name + ".log")).string());
        if (!log) throw std::runtime_error("cannot open log in " + a.out_dir);
        const TrainResult<float> res = train_epochs(g, corpus, fc.train, &val, &log);
        checkpoint_save((fs::path(a.out_dir) / (name + ".ckpt")).string(), g, res.adam,
                        res.epochs_done, res.rng);

        std::snprintf(line, sizeof line, "%s\t%.4f\t%.4f\t%+.4f\n", name.c_str(),
                      res.final_val_psnr, baseline, res.final_val_psnr - baseline);
        table += line;
        std::cerr << "finished " << name << "\n";
    }

    std::ofstream table_file((fs::path(a.out_dir) / "ablation.txt").string());
    if (!table_file) throw std::runtime_error("cannot write ablation table");
    table_file << table;
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-level wavelet CNN for image restoration"};
    app.require_subcommand(1);
    std::function<int()> selected;

    TrainArgs ta;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a model on a directory of images");
    train_cmd->add_option("--config", ta.config, "key=value config file")->required();
    train_cmd->add_option("--data", ta.data, "directory of training images")->required();
    train_cmd->add_option("--out", ta.out, "checkpoint to write")->required();
    train_cmd->add_option("--val", ta.val, "directory of held-out images");
    train_cmd->add_option("--log", ta.log, "write per-step log here instead of stdout");
    train_cmd->add_option("--resume", ta.resume, "continue from this checkpoint");
    train_cmd->add_option("--seed", ta.seed_override, "override the config seed");
    train_cmd->callback([&] { selected = [&ta] { return run_train(ta); }; });

    DenoiseArgs da;
    CLI::App* den = app.add_subcommand("denoise", "Restore one image with a trained model");
    den->add_option("--ckpt", da.ckpt, "trained checkpoint")->required();
    den->add_option("--in", da.in, "input image (PNM)")->required();
    den->add_option("--out", da.out, "restored image to write")->required();
    den->add_option("--add-noise", da.add_noise, "add Gaussian noise of this sigma first");
    den->add_option("--seed", da.seed, "noise seed");
    den->add_option("--dump-noisy", da.dump_noisy, "also write the noisy input here");
    den->callback([&] { selected = [&da] { return run_denoise(da); }; });

    EvalArgs ea;
    CLI::App* ev = app.add_subcommand("eval", "Noise + restore a directory, report psnr/ssim");
    ev->add_option("--ckpt", ea.ckpt, "trained checkpoint")->required();
    ev->add_option("--data", ea.data, "directory of clean images")->required();
    ev->add_option("--sigma", ea.sigma, "noise sigma (default 25)");
    ev->add_option("--seed", ea.seed, "noise seed");
    ev->add_option("--out", ea.out, "write the report here instead of stdout");
    ev->callback([&] { selected = [&ea] { return run_eval(ea); }; });

    WaveletArgs wd, wr;
    CLI::App* wav = app.add_subcommand("wavelet", "Subband transform utilities");
    wav->require_subcommand(1);
    CLI::App* dec = wav->add_subcommand("decompose", "Write rescaled subband images + sidecar");
    dec->add_option("--in", wd.in, "input image")->required();
    dec->add_option("--out-dir", wd.dir, "output directory")->required();
    dec->add_option("--bank", wd.bank, "haar or db2");
    dec->add_option("--levels", wd.levels, "decomposition depth (default 2)");
    dec->callback([&] { selected = [&wd] { return run_wavelet_decompose(wd); }; });
    CLI::App* rec = wav->add_subcommand("reconstruct", "Invert a decompose directory");
    rec->add_option("--in-dir", wr.dir, "directory from decompose")->required();
    rec->add_option("--out", wr.out, "reconstructed image")->required();
    rec->callback([&] { selected = [&wr] { return run_wavelet_reconstruct(wr); }; });

    RfmaskArgs ra;
    CLI::App* rf = app.add_subcommand("rfmask", "Exact receptive-field mask of one output pixel");
    rf->add_option("--config", ra.config, "key=value config file (default architecture otherwise)");
    rf->add_option("--variant", ra.variant, "override body: dwt, sum_pool, dilated_chain");
    rf->add_option("--size", ra.size, "square input size (default 64)");
    rf->add_option("--row", ra.at_r, "output row (default center)");
    rf->add_option("--col", ra.at_c, "output column (default center)");
    rf->add_option("--out", ra.out, "write the mask as a PGM");
    rf->callback([&] { selected = [&ra] { return run_rfmask(ra); }; });

    CLI::App* sc = app.add_subcommand("selfcheck", "Run the built-in verification battery");
    sc->callback([&] {
        selected = [] { return selfcheck::run_selfcheck(std::cout) ? 0 : 1; };
    });

    AblateArgs aa;
    CLI::App* ab = app.add_subcommand("ablate", "Train all three bodies under one budget");
    ab->add_option("--config", aa.config, "key=value config file")->required();
    ab->add_option("--data", aa.data, "directory of training images")->required();
    ab->add_option("--val", aa.val, "directory of held-out images")->required();
    ab->add_option("--out-dir", aa.out_dir, "where checkpoints, logs, and the table go")->required();
    ab->add_option("--seed", aa.seed_override, "override the config seed");
    ab->callback([&] { selected = [&aa] { return run_ablate(aa); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        return selected ? selected() : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
