#include <gtest/gtest.h>

#include <cstdio>
#include <string>

#include "corpus_util.hpp"
#include "mwcnn/image_io.hpp"

namespace {

std::string g_bin;      // path to the command-line binary under test
std::string g_work;     // scratch directory shared by the suite
std::string g_ckpt;     // small checkpoint trained once in suite setup

std::string wp(const std::string& name) { return g_work + "/" + name; }

testutil::RunResult run_cli(const std::string& args) {
    static int counter = 0;
    return testutil::run(g_bin + " " + args, wp("capture" + std::to_string(counter++) + ".txt"));
}

class CliEnv : public ::testing::Environment {
  public:
    void SetUp() override {
        g_work = ::testing::TempDir() + "/cli_work";
        testutil::make_dir(g_work);
        testutil::write_corpus(wp("train"), 8, 48, 48, 900);
        testutil::write_corpus(wp("val"), 3, 48, 48, 901);

        testutil::write_text(wp("small.cfg"),
                             "# minimal model, enough to smoke the tool surface\n"
                             "levels = 1\n"
                             "widths = 6\n"
                             "block_depth = 1\n"
                             "patch = 16\n"
                             "batch = 8\n"
                             "sigma = 25\n"
                             "epochs = 2\n"
                             "steps_per_epoch = 40\n"
                             "lr_start = 0.01\n"
                             "lr_end = 0.005\n"
                             "seed = 11\n");
        g_ckpt = wp("small.ckpt");
        auto r = run_cli("train --config " + wp("small.cfg") + " --data " + wp("train") +
                         " --val " + wp("val") + " --out " + g_ckpt + " --log " + wp("small.log"));
        ASSERT_EQ(r.exit_code, 0) << r.out;
    }
};

const auto* const g_env = ::testing::AddGlobalTestEnvironment(new CliEnv);

}  // namespace

TEST(Cli, SelfcheckPasses) {
    auto r = run_cli("selfcheck");
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_NE(r.out.find("17/17 checks passed"), std::string::npos) << r.out;
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
}

TEST(Cli, WaveletRoundtripStaysWithinOneGrayLevel) {
    const auto img_path = wp("smooth.pgm");
    mwcnn::write_pnm(testutil::synth_image(64, 64, 77), img_path);

    auto dec = run_cli("wavelet decompose --in " + img_path + " --out-dir " + wp("subbands") +
                       " --bank haar --levels 2");
    ASSERT_EQ(dec.exit_code, 0) << dec.out;
    EXPECT_NE(dec.out.find("16 subband images"), std::string::npos);

    auto rec = run_cli("wavelet reconstruct --in-dir " + wp("subbands") + " --out " +
                       wp("recon.pgm"));
    ASSERT_EQ(rec.exit_code, 0) << rec.out;

    auto a = mwcnn::read_pnm(img_path);
    auto b = mwcnn::read_pnm(wp("recon.pgm"));
    ASSERT_EQ(a.samples.size(), b.samples.size());
    int worst = 0;
    for (std::size_t k = 0; k < a.samples.size(); ++k)
        worst = std::max(worst, std::abs(int(a.samples[k]) - int(b.samples[k])));
    EXPECT_LE(worst, 1);
}

TEST(Cli, WaveletDecomposeWritesSidecarAndLeaves) {
    const auto img_path = wp("sb_in.pgm");
    mwcnn::write_pnm(testutil::synth_image(32, 32, 78), img_path);
    auto dec = run_cli("wavelet decompose --in " + img_path + " --out-dir " + wp("sb") +
                       " --bank db2 --levels 1");
    ASSERT_EQ(dec.exit_code, 0) << dec.out;

    std::ifstream sidecar(wp("sb") + "/leaves.txt");
    ASSERT_TRUE(sidecar.good());
    std::string word;
    sidecar >> word;
    EXPECT_EQ(word, "bank");
    sidecar >> word;
    EXPECT_EQ(word, "db2");

    auto leaf = mwcnn::read_pnm(wp("sb") + "/leaf_000.pgm");
    EXPECT_EQ(leaf.h, 16);
    EXPECT_EQ(leaf.w, 16);

    auto bad = run_cli("wavelet reconstruct --in-dir " + wp("no_such_dir") + " --out " +
                       wp("x.pgm"));
    EXPECT_EQ(bad.exit_code, 1);
    EXPECT_NE(bad.out.find("error:"), std::string::npos);
}

TEST(Cli, TrainedCheckpointImprovesOverNoisyInput) {
    auto r = run_cli("denoise --ckpt " + g_ckpt + " --in " + wp("val") + "/img000.pgm --out " +
                     wp("restored.pgm") + " --add-noise 25 --seed 4 --dump-noisy " +
                     wp("noisy.pgm"));
    ASSERT_EQ(r.exit_code, 0) << r.out;

    double noisy_db = 0, restored_db = 0;
    ASSERT_EQ(std::sscanf(r.out.c_str(), "noisy %lf dB -> restored %lf dB", &noisy_db,
                          &restored_db),
              2)
        << r.out;
    EXPECT_GT(restored_db, noisy_db);

    auto restored = mwcnn::read_pnm(wp("restored.pgm"));
    EXPECT_EQ(restored.h, 48);
    auto noisy = mwcnn::read_pnm(wp("noisy.pgm"));
    EXPECT_EQ(noisy.w, 48);
}

TEST(Cli, EvalReportFormatAndThreadInvariance) {
    auto r1 = run_cli("eval --ckpt " + g_ckpt + " --data " + wp("val") + " --sigma 25 --seed 9" +
                      " --out " + wp("report1.txt"));
    ASSERT_EQ(r1.exit_code, 0) << r1.out;
    auto r2 = testutil::run("MWCNN_THREADS=3 " + g_bin + " eval --ckpt " + g_ckpt + " --data " +
                                wp("val") + " --sigma 25 --seed 9 --out " + wp("report2.txt"),
                            wp("capture_eval.txt"));
    ASSERT_EQ(r2.exit_code, 0) << r2.out;

    std::ifstream f1(wp("report1.txt")), f2(wp("report2.txt"));
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    EXPECT_EQ(s1, s2);  // worker count must not change any number

    // One header, one column line, one row per image, one mean footer.
    EXPECT_NE(s1.find("# file\tpsnr\tssim"), std::string::npos) << s1;
    EXPECT_NE(s1.find("img000.pgm\t"), std::string::npos);
    EXPECT_NE(s1.find("# mean\t"), std::string::npos);
    int rows = 0;
    for (std::size_t pos = 0; (pos = s1.find(".pgm\t", pos)) != std::string::npos; ++pos) ++rows;
    EXPECT_EQ(rows, 3);
}

TEST(Cli, TrainResumeContinuesFromCheckpoint) {
    testutil::write_text(wp("resume.cfg"),
                         "levels = 1\nwidths = 4\nblock_depth = 1\npatch = 16\nbatch = 4\n"
                         "sigma = 25\nepochs = 2\nsteps_per_epoch = 5\nlr_start = 0.001\n"
                         "lr_end = 0.001\nseed = 21\n");
    auto head = run_cli("train --config " + wp("resume.cfg") + " --data " + wp("train") +
                        " --out " + wp("head.ckpt"));
    ASSERT_EQ(head.exit_code, 0) << head.out;

    testutil::write_text(wp("resume4.cfg"),
                         "levels = 1\nwidths = 4\nblock_depth = 1\npatch = 16\nbatch = 4\n"
                         "sigma = 25\nepochs = 4\nsteps_per_epoch = 5\nlr_start = 0.001\n"
                         "lr_end = 0.001\nseed = 21\n");
    auto tail = run_cli("train --config " + wp("resume4.cfg") + " --data " + wp("train") +
                        " --resume " + wp("head.ckpt") + " --out " + wp("tail.ckpt"));
    ASSERT_EQ(tail.exit_code, 0) << tail.out;
    EXPECT_NE(tail.out.find("trained 4 epochs"), std::string::npos) << tail.out;

    // Resuming under a different architecture is refused with a field report.
    testutil::write_text(wp("other.cfg"),
                         "levels = 2\nwidths = 4,8\nblock_depth = 1\npatch = 16\nbatch = 4\n"
                         "sigma = 25\nepochs = 4\nsteps_per_epoch = 5\nlr_start = 0.001\n"
                         "lr_end = 0.001\nseed = 21\n");
    auto clash = run_cli("train --config " + wp("other.cfg") + " --data " + wp("train") +
                         " --resume " + wp("head.ckpt") + " --out " + wp("clash.ckpt"));
    EXPECT_EQ(clash.exit_code, 1);
    EXPECT_NE(clash.out.find("levels"), std::string::npos) << clash.out;
}

TEST(Cli, RfmaskReportsHolesForDilatedChainOnly) {
    auto chain = run_cli("rfmask --variant dilated_chain --size 16 --out " + wp("mask.pgm"));
    ASSERT_EQ(chain.exit_code, 0) << chain.out;
    int seen = 0, total = 0, holes = -1;
    ASSERT_EQ(std::sscanf(chain.out.c_str(),
                          "body dilated_chain: output (%*d,%*d) sees %d of %d input cells, "
                          "interior holes %d",
                          &seen, &total, &holes),
              3)
        << chain.out;
    EXPECT_GT(holes, 0);
    EXPECT_LT(seen, total);

    auto mask = mwcnn::read_pnm(wp("mask.pgm"));
    EXPECT_EQ(mask.h, 16);
    int on = 0;
    for (auto v : mask.samples) {
        ASSERT_TRUE(v == 0 || v == 255);
        if (v == 255) ++on;
    }
    EXPECT_EQ(on, seen);

    auto ushape = run_cli("rfmask --variant dwt --size 32");
    ASSERT_EQ(ushape.exit_code, 0) << ushape.out;
    EXPECT_NE(ushape.out.find("interior holes 0"), std::string::npos) << ushape.out;
}

TEST(Cli, BadInvocationsFailCleanly) {
    EXPECT_EQ(run_cli("no_such_command").exit_code, 2);
    EXPECT_EQ(run_cli("train --config /nope.cfg").exit_code, 2);  // missing required flags
    EXPECT_EQ(run_cli("denoise --ckpt a --in b --out c --bogus-flag 1").exit_code, 2);

    auto r = run_cli("train --config " + wp("no_such.cfg") + " --data " + wp("train") +
                     " --out " + wp("x.ckpt"));
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.out.find("error:"), std::string::npos);

    testutil::write_text(wp("bad.cfg"), "levels = 1\nwidths = 4\nwat = 9\n");
    auto bad_key = run_cli("train --config " + wp("bad.cfg") + " --data " + wp("train") +
                           " --out " + wp("x.ckpt"));
    EXPECT_EQ(bad_key.exit_code, 1);
    EXPECT_NE(bad_key.out.find("wat"), std::string::npos) << bad_key.out;

    auto empty = run_cli("train --config " + wp("small.cfg") + " --data " + wp("empty_dir") +
                         " --out " + wp("x.ckpt"));
    EXPECT_EQ(empty.exit_code, 1);

    auto bad_ckpt = run_cli("denoise --ckpt " + wp("small.cfg") + " --in " + wp("val") +
                            "/img000.pgm --out " + wp("y.pgm"));
    EXPECT_EQ(bad_ckpt.exit_code, 1);
}

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    if (argc < 2) {
        std::fprintf(stderr, "usage: cli_test <path-to-binary>\n");
        return 2;
    }
    g_bin = argv[1];
    return RUN_ALL_TESTS();
}
