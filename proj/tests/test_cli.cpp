#include "deeperaser/deeperaser.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace deeperaser;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("deeperaser_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args, const std::string& env = "") const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = env + " \"" + std::string(DEEPERASER_CLI) + "\" " + args + " >\"" + out.string() +
                            "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
  }

  std::string p(const std::string& name) const { return "\"" + (dir_ / name).string() + "\""; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  // Untrained K=8 checkpoint with a tiny architecture; enough for plumbing tests.
  std::string tiny_checkpoint(const std::string& name = "tiny.ckpt") const {
    ModelConfig cfg;
    cfg.latent_channels = 6;
    cfg.backbone_width = 6;
    cfg.num_residual_blocks = 1;
    cfg.head_hidden = 6;
    cfg.extractor_mid = 4;
    cfg.extractor_out = 4;
    cfg.iterations = 8;
    save_checkpoint((dir_ / name).string(), init_model<float>(cfg, 3));
    return p(name);
  }

  // 24x20 RGB image with an all-zero or partly set mask.
  void write_inputs(bool any_mask) const {
    std::mt19937_64 rng(5);
    Image8 im(20, 24, 3);
    for (auto& v : im.data) v = static_cast<std::uint8_t>(rng());
    write_png(dir_ / "in.png", im);
    Mask m(20, 24);
    if (any_mask)
      for (int y = 5; y < 12; ++y)
        for (int x = 3; x < 15; ++x) m.at(y, x) = 1;
    write_mask_png(dir_ / "mask.png", m);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpListsEverySubcommandAndFlag) {
  const CliRun top = run("--help");
  EXPECT_EQ(top.code, 0);
  for (const char* sub : {"synth", "train", "eval", "infer", "ablate", "dump-iters", "dump-latents", "serve"}) {
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
  }
  const CliRun infer = run("infer --help");
  EXPECT_EQ(infer.code, 0);
  for (const char* flag : {"--image", "--mask", "--strokes", "--checkpoint", "--out", "--iters", "--dump-every",
                           "--dump-dir", "--raw", "--seed"}) {
    EXPECT_NE(infer.out.find(flag), std::string::npos) << flag;
  }
  const CliRun train = run("train --help");
  for (const char* flag : {"--data", "--synth", "--config", "--set", "--out", "--log", "--init", "--seed"}) {
    EXPECT_NE(train.out.find(flag), std::string::npos) << flag;
  }
}

TEST_F(CliTest, UsageErrorsExitWithOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("synth --out " + p("d") + " --bogus-flag 3").code, 1);
  EXPECT_EQ(run("eval --data " + p("d") + " --protocol fancy --pred-dir x").code, 1);
  EXPECT_EQ(run("train --synth 2 --out " + p("m.ckpt") + " --set no_such_key=1").code, 1);
  write_inputs(false);
  EXPECT_EQ(run("infer --image " + p("in.png") + " --checkpoint " + tiny_checkpoint() + " --out " + p("o.png")).code,
            1);
}

TEST_F(CliTest, SynthIsDeterministicGivenSeed) {
  ASSERT_EQ(run("synth --out " + p("a") + " --count 3 --seed 9").code, 0);
  ASSERT_EQ(run("synth --out " + p("b") + " --count 3 --seed 9").code, 0);
  ASSERT_EQ(run("synth --out " + p("c") + " --count 3 --seed 10").code, 0);
  EXPECT_EQ(list_dataset_ids(path("a")).size(), 3u);
  for (const std::string f : {"images/synth_0002.png", "gts/synth_0002.png", "anns/synth_0002.json"}) {
    EXPECT_EQ(read_file(path("a") / f), read_file(path("b") / f)) << f;
  }
  EXPECT_NE(read_file(path("a") / "images/synth_0000.png"), read_file(path("c") / "images/synth_0000.png"));
}

TEST_F(CliTest, TrainIsDeterministicAndWritesLog) {
  const std::string common = "train --synth 3 --seed 4 --set K=2 --set crop=64 --set latent_channels=6 "
                             "--set backbone_width=6 --set num_residual_blocks=1 --set head_hidden=6 --set epochs=2";
  ASSERT_EQ(run(common + " --out " + p("a.ckpt") + " --log " + p("log.jsonl")).code, 0);
  ASSERT_EQ(run(common + " --out " + p("b.ckpt")).code, 0);
  EXPECT_EQ(read_file(path("a.ckpt")), read_file(path("b.ckpt")));
  std::istringstream log(read_file(path("log.jsonl")));
  std::string line;
  int n = 0;
  while (std::getline(log, line)) {
    EXPECT_EQ(nlohmann::json::parse(line).at("per_iteration").size(), 2u);
    ++n;
  }
  EXPECT_EQ(n, 4);  // 2 epochs of ceil(3 / 2) batches
}

TEST_F(CliTest, InferWithZeroMaskReturnsInput) {
  write_inputs(false);
  const CliRun r = run("infer --image " + p("in.png") + " --mask " + p("mask.png") + " --checkpoint " + tiny_checkpoint() +
                    " --out " + p("out.png"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_png(path("out.png")), read_png(path("in.png")));
}

TEST_F(CliTest, InferDumpEveryOneWritesEveryFrame) {
  write_inputs(true);
  const CliRun r = run("infer --image " + p("in.png") + " --mask " + p("mask.png") + " --checkpoint " + tiny_checkpoint() +
                    " --out " + p("out.png") + " --dump-every 1 --dump-dir " + p("frames"));
  ASSERT_EQ(r.code, 0) << r.err;
  int frames = 0;
  for (const auto& e : fs::directory_iterator(path("frames"))) frames += e.path().extension() == ".png";
  EXPECT_EQ(frames, 8);
  EXPECT_TRUE(fs::exists(path("frames") / "iter_01.png"));
  EXPECT_TRUE(fs::exists(path("frames") / "iter_08.png"));
  // the last frame is the raw final prediction; the output composites it into the unmasked pixels
  const Image8 raw = read_png(path("frames") / "iter_08.png");
  const Image8 in = read_png(path("in.png"));
  EXPECT_EQ(read_png(path("out.png")), composite_non_text(raw, in, read_mask_png(path("mask.png"))));
}

TEST_F(CliTest, InferFromStrokesMatchesMaskFile) {
  write_inputs(false);
  const StrokeSet strokes{{Stroke{{{4, 4}, {18, 9}}, 2.0}}, 24, 20};
  write_file(path("s.json"), strokes_to_json(strokes).dump());
  write_mask_png(path("stroke_mask.png"), rasterize_strokes(strokes));
  const std::string ckpt = tiny_checkpoint();
  ASSERT_EQ(run("infer --image " + p("in.png") + " --strokes " + p("s.json") + " --checkpoint " + ckpt + " --out " +
                p("a.png"))
                .code,
            0);
  ASSERT_EQ(run("infer --image " + p("in.png") + " --mask " + p("stroke_mask.png") + " --checkpoint " + ckpt +
                " --out " + p("b.png"))
                .code,
            0);
  EXPECT_EQ(read_file(path("a.png")), read_file(path("b.png")));
}

TEST_F(CliTest, BadMaskValuesNameTheFile) {
  write_inputs(false);
  write_png(path("gray_mask.png"), Image8(20, 24, 1, 100));
  const CliRun r = run("infer --image " + p("in.png") + " --mask " + p("gray_mask.png") + " --checkpoint " +
                    tiny_checkpoint() + " --out " + p("o.png"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("gray_mask.png"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("o.png")));
}

TEST_F(CliTest, MissingCheckpointIsRuntimeFailure) {
  write_inputs(false);
  const CliRun r = run("infer --image " + p("in.png") + " --mask " + p("mask.png") + " --checkpoint " + p("none.ckpt") +
                    " --out " + p("o.png"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("none.ckpt"), std::string::npos) << r.err;
}

TEST_F(CliTest, DumpItersNamesFramesInOrder) {
  write_inputs(true);
  const CliRun r = run("dump-iters --image " + p("in.png") + " --mask " + p("mask.png") + " --checkpoint " +
                    tiny_checkpoint() + " --out-dir " + p("it") + " --iters 12");
  ASSERT_EQ(r.code, 0) << r.err;
  for (int k = 1; k <= 12; ++k) EXPECT_TRUE(fs::exists(path("it") / frame_name("iter_", k, 12))) << k;
  EXPECT_EQ(frame_name("iter_", 3, 8), "iter_03.png");
  EXPECT_EQ(frame_name("iter_", 7, 120), "iter_007.png");
}

TEST_F(CliTest, DumpLatentsWritesOneHeatmapPerIteration) {
  write_inputs(true);
  const CliRun r = run("dump-latents --image " + p("in.png") + " --mask " + p("mask.png") + " --checkpoint " +
                    tiny_checkpoint() + " --out-dir " + p("lat"));
  ASSERT_EQ(r.code, 0) << r.err;
  for (int k = 1; k <= 8; ++k) {
    const Image8 h = read_png(path("lat") / frame_name("latent_", k, 8), 1);
    EXPECT_EQ(h.height, 20);
    EXPECT_EQ(h.width, 24);
  }
}

TEST_F(CliTest, ZeroWeightModelGivesMidGrayHeatmaps) {
  write_inputs(true);
  ModelConfig cfg;
  cfg.latent_channels = 4;
  cfg.backbone_width = 4;
  cfg.num_residual_blocks = 1;
  cfg.head_hidden = 4;
  cfg.extractor_mid = 3;
  cfg.extractor_out = 3;
  cfg.iterations = 3;
  save_checkpoint(path("zero.ckpt").string(), make_zero_weights<float>(cfg));
  ASSERT_EQ(run("dump-latents --image " + p("in.png") + " --mask " + p("mask.png") + " --checkpoint " +
                p("zero.ckpt") + " --out-dir " + p("lat"))
                .code,
            0);
  for (int k = 1; k <= 3; ++k) {
    const Image8 h = read_png(path("lat") / frame_name("latent_", k, 3), 1);
    for (auto v : h.data) ASSERT_EQ(v, 128);
  }
}

TEST_F(CliTest, EvalPrintsStructuredTextAndTableRow) {
  ASSERT_EQ(run("synth --out " + p("ds") + " --count 2 --seed 1").code, 0);
  fs::create_directories(path("pred"));
  for (const auto& id : list_dataset_ids(path("ds"))) {
    fs::copy_file(path("ds") / "gts" / (id + ".png"), path("pred") / (id + ".png"));
  }
  const CliRun r = run("eval --data " + p("ds") + " --pred-dir " + p("pred") + " --protocol composited");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("psnr: inf"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("PSNR,MSSIM,MSE,AGE,pEPs,pCEPS"), std::string::npos);
  EXPECT_EQ(run("eval --data " + p("ds") + " --pred-dir " + p("nowhere")).code, 2);
  EXPECT_EQ(run("eval --data " + p("ds")).code, 1);
}

TEST_F(CliTest, AblateValidatesVariantsAndAppendsRows) {
  const CliRun list = run("ablate --list");
  EXPECT_EQ(list.code, 0);
  EXPECT_NE(list.out.find("no_erasing_module"), std::string::npos);
  const CliRun bad = run("ablate --synth 2 --variant sideways");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("no_prev_image"), std::string::npos) << bad.err;
  const std::string common = "ablate --synth 2 --set K=2 --set crop=64 --set latent_channels=4 --set backbone_width=4 "
                             "--set num_residual_blocks=1 --set head_hidden=4 --set epochs=1 --out-table " +
                             p("table.csv");
  ASSERT_EQ(run(common + " --variant full --variant no_context").code, 0);
  ASSERT_EQ(run(common + " --variant no_prev_image").code, 0);
  std::istringstream table(read_file(path("table.csv")));
  std::vector<std::string> lines;
  for (std::string l; std::getline(table, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "Variant,PSNR,MSSIM,MSE,AGE,pEPs,pCEPS,Para.");
  EXPECT_EQ(lines[1].rfind("full,", 0), 0u);
  EXPECT_EQ(lines[3].rfind("no_prev_image,", 0), 0u);
}

TEST_F(CliTest, ServeFailsCleanlyOnBadCheckpoint) {
  const CliRun r = run("serve --port 0", "DEEPERASER_CHECKPOINT=" + p("missing.ckpt"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing.ckpt"), std::string::npos) << r.err;
}
