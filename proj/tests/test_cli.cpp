#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;
using mambasod::cli::run_cli;

namespace {

struct CliRun {
  int rc;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int rc = run_cli(args, out, err);
  return {rc, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(testing::TempDir()) / ("mambasod_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Exactly one line: error: code=<token> msg="..."
void expect_error_line(const CliRun& r, const std::string& code) {
  EXPECT_NE(r.rc, 0);
  static const std::regex line(R"(error: code=([a-z_]+) msg="([^"\\]|\\.)*"\n)");
  std::smatch m;
  ASSERT_TRUE(std::regex_match(r.err, m, line)) << r.err;
  EXPECT_EQ(m[1].str(), code);
}

std::size_t total_from(const std::string& out) {
  std::istringstream in(out);
  for (std::string line; std::getline(in, line);) {
    std::istringstream ls(line);
    std::string key;
    std::size_t n = 0;
    if (ls >> key >> n && key == "total") return n;
  }
  return 0;
}

}  // namespace

TEST(CliParams, DeskAndFullTotals) {
  const CliRun desk = cli({"params"});
  ASSERT_EQ(desk.rc, 0) << desk.err;
  EXPECT_EQ(total_from(desk.out), 1315189u);
  EXPECT_NE(desk.out.find("rgb_backbone"), std::string::npos);
  EXPECT_NE(desk.out.find("decoder"), std::string::npos);
  const CliRun full = cli({"params", "--preset", "full"});
  EXPECT_EQ(total_from(full.out), 87928805u);
}

TEST(CliConfig, FileValuesAndFlagOverride) {
  const fs::path dir = scratch("config");
  const fs::path cfg = dir / "run.cfg";
  std::ofstream(cfg) << "# comment\npreset = full\nseed = 4\n";
  EXPECT_EQ(total_from(cli({"params", "--config", cfg.string()}).out), 87928805u);
  EXPECT_EQ(total_from(cli({"params", "--config", cfg.string(), "--preset", "desk"}).out), 1315189u);
}

TEST(CliConfig, UnknownKeyIsConfigError) {
  const fs::path cfg = scratch("badcfg") / "bad.cfg";
  std::ofstream(cfg) << "presett = full\n";
  expect_error_line(cli({"params", "--config", cfg.string()}), "config");
}

TEST(CliErrors, UsageAndValueErrors) {
  expect_error_line(cli({}), "usage");
  expect_error_line(cli({"params", "--preset", "huge"}), "usage");
  expect_error_line(cli({"infer", "--gate-activation", "relu"}), "usage");
  expect_error_line(cli({"infer", "--rgb", "a.ppm"}), "usage");
  expect_error_line(cli({"infer", "--synth", "64by64"}), "usage");
  expect_error_line(cli({"check", "--inject-fault", "no.such_property"}), "unknown_property");
}

TEST(CliErrors, MissingImageAndBadSynthExtent) {
  const fs::path dir = scratch("errs");
  expect_error_line(cli({"infer", "--rgb", (dir / "nope.ppm").string(), "--depth", (dir / "nope.pgm").string(), "--out",
                         dir.string()}),
                    "image_open_failed");
  expect_error_line(cli({"infer", "--synth", "30x30", "--out", dir.string()}), "shape_mismatch");
}

TEST(CliCheck, AllPassAndInjectedFault) {
  const CliRun ok = cli({"check"});
  EXPECT_EQ(ok.rc, 0) << ok.err;
  EXPECT_TRUE(ok.err.empty());
  EXPECT_NE(ok.out.find("32/32 properties passed"), std::string::npos);

  const CliRun bad = cli({"check", "--inject-fault", "cmm.modality_swap_symmetry"});
  expect_error_line(bad, "property_failed");
  EXPECT_NE(bad.err.find("cmm.modality_swap_symmetry"), std::string::npos);
  EXPECT_NE(bad.out.find("FAIL  cmm.modality_swap_symmetry"), std::string::npos);
  EXPECT_NE(bad.out.find("31/32"), std::string::npos);
}

TEST(CliInfer, WritesNetpbmOutputsDeterministically) {
  const fs::path a = scratch("infer_a"), b = scratch("infer_b");
  const CliRun ra = cli({"infer", "--seed", "2", "--out", a.string()});
  const CliRun rb = cli({"infer", "--seed", "2", "--out", b.string()});
  ASSERT_EQ(ra.rc, 0) << ra.err;
  ASSERT_EQ(rb.rc, 0) << rb.err;
  EXPECT_NE(ra.out.find("stage1 rgb [16,16,16]"), std::string::npos);
  for (const char* f : {"pred_level1.pgm", "pred_level2.pgm", "pred_level3.pgm", "pred_level4.pgm",
                        "pred_level5.pgm", "saliency.pgm", "input_depth.pgm", "input_gt.pgm"}) {
    const std::string bytes = slurp(a / f);
    EXPECT_EQ(bytes.rfind("P5\n64 64\n255\n", 0), 0u) << f;
    EXPECT_EQ(bytes, slurp(b / f)) << f;
  }
  EXPECT_EQ(slurp(a / "input_rgb.ppm").rfind("P6\n64 64\n255\n", 0), 0u);
}

TEST(CliInfer, FileInputsMatchSyntheticRun) {
  const fs::path a = scratch("infer_files_a"), b = scratch("infer_files_b");
  ASSERT_EQ(cli({"infer", "--seed", "5", "--out", a.string()}).rc, 0);
  const CliRun r = cli({"infer", "--seed", "5", "--rgb", (a / "input_rgb.ppm").string(), "--depth",
                     (a / "input_depth.pgm").string(), "--out", b.string()});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_FALSE(fs::exists(b / "input_rgb.ppm"));
  // Inputs were quantized to 8 bits on disk, so the maps agree only approximately; shapes must match.
  EXPECT_EQ(slurp(b / "saliency.pgm").size(), slurp(a / "saliency.pgm").size());
}

TEST(CliConfig, GateActivationFromFileAndFlag) {
  using mambasod::GateActivation;
  using mambasod::cli::parse_args;
  auto parse = [](std::vector<std::string> args) {
    std::vector<const char*> argv{"mambasod"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return parse_args(static_cast<int>(argv.size()), argv.data());
  };
  const fs::path cfg = scratch("gate") / "gate.cfg";
  std::ofstream(cfg) << "gate-activation = none\nsynth = 32x64\nout = somewhere\n";
  const auto from_file = parse({"infer", "--config", cfg.string()});
  EXPECT_EQ(from_file.command, "infer");
  EXPECT_EQ(from_file.gate, GateActivation::none);
  EXPECT_EQ(from_file.network().gate, GateActivation::none);
  ASSERT_TRUE(from_file.synth.has_value());
  EXPECT_EQ(*from_file.synth, (std::pair<std::size_t, std::size_t>{32, 64}));
  EXPECT_EQ(from_file.out, "somewhere");
  EXPECT_EQ(parse({"infer", "--config", cfg.string(), "--gate-activation", "silu"}).gate, GateActivation::silu);
  EXPECT_EQ(parse({"eval"}).gate, GateActivation::silu);
  std::ofstream(cfg, std::ios::trunc) << "gate_activation = none\n";
  EXPECT_EQ(parse({"infer", "--config", cfg.string()}).gate, GateActivation::none);
}

TEST(CliInfer, WeightsRoundTripThroughFiles) {
  const fs::path dir = scratch("weights");
  const std::string stem = (dir / "w").string();
  ASSERT_EQ(cli({"infer", "--seed", "9", "--save-weights", stem, "--out", (dir / "a").string()}).rc, 0);
  ASSERT_TRUE(fs::exists(stem + ".bin"));
  const std::vector<std::string> inputs{"--rgb", (dir / "a" / "input_rgb.ppm").string(), "--depth",
                                        (dir / "a" / "input_depth.pgm").string()};
  auto run = [&](std::vector<std::string> extra, const std::string& sub) {
    extra.insert(extra.end(), inputs.begin(), inputs.end());
    extra.insert(extra.begin(), "infer");
    extra.push_back("--out");
    extra.push_back((dir / sub).string());
    return cli(extra);
  };
  ASSERT_EQ(run({"--seed", "9"}, "b").rc, 0);
  ASSERT_EQ(run({"--seed", "1", "--load-weights", stem}, "c").rc, 0);
  ASSERT_EQ(run({"--seed", "1"}, "d").rc, 0);
  EXPECT_EQ(slurp(dir / "b" / "saliency.pgm"), slurp(dir / "c" / "saliency.pgm"));
  EXPECT_NE(slurp(dir / "b" / "saliency.pgm"), slurp(dir / "d" / "saliency.pgm"));
  std::ofstream(stem + ".bin", std::ios::binary | std::ios::trunc) << "junk";
  expect_error_line(cli({"infer", "--load-weights", stem, "--out", (dir / "e").string()}), "weights_format");
}

TEST(CliEval, SyntheticRunWritesCsv) {
  const fs::path dir = scratch("eval");
  const CliRun r = cli({"eval", "--out", dir.string()});
  ASSERT_EQ(r.rc, 0) << r.err;
  const std::string metrics = slurp(dir / "metrics.csv");
  EXPECT_EQ(metrics.rfind("name,mae,f_max,e_max,s_measure\n", 0), 0u);
  EXPECT_EQ(metrics.find('\r'), std::string::npos);
  EXPECT_NE(metrics.find("\naggregate,"), std::string::npos);
  const std::string pr = slurp(dir / "pr_curve.csv");
  EXPECT_EQ(pr.rfind("threshold,precision,recall\n", 0), 0u);
  EXPECT_EQ(std::count(pr.begin(), pr.end(), '\n'), 257);
}

TEST(CliEval, PredictionAgainstItsOwnMaskIsPerfect) {
  const fs::path dir = scratch("eval_pred");
  ASSERT_EQ(cli({"infer", "--out", dir.string()}).rc, 0);
  const std::string gt = (dir / "input_gt.pgm").string();
  const CliRun r = cli({"eval", "--pred", gt, "--gt", gt, "--out", dir.string(), "--thresholds", "16"});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("mae 0 f_max 1 e_max 1"), std::string::npos) << r.out;
  const std::string pr = slurp(dir / "pr_curve.csv");
  EXPECT_EQ(std::count(pr.begin(), pr.end(), '\n'), 17);
}

TEST(CliEval, ShapeMismatchIsReported) {
  const fs::path a = scratch("eval_mm_a"), b = scratch("eval_mm_b");
  ASSERT_EQ(cli({"infer", "--out", a.string()}).rc, 0);
  ASSERT_EQ(cli({"infer", "--synth", "64x96", "--out", b.string()}).rc, 0);
  expect_error_line(cli({"eval", "--pred", (a / "saliency.pgm").string(), "--gt", (b / "input_gt.pgm").string(),
                         "--out", a.string()}),
                    "shape_mismatch");
  expect_error_line(cli({"eval", "--pred", (a / "saliency.pgm").string(), "--out", a.string()}), "usage");
}
