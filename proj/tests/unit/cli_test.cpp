#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "attrib/cli.hpp"
#include "attrib/dataset.hpp"
#include "attrib/viz.hpp"

namespace attrib::cli {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args, std::map<std::string, std::string> env = {}) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err, [env](const std::string& name) -> std::optional<std::string> {
    const auto it = env.find(name);
    if (it == env.end()) return std::nullopt;
    return it->second;
  });
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("attrib_cli_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    image_ = dir_ / "img.ppm";
    const auto ds = data::synth_dataset<float>({1, 3, 32, 0});
    viz::write_image(viz::to_rgb(ds.data.images[1]), image_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::vector<std::string> explain_args(const std::string& method, const std::string& out) const {
    return {"explain", "--image", image_.string(), "--method", method, "--input-size", "32",
            "--out", path(out)};
  }

  fs::path dir_;
  fs::path image_;
};

TEST_F(CliTest, UnknownFlagPrintsUsage) {
  const auto r = run({"explain", "--no-such-flag"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("--no-such-flag"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST_F(CliTest, MissingSubcommandIsUsageError) {
  const auto r = run({});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST_F(CliTest, HelpSucceeds) {
  const auto r = run({"bench", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--num-samples"), std::string::npos);
}

TEST_F(CliTest, IgWritesMaskAndOverlay) {
  auto args = explain_args("ig", "ig");
  args.insert(args.end(), {"--steps", "50", "--alpha", "0.4"});
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const std::string f : {"ig_mask.png", "ig_overlay.png", "ig_signed.png", "explanation.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "ig" / f)) << f;
  }
  EXPECT_NE(slurp(dir_ / "ig" / "explanation.json").find("\"steps\": 50"), std::string::npos);
}

TEST_F(CliTest, LimeWritesTwoImagesPerTopLabel) {
  auto args = explain_args("lime", "lime");
  args.insert(args.end(), {"--num-samples", "100", "--top-labels", "3"});
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t isolate = 0, signed_ = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "lime")) {
    const auto name = e.path().filename().string();
    isolate += name.ends_with("_isolate.png");
    signed_ += name.ends_with("_signed.png");
  }
  EXPECT_EQ(isolate, 3u);
  EXPECT_EQ(signed_, 3u);
}

TEST_F(CliTest, GradcamOnDenseOnlyModelFails) {
  const nn::ModelGraph<float> dense = nn::initialize<float>(
      {nn::dense("fc1", 3 * 32 * 32, 4), nn::relu("r"), nn::dense("fc2", 4, 3)},
      {"dense", {3, 32, 32}, 3, {}}, 0);
  nn::save_model(dense, dir_ / "dense.model");
  auto args = explain_args("gradcam", "g");
  args.insert(args.end(), {"--weights", path("dense.model")});
  const auto r = run(args);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no conv layer"), std::string::npos) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
}

TEST_F(CliTest, ExplainIsBitIdenticalAcrossRuns) {
  for (const std::string method : {"gradcam", "ig", "lime"}) {
    auto a = explain_args(method, method + "_a");
    auto b = explain_args(method, method + "_b");
    for (auto* v : {&a, &b}) v->insert(v->end(), {"--seed", "7", "--num-samples", "200"});
    ASSERT_EQ(run(a).code, 0);
    ASSERT_EQ(run(b).code, 0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir_ / (method + "_a"))) {
      const auto other = dir_ / (method + "_b") / e.path().filename();
      EXPECT_EQ(slurp(e.path()), slurp(other)) << method << " " << e.path().filename();
      ++files;
    }
    EXPECT_GE(files, 3u);
  }
}

std::string steps_written(const fs::path& json) {
  const auto text = slurp(json);
  const auto at = text.find("\"steps\": ");
  return at == std::string::npos ? "" : text.substr(at + 9, text.find_first_of(",\n", at) - at - 9);
}

TEST_F(CliTest, FlagBeatsEnvironmentBeatsConfig) {
  {
    std::ofstream cfg(dir_ / "run.ini");
    cfg << "steps = 7\nnum_samples = 10\n[explain]\nmethod = ig\n";
  }
  auto args = explain_args("ig", "p");
  args.erase(args.begin() + 3, args.begin() + 5);  // method comes from the config section
  args.insert(args.end(), {"--config", path("run.ini")});

  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(steps_written(dir_ / "p" / "explanation.json"), "7");
  ASSERT_EQ(run(args, {{"ATTRIB_STEPS", "9"}}).code, 0);
  EXPECT_EQ(steps_written(dir_ / "p" / "explanation.json"), "9");
  auto flagged = args;
  flagged.insert(flagged.end(), {"--steps", "11"});
  ASSERT_EQ(run(flagged, {{"ATTRIB_STEPS", "9"}}).code, 0);
  EXPECT_EQ(steps_written(dir_ / "p" / "explanation.json"), "11");
  ASSERT_EQ(run(explain_args("ig", "p")).code, 0);
  EXPECT_EQ(steps_written(dir_ / "p" / "explanation.json"), "50");
}

TEST_F(CliTest, ConfigFileFromEnvironment) {
  { std::ofstream(dir_ / "env.ini") << "steps = 3\n"; }
  ASSERT_EQ(run(explain_args("ig", "p"), {{"ATTRIB_CONFIG", path("env.ini")}}).code, 0);
  EXPECT_EQ(steps_written(dir_ / "p" / "explanation.json"), "3");
}

TEST_F(CliTest, BadConfigAndEnvironmentValuesAreDiagnosed) {
  { std::ofstream(dir_ / "bad.ini") << "stepz = 3\n"; }
  auto args = explain_args("ig", "p");
  args.insert(args.end(), {"--config", path("bad.ini")});
  auto r = run(args);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown key 'stepz'"), std::string::npos) << r.err;

  r = run(explain_args("ig", "p"), {{"ATTRIB_STEPS", "many"}});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("ATTRIB_STEPS"), std::string::npos) << r.err;
}

TEST_F(CliTest, PrecisionFromEnvironment) {
  EXPECT_EQ(run(explain_args("gradcam", "p"), {{"ATTRIB_PRECISION", "f64"}}).code, 0);
  const auto r = run(explain_args("gradcam", "p"), {{"ATTRIB_PRECISION", "f16"}});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("f32, f64"), std::string::npos) << r.err;
}

TEST_F(CliTest, ExplainErrors) {
  auto r = run(explain_args("shap", "p"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("gradcam, ig, lime"), std::string::npos) << r.err;
  r = run({"explain", "--out", path("p")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--image"), std::string::npos);
  r = run({"explain", "--image", path("missing.ppm"), "--out", path("p")});
  EXPECT_EQ(r.code, 1);
  auto args = explain_args("gradcam", "p");
  args.insert(args.end(), {"--layer", "fc"});
  EXPECT_EQ(run(args).code, 1);
  args = explain_args("lime", "p");
  args.insert(args.end(), {"--distance", "l2"});
  r = run(args);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("valid: cosine, pixel"), std::string::npos) << r.err;
  args = explain_args("ig", "p");
  args.insert(args.end(), {"--rule", "left"});
  r = run(args);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("valid: midpoint, right"), std::string::npos) << r.err;
}

TEST_F(CliTest, RuleAndDistanceFromConfig) {
  const auto cfg = path("a.ini");
  std::ofstream(cfg) << "[explain]\nrule = right\ndistance = pixel\nnum-samples = 50\n";
  auto r = run(explain_args("ig", "ig"), {{"ATTRIB_CONFIG", cfg}});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(dir_ / "ig" / "explanation.json").find("\"rule\": \"right\""), std::string::npos);
  r = run(explain_args("lime", "lime"), {{"ATTRIB_CONFIG", cfg}});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(dir_ / "lime" / "explanation.json").find("\"distance\": \"pixel\""), std::string::npos);
}

TEST_F(CliTest, SynthTrainExplainPipeline) {
  auto r = run({"synth", "--out", path("data"), "--n-per-class", "4", "--input-size", "32"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"train", "--data", path("data"), "--input-size", "32", "--epochs", "1", "--weights",
           path("m/vgg.model")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("test_accuracy"), std::string::npos);
  r = run({"explain", "--weights", path("m/vgg.model"), "--image", path("data/class_1/img_0001.ppm"),
           "--out", path("e")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "e" / "gradcam_overlay.png"));
}

TEST_F(CliTest, BenchWritesRecordsAndSummary) {
  const auto r = run({"bench", "--images", "2", "--input-size", "32", "--steps", "3", "--num-samples", "20",
                      "--warmup", "0", "--out", path("b")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = slurp(dir_ / "b" / "bench_summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')), "model,gradcam_mean_s,ig_mean_s,lime_mean_s");
  std::ifstream in(dir_ / "b" / "bench.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 1u + 2u * 3u * 2u);
}

TEST_F(CliTest, BenchUnknownModel) {
  const auto r = run({"bench", "--model", "vgg16", "--out", path("b")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("minivgg, miniresnet"), std::string::npos) << r.err;
}

TEST_F(CliTest, VerifyRunsSuites) {
  auto r = run({"verify", "--suites", "surrogate"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("PASS surrogate"), std::string::npos) << r.out;
  r = run({"verify", "--suites", "axioms"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("gradients, completeness, surrogate"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace attrib::cli
