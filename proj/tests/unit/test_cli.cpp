#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "ldr/cli.hpp"
#include "ldr/error.hpp"

namespace fs = std::filesystem;
using ldr::cli::dispatch;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "ldrfusion");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

fs::path root() {
  static const fs::path r = [] {
    const fs::path p = fs::temp_directory_path() / "ldr_unit_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({"synth", "--out", (root() / "x").string(), "--bogus", "1"}), 1);
  EXPECT_EQ(run({}), 1);
  EXPECT_EQ(run({"nosuch"}), 1);
  EXPECT_EQ(run({"run", "--frames", "/nonexistent", "--out", (root() / "y").string(), "--mode", "both"}), 2);
  EXPECT_EQ(run({"synth", "--help"}), 0);
}

TEST(Cli, SynthEvalPerfectDetections) {
  const fs::path frames = root() / "frames";
  ASSERT_EQ(run({"synth", "--out", frames.string(), "--count", "3", "--seed", "5"}), 0);
  const fs::path dets = root() / "perfect";
  fs::create_directories(dets);
  for (const auto& e : fs::directory_iterator(frames / "label_2")) fs::copy_file(e.path(), dets / e.path().filename());
  const fs::path out = root() / "metrics";
  ASSERT_EQ(run({"eval", "--frames", frames.string(), "--dets", dets.string(), "--out", out.string()}), 0);
  const auto j = nlohmann::json::parse(slurp(out / "metrics.json"));
  int checked = 0;
  for (const auto& [cls, by_diff] : j["results"].items()) {
    for (const auto& [diff, by_space] : by_diff.items()) {
      for (const auto& [space, cell] : by_space.items()) {
        if (cell["ap_r40"].is_null()) continue;
        EXPECT_EQ(cell["ap_r40"].get<double>(), 1.0) << cls << " " << diff << " " << space;
        EXPECT_EQ(cell["ap_r11"].get<double>(), 1.0);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(Cli, RunDeterministicAcrossJobs) {
  const fs::path frames = root() / "frames_run";
  ASSERT_EQ(run({"synth", "--out", frames.string(), "--count", "3", "--seed", "8", "--noise", "high"}), 0);
  ASSERT_EQ(run({"run", "--frames", frames.string(), "--out", (root() / "r1").string(), "--jobs", "1"}), 0);
  ASSERT_EQ(run({"run", "--frames", frames.string(), "--out", (root() / "r2").string(), "--jobs", "3"}), 0);
  for (const auto& e : fs::directory_iterator(root() / "r1")) {
    EXPECT_EQ(slurp(e.path()), slurp(root() / "r2" / e.path().filename()));
  }
}

TEST(Cli, ConfigFileAndPrecedence) {
  const fs::path cfg = root() / "synth.cfg";
  std::ofstream(cfg) << "# two frames unless overridden\ncount = 2\nseed = 3\nnoise = high\nnoise.sigma0 = 0.1\n";
  ASSERT_EQ(run({"synth", "--config", cfg.string(), "--out", (root() / "c1").string()}), 0);
  EXPECT_EQ(std::distance(fs::directory_iterator(root() / "c1" / "velodyne"), fs::directory_iterator{}), 2);
  ASSERT_EQ(run({"synth", "--config", cfg.string(), "--out", (root() / "c2").string(), "--count", "1"}), 0);
  EXPECT_EQ(std::distance(fs::directory_iterator(root() / "c2" / "velodyne"), fs::directory_iterator{}), 1);
  EXPECT_EQ(slurp(root() / "c1" / "depth" / "000000.f32grid"), slurp(root() / "c2" / "depth" / "000000.f32grid"));

  std::ofstream(root() / "bad.cfg") << "counts = 2\n";
  EXPECT_EQ(run({"synth", "--config", (root() / "bad.cfg").string(), "--out", (root() / "c3").string()}), 1);
  std::ofstream(root() / "worse.cfg") << "count 2\n";
  EXPECT_EQ(run({"synth", "--config", (root() / "worse.cfg").string(), "--out", (root() / "c3").string()}), 1);
  EXPECT_EQ(run({"synth", "--config", (root() / "none.cfg").string(), "--out", (root() / "c3").string()}), 1);
}

TEST(Cli, Depth2Cloud) {
  const fs::path frames = root() / "frames";
  ASSERT_EQ(run({"synth", "--out", frames.string(), "--count", "1", "--seed", "5"}), 0);
  const fs::path out = root() / "cloud.bin";
  ASSERT_EQ(run({"depth2cloud", "--depth", (frames / "depth" / "000000.f32grid").string(), "--calib",
                 (frames / "calib" / "000000.txt").string(), "--image", (frames / "image_2" / "000000.png").string(),
                 "--out", out.string()}),
            0);
  EXPECT_GT(fs::file_size(out), 0u);
  EXPECT_EQ(fs::file_size(out) % 36, 0u);
  EXPECT_EQ(run({"depth2cloud", "--depth", "/nonexistent.png", "--calib", (frames / "calib" / "000000.txt").string(),
                 "--out", out.string()}),
            2);
}

TEST(Cli, NoisePresets) {
  EXPECT_EQ(ldr::cli::noise_preset("high").bleed_width, 3);
  EXPECT_EQ(ldr::cli::noise_preset("none").sigma0, 0.0);
  EXPECT_THROW(ldr::cli::noise_preset("loud"), ldr::ConfigError);
}
