#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "fruitlet/io/dataset.hpp"
#include "fruitlet/util/encoding.hpp"

namespace {

using namespace fruitlet;
namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fruitlet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  int run(const std::string& args) const {
    const std::string cmd = "cd '" + dir_.string() + "' && '" FRUITLET_CLI "' " + args + " > out.txt 2> err.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string read(const std::string& rel) const { return util::read_file(dir_ / rel); }
  void write(const std::string& rel, const std::string& text) const { util::write_file_atomic(dir_ / rel, text); }

  fs::path dir_;
};

void expect_same_tree(const fs::path& x, const fs::path& y) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(x)) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_TRUE(util::read_file(e.path()) == util::read_file(y / fs::relative(e.path(), x))) << e.path();
  }
  EXPECT_GT(files, 0u);
}

TEST_F(Cli, SynthTwiceIsByteIdentical) {
  ASSERT_EQ(run("synth --seed 7 --pairs 10 --out a"), 0);
  ASSERT_EQ(run("synth --seed 7 --pairs 10 --out b"), 0);
  expect_same_tree(dir_ / "a", dir_ / "b");
  ASSERT_EQ(run("synth --seed 8 --pairs 10 --out c"), 0);
  EXPECT_NE(read("a/manifest.json"), read("c/manifest.json"));
}

TEST_F(Cli, GrowthHandOracle) {
  // Nine fruitlets double, one stays the same size. Rates 6..14 and 0:
  // top ceil(1.5) = 2 are {13, 14}, lower middle 13, threshold 6.5, and
  // only 0 and 6 fall below it, so 20% abscise.
  io::MeasurementsFile m;
  for (int i = 0; i < 10; ++i) {
    const double start = i < 9 ? 6.0 + i : 8.0;
    const double end = i < 9 ? 2 * start : start;
    for (auto [day, d] : {std::pair{"2021-05-21", start}, std::pair{"2021-05-25", end}}) {
      m.measurements.push_back({{"c0", "f" + std::to_string(i), day, d}, {d, 10.0, 60.0, d / 6.0}, {}});
    }
  }
  io::write_json(dir_ / "meas.json", io::to_json(m));
  ASSERT_EQ(run("growth --measurements meas.json --by-key --out report.json --rates-csv rates.csv"), 0) << read("err.txt");
  const auto report = nlohmann::json::parse(read("report.json")).get<growth::GrowthReport>();
  EXPECT_EQ(report.day_start, "2021-05-21");
  EXPECT_EQ(report.mfg_mm, 13.0);
  EXPECT_EQ(report.abscise_threshold_mm, 6.5);
  EXPECT_EQ(report.abscise_percent, 20.0);
  EXPECT_EQ(report.rates_mm.size(), 10u);
  EXPECT_NE(read("rates.csv").find("c0,f9,f9,8.000000,8.000000,0.000000"), std::string::npos);
}

TEST_F(Cli, TrainEvalDeterministicAndMatchGrowthCoverage) {
  write("cfg.json", R"({"net": {"feature_dim": 32, "layers": 3, "heads": 2}, "train": {"accumulate": 4}})");
  ASSERT_EQ(run("synth --seed 100 --pairs 40 --out train"), 0);
  ASSERT_EQ(run("synth --seed 900 --pairs 6 --drop-prob 0 --out test"), 0);
  ASSERT_EQ(run("--config cfg.json train --dataset train --checkpoint-dir ck1 --epochs 10 --seed 3"), 0) << read("err.txt");
  ASSERT_EQ(run("--config cfg.json train --dataset train --checkpoint-dir ck2 --epochs 10 --seed 3"), 0);
  expect_same_tree(dir_ / "ck1", dir_ / "ck2");
  for (int e = 0; e <= 10; ++e) EXPECT_TRUE(fs::exists(dir_ / "ck1" / train::checkpoint_name(e)));

  ASSERT_EQ(run("eval --dataset test --checkpoint ck1/epoch-0010.json --out e1.csv"), 0);
  ASSERT_EQ(run("eval --dataset test --checkpoint ck2/epoch-0010.json --out e2.csv"), 0);
  EXPECT_EQ(read("e1.csv"), read("e2.csv"));
  const std::string curve = read("e1.csv");
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 22);

  ASSERT_EQ(run("size --dataset test --out meas.json"), 0);
  ASSERT_EQ(run("match --dataset test --checkpoint ck1/epoch-0010.json --threshold 0.2 --out m.json"), 0);
  ASSERT_EQ(run("growth --measurements meas.json --matches m.json --no-size-filter --no-rate-filter --out r.json"), 0)
      << read("err.txt");
  const auto report = nlohmann::json::parse(read("r.json")).get<growth::GrowthReport>();
  const auto ds = io::Dataset::open(dir_ / "test");
  std::size_t clustered = 0;
  for (std::size_t c = 0; c < ds.manifest().clusters.size(); ++c)
    for (const auto& d : ds.observation(c, 0).detections) clustered += d.is_cluster;
  EXPECT_EQ(report.unmatched, 0u);
  EXPECT_EQ(report.rates_mm.size(), clustered);
  ASSERT_EQ(run("growth --measurements meas.json --by-key --no-size-filter --no-rate-filter --out k.json"), 0);
  const auto by_key = nlohmann::json::parse(read("k.json")).get<growth::GrowthReport>();
  EXPECT_EQ(report.rates_mm, by_key.rates_mm);
}

TEST_F(Cli, FlagsOverrideConfigFile) {
  write("cfg.json", R"({"synth": {"pairs": 3, "seed": 40}, "scene": {"fruitlets_min": 3, "fruitlets_max": 3}})");
  ASSERT_EQ(run("--config cfg.json synth --out a"), 0) << read("err.txt");
  ASSERT_EQ(run("--config cfg.json synth --out b --pairs 2 --seed 41"), 0);
  const auto a = io::Dataset::open(dir_ / "a"), b = io::Dataset::open(dir_ / "b");
  EXPECT_EQ(a.manifest().clusters.size(), 3u);
  EXPECT_EQ(b.manifest().clusters.size(), 2u);
  EXPECT_EQ(b.manifest().clusters.front().cluster_id, "c41");
  EXPECT_EQ(a.manifest().generator->fruitlets_min, 3u);
  EXPECT_EQ(run("--config nowhere.json synth --out c"), 3);
}

TEST_F(Cli, DistinctExitCodes) {
  EXPECT_EQ(run("synth --out x --no-such-flag"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("size --dataset missing --out m.json"), 3);
  ASSERT_EQ(run("synth --seed 1 --pairs 1 --out ds"), 0);
  auto manifest = nlohmann::json::parse(read("ds/manifest.json"));
  manifest["schema_version"] = 99;
  write("ds/manifest.json", manifest.dump());
  EXPECT_EQ(run("size --dataset ds --out m.json"), 4);
  const auto err = nlohmann::json::parse(read("err.txt"));
  EXPECT_EQ(err.at("error"), "schema");
  EXPECT_EQ(err.at("exit_code"), 4);
  write("meas.json", R"({"schema_version": 1, "measurements": [
    {"cluster_id": "c", "key": "a", "day": "d1", "diameter_mm": -1, "disparity_used": 1, "baseline_mm": 1,
     "minor_px": 1, "ellipse": {"cx": 0, "cy": 0, "major_len": 1, "minor_len": 1, "angle": 0}},
    {"cluster_id": "c", "key": "a", "day": "d2", "diameter_mm": 2, "disparity_used": 1, "baseline_mm": 1,
     "minor_px": 1, "ellipse": {"cx": 0, "cy": 0, "major_len": 1, "minor_len": 1, "angle": 0}}],
    "not_sized": []})");
  EXPECT_EQ(run("growth --measurements meas.json --by-key --out r.json"), 5);
  EXPECT_FALSE(fs::exists(dir_ / "r.json"));
}

}  // namespace
