// Copyright 2026 The Keypillar Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(KEYPILLAR_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "keypillar_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.cfg") << "grid.back = 0\ngrid.front = 8\ngrid.left = -4\n"
                                        "grid.right = 4\ngrid.pillar_size = 0.25\n"
                                        "encoder.max_points = 16\nencoder.channels = 8\n"
                                        "net.blocks = 1,1,8;2,1,8\nnet.necks = 1,8;2,8\n"
                                        "net.head_hidden = 8\ntrain.max_steps = 10\n"
                                        "infer.score_threshold = 0.0\ninfer.max_objects = 5\n";
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string cfg() const { return "--config " + (dir_ / "tiny.cfg").string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("count --bogus").code, 1);
  EXPECT_EQ(run("bench --repeats 3").code, 1);
  EXPECT_EQ(run("count --config /nonexistent.cfg").code, 2);
  EXPECT_EQ(run("encode --data /nonexistent --frame 000000").code, 2);
  EXPECT_EQ(run("count --help").code, 0);
}

TEST_F(Cli, CountDefaultsToTheFullNetwork) {
  const auto r = run("count --width 416 --height 480");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("params "), std::string::npos);
  EXPECT_NE(r.out.find("input 416x480"), std::string::npos);
  const auto toy = run("count --config " + std::string(KEYPILLAR_CONFIG_DIR) + "/toy.cfg");
  ASSERT_EQ(toy.code, 0);
  EXPECT_NE(toy.out.find("input 64x64"), std::string::npos);
}

TEST_F(Cli, BenchEmitsCsv) {
  const auto r = run("bench --n 50 --repeats 20 --profile isolated");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "method,n,median_s,identical,ratio");
  EXPECT_NE(r.out.find("rotated_nms,50,"), std::string::npos);
  EXPECT_NE(r.out.find(",true,"), std::string::npos);
}

TEST_F(Cli, SynthTrainInferEval) {
  const auto data = dir_ / "data", run_dir = dir_ / "run", pred = dir_ / "pred";
  ASSERT_EQ(run("synth " + cfg() + " --frames 3 --boxes 1 --out " + data.string()).code, 0);
  EXPECT_TRUE(fs::exists(data / "train.txt"));
  EXPECT_TRUE(fs::exists(data / "velodyne" / "000002.bin"));

  ASSERT_EQ(run("encode " + cfg() + " --data " + data.string() + " --frame 000001 --out " +
                dir_.string())
                .code,
            0);
  EXPECT_NE(slurp(dir_ / "000001_targets.json").find("\"objects\""), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "000001_heatmap.ppm"));

  ASSERT_EQ(run("train " + cfg() + " --quiet --data " + data.string() + " --out " +
                run_dir.string())
                .code,
            0);
  const std::string metrics = slurp(run_dir / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')),
            "step,lr,loss_total,loss_heat,loss_off,loss_z,loss_size,loss_ori");
  ASSERT_TRUE(fs::exists(run_dir / "model.kpc"));

  ASSERT_EQ(run("infer " + cfg() + " --data " + data.string() + " --checkpoint " +
                (run_dir / "model.kpc").string() + " --out " + pred.string())
                .code,
            0);
  EXPECT_TRUE(fs::exists(pred / "000000.txt"));

  const auto ev = run("eval " + cfg() + " --data " + data.string() + " --pred " + pred.string() +
                      " --iou 0.5 --difficulty all --metric bev");
  ASSERT_EQ(ev.code, 0);
  EXPECT_EQ(ev.out.substr(0, ev.out.find('\n')), "class,difficulty,metric,iou,ap");
  EXPECT_NE(ev.out.find("Car,"), std::string::npos);

  ASSERT_EQ(run("render " + cfg() + " --data " + data.string() + " --frame 000000 --checkpoint " +
                (run_dir / "model.kpc").string() + " --out " + (dir_ / "h.ppm").string())
                .code,
            0);
  EXPECT_EQ(slurp(dir_ / "h.ppm").substr(0, 3), "P6\n");

  // A checkpoint for a different architecture is rejected as bad input.
  EXPECT_EQ(run("infer --data " + data.string() + " --checkpoint " +
                (run_dir / "model.kpc").string() + " --out " + pred.string())
                .code,
            2);
}

TEST_F(Cli, CountMatchesKittiConfig) {
  const auto r = run("count --config " + std::string(KEYPILLAR_CONFIG_DIR) + "/kitti.cfg");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("input 500x440"), std::string::npos);
}

TEST_F(Cli, EvalOnOverfitToyRun) {
  // The toy configuration shortened to a single-frame overfit.
  std::ofstream(dir_ / "overfit.cfg") << slurp(fs::path(KEYPILLAR_CONFIG_DIR) / "toy.cfg")
                                      << "\ntrain.max_steps = 300\n";
  const std::string cfg = "--config " + (dir_ / "overfit.cfg").string();
  const auto data = dir_ / "data", run_dir = dir_ / "run", pred = dir_ / "pred";
  ASSERT_EQ(run("synth " + cfg + " --frames 1 --boxes 3 --out " + data.string()).code, 0);
  ASSERT_EQ(run("train " + cfg + " --quiet --data " + data.string() + " --out " +
                run_dir.string())
                .code,
            0);
  ASSERT_EQ(run("infer " + cfg + " --data " + data.string() + " --checkpoint " +
                (run_dir / "model.kpc").string() + " --out " + pred.string())
                .code,
            0);
  const auto ev = run("eval " + cfg + " --data " + data.string() + " --pred " + pred.string() +
                      " --iou 0.5 --difficulty all --metric bev");
  ASSERT_EQ(ev.code, 0);
  const auto row = ev.out.substr(ev.out.find('\n') + 1);
  const double ap = std::stod(row.substr(row.rfind(',') + 1));
  EXPECT_GE(ap, 0.9) << ev.out;
}
