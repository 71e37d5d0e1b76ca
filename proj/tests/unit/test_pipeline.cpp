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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "keypillar/errors.hpp"
#include "keypillar/pipeline.hpp"

namespace kp = keypillar::pipeline;
namespace kd = keypillar::data;
namespace fs = std::filesystem;
using keypillar::geometry::kPi;

namespace {

constexpr const char* kTiny = R"(
grid.back = 0
grid.front = 8
grid.left = -4
grid.right = 4
grid.pillar_size = 0.25
encoder.max_points = 16
encoder.channels = 8
net.blocks = 1,1,8;2,1,8
net.necks = 1,8;2,8
net.head_hidden = 8
train.batch_size = 1
train.seed = 3
augment.gt_sampling = false
augment.box_noise = false
augment.flip = false
augment.global_rotation = false
augment.global_scale = false
)";

kp::TrainConfig tiny() { return kp::parse_config(kTiny); }

std::vector<kd::Frame> tiny_frames(int n, int boxes = 1) {
  std::vector<kd::Frame> out;
  for (int i = 0; i < n; ++i) out.push_back(kd::synth_scene(100 + i, boxes, tiny().grid()));
  return out;
}

bool trainable(const keypillar::net::NamedArray& a) {
  return a.name.find("running") == std::string::npos;
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const auto c = kp::parse_config("# nothing\n\n");
  EXPECT_EQ(kp::format_config(c), kp::format_config(kp::TrainConfig{}));
  EXPECT_EQ(c.grid().nx, 440);
  EXPECT_EQ(c.grid().ny, 500);
  EXPECT_EQ(c.lr_max, 3e-3);
  EXPECT_EQ(c.weights.z, 1.5);
}

TEST(Config, FormatParseRoundTrip) {
  auto c = tiny();
  c.lr_max = 0.1 + 0.2;
  c.class_names = {"Car", "Van"};
  c.num_classes = 2;
  const auto back = kp::parse_config(kp::format_config(c));
  EXPECT_EQ(kp::format_config(back), kp::format_config(c));
  EXPECT_EQ(back.lr_max, c.lr_max);
  EXPECT_EQ(back.blocks.size(), 2u);
  EXPECT_EQ(back.blocks[1].stride, 2);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    kp::parse_config("grid.back = 0\nnet.bogus = 3\n");
    FAIL();
  } catch (const keypillar::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(kp::parse_config("train.epochs = ten\n"), keypillar::ConfigError);
  EXPECT_THROW(kp::parse_config("train.epochs 10\n"), keypillar::ConfigError);
  EXPECT_THROW(kp::parse_config("targets.heatmap = square\n"), keypillar::ConfigError);
}

TEST(Config, ValidateRejectsIndivisibleGrid) {
  auto c = tiny();
  c.range.front = 8.25;  // nx = 33, not divisible by the stride 2
  EXPECT_THROW(c.validate(), keypillar::ConfigError);
  EXPECT_THROW(kp::Model{c}, keypillar::ConfigError);
}

TEST(Config, DigestCoversArchitectureOnly) {
  const auto a = tiny();
  auto b = a;
  b.lr_max = 1.0;
  b.epochs = 3;
  EXPECT_EQ(kp::model_digest(a), kp::model_digest(b));
  b.head_hidden = 16;
  EXPECT_NE(kp::model_digest(a), kp::model_digest(b));
  auto c = a;
  c.pillar_size = 0.5;
  EXPECT_NE(kp::model_digest(a), kp::model_digest(c));
}

TEST(Augment, NoneIsIdentity) {
  const auto f = tiny_frames(1, 2)[0];
  const auto db = kd::build_gt_database(tiny_frames(3));
  const auto g = kp::augment(f, db, kp::AugmentSpec::none(), 5);
  ASSERT_EQ(g.cloud.points.size(), f.cloud.points.size());
  for (std::size_t i = 0; i < f.cloud.points.size(); ++i) {
    EXPECT_EQ(g.cloud.points[i].x, f.cloud.points[i].x);
  }
  EXPECT_EQ(g.objects[1].box.theta, f.objects[1].box.theta);
}

TEST(Augment, RotationIsInvertible) {
  const auto f = tiny_frames(1, 2)[0];
  auto g = f;
  kp::rotate_frame(g, 0.7);
  kp::rotate_frame(g, -0.7);
  for (std::size_t i = 0; i < f.cloud.points.size(); ++i) {
    EXPECT_NEAR(g.cloud.points[i].x, f.cloud.points[i].x, 1e-12);
    EXPECT_NEAR(g.cloud.points[i].y, f.cloud.points[i].y, 1e-12);
  }
  for (std::size_t i = 0; i < f.objects.size(); ++i) {
    EXPECT_NEAR(g.objects[i].box.x, f.objects[i].box.x, 1e-12);
    EXPECT_NEAR(std::remainder(g.objects[i].box.theta - f.objects[i].box.theta, 2 * kPi), 0.0,
                1e-12);
  }
}

TEST(Augment, GlobalTransformsKeepPointsInTheirBoxes) {
  const auto f = tiny_frames(1, 2)[0];
  const auto inside_counts = [](const kd::Frame& fr) {
    std::vector<int> n;
    for (const auto& o : fr.objects) {
      int k = 0;
      for (const auto& p : fr.cloud.points) k += keypillar::geometry::point_in_box(o.box, p.x, p.y, p.z);
      n.push_back(k);
    }
    return n;
  };
  const auto before = inside_counts(f);
  auto g = f;
  kp::flip_frame(g);
  EXPECT_EQ(inside_counts(g), before);
  kp::rotate_frame(g, 0.3);
  EXPECT_EQ(inside_counts(g), before);
  kp::scale_frame(g, 1.04);
  EXPECT_EQ(inside_counts(g), before);
  EXPECT_NEAR(g.objects[0].box.l, f.objects[0].box.l * 1.04, 1e-12);
}

TEST(Augment, FullPipelineKeepsBoxesDisjointAndIsSeeded) {
  const auto frames = tiny_frames(6, 2);
  const auto db = kd::build_gt_database(frames);
  kp::AugmentSpec spec;
  spec.gt_samples_per_frame = 4;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = kp::augment(frames[seed % 6], db, spec, seed);
    EXPECT_GE(g.objects.size(), 2u);
    for (std::size_t i = 0; i < g.objects.size(); ++i)
      for (std::size_t j = i + 1; j < g.objects.size(); ++j)
        EXPECT_EQ(keypillar::geometry::iou_bev(g.objects[i].box, g.objects[j].box), 0.0);
    const auto h = kp::augment(frames[seed % 6], db, spec, seed);
    ASSERT_EQ(h.cloud.points.size(), g.cloud.points.size());
    EXPECT_EQ(h.cloud.points.back().y, g.cloud.points.back().y);
  }
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  auto c = tiny();
  c.lr_max = 0.0;
  c.max_steps = 3;
  kp::Model fresh(c);
  const auto before = fresh.to_checkpoint();
  const auto r = kp::train(c, tiny_frames(2));
  for (std::size_t i = 0; i < before.arrays.size(); ++i) {
    if (!trainable(before.arrays[i])) continue;
    EXPECT_EQ(r.checkpoint.arrays[i].data, before.arrays[i].data) << before.arrays[i].name;
  }
}

TEST(Train, EveryWeightReceivesGradient) {
  kp::Model m(tiny());
  const auto frames = tiny_frames(2);
  m.zero_grad();
  const auto s = kp::forward_backward(m, frames, 9);
  EXPECT_TRUE(std::isfinite(s.total));
  for (auto& p : m.parameters()) {
    if (!p.grad || p.fan_in == 0) continue;
    double mag = 0.0;
    for (double g : p.grad->data) mag += std::abs(g);
    EXPECT_GT(mag, 0.0) << p.name;
  }
}

TEST(Train, ToyNetOverfitsASingleFrame) {
  auto c = kp::load_config(KEYPILLAR_CONFIG_DIR "/toy.cfg");
  c.max_steps = 200;
  const std::vector<kd::Frame> frames{kd::synth_scene(42, 3, c.grid())};
  const auto r = kp::train(c, frames);
  ASSERT_EQ(r.history.size(), 200u);
  EXPECT_LE(r.history.back().total * 10, r.history.front().total);

  const auto dets = kp::infer(r.checkpoint, frames[0].cloud, c);
  for (const auto& o : frames[0].objects) {
    double best = 0.0;
    for (const auto& d : dets) best = std::max(best, keypillar::geometry::iou_bev(d.box, o.box));
    EXPECT_GE(best, 0.5);
  }
}

TEST(Train, BitIdenticalAcrossRuns) {
  auto c = tiny();
  c.max_steps = 4;
  c.batch_size = 2;
  c.augment = kp::AugmentSpec{};
  const auto frames = tiny_frames(3, 2);
  const auto a = kp::train(c, frames);
  const auto b = kp::train(c, frames);
  EXPECT_EQ(a.metrics_csv, b.metrics_csv);
  EXPECT_EQ(keypillar::net::encode_checkpoint(a.checkpoint),
            keypillar::net::encode_checkpoint(b.checkpoint));
  EXPECT_EQ(a.metrics_csv.substr(0, a.metrics_csv.find('\n')), kp::kMetricsHeader);
}

TEST(Train, WritesRunDirectory) {
  const fs::path dir = fs::temp_directory_path() / "keypillar_pipeline_run";
  fs::remove_all(dir);
  auto c = tiny();
  c.max_steps = 2;
  c.checkpoint_every = 1;
  kp::TrainOptions o;
  o.out_dir = dir;
  long long seen = 0;
  o.on_step = [&](long long, const kp::StepLosses&) { ++seen; };
  kp::train(c, tiny_frames(1), o);
  EXPECT_EQ(seen, 2);
  EXPECT_TRUE(fs::exists(dir / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir / "model.kpc"));
  EXPECT_TRUE(fs::exists(dir / "config.cfg"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "step_00000001.kpc"));
  const auto back = kp::load_config(dir / "config.cfg");
  EXPECT_EQ(kp::format_config(back), kp::format_config(c));
  fs::remove_all(dir);
}

TEST(TotalSteps, EpochsOrOverride) {
  auto c = tiny();
  c.epochs = 3;
  c.batch_size = 2;
  EXPECT_EQ(kp::total_steps(c, 5), 9);
  c.max_steps = 7;
  EXPECT_EQ(kp::total_steps(c, 5), 7);
}

TEST(Infer, EmptyCloudAndObjectCap) {
  auto c = tiny();
  c.score_threshold = 0.0;
  c.max_objects = 5;
  kp::Model m(c);
  EXPECT_TRUE(kp::infer(m, kd::PointCloud{}).empty());
  const auto dets = kp::infer(m, tiny_frames(1)[0].cloud);
  EXPECT_LE(dets.size(), 5u);
  for (std::size_t i = 1; i < dets.size(); ++i) EXPECT_GE(dets[i - 1].score, dets[i].score);
}

TEST(Checkpoint, ModelRoundTripAndDigestMismatch) {
  auto c = tiny();
  kp::Model a(c);
  const auto ck = a.to_checkpoint();
  auto c2 = c;
  c2.seed = 99;
  kp::Model b(c2);
  b.load_checkpoint(ck);
  EXPECT_EQ(keypillar::net::encode_checkpoint(b.to_checkpoint()),
            keypillar::net::encode_checkpoint(ck));
  const auto cloud = tiny_frames(1)[0].cloud;
  const auto da = kp::infer(a, cloud), db = kp::infer(ck, cloud, c2);
  ASSERT_EQ(da.size(), db.size());
  for (std::size_t i = 0; i < da.size(); ++i) EXPECT_EQ(da[i].score, db[i].score);

  auto c3 = c;
  c3.head_hidden = 4;
  kp::Model other(c3);
  EXPECT_THROW(other.load_checkpoint(ck), keypillar::FormatError);
}
