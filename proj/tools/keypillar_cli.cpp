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

// keypillar command-line tool.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "keypillar/data_io.hpp"
#include "keypillar/errors.hpp"
#include "keypillar/harness.hpp"
#include "keypillar/net/network.hpp"
#include "keypillar/pipeline.hpp"

namespace fs = std::filesystem;
using namespace keypillar;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool out_required = false) {
  // A missing file is a data error (exit 2), not a usage error.
  app->add_option("--config", c.config, "configuration file");
  app->add_option_function<std::uint64_t>(
      "--seed", [&c](std::uint64_t s) { c.seed = s, c.has_seed = true; }, "random seed");
  auto* out = app->add_option("--out", c.out, "output path");
  if (out_required) out->required();
}

pipeline::TrainConfig config_of(const Common& c) {
  pipeline::TrainConfig cfg = c.config.empty() ? pipeline::TrainConfig{}
                                               : pipeline::load_config(c.config);
  if (c.has_seed) cfg.seed = c.seed;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// Output to a file when given, stdout otherwise.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

std::vector<std::string> frame_ids(const fs::path& root, const std::string& split) {
  if (!split.empty()) return data::read_split(split);
  std::vector<std::string> ids;
  if (!fs::is_directory(root / "velodyne")) {
    throw Error("no velodyne directory under " + root.string());
  }
  for (const auto& e : fs::directory_iterator(root / "velodyne")) {
    if (e.path().extension() == ".bin") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<data::Frame> load_frames(const fs::path& root, const std::string& split,
                                     const pipeline::TrainConfig& cfg) {
  std::vector<data::Frame> frames;
  for (const std::string& id : frame_ids(root, split)) {
    frames.push_back(data::load_frame(root, id, cfg.class_names));
  }
  return frames;
}

int cmd_count(const Common& c, int width, int height) {
  const pipeline::TrainConfig cfg = config_of(c);
  const encoder::GridSpec grid = cfg.grid();
  if (width <= 0) width = grid.ny;
  if (height <= 0) height = grid.nx;
  net::Network network(cfg.network_spec(), cfg.seed);
  const net::ParamMacCount pm = net::count_params_macs(network, width, height);
  std::ostringstream s;
  s << "network " << cfg.network_spec().describe() << "\n"
    << "input " << width << "x" << height << "\n"
    << "params " << pm.params << "\n"
    << "macs " << pm.macs << "\n";
  char buf[96];
  std::snprintf(buf, sizeof(buf), "summary %.3fM params, %.2fG MACs\n", pm.params / 1e6,
                pm.macs / 1e9);
  s << buf;
  emit(c.out, s.str());
  return 0;
}

int cmd_synth(const Common& c, int frames, int boxes) {
  const pipeline::TrainConfig cfg = config_of(c);
  const encoder::GridSpec grid = cfg.grid();
  std::vector<std::string> ids;
  for (int i = 0; i < frames; ++i) {
    data::Frame f = data::synth_scene(cfg.seed * 100003ULL + i, boxes, grid);
    char id[16];
    std::snprintf(id, sizeof(id), "%06d", i);
    f.id = id;
    data::save_frame(c.out, f);
    ids.push_back(f.id);
  }
  data::write_split(fs::path(c.out) / "train.txt", ids);
  std::cerr << "wrote " << frames << " frames to " << c.out << "\n";
  return 0;
}

int cmd_encode(const Common& c, const std::string& root, const std::string& id) {
  const pipeline::TrainConfig cfg = config_of(c);
  const encoder::GridSpec grid = cfg.grid();
  const data::Frame f = data::load_frame(root, id, cfg.class_names);
  const auto boxes = f.labeled_boxes();
  const targets::HeadTargets t = targets::encode_targets(boxes, grid, cfg.target_options());
  const encoder::PillarSet pillars =
      encoder::pillarize(f.cloud, grid, {cfg.max_points, cfg.max_pillars, cfg.seed});

  nlohmann::json j;
  j["frame"] = id;
  j["grid"] = {{"nx", grid.nx}, {"ny", grid.ny}, {"b", grid.b}};
  j["pillars"] = pillars.size();
  std::size_t hot = 0;
  for (double v : t.heatmap.data) hot += v > 0.0;
  j["heatmap_nonzero"] = hot;
  j["offset_pixels"] = std::count(t.offset.mask.begin(), t.offset.mask.end(), 1);
  for (const targets::ObjectTarget& o : t.objects) {
    j["objects"].push_back({{"class", o.class_id},
                            {"keypoint", {o.keypoint.px, o.keypoint.py}},
                            {"pixel", {o.keypoint.ix, o.keypoint.iy}},
                            {"z", o.z},
                            {"size", o.size},
                            {"bins", o.orientation.eta},
                            {"residual", o.orientation.nu},
                            {"owns_center", o.owns_center}});
  }
  if (c.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / (id + "_targets.json"), j.dump(2) + "\n");
    harness::write_heatmap(fs::path(c.out) / (id + "_heatmap.ppm"), t.heatmap, grid);
  }
  return 0;
}

int cmd_train(const Common& c, const std::string& root, const std::string& split, bool quiet) {
  const pipeline::TrainConfig cfg = config_of(c);
  const auto frames = load_frames(root, split, cfg);
  pipeline::TrainOptions opts;
  opts.out_dir = c.out;
  const long long total = pipeline::total_steps(cfg, frames.size());
  const auto start = std::chrono::steady_clock::now();
  if (!quiet) {
    opts.on_step = [&](long long step, const pipeline::StepLosses& l) {
      if (step % 50 != 0 && step != total) return;
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::fprintf(stderr, "step %lld/%lld loss %.4f lr %.3g (%.0fs)\n", step, total, l.total,
                   l.lr, secs);
    };
  }
  pipeline::train(cfg, frames, opts);
  std::cerr << "model written to " << (fs::path(c.out) / "model.kpc").string() << "\n";
  return 0;
}

int cmd_infer(const Common& c, const std::string& root, const std::string& split,
              const std::string& checkpoint) {
  const pipeline::TrainConfig cfg = config_of(c);
  pipeline::Model model(cfg);
  model.load_checkpoint(net::read_checkpoint(checkpoint));
  for (const std::string& id : frame_ids(root, split)) {
    const data::Frame f = data::load_frame(root, id, cfg.class_names);
    const encoder::PointCloud cloud = cfg.fov_crop ? data::fov_crop(f.cloud, f.calib) : f.cloud;
    data::LabelSet labels;
    for (const geometry::Detection& d : pipeline::infer(model, cloud)) {
      labels.objects.push_back(data::object_from_detection(d, f.calib, cfg.class_names));
    }
    write_text(fs::path(c.out) / (id + ".txt"), data::format_kitti_labels(labels, f.calib));
  }
  return 0;
}

harness::Difficulty parse_difficulty(const std::string& s) {
  if (s == "easy") return harness::Difficulty::kEasy;
  if (s == "moderate") return harness::Difficulty::kModerate;
  if (s == "hard") return harness::Difficulty::kHard;
  return harness::Difficulty::kAll;
}

int cmd_eval(const Common& c, const std::string& root, const std::string& split,
             const std::string& pred, double iou, const std::vector<std::string>& difficulties,
             const std::vector<std::string>& metrics, bool ap11) {
  const pipeline::TrainConfig cfg = config_of(c);
  std::vector<std::vector<geometry::Detection>> dets;
  std::vector<std::vector<data::KittiObject>> gts;
  for (const std::string& id : frame_ids(root, split)) {
    const data::Frame f = data::load_frame(root, id, cfg.class_names);
    gts.push_back(f.objects);
    std::vector<geometry::Detection> mine;
    const fs::path p = fs::path(pred) / (id + ".txt");
    if (fs::exists(p)) {
      std::ifstream in(p);
      std::ostringstream text;
      text << in.rdbuf();
      for (const data::KittiObject& o :
           data::parse_kitti_labels(text.str(), f.calib, cfg.class_names).objects) {
        if (o.class_id < 0) continue;
        mine.push_back({o.box, o.has_score ? o.score : 1.0, o.class_id});
      }
    }
    dets.push_back(std::move(mine));
  }
  std::vector<harness::ApResult> results;
  std::vector<int> classes;
  for (int cls = 0; cls < cfg.num_classes; ++cls) {
    for (const std::string& d : difficulties) {
      for (const std::string& m : metrics) {
        harness::EvalOptions o;
        o.class_id = cls;
        o.iou_threshold = iou;
        o.difficulty = parse_difficulty(d);
        o.kind = m == "bev" ? harness::IouKind::kBev : harness::IouKind::k3D;
        o.interpolation = ap11 ? harness::Interpolation::k11 : harness::Interpolation::k40;
        results.push_back(harness::evaluate_ap(dets, gts, o));
        classes.push_back(cls);
      }
    }
  }
  emit(c.out, harness::ap_csv(results, cfg.class_names, classes));
  return 0;
}

int cmd_bench(const Common& c, int n, const std::string& profile, int repeats) {
  const auto p = profile == "isolated" ? harness::OverlapProfile::kIsolated
                                       : harness::OverlapProfile::kDense;
  const harness::BenchReport r = harness::bench_postprocessing(n, p, c.seed, repeats);
  emit(c.out, harness::bench_csv(r));
  return 0;
}

int cmd_render(const Common& c, const std::string& root, const std::string& id,
               const std::string& checkpoint) {
  const pipeline::TrainConfig cfg = config_of(c);
  const encoder::GridSpec grid = cfg.grid();
  const data::Frame f = data::load_frame(root, id, cfg.class_names);
  const auto boxes = f.labeled_boxes();
  const targets::HeadTargets t = targets::encode_targets(boxes, grid, cfg.target_options());
  std::vector<geometry::Detection> dets;
  if (!checkpoint.empty()) {
    pipeline::Model model(cfg);
    model.load_checkpoint(net::read_checkpoint(checkpoint));
    dets = pipeline::infer(model, f.cloud);
  } else {
    for (const auto& b : boxes) dets.push_back({b.box, 1.0, b.class_id});
  }
  harness::write_heatmap(c.out, t.heatmap, grid, dets);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keypillar: anchor-free pillar detection toolkit"};
  app.require_subcommand(1);
  Common common;
  std::string root, split, checkpoint, pred, frame_id, profile = "dense";
  int width = 0, height = 0, frames = 50, boxes = 3, n = 1000, repeats = 21;
  double iou = 0.7;
  bool ap11 = false, quiet = false;
  std::vector<std::string> difficulties{"easy", "moderate", "hard"}, metrics{"3d", "bev"};

  auto* count = app.add_subcommand("count", "parameter and MAC count of the configured network");
  add_common(count, common);
  count->add_option("--width", width, "input width in cells (default: grid ny)");
  count->add_option("--height", height, "input height in cells (default: grid nx)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, common, true);
  synth->add_option("--frames", frames, "frame count")->check(CLI::PositiveNumber);
  synth->add_option("--boxes", boxes, "cars per frame")->check(CLI::NonNegativeNumber);

  auto* encode = app.add_subcommand("encode", "dump the training targets of one frame");
  add_common(encode, common);
  encode->add_option("--data", root, "dataset root")->required();
  encode->add_option("--frame", frame_id, "frame id")->required();

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, common, true);
  train->add_option("--data", root, "dataset root")->required();
  train->add_option("--split", split, "file listing frame ids");
  train->add_flag("--quiet", quiet, "no progress output");

  auto* infer = app.add_subcommand("infer", "write detections as KITTI labels");
  add_common(infer, common, true);
  infer->add_option("--data", root, "dataset root")->required();
  infer->add_option("--split", split, "file listing frame ids");
  infer->add_option("--checkpoint", checkpoint, "model file")->required();

  auto* eval = app.add_subcommand("eval", "average precision of predicted labels");
  add_common(eval, common);
  eval->add_option("--data", root, "dataset root with ground truth")->required();
  eval->add_option("--split", split, "file listing frame ids");
  eval->add_option("--pred", pred, "directory of predicted label files")->required();
  eval->add_option("--iou", iou, "IoU threshold")->check(CLI::Range(0.0, 1.0));
  eval->add_option("--difficulty", difficulties, "easy, moderate, hard or all")
      ->check(CLI::IsMember({"easy", "moderate", "hard", "all"}));
  eval->add_option("--metric", metrics, "3d or bev")->check(CLI::IsMember({"3d", "bev"}));
  eval->add_flag("--ap11", ap11, "11-point interpolation instead of 40-point");

  auto* bench = app.add_subcommand("bench", "rotated NMS versus max-pool peak extraction");
  add_common(bench, common);
  bench->add_option("--n", n, "candidate boxes")->check(CLI::PositiveNumber);
  bench->add_option("--profile", profile, "isolated or dense")
      ->check(CLI::IsMember({"isolated", "dense"}));
  bench->add_option("--repeats", repeats, "timed repeats per method")
      ->check(CLI::Range(20, 100000));

  auto* render = app.add_subcommand("render", "heatmap image of one frame");
  add_common(render, common, true);
  render->add_option("--data", root, "dataset root")->required();
  render->add_option("--frame", frame_id, "frame id")->required();
  render->add_option("--checkpoint", checkpoint, "mark detections of this model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (*count) return cmd_count(common, width, height);
    if (*synth) return cmd_synth(common, frames, boxes);
    if (*encode) return cmd_encode(common, root, frame_id);
    if (*train) return cmd_train(common, root, split, quiet);
    if (*infer) return cmd_infer(common, root, split, checkpoint);
    if (*eval) return cmd_eval(common, root, split, pred, iou, difficulties, metrics, ap11);
    if (*bench) return cmd_bench(common, n, profile, repeats);
    if (*render) return cmd_render(common, root, frame_id, checkpoint);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
