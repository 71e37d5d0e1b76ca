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

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "keypillar/errors.hpp"
#include "keypillar/pipeline.hpp"

namespace keypillar::pipeline {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

struct BadValue {
  std::string expected;
};

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw BadValue{"a finite number"};
  }
  return v;
}

long long to_int(const std::string& s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw BadValue{"an integer"};
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw BadValue{"an unsigned integer"};
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw BadValue{"true or false"};
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::vector<long long>> to_tuples(const std::string& s, std::size_t arity) {
  std::vector<std::vector<long long>> out;
  if (s.empty()) return out;
  for (const std::string& group : split(s, ';')) {
    std::vector<long long> t;
    for (const std::string& v : split(group, ',')) t.push_back(to_int(v));
    if (t.size() != arity) {
      throw BadValue{"';'-separated groups of " + std::to_string(arity) + " integers"};
    }
    out.push_back(std::move(t));
  }
  return out;
}

struct Binding {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

using Table = std::vector<std::pair<std::string, Binding>>;

Binding real(double TrainConfig::*m) {
  return {[m](TrainConfig& c, const std::string& v) { c.*m = to_double(v); },
          [m](const TrainConfig& c) { return fmt(c.*m); }};
}

template <class Get>
Binding real_at(Get get) {
  return {[get](TrainConfig& c, const std::string& v) { get(c) = to_double(v); },
          [get](const TrainConfig& c) { return fmt(get(const_cast<TrainConfig&>(c))); }};
}

template <class Get>
Binding integer_at(Get get) {
  return {[get](TrainConfig& c, const std::string& v) {
            get(c) = static_cast<std::remove_reference_t<decltype(get(c))>>(to_int(v));
          },
          [get](const TrainConfig& c) {
            return std::to_string(get(const_cast<TrainConfig&>(c)));
          }};
}

template <class Get>
Binding flag_at(Get get) {
  return {[get](TrainConfig& c, const std::string& v) { get(c) = to_bool(v); },
          [get](const TrainConfig& c) {
            return std::string(get(const_cast<TrainConfig&>(c)) ? "true" : "false");
          }};
}

const Table& table() {
  static const Table t = [] {
    Table t;
    const auto add = [&t](const char* key, Binding b) { t.emplace_back(key, std::move(b)); };
    add("grid.back", real_at([](TrainConfig& c) -> double& { return c.range.back; }));
    add("grid.front", real_at([](TrainConfig& c) -> double& { return c.range.front; }));
    add("grid.left", real_at([](TrainConfig& c) -> double& { return c.range.left; }));
    add("grid.right", real_at([](TrainConfig& c) -> double& { return c.range.right; }));
    add("grid.z_min", real_at([](TrainConfig& c) -> double& { return c.range.z_min; }));
    add("grid.z_max", real_at([](TrainConfig& c) -> double& { return c.range.z_max; }));
    add("grid.pillar_size", real(&TrainConfig::pillar_size));

    add("encoder.max_points", integer_at([](TrainConfig& c) -> int& { return c.max_points; }));
    add("encoder.max_pillars", integer_at([](TrainConfig& c) -> int& { return c.max_pillars; }));
    add("encoder.channels", integer_at([](TrainConfig& c) -> int& { return c.pfn_channels; }));

    add("net.blocks",
        {[](TrainConfig& c, const std::string& v) {
           c.blocks.clear();
           for (const auto& g : to_tuples(v, 3)) {
             c.blocks.push_back({static_cast<int>(g[0]), static_cast<int>(g[1]),
                                 static_cast<int>(g[2])});
           }
         },
         [](const TrainConfig& c) {
           std::string s;
           for (const auto& b : c.blocks) {
             if (!s.empty()) s += ";";
             s += std::to_string(b.stride) + "," + std::to_string(b.layers) + "," +
                  std::to_string(b.channels);
           }
           return s;
         }});
    add("net.necks",
        {[](TrainConfig& c, const std::string& v) {
           c.necks.clear();
           for (const auto& g : to_tuples(v, 2)) {
             c.necks.push_back({static_cast<int>(g[0]), static_cast<int>(g[1])});
           }
         },
         [](const TrainConfig& c) {
           std::string s;
           for (const auto& n : c.necks) {
             if (!s.empty()) s += ";";
             s += std::to_string(n.stride) + "," + std::to_string(n.channels);
           }
           return s;
         }});
    add("net.head_hidden", integer_at([](TrainConfig& c) -> int& { return c.head_hidden; }));
    add("net.num_classes", integer_at([](TrainConfig& c) -> int& { return c.num_classes; }));

    add("data.classes",
        {[](TrainConfig& c, const std::string& v) {
           c.class_names = split(v, ',');
           for (const auto& n : c.class_names) {
             if (n.empty()) throw BadValue{"a comma-separated list of class names"};
           }
         },
         [](const TrainConfig& c) {
           std::string s;
           for (const auto& n : c.class_names) s += (s.empty() ? "" : ",") + n;
           return s;
         }});
    add("data.fov_crop", flag_at([](TrainConfig& c) -> bool& { return c.fov_crop; }));

    add("loss.focal_alpha", real_at([](TrainConfig& c) -> double& { return c.focal.alpha; }));
    add("loss.focal_beta", real_at([](TrainConfig& c) -> double& { return c.focal.beta; }));
    add("loss.focal_eps", real_at([](TrainConfig& c) -> double& { return c.focal.eps; }));
    add("loss.offset", real_at([](TrainConfig& c) -> double& { return c.weights.offset; }));
    add("loss.z", real_at([](TrainConfig& c) -> double& { return c.weights.z; }));
    add("loss.size", real_at([](TrainConfig& c) -> double& { return c.weights.size; }));
    add("loss.orientation",
        real_at([](TrainConfig& c) -> double& { return c.weights.orientation; }));

    add("targets.heatmap",
        {[](TrainConfig& c, const std::string& v) {
           if (v == "carshape") {
             c.heatmap_mode = targets::HeatmapMode::kCarShape;
           } else if (v == "gaussian") {
             c.heatmap_mode = targets::HeatmapMode::kGaussian;
           } else {
             throw BadValue{"carshape or gaussian"};
           }
         },
         [](const TrainConfig& c) {
           return std::string(c.heatmap_mode == targets::HeatmapMode::kCarShape ? "carshape"
                                                                                : "gaussian");
         }});
    add("targets.offset_radius",
        integer_at([](TrainConfig& c) -> int& { return c.offset_radius; }));
    add("targets.gaussian_min_overlap", real(&TrainConfig::gaussian_min_overlap));

    add("optimizer.lr_max", real(&TrainConfig::lr_max));
    add("optimizer.div_factor", real(&TrainConfig::div_factor));
    add("optimizer.final_div", real(&TrainConfig::final_div));
    add("optimizer.warmup_fraction", real(&TrainConfig::warmup_fraction));
    add("optimizer.momentum_max", real(&TrainConfig::momentum_max));
    add("optimizer.momentum_min", real(&TrainConfig::momentum_min));
    add("optimizer.beta2", real(&TrainConfig::beta2));
    add("optimizer.eps", real(&TrainConfig::adam_eps));
    add("optimizer.weight_decay", real(&TrainConfig::weight_decay));

    add("train.epochs", integer_at([](TrainConfig& c) -> int& { return c.epochs; }));
    add("train.max_steps", integer_at([](TrainConfig& c) -> long long& { return c.max_steps; }));
    add("train.batch_size", integer_at([](TrainConfig& c) -> int& { return c.batch_size; }));
    add("train.seed", {[](TrainConfig& c, const std::string& v) { c.seed = to_u64(v); },
                       [](const TrainConfig& c) { return std::to_string(c.seed); }});
    add("train.checkpoint_every",
        integer_at([](TrainConfig& c) -> long long& { return c.checkpoint_every; }));

    add("augment.gt_sampling",
        flag_at([](TrainConfig& c) -> bool& { return c.augment.gt_sampling; }));
    add("augment.gt_samples",
        integer_at([](TrainConfig& c) -> int& { return c.augment.gt_samples_per_frame; }));
    add("augment.box_noise", flag_at([](TrainConfig& c) -> bool& { return c.augment.box_noise; }));
    add("augment.box_rotation",
        real_at([](TrainConfig& c) -> double& { return c.augment.box_rotation; }));
    add("augment.box_translation_std",
        real_at([](TrainConfig& c) -> double& { return c.augment.box_translation_std; }));
    add("augment.flip", flag_at([](TrainConfig& c) -> bool& { return c.augment.flip; }));
    add("augment.flip_probability",
        real_at([](TrainConfig& c) -> double& { return c.augment.flip_probability; }));
    add("augment.global_rotation",
        flag_at([](TrainConfig& c) -> bool& { return c.augment.global_rotation; }));
    add("augment.global_rotation_max",
        real_at([](TrainConfig& c) -> double& { return c.augment.global_rotation_max; }));
    add("augment.global_scale",
        flag_at([](TrainConfig& c) -> bool& { return c.augment.global_scale; }));
    add("augment.scale_min", real_at([](TrainConfig& c) -> double& { return c.augment.scale_min; }));
    add("augment.scale_max", real_at([](TrainConfig& c) -> double& { return c.augment.scale_max; }));

    add("infer.max_objects", integer_at([](TrainConfig& c) -> int& { return c.max_objects; }));
    add("infer.score_threshold", real(&TrainConfig::score_threshold));
    return t;
  }();
  return t;
}

}  // namespace

AugmentSpec AugmentSpec::none() {
  AugmentSpec s;
  s.gt_sampling = s.box_noise = s.flip = s.global_rotation = s.global_scale = false;
  return s;
}

encoder::GridSpec TrainConfig::grid() const { return encoder::make_grid(range, pillar_size); }

net::NetworkSpec TrainConfig::network_spec() const {
  net::NetworkSpec s;
  s.in_channels = pfn_channels;
  s.blocks = blocks;
  s.necks = necks;
  s.heads = {head_hidden, 3, num_classes};
  return s;
}

targets::TargetOptions TrainConfig::target_options() const {
  targets::TargetOptions o;
  o.num_classes = num_classes;
  o.heatmap_mode = heatmap_mode;
  o.offset_radius = offset_radius;
  o.gaussian_min_overlap = gaussian_min_overlap;
  return o;
}

void TrainConfig::validate() const {
  const auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  need(pillar_size > 0.0, "grid.pillar_size must be positive");
  need(range.front > range.back && range.right > range.left && range.z_max > range.z_min,
       "grid range bounds must be increasing");
  need(max_points >= 1 && max_pillars >= 1 && pfn_channels >= 1,
       "encoder limits must be positive");
  need(num_classes >= 1, "net.num_classes must be >= 1");
  need(static_cast<int>(class_names.size()) == num_classes,
       "data.classes must list net.num_classes names");
  need(head_hidden >= 1, "net.head_hidden must be >= 1");
  need(offset_radius >= 0, "targets.offset_radius must be >= 0");
  need(batch_size >= 1, "train.batch_size must be >= 1");
  need(epochs >= 0 && max_steps >= 0 && checkpoint_every >= 0,
       "train counters must be non-negative");
  need(max_objects >= 1, "infer.max_objects must be >= 1");
  need(lr_max >= 0.0 && div_factor > 0.0 && final_div > 0.0, "optimizer rates invalid");
  need(augment.scale_min > 0.0 && augment.scale_max >= augment.scale_min,
       "augment scale range invalid");
  need(augment.gt_samples_per_frame >= 0, "augment.gt_samples must be >= 0");
  int stride = 1;
  for (const auto& b : blocks) stride *= b.stride > 0 ? b.stride : 1;
  const encoder::GridSpec g = grid();
  need(g.nx % stride == 0 && g.ny % stride == 0,
       "grid " + std::to_string(g.nx) + "x" + std::to_string(g.ny) +
           " is not divisible by the total block stride " + std::to_string(stride));
}

TrainConfig parse_config(std::string_view text) {
  std::map<std::string, const Binding*> by_key;
  for (const auto& [key, b] : table()) by_key[key] = &b;
  TrainConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    try {
      it->second->set(c, value);
    } catch (const BadValue& bad) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + key + " expects " +
                        bad.expected + ", got '" + value + "'");
    }
  }
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string format_config(const TrainConfig& config) {
  std::string out;
  for (const auto& [key, b] : table()) out += key + " = " + b.get(config) + "\n";
  return out;
}

std::uint64_t model_digest(const TrainConfig& c) {
  std::ostringstream s;
  s << "keypillar-model v1\n";
  s << "range " << fmt(c.range.back) << " " << fmt(c.range.front) << " " << fmt(c.range.left)
    << " " << fmt(c.range.right) << " " << fmt(c.range.z_min) << " " << fmt(c.range.z_max)
    << "\npillar " << fmt(c.pillar_size) << "\nencoder " << c.max_points << " "
    << c.pfn_channels << "\nnet " << c.network_spec().describe() << "\nclasses";
  for (const auto& n : c.class_names) s << " " << n;
  s << "\n";
  return net::fnv1a64(s.str());
}

}  // namespace keypillar::pipeline
