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

#include "keypillar/data_io.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "keypillar/errors.hpp"

namespace keypillar::data {
namespace {

using Mat3 = Eigen::Matrix3d;

constexpr double kSingularDet = 1e-9;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Mat3 rotation_of(const std::array<double, 12>& tr) {
  Mat3 m;
  m << tr[0], tr[1], tr[2], tr[4], tr[5], tr[6], tr[8], tr[9], tr[10];
  return m;
}

Mat3 mat3_of(const std::array<double, 9>& r) {
  Mat3 m;
  m << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
  return m;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

bool parse_double(const std::string& tok, double& out) {
  std::istringstream in(tok);
  in >> out;
  return in && in.peek() == std::char_traits<char>::eof() && std::isfinite(out);
}

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  // Avoid "-0.00".
  if (std::string(buf) == "-0.00") return "0.00";
  return buf;
}

std::array<double, 4> projected_bbox(const Box3D& box, const Calibration& calib) {
  const geometry::BevPolygon poly = geometry::box_corners_bev(box);
  double u0 = 1e300, v0 = 1e300, u1 = -1e300, v1 = -1e300;
  bool any = false;
  for (const geometry::Point2& c : poly.vertices) {
    for (double z : {box.z_bottom(), box.z_top()}) {
      const Vec3 rect = calib.velo_to_rect({c.x, c.y, z});
      if (rect.z <= 0.1) continue;
      const auto uv = calib.project(rect);
      u0 = std::min(u0, uv[0]);
      u1 = std::max(u1, uv[0]);
      v0 = std::min(v0, uv[1]);
      v1 = std::max(v1, uv[1]);
      any = true;
    }
  }
  if (!any) return {0.0, 0.0, 0.0, 0.0};
  const double W = kImageWidth - 1, H = kImageHeight - 1;
  return {std::clamp(u0, 0.0, W), std::clamp(v0, 0.0, H), std::clamp(u1, 0.0, W),
          std::clamp(v1, 0.0, H)};
}

}  // namespace

// ---------------------------------------------------------------- points

PointCloud read_velodyne_bin(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 16 != 0) {
    throw FormatError("point cloud length " + std::to_string(bytes.size()) +
                          " is not a multiple of 16; truncated record",
                      bytes.size() - bytes.size() % 16);
  }
  PointCloud cloud;
  cloud.points.reserve(bytes.size() / 16);
  const auto f32 = [&](std::size_t off) {
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(bytes[off + i]) << (8 * i);
    return static_cast<double>(std::bit_cast<float>(u));
  };
  for (std::size_t off = 0; off < bytes.size(); off += 16) {
    cloud.points.push_back({f32(off), f32(off + 4), f32(off + 8), f32(off + 12)});
  }
  return cloud;
}

std::vector<std::uint8_t> write_velodyne_bin(const PointCloud& cloud) {
  std::vector<std::uint8_t> out;
  out.reserve(cloud.points.size() * 16);
  const auto put = [&](double v) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  };
  for (const Point& p : cloud.points) {
    put(p.x);
    put(p.y);
    put(p.z);
    put(p.r);
  }
  return out;
}

PointCloud load_velodyne(const std::filesystem::path& path) {
  return read_velodyne_bin(read_file(path));
}

void save_velodyne(const std::filesystem::path& path, const PointCloud& cloud) {
  const auto bytes = write_velodyne_bin(cloud);
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// ----------------------------------------------------------- calibration

Vec3 Calibration::velo_to_rect(const Vec3& p) const {
  const auto& t = tr_velo_to_cam;
  const double cx = t[0] * p.x + t[1] * p.y + t[2] * p.z + t[3];
  const double cy = t[4] * p.x + t[5] * p.y + t[6] * p.z + t[7];
  const double cz = t[8] * p.x + t[9] * p.y + t[10] * p.z + t[11];
  const auto& r = r0_rect;
  return {r[0] * cx + r[1] * cy + r[2] * cz, r[3] * cx + r[4] * cy + r[5] * cz,
          r[6] * cx + r[7] * cy + r[8] * cz};
}

Vec3 Calibration::rect_to_velo(const Vec3& p) const {
  const Eigen::Vector3d cam = mat3_of(r0_rect).inverse() * Eigen::Vector3d(p.x, p.y, p.z);
  const Eigen::Vector3d t(tr_velo_to_cam[3], tr_velo_to_cam[7], tr_velo_to_cam[11]);
  const Eigen::Vector3d v = rotation_of(tr_velo_to_cam).inverse() * (cam - t);
  return {v.x(), v.y(), v.z()};
}

std::array<double, 2> Calibration::project(const Vec3& rect) const {
  const auto& P = p2;
  const double u = P[0] * rect.x + P[1] * rect.y + P[2] * rect.z + P[3];
  const double v = P[4] * rect.x + P[5] * rect.y + P[6] * rect.z + P[7];
  const double w = P[8] * rect.x + P[9] * rect.y + P[10] * rect.z + P[11];
  return {u / w, v / w};
}

Calibration parse_calibration(std::string_view text) {
  Calibration c;
  bool have_p2 = false, have_r0 = false, have_tr = false;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    std::istringstream in(line.substr(colon + 1));
    std::vector<double> vals;
    std::string tok;
    while (in >> tok) {
      double v;
      if (!parse_double(tok, v)) throw FormatError("bad number in calibration key " + key, ln + 1);
      vals.push_back(v);
    }
    const auto need = [&](std::size_t n) {
      if (vals.size() != n) {
        throw FormatError("calibration key " + key + " expects " + std::to_string(n) +
                              " values, got " + std::to_string(vals.size()),
                          ln + 1);
      }
    };
    if (key == "P2") {
      need(12);
      std::copy(vals.begin(), vals.end(), c.p2.begin());
      have_p2 = true;
    } else if (key == "R0_rect") {
      need(9);
      std::copy(vals.begin(), vals.end(), c.r0_rect.begin());
      have_r0 = true;
    } else if (key == "Tr_velo_to_cam") {
      need(12);
      std::copy(vals.begin(), vals.end(), c.tr_velo_to_cam.begin());
      have_tr = true;
    }
  }
  if (!have_p2 || !have_r0 || !have_tr) {
    throw FormatError("calibration must define P2, R0_rect and Tr_velo_to_cam", lines.size());
  }
  if (std::abs(mat3_of(c.r0_rect).determinant()) < kSingularDet ||
      std::abs(rotation_of(c.tr_velo_to_cam).determinant()) < kSingularDet) {
    throw Error("singular calibration matrix");
  }
  return c;
}

std::string format_calibration(const Calibration& c) {
  std::ostringstream out;
  out.precision(17);
  const auto row = [&](const char* key, std::span<const double> v) {
    out << key << ":";
    for (double x : v) out << " " << x;
    out << "\n";
  };
  row("P2", c.p2);
  row("R0_rect", c.r0_rect);
  row("Tr_velo_to_cam", c.tr_velo_to_cam);
  return out.str();
}

Calibration synthetic_calibration() {
  Calibration c;
  c.p2 = {721.5377, 0.0, 609.5593, 0.0, 0.0, 721.5377, 172.854, 0.0, 0.0, 0.0, 1.0, 0.0};
  c.r0_rect = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  // cam x = -velo y, cam y = -velo z, cam z = velo x, camera 0.27 m ahead
  // and 0.08 m above the sensor.
  c.tr_velo_to_cam = {0, -1, 0, 0, 0, 0, -1, 0.08, 1, 0, 0, -0.27};
  return c;
}

PointCloud fov_crop(const PointCloud& cloud, const Calibration& calib,
                    int image_width, int image_height) {
  PointCloud out;
  for (const Point& p : cloud.points) {
    const Vec3 rect = calib.velo_to_rect({p.x, p.y, p.z});
    if (!(rect.z > 0.0)) continue;
    const auto uv = calib.project(rect);
    if (uv[0] >= 0.0 && uv[0] < image_width && uv[1] >= 0.0 && uv[1] < image_height) {
      out.points.push_back(p);
    }
  }
  return out;
}

// --------------------------------------------------------------- labels

LabelSet parse_kitti_labels(std::string_view text, const Calibration& calib,
                            std::span<const std::string> class_names) {
  LabelSet set;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    std::istringstream in(lines[ln]);
    std::vector<std::string> tok;
    std::string t;
    while (in >> t) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 15 && tok.size() != 16) {
      throw FormatError("label line has " + std::to_string(tok.size()) +
                            " fields, expected 15 or 16",
                        ln + 1);
    }
    std::array<double, 15> v{};
    for (std::size_t i = 1; i < tok.size(); ++i) {
      if (!parse_double(tok[i], v[i - 1])) {
        throw FormatError("label field " + std::to_string(i + 1) + " is not a number", ln + 1);
      }
    }
    if (tok[0] == "DontCare") {
      set.dont_care.push_back({{v[3], v[4], v[5], v[6]}});
      continue;
    }
    KittiObject obj;
    obj.type = tok[0];
    obj.truncation = v[0];
    obj.occlusion = static_cast<int>(v[1]);
    obj.alpha = v[2];
    obj.bbox = {v[3], v[4], v[5], v[6]};
    const double h = v[7], w = v[8], l = v[9];
    const Vec3 bottom = calib.rect_to_velo({v[10], v[11], v[12]});
    const double ry = v[13];
    try {
      obj.box = Box3D(bottom.x, bottom.y, bottom.z + 0.5 * h, w, l, h, -ry - geometry::kPi / 2);
    } catch (const RangeError& e) {
      throw FormatError(std::string("invalid box: ") + e.what(), ln + 1);
    }
    if (tok.size() == 16) {
      obj.score = v[14];
      obj.has_score = true;
    }
    const auto it = std::find(class_names.begin(), class_names.end(), obj.type);
    obj.class_id = it == class_names.end() ? -1 : static_cast<int>(it - class_names.begin());
    set.objects.push_back(std::move(obj));
  }
  return set;
}

std::string format_kitti_object(const KittiObject& obj, const Calibration& calib) {
  const Box3D& b = obj.box;
  const Vec3 bottom = calib.velo_to_rect({b.x, b.y, b.z - 0.5 * b.h});
  const double ry = geometry::canonical_angle(-b.theta - geometry::kPi / 2);
  std::ostringstream out;
  out << obj.type << " " << fmt2(obj.truncation) << " " << obj.occlusion << " "
      << fmt2(obj.alpha);
  for (double c : obj.bbox) out << " " << fmt2(c);
  // Two decimals cannot hold a smaller positive extent; 0.00 would not parse back.
  const auto extent = [](double v) { return fmt2(std::max(v, 0.01)); };
  out << " " << extent(b.h) << " " << extent(b.w) << " " << extent(b.l) << " " << fmt2(bottom.x)
      << " " << fmt2(bottom.y) << " " << fmt2(bottom.z) << " " << fmt2(ry);
  if (obj.has_score) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", obj.score);
    out << " " << buf;
  }
  return out.str();
}

std::string format_kitti_labels(const LabelSet& labels, const Calibration& calib) {
  std::string text;
  for (const KittiObject& obj : labels.objects) text += format_kitti_object(obj, calib) + "\n";
  for (const DontCare& dc : labels.dont_care) {
    text += "DontCare -1 -1 -10";
    for (double c : dc.bbox) text += " " + fmt2(c);
    text += " -1 -1 -1 -1000 -1000 -1000 -10\n";
  }
  return text;
}

KittiObject object_from_detection(const geometry::Detection& det, const Calibration& calib,
                                  std::span<const std::string> class_names) {
  KittiObject obj;
  obj.class_id = det.class_id;
  obj.type = det.class_id >= 0 && det.class_id < static_cast<int>(class_names.size())
                 ? class_names[det.class_id]
                 : "Unknown";
  obj.box = det.box;
  obj.score = det.score;
  obj.has_score = true;
  obj.truncation = 0.0;
  obj.occlusion = 0;
  const Vec3 center = calib.velo_to_rect({det.box.x, det.box.y, det.box.z});
  const double ry = geometry::canonical_angle(-det.box.theta - geometry::kPi / 2);
  obj.alpha = geometry::canonical_angle(ry - std::atan2(center.x, center.z));
  obj.bbox = projected_bbox(det.box, calib);
  return obj;
}

// ---------------------------------------------------------------- frames

std::vector<targets::LabeledBox> Frame::labeled_boxes() const {
  std::vector<targets::LabeledBox> out;
  for (const KittiObject& o : objects) {
    if (o.class_id >= 0) out.push_back({o.box, o.class_id});
  }
  return out;
}

Frame load_frame(const std::filesystem::path& root, const std::string& id,
                 std::span<const std::string> class_names) {
  Frame f;
  f.id = id;
  f.calib = parse_calibration(read_text(root / "calib" / (id + ".txt")));
  f.cloud = load_velodyne(root / "velodyne" / (id + ".bin"));
  const auto label_path = root / "label_2" / (id + ".txt");
  if (std::filesystem::exists(label_path)) {
    LabelSet labels = parse_kitti_labels(read_text(label_path), f.calib, class_names);
    f.objects = std::move(labels.objects);
    f.dont_care = std::move(labels.dont_care);
  }
  return f;
}

void save_frame(const std::filesystem::path& root, const Frame& frame) {
  save_velodyne(root / "velodyne" / (frame.id + ".bin"), frame.cloud);
  write_file(root / "calib" / (frame.id + ".txt"), format_calibration(frame.calib));
  write_file(root / "label_2" / (frame.id + ".txt"),
             format_kitti_labels({frame.objects, frame.dont_care}, frame.calib));
}

std::vector<std::string> read_split(const std::filesystem::path& path) {
  std::vector<std::string> ids;
  for (const std::string& line : split_lines(read_text(path))) {
    std::istringstream in(line);
    std::string id;
    if (in >> id) ids.push_back(id);
  }
  return ids;
}

void write_split(const std::filesystem::path& path, std::span<const std::string> ids) {
  std::string text;
  for (const std::string& id : ids) text += id + "\n";
  write_file(path, text);
}

// ------------------------------------------------------------ database

std::size_t GtDatabase::size() const {
  std::size_t n = 0;
  for (const auto& [cls, list] : entries) n += list.size();
  return n;
}

GtDatabase build_gt_database(std::span<const Frame> frames) {
  GtDatabase db;
  for (const Frame& f : frames) {
    for (const KittiObject& o : f.objects) {
      if (o.class_id < 0) continue;
      GtEntry e;
      e.box = o.box;
      e.class_id = o.class_id;
      e.frame_id = f.id;
      for (const Point& p : f.cloud.points) {
        if (geometry::point_in_box(o.box, p.x, p.y, p.z)) e.points.push_back(p);
      }
      db.entries[o.class_id].push_back(std::move(e));
    }
  }
  return db;
}

// ----------------------------------------------------------- synthetic

namespace {

// Local car frame: u along heading, v across, s height above the bottom.
struct CarShape {
  double w, l, h;
  double step_u() const { return 0.1 * l; }  // start of the lower hood
  double hood_h() const { return 0.6 * h; }
};

void emit_local(const Box3D& box, double u, double v, double s, double r,
                std::vector<Point>& out) {
  const double c = std::cos(box.theta), sn = std::sin(box.theta);
  out.push_back({box.x + c * u - sn * v, box.y + sn * u + c * v, box.z_bottom() + s, r});
}

void emit_car_surface(const Box3D& box, double density, std::mt19937_64& rng,
                      std::vector<Point>& out) {
  const CarShape car{box.w, box.l, box.h};
  constexpr double kInset = 1e-3;
  const double hl = 0.5 * car.l - kInset, hw = 0.5 * car.w - kInset;
  const double top = car.h - kInset;
  std::uniform_real_distribution<double> refl(0.2, 0.9);
  const auto count = [&](double area) {
    return std::max(1, static_cast<int>(std::lround(area * density)));
  };
  const auto uni = [&](double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(rng);
  };
  // Roof over the cabin and the lower hood.
  for (int i = count((car.step_u() + hl) * 2 * hw); i > 0; --i)
    emit_local(box, uni(-hl, car.step_u()), uni(-hw, hw), top, refl(rng), out);
  for (int i = count((hl - car.step_u()) * 2 * hw); i > 0; --i)
    emit_local(box, uni(car.step_u(), hl), uni(-hw, hw), car.hood_h(), refl(rng), out);
  // Sides follow the profile.
  for (double side : {-hw, hw}) {
    for (int i = count(2 * hl * car.h * 0.8); i > 0; --i) {
      const double u = uni(-hl, hl);
      const double smax = u < car.step_u() ? top : car.hood_h();
      emit_local(box, u, side, uni(kInset, smax), refl(rng), out);
    }
  }
  // Rear, windshield step and front faces.
  for (int i = count(2 * hw * car.h); i > 0; --i)
    emit_local(box, -hl, uni(-hw, hw), uni(kInset, top), refl(rng), out);
  for (int i = count(2 * hw * (car.h - car.hood_h())); i > 0; --i)
    emit_local(box, car.step_u(), uni(-hw, hw), uni(car.hood_h(), top), refl(rng), out);
  for (int i = count(2 * hw * car.hood_h()); i > 0; --i)
    emit_local(box, hl, uni(-hw, hw), uni(kInset, car.hood_h()), refl(rng), out);
}

}  // namespace

Frame synth_scene(std::uint64_t seed, int n_boxes, const GridSpec& grid,
                  const SynthOptions& options) {
  std::mt19937_64 rng(seed);
  const auto uni = [&](double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(rng);
  };
  Frame f;
  f.id = "synth_" + std::to_string(seed);
  f.calib = synthetic_calibration();
  std::vector<Box3D> boxes;
  constexpr int kMaxAttempts = 500;
  for (int k = 0; k < n_boxes; ++k) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const double w = uni(1.5, 1.8), l = uni(3.6, 4.6), h = uni(1.4, 1.7);
      const double reach = 0.5 * std::hypot(w, l) + 0.05;
      if (grid.front - grid.back <= 2 * reach || grid.right - grid.left <= 2 * reach) break;
      const double x = uni(grid.back + reach, grid.front - reach);
      const double y = uni(grid.left + reach, grid.right - reach);
      const double theta = uni(-geometry::kPi, geometry::kPi);
      const Box3D cand(x, y, options.ground_z + 0.5 * h, w, l, h, theta);
      const Box3D padded(x, y, cand.z, w + options.min_gap, l + options.min_gap, h, theta);
      const bool clear = std::none_of(boxes.begin(), boxes.end(), [&](const Box3D& b) {
        return geometry::iou_bev(padded, b) > 0.0;
      });
      if (clear) {
        boxes.push_back(cand);
        break;
      }
    }
  }
  for (const Box3D& b : boxes) {
    KittiObject obj;
    obj.type = "Car";
    obj.class_id = 0;
    obj.box = b;
    const geometry::Detection det{b, 1.0, 0};
    const KittiObject projected = object_from_detection(det, f.calib, std::vector<std::string>{"Car"});
    obj.alpha = projected.alpha;
    obj.bbox = projected.bbox;
    f.objects.push_back(obj);
    emit_car_surface(b, options.surface_density, rng, f.cloud.points);
  }
  std::normal_distribution<double> ground_noise(0.0, 0.03);
  for (int i = 0; i < options.clutter_points; ++i) {
    const double x = uni(grid.back, grid.front);
    const double y = uni(grid.left, grid.right);
    const double z = options.ground_z + ground_noise(rng);
    const double r = uni(0.0, 0.3);
    const bool under_car = std::any_of(boxes.begin(), boxes.end(), [&](const Box3D& b) {
      return geometry::point_in_footprint(b, x, y);
    });
    if (!under_car) f.cloud.points.push_back({x, y, z, r});
  }
  return f;
}

}  // namespace keypillar::data
