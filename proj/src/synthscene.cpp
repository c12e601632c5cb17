// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/synthscene.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "scenefuse/container.hpp"
#include "scenefuse/error.hpp"

namespace scenefuse {

const std::vector<ObjectClass>& object_classes() {
  static const std::vector<ObjectClass> classes{
      {"car", {4.0, 2.0, 1.6}, {0.85, 0.15, 0.15}, 0.8},
      {"pedestrian", {0.6, 0.6, 1.7}, {0.15, 0.75, 0.2}, 0.5},
      {"barrier", {2.0, 0.4, 1.0}, {0.95, 0.75, 0.1}, 0.9},
  };
  return classes;
}

void SceneSpec::validate() const {
  if (min_boxes < 0 || max_boxes < min_boxes) throw ConfigError("scene spec: need 0 <= min_boxes <= max_boxes");
  if (!(half_extent > 0.0)) throw ConfigError("scene spec: half_extent must be positive");
  if (!(ground_density > 0.0) || !(surface_density > 0.0)) throw ConfigError("scene spec: densities must be positive");
  if (num_cameras < 1) throw ConfigError("scene spec: need at least one camera");
  if (image_width < 4 || image_height < 4) throw ConfigError("scene spec: images must be at least 4x4");
  if (!(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0)) throw ConfigError("scene spec: fov out of range");
  if (point_jitter < 0.0 || calib_jitter < 0.0 || size_jitter < 0.0 || size_jitter >= 1.0) {
    throw ConfigError("scene spec: noise levels must be non-negative (size_jitter < 1)");
  }
  if (!(yaw_range > 0.0 && yaw_range <= std::numbers::pi)) throw ConfigError("scene spec: yaw_range in (0, pi]");
  double total = 0.0;
  for (double w : class_mix) {
    if (w < 0.0) throw ConfigError("scene spec: negative class weight");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("scene spec: class mix sums to zero");
}

bool Scene::operator==(const Scene& o) const {
  if (!(spec == o.spec) || cloud.points != o.cloud.points || cloud.intensity != o.cloud.intensity ||
      images != o.images || gt != o.gt || calibs.size() != o.calibs.size()) {
    return false;
  }
  for (std::size_t i = 0; i < calibs.size(); ++i) {
    const CameraCalibration &a = calibs[i], &b = o.calibs[i];
    if (a.intrinsic != b.intrinsic || a.rotation != b.rotation || a.translation != b.translation ||
        a.width != b.width || a.height != b.height) {
      return false;
    }
  }
  return true;
}

namespace {

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// Float-rounded yaw that stays inside [-pi, pi).
double f32_yaw(double yaw) {
  float f = static_cast<float>(yaw);
  while (static_cast<double>(f) >= std::numbers::pi) f = std::nextafter(f, 0.0f);
  while (static_cast<double>(f) < -std::numbers::pi) f = std::nextafter(f, 0.0f);
  return f;
}

Eigen::Vector2d rotate(const Eigen::Vector2d& v, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

// Separating-axis test on two convex quads.
bool quads_overlap(const std::array<Eigen::Vector2d, 4>& a, const std::array<Eigen::Vector2d, 4>& b) {
  for (const auto* poly : {&a, &b}) {
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector2d e = (*poly)[static_cast<std::size_t>((i + 1) % 4)] - (*poly)[static_cast<std::size_t>(i)];
      const Eigen::Vector2d n(-e.y(), e.x());
      double amin = std::numeric_limits<double>::infinity(), amax = -amin, bmin = amin, bmax = -amin;
      for (const auto& p : a) {
        amin = std::min(amin, n.dot(p));
        amax = std::max(amax, n.dot(p));
      }
      for (const auto& p : b) {
        bmin = std::min(bmin, n.dot(p));
        bmax = std::max(bmax, n.dot(p));
      }
      if (amax < bmin || bmax < amin) return false;
    }
  }
  return true;
}

Box3D grown(const Box3D& b, double margin) {
  Box3D g = b;
  g.size += Eigen::Vector3d::Constant(2.0 * margin);
  return g;
}

}  // namespace

std::array<Eigen::Vector2d, 4> bev_corners(const Box3D& box) {
  const double hl = box.size.x() / 2.0, hw = box.size.y() / 2.0;
  const Eigen::Vector2d c = box.center.head<2>();
  return {c + rotate({hl, hw}, box.yaw), c + rotate({-hl, hw}, box.yaw), c + rotate({-hl, -hw}, box.yaw),
          c + rotate({hl, -hw}, box.yaw)};
}

bool point_in_box(const Eigen::Vector3d& p, const Box3D& box, double margin) {
  const Eigen::Vector2d local = rotate(p.head<2>() - box.center.head<2>(), -box.yaw);
  return std::abs(local.x()) <= box.size.x() / 2.0 + margin && std::abs(local.y()) <= box.size.y() / 2.0 + margin &&
         std::abs(p.z() - box.center.z()) <= box.size.z() / 2.0 + margin;
}

std::vector<CameraCalibration> camera_ring(const SceneSpec& spec) {
  std::vector<CameraCalibration> calibs;
  const double fx = (spec.image_width / 2.0) / std::tan(spec.horizontal_fov_deg * std::numbers::pi / 360.0);
  for (int i = 0; i < spec.num_cameras; ++i) {
    const double yaw = 2.0 * std::numbers::pi * i / spec.num_cameras;
    const Eigen::Vector3d forward(std::cos(yaw), std::sin(yaw), 0.0);
    const Eigen::Vector3d down(0.0, 0.0, -1.0);
    const Eigen::Vector3d right = down.cross(forward);
    CameraCalibration c;
    c.rotation.row(0) = right.transpose();
    c.rotation.row(1) = down.transpose();
    c.rotation.row(2) = forward.transpose();
    c.translation = -c.rotation * Eigen::Vector3d(0.0, 0.0, spec.camera_height);
    c.intrinsic << fx, 0.0, spec.image_width / 2.0, 0.0, fx, spec.image_height / 2.0, 0.0, 0.0, 1.0;
    c.width = spec.image_width;
    c.height = spec.image_height;
    calibs.push_back(c);
  }
  return calibs;
}

RenderResult render_view(const std::vector<Box3D>& boxes, const CameraCalibration& calib) {
  const int w = calib.width, h = calib.height;
  RenderResult r{Tensor({h, w, 3}), std::vector<int>(static_cast<std::size_t>(w) * h, -2)};
  const Eigen::Matrix3d k_inv = calib.intrinsic.inverse();
  const Eigen::Vector3d origin = -calib.rotation.transpose() * calib.translation;
  const auto& classes = object_classes();
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const Eigen::Vector3d dir = calib.rotation.transpose() * (k_inv * Eigen::Vector3d(px + 0.5, py + 0.5, 1.0));
      double best = std::numeric_limits<double>::infinity();
      int id = -2;
      std::array<double, 3> color{0.55, 0.7, 0.9};
      if (dir.z() < 0.0) {
        best = -origin.z() / dir.z();
        const Eigen::Vector3d hit = origin + best * dir;
        const bool dark = (static_cast<long>(std::floor(hit.x() / 2.0)) + static_cast<long>(std::floor(hit.y() / 2.0))) & 1;
        const double g = dark ? 0.3 : 0.45;
        color = {g, g, g};
        id = -1;
      }
      for (std::size_t b = 0; b < boxes.size(); ++b) {
        const Box3D& box = boxes[b];
        const Eigen::Vector2d o2 = rotate(origin.head<2>() - box.center.head<2>(), -box.yaw);
        const Eigen::Vector2d d2 = rotate(dir.head<2>(), -box.yaw);
        const double o[3] = {o2.x(), o2.y(), origin.z() - box.center.z()};
        const double d[3] = {d2.x(), d2.y(), dir.z()};
        const double half[3] = {box.size.x() / 2.0, box.size.y() / 2.0, box.size.z() / 2.0};
        double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
        int axis = -1;
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
          if (std::abs(d[a]) < 1e-12) {
            if (std::abs(o[a]) > half[a]) miss = true;
            continue;
          }
          double ta = (-half[a] - o[a]) / d[a], tb = (half[a] - o[a]) / d[a];
          if (ta > tb) std::swap(ta, tb);
          if (ta > t0) {
            t0 = ta;
            axis = a;
          }
          t1 = std::min(t1, tb);
          if (t0 > t1) miss = true;
        }
        if (miss || axis < 0 || t0 >= best) continue;
        best = t0;
        id = static_cast<int>(b);
        const double shade = axis == 2 ? 1.0 : (axis == 0 ? 0.85 : 0.7);
        const auto& base = classes[static_cast<std::size_t>(box.class_id)].color;
        color = {base[0] * shade, base[1] * shade, base[2] * shade};
      }
      for (int ch = 0; ch < 3; ++ch) r.image.at(py, px, ch) = f32(color[static_cast<std::size_t>(ch)]);
      r.ids[static_cast<std::size_t>(py) * w + px] = id;
    }
  }
  return r;
}

Scene generate(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto& classes = object_classes();
  Scene s;
  s.spec = spec;

  const int num_boxes = std::uniform_int_distribution<int>(spec.min_boxes, spec.max_boxes)(rng);
  std::discrete_distribution<int> pick_class(spec.class_mix.begin(), spec.class_mix.end());
  const double r = spec.half_extent;
  int attempts = 0;
  while (static_cast<int>(s.gt.size()) < num_boxes) {
    if (++attempts > 1000) {
      throw SceneGenerationError("could not place " + std::to_string(num_boxes) +
                                 " non-overlapping boxes in 1000 attempts; lower num_boxes or enlarge the area");
    }
    Box3D b;
    b.class_id = pick_class(rng);
    const Eigen::Vector3d base = classes[static_cast<std::size_t>(b.class_id)].size;
    for (int a = 0; a < 3; ++a) b.size[a] = f32(base[a] * (1.0 + spec.size_jitter * (2.0 * unit(rng) - 1.0)));
    b.center.x() = f32(-r + 2.0 * r * unit(rng));
    b.center.y() = f32(-r + 2.0 * r * unit(rng));
    b.center.z() = f32(b.size.z() / 2.0);
    b.yaw = f32_yaw(-spec.yaw_range + 2.0 * spec.yaw_range * unit(rng));
    b.score = 1.0;
    const auto corners = bev_corners(b);
    bool ok = b.center.head<2>().norm() > 3.0 + b.size.head<2>().norm() / 2.0;
    for (const auto& c : corners) ok = ok && std::abs(c.x()) < r - 0.6 && std::abs(c.y()) < r - 0.6;
    for (const Box3D& other : s.gt) ok = ok && !quads_overlap(bev_corners(grown(b, 0.25)), bev_corners(grown(other, 0.25)));
    if (ok) s.gt.push_back(b);
  }

  auto jitter = [&] { return spec.point_jitter * gauss(rng); };
  // Box surfaces: four sides and the top.
  for (const Box3D& b : s.gt) {
    const double l = b.size.x(), w = b.size.y(), h = b.size.z();
    const double inten = classes[static_cast<std::size_t>(b.class_id)].intensity;
    struct Face {
      int axis;
      double sign;
      double area;
    };
    const Face faces[5] = {{0, 1.0, w * h}, {0, -1.0, w * h}, {1, 1.0, l * h}, {1, -1.0, l * h}, {2, 1.0, l * w}};
    for (const Face& f : faces) {
      const int n = std::max(2, static_cast<int>(std::lround(f.area * spec.surface_density)));
      for (int i = 0; i < n; ++i) {
        Eigen::Vector3d local((unit(rng) - 0.5) * l, (unit(rng) - 0.5) * w, (unit(rng) - 0.5) * h);
        local[f.axis] = f.sign * b.size[f.axis] / 2.0;
        const Eigen::Vector2d xy = b.center.head<2>() + rotate(local.head<2>(), b.yaw);
        const Eigen::Vector3d p(f32(xy.x() + jitter()), f32(xy.y() + jitter()), f32(b.center.z() + local.z() + jitter()));
        s.cloud.points.push_back(p);
        s.cloud.intensity.push_back(f32(std::clamp(inten + 0.1 * (unit(rng) - 0.5), 0.0, 1.0)));
      }
    }
  }
  const int ground = static_cast<int>(std::lround(spec.ground_density * 4.0 * r * r));
  for (int i = 0; i < ground; ++i) {
    const Eigen::Vector3d p(-r + 2.0 * r * unit(rng), -r + 2.0 * r * unit(rng), 0.0);
    const double z = jitter();
    const double inten = 0.05 + 0.25 * unit(rng);
    bool covered = false;
    for (const Box3D& b : s.gt) covered = covered || point_in_box(p, b, 0.0);
    if (covered) continue;
    s.cloud.points.emplace_back(f32(p.x()), f32(p.y()), f32(z));
    s.cloud.intensity.push_back(f32(inten));
  }

  const std::vector<CameraCalibration> truth = camera_ring(spec);
  for (const CameraCalibration& cam : truth) {
    s.images.push_back(render_view(s.gt, cam).image);
    CameraCalibration stored = cam;
    if (spec.calib_jitter > 0.0) {
      const Eigen::Vector3d axis_angle(spec.calib_jitter * gauss(rng), spec.calib_jitter * gauss(rng),
                                       spec.calib_jitter * gauss(rng));
      const double angle = axis_angle.norm();
      if (angle > 0.0) {
        const Eigen::Vector3d center = -cam.rotation.transpose() * cam.translation;
        stored.rotation = Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix() * cam.rotation;
        stored.translation = -stored.rotation * center;
      }
    }
    s.calibs.push_back(stored);
  }
  return s;
}

namespace {

std::vector<double> mat_values(const Eigen::Matrix3d& m) {
  std::vector<double> v;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v.push_back(m(i, j));
  return v;
}

Eigen::Matrix3d values_mat(const std::vector<double>& v, const std::string& key) {
  if (v.size() != 9) throw FormatError("'" + key + "' needs 9 numbers");
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = v[static_cast<std::size_t>(3 * i + j)];
  return m;
}

int parse_int(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size() || v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      throw std::invalid_argument(key);
    }
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw FormatError("'" + key + "' is not an integer: '" + s + "'");
  }
}

}  // namespace

void write_scene(const Scene& scene, const std::filesystem::path& dir) {
  Bundle b;
  const SceneSpec& sp = scene.spec;
  b.meta["spec.seed"] = std::to_string(sp.seed);
  b.meta["spec.min_boxes"] = std::to_string(sp.min_boxes);
  b.meta["spec.max_boxes"] = std::to_string(sp.max_boxes);
  b.meta["spec.class_mix"] = format_doubles({sp.class_mix.begin(), sp.class_mix.end()});
  b.meta["spec.half_extent"] = format_double(sp.half_extent);
  b.meta["spec.ground_density"] = format_double(sp.ground_density);
  b.meta["spec.surface_density"] = format_double(sp.surface_density);
  b.meta["spec.num_cameras"] = std::to_string(sp.num_cameras);
  b.meta["spec.image_width"] = std::to_string(sp.image_width);
  b.meta["spec.image_height"] = std::to_string(sp.image_height);
  b.meta["spec.horizontal_fov_deg"] = format_double(sp.horizontal_fov_deg);
  b.meta["spec.camera_height"] = format_double(sp.camera_height);
  b.meta["spec.point_jitter"] = format_double(sp.point_jitter);
  b.meta["spec.calib_jitter"] = format_double(sp.calib_jitter);
  b.meta["spec.size_jitter"] = format_double(sp.size_jitter);
  b.meta["spec.yaw_range"] = format_double(sp.yaw_range);
  const auto& classes = object_classes();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    b.meta["class." + std::to_string(c)] =
        classes[c].name + " " + format_doubles({classes[c].size.x(), classes[c].size.y(), classes[c].size.z()});
  }
  b.meta["num_points"] = std::to_string(scene.cloud.size());
  b.meta["num_boxes"] = std::to_string(scene.gt.size());
  b.meta["num_cameras"] = std::to_string(scene.calibs.size());
  for (std::size_t i = 0; i < scene.calibs.size(); ++i) {
    const CameraCalibration& c = scene.calibs[i];
    const std::string p = "calib." + std::to_string(i) + ".";
    b.meta[p + "intrinsic"] = format_doubles(mat_values(c.intrinsic));
    b.meta[p + "rotation"] = format_doubles(mat_values(c.rotation));
    b.meta[p + "translation"] = format_doubles({c.translation.x(), c.translation.y(), c.translation.z()});
    b.meta[p + "size"] = std::to_string(c.width) + " " + std::to_string(c.height);
  }
  if (scene.images.size() != scene.calibs.size()) throw FormatError("scene: one image per camera required");

  ArrayData pts{Dtype::f32, static_cast<int>(scene.cloud.size()), 4, {}};
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    const auto& p = scene.cloud.points[i];
    pts.values.insert(pts.values.end(), {p.x(), p.y(), p.z(), scene.cloud.intensity[i]});
  }
  b.arrays["points"] = std::move(pts);
  ArrayData boxes{Dtype::f32, static_cast<int>(scene.gt.size()), 9, {}};
  for (const Box3D& g : scene.gt) {
    boxes.values.insert(boxes.values.end(), {g.center.x(), g.center.y(), g.center.z(), g.size.x(), g.size.y(),
                                             g.size.z(), g.yaw, static_cast<double>(g.class_id), g.score});
  }
  b.arrays["boxes"] = std::move(boxes);
  for (std::size_t i = 0; i < scene.images.size(); ++i) {
    const Tensor& img = scene.images[i];
    if (img.rank() != 3 || img.dim(2) != 3 || img.dim(0) != scene.calibs[i].height ||
        img.dim(1) != scene.calibs[i].width) {
      throw FormatError("scene: image " + std::to_string(i) + " does not match its calibration");
    }
    b.arrays["image" + std::to_string(i)] = ArrayData{Dtype::f32, img.dim(0) * img.dim(1), 3, img.to_vector()};
  }
  write_bundle(b, dir, "scenefuse-scene");
}

Scene read_scene(const std::filesystem::path& dir) {
  const Bundle b = read_bundle(dir, "scenefuse-scene");
  Scene s;
  SceneSpec& sp = s.spec;
  try {
    sp.seed = std::stoull(b.get("spec.seed"));
  } catch (const std::invalid_argument&) {
    throw FormatError("bad spec.seed");
  } catch (const std::out_of_range&) {
    throw FormatError("bad spec.seed");
  }
  sp.min_boxes = parse_int(b.get("spec.min_boxes"), "spec.min_boxes");
  sp.max_boxes = parse_int(b.get("spec.max_boxes"), "spec.max_boxes");
  const auto mix = parse_doubles(b.get("spec.class_mix"));
  if (mix.size() != 3) throw FormatError("spec.class_mix needs 3 numbers");
  std::copy(mix.begin(), mix.end(), sp.class_mix.begin());
  sp.half_extent = parse_double(b.get("spec.half_extent"));
  sp.ground_density = parse_double(b.get("spec.ground_density"));
  sp.surface_density = parse_double(b.get("spec.surface_density"));
  sp.num_cameras = parse_int(b.get("spec.num_cameras"), "spec.num_cameras");
  sp.image_width = parse_int(b.get("spec.image_width"), "spec.image_width");
  sp.image_height = parse_int(b.get("spec.image_height"), "spec.image_height");
  sp.horizontal_fov_deg = parse_double(b.get("spec.horizontal_fov_deg"));
  sp.camera_height = parse_double(b.get("spec.camera_height"));
  sp.point_jitter = parse_double(b.get("spec.point_jitter"));
  sp.calib_jitter = parse_double(b.get("spec.calib_jitter"));
  sp.size_jitter = parse_double(b.get("spec.size_jitter"));
  sp.yaw_range = parse_double(b.get("spec.yaw_range"));

  const ArrayData& pts = b.array("points");
  if (pts.cols != 4) throw ShapeMismatchError("points.bin: expected 4 columns, found " + std::to_string(pts.cols));
  if (parse_int(b.get("num_points"), "num_points") != pts.rows) {
    throw ShapeMismatchError("points.bin: manifest counts " + b.get("num_points") + " points, array holds " +
                             std::to_string(pts.rows));
  }
  for (int i = 0; i < pts.rows; ++i) {
    const double* v = pts.values.data() + static_cast<std::size_t>(i) * 4;
    s.cloud.points.emplace_back(v[0], v[1], v[2]);
    s.cloud.intensity.push_back(v[3]);
  }
  const ArrayData& boxes = b.array("boxes");
  if (boxes.cols != 9) throw ShapeMismatchError("boxes.bin: expected 9 columns, found " + std::to_string(boxes.cols));
  if (parse_int(b.get("num_boxes"), "num_boxes") != boxes.rows) {
    throw ShapeMismatchError("boxes.bin: manifest counts " + b.get("num_boxes") + " boxes, array holds " +
                             std::to_string(boxes.rows));
  }
  for (int i = 0; i < boxes.rows; ++i) {
    const double* v = boxes.values.data() + static_cast<std::size_t>(i) * 9;
    Box3D g;
    g.center = {v[0], v[1], v[2]};
    g.size = {v[3], v[4], v[5]};
    g.yaw = v[6];
    g.class_id = static_cast<int>(v[7]);
    g.score = v[8];
    if (g.class_id != v[7] || g.class_id < 0 || g.class_id >= kNumClasses) throw FormatError("boxes.bin: bad class id");
    s.gt.push_back(g);
  }
  const int cams = parse_int(b.get("num_cameras"), "num_cameras");
  if (cams < 0) throw FormatError("num_cameras must be non-negative");
  for (int i = 0; i < cams; ++i) {
    const std::string p = "calib." + std::to_string(i) + ".";
    CameraCalibration c;
    c.intrinsic = values_mat(parse_doubles(b.get(p + "intrinsic")), p + "intrinsic");
    c.rotation = values_mat(parse_doubles(b.get(p + "rotation")), p + "rotation");
    const auto t = parse_doubles(b.get(p + "translation"));
    if (t.size() != 3) throw FormatError("'" + p + "translation' needs 3 numbers");
    c.translation = {t[0], t[1], t[2]};
    std::istringstream size(b.get(p + "size"));
    if (!(size >> c.width >> c.height) || c.width < 1 || c.height < 1) throw FormatError("bad '" + p + "size'");
    s.calibs.push_back(c);
    const ArrayData& img = b.array("image" + std::to_string(i));
    if (img.cols != 3 || img.rows != c.width * c.height) {
      throw ShapeMismatchError("image" + std::to_string(i) + ".bin: expected " + std::to_string(c.width * c.height) +
                               "x3, found " + std::to_string(img.rows) + "x" + std::to_string(img.cols));
    }
    s.images.emplace_back(Shape{c.height, c.width, 3}, img.values);
  }
  return s;
}

std::vector<std::string> DatasetIndex::scenes(const std::string& split) const {
  std::vector<std::string> out;
  for (const auto& [name, sp] : entries)
    if (sp == split) out.push_back(name);
  return out;
}

DatasetIndex generate_dataset(const SceneSpec& base, int num_scenes, int num_val, const std::filesystem::path& root) {
  if (num_scenes < 0 || num_val < 0 || num_val > num_scenes) throw ConfigError("dataset: bad scene counts");
  std::filesystem::create_directories(root);
  DatasetIndex index;
  std::ostringstream text;
  for (int i = 0; i < num_scenes; ++i) {
    SceneSpec spec = base;
    spec.seed = base.seed ^ static_cast<std::uint64_t>(i);
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04d", i);
    write_scene(generate(spec), root / name);
    const std::string split = i >= num_scenes - num_val ? "val" : "train";
    index.entries.emplace_back(name, split);
    text << name << " = " << split << "\n";
  }
  std::ofstream out(root / "index.txt", std::ios::trunc);
  out << text.str();
  if (!out) throw FormatError("cannot write '" + (root / "index.txt").string() + "'");
  return index;
}

DatasetIndex read_index(const std::filesystem::path& root) {
  std::ifstream in(root / "index.txt");
  if (!in) throw FormatError("no dataset index at '" + (root / "index.txt").string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  DatasetIndex index;
  index.entries = parse_key_values(ss.str(), (root / "index.txt").string());
  return index;
}

DatasetStats scene_stats(const std::vector<const Scene*>& scenes, int bucket, int buckets) {
  DatasetStats st;
  st.points_per_box_histogram.assign(static_cast<std::size_t>(buckets), 0);
  for (const Scene* s : scenes) {
    std::vector<int> per_box(s->gt.size(), 0);
    for (const Eigen::Vector3d& p : s->cloud.points) {
      bool fg = false;
      for (std::size_t b = 0; b < s->gt.size(); ++b) {
        if (point_in_box(p, s->gt[b], 0.01)) {
          ++per_box[b];
          fg = true;
          break;
        }
      }
      (fg ? st.foreground_points : st.background_points)++;
    }
    for (std::size_t b = 0; b < s->gt.size(); ++b) {
      ++st.class_counts[static_cast<std::size_t>(s->gt[b].class_id)];
      const int k = std::min(buckets - 1, per_box[b] / bucket);
      ++st.points_per_box_histogram[static_cast<std::size_t>(k)];
    }
  }
  return st;
}

std::string format_stats(const DatasetStats& st) {
  std::ostringstream o;
  const auto& classes = object_classes();
  for (std::size_t c = 0; c < classes.size(); ++c) o << "class." << classes[c].name << " = " << st.class_counts[c] << "\n";
  o << "points.foreground = " << st.foreground_points << "\n";
  o << "points.background = " << st.background_points << "\n";
  o << "points_per_box_histogram =";
  for (int v : st.points_per_box_histogram) o << " " << v;
  o << "\n";
  return o.str();
}

}  // namespace scenefuse
