// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

#include "scenefuse/container.hpp"
#include "scenefuse/error.hpp"
#include "scenefuse/harness.hpp"

namespace scenefuse {

namespace {

using Polygon = std::vector<Eigen::Vector2d>;

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

double polygon_area(const Polygon& p) {
  double a = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) a += cross(p[i], p[(i + 1) % p.size()]);
  return std::abs(a) / 2.0;
}

// Clips `subject` by the counter-clockwise convex polygon `clip`.
Polygon clip_polygon(Polygon subject, const Polygon& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Eigen::Vector2d a = clip[e], b = clip[(e + 1) % clip.size()];
    auto inside = [&](const Eigen::Vector2d& p) { return cross(b - a, p - a) >= 0.0; };
    Polygon out;
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Eigen::Vector2d cur = subject[i], prev = subject[(i + subject.size() - 1) % subject.size()];
      const bool in_cur = inside(cur), in_prev = inside(prev);
      if (in_cur != in_prev) {
        const Eigen::Vector2d d = cur - prev;
        const double denom = cross(b - a, d);
        if (denom != 0.0) out.push_back(prev + d * (cross(b - a, a - prev) / denom));
      }
      if (in_cur) out.push_back(cur);
    }
    subject = std::move(out);
  }
  return subject;
}

bool deterministic_mode() {
  const char* v = std::getenv("ISFUSION_DETERMINISTIC");
  return v != nullptr && std::string(v) == "1";
}

struct RankedBox {
  double score;
  std::string scene;
  const Box3D* box;
};

bool ranked_before(const RankedBox& a, const RankedBox& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.scene != b.scene) return a.scene < b.scene;
  const Box3D &x = *a.box, &y = *b.box;
  return std::tie(x.center.x(), x.center.y(), x.center.z(), x.size.x(), x.size.y(), x.size.z(), x.yaw) <
         std::tie(y.center.x(), y.center.y(), y.center.z(), y.size.x(), y.size.y(), y.size.z(), y.yaw);
}

}  // namespace

double bev_iou(const Box3D& a, const Box3D& b) {
  const auto ca = bev_corners(a), cb = bev_corners(b);
  const Polygon pa(ca.begin(), ca.end()), pb(cb.begin(), cb.end());
  const Polygon inter = clip_polygon(pa, pb);
  const double i = inter.size() >= 3 ? polygon_area(inter) : 0.0;
  const double u = a.size.x() * a.size.y() + b.size.x() * b.size.y() - i;
  return u > 0.0 ? i / u : 0.0;
}

double interpolated_ap(const std::vector<double>& precision, const std::vector<double>& recall) {
  double sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double best = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i)
      if (recall[i] >= r - 1e-12) best = std::max(best, precision[i]);
    sum += best;
  }
  return sum / 101.0;
}

bool EvalReport::operator==(const EvalReport& o) const {
  if (mean_ap != o.mean_ap || metadata != o.metadata) return false;
  for (std::size_t t = 0; t < curves.size(); ++t) {
    if (curves[t].size() != o.curves[t].size()) return false;
    for (std::size_t c = 0; c < curves[t].size(); ++c) {
      const ClassCurve &a = curves[t][c], &b = o.curves[t][c];
      if (a.num_gt != b.num_gt || a.precision != b.precision || a.recall != b.recall || a.scores != b.scores ||
          a.ap != b.ap) {
        return false;
      }
    }
  }
  return true;
}

EvalReport evaluate_detections(const std::vector<SceneDetections>& predictions,
                               const std::vector<SceneDetections>& gt, int num_classes) {
  if (gt.empty()) throw ConfigError("evaluate: the split has no scenes");
  std::map<std::string, const std::vector<Box3D>*> gt_by_scene;
  for (const SceneDetections& g : gt) gt_by_scene[g.scene_id] = &g.boxes;
  EvalReport report;
  for (std::size_t t = 0; t < kIouThresholds.size(); ++t) {
    const double thr = kIouThresholds[t];
    double ap_sum = 0.0;
    int classes_with_gt = 0;
    for (int c = 0; c < num_classes; ++c) {
      ClassCurve curve;
      std::map<std::string, std::vector<char>> used;
      for (const SceneDetections& g : gt) {
        auto& u = used[g.scene_id];
        u.assign(g.boxes.size(), 0);
        for (const Box3D& b : g.boxes) curve.num_gt += b.class_id == c ? 1 : 0;
      }
      std::vector<RankedBox> ranked;
      for (const SceneDetections& p : predictions)
        for (const Box3D& b : p.boxes)
          if (b.class_id == c) ranked.push_back({b.score, p.scene_id, &b});
      std::sort(ranked.begin(), ranked.end(), ranked_before);
      int tp = 0;
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        const RankedBox& r = ranked[i];
        auto it = gt_by_scene.find(r.scene);
        int best = -1;
        double best_iou = thr;
        if (it != gt_by_scene.end()) {
          const auto& boxes = *it->second;
          auto& u = used[r.scene];
          for (std::size_t j = 0; j < boxes.size(); ++j) {
            if (boxes[j].class_id != c || u[j]) continue;
            const double iou = bev_iou(*r.box, boxes[j]);
            if (iou >= best_iou) {
              best_iou = iou;
              best = static_cast<int>(j);
            }
          }
          if (best >= 0) u[static_cast<std::size_t>(best)] = 1;
        }
        tp += best >= 0 ? 1 : 0;
        curve.precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
        curve.recall.push_back(curve.num_gt > 0 ? static_cast<double>(tp) / curve.num_gt : 0.0);
        curve.scores.push_back(r.score);
      }
      if (curve.num_gt > 0) {
        curve.ap = interpolated_ap(curve.precision, curve.recall);
        ap_sum += curve.ap;
        ++classes_with_gt;
      }
      report.curves[t].push_back(std::move(curve));
    }
    report.mean_ap[t] = classes_with_gt > 0 ? ap_sum / classes_with_gt : 0.0;
  }
  return report;
}

std::vector<SceneDetections> predict(const Checkpoint& ckpt, const std::vector<Scene>& scenes,
                                     const std::vector<std::string>& ids) {
  if (ids.size() != scenes.size()) throw ConfigError("predict: one id per scene required");
  const Model model(ckpt.config);
  std::vector<SceneDetections> out(scenes.size());
  auto run = [&](std::size_t i) {
    const PreparedScene prepared = prepare_scene(scenes[i], model.grid(), ckpt.config.max_points);
    out[i] = {ids[i], model.detect(ckpt.params, prepared).boxes};
  };
  // At least two workers so the sharded path also runs on single-core hosts.
  const unsigned hw = std::max(2u, std::thread::hardware_concurrency());
  const std::size_t workers = deterministic_mode() ? 1 : std::min<std::size_t>(hw, scenes.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < scenes.size(); ++i) run(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < scenes.size(); i += workers) run(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

EvalReport evaluate(const Checkpoint& ckpt, const std::filesystem::path& data, const std::string& split) {
  const DatasetIndex index = read_index(data);
  const std::vector<std::string> ids = index.scenes(split);
  if (ids.empty()) throw ConfigError("evaluate: split '" + split + "' is empty");
  std::vector<Scene> scenes;
  std::vector<SceneDetections> gt;
  for (const std::string& id : ids) {
    scenes.push_back(read_scene(data / id));
    gt.push_back({id, scenes.back().gt});
  }
  EvalReport report = evaluate_detections(predict(ckpt, scenes, ids), gt);
  report.metadata["split"] = split;
  report.metadata["num_scenes"] = std::to_string(ids.size());
  report.metadata["steps_done"] = std::to_string(ckpt.steps_done);
  report.metadata["cost_cls"] = format_double(ckpt.config.cost_cls);
  report.metadata["cost_reg"] = format_double(ckpt.config.cost_reg);
  report.metadata["score_threshold"] = format_double(ckpt.config.score_threshold);
  report.metadata["use_hsf"] = ckpt.config.use_hsf ? "true" : "false";
  report.metadata["use_igf"] = ckpt.config.use_igf ? "true" : "false";
  report.metadata["use_image_branch"] = ckpt.config.use_image_branch ? "true" : "false";
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream o;
  o << "# metric: BEV rotated-rectangle IoU average precision, 101-point interpolation,\n";
  o << "# greedy score-ordered matching; used instead of center-distance mAP.\n";
  for (const auto& [k, v] : report.metadata) o << "meta." << k << " = " << v << "\n";
  const auto& classes = object_classes();
  for (std::size_t t = 0; t < kIouThresholds.size(); ++t) {
    const std::string thr = format_double(kIouThresholds[t]);
    o << "map@" << thr << " = " << format_double(report.mean_ap[t]) << "\n";
    for (std::size_t c = 0; c < report.curves[t].size(); ++c) {
      const ClassCurve& cv = report.curves[t][c];
      const std::string name = c < classes.size() ? classes[c].name : std::to_string(c);
      o << "ap@" << thr << "." << name << " = " << format_double(cv.ap) << "\n";
      o << "num_gt@" << thr << "." << name << " = " << cv.num_gt << "\n";
      o << "precision@" << thr << "." << name << " = " << format_doubles(cv.precision) << "\n";
      o << "recall@" << thr << "." << name << " = " << format_doubles(cv.recall) << "\n";
    }
  }
  return o.str();
}

std::string format_predictions(const std::vector<SceneDetections>& preds) {
  std::ostringstream o;
  o << "# scene class score x y z l w h yaw\n";
  for (const SceneDetections& s : preds) {
    for (const Box3D& b : s.boxes) {
      o << s.scene_id << " " << b.class_id << " "
        << format_doubles({b.score, b.center.x(), b.center.y(), b.center.z(), b.size.x(), b.size.y(), b.size.z(),
                           b.yaw})
        << "\n";
    }
  }
  return o.str();
}

std::vector<SceneDetections> parse_predictions(const std::string& text) {
  std::vector<SceneDetections> out;
  std::map<std::string, std::size_t> slot;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string scene, cls;
    if (!(row >> scene >> cls)) throw FormatError("predictions:" + std::to_string(line_no) + ": missing fields");
    std::string rest;
    std::getline(row, rest);
    const std::vector<double> v = parse_doubles(rest);
    if (v.size() != 8) throw FormatError("predictions:" + std::to_string(line_no) + ": expected 10 fields");
    Box3D b;
    try {
      b.class_id = std::stoi(cls);
    } catch (const std::logic_error&) {
      throw FormatError("predictions:" + std::to_string(line_no) + ": bad class");
    }
    b.score = v[0];
    b.center = {v[1], v[2], v[3]};
    b.size = {v[4], v[5], v[6]};
    b.yaw = v[7];
    auto [it, inserted] = slot.try_emplace(scene, out.size());
    if (inserted) out.push_back({scene, {}});
    out[it->second].boxes.push_back(b);
  }
  return out;
}

}  // namespace scenefuse
