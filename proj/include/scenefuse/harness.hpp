// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "scenefuse/config.hpp"
#include "scenefuse/model.hpp"
#include "scenefuse/params.hpp"
#include "scenefuse/synthscene.hpp"

namespace scenefuse {

struct Checkpoint {
  RunConfig config;
  ParamStore params;
  int steps_done = 0;
};

/// Same container as scenes; parameters are f64 arrays and the run config
/// is embedded in the manifest.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

struct LossRecord {
  int step = 0;
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  double heatmap = 0.0;
  double lr = 0.0;
};
std::string format_loss_record(const LossRecord& r);

/// Learning rate at `step` of a one-cycle schedule: cosine warm-up from
/// lr / div_factor to lr over warmup_fraction of the steps, then cosine
/// decay to lr / final_div_factor.
double one_cycle_lr(const RunConfig& cfg, int step);

/// AdamW with decoupled weight decay on tensors of rank >= 2.
class AdamW {
 public:
  explicit AdamW(const RunConfig& cfg) : cfg_(cfg) {}
  void step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr);

 private:
  RunConfig cfg_;
  std::map<std::string, Tensor> m_, v_;
  int t_ = 0;
};

/// Global L2 norm clipping; returns the norm before clipping.
double clip_gradients(std::map<std::string, Tensor>& grads, double max_norm);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> log;  // every step
};

/// Deterministic in cfg.seed: fixed per-epoch shuffles, seeded init, single
/// thread. Throws NonFiniteLossError naming the first non-finite component.
/// Writes a loss line every cfg.log_every steps to `log` when given.
TrainResult train(const RunConfig& cfg, const std::vector<Scene>& scenes, std::ostream* log = nullptr);

/// Reads the scenes of `split` from a dataset root.
std::vector<Scene> load_split(const std::filesystem::path& root, const std::string& split);

struct SceneDetections {
  std::string scene_id;
  std::vector<Box3D> boxes;
};

/// Detections for every scene. Scenes are sharded across threads unless
/// ISFUSION_DETERMINISTIC=1; output order always follows the input.
std::vector<SceneDetections> predict(const Checkpoint& ckpt, const std::vector<Scene>& scenes,
                                     const std::vector<std::string>& ids);

/// Area of intersection over union of two boxes' BEV footprints.
double bev_iou(const Box3D& a, const Box3D& b);

inline constexpr std::array<double, 2> kIouThresholds{0.3, 0.5};

struct ClassCurve {
  int num_gt = 0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> scores;
  double ap = 0.0;
};

struct EvalReport {
  /// curves[t][c] for threshold kIouThresholds[t] and class c.
  std::array<std::vector<ClassCurve>, kIouThresholds.size()> curves;
  std::array<double, kIouThresholds.size()> mean_ap{};
  std::map<std::string, std::string> metadata;

  bool operator==(const EvalReport& o) const;
};

/// 101-point interpolated AP from a PR curve.
double interpolated_ap(const std::vector<double>& precision, const std::vector<double>& recall);

/// Greedy score-ordered matching per class and threshold. Row order of the
/// inputs does not matter. Mean AP averages the classes that have ground
/// truth. Throws ConfigError when `gt` is empty.
EvalReport evaluate_detections(const std::vector<SceneDetections>& predictions,
                               const std::vector<SceneDetections>& gt, int num_classes = kNumClasses);

EvalReport evaluate(const Checkpoint& ckpt, const std::filesystem::path& data, const std::string& split);
std::string format_report(const EvalReport& report);

/// Table with one row per box: scene, class, score, x, y, z, l, w, h, yaw.
std::string format_predictions(const std::vector<SceneDetections>& preds);
std::vector<SceneDetections> parse_predictions(const std::string& text);

/// Valid names for render_bev.
const std::vector<std::string>& bev_map_names();

struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major from the top-left pixel
};

/// Grayscale raster of the per-cell channel L2 norm of a {rows * cols, C}
/// map. Cell (row, col) becomes pixel (x = col, y = rows - 1 - row), so +y
/// points up. Returns the (min, max) norm mapped to black and white.
Raster render_feature_map(const Tensor& map, int rows, int cols, double* lo = nullptr, double* hi = nullptr);
void write_ppm(const Raster& raster, const std::filesystem::path& path);

/// Writes <out>/<map>.ppm and <out>/<map>.txt for each requested map.
/// Throws ConfigError for unknown map names.
std::vector<std::filesystem::path> render_bev(const Checkpoint& ckpt, const Scene& scene,
                                              const std::vector<std::string>& maps, const std::filesystem::path& out);

}  // namespace scenefuse
