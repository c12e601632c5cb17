// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "scenefuse/container.hpp"
#include "scenefuse/error.hpp"
#include "scenefuse/harness.hpp"

namespace scenefuse {

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  Bundle b;
  RunConfig cfg = ckpt.config;
  std::istringstream cfg_text(format_run_config(cfg));
  for (const auto& [k, v] : parse_key_values(cfg_text.str(), "config")) b.meta["config." + k] = v;
  b.meta["steps_done"] = std::to_string(ckpt.steps_done);
  for (const auto& [name, t] : ckpt.params) {
    std::string dims;
    for (int d : t.shape()) dims += (dims.empty() ? "" : " ") + std::to_string(d);
    b.meta["shape." + name] = dims;
    b.arrays["param." + name] = ArrayData{Dtype::f64, static_cast<int>(t.size()), 1, t.to_vector()};
  }
  write_bundle(b, dir, "scenefuse-checkpoint");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const Bundle b = read_bundle(dir, "scenefuse-checkpoint");
  Checkpoint ckpt;
  for (const auto& [k, v] : b.meta) {
    if (k.rfind("config.", 0) == 0) set_config_value(ckpt.config, k.substr(7), v);
  }
  ckpt.config.validate();
  try {
    ckpt.steps_done = std::stoi(b.get("steps_done"));
  } catch (const std::logic_error&) {
    throw FormatError("bad steps_done in checkpoint");
  }
  for (const auto& [name, a] : b.arrays) {
    if (name.rfind("param.", 0) != 0) throw FormatError("unexpected array '" + name + "' in checkpoint");
    const std::string pname = name.substr(6);
    Shape shape;
    for (double d : parse_doubles(b.get("shape." + pname))) shape.push_back(static_cast<int>(d));
    if (shape_numel(shape) != a.values.size()) {
      throw ShapeMismatchError("parameter '" + pname + "': shape " + shape_string(shape) + " vs " +
                               std::to_string(a.values.size()) + " values");
    }
    ckpt.params.add(pname, Tensor(shape, a.values));
  }
  return ckpt;
}

std::string format_loss_record(const LossRecord& r) {
  std::ostringstream o;
  o << "step = " << r.step << " total = " << format_double(r.total) << " cls = " << format_double(r.cls)
    << " reg = " << format_double(r.reg) << " heatmap = " << format_double(r.heatmap)
    << " lr = " << format_double(r.lr);
  return o.str();
}

double one_cycle_lr(const RunConfig& cfg, int step) {
  const double peak = cfg.lr, start = cfg.lr / cfg.div_factor, end = cfg.lr / cfg.final_div_factor;
  const double total = std::max(1, cfg.steps);
  const double warm = cfg.warmup_fraction * total;
  const double s = step;
  auto cosine = [](double from, double to, double frac) {
    return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * std::clamp(frac, 0.0, 1.0)));
  };
  if (s < warm) return cosine(start, peak, s / warm);
  const double rest = total - warm;
  return rest > 0.0 ? cosine(peak, end, (s - warm) / rest) : peak;
}

void AdamW::step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_), bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) continue;
    auto [mi, new_m] = m_.try_emplace(name, p.shape());
    auto [vi, new_v] = v_.try_emplace(name, p.shape());
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    const bool decay = p.rank() >= 2;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g->second[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      if (decay) p[i] -= lr * cfg_.weight_decay * p[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.adam_eps);
    }
  }
}

double clip_gradients(std::map<std::string, Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads)
    for (double x : g.values()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, g] : grads)
      for (double& x : g.values()) x *= s;
  }
  return norm;
}

namespace {

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

// A diverged network makes matching fail before any loss exists; name the
// loss term whose input went bad instead.
void check_predictions(const Model::Output& out, int step) {
  if (!all_finite(out.decoder.cls_logits.value())) throw NonFiniteLossError("cls", step);
  if (!all_finite(out.decoder.regression.value())) throw NonFiniteLossError("reg", step);
  if (!all_finite(out.decoder.heatmap.logits.value()) || (out.igf && !all_finite(out.igf->heatmap.logits.value()))) {
    throw NonFiniteLossError("heatmap", step);
  }
}

}  // namespace

TrainResult train(const RunConfig& cfg, const std::vector<Scene>& scenes, std::ostream* log) {
  cfg.validate();
  if (scenes.empty()) throw ConfigError("train: no scenes");
  const Model model(cfg);
  TrainResult result;
  result.checkpoint.config = cfg;
  result.checkpoint.params = model.initial_parameters();
  ParamStore& params = result.checkpoint.params;

  std::vector<PreparedScene> prepared;
  prepared.reserve(scenes.size());
  for (const Scene& s : scenes) prepared.push_back(prepare_scene(s, model.grid(), cfg.max_points));

  AdamW opt(cfg);
  std::mt19937_64 order_rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(scenes.size());
  std::size_t cursor = order.size();
  auto next_scene = [&]() {
    if (cursor == order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    return order[cursor++];
  };

  for (int step = 0; step < cfg.steps; ++step) {
    std::map<std::string, Tensor> grads;
    LossRecord rec;
    rec.step = step + 1;
    rec.lr = one_cycle_lr(cfg, step);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const PreparedScene& scene = prepared[next_scene()];
      ad::Tape tape;
      const Model::Output out = model.forward(tape, params, scene);
      check_predictions(out, step + 1);
      const LossOutput loss = model.loss(out, scene);
      const double total = loss.total.value()[0];
      for (const auto& [name, v] : {std::pair<const char*, double>{"cls", loss.cls},
                                    {"reg", loss.reg},
                                    {"heatmap", loss.heatmap},
                                    {"total", total}}) {
        if (!std::isfinite(v)) throw NonFiniteLossError(name, step + 1);
      }
      tape.backward(loss.total);
      for (auto& [name, g] : tape.parameter_gradients()) {
        auto [it, inserted] = grads.try_emplace(name, g);
        if (!inserted)
          for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
      }
      rec.total += total / cfg.batch_size;
      rec.cls += loss.cls / cfg.batch_size;
      rec.reg += loss.reg / cfg.batch_size;
      rec.heatmap += loss.heatmap / cfg.batch_size;
    }
    if (cfg.batch_size > 1) {
      for (auto& [_, g] : grads)
        for (double& x : g.values()) x /= cfg.batch_size;
    }
    const double norm = clip_gradients(grads, cfg.grad_clip);
    if (!std::isfinite(norm)) throw NonFiniteLossError("gradient", step + 1);
    opt.step(params, grads, rec.lr);
    result.log.push_back(rec);
    if (log && (rec.step % cfg.log_every == 0 || rec.step == cfg.steps)) *log << format_loss_record(rec) << "\n";
  }
  result.checkpoint.steps_done = cfg.steps;
  return result;
}

std::vector<Scene> load_split(const std::filesystem::path& root, const std::string& split) {
  std::vector<Scene> scenes;
  for (const std::string& name : read_index(root).scenes(split)) scenes.push_back(read_scene(root / name));
  return scenes;
}

}  // namespace scenefuse
