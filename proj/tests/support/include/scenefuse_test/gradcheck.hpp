// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scenefuse/autodiff.hpp"
#include "scenefuse/params.hpp"

namespace scenefuse::selftest {

/// Builds the function under test on `tape`. `inputs` are leaves that take
/// gradients; the result may have any shape and is reduced with fixed
/// random weights.
using GradFn = std::function<ad::Var(ad::Tape& tape, const ParamStore& store, const std::vector<ad::Var>& inputs)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Entries checked per tensor; smaller tensors are checked in full.
  int max_entries = 12;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "<tensor>[<index>] analytic <a> numeric <n>"
  int checked = 0;
  /// Entries whose first stencil straddled a kink (one-sided slopes
  /// disagreeing enough to explain the error) and were re-checked at a
  /// smaller step.
  int refined = 0;
  /// Entries still straddling a kink at step / 100. Skipped: their central
  /// difference is meaningless.
  int kinks = 0;

  bool passed(double tolerance) const { return checked > 0 && max_rel_error < tolerance; }
};

/// |a - n| / max(|a|, |n|, 1e-3).
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of every parameter in `store` and every
/// input against central differences.
GradCheckReport check_gradients(const GradFn& fn, const ParamStore& store, const std::vector<Tensor>& inputs,
                                const GradCheckOptions& opt);

}  // namespace scenefuse::selftest
