// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "scenefuse/tensor.hpp"

namespace scenefuse {

/// Named parameter registry. Iteration order is the lexicographic order of
/// names, which fixes the checkpoint layout and the optimizer update order.
class ParamStore {
 public:
  /// Registers a parameter; throws ConfigError on a duplicate name.
  Tensor& add(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::vector<std::string> names() const;
  /// Distinct first path components ("igf.heatmap.conv1.weight" -> "igf").
  std::vector<std::string> groups() const;
  std::size_t num_scalars() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  bool operator==(const ParamStore& other) const = default;

 private:
  std::map<std::string, Tensor> params_;
};

/// Parameter initializers. All draw from the caller's engine so a seed fixes
/// the whole initialization.
namespace init {

Tensor uniform(const Shape& shape, double bound, std::mt19937_64& rng);
Tensor normal(const Shape& shape, double stddev, std::mt19937_64& rng);
/// Kaiming-uniform bound sqrt(6 / fan_in) scaled for ReLU-free layers by 1/sqrt(3)
/// (matches the common default for linear and conv layers).
Tensor fan_in_uniform(const Shape& shape, int fan_in, std::mt19937_64& rng);

}  // namespace init

}  // namespace scenefuse
