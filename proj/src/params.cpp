// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/params.hpp"

#include <cmath>
#include <set>

#include "scenefuse/error.hpp"

namespace scenefuse {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  auto [it, inserted] = params_.emplace(name, std::move(value));
  if (!inserted) throw ConfigError("duplicate parameter name '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::groups() const {
  std::set<std::string> g;
  for (const auto& [name, _] : params_) g.insert(name.substr(0, name.find('.')));
  return {g.begin(), g.end()};
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

namespace init {

Tensor uniform(const Shape& shape, double bound, std::mt19937_64& rng) {
  Tensor t(shape);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor normal(const Shape& shape, double stddev, std::mt19937_64& rng) {
  Tensor t(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor fan_in_uniform(const Shape& shape, int fan_in, std::mt19937_64& rng) {
  return uniform(shape, 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1))), rng);
}

}  // namespace init

}  // namespace scenefuse
