// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>

#include "scenefuse/autodiff.hpp"
#include "scenefuse/params.hpp"

namespace scenefuse {

// Thin named-parameter layers. Each owns only its name prefix and shape;
// values live in a ParamStore.

struct Linear {
  std::string name;
  int in = 0;
  int out = 0;
  bool bias = true;

  void init(ParamStore& store, std::mt19937_64& rng) const;
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, ad::Var x) const;
};

struct LayerNorm {
  std::string name;
  int dim = 0;

  void init(ParamStore& store) const;
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, ad::Var x) const;
};

/// Two-layer ReLU MLP.
struct FeedForward {
  std::string name;
  int dim = 0;
  int hidden = 0;

  Linear fc1() const { return {name + ".fc1", dim, hidden}; }
  Linear fc2() const { return {name + ".fc2", hidden, dim}; }
  void init(ParamStore& store, std::mt19937_64& rng) const;
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, ad::Var x) const;
};

/// Square-kernel convolution on {H, W, C} maps.
struct Conv2d {
  std::string name;
  int in = 0;
  int out = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  void init(ParamStore& store, std::mt19937_64& rng) const;
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, ad::Var x) const;
};

}  // namespace scenefuse
