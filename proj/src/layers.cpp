// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/layers.hpp"

#include "scenefuse/ops.hpp"

namespace scenefuse {

void Linear::init(ParamStore& store, std::mt19937_64& rng) const {
  store.add(name + ".weight", init::fan_in_uniform({in, out}, in, rng));
  if (bias) store.add(name + ".bias", init::fan_in_uniform({out}, in, rng));
}

ad::Var Linear::operator()(ad::Tape& tape, const ParamStore& store, ad::Var x) const {
  ad::Var b = bias ? tape.param(store, name + ".bias") : ad::Var{};
  return ad::linear(x, tape.param(store, name + ".weight"), b);
}

void LayerNorm::init(ParamStore& store) const {
  store.add(name + ".gamma", Tensor({dim}, 1.0));
  store.add(name + ".beta", Tensor({dim}, 0.0));
}

ad::Var LayerNorm::operator()(ad::Tape& tape, const ParamStore& store, ad::Var x) const {
  return ad::layer_norm(x, tape.param(store, name + ".gamma"), tape.param(store, name + ".beta"));
}

void FeedForward::init(ParamStore& store, std::mt19937_64& rng) const {
  fc1().init(store, rng);
  fc2().init(store, rng);
}

ad::Var FeedForward::operator()(ad::Tape& tape, const ParamStore& store, ad::Var x) const {
  return fc2()(tape, store, ad::relu(fc1()(tape, store, x)));
}

void Conv2d::init(ParamStore& store, std::mt19937_64& rng) const {
  const int fan_in = kernel * kernel * in;
  store.add(name + ".weight", init::fan_in_uniform({kernel, kernel, in, out}, fan_in, rng));
  store.add(name + ".bias", init::fan_in_uniform({out}, fan_in, rng));
}

ad::Var Conv2d::operator()(ad::Tape& tape, const ParamStore& store, ad::Var x) const {
  return ad::conv2d(x, tape.param(store, name + ".weight"), tape.param(store, name + ".bias"), stride, pad);
}

}  // namespace scenefuse
