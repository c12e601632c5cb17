// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "scenefuse/params.hpp"
#include "scenefuse/tensor.hpp"

namespace scenefuse::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  int dim(int axis) const { return value().dim(axis); }
};

using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

/// Reverse-mode tape over dense tensors.
///
/// Parameters are read from a ParamStore but never written: gradients land on
/// the tape and are pulled out with parameter_gradients(). Separate tapes can
/// therefore evaluate the same parameters concurrently.
class Tape {
 public:
  /// With record_gradients == false no backward closures are kept; used for
  /// inference.
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf that receives a gradient (inputs under test, for instance).
  Var input(Tensor value);
  /// Leaf bound to a named parameter. Repeated calls return the same node.
  Var param(const ParamStore& store, const std::string& name);

  bool recording() const { return recording_; }
  const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }
  /// Gradient accumulated by backward(); zeros when the node received none.
  Tensor grad(Var v) const;

  /// Seeds d(output)/d(output) = 1 (output must hold a single element) and
  /// runs every recorded closure in reverse order.
  void backward(Var output);
  void backward(Var output, const Tensor& seed);

  std::map<std::string, Tensor> parameter_gradients() const;

  // Op authoring interface.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn fn);
  /// Gradient buffer for accumulation inside backward closures.
  Tensor& grad_buffer(int id);
  bool needs_grad(Var v) const { return v.valid() && requires_grad(v); }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  bool recording_;
  std::deque<Node> nodes_;
  std::unordered_map<std::string, int> param_ids_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

}  // namespace scenefuse::ad
