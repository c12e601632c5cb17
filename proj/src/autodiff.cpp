// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/autodiff.hpp"

#include "scenefuse/error.hpp"

namespace scenefuse::ad {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, recording_});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return Var{this, it->second};
  Var v = input(store.get(name));
  param_ids_.emplace(name, v.id);
  return v;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (n.grad.empty() && !n.value.empty()) return Tensor(n.value.shape());
  return n.grad;
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(std::move(value), std::vector<Var>(parents), std::move(fn));
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
  bool needs = false;
  if (recording_) {
    for (const Var& p : parents) {
      if (p.valid()) {
        if (p.tape != this) throw ConfigError("operation mixes variables from different tapes");
        needs = needs || requires_grad(p);
      }
    }
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, needs});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var output) {
  if (value(output).size() != 1) {
    throw ConfigError("backward() without a seed needs a single-element output, got " +
                      shape_string(value(output).shape()));
  }
  backward(output, Tensor(value(output).shape(), 1.0));
}

void Tape::backward(Var output, const Tensor& seed) {
  if (!recording_) throw ConfigError("backward() on a tape that does not record gradients");
  if (seed.shape() != value(output).shape()) throw ConfigError("backward seed shape mismatch");
  if (!requires_grad(output)) return;
  Tensor& g = grad_buffer(output.id);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.backward || n.grad.empty()) continue;
    // Closures only touch their parents' buffers, and deque elements never
    // move, so passing our own buffer by reference is safe.
    n.backward(*this, n.grad);
  }
}

std::map<std::string, Tensor> Tape::parameter_gradients() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : param_ids_) out.emplace(name, grad(Var{const_cast<Tape*>(this), id}));
  return out;
}

}  // namespace scenefuse::ad
