#include "ctxgen/autograd.h"

#include <cmath>
#include <utility>

#include "ctxgen/errors.h"

namespace ctxgen {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }
Tensor Var::grad() const { return tape_->grad(id_); }

Var Tape::Constant(Tensor value) { return Leaf(std::move(value), false); }

Var Tape::Leaf(Tensor value, bool requires_grad) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::Param(Parameter& p) {
  Node node;
  node.op = "param";
  node.value = p.value;
  node.requires_grad = !p.frozen && trainable_.contains(p.group);
  node.param = &p;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::Record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  bool any = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw ContractError(std::string(op) + ": input belongs to another tape");
    node.inputs.push_back(v.id());
    any = any || v.requires_grad();
  }
  node.requires_grad = any;
  if (any) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Tensor Tape::grad(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::Backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + ShapeString(loss.shape()));
  }
  if (backward_done_) throw ContractError("backward: tape already consumed");
  backward_done_ = true;

  Node& root = nodes_[static_cast<size_t>(loss.id())];
  if (!root.requires_grad) return;
  root.grad = Tensor(root.value.shape(), 1.0);

  std::vector<Tensor*> in_grads;
  for (int id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[static_cast<size_t>(id)];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.backward) {
      in_grads.assign(node.inputs.size(), nullptr);
      for (size_t k = 0; k < node.inputs.size(); ++k) {
        Node& in = nodes_[static_cast<size_t>(node.inputs[k])];
        if (!in.requires_grad) continue;
        if (in.grad.empty()) in.grad = Tensor(in.value.shape(), 0.0);
        in_grads[k] = &in.grad;
      }
      node.backward(node.grad, in_grads);
      // Intermediate gradients are no longer needed once propagated.
      if (node.param == nullptr) node.grad = Tensor();
    }
    if (node.param != nullptr) {
      auto dst = node.param->grad.data();
      auto src = node.grad.data();
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
}

void SgdStep(std::span<Parameter* const> params, double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  for (Parameter* p : params) {
    if (!p->frozen) {
      auto v = p->value.data();
      auto g = p->grad.data();
      for (size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    }
    p->ZeroGrad();
  }
}

void ZeroGrads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->ZeroGrad();
}

double GradNorm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (p->frozen) continue;
    for (double g : p->grad.data()) sq += g * g;
  }
  return std::sqrt(sq);
}

double ClipGradNorm(std::span<Parameter* const> params, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("gradient clip norm must be positive");
  const double norm = GradNorm(params);
  if (norm > max_norm) {
    const double k = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->grad.data()) g *= k;
    }
  }
  return norm;
}

}  // namespace ctxgen
