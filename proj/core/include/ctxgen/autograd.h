#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ctxgen/tensor.h"

namespace ctxgen {

// Which subnetwork owns a parameter. The trainer selects the groups that
// receive gradients in each optimizer step.
enum class ParamGroup : uint8_t {
  kBackbone = 0,
  kContext = 1,
  kGenerator = 2,
  kSharedHead = 3,
  kClassifier = 4,
  kDiscriminator = 5,
  kTest = 6,
};

class GroupMask {
 public:
  constexpr GroupMask() = default;
  constexpr GroupMask(std::initializer_list<ParamGroup> groups) {
    for (ParamGroup g : groups) bits_ |= Bit(g);
  }
  static constexpr GroupMask All() {
    GroupMask m;
    m.bits_ = 0xFF;
    return m;
  }
  static constexpr GroupMask None() { return GroupMask(); }
  constexpr bool contains(ParamGroup g) const { return (bits_ & Bit(g)) != 0; }

 private:
  static constexpr uint32_t Bit(ParamGroup g) { return 1u << static_cast<uint32_t>(g); }
  uint32_t bits_ = 0;
};

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, ParamGroup group, Tensor value)
      : name(std::move(name)), group(group), value(std::move(value)), grad(this->value.shape()) {}

  std::string name;
  ParamGroup group = ParamGroup::kTest;
  Tensor value;
  Tensor grad;
  // Frozen parameters never receive gradient and are never stepped.
  bool frozen = false;

  void ZeroGrad() { grad.Fill(0.0); }
};

class Tape;

// Handle to one node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  int64_t dim(int i) const { return value().dim(i); }
  bool requires_grad() const;
  // Gradient after Tape::Backward; zero tensor if the node was unreachable.
  Tensor grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Receives the gradient of the node output and accumulates into the
// gradients of its inputs. Entries of `input_grads` are null for inputs that
// do not require a gradient.
using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> input_grads)>;

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
// which is a topological order, and Backward walks them once in reverse.
class Tape {
 public:
  explicit Tape(GroupMask trainable = GroupMask::All()) : trainable_(trainable) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Tensor value);
  // Leaf for gradient checks on plain inputs.
  Var Leaf(Tensor value, bool requires_grad = true);
  // Parameter leaf. Tracks gradient only when the parameter is not frozen
  // and its group is in the trainable mask.
  Var Param(Parameter& p);

  Var Record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and propagates. Accumulates parameter
  // gradients into Parameter::grad. Throws ContractError for non-scalar loss.
  void Backward(Var loss);

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  Tensor grad(int id) const;
  const char* op(int id) const { return nodes_[static_cast<size_t>(id)].op; }
  std::vector<int> inputs(int id) const { return nodes_[static_cast<size_t>(id)].inputs; }
  size_t size() const { return nodes_.size(); }
  GroupMask trainable() const { return trainable_; }

 private:
  struct Node {
    const char* op;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  GroupMask trainable_;
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

// value <- value - lr * grad for every non-frozen parameter; clears all
// gradients including frozen ones.
void SgdStep(std::span<Parameter* const> params, double lr);
void ZeroGrads(std::span<Parameter* const> params);
// Global L2 norm of the non-frozen gradients.
double GradNorm(std::span<Parameter* const> params);
// Rescales the gradients so their global norm is at most `max_norm`.
// Returns the norm before clipping.
double ClipGradNorm(std::span<Parameter* const> params, double max_norm);

}  // namespace ctxgen
