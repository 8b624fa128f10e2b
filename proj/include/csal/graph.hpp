#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "csal/tensor.hpp"

namespace csal {

/// Tape of executed primitives for one forward pass.
///
/// Nodes are appended in execution order, which is a topological order of the
/// dataflow. backward() visits each node once, newest first. A graph built with
/// recording disabled is a no-op tape for inference.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void()>;

  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t i) const { return nodes_.at(i).op; }

  /// Records an op producing `output`. The closure reads output->grad() and
  /// accumulates into the gradients of inputs that require them. It is skipped
  /// when no gradient reached `output`.
  void record(std::string op, TensorPtr<T> output, BackwardFn backward);

  /// Reverse-mode pass from a scalar root. Gradients of recorded intermediate
  /// outputs are reset first, so leaf gradients (parameters, inputs)
  /// accumulate across repeated calls until zeroed by the caller.
  void backward(const TensorPtr<T>& root);

 private:
  struct Node {
    std::string op;
    TensorPtr<T> output;
    BackwardFn backward;
  };

  bool recording_;
  std::vector<Node> nodes_;
};

/// True when any input needs a gradient; outputs inherit the flag.
template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  for (const auto* t : inputs) {
    if (t && t->requires_grad()) return true;
  }
  return false;
}

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace csal
