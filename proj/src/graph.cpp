#include "csal/graph.hpp"

#include <algorithm>

namespace csal {

template <typename T>
void Graph<T>::record(std::string op, TensorPtr<T> output, BackwardFn backward) {
  if (!recording_ || !output->requires_grad()) return;
  nodes_.push_back(Node{std::move(op), std::move(output), std::move(backward)});
}

template <typename T>
void Graph<T>::backward(const TensorPtr<T>& root) {
  if (!root || root->size() != 1) {
    throw ShapeError("backward: root must be a scalar, got " +
                     (root ? to_string(root->shape()) : std::string("null")));
  }
  for (auto& node : nodes_) node.output->drop_grad();
  root->grad()[0] += T{1};
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output->has_grad()) continue;
    it->backward();
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace csal
