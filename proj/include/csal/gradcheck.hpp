#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "csal/graph.hpp"
#include "csal/tensor.hpp"

namespace csal {

struct GradCheckOptions {
  std::uint64_t seed = 3;
  double step = 1e-5;
  /// Coordinates probed per input tensor (all of them when the tensor is smaller).
  std::size_t coords_per_input = 24;
  /// Parameters sampled for each end-to-end model check.
  std::size_t model_params = 20;
};

struct GradCheckRow {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

/// |a - n| / max(|a|, |n|, 1e-3).
double relative_error(double analytic, double numeric);

using GraphFn = std::function<TensorPtr<double>(Graph<double>&, const std::vector<TensorPtr<double>>&)>;

/// Compares the gradient of sum(R * fn(inputs)), R a fixed random projection,
/// against central differences on sampled coordinates of every input.
GradCheckRow check_gradients(const std::string& name, const std::vector<TensorPtr<double>>& inputs, const GraphFn& fn,
                             std::mt19937_64& rng, const GradCheckOptions& opts = {});

/// Every differentiable primitive plus the end-to-end toy model with and
/// without attention.
std::vector<GradCheckRow> run_gradient_suite(const GradCheckOptions& opts = {});

}  // namespace csal
