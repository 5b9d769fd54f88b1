#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "dncf/nn.hpp"

namespace dncf {

enum class OptimizerKind { kAdam, kSgd };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerOptions {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 0.001;
  double l2 = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Applies one update per mini-batch to a fixed parameter list.
//
// The effective gradient of a tensor is grad / batch_size (mean loss over the
// batch) plus l2 * value for regularized tensors (biases are exempt). Adam
// keeps bias-corrected first/second moments per element. step() clears every
// gradient.
class Optimizer {
 public:
  Optimizer(OptimizerOptions options, std::vector<Parameter*> params);

  // Throws NumericError naming the tensor when any gradient is non-finite;
  // in that case no parameter is modified.
  void step(std::size_t batch_size);

  const OptimizerOptions& options() const { return options_; }
  std::uint64_t steps() const { return t_; }

 private:
  OptimizerOptions options_;
  std::vector<Parameter*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t t_ = 0;
};

}  // namespace dncf
