#include "dncf/optim.hpp"

#include <cmath>
#include <string>

#include "dncf/error.hpp"

namespace dncf {

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam, sgd)");
}

Optimizer::Optimizer(OptimizerOptions options, std::vector<Parameter*> params)
    : options_(options), params_(std::move(params)) {
  if (!(options_.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(options_.l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
  if (options_.kind == OptimizerKind::kAdam) {
    for (const auto* p : params_) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }
}

void Optimizer::step(std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  for (const auto* p : params_) {
    if (!p->grad.all_finite()) {
      throw NumericError("non-finite gradient in tensor '" + p->name + "'");
    }
  }
  ++t_;
  const double inv_batch = 1.0 / static_cast<double>(batch_size);
  const double lr = options_.lr;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));

  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    const double l2 = p.regularized ? options_.l2 : 0.0;
    double* w = p.value.data();
    double* g = p.grad.data();
    const std::size_t n = p.value.size();
    if (options_.kind == OptimizerKind::kSgd) {
      for (std::size_t j = 0; j < n; ++j) {
        w[j] -= lr * (g[j] * inv_batch + l2 * w[j]);
        g[j] = 0.0;
      }
      continue;
    }
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::size_t j = 0; j < n; ++j) {
      const double grad = g[j] * inv_batch + l2 * w[j];
      m[j] = b1 * m[j] + (1.0 - b1) * grad;
      v[j] = b2 * v[j] + (1.0 - b2) * grad * grad;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + options_.eps);
      g[j] = 0.0;
    }
  }
}

}  // namespace dncf
