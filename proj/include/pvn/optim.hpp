// First-order optimizers over flat parameter vectors. All of them minimize;
// callers that ascend pass the negated gradient.

#ifndef PVN_OPTIM_HPP_
#define PVN_OPTIM_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pvn/error.hpp"

namespace pvn {

enum class OptimizerKind { sgd, adam, rmsprop };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::rmsprop: return "rmsprop";
  }
  return "?";
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  if (s == "rmsprop") return OptimizerKind::rmsprop;
  throw ConfigError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// RMSProp decay of the running mean of squared gradients.
  double rms_decay = 0.9;
  double rms_epsilon = 1e-10;
};

/// Optimizer with its moment accumulators for one parameter vector.
class OptimizerState {
 public:
  OptimizerState(OptimizerConfig config, std::size_t size)
      : config_(config), first_(size, 0.0), second_(size, 0.0) {}

  const OptimizerConfig& config() const noexcept { return config_; }
  std::size_t step_count() const noexcept { return steps_; }
  std::size_t size() const noexcept { return first_.size(); }
  std::span<const double> first_moment() const noexcept { return first_; }
  std::span<const double> second_moment() const noexcept { return second_; }

  /// Applies one descent step in place.
  void step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != first_.size() || grads.size() != first_.size()) {
      throw ShapeError("optimizer step: expected " + std::to_string(first_.size()) + " parameters, got " +
                       std::to_string(params.size()) + " params / " + std::to_string(grads.size()) + " grads");
    }
    ++steps_;
    const double lr = config_.learning_rate;
    switch (config_.kind) {
      case OptimizerKind::sgd:
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
        break;
      case OptimizerKind::adam: {
        const double b1 = config_.beta1, b2 = config_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
        for (std::size_t i = 0; i < params.size(); ++i) {
          first_[i] = b1 * first_[i] + (1.0 - b1) * grads[i];
          second_[i] = b2 * second_[i] + (1.0 - b2) * grads[i] * grads[i];
          const double mhat = first_[i] / c1;
          const double vhat = second_[i] / c2;
          params[i] -= lr * mhat / (std::sqrt(vhat) + config_.adam_epsilon);
        }
        break;
      }
      case OptimizerKind::rmsprop: {
        const double rho = config_.rms_decay;
        for (std::size_t i = 0; i < params.size(); ++i) {
          second_[i] = rho * second_[i] + (1.0 - rho) * grads[i] * grads[i];
          params[i] -= lr * grads[i] / (std::sqrt(second_[i]) + config_.rms_epsilon);
        }
        break;
      }
    }
  }

 private:
  OptimizerConfig config_;
  std::vector<double> first_;
  std::vector<double> second_;
  std::size_t steps_ = 0;
};

}  // namespace pvn

#endif  // PVN_OPTIM_HPP_
