#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dpvm/tensor.hpp"

namespace dpvm {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Tensor2<T>> first_moment;
  std::vector<Tensor2<T>> second_moment;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update of every parameter from its accumulated grad.
/// Throws NumericError (naming tensor and step) before touching any
/// parameter if a gradient is non-finite.
template <typename T>
void adam_step(const std::vector<ParamTensor<T>*>& params, AdamState<T>& state,
               const AdamConfig& cfg) {
  if (state.first_moment.empty()) {
    for (const auto* p : params) {
      state.first_moment.emplace_back(p->value.rows(), p->value.cols());
      state.second_moment.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (state.first_moment.size() != params.size())
    throw ConfigError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                      " tensors, got " + std::to_string(params.size()));
  for (const auto* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols())
      throw ConfigError("adam_step: grad/value shape mismatch in " + p->name);
    if (!p->grad.all_finite())
      throw NumericError("adam_step: non-finite gradient in " + p->name + " at step " +
                         std::to_string(state.step + 1));
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t j = 0; j < params.size(); ++j) {
    auto value = params[j]->value.values();
    auto grad = params[j]->grad.values();
    auto m = state.first_moment[j].values();
    auto v = state.second_moment[j].values();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      value[i] -= static_cast<T>(cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon));
    }
  }
}

}  // namespace dpvm
