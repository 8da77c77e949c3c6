#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dpvm/tensor.hpp"

namespace dpvm {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::vector<std::pair<std::string, double>> per_parameter_errors;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Compares analytic gradients against central differences.
///
/// `scalar_fn(bool accumulate)` must return the objective at the current
/// parameter values; when `accumulate` is true it must also add the analytic
/// gradient into each parameter's `grad`. With `max_coords_per_param` > 0 a
/// seeded random subset of coordinates is probed per tensor, otherwise all.
template <typename T, typename Fn>
GradCheckResult check_gradients(Fn&& scalar_fn, const std::vector<ParamTensor<T>*>& params,
                                double eps, std::uint64_t seed,
                                std::size_t max_coords_per_param = 0) {
  if (!(eps > 0.0)) throw ConfigError("check_gradients: eps must be > 0");
  for (auto* p : params) p->zero_grad();
  scalar_fn(true);

  std::mt19937_64 rng(seed);
  GradCheckResult result;
  for (auto* p : params) {
    const std::vector<T> analytic(p->grad.values().begin(), p->grad.values().end());
    for (std::size_t i = 0; i < analytic.size(); ++i)
      if (!std::isfinite(analytic[i]))
        throw NumericError("check_gradients: non-finite analytic gradient in " + p->name +
                           "[" + std::to_string(i) + "]");

    std::vector<std::size_t> coords(analytic.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_param > 0 && coords.size() > max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_param);
    }

    double worst = 0.0;
    auto values = p->value.values();
    for (std::size_t i : coords) {
      const T saved = values[i];
      values[i] = saved + static_cast<T>(eps);
      const double up = static_cast<double>(scalar_fn(false));
      values[i] = saved - static_cast<T>(eps);
      const double down = static_cast<double>(scalar_fn(false));
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      if (!std::isfinite(numeric))
        throw NumericError("check_gradients: non-finite numeric gradient in " + p->name + "[" +
                           std::to_string(i) + "]");
      worst = std::max(worst, relative_error(static_cast<double>(analytic[i]), numeric));
    }
    result.per_parameter_errors.emplace_back(p->name, worst);
    result.max_relative_error = std::max(result.max_relative_error, worst);
  }
  return result;
}

}  // namespace dpvm
