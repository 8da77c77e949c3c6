#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "dpvm/errors.hpp"

namespace dpvm {

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  T s(0);
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
T l2_norm(std::span<const T> a) {
  return std::sqrt(dot(a, a));
}

namespace detail {

template <typename T>
void check_cosine_args(std::span<const T> a, std::span<const T> b, T na, T nb) {
  if (a.size() != b.size() || a.empty())
    throw ConfigError("cosine: lengths " + std::to_string(a.size()) + " and " +
                      std::to_string(b.size()) + " must match and be >= 1");
  if (!(na > T(0)) || !(nb > T(0)))
    throw DegenerateInputError("cosine: zero-norm input vector");
}

}  // namespace detail

/// dot(a,b) / (|a| |b|), clamped to [-1, 1].
template <typename T>
T cosine_similarity(std::span<const T> a, std::span<const T> b) {
  const T na = l2_norm(a), nb = l2_norm(b);
  detail::check_cosine_args(a, b, na, nb);
  return std::clamp(dot(a, b) / (na * nb), T(-1), T(1));
}

template <typename T>
T cosine_distance(std::span<const T> a, std::span<const T> b) {
  return T(1) - cosine_similarity(a, b);
}

/// Accumulates upstream * d cos(a,b) / da into ga and the same for b into gb.
/// Either output may be empty to skip it.
template <typename T>
void cosine_similarity_backward(std::span<const T> a, std::span<const T> b, T upstream,
                                std::span<T> ga, std::span<T> gb) {
  const T na = l2_norm(a), nb = l2_norm(b);
  detail::check_cosine_args(a, b, na, nb);
  const T inv = T(1) / (na * nb);
  const T cos = dot(a, b) * inv;
  if (!ga.empty()) {
    const T sa = cos / (na * na);
    for (std::size_t i = 0; i < a.size(); ++i) ga[i] += upstream * (b[i] * inv - sa * a[i]);
  }
  if (!gb.empty()) {
    const T sb = cos / (nb * nb);
    for (std::size_t i = 0; i < b.size(); ++i) gb[i] += upstream * (a[i] * inv - sb * b[i]);
  }
}

}  // namespace dpvm
