#pragma once

#include <cmath>
#include <initializer_list>
#include <limits>

namespace edgewise {

// Scores live in natural-log space; probability zero is an explicit -inf.
inline constexpr double log_zero = -std::numeric_limits<double>::infinity();

inline bool is_log_zero(double x) { return std::isinf(x) && x < 0; }

// log(exp(a) + exp(b)) with the max shift. Symmetric in its arguments, so the
// value of a fold depends only on the grouping order, never on which operand
// arrived as "local" and which as "incoming".
inline double log_add(double a, double b) {
  if (is_log_zero(a)) return b;
  if (is_log_zero(b)) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

// Left-to-right fold of a range of log values.
template <typename It>
double log_sum(It first, It last) {
  double acc = log_zero;
  for (; first != last; ++first) acc = log_add(acc, *first);
  return acc;
}

inline double log_sum(std::initializer_list<double> xs) {
  return log_sum(xs.begin(), xs.end());
}

}  // namespace edgewise
