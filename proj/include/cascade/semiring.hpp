#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/multiprecision/cpp_int.hpp>

namespace cascade {

using BigCount = boost::multiprecision::cpp_int;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Finite stand-in for -inf inside max-plus arithmetic. Anything at or below it
// is treated as infeasible; the chain's mask stays authoritative.
inline constexpr double kSentinel = -std::numeric_limits<double>::max() / 4;

inline constexpr bool is_feasible_value(double v) noexcept { return v > kSentinel; }

/// (max, +) over log-scores with a clamped zero element.
struct MaxPlus {
  using value_type = double;
  static constexpr value_type zero() noexcept { return kSentinel; }
  static constexpr value_type one() noexcept { return 0.0; }
  static constexpr value_type plus(value_type a, value_type b) noexcept { return a < b ? b : a; }
  static constexpr value_type times(value_type a, value_type b) noexcept {
    return (a <= kSentinel || b <= kSentinel) ? kSentinel : a + b;
  }
};

/// (+, *) over exact integers; used with 0/1 feasibility weights to count paths.
struct Counting {
  using value_type = BigCount;
  static value_type zero() { return 0; }
  static value_type one() { return 1; }
  static value_type plus(const value_type& a, const value_type& b) { return a + b; }
  static value_type times(const value_type& a, const value_type& b) { return a * b; }
};

}  // namespace cascade
