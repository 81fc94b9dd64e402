#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <set>
#include <span>
#include <vector>

#include "usagewatch/errors.hpp"

namespace usagewatch {

// Median of a scratch copy; even-length samples average the two middle order
// statistics.
inline double median_destructive(std::vector<double>& v) {
  if (v.empty()) throw ParameterError("median of an empty sample");
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (n % 2 != 0) return hi;
  const double lo =
      *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

inline double median(std::span<const double> values) {
  std::vector<double> copy(values.begin(), values.end());
  return median_destructive(copy);
}

// Median absolute deviation about the given center (unscaled).
inline double mad(std::span<const double> values, double center) {
  std::vector<double> deviations;
  deviations.reserve(values.size());
  for (double v : values) deviations.push_back(std::abs(v - center));
  return median_destructive(deviations);
}

inline double mad(std::span<const double> values) { return mad(values, median(values)); }

// For normally distributed data, mad * kNormalMadConsistency estimates the
// standard deviation, so a k-MAD band matches a k-sigma band.
inline constexpr double kNormalMadConsistency = 1.4826;

// Median over a sliding window, kept as two balanced multisets. push() evicts
// the oldest value once the window is full.
class SlidingMedian {
 public:
  explicit SlidingMedian(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ParameterError("SlidingMedian capacity must be positive");
  }

  void push(double x) {
    if (order_.size() == capacity_) {
      const double oldest = order_.front();
      order_.pop_front();
      erase_one(oldest);
    }
    order_.push_back(x);
    if (low_.empty() || x <= *low_.rbegin()) {
      low_.insert(x);
    } else {
      high_.insert(x);
    }
    rebalance();
  }

  std::size_t size() const { return order_.size(); }

  double median() const {
    if (order_.empty()) throw ParameterError("median of an empty window");
    if (order_.size() % 2 != 0) return *low_.rbegin();
    return 0.5 * (*low_.rbegin() + *high_.begin());
  }

 private:
  void erase_one(double x) {
    if (auto it = low_.find(x); it != low_.end()) {
      low_.erase(it);
    } else {
      high_.erase(high_.find(x));
    }
  }

  void rebalance() {
    while (low_.size() > high_.size() + 1) {
      auto it = std::prev(low_.end());
      high_.insert(*it);
      low_.erase(it);
    }
    while (high_.size() > low_.size()) {
      auto it = high_.begin();
      low_.insert(*it);
      high_.erase(it);
    }
  }

  std::size_t capacity_;
  std::deque<double> order_;
  std::multiset<double> low_;   // lower half, median at its max
  std::multiset<double> high_;  // upper half
};

}  // namespace usagewatch
