#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace topiclens {

/// Median; the mean of the two middle values for even sizes.
inline double median(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty range");
  std::vector<double> v(values.begin(), values.end());
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double upper = v[mid];
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lower + upper);
}

inline double median_absolute_deviation(std::span<const double> values) {
  const double med = median(values);
  std::vector<double> dev;
  dev.reserve(values.size());
  for (const double x : values) dev.push_back(std::abs(x - med));
  return median(dev);
}

}  // namespace topiclens
