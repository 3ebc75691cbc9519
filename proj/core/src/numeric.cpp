#include "nswip/numeric.hpp"

namespace nswip {

namespace {

constexpr std::size_t kLeaf = 8;

double tree_sum_impl(const double* data, std::size_t n) noexcept {
  if (n <= kLeaf) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += data[i];
    return acc;
  }
  const std::size_t half = n / 2;
  return tree_sum_impl(data, half) + tree_sum_impl(data + half, n - half);
}

}  // namespace

double tree_sum(std::span<const double> values) noexcept {
  return tree_sum_impl(values.data(), values.size());
}

double tree_mean(std::span<const double> values) noexcept {
  if (values.empty()) return 0.0;
  return tree_sum(values) / static_cast<double>(values.size());
}

}  // namespace nswip
