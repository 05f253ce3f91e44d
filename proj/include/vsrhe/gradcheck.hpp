#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace vsrhe {

using ScalarFn = std::function<double(const std::vector<double>&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h at each coordinate i.
std::vector<double> fd_gradient(const ScalarFn& f, const std::vector<double>& x, double h,
                                std::span<const std::size_t> coords);

// `count` distinct indices in [0, n), drawn with Xoshiro256.
std::vector<std::size_t> sample_coordinates(std::size_t n, std::size_t count, std::uint64_t seed);

struct GradientComparison {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;  // position within the compared arrays
};

// Relative error |a - n| / max(|a|, |n|), taken as 0 when both are 0.
GradientComparison compare_gradients(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace vsrhe
