#include "vsrhe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "vsrhe/error.hpp"
#include "vsrhe/rng.hpp"

namespace vsrhe {

std::vector<double> fd_gradient(const ScalarFn& f, const std::vector<double>& x, double h,
                                std::span<const std::size_t> coords) {
  if (!(h > 0.0)) throw Error("finite-difference step must be positive");
  std::vector<double> probe = x;
  std::vector<double> out;
  out.reserve(coords.size());
  for (std::size_t i : coords) {
    if (i >= x.size()) throw Error("finite-difference coordinate out of range");
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    out.push_back((fp - fm) / (2.0 * h));
  }
  return out;
}

std::vector<std::size_t> sample_coordinates(std::size_t n, std::size_t count, std::uint64_t seed) {
  if (count > n) throw Error("cannot sample more coordinates than exist");
  Xoshiro256 rng(seed);
  std::unordered_set<std::size_t> seen;
  std::vector<std::size_t> out;
  while (out.size() < count) {
    const auto i = static_cast<std::size_t>(rng.uniform_below(n));
    if (seen.insert(i).second) out.push_back(i);
  }
  return out;
}

GradientComparison compare_gradients(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw Error("gradient arrays differ in length");
  GradientComparison r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    const double rel = scale == 0.0 ? 0.0 : std::abs(analytic[i] - numeric[i]) / scale;
    if (rel > r.max_rel_error || std::isnan(rel)) {
      r.max_rel_error = rel;
      r.worst_index = i;
    }
  }
  return r;
}

}  // namespace vsrhe
