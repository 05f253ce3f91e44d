// Fixed-width float vectors via the GCC/Clang vector extension. The lane
// count is part of the arithmetic order, so results do not depend on which
// instruction set the compiler lowers these to.
#pragma once

#include <cstddef>
#include <cstring>

namespace vsrhe::simd {

inline constexpr std::size_t kLanes = 16;
typedef float f16v __attribute__((vector_size(kLanes * sizeof(float))));

inline f16v load(const float* p) {
  f16v v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store(float* p, f16v v) { std::memcpy(p, &v, sizeof v); }

inline f16v splat(float x) { return f16v{} + x; }

// Pairwise tree over the lanes.
inline float reduce_add(f16v v) {
  float a[kLanes];
  std::memcpy(a, &v, sizeof v);
  for (std::size_t w = kLanes / 2; w > 0; w /= 2)
    for (std::size_t i = 0; i < w; ++i) a[i] += a[i + w];
  return a[0];
}

inline float reduce_max(f16v v) {
  float a[kLanes];
  std::memcpy(a, &v, sizeof v);
  float m = a[0];
  for (std::size_t i = 1; i < kLanes; ++i) m = a[i] > m ? a[i] : m;
  return m;
}

inline f16v vmax(f16v a, f16v b) { return a > b ? a : b; }

}  // namespace vsrhe::simd
