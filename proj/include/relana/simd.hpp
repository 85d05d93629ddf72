// Copyright 2026 The relana Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace relana::simd {

enum class Level { Scalar, Avx2, Neon };

std::string_view level_name(Level level);

/// Kernel table for one instruction-set level. Every level computes the same
/// quantities as the scalar reference; only summation order (and FMA
/// contraction) may differ.
struct Kernels {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  /// out[r] = <rows[r*stride .. r*stride+n), q> for r in [0, count)
  void (*gemv_rows)(const double* rows, std::size_t count, std::size_t stride,
                    const double* q, std::size_t n, double* out);
};

const Kernels& scalar_kernels();
#if defined(RELANA_HAVE_AVX2)
const Kernels& avx2_kernels();
#endif
#if defined(RELANA_HAVE_NEON)
const Kernels& neon_kernels();
#endif

/// Best level supported by both the build and the running CPU. The
/// environment variable RELANA_SIMD=scalar forces the reference kernels.
Level detected_level();

/// Kernels in use for this process; resolved once on first call.
const Kernels& active();
Level active_level();

/// Returns the kernel table for `level` if this build and CPU can run it.
const Kernels* kernels_for(Level level);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace relana::simd
