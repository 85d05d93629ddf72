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

#include <cstdlib>
#include <string>

#include "relana/simd.hpp"

namespace relana::simd {

std::string_view level_name(Level level) {
  switch (level) {
    case Level::Scalar: return "scalar";
    case Level::Avx2: return "avx2";
    case Level::Neon: return "neon";
  }
  return "unknown";
}

namespace {

bool cpu_has_avx2() {
#if defined(RELANA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

bool forced_scalar() {
  const char* env = std::getenv("RELANA_SIMD");
  return env != nullptr && std::string(env) == "scalar";
}

}  // namespace

Level detected_level() {
  if (forced_scalar()) return Level::Scalar;
#if defined(RELANA_HAVE_AVX2)
  if (cpu_has_avx2()) return Level::Avx2;
#endif
#if defined(RELANA_HAVE_NEON)
  return Level::Neon;
#endif
  return Level::Scalar;
}

const Kernels* kernels_for(Level level) {
  switch (level) {
    case Level::Scalar: return &scalar_kernels();
    case Level::Avx2:
#if defined(RELANA_HAVE_AVX2)
      if (cpu_has_avx2()) return &avx2_kernels();
#endif
      return nullptr;
    case Level::Neon:
#if defined(RELANA_HAVE_NEON)
      return &neon_kernels();
#else
      return nullptr;
#endif
  }
  return nullptr;
}

Level active_level() {
  static const Level level = detected_level();
  return level;
}

const Kernels& active() {
  static const Kernels& k = *kernels_for(active_level());
  return k;
}

}  // namespace relana::simd
