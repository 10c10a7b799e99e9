// Copyright 2026 The BlindPnP Authors.
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
#include <string_view>

#include "bpnp/simd/kernels.hpp"

namespace bpnp::simd {

#if defined(BPNP_HAVE_AVX2)
const Kernels& Avx2KernelTable();
#endif

const Kernels* Avx2Kernels() {
#if defined(BPNP_HAVE_AVX2)
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &Avx2KernelTable() : nullptr;
#else
  return nullptr;
#endif
}

const Kernels& Active() {
  static const Kernels& selected = []() -> const Kernels& {
    const char* env = std::getenv("BPNP_SIMD");
    if (env != nullptr && std::string_view(env) == "scalar") {
      return ScalarKernels();
    }
    if (const Kernels* avx2 = Avx2Kernels()) return *avx2;
    return ScalarKernels();
  }();
  return selected;
}

}  // namespace bpnp::simd
