#include "wm/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace wm::kernels {
namespace {

const Ops* g_active = nullptr;
const char* g_name = "scalar";

void init_once() {
  if (g_active) return;
  const Ops* pick = nullptr;
  const char* name = "scalar";
  if (avx2_supported() && avx2_ops()) {
    pick = avx2_ops();
    name = "avx2";
  }
  if (const char* env = std::getenv("WM_KERNEL_BACKEND")) {
    const std::string want(env);
    if (want == "scalar") {
      pick = nullptr;
      name = "scalar";
    } else if (want == "avx2") {
      if (!avx2_supported() || !avx2_ops())
        throw std::runtime_error("WM_KERNEL_BACKEND=avx2 but AVX2 unavailable");
      pick = avx2_ops();
      name = "avx2";
    }
  }
  g_active = pick ? pick : &scalar_ops();
  g_name = name;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Ops& ops() {
  init_once();
  return *g_active;
}

std::string_view backend_name() {
  init_once();
  return g_name;
}

void set_backend(std::string_view name) {
  init_once();
  if (name == "scalar") {
    g_active = &scalar_ops();
    g_name = "scalar";
  } else if (name == "avx2") {
    if (!avx2_supported() || !avx2_ops())
      throw std::runtime_error("AVX2 backend unavailable");
    g_active = avx2_ops();
    g_name = "avx2";
  } else {
    throw std::invalid_argument("unknown kernel backend: " + std::string(name));
  }
}

}  // namespace wm::kernels
