#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision inner loops used by the layer implementations.
// Two backends are provided: a scalar reference and an AVX2/FMA variant.
// The active backend is chosen at startup from CPUID and can be forced
// with the WM_KERNEL_BACKEND environment variable ("scalar" or "avx2").

namespace wm::kernels {

struct Ops {
  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
  // sum_i (a[i]-b[i])^2
  double (*sqdiff_sum)(const double* a, const double* b, std::size_t n);
  // y[i] += x[i]
  void (*add)(const double* x, double* y, std::size_t n);
  // y[i] *= x[i]
  void (*mul)(const double* x, double* y, std::size_t n);
  // x[i] *= alpha
  void (*scale)(double alpha, double* x, std::size_t n);
  // x[i] = min(max(x[i], 0), 1)
  void (*clamp01)(double* x, std::size_t n);
  // Fused Adam update: m,v moments, g gradient, p parameter.
  // m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g^2;
  // p -= lr * (m/c1) / (sqrt(v/c2) + eps)
  void (*adam_step)(double* p, double* m, double* v, const double* g,
                    std::size_t n, double lr, double b1, double b2,
                    double eps, double c1, double c2);
};

// Active backend (runtime-dispatched).
const Ops& ops();
// Scalar reference backend, always available.
const Ops& scalar_ops();
// AVX2 backend table, or nullptr when unsupported by the build/CPU.
const Ops* avx2_ops();

bool avx2_supported();
std::string_view backend_name();
// Force a backend ("scalar" or "avx2"); throws on unavailable choice.
void set_backend(std::string_view name);

}  // namespace wm::kernels
