#pragma once

#include <functional>

#include "wm/layers.hpp"
#include "wm/types.hpp"

namespace wm {

struct DistortionContext {
  const Tensor* host = nullptr;  // C×H×W, required by cropout/dropout
  uint64_t rng_seed = 0;
  bool training = false;
};

// Maps the gradient w.r.t. the distorted image back to the watermarked
// image. Non-differentiable kinds (jpeg_real, salt_pepper, median_blur)
// pass gradients straight through.
using NoiseBackward = std::function<Tensor(const Tensor&)>;

struct NoiseResult {
  Tensor output;
  NoiseBackward backward;
};

// Applies one distortion to a C×H×W image in [0,1]. Deterministic given
// (spec, ctx.rng_seed). Point-valued parameters only; use
// sample_training_spec to collapse ranges first.
Tensor apply_noise(const NoiseSpec& spec, const Tensor& watermarked,
                   const DistortionContext& ctx);
NoiseResult apply_noise_with_grad(const NoiseSpec& spec, const Tensor& watermarked,
                                  const DistortionContext& ctx);

// Uniformly samples every range-valued parameter within its closed range;
// point-valued specs are returned unchanged.
NoiseSpec sample_training_spec(const NoiseSpec& spec, Rng& rng);

}  // namespace wm
