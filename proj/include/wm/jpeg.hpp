#pragma once

#include <array>

#include "wm/tensor.hpp"

namespace wm {

// Quantization tables under the libjpeg scaling convention:
// scale = 5000/QF for QF < 50 else 200 - 2*QF, entry = clamp((t*scale+50)/100, 1, 255).
std::array<int, 64> luminance_quant_table(double quality_factor);
std::array<int, 64> chrominance_quant_table(double quality_factor);

// Differentiable baseline-JPEG simulation on a C×H×W image in [0,1]:
// RGB→YCbCr (C==3), 8×8 orthonormal block DCT, quantization by the scaled
// standard tables with a straight-through rounding surrogate, dequantize,
// inverse DCT, color transform back, clamp. No chroma subsampling.
// `round_coefficients=false` skips the rounding step (used by gradient and
// round-trip checks). When `preclamp` is given it receives the values
// before the final clamp.
Tensor jpeg_simulate(const Tensor& image, double quality_factor,
                     bool round_coefficients = true, Tensor* preclamp = nullptr);

// Bit-exact baseline JPEG encode/decode round trip through the system
// codec (8-bit, codec-default chroma subsampling). Non-differentiable.
Tensor jpeg_real_roundtrip(const Tensor& image, int quality_factor);

}  // namespace wm
