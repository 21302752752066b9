#pragma once

#include "wm/networks.hpp"
#include "wm/types.hpp"

namespace wm {

// PSNR over 8-bit quantized images (both rounded to 0..255). Identical
// images report 100 dB.
double psnr(const Tensor& reference, const Tensor& test);

double bit_accuracy(const WatermarkMessage& expected, const WatermarkMessage& actual);

// Gradient of MSE(D(I_o), M) with respect to the host pixels, batch norm
// in inference mode: where the decoder looks for the message.
Tensor decoder_needed_map(DecoderNet& net, const ImageArray& host,
                          const WatermarkMessage& message);

// Signed residual the encoder actually wrote, I_em - I_o.
Tensor encoded_residual_map(const ImageArray& host, const ImageArray& embedded);

// Magnitude map rescaled to [0,1] by a global min-max over |x|; a constant
// map collapses to zeros.
Tensor normalize_map(const Tensor& map);

// Centered cosine similarity of the two normalized maps, in [-1,1].
// Either map having zero variance yields 0.
double coupling_consistency(const Tensor& needed, const Tensor& residual);

}  // namespace wm
