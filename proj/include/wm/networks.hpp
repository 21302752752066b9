#pragma once

#include <memory>
#include <string>
#include <vector>

#include "wm/layers.hpp"
#include "wm/types.hpp"

namespace wm {

// Conv-BN-ReLU stem, three downsampling SE blocks (stride-2 conv + BN +
// ReLU + SE gate), a tail of (decoder_unions - 3) Conv-BN-ReLU units, one
// non-downsampling SE block, then a linear head to length L. The same
// instance serves guidance (F = D(I_o)) and extraction (D(I_no)).
class DecoderNet {
 public:
  DecoderNet(const TrainConfig& config, std::string prefix, Rng& rng);

  // (N,C,H,W) -> (N,L)
  Tensor forward(const Tensor& images, Trace* trace, bool training);
  Tensor backward(const Tensor& grad_out, Trace& trace);
  void collect_params(std::vector<Param*>& out);

  std::size_t message_length() const { return l_; }
  void check_image_shape(const Tensor& images) const;

 private:
  std::size_t c_, h_, w_, l_;
  Sequential net_;
};

// Linear stem to an H/8×W/8 map, Conv-BN-ReLU, three up-sampling
// Conv-BN-ReLU blocks, and a final conv producing the residual. The stem
// width is 2L (latent feature ‖ message), or L for the e_w_nd variant.
// The end_baseline variant replaces the whole stack with a HiDDeN-style
// convolutional encoder over the image with the message replicated
// spatially and concatenated channel-wise.
class EncoderNet {
 public:
  enum class InputKind { feature_and_message, message_only, image_and_message };

  EncoderNet(const TrainConfig& config, InputKind kind, std::string prefix, Rng& rng);

  // feature_and_message / message_only: (N,stem width) -> (N,C,H,W)
  // image_and_message: (N,C+L,H,W) -> (N,C,H,W)
  Tensor forward(const Tensor& input, Trace* trace, bool training);
  Tensor backward(const Tensor& grad_out, Trace& trace);
  void collect_params(std::vector<Param*>& out);

  InputKind input_kind() const { return kind_; }
  std::size_t stem_width() const { return stem_width_; }

 private:
  void shrink_residual_head(const std::string& prefix);

  std::size_t c_, h_, w_, l_;
  InputKind kind_;
  std::size_t stem_width_ = 0;
  Sequential net_;
};

// Four Conv-BN-ReLU blocks (the downsampling ones stride-2), global
// average pooling and a linear map to one logit.
class DiscriminatorNet {
 public:
  DiscriminatorNet(const TrainConfig& config, std::string prefix, Rng& rng);

  // (N,C,H,W) -> (N,1) logits
  Tensor forward_logits(const Tensor& images, Trace* trace, bool training);
  Tensor backward(const Tensor& grad_out, Trace& trace);
  void collect_params(std::vector<Param*>& out);

 private:
  std::size_t c_;
  Sequential net_;
};

struct ModelBundle {
  TrainConfig config;
  std::shared_ptr<DecoderNet> decoder;      // guidance; also extraction unless de_a_end_b
  std::shared_ptr<DecoderNet> decoder_b;    // extraction decoder for de_a_end_b
  std::shared_ptr<EncoderNet> encoder;
  std::shared_ptr<DiscriminatorNet> discriminator;

  DecoderNet& guidance_decoder() { return *decoder; }
  DecoderNet& extraction_decoder() { return decoder_b ? *decoder_b : *decoder; }

  std::vector<Param*> generator_params() const;
  std::vector<Param*> discriminator_params() const;
  // Manifest order used by checkpoints and `describe`.
  std::vector<Param*> all_params() const;
};

ModelBundle make_variant(const TrainConfig& config);
// Standalone decoder builder (decoder_unions in [3,7]).
std::shared_ptr<DecoderNet> make_decoder(const TrainConfig& config, Rng& rng,
                                         const std::string& prefix = "decoder");

// Spec-level operations on single images. All are inference mode.
LatentFeature decoder_forward(DecoderNet& net, const ImageArray& image);
// Residual from latent feature + message (deend-style encoders only).
Tensor encoder_forward(EncoderNet& net, const LatentFeature& feature,
                       const WatermarkMessage& message);
ImageArray embed(ModelBundle& bundle, const ImageArray& host,
                 const WatermarkMessage& message, double alpha);
WatermarkMessage extract(DecoderNet& net, const ImageArray& image);
// Per-bit decoder outputs (bit i is 1 iff value > 0.5).
std::vector<double> extract_confidences(DecoderNet& net, const ImageArray& image);
double discriminator_forward(DiscriminatorNet& net, const ImageArray& image);

// Builds the (N, C+L, H, W) input of the end_baseline encoder: message bits
// replicated spatially, concatenated channel-wise to the image batch.
Tensor baseline_encoder_input(const Tensor& images, const Tensor& messages);

Checkpoint make_checkpoint(const ModelBundle& bundle, std::size_t epoch,
                           const std::string& rng_state);
void load_parameters(ModelBundle& bundle, const Checkpoint& ckpt);
ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt);

}  // namespace wm
