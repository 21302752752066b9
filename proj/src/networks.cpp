#include "wm/networks.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace wm {

namespace {

constexpr std::size_t kWidth = 64;       // feature channels everywhere
constexpr std::size_t kSeReduction = 8;  // SE bottleneck ratio

class Reshape4d : public Layer {
 public:
  Reshape4d(std::size_t c, std::size_t h, std::size_t w) : c_(c), h_(h), w_(w) {}
  Tensor forward(const Tensor& x, Trace* trace, bool) override {
    const std::size_t n = x.dim(0);
    if (trace) {
      Tensor shape({x.rank()});
      for (std::size_t i = 0; i < x.rank(); ++i) shape[i] = double(x.dim(i));
      trace->push(std::move(shape));
    }
    return x.reshaped({n, c_, h_, w_});
  }
  Tensor backward(const Tensor& g, Trace& trace) override {
    Tensor shape = trace.pop();
    std::vector<std::size_t> dims(shape.numel());
    for (std::size_t i = 0; i < dims.size(); ++i) dims[i] = std::size_t(shape[i]);
    return g.reshaped(dims);
  }

 private:
  std::size_t c_, h_, w_;
};

void add_conv_bn_relu(Sequential& net, const std::string& name, std::size_t cin,
                      std::size_t cout, std::size_t stride, Rng& rng) {
  net.emplace<Conv2d>(name + ".conv", cin, cout, 3, stride, 1, rng);
  net.emplace<BatchNorm2d>(name + ".bn", cout);
  net.emplace<ReLU>();
}

}  // namespace

// ---------------------------------------------------------------------------
// DecoderNet

DecoderNet::DecoderNet(const TrainConfig& config, std::string prefix, Rng& rng)
    : c_(config.c), h_(config.h), w_(config.w), l_(config.l) {
  if (config.decoder_unions < 3 || config.decoder_unions > 7)
    throw std::invalid_argument("decoder_unions must be in [3,7]");
  add_conv_bn_relu(net_, prefix + ".stem", c_, kWidth, 1, rng);
  for (int i = 1; i <= 3; ++i) {
    const std::string name = prefix + ".down" + std::to_string(i);
    add_conv_bn_relu(net_, name, kWidth, kWidth, 2, rng);
    net_.emplace<SEGate>(name + ".se", kWidth, kSeReduction, rng);
  }
  for (std::size_t i = 1; i + 3 <= config.decoder_unions; ++i)
    add_conv_bn_relu(net_, prefix + ".tail" + std::to_string(i), kWidth, kWidth, 1, rng);
  add_conv_bn_relu(net_, prefix + ".se_tail", kWidth, kWidth, 1, rng);
  net_.emplace<SEGate>(prefix + ".se_tail.se", kWidth, kSeReduction, rng);
  net_.emplace<Flatten>();
  net_.emplace<Linear>(prefix + ".head", kWidth * (h_ / 8) * (w_ / 8), l_, rng);
}

void DecoderNet::check_image_shape(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != c_ || images.dim(2) != h_ ||
      images.dim(3) != w_)
    throw std::invalid_argument("decoder: image shape mismatch");
}

Tensor DecoderNet::forward(const Tensor& images, Trace* trace, bool training) {
  check_image_shape(images);
  return net_.forward(images, trace, training);
}

Tensor DecoderNet::backward(const Tensor& grad_out, Trace& trace) {
  return net_.backward(grad_out, trace);
}

void DecoderNet::collect_params(std::vector<Param*>& out) { net_.collect_params(out); }

// ---------------------------------------------------------------------------
// EncoderNet

EncoderNet::EncoderNet(const TrainConfig& config, InputKind kind, std::string prefix,
                       Rng& rng)
    : c_(config.c), h_(config.h), w_(config.w), l_(config.l), kind_(kind) {
  if (kind_ == InputKind::image_and_message) {
    add_conv_bn_relu(net_, prefix + ".block1", c_ + l_, kWidth, 1, rng);
    for (int i = 2; i <= 4; ++i)
      add_conv_bn_relu(net_, prefix + ".block" + std::to_string(i), kWidth, kWidth, 1, rng);
    net_.emplace<Conv2d>(prefix + ".out", kWidth, c_, 3, 1, 1, rng);
    shrink_residual_head(prefix);
    return;
  }
  stem_width_ = kind_ == InputKind::message_only ? l_ : 2 * l_;
  const std::size_t h8 = h_ / 8, w8 = w_ / 8;
  // The stem spans all kWidth channels of the seed map; a single-channel
  // seed would bottleneck the message to h8*w8 scalars.
  net_.emplace<Linear>(prefix + ".stem", stem_width_, kWidth * h8 * w8, rng);
  net_.emplace<Reshape4d>(kWidth, h8, w8);
  add_conv_bn_relu(net_, prefix + ".conv_in", kWidth, kWidth, 1, rng);
  for (int i = 1; i <= 3; ++i) {
    const std::string name = prefix + ".up" + std::to_string(i);
    const std::size_t hin = h8 << (i - 1), win = w8 << (i - 1);
    switch (config.upsample_mode) {
      case UpsampleMode::nearest_interp:
        net_.emplace<UpsampleNearest2x>();
        break;
      case UpsampleMode::unpool:
        net_.emplace<Unpool2x>(name + ".unpool", kWidth, hin, win, rng);
        break;
      case UpsampleMode::transpose_conv:
        net_.emplace<ConvTranspose2d>(name + ".tconv", kWidth, kWidth, rng);
        break;
    }
    add_conv_bn_relu(net_, name, kWidth, kWidth, 1, rng);
  }
  net_.emplace<Conv2d>(prefix + ".out", kWidth, c_, 3, 1, 1, rng);
  shrink_residual_head(prefix);
}

void EncoderNet::shrink_residual_head(const std::string& prefix) {
  // Start the residual near zero so the embedded image begins unsaturated;
  // a full-scale random head clamps most pixels and starves the gradients.
  std::vector<Param*> params;
  net_.collect_params(params);
  for (Param* p : params)
    if (p->name == prefix + ".out.weight")
      for (std::size_t i = 0; i < p->value.numel(); ++i) p->value[i] *= 0.1;
}

Tensor EncoderNet::forward(const Tensor& input, Trace* trace, bool training) {
  if (kind_ == InputKind::image_and_message) {
    if (input.rank() != 4 || input.dim(1) != c_ + l_)
      throw std::invalid_argument("encoder: expected (N,C+L,H,W) input");
  } else {
    if (input.rank() != 2 || input.dim(1) != stem_width_)
      throw std::invalid_argument("encoder: stem width mismatch");
  }
  return net_.forward(input, trace, training);
}

Tensor EncoderNet::backward(const Tensor& grad_out, Trace& trace) {
  return net_.backward(grad_out, trace);
}

void EncoderNet::collect_params(std::vector<Param*>& out) { net_.collect_params(out); }

// ---------------------------------------------------------------------------
// DiscriminatorNet

DiscriminatorNet::DiscriminatorNet(const TrainConfig& config, std::string prefix, Rng& rng)
    : c_(config.c) {
  add_conv_bn_relu(net_, prefix + ".block1", c_, kWidth, 1, rng);
  for (int i = 2; i <= 4; ++i)
    add_conv_bn_relu(net_, prefix + ".block" + std::to_string(i), kWidth, kWidth, 2, rng);
  net_.emplace<GlobalAvgPool>();
  net_.emplace<Linear>(prefix + ".head", kWidth, 1, rng);
}

Tensor DiscriminatorNet::forward_logits(const Tensor& images, Trace* trace, bool training) {
  if (images.rank() != 4 || images.dim(1) != c_)
    throw std::invalid_argument("discriminator: image shape mismatch");
  return net_.forward(images, trace, training);
}

Tensor DiscriminatorNet::backward(const Tensor& grad_out, Trace& trace) {
  return net_.backward(grad_out, trace);
}

void DiscriminatorNet::collect_params(std::vector<Param*>& out) {
  net_.collect_params(out);
}

// ---------------------------------------------------------------------------
// Bundle

std::vector<Param*> ModelBundle::generator_params() const {
  std::vector<Param*> out;
  encoder->collect_params(out);
  decoder->collect_params(out);
  if (decoder_b) decoder_b->collect_params(out);
  return out;
}

std::vector<Param*> ModelBundle::discriminator_params() const {
  std::vector<Param*> out;
  discriminator->collect_params(out);
  return out;
}

std::vector<Param*> ModelBundle::all_params() const {
  std::vector<Param*> out;
  decoder->collect_params(out);
  if (decoder_b) decoder_b->collect_params(out);
  encoder->collect_params(out);
  discriminator->collect_params(out);
  return out;
}

ModelBundle make_variant(const TrainConfig& config) {
  validate_config(config);
  Rng rng(config.seed);
  ModelBundle bundle;
  bundle.config = config;
  switch (config.variant) {
    case Variant::deend:
      bundle.decoder = make_decoder(config, rng);
      bundle.encoder = std::make_shared<EncoderNet>(
          config, EncoderNet::InputKind::feature_and_message, "encoder", rng);
      break;
    case Variant::de_a_end_b:
      bundle.decoder = make_decoder(config, rng, "decoder");
      bundle.decoder_b = make_decoder(config, rng, "decoder_b");
      bundle.encoder = std::make_shared<EncoderNet>(
          config, EncoderNet::InputKind::feature_and_message, "encoder", rng);
      break;
    case Variant::e_w_nd:
      bundle.decoder = make_decoder(config, rng);
      bundle.encoder = std::make_shared<EncoderNet>(
          config, EncoderNet::InputKind::message_only, "encoder", rng);
      break;
    case Variant::end_baseline:
      bundle.decoder = make_decoder(config, rng);
      bundle.encoder = std::make_shared<EncoderNet>(
          config, EncoderNet::InputKind::image_and_message, "encoder", rng);
      break;
  }
  bundle.discriminator = std::make_shared<DiscriminatorNet>(config, "discriminator", rng);
  return bundle;
}

std::shared_ptr<DecoderNet> make_decoder(const TrainConfig& config, Rng& rng,
                                         const std::string& prefix) {
  return std::make_shared<DecoderNet>(config, prefix, rng);
}

// ---------------------------------------------------------------------------
// Single-image operations

namespace {

Tensor as_batch(const ImageArray& image) {
  return image.data.reshaped({1, image.channels(), image.height(), image.width()});
}

Tensor message_tensor(const WatermarkMessage& message) {
  Tensor t({1, message.length()});
  for (std::size_t i = 0; i < message.length(); ++i) t[i] = double(message.bits[i]);
  return t;
}

}  // namespace

LatentFeature decoder_forward(DecoderNet& net, const ImageArray& image) {
  const Tensor out = net.forward(as_batch(image), nullptr, false);
  LatentFeature f;
  f.values.assign(out.data(), out.data() + out.numel());
  return f;
}

Tensor encoder_forward(EncoderNet& net, const LatentFeature& feature,
                       const WatermarkMessage& message) {
  if (feature.values.size() != message.length())
    throw std::invalid_argument("feature/message length mismatch");
  if (net.input_kind() != EncoderNet::InputKind::feature_and_message)
    throw std::invalid_argument("encoder does not take (feature, message) input");
  Tensor in({1, 2 * message.length()});
  for (std::size_t i = 0; i < feature.values.size(); ++i) in[i] = feature.values[i];
  for (std::size_t i = 0; i < message.length(); ++i)
    in[feature.values.size() + i] = double(message.bits[i]);
  Tensor out = net.forward(in, nullptr, false);
  return out.reshaped({out.dim(1), out.dim(2), out.dim(3)});
}

Tensor baseline_encoder_input(const Tensor& images, const Tensor& messages) {
  const std::size_t n = images.dim(0), h = images.dim(2), w = images.dim(3);
  const std::size_t l = messages.dim(1);
  Tensor planes({n, l, h, w});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t b = 0; b < l; ++b) {
      const double v = messages[in * l + b];
      double* base = planes.data() + ((in * l + b) * h) * w;
      for (std::size_t i = 0; i < h * w; ++i) base[i] = v;
    }
  return concat_channels(images, planes);
}

ImageArray embed(ModelBundle& bundle, const ImageArray& host,
                 const WatermarkMessage& message, double alpha) {
  if (alpha < 0) throw std::invalid_argument("alpha must be >= 0");
  if (message.length() != bundle.config.l)
    throw std::invalid_argument("message length mismatch with model L");
  const Tensor host_batch = as_batch(host);
  const Tensor msgs = message_tensor(message);

  Tensor residual;
  switch (bundle.config.variant) {
    case Variant::deend:
    case Variant::de_a_end_b: {
      const Tensor feature = bundle.guidance_decoder().forward(host_batch, nullptr, false);
      residual = bundle.encoder->forward(concat_cols(feature, msgs), nullptr, false);
      break;
    }
    case Variant::e_w_nd:
      residual = bundle.encoder->forward(msgs, nullptr, false);
      break;
    case Variant::end_baseline:
      residual = bundle.encoder->forward(baseline_encoder_input(host_batch, msgs),
                                         nullptr, false);
      break;
  }

  ImageArray out;
  out.role = ImageRole::watermarked;
  out.data = host.data + (alpha * residual.reshaped(host.data.shape()));
  clamp01(out.data);
  return out;
}

WatermarkMessage extract(DecoderNet& net, const ImageArray& image) {
  const std::vector<double> conf = extract_confidences(net, image);
  WatermarkMessage msg;
  msg.bits.reserve(conf.size());
  for (double v : conf) msg.bits.push_back(v > 0.5 ? 1 : 0);
  return msg;
}

std::vector<double> extract_confidences(DecoderNet& net, const ImageArray& image) {
  const Tensor out = net.forward(as_batch(image), nullptr, false);
  return std::vector<double>(out.data(), out.data() + out.numel());
}

double discriminator_forward(DiscriminatorNet& net, const ImageArray& image) {
  const Tensor logits = net.forward_logits(as_batch(image), nullptr, false);
  return 1.0 / (1.0 + std::exp(-logits[0]));
}

// ---------------------------------------------------------------------------
// Checkpoints

Checkpoint make_checkpoint(const ModelBundle& bundle, std::size_t epoch,
                           const std::string& rng_state) {
  Checkpoint ckpt;
  ckpt.config = bundle.config;
  ckpt.epoch = epoch;
  ckpt.rng_state = rng_state;
  for (const Param* p : bundle.all_params())
    ckpt.parameters.push_back({p->name, p->value});
  return ckpt;
}

void load_parameters(ModelBundle& bundle, const Checkpoint& ckpt) {
  const std::vector<Param*> params = bundle.all_params();
  if (params.size() != ckpt.parameters.size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedArray& src = ckpt.parameters[i];
    if (params[i]->name != src.name)
      throw std::runtime_error("checkpoint parameter name mismatch: " + src.name);
    if (!params[i]->value.same_shape(src.value))
      throw std::runtime_error("checkpoint parameter shape mismatch: " + src.name);
    params[i]->value = src.value;
  }
}

ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt) {
  ModelBundle bundle = make_variant(ckpt.config);
  load_parameters(bundle, ckpt);
  return bundle;
}

}  // namespace wm
