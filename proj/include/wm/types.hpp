#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wm/tensor.hpp"

namespace wm {

enum class ImageRole { host, watermarked, distorted };

// C×H×W real image in [0,1].
struct ImageArray {
  Tensor data;  // shape (C,H,W)
  ImageRole role = ImageRole::host;

  std::size_t channels() const { return data.dim(0); }
  std::size_t height() const { return data.dim(1); }
  std::size_t width() const { return data.dim(2); }
};

// Throws std::invalid_argument when the invariants do not hold:
// finite entries in [0,1], C >= 1, H and W divisible by 8.
void validate_image(const ImageArray& img);

struct WatermarkMessage {
  std::vector<uint8_t> bits;  // entries in {0,1}
  std::size_t length() const { return bits.size(); }
};

struct LatentFeature {
  std::vector<double> values;
};

// Big-endian bit order; the first L bits of the hex string are taken.
WatermarkMessage message_from_hex(const std::string& hex, std::size_t length);
std::string message_to_hex(const WatermarkMessage& msg);

enum class NoiseKind {
  identity,
  cropout,
  dropout,
  gaussian_noise,
  salt_pepper,
  gaussian_blur,
  median_blur,
  jpeg_simulated,
  jpeg_real,
  jpeg_mbrs,
};

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& s);

// One distortion family plus parameters. A parameter holds one value,
// or two values [lo,hi] meaning a closed range sampled during training.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::identity;
  std::map<std::string, std::vector<double>> params;

  bool has(const std::string& key) const { return params.count(key) != 0; }
  // Point value of a parameter; throws if absent or range-valued.
  double value(const std::string& key) const;
  double value_or(const std::string& key, double fallback) const;
};

void validate_noise_spec(const NoiseSpec& spec);

enum class Variant { deend, end_baseline, de_a_end_b, e_w_nd };
enum class UpsampleMode { unpool, transpose_conv, nearest_interp };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
std::string to_string(UpsampleMode m);
UpsampleMode upsample_mode_from_string(const std::string& s);

struct LambdaTriple {
  double l1 = 0, l2 = 0, l3 = 0;
  bool operator==(const LambdaTriple&) const = default;
};

struct TrainConfig {
  std::size_t h = 128;
  std::size_t w = 128;
  std::size_t c = 3;
  std::size_t l = 64;
  double alpha = 1.0;
  LambdaTriple lambda_phase1{1.0, 10.0, 0.0001};
  LambdaTriple lambda_phase2{10.0, 1.0, 0.0001};
  std::size_t phase_switch_epoch = 20;
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // per-epoch multiplicative decay, (0,1]
  // true: fresh random message per image per batch (the usual regime);
  // false: one persistent message per image, for overfit sanity runs.
  bool resample_messages = true;
  uint64_t seed = 0;
  NoiseSpec noise;
  Variant variant = Variant::deend;
  std::size_t decoder_unions = 5;
  UpsampleMode upsample_mode = UpsampleMode::nearest_interp;
  // When set, the GAN losses follow the printed forms (generator minimizes
  // log(p_em); discriminator minimizes log(1-p_em) with no real-image term)
  // instead of the standard non-saturating convention.
  bool paper_literal_gan = false;
};

// Returns the config unchanged when every invariant holds; otherwise throws
// std::invalid_argument with a description of the first violation.
TrainConfig validate_config(const TrainConfig& config);

std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& json_text);
TrainConfig config_from_file(const std::string& path);

struct NamedArray {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  TrainConfig config;
  std::vector<NamedArray> parameters;  // manifest order
  std::size_t epoch = 0;
  std::string rng_state;  // serialized engine state

  const Tensor* find(const std::string& name) const;
};

// Archive layout: 8-byte little-endian header length, JSON header
// (config, epoch, rng_state, parameter manifest with shapes/dtypes),
// then raw little-endian float32 payloads in manifest order.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace wm
