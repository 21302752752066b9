#include "wm/types.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace wm {

using nlohmann::json;

void validate_image(const ImageArray& img) {
  if (img.data.rank() != 3) throw std::invalid_argument("image must be C×H×W");
  if (img.channels() < 1) throw std::invalid_argument("image needs C >= 1");
  if (img.height() % 8 != 0)
    throw std::invalid_argument("H not divisible by 8");
  if (img.width() % 8 != 0) throw std::invalid_argument("W not divisible by 8");
  for (std::size_t i = 0; i < img.data.numel(); ++i) {
    const double v = img.data[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw std::invalid_argument("image values must be finite and in [0,1]");
  }
}

namespace {
int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

WatermarkMessage message_from_hex(const std::string& hex, std::size_t length) {
  if (length < 1) throw std::invalid_argument("message length must be >= 1");
  if (hex.size() * 4 < length)
    throw std::invalid_argument("hex string encodes fewer than L bits");
  WatermarkMessage msg;
  msg.bits.reserve(length);
  for (char c : hex) {
    const int d = hex_digit(c);
    if (d < 0) throw std::invalid_argument("non-hex character in message");
    for (int b = 3; b >= 0 && msg.bits.size() < length; --b)
      msg.bits.push_back(uint8_t((d >> b) & 1));
    if (msg.bits.size() == length) break;
  }
  return msg;
}

std::string message_to_hex(const WatermarkMessage& msg) {
  static const char* digits = "0123456789ABCDEF";
  std::string out;
  int nibble = 0, count = 0;
  for (uint8_t b : msg.bits) {
    nibble = (nibble << 1) | (b & 1);
    if (++count == 4) {
      out.push_back(digits[nibble]);
      nibble = 0;
      count = 0;
    }
  }
  if (count > 0) out.push_back(digits[nibble << (4 - count)]);
  return out;
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::identity: return "identity";
    case NoiseKind::cropout: return "cropout";
    case NoiseKind::dropout: return "dropout";
    case NoiseKind::gaussian_noise: return "gaussian_noise";
    case NoiseKind::salt_pepper: return "salt_pepper";
    case NoiseKind::gaussian_blur: return "gaussian_blur";
    case NoiseKind::median_blur: return "median_blur";
    case NoiseKind::jpeg_simulated: return "jpeg_simulated";
    case NoiseKind::jpeg_real: return "jpeg_real";
    case NoiseKind::jpeg_mbrs: return "jpeg_mbrs";
  }
  throw std::logic_error("bad noise kind");
}

NoiseKind noise_kind_from_string(const std::string& s) {
  for (int k = int(NoiseKind::identity); k <= int(NoiseKind::jpeg_mbrs); ++k)
    if (to_string(NoiseKind(k)) == s) return NoiseKind(k);
  throw std::invalid_argument("unknown noise kind: " + s);
}

double NoiseSpec::value(const std::string& key) const {
  auto it = params.find(key);
  if (it == params.end())
    throw std::invalid_argument("noise param missing: " + key);
  if (it->second.size() != 1)
    throw std::invalid_argument("noise param is a range, expected point value: " + key);
  return it->second[0];
}

double NoiseSpec::value_or(const std::string& key, double fallback) const {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  if (it->second.size() != 1)
    throw std::invalid_argument("noise param is a range, expected point value: " + key);
  return it->second[0];
}

namespace {

void check_param_values(const NoiseSpec& spec, const std::string& key,
                        double lo, double hi) {
  auto it = spec.params.find(key);
  if (it == spec.params.end())
    throw std::invalid_argument("noise spec missing param: " + key);
  const auto& v = it->second;
  if (v.empty() || v.size() > 2)
    throw std::invalid_argument("noise param must hold 1 value or a [lo,hi] range");
  if (v.size() == 2 && v[0] > v[1])
    throw std::invalid_argument("inverted range for noise param: " + key);
  for (double x : v)
    if (!(x >= lo && x <= hi))
      throw std::invalid_argument("noise param " + key + " out of [" +
                                  std::to_string(lo) + "," + std::to_string(hi) + "]");
}

void check_window(const NoiseSpec& spec) {
  auto it = spec.params.find("window");
  if (it == spec.params.end())
    throw std::invalid_argument("noise spec missing param: window");
  for (double x : it->second) {
    const long w = std::lround(x);
    if (w < 1 || w % 2 == 0 || double(w) != x)
      throw std::invalid_argument("window must be an odd integer >= 1");
  }
}

}  // namespace

void validate_noise_spec(const NoiseSpec& spec) {
  switch (spec.kind) {
    case NoiseKind::identity:
      break;
    case NoiseKind::cropout:
    case NoiseKind::dropout:
      check_param_values(spec, "ratio", 0.0, 1.0);
      break;
    case NoiseKind::gaussian_noise:
      check_param_values(spec, "variance", 0.0, 1e9);
      break;
    case NoiseKind::salt_pepper:
      check_param_values(spec, "ratio", 0.0, 1.0);
      break;
    case NoiseKind::gaussian_blur:
      check_param_values(spec, "variance", 0.0, 1e9);
      break;
    case NoiseKind::median_blur:
      check_window(spec);
      break;
    case NoiseKind::jpeg_simulated:
    case NoiseKind::jpeg_real:
    case NoiseKind::jpeg_mbrs:
      check_param_values(spec, "quality_factor", 1.0, 100.0);
      break;
  }
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::deend: return "deend";
    case Variant::end_baseline: return "end_baseline";
    case Variant::de_a_end_b: return "de_a_end_b";
    case Variant::e_w_nd: return "e_w_nd";
  }
  throw std::logic_error("bad variant");
}

Variant variant_from_string(const std::string& s) {
  if (s == "deend") return Variant::deend;
  if (s == "end_baseline") return Variant::end_baseline;
  if (s == "de_a_end_b") return Variant::de_a_end_b;
  if (s == "e_w_nd") return Variant::e_w_nd;
  throw std::invalid_argument("unknown variant: " + s);
}

std::string to_string(UpsampleMode m) {
  switch (m) {
    case UpsampleMode::unpool: return "unpool";
    case UpsampleMode::transpose_conv: return "transpose_conv";
    case UpsampleMode::nearest_interp: return "nearest_interp";
  }
  throw std::logic_error("bad upsample mode");
}

UpsampleMode upsample_mode_from_string(const std::string& s) {
  if (s == "unpool") return UpsampleMode::unpool;
  if (s == "transpose_conv") return UpsampleMode::transpose_conv;
  if (s == "nearest_interp") return UpsampleMode::nearest_interp;
  throw std::invalid_argument("unknown upsample mode: " + s);
}

TrainConfig validate_config(const TrainConfig& config) {
  if (config.h % 8 != 0) throw std::invalid_argument("H not divisible by 8");
  if (config.w % 8 != 0) throw std::invalid_argument("W not divisible by 8");
  if (config.c < 1) throw std::invalid_argument("C must be >= 1");
  if (config.l < 1) throw std::invalid_argument("L must be >= 1");
  if (config.alpha < 0) throw std::invalid_argument("alpha must be >= 0");
  for (const LambdaTriple* t : {&config.lambda_phase1, &config.lambda_phase2})
    if (t->l1 < 0 || t->l2 < 0 || t->l3 < 0)
      throw std::invalid_argument("invalid λ triple (negative)");
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (config.learning_rate <= 0) throw std::invalid_argument("learning_rate must be > 0");
  if (config.lr_decay <= 0 || config.lr_decay > 1)
    throw std::invalid_argument("lr_decay must be in (0,1]");
  if (config.decoder_unions < 3 || config.decoder_unions > 7)
    throw std::invalid_argument("decoder_unions must be in [3,7]");
  validate_noise_spec(config.noise);
  return config;
}

namespace {

json noise_to_json(const NoiseSpec& spec) {
  json p = json::object();
  for (const auto& [k, v] : spec.params) {
    if (v.size() == 1)
      p[k] = v[0];
    else
      p[k] = v;
  }
  return json{{"kind", to_string(spec.kind)}, {"params", p}};
}

NoiseSpec noise_from_json(const json& j) {
  NoiseSpec spec;
  spec.kind = noise_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("params")) {
    for (const auto& [k, v] : j.at("params").items()) {
      if (v.is_array())
        spec.params[k] = v.get<std::vector<double>>();
      else
        spec.params[k] = {v.get<double>()};
    }
  }
  return spec;
}

json config_to_json_obj(const TrainConfig& c) {
  return json{
      {"h", c.h},
      {"w", c.w},
      {"c", c.c},
      {"l", c.l},
      {"alpha", c.alpha},
      {"lambda_phase1", {c.lambda_phase1.l1, c.lambda_phase1.l2, c.lambda_phase1.l3}},
      {"lambda_phase2", {c.lambda_phase2.l1, c.lambda_phase2.l2, c.lambda_phase2.l3}},
      {"phase_switch_epoch", c.phase_switch_epoch},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"lr_decay", c.lr_decay},
      {"resample_messages", c.resample_messages},
      {"seed", c.seed},
      {"noise", noise_to_json(c.noise)},
      {"variant", to_string(c.variant)},
      {"decoder_unions", c.decoder_unions},
      {"upsample_mode", to_string(c.upsample_mode)},
      {"paper_literal_gan", c.paper_literal_gan},
  };
}

TrainConfig config_from_json_obj(const json& j) {
  TrainConfig c;
  if (j.contains("h")) c.h = j.at("h").get<std::size_t>();
  if (j.contains("w")) c.w = j.at("w").get<std::size_t>();
  if (j.contains("c")) c.c = j.at("c").get<std::size_t>();
  if (j.contains("l")) c.l = j.at("l").get<std::size_t>();
  if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
  auto triple = [&](const char* key, LambdaTriple& out) {
    if (!j.contains(key)) return;
    auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 3) throw std::invalid_argument(std::string(key) + " must have 3 entries");
    out = {v[0], v[1], v[2]};
  };
  triple("lambda_phase1", c.lambda_phase1);
  triple("lambda_phase2", c.lambda_phase2);
  if (j.contains("phase_switch_epoch")) c.phase_switch_epoch = j.at("phase_switch_epoch").get<std::size_t>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("lr_decay")) c.lr_decay = j.at("lr_decay").get<double>();
  if (j.contains("resample_messages"))
    c.resample_messages = j.at("resample_messages").get<bool>();
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("noise")) c.noise = noise_from_json(j.at("noise"));
  if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
  if (j.contains("decoder_unions")) c.decoder_unions = j.at("decoder_unions").get<std::size_t>();
  if (j.contains("upsample_mode"))
    c.upsample_mode = upsample_mode_from_string(j.at("upsample_mode").get<std::string>());
  if (j.contains("paper_literal_gan")) c.paper_literal_gan = j.at("paper_literal_gan").get<bool>();
  return c;
}

}  // namespace

std::string config_to_json(const TrainConfig& config) {
  return config_to_json_obj(config).dump(2);
}

TrainConfig config_from_json(const std::string& json_text) {
  return config_from_json_obj(json::parse(json_text));
}

TrainConfig config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& p : parameters)
    if (p.name == name) return &p.value;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json manifest = json::array();
  for (const auto& p : ckpt.parameters)
    manifest.push_back(json{{"name", p.name}, {"shape", p.value.shape()}, {"dtype", "f32"}});
  const json header{
      {"format", "wm-checkpoint-v1"},
      {"config", json::parse(config_to_json(ckpt.config))},
      {"epoch", ckpt.epoch},
      {"rng_state", ckpt.rng_state},
      {"parameters", manifest},
  };
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  const uint64_t len = head.size();
  char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = char((len >> (8 * i)) & 0xff);
  out.write(lenbuf, 8);
  out.write(head.data(), std::streamsize(head.size()));
  std::vector<float> buf;
  for (const auto& p : ckpt.parameters) {
    buf.resize(p.value.numel());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = float(p.value[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              std::streamsize(buf.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char lenbuf[8];
  if (!in.read(lenbuf, 8)) throw std::runtime_error("truncated checkpoint header");
  uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= uint64_t(uint8_t(lenbuf[i])) << (8 * i);
  std::string head(len, '\0');
  if (!in.read(head.data(), std::streamsize(len)))
    throw std::runtime_error("truncated checkpoint header");
  json header = json::parse(head);
  if (header.value("format", "") != "wm-checkpoint-v1")
    throw std::runtime_error("unrecognized checkpoint format");

  Checkpoint ckpt;
  ckpt.config = config_from_json(header.at("config").dump());
  ckpt.epoch = header.at("epoch").get<std::size_t>();
  ckpt.rng_state = header.at("rng_state").get<std::string>();
  for (const auto& entry : header.at("parameters")) {
    NamedArray arr;
    arr.name = entry.at("name").get<std::string>();
    arr.value = Tensor(entry.at("shape").get<std::vector<std::size_t>>());
    std::vector<float> buf(arr.value.numel());
    if (!in.read(reinterpret_cast<char*>(buf.data()),
                 std::streamsize(buf.size() * sizeof(float))))
      throw std::runtime_error("truncated checkpoint payload");
    for (std::size_t i = 0; i < buf.size(); ++i) arr.value[i] = double(buf[i]);
    ckpt.parameters.push_back(std::move(arr));
  }
  return ckpt;
}

}  // namespace wm
