#include "wm/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace wm {

double psnr(const Tensor& reference, const Tensor& test) {
  if (!reference.same_shape(test)) throw std::invalid_argument("psnr: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.numel(); ++i) {
    const double a = std::round(reference[i] * 255.0);
    const double b = std::round(test[i] * 255.0);
    acc += (a - b) * (a - b);
  }
  const double m = acc / double(reference.numel());
  if (m == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / m));
}

double bit_accuracy(const WatermarkMessage& expected, const WatermarkMessage& actual) {
  if (expected.length() != actual.length() || expected.length() == 0)
    throw std::invalid_argument("bit_accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < expected.length(); ++i)
    if (expected.bits[i] == actual.bits[i]) ++hits;
  return double(hits) / double(expected.length());
}

Tensor decoder_needed_map(DecoderNet& net, const ImageArray& host,
                          const WatermarkMessage& message) {
  validate_image(host);
  if (message.length() != net.message_length())
    throw std::invalid_argument("decoder_needed_map: message length mismatch");
  const Tensor batch = host.data.reshaped(
      {1, host.channels(), host.height(), host.width()});
  Trace trace;
  Tensor out = net.forward(batch, &trace, false);
  Tensor g(out.shape());
  for (std::size_t i = 0; i < g.numel(); ++i)
    g[i] = 2.0 * (out[i] - double(message.bits[i])) / double(g.numel());
  return net.backward(g, trace).reshaped(host.data.shape());
}

Tensor encoded_residual_map(const ImageArray& host, const ImageArray& embedded) {
  if (!host.data.same_shape(embedded.data))
    throw std::invalid_argument("encoded_residual_map: shape mismatch");
  return embedded.data - host.data;
}

Tensor normalize_map(const Tensor& map) {
  Tensor out(map.shape());
  double lo = std::abs(map[0]), hi = lo;
  for (std::size_t i = 0; i < map.numel(); ++i) {
    out[i] = std::abs(map[i]);
    lo = std::min(lo, out[i]);
    hi = std::max(hi, out[i]);
  }
  if (hi - lo <= 0.0) {
    out.zero();
    return out;
  }
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (out[i] - lo) / (hi - lo);
  return out;
}

double coupling_consistency(const Tensor& needed, const Tensor& residual) {
  const Tensor a = normalize_map(needed);
  const Tensor b = normalize_map(residual);
  if (!a.same_shape(b)) throw std::invalid_argument("coupling_consistency: shape mismatch");
  const double ma = a.mean(), mb = b.mean();
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double x = a[i] - ma, y = b[i] - mb;
    num += x * y;
    da += x * x;
    db += y * y;
  }
  if (da <= 0.0 || db <= 0.0) return 0.0;
  return num / std::sqrt(da * db);
}

}  // namespace wm
