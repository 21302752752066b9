#include "wm/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wm/jpeg.hpp"

namespace wm {

namespace {

NoiseBackward identity_backward() {
  return [](const Tensor& g) { return g; };
}

void require_host(const DistortionContext& ctx, const Tensor& wm) {
  if (!ctx.host || !ctx.host->same_shape(wm))
    throw std::invalid_argument("distortion context needs a host of matching shape");
}

// Mask is 1 where the watermarked pixel is kept, 0 where the host replaces it.
NoiseResult mix_with_host(const Tensor& wm, const Tensor& host, const Tensor& keep_mask) {
  Tensor out(wm.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = keep_mask[i] * wm[i] + (1.0 - keep_mask[i]) * host[i];
  NoiseBackward back = [mask = keep_mask](const Tensor& g) {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] *= mask[i];
    return gx;
  };
  return {std::move(out), std::move(back)};
}

Tensor broadcast_pixel_mask(const std::vector<double>& pixel_mask,
                            std::size_t c, std::size_t plane) {
  Tensor mask(std::vector<std::size_t>{c * plane});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i) mask[ch * plane + i] = pixel_mask[i];
  return mask;
}

NoiseResult cropout(const Tensor& wm, double ratio, const DistortionContext& ctx) {
  require_host(ctx, wm);
  const std::size_t c = wm.dim(0), h = wm.dim(1), w = wm.dim(2);
  Tensor keep = Tensor::full({c * h * w}, 1.0);
  if (ratio >= 1.0) {
    keep.zero();
  } else if (ratio > 0.0) {
    Rng rng(ctx.rng_seed);
    const double area = ratio * double(h) * double(w);
    std::uniform_real_distribution<double> aspect(0.5, 2.0);
    const double a = aspect(rng);
    std::size_t rh = std::size_t(std::clamp(std::lround(std::sqrt(area * a)), 1l, long(h)));
    std::size_t rw = std::size_t(std::clamp(std::lround(area / double(rh)), 1l, long(w)));
    std::uniform_int_distribution<std::size_t> ty(0, h - rh), tx(0, w - rw);
    const std::size_t y0 = ty(rng), x0 = tx(rng);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = y0; y < y0 + rh; ++y)
        for (std::size_t x = x0; x < x0 + rw; ++x) keep[(ch * h + y) * w + x] = 0.0;
  }
  keep = keep.reshaped(wm.shape());
  return mix_with_host(wm, *ctx.host, keep);
}

NoiseResult dropout(const Tensor& wm, double ratio, const DistortionContext& ctx) {
  require_host(ctx, wm);
  const std::size_t c = wm.dim(0), plane = wm.dim(1) * wm.dim(2);
  Rng rng(ctx.rng_seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<double> pixel(plane);
  for (std::size_t i = 0; i < plane; ++i) pixel[i] = coin(rng) < ratio ? 0.0 : 1.0;
  Tensor keep = broadcast_pixel_mask(pixel, c, plane).reshaped(wm.shape());
  return mix_with_host(wm, *ctx.host, keep);
}

NoiseResult gaussian_noise(const Tensor& wm, double variance, const DistortionContext& ctx) {
  Tensor out = wm;
  if (variance > 0.0) {
    Rng rng(ctx.rng_seed);
    std::normal_distribution<double> noise(0.0, std::sqrt(variance));
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += noise(rng);
  }
  Tensor mask(wm.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    mask[i] = (out[i] > 0.0 && out[i] < 1.0) ? 1.0 : 0.0;
  clamp01(out);
  NoiseBackward back = [mask = std::move(mask)](const Tensor& g) {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] *= mask[i];
    return gx;
  };
  return {std::move(out), std::move(back)};
}

NoiseResult salt_pepper(const Tensor& wm, double ratio, const DistortionContext& ctx) {
  const std::size_t c = wm.dim(0), plane = wm.dim(1) * wm.dim(2);
  Tensor out = wm;
  Rng rng(ctx.rng_seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t i = 0; i < plane; ++i) {
    if (coin(rng) < ratio) {
      const double v = coin(rng) < 0.5 ? 0.0 : 1.0;
      for (std::size_t ch = 0; ch < c; ++ch) out[ch * plane + i] = v;
    }
  }
  return {std::move(out), identity_backward()};
}

std::size_t reflect_index(long i, long n) {
  // Symmetric reflection (edge repeated): -1 -> 0, n -> n-1.
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return std::size_t(i);
}

std::vector<double> gaussian_kernel(double sigma) {
  const long half = long(std::ceil(3.0 * sigma));
  std::vector<double> k(std::size_t(2 * half + 1));
  double s = 0.0;
  for (long i = -half; i <= half; ++i) {
    const double v = std::exp(-0.5 * double(i * i) / (sigma * sigma));
    k[std::size_t(i + half)] = v;
    s += v;
  }
  for (double& v : k) v /= s;
  return k;
}

// Separable convolution with reflect padding; `adjoint` scatters instead
// of gathering, which is the exact transpose of the forward map.
Tensor blur_pass(const Tensor& x, const std::vector<double>& k, bool horizontal,
                 bool adjoint) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const long half = long(k.size() / 2);
  Tensor out(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x0 = 0; x0 < w; ++x0) {
        const std::size_t base = (ch * h + y) * w + x0;
        for (long j = -half; j <= half; ++j) {
          std::size_t src;
          if (horizontal)
            src = (ch * h + y) * w + reflect_index(long(x0) + j, long(w));
          else
            src = (ch * h + reflect_index(long(y) + j, long(h))) * w + x0;
          const double wk = k[std::size_t(j + half)];
          if (adjoint)
            out[src] += wk * x[base];
          else
            out[base] += wk * x[src];
        }
      }
  return out;
}

NoiseResult gaussian_blur(const Tensor& wm, double variance, const DistortionContext&) {
  if (variance <= 0.0) return {wm, identity_backward()};
  const double sigma = std::sqrt(variance);
  auto k = gaussian_kernel(sigma);
  Tensor out = blur_pass(blur_pass(wm, k, true, false), k, false, false);
  Tensor mask(out.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    mask[i] = (out[i] > 0.0 && out[i] < 1.0) ? 1.0 : 0.0;
  clamp01(out);
  NoiseBackward back = [k, mask = std::move(mask)](const Tensor& g) {
    Tensor gm = g;
    for (std::size_t i = 0; i < gm.numel(); ++i) gm[i] *= mask[i];
    return blur_pass(blur_pass(gm, k, false, true), k, true, true);
  };
  return {std::move(out), std::move(back)};
}

NoiseResult median_blur(const Tensor& wm, long window, const DistortionContext&) {
  if (window == 1) return {wm, identity_backward()};
  const std::size_t c = wm.dim(0), h = wm.dim(1), w = wm.dim(2);
  const long half = window / 2;
  Tensor out(wm.shape());
  std::vector<double> vals;
  vals.reserve(std::size_t(window * window));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        vals.clear();
        for (long dy = -half; dy <= half; ++dy)
          for (long dx = -half; dx <= half; ++dx)
            vals.push_back(wm[(ch * h + reflect_index(long(y) + dy, long(h))) * w +
                              reflect_index(long(x) + dx, long(w))]);
        auto mid = vals.begin() + long(vals.size() / 2);
        std::nth_element(vals.begin(), mid, vals.end());
        out[(ch * h + y) * w + x] = *mid;
      }
  return {std::move(out), identity_backward()};
}

NoiseResult jpeg_simulated(const Tensor& wm, double qf) {
  Tensor preclamp;
  Tensor out = jpeg_simulate(wm, qf, true, &preclamp);
  Tensor mask(out.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    mask[i] = (preclamp[i] > 0.0 && preclamp[i] < 1.0) ? 1.0 : 0.0;
  // The forward chain around the rounding surrogate is orthonormal up to
  // the exact color-transform inverse, so the surrogate Jacobian is the
  // identity restricted to unclamped outputs.
  NoiseBackward back = [mask = std::move(mask)](const Tensor& g) {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] *= mask[i];
    return gx;
  };
  return {std::move(out), std::move(back)};
}

}  // namespace

NoiseResult apply_noise_with_grad(const NoiseSpec& spec, const Tensor& watermarked,
                                  const DistortionContext& ctx) {
  if (watermarked.rank() != 3)
    throw std::invalid_argument("apply_noise: expected C×H×W");
  validate_noise_spec(spec);
  switch (spec.kind) {
    case NoiseKind::identity:
      return {watermarked, identity_backward()};
    case NoiseKind::cropout:
      return cropout(watermarked, spec.value("ratio"), ctx);
    case NoiseKind::dropout:
      return dropout(watermarked, spec.value("ratio"), ctx);
    case NoiseKind::gaussian_noise:
      return gaussian_noise(watermarked, spec.value("variance"), ctx);
    case NoiseKind::salt_pepper:
      return salt_pepper(watermarked, spec.value("ratio"), ctx);
    case NoiseKind::gaussian_blur:
      return gaussian_blur(watermarked, spec.value("variance"), ctx);
    case NoiseKind::median_blur:
      return median_blur(watermarked, std::lround(spec.value("window")), ctx);
    case NoiseKind::jpeg_simulated:
      return jpeg_simulated(watermarked, spec.value("quality_factor"));
    case NoiseKind::jpeg_real:
      return {jpeg_real_roundtrip(watermarked, int(std::lround(spec.value("quality_factor")))),
              identity_backward()};
    case NoiseKind::jpeg_mbrs: {
      // Real and simulated JPEG alternate with equal probability; the
      // training loop passes one seed per mini-batch so the whole batch
      // takes the same branch.
      Rng rng(ctx.rng_seed);
      NoiseSpec sub = spec;
      sub.kind = (rng() & 1) ? NoiseKind::jpeg_real : NoiseKind::jpeg_simulated;
      return apply_noise_with_grad(sub, watermarked, ctx);
    }
  }
  throw std::invalid_argument("unknown noise kind");
}

Tensor apply_noise(const NoiseSpec& spec, const Tensor& watermarked,
                   const DistortionContext& ctx) {
  return apply_noise_with_grad(spec, watermarked, ctx).output;
}

NoiseSpec sample_training_spec(const NoiseSpec& spec, Rng& rng) {
  NoiseSpec out = spec;
  for (auto& [key, values] : out.params) {
    if (values.size() != 2) continue;
    if (values[0] > values[1]) throw std::invalid_argument("inverted range: " + key);
    if (key == "window") {
      // Odd integer windows only.
      const long lo = std::lround(values[0]), hi = std::lround(values[1]);
      std::uniform_int_distribution<long> pick(lo / 2, hi / 2);
      values = {double(2 * pick(rng) + 1)};
    } else {
      std::uniform_real_distribution<double> pick(values[0], values[1]);
      values = {pick(rng)};
    }
  }
  return out;
}

}  // namespace wm
