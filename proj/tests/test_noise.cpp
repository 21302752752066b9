#include <cmath>

#include <doctest.h>

#include "wm/jpeg.hpp"
#include "wm/noise.hpp"

using namespace wm;

namespace {

Tensor random_image(std::size_t c, std::size_t h, std::size_t w, uint64_t seed,
                    double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t({c, h, w});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = d(rng);
  return t;
}

bool all_equal(const Tensor& a, const Tensor& b, double tol = 0.0) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (std::abs(a[i] - b[i]) > tol) return false;
  return true;
}

bool in_unit_range(const Tensor& t) { return t.min() >= 0.0 && t.max() <= 1.0; }

}  // namespace

TEST_CASE("boundary parameters are exact identities") {
  Tensor host = random_image(3, 16, 16, 1);
  Tensor wm_img = random_image(3, 16, 16, 2);
  DistortionContext ctx{&host, 99, false};

  for (NoiseSpec spec : {
           NoiseSpec{NoiseKind::identity, {}},
           NoiseSpec{NoiseKind::cropout, {{"ratio", {0.0}}}},
           NoiseSpec{NoiseKind::dropout, {{"ratio", {0.0}}}},
           NoiseSpec{NoiseKind::gaussian_noise, {{"variance", {0.0}}}},
           NoiseSpec{NoiseKind::gaussian_blur, {{"variance", {0.0}}}},
           NoiseSpec{NoiseKind::median_blur, {{"window", {1.0}}}},
       }) {
    CAPTURE(to_string(spec.kind));
    CHECK(all_equal(apply_noise(spec, wm_img, ctx), wm_img));
  }

  NoiseSpec full_crop{NoiseKind::cropout, {{"ratio", {1.0}}}};
  CHECK(all_equal(apply_noise(full_crop, wm_img, ctx), host));
  NoiseSpec full_drop{NoiseKind::dropout, {{"ratio", {1.0}}}};
  CHECK(all_equal(apply_noise(full_drop, wm_img, ctx), host));
}

TEST_CASE("every kind maps the unit range to the unit range and is seed-deterministic") {
  Tensor host = random_image(3, 16, 16, 3);
  Tensor wm_img = random_image(3, 16, 16, 4);
  for (NoiseSpec spec : {
           NoiseSpec{NoiseKind::cropout, {{"ratio", {0.4}}}},
           NoiseSpec{NoiseKind::dropout, {{"ratio", {0.4}}}},
           NoiseSpec{NoiseKind::gaussian_noise, {{"variance", {0.04}}}},
           NoiseSpec{NoiseKind::salt_pepper, {{"ratio", {0.04}}}},
           NoiseSpec{NoiseKind::gaussian_blur, {{"variance", {2.0}}}},
           NoiseSpec{NoiseKind::median_blur, {{"window", {7.0}}}},
           NoiseSpec{NoiseKind::jpeg_simulated, {{"quality_factor", {50.0}}}},
           NoiseSpec{NoiseKind::jpeg_real, {{"quality_factor", {50.0}}}},
           NoiseSpec{NoiseKind::jpeg_mbrs, {{"quality_factor", {50.0}}}},
       }) {
    CAPTURE(to_string(spec.kind));
    DistortionContext ctx{&host, 7, false};
    Tensor out = apply_noise(spec, wm_img, ctx);
    CHECK(in_unit_range(out));
    CHECK(all_equal(apply_noise(spec, wm_img, ctx), out));
  }
}

TEST_CASE("dropout replaces close to the requested pixel fraction") {
  Tensor host = Tensor::zeros({3, 128, 128});
  Tensor wm_img = Tensor::full({3, 128, 128}, 1.0);
  NoiseSpec spec{NoiseKind::dropout, {{"ratio", {0.4}}}};
  DistortionContext ctx{&host, 11, false};
  Tensor out = apply_noise(spec, wm_img, ctx);

  const std::size_t plane = 128 * 128;
  std::size_t replaced = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    // Whole pixels flip across channels together.
    CHECK(out[i] == out[plane + i]);
    CHECK(out[i] == out[2 * plane + i]);
    if (out[i] == 0.0) ++replaced;
  }
  CHECK(double(replaced) / double(plane) == doctest::Approx(0.4).epsilon(0.05));
}

TEST_CASE("salt and pepper flips whole pixels to 0 or 1") {
  Tensor host = random_image(3, 32, 32, 5);
  Tensor wm_img = Tensor::full({3, 32, 32}, 0.5);
  NoiseSpec spec{NoiseKind::salt_pepper, {{"ratio", {0.2}}}};
  DistortionContext ctx{&host, 13, false};
  Tensor out = apply_noise(spec, wm_img, ctx);
  const std::size_t plane = 32 * 32;
  std::size_t flipped = 0, salt = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    CHECK(out[i] == out[plane + i]);
    if (out[i] != 0.5) {
      CHECK((out[i] == 0.0 || out[i] == 1.0));
      ++flipped;
      if (out[i] == 1.0) ++salt;
    }
  }
  CHECK(double(flipped) / double(plane) == doctest::Approx(0.2).epsilon(0.2));
  CHECK(double(salt) / double(flipped) == doctest::Approx(0.5).epsilon(0.25));
}

TEST_CASE("gaussian blur preserves constant images exactly") {
  Tensor wm_img = Tensor::full({3, 16, 16}, 0.37);
  Tensor host = wm_img;
  NoiseSpec spec{NoiseKind::gaussian_blur, {{"variance", {2.0}}}};
  DistortionContext ctx{&host, 0, false};
  Tensor out = apply_noise(spec, wm_img, ctx);
  for (std::size_t i = 0; i < out.numel(); ++i)
    CHECK(out[i] == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("differentiable kinds match finite differences") {
  Tensor host = random_image(3, 8, 8, 21, 0.3, 0.7);
  Tensor wm_img = random_image(3, 8, 8, 22, 0.3, 0.7);
  Rng wrng(23);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor w(wm_img.shape());
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = nd(wrng);

  for (NoiseSpec spec : {
           NoiseSpec{NoiseKind::identity, {}},
           NoiseSpec{NoiseKind::cropout, {{"ratio", {0.3}}}},
           NoiseSpec{NoiseKind::dropout, {{"ratio", {0.3}}}},
           NoiseSpec{NoiseKind::gaussian_noise, {{"variance", {0.0004}}}},
           NoiseSpec{NoiseKind::gaussian_blur, {{"variance", {0.5}}}},
       }) {
    CAPTURE(to_string(spec.kind));
    DistortionContext ctx{&host, 31, false};
    NoiseResult res = apply_noise_with_grad(spec, wm_img, ctx);
    Tensor g = res.backward(w);

    auto objective = [&](const Tensor& x) {
      Tensor y = apply_noise(spec, x, ctx);
      double s = 0.0;
      for (std::size_t i = 0; i < y.numel(); ++i) s += w[i] * y[i];
      return s;
    };
    const double eps = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < wm_img.numel(); i += 7) {
      Tensor xp = wm_img, xm = wm_img;
      xp[i] += eps;
      xm[i] -= eps;
      const double fd = (objective(xp) - objective(xm)) / (2.0 * eps);
      const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-4});
      worst = std::max(worst, std::abs(fd - g[i]) / denom);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("dct and color round trip reproduces the input at the identity table") {
  // QF=100 scales every quantization entry to 1; without rounding the whole
  // simulated chain is a linear bijection up to the final clamp.
  Tensor img = random_image(3, 16, 16, 41, 0.1, 0.9);
  Tensor out = jpeg_simulate(img, 100.0, false);
  for (std::size_t i = 0; i < img.numel(); ++i)
    CHECK(out[i] == doctest::Approx(img[i]).epsilon(1e-5));
}

TEST_CASE("quantization tables follow the libjpeg scaling convention") {
  // QF=50 is the unscaled base table; its first luminance entry is 16.
  CHECK(luminance_quant_table(50.0)[0] == 16);
  // QF=100 clamps everything to 1.
  for (int q : luminance_quant_table(100.0)) CHECK(q == 1);
  // Lower quality scales entries up.
  CHECK(luminance_quant_table(25.0)[0] == 32);
  CHECK(chrominance_quant_table(50.0)[0] == 17);
}

TEST_CASE("simulated and real jpeg agree on constant mid-gray") {
  Tensor gray = Tensor::full({3, 16, 16}, 128.0 / 255.0);
  Tensor host = gray;
  DistortionContext ctx{&host, 0, false};
  NoiseSpec sim{NoiseKind::jpeg_simulated, {{"quality_factor", {50.0}}}};
  NoiseSpec real{NoiseKind::jpeg_real, {{"quality_factor", {50.0}}}};
  Tensor s = apply_noise(sim, gray, ctx);
  Tensor r = apply_noise(real, gray, ctx);
  CHECK(all_equal(s, gray, 1e-9));
  CHECK(all_equal(r, gray, 1e-9));
}

TEST_CASE("mbrs alternates between real and simulated jpeg by seed") {
  Tensor host = random_image(3, 16, 16, 51);
  Tensor wm_img = random_image(3, 16, 16, 52);
  NoiseSpec mbrs{NoiseKind::jpeg_mbrs, {{"quality_factor", {50.0}}}};
  NoiseSpec sim{NoiseKind::jpeg_simulated, {{"quality_factor", {50.0}}}};
  NoiseSpec real{NoiseKind::jpeg_real, {{"quality_factor", {50.0}}}};

  std::size_t real_hits = 0;
  const std::size_t trials = 200;
  for (std::size_t seed = 0; seed < trials; ++seed) {
    DistortionContext ctx{&host, seed, true};
    Tensor out = apply_noise(mbrs, wm_img, ctx);
    const bool is_real = all_equal(out, apply_noise(real, wm_img, ctx));
    const bool is_sim = all_equal(out, apply_noise(sim, wm_img, ctx));
    CHECK((is_real || is_sim));
    if (is_real) ++real_hits;
  }
  CHECK(double(real_hits) / double(trials) == doctest::Approx(0.5).epsilon(0.3));
}

TEST_CASE("sample_training_spec draws from ranges and keeps points") {
  NoiseSpec range{NoiseKind::gaussian_noise, {{"variance", {0.001, 0.04}}}};
  Rng rng(61);
  for (int i = 0; i < 100; ++i) {
    NoiseSpec got = sample_training_spec(range, rng);
    REQUIRE(got.params.at("variance").size() == 1);
    const double v = got.value("variance");
    CHECK(v >= 0.001);
    CHECK(v <= 0.04);
  }

  NoiseSpec point{NoiseKind::jpeg_simulated, {{"quality_factor", {50.0}}}};
  CHECK(sample_training_spec(point, rng).value("quality_factor") == 50.0);

  NoiseSpec window{NoiseKind::median_blur, {{"window", {3.0, 7.0}}}};
  for (int i = 0; i < 50; ++i) {
    const double v = sample_training_spec(window, rng).value("window");
    CHECK((v == 3.0 || v == 5.0 || v == 7.0));
  }

  // Law of large numbers on a [0,1] range.
  NoiseSpec unit{NoiseKind::dropout, {{"ratio", {0.0, 1.0}}}};
  double mean = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) mean += sample_training_spec(unit, rng).value("ratio");
  mean /= n;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.04));

  NoiseSpec inverted{NoiseKind::dropout, {{"ratio", {0.9, 0.1}}}};
  CHECK_THROWS(sample_training_spec(inverted, rng));
}

TEST_CASE("real jpeg tends toward idempotence") {
  NoiseSpec real{NoiseKind::jpeg_real, {{"quality_factor", {50.0}}}};
  double first = 0.0, second = 0.0;
  for (uint64_t s = 0; s < 10; ++s) {
    // Smooth synthetic images stand in for natural content.
    Tensor img({3, 32, 32});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x)
          img[(c * 32 + y) * 32 + x] =
              0.5 + 0.3 * std::sin(0.2 * double(x) + double(s)) *
                        std::cos(0.15 * double(y) + double(c));
    DistortionContext ctx{&img, s, false};
    Tensor once = apply_noise(real, img, ctx);
    Tensor twice = apply_noise(real, once, ctx);
    for (std::size_t i = 0; i < img.numel(); ++i) {
      first += std::abs(once[i] - img[i]);
      second += std::abs(twice[i] - once[i]);
    }
  }
  CHECK(second < first);
}
