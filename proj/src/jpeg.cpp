#include "wm/jpeg.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/core.hpp>

namespace wm {

namespace {

constexpr int kStdLuminance[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr int kStdChrominance[64] = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

std::array<int, 64> scale_table(const int* base, double qf) {
  if (qf < 1.0 || qf > 100.0)
    throw std::invalid_argument("quality factor out of [1,100]");
  const double scale = qf < 50.0 ? 5000.0 / qf : 200.0 - 2.0 * qf;
  std::array<int, 64> out{};
  for (int i = 0; i < 64; ++i) {
    int q = int((base[i] * scale + 50.0) / 100.0);
    if (q < 1) q = 1;
    if (q > 255) q = 255;
    out[std::size_t(i)] = q;
  }
  return out;
}

// Orthonormal 8-point DCT-II basis: dct[k][n], inverse is the transpose.
struct DctBasis {
  double m[8][8];
  DctBasis() {
    const double pi = std::acos(-1.0);
    for (int k = 0; k < 8; ++k) {
      const double ck = k == 0 ? std::sqrt(0.5) : 1.0;
      for (int n = 0; n < 8; ++n)
        m[k][n] = 0.5 * ck * std::cos((2 * n + 1) * k * pi / 16.0);
    }
  }
};

const DctBasis& dct_basis() {
  static const DctBasis basis;
  return basis;
}

void dct8x8(const double in[8][8], double out[8][8]) {
  const auto& d = dct_basis().m;
  double tmp[8][8];
  for (int k = 0; k < 8; ++k)
    for (int n = 0; n < 8; ++n) {
      double acc = 0.0;
      for (int j = 0; j < 8; ++j) acc += d[k][j] * in[j][n];
      tmp[k][n] = acc;
    }
  for (int k = 0; k < 8; ++k)
    for (int l = 0; l < 8; ++l) {
      double acc = 0.0;
      for (int j = 0; j < 8; ++j) acc += tmp[k][j] * d[l][j];
      out[k][l] = acc;
    }
}

void idct8x8(const double in[8][8], double out[8][8]) {
  const auto& d = dct_basis().m;
  double tmp[8][8];
  for (int n = 0; n < 8; ++n)
    for (int l = 0; l < 8; ++l) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += d[k][n] * in[k][l];
      tmp[n][l] = acc;
    }
  for (int n = 0; n < 8; ++n)
    for (int m2 = 0; m2 < 8; ++m2) {
      double acc = 0.0;
      for (int l = 0; l < 8; ++l) acc += tmp[n][l] * d[l][m2];
      out[n][m2] = acc;
    }
}

// JFIF color transform constants derived from Kr=0.299, Kb=0.114 so the
// inverse is exact.
constexpr double kKr = 0.299, kKb = 0.114;
constexpr double kKg = 1.0 - kKr - kKb;

void rgb_to_ycbcr(double r, double g, double b, double& y, double& cb, double& cr) {
  y = kKr * r + kKg * g + kKb * b;
  cb = (b - y) / (2.0 * (1.0 - kKb)) + 128.0;
  cr = (r - y) / (2.0 * (1.0 - kKr)) + 128.0;
}

void ycbcr_to_rgb(double y, double cb, double cr, double& r, double& g, double& b) {
  r = y + 2.0 * (1.0 - kKr) * (cr - 128.0);
  b = y + 2.0 * (1.0 - kKb) * (cb - 128.0);
  g = (y - kKr * r - kKb * b) / kKg;
}

void quantize_plane(std::vector<double>& plane, std::size_t h, std::size_t w,
                    const std::array<int, 64>& table, bool round_coefficients) {
  double block[8][8], coef[8][8];
  for (std::size_t by = 0; by < h; by += 8)
    for (std::size_t bx = 0; bx < w; bx += 8) {
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          block[y][x] = plane[(by + std::size_t(y)) * w + bx + std::size_t(x)] - 128.0;
      dct8x8(block, coef);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const double q = double(table[std::size_t(8 * y + x)]);
          double v = coef[y][x] / q;
          if (round_coefficients) v = std::nearbyint(v);
          coef[y][x] = v * q;
        }
      idct8x8(coef, block);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          plane[(by + std::size_t(y)) * w + bx + std::size_t(x)] = block[y][x] + 128.0;
    }
}

}  // namespace

std::array<int, 64> luminance_quant_table(double qf) {
  return scale_table(kStdLuminance, qf);
}

std::array<int, 64> chrominance_quant_table(double qf) {
  return scale_table(kStdChrominance, qf);
}

Tensor jpeg_simulate(const Tensor& image, double quality_factor,
                     bool round_coefficients, Tensor* preclamp) {
  if (image.rank() != 3) throw std::invalid_argument("jpeg_simulate: expected C×H×W");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h % 8 != 0 || w % 8 != 0)
    throw std::invalid_argument("jpeg_simulate: H and W must be multiples of 8");
  const auto lum = luminance_quant_table(quality_factor);
  const auto chrom = chrominance_quant_table(quality_factor);
  const std::size_t plane = h * w;

  std::vector<std::vector<double>> planes(c, std::vector<double>(plane));
  if (c == 3) {
    for (std::size_t i = 0; i < plane; ++i)
      rgb_to_ycbcr(image[i] * 255.0, image[plane + i] * 255.0, image[2 * plane + i] * 255.0,
                   planes[0][i], planes[1][i], planes[2][i]);
  } else {
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i) planes[ch][i] = image[ch * plane + i] * 255.0;
  }

  for (std::size_t ch = 0; ch < c; ++ch)
    quantize_plane(planes[ch], h, w, (c == 3 && ch > 0) ? chrom : lum, round_coefficients);

  Tensor out(image.shape());
  if (c == 3) {
    for (std::size_t i = 0; i < plane; ++i) {
      double r, g, b;
      ycbcr_to_rgb(planes[0][i], planes[1][i], planes[2][i], r, g, b);
      out[i] = r / 255.0;
      out[plane + i] = g / 255.0;
      out[2 * plane + i] = b / 255.0;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = planes[ch][i] / 255.0;
  }
  if (preclamp) *preclamp = out;
  clamp01(out);
  return out;
}

Tensor jpeg_real_roundtrip(const Tensor& image, int quality_factor) {
  if (image.rank() != 3) throw std::invalid_argument("jpeg_real: expected C×H×W");
  if (quality_factor < 1 || quality_factor > 100)
    throw std::invalid_argument("quality factor out of [1,100]");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::size_t plane = h * w;

  cv::Mat mat(int(h), int(w), c == 1 ? CV_8UC1 : CV_8UC3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      auto to8 = [&](std::size_t ch) {
        const double v = image[ch * plane + y * w + x];
        return uchar(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
      };
      if (c == 1) {
        mat.at<uchar>(int(y), int(x)) = to8(0);
      } else {
        // OpenCV is BGR.
        mat.at<cv::Vec3b>(int(y), int(x)) = cv::Vec3b(to8(2), to8(1), to8(0));
      }
    }

  std::vector<uchar> buf;
  // The installed codec has no 4:4:4 sampling switch; the default 4:2:0
  // chroma subsampling is the extra real-vs-simulated gap in color areas.
  std::vector<int> opts = {cv::IMWRITE_JPEG_QUALITY, quality_factor};
  if (!cv::imencode(".jpg", mat, buf, opts))
    throw std::runtime_error("JPEG encode failed");
  cv::Mat dec = cv::imdecode(buf, c == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (dec.empty() || dec.rows != int(h) || dec.cols != int(w))
    throw std::runtime_error("JPEG decode failed");

  Tensor out(image.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (c == 1) {
        out[y * w + x] = dec.at<uchar>(int(y), int(x)) / 255.0;
      } else {
        const cv::Vec3b px = dec.at<cv::Vec3b>(int(y), int(x));
        out[0 * plane + y * w + x] = px[2] / 255.0;
        out[1 * plane + y * w + x] = px[1] / 255.0;
        out[2 * plane + y * w + x] = px[0] / 255.0;
      }
    }
  return out;
}

}  // namespace wm
