#include "wm/image_io.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace wm {

namespace {

ImageArray from_mat(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  const std::size_t h = std::size_t(rgb.rows), w = std::size_t(rgb.cols);
  ImageArray out{Tensor({3, h, w}), ImageRole::host};
  for (std::size_t y = 0; y < h; ++y) {
    const uchar* row = rgb.ptr<uchar>(int(y));
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out.data[(c * h + y) * w + x] = double(row[x * 3 + c]) / 255.0;
  }
  return out;
}

cv::Mat to_mat(const ImageArray& image) {
  const std::size_t c = image.channels(), h = image.height(), w = image.width();
  if (c != 1 && c != 3) throw std::invalid_argument("save_image: 1 or 3 channels");
  cv::Mat rgb(int(h), int(w), c == 3 ? CV_8UC3 : CV_8UC1);
  for (std::size_t y = 0; y < h; ++y) {
    uchar* row = rgb.ptr<uchar>(int(y));
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = std::clamp(image.data[(ch * h + y) * w + x], 0.0, 1.0);
        row[x * c + ch] = uchar(std::lround(v * 255.0));
      }
  }
  if (c == 3) cv::cvtColor(rgb, rgb, cv::COLOR_RGB2BGR);
  return rgb;
}

}  // namespace

ImageArray load_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot decode image: " + path);
  return from_mat(bgr);
}

void save_image(const ImageArray& image, const std::string& path) {
  if (!cv::imwrite(path, to_mat(image)))
    throw std::runtime_error("cannot write image: " + path);
}

ImageArray resize_bilinear(const ImageArray& image, std::size_t h, std::size_t w) {
  cv::Mat src = to_mat(image), dst;
  cv::resize(src, dst, cv::Size(int(w), int(h)), 0, 0, cv::INTER_LINEAR);
  if (dst.channels() == 1) cv::cvtColor(dst, dst, cv::COLOR_GRAY2BGR);
  return from_mat(dst);
}

ImageArray center_crop(const ImageArray& image, std::size_t h, std::size_t w) {
  if (h > image.height() || w > image.width())
    throw std::invalid_argument("center_crop: larger than source");
  const std::size_t c = image.channels();
  const std::size_t y0 = (image.height() - h) / 2, x0 = (image.width() - w) / 2;
  ImageArray out{Tensor({c, h, w}), image.role};
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.data[(ch * h + y) * w + x] =
            image.data[(ch * image.height() + y0 + y) * image.width() + x0 + x];
  return out;
}

std::vector<Tensor> load_dataset(const std::string& dir, std::size_t h, std::size_t w) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());

  std::vector<Tensor> out;
  for (const std::string& path : paths) {
    try {
      ImageArray img = load_image(path);
      if (img.height() != h || img.width() != w) {
        const std::size_t side = std::min(img.height(), img.width());
        img = resize_bilinear(center_crop(img, side, side), h, w);
      }
      out.push_back(std::move(img.data));
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << path << ": " << e.what() << "\n";
    }
  }
  if (out.empty()) throw std::runtime_error("no decodable images in " + dir);
  return out;
}

}  // namespace wm
