#pragma once

#include <string>
#include <vector>

#include "wm/types.hpp"

namespace wm {

// RGB image in [0,1] from any format OpenCV decodes; grayscale files are
// expanded to three channels. Throws std::runtime_error when undecodable.
ImageArray load_image(const std::string& path);
// 8-bit PNG, values round(v*255).
void save_image(const ImageArray& image, const std::string& path);

ImageArray resize_bilinear(const ImageArray& image, std::size_t h, std::size_t w);
ImageArray center_crop(const ImageArray& image, std::size_t h, std::size_t w);

// All decodable files of a directory in sorted name order, resized to
// h×w unless already that size. Undecodable files are skipped with a
// warning on stderr; an empty result is an error.
std::vector<Tensor> load_dataset(const std::string& dir, std::size_t h, std::size_t w);

}  // namespace wm
