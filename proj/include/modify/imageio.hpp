#pragma once

#include <string>
#include <vector>

#include "modify/tensor.hpp"

namespace modify::data {

// Reads PNG/JPEG, center-crops to square, bilinear-resizes to `resolution`,
// returns [3,R,R] in [-1,1]. Throws DataError if the file cannot be decoded.
Tensor<float> load_image(const std::string& path, int resolution);

// Writes a [3,H,W] image in [-1,1] as PNG.
void save_png(const std::string& path, const Tensor<float>& img);

// Tiles rows x cols images (all [3,R,R]) into one image with a light border.
Tensor<float> make_grid(const std::vector<std::vector<Tensor<float>>>& rows, int pad = 2);

}  // namespace modify::data
