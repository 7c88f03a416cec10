#pragma once

#include <string>

#include "tensor.hpp"

namespace greenleaf {

// 8-bit interleaved RGB, row major.
struct ImageU8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb;
};

ImageU8 decode_image(const std::string& path);
void encode_png(const std::string& path, const ImageU8& img);

// (1,3,H,W) scaled to [0,1]
Tensor image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image(const Tensor& t);

// Half-pixel-center bilinear: src = (dst + 0.5) * in/out - 0.5, edge clamped.
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

Tensor load_and_resize(const std::string& path, int resolution);

} // namespace greenleaf
