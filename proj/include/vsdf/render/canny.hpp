#pragma once

#include "vsdf/render/render.hpp"

#include <vector>

namespace vsdf {

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;  // row-major, row 0 at the top

    float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Normal images: mean of (n + 1) / 2 over the channels on foreground, 0 on
/// background. Depth images: depth / 2 (background 1).
GrayImage to_gray(const ViewImage& img);

struct CannyConfig {
    double sigma = 1.4;
    double low = 0.1;
    double high = 0.3;
};

/// Gaussian blur, Sobel gradients, non-maximum suppression along the
/// quantized gradient direction and hysteresis over 8-neighbours. Thresholds
/// apply to the Sobel magnitude of the blurred image. Output is one channel,
/// 255 on edges and 0 elsewhere. Throws InvalidArgument when low >= high.
Image8 canny_edges(const GrayImage& img, const CannyConfig& cfg = {});
Image8 canny_edges(const ViewImage& img, double low, double high);

}  // namespace vsdf
