#include "vsdf/render/canny.hpp"

#include "vsdf/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <deque>

namespace vsdf {

GrayImage to_gray(const ViewImage& img) {
    GrayImage g{img.width, img.height, {}};
    g.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t k = 0; k < g.pixels.size(); ++k) {
        if (img.channel == RenderChannel::Depth) {
            g.pixels[k] = img.pixels[k] / 2.0f;
        } else if (img.mask[k]) {
            const float* n = &img.pixels[3 * k];
            g.pixels[k] = (n[0] + n[1] + n[2] + 3.0f) / 6.0f;
        }
    }
    return g;
}

namespace {

// Separable blur with edge replication.
std::vector<float> gaussian_blur(const GrayImage& img, double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= sum;
    const int w = img.width, h = img.height;
    auto clampi = [](int v, int hi) { return std::min(std::max(v, 0), hi - 1); };
    std::vector<float> tmp(img.pixels.size()), out(img.pixels.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(clampi(x + i, w), y);
            tmp[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[static_cast<std::size_t>(clampi(y + i, h)) * w + x];
            out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
        }
    return out;
}

}  // namespace

Image8 canny_edges(const GrayImage& img, const CannyConfig& cfg) {
    if (!(cfg.low < cfg.high))
        throw InvalidArgument(fmt::format("canny_edges: low threshold {} must be below high {}", cfg.low, cfg.high));
    if (cfg.low < 0 || !(cfg.sigma > 0)) throw InvalidArgument("canny_edges: thresholds and sigma must be positive");
    const int w = img.width, h = img.height;
    Image8 out{w, h, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
    if (w < 3 || h < 3) return out;

    const std::vector<float> b = gaussian_blur(img, cfg.sigma);
    auto px = [&](int x, int y) { return b[static_cast<std::size_t>(y) * w + x]; };
    std::vector<float> mag(b.size(), 0.0f);
    std::vector<std::uint8_t> dir(b.size(), 0);
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x) {
            const float gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                             (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
            // Image rows grow downward; flip so gy points up.
            const float gy = (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1)) -
                             (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1));
            const std::size_t k = static_cast<std::size_t>(y) * w + x;
            mag[k] = std::hypot(gx, gy);
            double angle = std::atan2(gy, gx) * 180.0 / M_PI;
            if (angle < 0) angle += 180.0;
            dir[k] = angle < 22.5 || angle >= 157.5 ? 0 : angle < 67.5 ? 1 : angle < 112.5 ? 2 : 3;
        }

    // Neighbour offsets (dx, dy in image rows) along the gradient for each sector.
    static constexpr int kStep[4][2] = {{1, 0}, {1, -1}, {0, -1}, {-1, -1}};
    std::vector<std::uint8_t> level(b.size(), 0);  // 0 none, 1 weak, 2 strong
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x) {
            const std::size_t k = static_cast<std::size_t>(y) * w + x;
            const float m = mag[k];
            if (m < cfg.low || m == 0.0f) continue;
            const auto [dx, dy] = kStep[dir[k]];
            const float ahead = mag[static_cast<std::size_t>(y + dy) * w + x + dx];
            const float behind = mag[static_cast<std::size_t>(y - dy) * w + x - dx];
            // Strict on one side only, so a plateau of two equal maxima keeps one pixel.
            if (!(m > ahead && m >= behind)) continue;
            level[k] = m >= cfg.high ? 2 : 1;
        }

    std::deque<std::size_t> queue;
    for (std::size_t k = 0; k < level.size(); ++k)
        if (level[k] == 2) {
            out.data[k] = 255;
            queue.push_back(k);
        }
    while (!queue.empty()) {
        const std::size_t k = queue.front();
        queue.pop_front();
        const int x = static_cast<int>(k % w), y = static_cast<int>(k / w);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                const std::size_t nk = static_cast<std::size_t>(ny) * w + nx;
                if (level[nk] == 1 && out.data[nk] == 0) {
                    out.data[nk] = 255;
                    queue.push_back(nk);
                }
            }
    }
    return out;
}

Image8 canny_edges(const ViewImage& img, double low, double high) {
    return canny_edges(to_gray(img), CannyConfig{1.4, low, high});
}

}  // namespace vsdf
