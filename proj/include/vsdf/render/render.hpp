#pragma once

#include "vsdf/geometry/mesh.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace vsdf {

/// Orthographic cameras on the coordinate axes. The vehicle convention is x
/// from front to back, y up, z across; `Side` is the right-hand camera.
enum class View { Top, Bottom, Left, Right, Front, Back, Side };

inline constexpr std::array<View, 6> kAtlasViews = {View::Top,   View::Bottom, View::Left,
                                                    View::Right, View::Front,  View::Back};

std::string_view view_name(View v);

/// Right-handed image frame of a view: u to the right, v up, w toward the camera.
struct ViewBasis {
    Eigen::Vector3d u, v, w;
};
ViewBasis view_basis(View v);

enum class RenderChannel { Normal, Depth };

/// Depth value of pixels that see no surface (outside the unit-sphere scene).
inline constexpr float kDepthBackground = 2.0f;

/// Row-major float image, row 0 at the top. Normal images hold unit normals in
/// the view frame (0 for background); depth images hold the distance from the
/// camera plane at w = 1.
struct ViewImage {
    View view = View::Front;
    RenderChannel channel = RenderChannel::Normal;
    int width = 0;
    int height = 0;
    std::vector<float> pixels;      // width * height * channels
    std::vector<std::uint8_t> mask; // 1 where a surface was hit

    int channels() const { return channel == RenderChannel::Normal ? 3 : 1; }
    float at(int x, int y, int c = 0) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels() + c]; }
    bool foreground(int x, int y) const { return mask[static_cast<std::size_t>(y) * width + x] != 0; }
    std::size_t foreground_count() const;
};

/// Z-buffer rasterization at pixel centres, equivalent to casting one
/// orthographic ray per pixel; the nearest triangle wins (ties: lower index).
/// An empty mesh gives an all-background image.
ViewImage render_view(const TriangleMesh& mesh, View view, int resolution = 128,
                      RenderChannel channel = RenderChannel::Normal);

/// 8-bit interleaved image.
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    std::uint8_t at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    friend bool operator==(const Image8&, const Image8&) = default;
};

/// Normal component c in [-1, 1] -> 128 + round(127 c), so 0 marks background
/// and negating a component maps q to 256 - q exactly.
std::uint8_t quantize_normal(float c);

/// Normals via quantize_normal; depth as round(255 * depth / 2).
Image8 to_image8(const ViewImage& img);

/// Six views tiled 3 x 2: top, bottom, left / right, front, back.
struct NormalAtlas {
    int tile = 0;
    std::array<ViewImage, 6> views;
    Image8 composite;  // (3 tile) x (2 tile) RGB
};

NormalAtlas build_atlas(const TriangleMesh& mesh, int resolution = 128);

/// (column, row) of a view's tile in the atlas.
std::array<int, 2> atlas_tile(View v);

void write_png(const std::filesystem::path& path, const Image8& img);
Image8 read_png(const std::filesystem::path& path);

}  // namespace vsdf
