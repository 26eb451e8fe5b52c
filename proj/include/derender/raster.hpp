#pragma once

// Tiny deterministic rasteriser for the 2D dot task, plus a minimal PNG
// writer (zlib-deflated, no ancillary chunks, so identical images produce
// identical bytes).

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace derender::raster {

struct Image8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel, row 0 at top

    std::uint8_t& at(int x, int y, int c) { return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
    std::uint8_t at(int x, int y, int c) const { return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
};

// Red disc of `radius` pixels on a white background.  p lives in the unit
// square; pixel centre (x+.5, y+.5) maps to ((x+.5)/size, (y+.5)/size), so
// p.y = 0 is the top edge.  Anti-aliased by 4x4 supersampling.  Discs may
// clip at the borders; throws OutOfBounds when p leaves [0,1]^2.
Image8 rasterize_dot(const Eigen::Vector2d& p, int size = 64, double radius = 4.0);

// Single-channel "ink" image in [0,1]: 1 - green/255 (0 on the white
// background, 1 at the disc core).  This is the model's input view.
std::vector<float> to_deficit(const Image8& img);

// Centre of mass of the deficit, in unit-square coordinates; the test oracle
// for rasterize_dot.
Eigen::Vector2d deficit_centroid(const Image8& img);

void write_png(const Image8& img, const std::filesystem::path& path);

// Decoder for round-trip tests (supports only the images this writer emits).
Image8 read_png(const std::filesystem::path& path);

}  // namespace derender::raster
