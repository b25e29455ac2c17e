#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ganlens/tensor.hpp"

namespace ganlens {

// 8-bit grayscale raster
struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // row-major

    std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

void write_png(const std::filesystem::path& p, const GrayImage& img);
GrayImage read_png(const std::filesystem::path& p);

// [-1,1] float <-> u8; 0 -> -1.0, 255 -> +1.0
GrayImage tensor_to_gray(const Tensor& chw_or_hw);
Tensor gray_to_tensor(const GrayImage& img);  // [1,1,H,W]

// [0,1] float map -> u8 (no recentering)
GrayImage unit_map_to_gray(const Tensor& hw);

// nearest for exactness off-grid is unwanted here; bilinear with corner alignment
Tensor bilinear_resize(const Tensor& hw, int out_h, int out_w);

// tiles [N,1,H,W] into a rows x cols grid with 2px separators
GrayImage tile_grid(const Tensor& batch, int cols);

// stamps "text" at (y, x) using a built-in 5x7 font (digits . - % p space)
void draw_text(GrayImage& img, int y, int x, const std::string& text, std::uint8_t value);

// 1px outline of a boolean mask region
void draw_outline(GrayImage& img, const std::vector<std::uint8_t>& mask, std::uint8_t value);

GrayImage hstack(const std::vector<GrayImage>& tiles, int pad, std::uint8_t fill);
GrayImage vstack(const std::vector<GrayImage>& tiles, int pad, std::uint8_t fill);

}  // namespace ganlens
