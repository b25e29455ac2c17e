#include "ganlens/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "ganlens/errors.hpp"

namespace ganlens {

void write_png(const std::filesystem::path& p, const GrayImage& img) {
    if (img.width <= 0 || img.height <= 0) throw ShapeError("write_png: empty image");
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    FILE* fp = std::fopen(p.string().c_str(), "wb");
    if (!fp) throw IoError("cannot open for writing: " + p.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng write failure: " + p.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * img.width));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

GrayImage read_png(const std::filesystem::path& p) {
    FILE* fp = std::fopen(p.string().c_str(), "rb");
    if (!fp) throw IoError("cannot open: " + p.string());
    png_byte header[8];
    if (std::fread(header, 1, 8, fp) != 8 || png_sig_cmp(header, 0, 8)) {
        std::fclose(fp);
        throw FormatError("not a PNG file: " + p.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw FormatError("libpng read failure: " + p.string());
    }
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    // normalize any input to 8-bit gray
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray(png, 1, -1, -1);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    GrayImage img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        png_read_row(png, img.pixels.data() + static_cast<std::size_t>(y) * img.width, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

GrayImage tensor_to_gray(const Tensor& t) {
    int h = 0, w = 0;
    if (t.rank() == 2) {
        h = t.dim(0);
        w = t.dim(1);
    } else if (t.rank() == 3 && t.dim(0) == 1) {
        h = t.dim(1);
        w = t.dim(2);
    } else if (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 1) {
        h = t.dim(2);
        w = t.dim(3);
    } else {
        throw ShapeError("tensor_to_gray expects [H,W], [1,H,W] or [1,1,H,W], got " + t.shape_str());
    }
    GrayImage img;
    img.height = h;
    img.width = w;
    img.pixels.resize(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const float v = std::clamp((t[i] + 1.0f) * 0.5f, 0.0f, 1.0f);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    return img;
}

Tensor gray_to_tensor(const GrayImage& img) {
    Tensor t({1, 1, img.height, img.width});
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        t[i] = static_cast<float>(img.pixels[i]) / 255.0f * 2.0f - 1.0f;
    return t;
}

GrayImage unit_map_to_gray(const Tensor& hw) {
    if (hw.rank() != 2) throw ShapeError("unit_map_to_gray expects [H,W]");
    GrayImage img;
    img.height = hw.dim(0);
    img.width = hw.dim(1);
    img.pixels.resize(hw.numel());
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(hw[i], 0.0f, 1.0f) * 255.0f));
    return img;
}

Tensor bilinear_resize(const Tensor& hw, int out_h, int out_w) {
    if (hw.rank() != 2) throw ShapeError("bilinear_resize expects [H,W]");
    const int h = hw.dim(0), w = hw.dim(1);
    Tensor out({out_h, out_w});
    const float sy = out_h > 1 ? static_cast<float>(h - 1) / (out_h - 1) : 0.0f;
    const float sx = out_w > 1 ? static_cast<float>(w - 1) / (out_w - 1) : 0.0f;
    for (int y = 0; y < out_h; ++y) {
        const float fy = y * sy;
        const int y0 = std::min(static_cast<int>(fy), h - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const float ty = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const float fx = x * sx;
            const int x0 = std::min(static_cast<int>(fx), w - 1);
            const int x1 = std::min(x0 + 1, w - 1);
            const float tx = fx - x0;
            const float a = hw.at(y0, x0) * (1 - tx) + hw.at(y0, x1) * tx;
            const float b = hw.at(y1, x0) * (1 - tx) + hw.at(y1, x1) * tx;
            out.at(y, x) = a * (1 - ty) + b * ty;
        }
    }
    return out;
}

GrayImage tile_grid(const Tensor& batch, int cols) {
    if (batch.rank() != 4 || batch.dim(1) != 1) throw ShapeError("tile_grid expects [N,1,H,W]");
    const int n = batch.dim(0), h = batch.dim(2), w = batch.dim(3);
    const int rows = (n + cols - 1) / cols;
    const int pad = 2;
    GrayImage grid;
    grid.height = rows * h + (rows + 1) * pad;
    grid.width = cols * w + (cols + 1) * pad;
    grid.pixels.assign(static_cast<std::size_t>(grid.height) * grid.width, 0);
    for (int i = 0; i < n; ++i) {
        const int r = i / cols, c = i % cols;
        const int oy = pad + r * (h + pad), ox = pad + c * (w + pad);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float v = std::clamp((batch.at(i, 0, y, x) + 1.0f) * 0.5f, 0.0f, 1.0f);
                grid.at(oy + y, ox + x) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    }
    return grid;
}

namespace {

// 5x7 glyphs, one bit per pixel, row-major from the top
struct Glyph {
    char ch;
    std::uint8_t rows[7];
};

constexpr Glyph kFont[] = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00}},
    {'=', {0x00, 0x00, 0x1f, 0x00, 0x1f, 0x00, 0x00}},
    {'%', {0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13}},
    {'p', {0x00, 0x00, 0x1e, 0x11, 0x1e, 0x10, 0x10}},
    {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
    {'a', {0x00, 0x00, 0x0e, 0x01, 0x0f, 0x11, 0x0f}},
    {'c', {0x00, 0x00, 0x0e, 0x10, 0x10, 0x11, 0x0e}},
    {'d', {0x01, 0x01, 0x0f, 0x11, 0x11, 0x11, 0x0f}},
    {'f', {0x06, 0x09, 0x08, 0x1c, 0x08, 0x08, 0x08}},
    {'i', {0x04, 0x00, 0x0c, 0x04, 0x04, 0x04, 0x0e}},
    {'m', {0x00, 0x00, 0x1a, 0x15, 0x15, 0x15, 0x15}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
};

const Glyph* find_glyph(char c) {
    for (const auto& g : kFont)
        if (g.ch == c) return &g;
    return nullptr;
}

}  // namespace

void draw_text(GrayImage& img, int y, int x, const std::string& text, std::uint8_t value) {
    int cx = x;
    for (char c : text) {
        const Glyph* g = find_glyph(c);
        if (g) {
            for (int ry = 0; ry < 7; ++ry)
                for (int rx = 0; rx < 5; ++rx)
                    if (g->rows[ry] & (1 << (4 - rx))) {
                        const int py = y + ry, px = cx + rx;
                        if (py >= 0 && py < img.height && px >= 0 && px < img.width) img.at(py, px) = value;
                    }
        }
        cx += 6;
    }
}

void draw_outline(GrayImage& img, const std::vector<std::uint8_t>& mask, std::uint8_t value) {
    if (mask.size() != img.pixels.size()) throw ShapeError("draw_outline: mask size mismatch");
    const int h = img.height, w = img.width;
    auto inside = [&](int y, int x) { return y >= 0 && y < h && x >= 0 && x < w && mask[static_cast<std::size_t>(y) * w + x]; };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (inside(y, x) && (!inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) || !inside(y, x + 1)))
                img.at(y, x) = value;
}

namespace {

GrayImage stack_impl(const std::vector<GrayImage>& tiles, int pad, std::uint8_t fill, bool horizontal) {
    if (tiles.empty()) throw ShapeError("stack: no tiles");
    GrayImage out;
    if (horizontal) {
        out.height = 0;
        out.width = pad;
        for (const auto& t : tiles) {
            out.height = std::max(out.height, t.height);
            out.width += t.width + pad;
        }
        out.height += 2 * pad;
        out.pixels.assign(static_cast<std::size_t>(out.height) * out.width, fill);
        int ox = pad;
        for (const auto& t : tiles) {
            for (int y = 0; y < t.height; ++y)
                std::memcpy(&out.at(pad + y, ox), &t.pixels[static_cast<std::size_t>(y) * t.width],
                            static_cast<std::size_t>(t.width));
            ox += t.width + pad;
        }
    } else {
        out.width = 0;
        out.height = pad;
        for (const auto& t : tiles) {
            out.width = std::max(out.width, t.width);
            out.height += t.height + pad;
        }
        out.width += 2 * pad;
        out.pixels.assign(static_cast<std::size_t>(out.height) * out.width, fill);
        int oy = pad;
        for (const auto& t : tiles) {
            for (int y = 0; y < t.height; ++y)
                std::memcpy(&out.at(oy + y, pad), &t.pixels[static_cast<std::size_t>(y) * t.width],
                            static_cast<std::size_t>(t.width));
            oy += t.height + pad;
        }
    }
    return out;
}

}  // namespace

GrayImage hstack(const std::vector<GrayImage>& tiles, int pad, std::uint8_t fill) {
    return stack_impl(tiles, pad, fill, true);
}

GrayImage vstack(const std::vector<GrayImage>& tiles, int pad, std::uint8_t fill) {
    return stack_impl(tiles, pad, fill, false);
}

}  // namespace ganlens
