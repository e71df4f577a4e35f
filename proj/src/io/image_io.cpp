#include "aerogen/io/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace aerogen {

namespace {

uint8_t to_byte(double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

struct FileCloser {
    FILE* f;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

}  // namespace

void write_png(const Image& img, const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("write_png: cannot open " + path);
    FileCloser closer{f};
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: libpng failure for " + path);
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double* p = img.at(x, y);
            row[static_cast<size_t>(x) * 3 + 0] = to_byte(p[0]);
            row[static_cast<size_t>(x) * 3 + 1] = to_byte(p[1]);
            row[static_cast<size_t>(x) * 3 + 2] = to_byte(p[2]);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("read_png: cannot open " + path);
    FileCloser closer{f};
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_png: libpng failure for " + path);
    }
    png_init_io(png, f);
    png_read_info(png, info);
    // normalize any input to 8-bit RGB
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    Image img(w, h);
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            img.set(x, y, row[static_cast<size_t>(x) * 3 + 0] / 255.0,
                    row[static_cast<size_t>(x) * 3 + 1] / 255.0,
                    row[static_cast<size_t>(x) * 3 + 2] / 255.0);
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void sample_bilinear(const Image& img, double x, double y, double rgb[3]) {
    const double fx = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    const double fy = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ax = fx - x0, ay = fy - y0;
    for (int c = 0; c < 3; ++c) {
        const double top = img.at(x0, y0)[c] * (1 - ax) + img.at(x1, y0)[c] * ax;
        const double bot = img.at(x0, y1)[c] * (1 - ax) + img.at(x1, y1)[c] * ax;
        rgb[c] = top * (1 - ay) + bot * ay;
    }
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
    Image out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const double sx = (x + 0.5) * img.width / out_w - 0.5;
            const double sy = (y + 0.5) * img.height / out_h - 0.5;
            double rgb[3];
            sample_bilinear(img, sx, sy, rgb);
            out.set(x, y, rgb[0], rgb[1], rgb[2]);
        }
    }
    return out;
}

Image crop_axis(const Image& img, double xmin, double ymin, double xmax, double ymax) {
    const int x0 = std::clamp(static_cast<int>(std::floor(xmin)), 0, img.width - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(ymin)), 0, img.height - 1);
    const int x1 = std::clamp(static_cast<int>(std::ceil(xmax)), x0 + 1, img.width);
    const int y1 = std::clamp(static_cast<int>(std::ceil(ymax)), y0 + 1, img.height);
    Image out(x1 - x0, y1 - y0);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const double* p = img.at(x, y);
            out.set(x - x0, y - y0, p[0], p[1], p[2]);
        }
    return out;
}

Image crop_rotated(const Image& img, const BoundingBox& box_px) {
    const auto p = obb_params(box_px);
    const int out_w = std::max(1, static_cast<int>(std::lround(p.w)));
    const int out_h = std::max(1, static_cast<int>(std::lround(p.h)));
    Image out(out_w, out_h);
    const double c = std::cos(p.theta), s = std::sin(p.theta);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            // local box frame -> image frame
            const double lx = (x + 0.5) - p.w / 2.0;
            const double ly = (y + 0.5) - p.h / 2.0;
            const double ix = p.cx + c * lx - s * ly;
            const double iy = p.cy + s * lx + c * ly;
            double rgb[3];
            sample_bilinear(img, ix - 0.5, iy - 0.5, rgb);
            out.set(x, y, rgb[0], rgb[1], rgb[2]);
        }
    }
    return out;
}

Image crop_box(const Image& img, const BoundingBox& box_px) {
    if (box_px.kind == BoxKind::OBB && !is_axis_parallel(box_px.corners)) {
        return crop_rotated(img, box_px);
    }
    const auto hull = axis_hull(box_px);
    return crop_axis(img, hull[0], hull[1], hull[2], hull[3]);
}

nn::Tensor image_to_tensor(const Image& img) {
    nn::Tensor t({3, img.height, img.width});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double* p = img.at(x, y);
            for (int c = 0; c < 3; ++c) t.at(c, y, x) = p[c] * 2.0 - 1.0;
        }
    return t;
}

Image tensor_to_image(const nn::Tensor& chw) {
    if (chw.rank() != 3 || chw.shape[0] != 3) {
        throw std::invalid_argument("tensor_to_image: expected (3,H,W)");
    }
    Image img(static_cast<int>(chw.shape[2]), static_cast<int>(chw.shape[1]));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            img.set(x, y, std::clamp((chw.at(0, y, x) + 1.0) / 2.0, 0.0, 1.0),
                    std::clamp((chw.at(1, y, x) + 1.0) / 2.0, 0.0, 1.0),
                    std::clamp((chw.at(2, y, x) + 1.0) / 2.0, 0.0, 1.0));
        }
    return img;
}

void draw_polygon(Image& img, const std::array<double, 8>& corners, const double rgb[3],
                  int thickness) {
    auto plot = [&](int x, int y) {
        for (int dy = -(thickness - 1); dy <= thickness - 1; ++dy)
            for (int dx = -(thickness - 1); dx <= thickness - 1; ++dx) {
                const int px = x + dx, py = y + dy;
                if (px >= 0 && py >= 0 && px < img.width && py < img.height) {
                    img.set(px, py, rgb[0], rgb[1], rgb[2]);
                }
            }
    };
    for (int i = 0; i < 4; ++i) {
        const double x0 = corners[static_cast<size_t>(2 * i)], y0 = corners[static_cast<size_t>(2 * i + 1)];
        const double x1 = corners[static_cast<size_t>(2 * ((i + 1) % 4))],
                     y1 = corners[static_cast<size_t>(2 * ((i + 1) % 4) + 1)];
        const int steps = std::max(2, static_cast<int>(std::hypot(x1 - x0, y1 - y0)) * 2);
        for (int sidx = 0; sidx <= steps; ++sidx) {
            const double f = static_cast<double>(sidx) / steps;
            plot(static_cast<int>(std::lround(x0 + f * (x1 - x0))),
                 static_cast<int>(std::lround(y0 + f * (y1 - y0))));
        }
    }
}

Image compose_grid(const std::vector<Image>& tiles, int columns, int pad) {
    if (tiles.empty()) {
        Image placeholder(32, 32, 0.15);
        return placeholder;
    }
    const int cols = std::max(1, columns);
    const int rows = (static_cast<int>(tiles.size()) + cols - 1) / cols;
    int tile_w = 0, tile_h = 0;
    for (const auto& t : tiles) {
        tile_w = std::max(tile_w, t.width);
        tile_h = std::max(tile_h, t.height);
    }
    Image out(cols * tile_w + (cols + 1) * pad, rows * tile_h + (rows + 1) * pad, 0.1);
    for (size_t i = 0; i < tiles.size(); ++i) {
        const int r = static_cast<int>(i) / cols;
        const int c = static_cast<int>(i) % cols;
        const int ox = pad + c * (tile_w + pad);
        const int oy = pad + r * (tile_h + pad);
        for (int y = 0; y < tiles[i].height; ++y)
            for (int x = 0; x < tiles[i].width; ++x) {
                const double* p = tiles[i].at(x, y);
                out.set(ox + x, oy + y, p[0], p[1], p[2]);
            }
    }
    return out;
}

}  // namespace aerogen
