#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aerogen/geometry.hpp"
#include "aerogen/nn/tensor.hpp"

namespace aerogen {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Interleaved RGB image, values in [0,1].
struct Image {
    int width = 0, height = 0;
    std::vector<double> px;  // height*width*3

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), px(static_cast<size_t>(w) * static_cast<size_t>(h) * 3, fill) {}

    double* at(int x, int y) { return px.data() + (static_cast<size_t>(y) * width + x) * 3; }
    const double* at(int x, int y) const {
        return px.data() + (static_cast<size_t>(y) * width + x) * 3;
    }
    void set(int x, int y, double r, double g, double b) {
        double* p = at(x, y);
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }
};

void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);

// bilinear sample with edge clamping; coordinates in pixels
void sample_bilinear(const Image& img, double x, double y, double rgb[3]);

Image resize_bilinear(const Image& img, int out_w, int out_h);

// Axis crop (clamped to frame). Boxes in pixel units.
Image crop_axis(const Image& img, double xmin, double ymin, double xmax, double ymax);

// Rotate-then-crop for OBB boxes: samples the box's own frame so the object
// appears axis-aligned in the crop.
Image crop_rotated(const Image& img, const BoundingBox& box_px);

// crop matching the box kind (axis hull for HBB, rotated crop for OBB)
Image crop_box(const Image& img, const BoundingBox& box_px);

// (3,H,W) tensor in [-1,1] <-> image
nn::Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const nn::Tensor& chw);

// viz helpers
void draw_polygon(Image& img, const std::array<double, 8>& corners, const double rgb[3],
                  int thickness = 1);
Image compose_grid(const std::vector<Image>& tiles, int columns, int pad = 2);

}  // namespace aerogen
