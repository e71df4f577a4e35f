#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace aerogen {

struct DegenerateBox : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class BoxKind { HBB, OBB };

// Category-labeled convex quadrilateral. Corners are stored canonically:
// counter-clockwise by signed area (y-down raster frame), starting at the
// vertex with minimal (y, then x). HBB means all edges are axis-parallel.
struct BoundingBox {
    int category_id = 0;
    BoxKind kind = BoxKind::HBB;
    std::array<double, 8> corners{};  // x1,y1,x2,y2,x3,y3,x4,y4

    double x(int i) const { return corners[static_cast<size_t>(2 * i)]; }
    double y(int i) const { return corners[static_cast<size_t>(2 * i + 1)]; }
};

struct RegionMask {
    int grid_h = 0, grid_w = 0;
    std::vector<uint8_t> values;  // row-major, {0,1}

    uint8_t at(int i, int j) const { return values[static_cast<size_t>(i * grid_w + j)]; }
    int64_t popcount() const;
};

enum class TransformKind { Scale, Translate, Rotate, FlipH, FlipV };

struct GeomTransform {
    TransformKind kind = TransformKind::Scale;
    double p0 = 1.0, p1 = 0.0;  // scale factor / (dx,dy) / angle radians

    static GeomTransform scaling(double factor) { return {TransformKind::Scale, factor, 0.0}; }
    static GeomTransform translation(double dx, double dy) {
        return {TransformKind::Translate, dx, dy};
    }
    static GeomTransform rotation(double theta) { return {TransformKind::Rotate, theta, 0.0}; }
    static GeomTransform flip_h() { return {TransformKind::FlipH, 0.0, 0.0}; }
    static GeomTransform flip_v() { return {TransformKind::FlipV, 0.0, 0.0}; }
};

// ---- construction / canonical form ------------------------------------------

// Reorders arbitrary convex-quad corners into the canonical order above.
// Throws DegenerateBox if the points do not form a convex quadrilateral with
// positive area. Idempotent; invariant to input permutation/reversal.
std::array<double, 8> canonicalize_corners(const std::array<double, 8>& corners);

BoundingBox corners_from_hbb(double xmin, double ymin, double xmax, double ymax,
                             int category_id = 0);
BoundingBox corners_from_obb(double cx, double cy, double w, double h, double theta,
                             int category_id = 0);
// Canonicalizes an eight-coordinate list; kind is detected (axis-parallel -> HBB)
// unless forced by `kind`.
BoundingBox box_from_corners(const std::array<double, 8>& corners, int category_id = 0,
                             std::optional<BoxKind> kind = std::nullopt);

bool is_axis_parallel(const std::array<double, 8>& corners, double tol = 1e-9);

// ---- measurements ------------------------------------------------------------

double box_area(const BoundingBox& box);
// axis-aligned hull as (xmin, ymin, xmax, ymax)
std::array<double, 4> axis_hull(const BoundingBox& box);
std::array<double, 2> box_center(const BoundingBox& box);

// Center-size-angle of an OBB with the long side first: w >= h and theta in
// [0, pi) is the direction of the long side.
struct ObbParams {
    double cx, cy, w, h, theta;
};
ObbParams obb_params(const BoundingBox& box);

// ---- spec operations -----------------------------------------------------------

// Coordinates divided by image size and clipped to [0,1].
std::array<double, 8> normalize_coords(const BoundingBox& box, int img_w, int img_h);
BoundingBox normalized_box(const BoundingBox& box, int img_w, int img_h);
BoundingBox denormalized_box(const BoundingBox& box, int img_w, int img_h);

// Box in normalized [0,1] coordinates; cell (i,j) is 1 iff its center
// ((j+0.5)/grid_w, (i+0.5)/grid_h) lies inside or on the quadrilateral.
RegionMask rasterize_mask(const BoundingBox& box, int grid_h, int grid_w);

// Pixel-frame transform about the image center. Returns nullopt (Dropped) when
// the transformed box's frame-clipped axis hull falls below min_area_px.
std::optional<BoundingBox> transform_box(const BoundingBox& box, const GeomTransform& t,
                                         double img_w, double img_h, double min_area_px = 4.0);

// Intersection-over-union with the intersection computed by Sutherland-Hodgman
// convex polygon clipping. Symmetric; exact 1.0 for identical boxes.
double rotated_iou(const BoundingBox& a, const BoundingBox& b);

// Point-inside test used by rasterization (boundary counts as inside).
bool point_in_box(const BoundingBox& box, double px, double py);

// Minimum-area enclosing rotated rectangle of a point set (rotating calipers
// over the convex hull). Used by the label-matrix decoder.
BoundingBox min_area_rect(const std::vector<std::array<double, 2>>& points, int category_id = 0);

}  // namespace aerogen
