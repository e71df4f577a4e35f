#include "aerogen/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aerogen {

namespace {

constexpr double kAreaEps = 1e-12;

struct Pt {
    double x, y;
};

double cross(const Pt& o, const Pt& a, const Pt& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

std::array<Pt, 4> to_points(const std::array<double, 8>& c) {
    return {Pt{c[0], c[1]}, Pt{c[2], c[3]}, Pt{c[4], c[5]}, Pt{c[6], c[7]}};
}

double shoelace(const std::vector<Pt>& poly) {
    double a = 0.0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Pt& p = poly[i];
        const Pt& q = poly[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    return 0.5 * a;
}

// Clips `subject` against the half-plane left of edge a->b (cross >= 0 keeps
// boundary points, which makes self-IoU exact).
std::vector<Pt> clip_edge(const std::vector<Pt>& subject, const Pt& a, const Pt& b) {
    std::vector<Pt> out;
    const size_t n = subject.size();
    out.reserve(n + 1);
    for (size_t i = 0; i < n; ++i) {
        const Pt& cur = subject[i];
        const Pt& nxt = subject[(i + 1) % n];
        const double dc = cross(a, b, cur);
        const double dn = cross(a, b, nxt);
        if (dc >= 0.0) {
            out.push_back(cur);
            if (dn < 0.0) {
                const double t = dc / (dc - dn);
                out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
            }
        } else if (dn >= 0.0) {
            const double t = dc / (dc - dn);
            out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
        }
    }
    return out;
}

}  // namespace

int64_t RegionMask::popcount() const {
    return std::accumulate(values.begin(), values.end(), int64_t{0},
                           [](int64_t acc, uint8_t v) { return acc + v; });
}

std::array<double, 8> canonicalize_corners(const std::array<double, 8>& corners) {
    auto pts = to_points(corners);
    double cx = 0.0, cy = 0.0;
    for (const auto& p : pts) {
        cx += p.x;
        cy += p.y;
    }
    cx *= 0.25;
    cy *= 0.25;
    // ascending angle about the centroid = positive-shoelace order
    std::array<int, 4> idx{0, 1, 2, 3};
    std::array<double, 4> ang{};
    for (int i = 0; i < 4; ++i) ang[static_cast<size_t>(i)] = std::atan2(pts[static_cast<size_t>(i)].y - cy, pts[static_cast<size_t>(i)].x - cx);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        const auto sa = static_cast<size_t>(a);
        const auto sb = static_cast<size_t>(b);
        if (ang[sa] != ang[sb]) return ang[sa] < ang[sb];
        // tie-break keeps the sort total for duplicate points
        if (pts[sa].y != pts[sb].y) return pts[sa].y < pts[sb].y;
        return pts[sa].x < pts[sb].x;
    });
    std::array<Pt, 4> ordered;
    for (int i = 0; i < 4; ++i) ordered[static_cast<size_t>(i)] = pts[static_cast<size_t>(idx[static_cast<size_t>(i)])];

    // convexity + area validation
    double area2 = 0.0;
    for (int i = 0; i < 4; ++i) {
        const Pt& p = ordered[static_cast<size_t>(i)];
        const Pt& q = ordered[static_cast<size_t>((i + 1) % 4)];
        area2 += p.x * q.y - q.x * p.y;
    }
    if (area2 <= kAreaEps) throw DegenerateBox("non-positive quadrilateral area");
    for (int i = 0; i < 4; ++i) {
        const double cr = cross(ordered[static_cast<size_t>(i)], ordered[static_cast<size_t>((i + 1) % 4)],
                                ordered[static_cast<size_t>((i + 2) % 4)]);
        if (cr < 0.0) throw DegenerateBox("corners do not form a convex quadrilateral");
    }

    // rotate so the min-(y, x) vertex comes first
    int start = 0;
    for (int i = 1; i < 4; ++i) {
        const Pt& p = ordered[static_cast<size_t>(i)];
        const Pt& s = ordered[static_cast<size_t>(start)];
        if (p.y < s.y || (p.y == s.y && p.x < s.x)) start = i;
    }
    std::array<double, 8> out{};
    for (int i = 0; i < 4; ++i) {
        const Pt& p = ordered[static_cast<size_t>((start + i) % 4)];
        out[static_cast<size_t>(2 * i)] = p.x;
        out[static_cast<size_t>(2 * i + 1)] = p.y;
    }
    return out;
}

bool is_axis_parallel(const std::array<double, 8>& c, double tol) {
    for (int i = 0; i < 4; ++i) {
        const double dx = c[static_cast<size_t>(2 * ((i + 1) % 4))] - c[static_cast<size_t>(2 * i)];
        const double dy = c[static_cast<size_t>(2 * ((i + 1) % 4) + 1)] - c[static_cast<size_t>(2 * i + 1)];
        if (std::fabs(dx) > tol && std::fabs(dy) > tol) return false;
    }
    return true;
}

BoundingBox corners_from_hbb(double xmin, double ymin, double xmax, double ymax, int category_id) {
    if (!(xmin < xmax) || !(ymin < ymax)) {
        throw DegenerateBox("corners_from_hbb: empty extent");
    }
    BoundingBox b;
    b.category_id = category_id;
    b.kind = BoxKind::HBB;
    b.corners = canonicalize_corners({xmin, ymin, xmax, ymin, xmax, ymax, xmin, ymax});
    return b;
}

BoundingBox corners_from_obb(double cx, double cy, double w, double h, double theta,
                             int category_id) {
    if (!(w > 0.0) || !(h > 0.0)) throw DegenerateBox("corners_from_obb: non-positive size");
    const double c = std::cos(theta), s = std::sin(theta);
    const double hw = 0.5 * w, hh = 0.5 * h;
    std::array<double, 8> out{};
    const std::array<std::array<double, 2>, 4> local{{{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}};
    for (int i = 0; i < 4; ++i) {
        const double lx = local[static_cast<size_t>(i)][0], ly = local[static_cast<size_t>(i)][1];
        out[static_cast<size_t>(2 * i)] = cx + c * lx - s * ly;
        out[static_cast<size_t>(2 * i + 1)] = cy + s * lx + c * ly;
    }
    BoundingBox b;
    b.category_id = category_id;
    b.kind = BoxKind::OBB;
    b.corners = canonicalize_corners(out);
    return b;
}

BoundingBox box_from_corners(const std::array<double, 8>& corners, int category_id,
                             std::optional<BoxKind> kind) {
    BoundingBox b;
    b.category_id = category_id;
    b.corners = canonicalize_corners(corners);
    b.kind = kind.value_or(is_axis_parallel(b.corners) ? BoxKind::HBB : BoxKind::OBB);
    return b;
}

double box_area(const BoundingBox& box) {
    auto pts = to_points(box.corners);
    std::vector<Pt> poly(pts.begin(), pts.end());
    return std::fabs(shoelace(poly));
}

std::array<double, 4> axis_hull(const BoundingBox& box) {
    double xmin = box.x(0), xmax = box.x(0), ymin = box.y(0), ymax = box.y(0);
    for (int i = 1; i < 4; ++i) {
        xmin = std::min(xmin, box.x(i));
        xmax = std::max(xmax, box.x(i));
        ymin = std::min(ymin, box.y(i));
        ymax = std::max(ymax, box.y(i));
    }
    return {xmin, ymin, xmax, ymax};
}

std::array<double, 2> box_center(const BoundingBox& box) {
    double cx = 0.0, cy = 0.0;
    for (int i = 0; i < 4; ++i) {
        cx += box.x(i);
        cy += box.y(i);
    }
    return {0.25 * cx, 0.25 * cy};
}

ObbParams obb_params(const BoundingBox& box) {
    const double e1x = box.x(1) - box.x(0), e1y = box.y(1) - box.y(0);
    const double e2x = box.x(3) - box.x(0), e2y = box.y(3) - box.y(0);
    double w = std::hypot(e1x, e1y);
    double h = std::hypot(e2x, e2y);
    double theta = std::atan2(e1y, e1x);
    if (h > w) {
        std::swap(w, h);
        theta = std::atan2(e2y, e2x);
    }
    // long-side direction mod pi
    if (theta < 0.0) theta += M_PI;
    if (theta >= M_PI) theta -= M_PI;
    const auto c = box_center(box);
    return {c[0], c[1], w, h, theta};
}

std::array<double, 8> normalize_coords(const BoundingBox& box, int img_w, int img_h) {
    if (img_w <= 0 || img_h <= 0) throw std::invalid_argument("normalize_coords: bad image size");
    std::array<double, 8> out{};
    for (int i = 0; i < 4; ++i) {
        out[static_cast<size_t>(2 * i)] = std::clamp(box.x(i) / img_w, 0.0, 1.0);
        out[static_cast<size_t>(2 * i + 1)] = std::clamp(box.y(i) / img_h, 0.0, 1.0);
    }
    return out;
}

BoundingBox normalized_box(const BoundingBox& box, int img_w, int img_h) {
    return box_from_corners(normalize_coords(box, img_w, img_h), box.category_id, box.kind);
}

BoundingBox denormalized_box(const BoundingBox& box, int img_w, int img_h) {
    std::array<double, 8> c = box.corners;
    for (int i = 0; i < 4; ++i) {
        c[static_cast<size_t>(2 * i)] *= img_w;
        c[static_cast<size_t>(2 * i + 1)] *= img_h;
    }
    return box_from_corners(c, box.category_id, box.kind);
}

bool point_in_box(const BoundingBox& box, double px, double py) {
    // boundary counts as inside; the small slack keeps points that land on an
    // edge up to rounding (e.g. grid centers on a 45-degree box) inside
    auto pts = to_points(box.corners);
    const Pt p{px, py};
    for (int i = 0; i < 4; ++i) {
        if (cross(pts[static_cast<size_t>(i)], pts[static_cast<size_t>((i + 1) % 4)], p) < -1e-12) return false;
    }
    return true;
}

RegionMask rasterize_mask(const BoundingBox& box, int grid_h, int grid_w) {
    if (grid_h <= 0 || grid_w <= 0) throw std::invalid_argument("rasterize_mask: bad grid");
    RegionMask m;
    m.grid_h = grid_h;
    m.grid_w = grid_w;
    m.values.assign(static_cast<size_t>(grid_h) * static_cast<size_t>(grid_w), 0);
    // restrict scanning to the axis hull of the box
    const auto hull = axis_hull(box);
    const int j0 = std::max(0, static_cast<int>(std::floor(hull[0] * grid_w - 0.5)));
    const int j1 = std::min(grid_w - 1, static_cast<int>(std::ceil(hull[2] * grid_w)));
    const int i0 = std::max(0, static_cast<int>(std::floor(hull[1] * grid_h - 0.5)));
    const int i1 = std::min(grid_h - 1, static_cast<int>(std::ceil(hull[3] * grid_h)));
    for (int i = i0; i <= i1; ++i) {
        for (int j = j0; j <= j1; ++j) {
            const double cx = (j + 0.5) / grid_w;
            const double cy = (i + 0.5) / grid_h;
            if (point_in_box(box, cx, cy)) m.values[static_cast<size_t>(i * grid_w + j)] = 1;
        }
    }
    return m;
}

std::optional<BoundingBox> transform_box(const BoundingBox& box, const GeomTransform& t,
                                         double img_w, double img_h, double min_area_px) {
    const double ccx = 0.5 * img_w, ccy = 0.5 * img_h;
    std::array<double, 8> out{};
    for (int i = 0; i < 4; ++i) {
        double x = box.x(i), y = box.y(i);
        switch (t.kind) {
            case TransformKind::Scale:
                x = ccx + t.p0 * (x - ccx);
                y = ccy + t.p0 * (y - ccy);
                break;
            case TransformKind::Translate:
                x += t.p0;
                y += t.p1;
                break;
            case TransformKind::Rotate: {
                const double c = std::cos(t.p0), s = std::sin(t.p0);
                const double dx = x - ccx, dy = y - ccy;
                x = ccx + c * dx - s * dy;
                y = ccy + s * dx + c * dy;
                break;
            }
            case TransformKind::FlipH:
                x = img_w - x;
                break;
            case TransformKind::FlipV:
                y = img_h - y;
                break;
        }
        out[static_cast<size_t>(2 * i)] = x;
        out[static_cast<size_t>(2 * i + 1)] = y;
    }
    if (t.kind == TransformKind::Scale && !(t.p0 > 0.0)) {
        throw std::invalid_argument("transform_box: scale factor must be positive");
    }
    BoundingBox res;
    res.category_id = box.category_id;
    res.corners = canonicalize_corners(out);
    res.kind = (box.kind == BoxKind::HBB && is_axis_parallel(res.corners)) ? BoxKind::HBB
                                                                           : BoxKind::OBB;
    const auto hull = axis_hull(res);
    const double w = std::min(hull[2], img_w) - std::max(hull[0], 0.0);
    const double h = std::min(hull[3], img_h) - std::max(hull[1], 0.0);
    if (w <= 0.0 || h <= 0.0 || w * h < min_area_px) return std::nullopt;
    return res;
}

double rotated_iou(const BoundingBox& a, const BoundingBox& b) {
    // order the arguments canonically so iou(a,b) and iou(b,a) run the exact
    // same arithmetic
    if (b.corners < a.corners) return rotated_iou(b, a);
    const auto pa = to_points(a.corners);
    const auto pb = to_points(b.corners);
    std::vector<Pt> poly(pa.begin(), pa.end());
    for (int i = 0; i < 4 && poly.size() >= 3; ++i) {
        poly = clip_edge(poly, pb[static_cast<size_t>(i)], pb[static_cast<size_t>((i + 1) % 4)]);
    }
    double inter = 0.0;
    if (poly.size() >= 3) inter = std::fabs(shoelace(poly));
    const double area_a = box_area(a);
    const double area_b = box_area(b);
    const double uni = area_a + area_b - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

BoundingBox min_area_rect(const std::vector<std::array<double, 2>>& points, int category_id) {
    if (points.size() < 3) throw DegenerateBox("min_area_rect: need at least 3 points");
    // Andrew monotone chain hull
    std::vector<Pt> pts;
    pts.reserve(points.size());
    for (const auto& p : points) pts.push_back({p[0], p[1]});
    std::sort(pts.begin(), pts.end(), [](const Pt& a, const Pt& b) {
        return a.x != b.x ? a.x < b.x : a.y < b.y;
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Pt& a, const Pt& b) { return a.x == b.x && a.y == b.y; }),
              pts.end());
    if (pts.size() < 3) throw DegenerateBox("min_area_rect: collinear/duplicate points");
    std::vector<Pt> hull(2 * pts.size());
    size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
        hull[k++] = p;
    }
    const size_t lower = k + 1;
    for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0.0) --k;
        hull[k++] = *it;
    }
    hull.resize(k - 1);
    if (hull.size() < 3) throw DegenerateBox("min_area_rect: degenerate hull");

    double best_area = std::numeric_limits<double>::infinity();
    double bu0 = 0, bu1 = 0, bv0 = 0, bv1 = 0, bc = 1, bs = 0;
    const size_t n = hull.size();
    for (size_t i = 0; i < n; ++i) {
        const Pt& p = hull[i];
        const Pt& q = hull[(i + 1) % n];
        const double len = std::hypot(q.x - p.x, q.y - p.y);
        if (len < 1e-12) continue;
        const double c = (q.x - p.x) / len, s = (q.y - p.y) / len;
        double u0 = 1e300, u1 = -1e300, v0 = 1e300, v1 = -1e300;
        for (const auto& h : hull) {
            const double u = c * h.x + s * h.y;
            const double v = -s * h.x + c * h.y;
            u0 = std::min(u0, u);
            u1 = std::max(u1, u);
            v0 = std::min(v0, v);
            v1 = std::max(v1, v);
        }
        const double area = (u1 - u0) * (v1 - v0);
        if (area < best_area) {
            best_area = area;
            bu0 = u0;
            bu1 = u1;
            bv0 = v0;
            bv1 = v1;
            bc = c;
            bs = s;
        }
    }
    if (!std::isfinite(best_area)) throw DegenerateBox("min_area_rect: no valid edge");
    // corners back in world coordinates
    auto world = [&](double u, double v) -> std::array<double, 2> {
        return {bc * u - bs * v, bs * u + bc * v};
    };
    const auto c0 = world(bu0, bv0);
    const auto c1 = world(bu1, bv0);
    const auto c2 = world(bu1, bv1);
    const auto c3 = world(bu0, bv1);
    BoundingBox b;
    b.category_id = category_id;
    b.kind = BoxKind::OBB;
    b.corners = canonicalize_corners({c0[0], c0[1], c1[0], c1[1], c2[0], c2[1], c3[0], c3[1]});
    return b;
}

}  // namespace aerogen
