#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "aerogen/layout_codec.hpp"
#include "oracles.hpp"

using namespace aerogen;

namespace {

// Non-overlapping random layout on the decode grid. `aligned` snaps box edges
// to cell boundaries (the regime where the round-trip guarantee applies).
LayoutSpec random_grid_layout(nn::Rng& rng, int grid, int n_categories, bool aligned,
                              int min_side_cells = 8, int max_side_cells = 24) {
    LayoutSpec layout;
    layout.width = grid;
    layout.height = grid;
    const int n_boxes = static_cast<int>(rng.randint(1, 4));
    int attempts = 0;
    while (static_cast<int>(layout.boxes.size()) < n_boxes && attempts++ < 200) {
        const double w = static_cast<double>(rng.randint(min_side_cells, max_side_cells));
        const double h = static_cast<double>(rng.randint(min_side_cells, max_side_cells));
        double x0 = static_cast<double>(rng.randint(0, grid - static_cast<int>(w)));
        double y0 = static_cast<double>(rng.randint(0, grid - static_cast<int>(h)));
        if (!aligned) {
            x0 = std::min(x0 + rng.uniform(), grid - w);
            y0 = std::min(y0 + rng.uniform(), grid - h);
        }
        auto box = corners_from_hbb(x0, y0, x0 + w, y0 + h,
                                    static_cast<int>(rng.randint(0, n_categories - 1)));
        bool overlaps = false;
        for (const auto& other : layout.boxes) {
            if (rotated_iou(box, other) > 0.0) overlaps = true;
        }
        // keep a one-cell gap so rasterized components stay disconnected
        const auto hull = axis_hull(box);
        for (const auto& other : layout.boxes) {
            const auto oh = axis_hull(other);
            if (hull[0] < oh[2] + 1 && oh[0] < hull[2] + 1 && hull[1] < oh[3] + 1 &&
                oh[1] < hull[3] + 1) {
                overlaps = true;
            }
        }
        if (!overlaps) layout.boxes.push_back(box);
    }
    return layout;
}

}  // namespace

TEST_CASE("fourier_encode basics") {
    FourierConfig cfg;
    const std::array<double, 8> zeros{};
    const auto enc = fourier_encode(zeros, cfg);
    CHECK(enc.numel() == 128);  // 8 coords * 2 * 8 bands
    for (int64_t i = 0; i < enc.numel(); i += 2) {
        CHECK(enc[i] == 0.0);      // sin 0
        CHECK(enc[i + 1] == 1.0);  // cos 0
    }

    // deterministic and bounded
    nn::Rng rng(3);
    for (int it = 0; it < 20; ++it) {
        std::array<double, 8> c{};
        for (auto& v : c) v = rng.uniform();
        const auto a = fourier_encode(c, cfg);
        const auto b = fourier_encode(c, cfg);
        for (int64_t i = 0; i < a.numel(); ++i) {
            CHECK(a[i] == b[i]);
            CHECK(a[i] >= -1.0);
            CHECK(a[i] <= 1.0);
        }
    }

    // period of the k=0 band is 2/base^0 = 2
    std::array<double, 8> x{0.13, 0.4, 0.7, 0.2, 0.9, 0.05, 0.33, 0.81};
    std::array<double, 8> x2 = x;
    for (auto& v : x2) v += 2.0;
    const auto ea = fourier_encode(x, cfg);
    const auto eb = fourier_encode(x2, cfg);
    for (int coord = 0; coord < 8; ++coord) {
        const int64_t base_idx = coord * 16;  // band k=0 entries
        CHECK(std::fabs(ea[base_idx] - eb[base_idx]) < 1e-9);
        CHECK(std::fabs(ea[base_idx + 1] - eb[base_idx + 1]) < 1e-9);
    }
}

TEST_CASE("encode_category is fixed, unit-norm and bounds-checked") {
    auto table = CategoryTable::from_names({"disc", "square", "triangle"}, 16, 42);
    const auto a = encode_category(1, table);
    const auto b = encode_category(1, table);
    for (int64_t i = 0; i < a.vector.numel(); ++i) CHECK(a.vector[i] == b.vector[i]);
    for (int id = 0; id < 3; ++id) {
        double norm = 0.0;
        const auto e = encode_category(id, table);
        for (int64_t i = 0; i < e.vector.numel(); ++i) norm += e.vector[i] * e.vector[i];
        CHECK(std::fabs(std::sqrt(norm) - 1.0) < 1e-6);
    }
    CHECK_THROWS_AS(encode_category(3, table), UnknownCategory);
    CHECK_THROWS_AS(encode_category(-1, table), UnknownCategory);
    CHECK(table.id_of("square") == 1);
    CHECK_THROWS_AS(table.id_of("ufo"), UnknownCategory);
}

TEST_CASE("fuse_layout_token is the exact linear map") {
    auto table = CategoryTable::from_names({"a", "b"}, 8, 7);
    const auto box = corners_from_hbb(0, 0, 1, 1, 0);
    FourierConfig cfg{1, 2.0};
    const auto gamma = fourier_encode(normalize_coords(box, 1, 1), cfg);  // dim 16
    const auto c = encode_category(0, table);                             // dim 8
    const int64_t d_in = gamma.numel() + c.vector.numel();

    const auto zero_tok = fuse_layout_token(gamma, c, nn::Tensor::zeros({4, d_in}), box);
    for (int64_t i = 0; i < 4; ++i) CHECK(zero_tok.vector[i] == 0.0);

    nn::Tensor ident({d_in, d_in});
    for (int64_t i = 0; i < d_in; ++i) ident.at(i, i) = 1.0;
    const auto id_tok = fuse_layout_token(gamma, c, ident, box);
    for (int64_t i = 0; i < gamma.numel(); ++i) CHECK(id_tok.vector[i] == gamma[i]);
    for (int64_t i = 0; i < c.vector.numel(); ++i) {
        CHECK(id_tok.vector[gamma.numel() + i] == c.vector[i]);
    }

    // linearity: fuse(u) + fuse(v) == fuse(u + v) within 1e-9
    nn::Rng rng(11);
    nn::Tensor w = nn::Tensor::randn({5, d_in}, rng);
    const auto g2 = fourier_encode(normalize_coords(corners_from_hbb(0.1, 0.2, 0.8, 0.9), 1, 1),
                                   cfg);
    const auto cb = encode_category(1, table);
    nn::Tensor gsum({gamma.numel()});
    for (int64_t i = 0; i < gamma.numel(); ++i) gsum[i] = gamma[i] + g2[i];
    CategoryEmbedding csum;
    csum.category_id = 0;
    csum.vector = nn::Tensor({c.vector.numel()});
    for (int64_t i = 0; i < c.vector.numel(); ++i) csum.vector[i] = c.vector[i] + cb.vector[i];
    const auto fa = fuse_layout_token(gamma, c, w, box);
    const auto fb = fuse_layout_token(g2, cb, w, box);
    const auto fs = fuse_layout_token(gsum, csum, w, box);
    for (int64_t i = 0; i < 5; ++i) {
        CHECK(std::fabs(fa.vector[i] + fb.vector[i] - fs.vector[i]) < 1e-9);
    }

    CHECK_THROWS_AS(fuse_layout_token(gamma, c, nn::Tensor::zeros({4, d_in + 1}), box),
                    DimensionMismatch);
}

TEST_CASE("build_label_matrix follows region membership") {
    LayoutSpec empty;
    empty.width = empty.height = 64;
    const auto m0 = build_label_matrix(empty, 4, 4, 3);
    for (double v : m0.values.data) CHECK(v == -1.0);

    LayoutSpec one;
    one.width = one.height = 64;
    one.boxes.push_back(corners_from_hbb(0, 0, 32, 32, 2));  // upper-left quadrant
    const auto m1 = build_label_matrix(one, 4, 4, 3);
    int plus = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 3; ++k) {
                if (k == 2 && i < 2 && j < 2) {
                    CHECK(m1.at(i, j, k) == 1.0);
                    ++plus;
                } else {
                    CHECK(m1.at(i, j, k) == -1.0);
                }
            }
    CHECK(plus == 4);

    // overlapping same-category boxes merge; +1 popcount equals union area
    LayoutSpec two;
    two.width = two.height = 64;
    two.boxes.push_back(corners_from_hbb(0, 0, 40, 40, 1));
    two.boxes.push_back(corners_from_hbb(24, 24, 64, 64, 1));
    const auto m2 = build_label_matrix(two, 8, 8, 3);
    const auto ra = rasterize_mask(normalized_box(two.boxes[0], 64, 64), 8, 8);
    const auto rb = rasterize_mask(normalized_box(two.boxes[1], 64, 64), 8, 8);
    int64_t union_count = 0;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            const bool in_union = ra.at(i, j) || rb.at(i, j);
            if (in_union) ++union_count;
            CHECK(m2.at(i, j, 1) == (in_union ? 1.0 : -1.0));
        }
    int64_t plus_count = 0;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            if (m2.at(i, j, 1) == 1.0) ++plus_count;
    CHECK(plus_count == union_count);
}

TEST_CASE("decode_label_matrix edge cases") {
    LabelMatrix m;
    m.height = m.width = 16;
    m.n_categories = 2;
    m.values = nn::Tensor::full({16, 16, 2}, -1.0);
    CHECK(decode_label_matrix(m, 0.0, 1, BoxKind::HBB).empty());

    m.values.at(5, 5, 0) = 1.0;
    CHECK(decode_label_matrix(m, 0.0, 4, BoxKind::HBB).empty());
    const auto single = decode_label_matrix(m, 0.0, 1, BoxKind::HBB);
    REQUIRE(single.size() == 1);
    CHECK(single[0].category_id == 0);
    CHECK(box_area(single[0]) == doctest::Approx(1.0 / 256.0));
}

TEST_CASE("grid-aligned HBB round trip is exact") {
    nn::Rng rng(101);
    int checked = 0;
    for (int it = 0; it < 220; ++it) {
        const auto layout = random_grid_layout(rng, 64, 3, true);
        if (layout.boxes.empty()) continue;
        const auto m = build_label_matrix(layout, 64, 64, 3);
        const auto decoded = decode_label_matrix(m, 0.0, 4, BoxKind::HBB);
        REQUIRE(decoded.size() == layout.boxes.size());
        for (const auto& orig : layout.boxes) {
            const auto norm = normalized_box(orig, 64, 64);
            double best = 0.0;
            for (const auto& dec : decoded) {
                if (dec.category_id != orig.category_id) continue;
                best = std::max(best, rotated_iou(norm, dec));
            }
            CHECK(best >= 0.999);
            ++checked;
        }
    }
    CHECK(checked > 200);
}

TEST_CASE("continuous HBB round trip stays above 0.9 median") {
    // off-lattice boxes lose up to half a cell per edge; the per-box floor
    // for >= 8-cell sides is tracked here with honest bounds
    nn::Rng rng(202);
    std::vector<double> ious;
    for (int it = 0; it < 100; ++it) {
        const auto layout = random_grid_layout(rng, 64, 3, false, 10, 24);
        if (layout.boxes.empty()) continue;
        const auto m = build_label_matrix(layout, 64, 64, 3);
        const auto decoded = decode_label_matrix(m, 0.0, 4, BoxKind::HBB);
        for (const auto& orig : layout.boxes) {
            const auto norm = normalized_box(orig, 64, 64);
            double best = 0.0;
            for (const auto& dec : decoded) {
                if (dec.category_id != orig.category_id) continue;
                best = std::max(best, rotated_iou(norm, dec));
            }
            ious.push_back(best);
        }
    }
    REQUIRE(ious.size() > 100);
    std::sort(ious.begin(), ious.end());
    CHECK(ious[ious.size() / 2] > 0.9);   // median
    CHECK(ious.front() > 0.75);           // worst case bounded by quantization
}

TEST_CASE("OBB decode recovers rotated boxes usefully") {
    nn::Rng rng(303);
    std::vector<double> ious;
    for (int it = 0; it < 60; ++it) {
        LayoutSpec layout;
        layout.width = layout.height = 64;
        const double w = rng.uniform(14, 26), h = rng.uniform(10, 20);
        const double theta = rng.uniform(-M_PI / 2, M_PI / 2);
        layout.boxes.push_back(corners_from_obb(32, 32, w, h, theta, 0));
        const auto m = build_label_matrix(layout, 64, 64, 1);
        const auto decoded = decode_label_matrix(m, 0.0, 4, BoxKind::OBB);
        REQUIRE(decoded.size() == 1);
        CHECK(decoded[0].kind == BoxKind::OBB);
        ious.push_back(rotated_iou(decoded[0], normalized_box(layout.boxes[0], 64, 64)));
    }
    std::sort(ious.begin(), ious.end());
    CHECK(ious[ious.size() / 2] > 0.8);
    CHECK(ious.front() > 0.6);
}

TEST_CASE("label tensor view round trips") {
    nn::Rng rng(9);
    LayoutSpec layout = random_grid_layout(rng, 32, 4, true);
    const auto m = build_label_matrix(layout, 32, 32, 4);
    const auto rt = tensor_to_label(label_to_tensor(m));
    CHECK(rt.values.data == m.values.data);
    CHECK(rt.height == m.height);
    CHECK(rt.n_categories == m.n_categories);
}

TEST_CASE("encode_prompt yields start token plus mentioned categories") {
    auto table = CategoryTable::from_names({"disc", "square", "ring"}, 16, 5);
    const auto toks = table.encode_prompt("a remote sensing image of ring, disc");
    CHECK(toks.size() == 3);  // start + disc + ring
    const auto none = table.encode_prompt("nothing here");
    CHECK(none.size() == 1);
}
