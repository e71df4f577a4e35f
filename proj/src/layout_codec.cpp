#include "aerogen/layout_codec.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "aerogen/nn/ops.hpp"

namespace aerogen {

nn::Tensor fourier_encode(const std::array<double, 8>& coords, const FourierConfig& cfg) {
    if (cfg.n_freqs < 1) throw std::invalid_argument("fourier_encode: n_freqs must be >= 1");
    nn::Tensor out({static_cast<int64_t>(16 * cfg.n_freqs)});
    int64_t idx = 0;
    for (double x : coords) {
        double freq = M_PI;  // base^0 * pi
        for (int k = 0; k < cfg.n_freqs; ++k) {
            out[idx++] = std::sin(freq * x);
            out[idx++] = std::cos(freq * x);
            freq *= cfg.base;
        }
    }
    return out;
}

CategoryTable CategoryTable::from_names(std::vector<std::string> names, int dim, uint64_t seed) {
    const int n = static_cast<int>(names.size());
    if (dim < n + 1) throw std::invalid_argument("CategoryTable: dim too small for orthonormal rows");
    nn::Rng rng(seed);
    // Gram-Schmidt over n+1 gaussian rows; the extra row becomes the start token.
    std::vector<nn::Tensor> rows;
    for (int i = 0; i <= n; ++i) {
        nn::Tensor v = nn::Tensor::randn({dim}, rng);
        for (const auto& prev : rows) {
            double dot = 0.0;
            for (int64_t j = 0; j < dim; ++j) dot += v[j] * prev[j];
            for (int64_t j = 0; j < dim; ++j) v[j] -= dot * prev[j];
        }
        double norm = 0.0;
        for (int64_t j = 0; j < dim; ++j) norm += v[j] * v[j];
        norm = std::sqrt(norm);
        for (int64_t j = 0; j < dim; ++j) v[j] /= norm;
        rows.push_back(std::move(v));
    }
    CategoryTable t;
    t.names_ = std::move(names);
    t.matrix_ = nn::Tensor({n, dim});
    for (int i = 0; i < n; ++i)
        for (int64_t j = 0; j < dim; ++j) t.matrix_.at(i, j) = rows[static_cast<size_t>(i)][j];
    t.start_token_ = rows.back();
    return t;
}

CategoryTable CategoryTable::from_matrix(std::vector<std::string> names, nn::Tensor matrix) {
    if (matrix.rank() != 2 || matrix.shape[0] != static_cast<int64_t>(names.size())) {
        throw std::invalid_argument("CategoryTable: matrix shape mismatch");
    }
    CategoryTable t;
    t.names_ = std::move(names);
    // rows normalized to unit length
    const int64_t dim = matrix.shape[1];
    for (int64_t i = 0; i < matrix.shape[0]; ++i) {
        double norm = 0.0;
        for (int64_t j = 0; j < dim; ++j) norm += matrix.at(i, j) * matrix.at(i, j);
        norm = std::sqrt(std::max(norm, 1e-30));
        for (int64_t j = 0; j < dim; ++j) matrix.at(i, j) /= norm;
    }
    t.matrix_ = std::move(matrix);
    t.start_token_ = nn::Tensor({dim});
    t.start_token_[0] = 1.0;
    return t;
}

int CategoryTable::id_of(const std::string& name) const {
    for (size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return static_cast<int>(i);
    }
    throw UnknownCategory("unknown category name: " + name);
}

CategoryEmbedding CategoryTable::encode(int category_id) const {
    if (category_id < 0 || category_id >= size()) {
        throw UnknownCategory("category id out of range: " + std::to_string(category_id));
    }
    CategoryEmbedding e;
    e.category_id = category_id;
    e.vector = nn::Tensor({matrix_.shape[1]});
    for (int64_t j = 0; j < matrix_.shape[1]; ++j) e.vector[j] = matrix_.at(category_id, j);
    return e;
}

std::vector<nn::Tensor> CategoryTable::encode_prompt(const std::string& prompt) const {
    std::vector<nn::Tensor> tokens;
    tokens.push_back(start_token_);
    for (int i = 0; i < size(); ++i) {
        if (prompt.find(names_[static_cast<size_t>(i)]) != std::string::npos) {
            tokens.push_back(encode(i).vector);
        }
    }
    return tokens;
}

CategoryEmbedding encode_category(int category_id, const CategoryTable& table) {
    return table.encode(category_id);
}

LayoutToken fuse_layout_token(const nn::Tensor& gamma, const CategoryEmbedding& c,
                              const nn::Tensor& w_fuse, const BoundingBox& source_box) {
    if (w_fuse.rank() != 2) throw DimensionMismatch("fuse_layout_token: W must be a matrix");
    const int64_t d_in = gamma.numel() + c.vector.numel();
    if (w_fuse.shape[1] != d_in) {
        throw DimensionMismatch("fuse_layout_token: W input dim " +
                                std::to_string(w_fuse.shape[1]) + " != " + std::to_string(d_in));
    }
    LayoutToken tok;
    tok.source_box = source_box;
    tok.vector = nn::Tensor({w_fuse.shape[0]});
    for (int64_t r = 0; r < w_fuse.shape[0]; ++r) {
        double acc = 0.0;
        for (int64_t j = 0; j < gamma.numel(); ++j) acc += w_fuse.at(r, j) * gamma[j];
        for (int64_t j = 0; j < c.vector.numel(); ++j) {
            acc += w_fuse.at(r, gamma.numel() + j) * c.vector[j];
        }
        tok.vector[r] = acc;
    }
    return tok;
}

LabelMatrix build_label_matrix(const LayoutSpec& layout, int height, int width, int n_categories) {
    LabelMatrix m;
    m.height = height;
    m.width = width;
    m.n_categories = n_categories;
    m.values = nn::Tensor::full({height, width, n_categories}, -1.0);
    for (const auto& box : layout.boxes) {
        if (box.category_id < 0 || box.category_id >= n_categories) {
            throw UnknownCategory("build_label_matrix: category id out of range");
        }
        const auto nbox = normalized_box(box, layout.width, layout.height);
        const auto mask = rasterize_mask(nbox, height, width);
        for (int i = 0; i < height; ++i)
            for (int j = 0; j < width; ++j)
                if (mask.at(i, j)) m.values.at(i, j, box.category_id) = 1.0;
    }
    return m;
}

namespace {

// 8-connected components of a binary grid; returns cell index lists.
std::vector<std::vector<std::pair<int, int>>> connected_components(
    const std::vector<uint8_t>& grid, int h, int w, int min_cells) {
    std::vector<uint8_t> seen(static_cast<size_t>(h) * static_cast<size_t>(w), 0);
    std::vector<std::vector<std::pair<int, int>>> comps;
    for (int si = 0; si < h; ++si) {
        for (int sj = 0; sj < w; ++sj) {
            const size_t sidx = static_cast<size_t>(si * w + sj);
            if (!grid[sidx] || seen[sidx]) continue;
            std::vector<std::pair<int, int>> comp;
            std::deque<std::pair<int, int>> queue{{si, sj}};
            seen[sidx] = 1;
            while (!queue.empty()) {
                auto [i, j] = queue.front();
                queue.pop_front();
                comp.emplace_back(i, j);
                for (int di = -1; di <= 1; ++di) {
                    for (int dj = -1; dj <= 1; ++dj) {
                        if (di == 0 && dj == 0) continue;
                        const int ni = i + di, nj = j + dj;
                        if (ni < 0 || nj < 0 || ni >= h || nj >= w) continue;
                        const size_t nidx = static_cast<size_t>(ni * w + nj);
                        if (grid[nidx] && !seen[nidx]) {
                            seen[nidx] = 1;
                            queue.emplace_back(ni, nj);
                        }
                    }
                }
            }
            if (static_cast<int>(comp.size()) >= min_cells) comps.push_back(std::move(comp));
        }
    }
    return comps;
}

}  // namespace

std::vector<BoundingBox> decode_label_matrix(const LabelMatrix& m, double threshold, int min_cells,
                                             BoxKind kind) {
    std::vector<BoundingBox> out;
    std::vector<uint8_t> grid(static_cast<size_t>(m.height) * static_cast<size_t>(m.width));
    for (int k = 0; k < m.n_categories; ++k) {
        for (int i = 0; i < m.height; ++i)
            for (int j = 0; j < m.width; ++j)
                grid[static_cast<size_t>(i * m.width + j)] = m.at(i, j, k) > threshold ? 1 : 0;
        for (const auto& comp : connected_components(grid, m.height, m.width, min_cells)) {
            int i0 = m.height, i1 = -1, j0 = m.width, j1 = -1;
            for (const auto& [i, j] : comp) {
                i0 = std::min(i0, i);
                i1 = std::max(i1, i);
                j0 = std::min(j0, j);
                j1 = std::max(j1, j);
            }
            BoundingBox fitted;
            if (kind == BoxKind::OBB) {
                // min-area rect over cell centers, inflated by half a cell on
                // each side (centers sit half a cell inside the true extent)
                try {
                    std::vector<std::array<double, 2>> pts;
                    pts.reserve(comp.size());
                    for (const auto& [i, j] : comp) pts.push_back({j + 0.5, i + 0.5});
                    const auto rect = min_area_rect(pts, k);
                    const auto p = obb_params(rect);
                    fitted = corners_from_obb(p.cx, p.cy, p.w + 1.0, p.h + 1.0, p.theta, k);
                } catch (const DegenerateBox&) {
                    // thin/collinear components fall back to the axis fit
                    fitted = corners_from_hbb(j0, i0, j1 + 1.0, i1 + 1.0, k);
                    fitted.kind = BoxKind::OBB;
                }
            } else {
                fitted = corners_from_hbb(j0, i0, j1 + 1.0, i1 + 1.0, k);
            }
            // cell units -> normalized [0,1], clipped to frame
            std::array<double, 8> c{};
            for (int v = 0; v < 4; ++v) {
                c[static_cast<size_t>(2 * v)] = std::clamp(fitted.x(v) / m.width, 0.0, 1.0);
                c[static_cast<size_t>(2 * v + 1)] = std::clamp(fitted.y(v) / m.height, 0.0, 1.0);
            }
            try {
                out.push_back(box_from_corners(c, k, kind));
            } catch (const DegenerateBox&) {
                // clipping collapsed the quad; skip
            }
        }
    }
    return out;
}

nn::Tensor label_to_tensor(const LabelMatrix& m) {
    nn::Tensor t({m.n_categories, m.height, m.width});
    for (int k = 0; k < m.n_categories; ++k)
        for (int i = 0; i < m.height; ++i)
            for (int j = 0; j < m.width; ++j) t.at(k, i, j) = m.at(i, j, k);
    return t;
}

LabelMatrix tensor_to_label(const nn::Tensor& chw) {
    if (chw.rank() != 3) throw std::invalid_argument("tensor_to_label: rank != 3");
    LabelMatrix m;
    m.n_categories = static_cast<int>(chw.shape[0]);
    m.height = static_cast<int>(chw.shape[1]);
    m.width = static_cast<int>(chw.shape[2]);
    m.values = nn::Tensor({m.height, m.width, m.n_categories});
    for (int k = 0; k < m.n_categories; ++k)
        for (int i = 0; i < m.height; ++i)
            for (int j = 0; j < m.width; ++j) m.values.at(i, j, k) = chw.at(k, i, j);
    return m;
}

}  // namespace aerogen
