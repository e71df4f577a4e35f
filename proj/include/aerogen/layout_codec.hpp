#pragma once

#include <string>
#include <vector>

#include "aerogen/geometry.hpp"
#include "aerogen/nn/tensor.hpp"

namespace aerogen {

struct UnknownCategory : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Conditioning input to generation: image frame, prompt and pixel-unit boxes.
struct LayoutSpec {
    int width = 0;
    int height = 0;
    std::string prompt;
    std::vector<BoundingBox> boxes;
};

// ---- positional encoding -----------------------------------------------------

struct FourierConfig {
    int n_freqs = 8;
    double base = 2.0;
};

// [sin(base^k*pi*x), cos(base^k*pi*x)] per coordinate and band;
// output dim = 8 coords * 2 * n_freqs.
nn::Tensor fourier_encode(const std::array<double, 8>& coords, const FourierConfig& cfg);

// ---- category embeddings -------------------------------------------------------

struct CategoryEmbedding {
    int category_id = 0;
    nn::Tensor vector;
};

// Fixed per-category codes. The desk implementation draws a seeded random
// orthonormal table; a pretrained text-encoder table can be loaded through
// from_matrix and used behind the same interface.
class CategoryTable {
public:
    static CategoryTable from_names(std::vector<std::string> names, int dim, uint64_t seed);
    static CategoryTable from_matrix(std::vector<std::string> names, nn::Tensor matrix);

    int size() const { return static_cast<int>(names_.size()); }
    int dim() const { return static_cast<int>(matrix_.shape[1]); }
    const std::vector<std::string>& names() const { return names_; }
    int id_of(const std::string& name) const;  // throws UnknownCategory

    CategoryEmbedding encode(int category_id) const;  // throws UnknownCategory
    const nn::Tensor& start_token() const { return start_token_; }

    // Global condition tokens for a prompt: the start token followed by the
    // embeddings of category names mentioned in the prompt, in table order.
    std::vector<nn::Tensor> encode_prompt(const std::string& prompt) const;

private:
    std::vector<std::string> names_;
    nn::Tensor matrix_;       // (N, dim), unit-norm rows
    nn::Tensor start_token_;  // (dim)
};

CategoryEmbedding encode_category(int category_id, const CategoryTable& table);

// ---- layout tokens (Eq. 1 role) -------------------------------------------------

struct LayoutToken {
    nn::Tensor vector;
    BoundingBox source_box;
};

// h = W_fuse [gamma ; c]; exactly linear, no bias.
LayoutToken fuse_layout_token(const nn::Tensor& gamma, const CategoryEmbedding& c,
                              const nn::Tensor& w_fuse, const BoundingBox& source_box);

// ---- label matrix (Eq. 4 role) ---------------------------------------------------

// H x W x N; +1 inside any category-k region, -1 elsewhere when encoded.
// Values are unconstrained reals when sampled from the label DDPM.
struct LabelMatrix {
    int height = 0, width = 0, n_categories = 0;
    nn::Tensor values;  // shape (H, W, N)

    double at(int i, int j, int k) const { return values.at(i, j, k); }
};

LabelMatrix build_label_matrix(const LayoutSpec& layout, int height, int width, int n_categories);

// Per channel: binarize above `threshold`, extract 8-connected components,
// discard those under `min_cells`, fit an axis-aligned (HBB) or minimum-area
// rotated (OBB) box per component. Returned boxes are normalized to [0,1].
std::vector<BoundingBox> decode_label_matrix(const LabelMatrix& m, double threshold,
                                             int min_cells, BoxKind kind);

// (N,H,W) tensor view used by the diffusion engine; inverse of tensor_to_label.
nn::Tensor label_to_tensor(const LabelMatrix& m);
LabelMatrix tensor_to_label(const nn::Tensor& chw);

}  // namespace aerogen
