#pragma once

#include <functional>

#include "aerogen/diffusion.hpp"
#include "aerogen/layout_codec.hpp"
#include "aerogen/nn/layers.hpp"
#include "aerogen/nn/optim.hpp"

namespace aerogen {

struct OutOfRange : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MaskResolutionMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Rank-3 (channels, height, width) tensor.
using FeatureMap = nn::Tensor;

// ---- conditioning ------------------------------------------------------------

// Per-object conditioning state. The object's key/value token set for masked
// attention is derived from category_token; its layout token (Eq. 1 role) is
// fused inside the denoiser from (gamma, category_token) with the learned map.
struct ObjectCondition {
    BoundingBox box;           // normalized [0,1] frame
    nn::Tensor gamma;          // Fourier-encoded corners
    nn::Tensor category_token; // fixed category code
    RegionMask mask;           // rasterized at the latent resolution
};

struct ConditionBundle {
    std::vector<nn::Tensor> global_tokens;  // prompt encoding
    std::vector<ObjectCondition> objects;   // aligned: one mask + one token set per object

    size_t n_objects() const { return objects.size(); }
};

// Builds the bundle for a layout: prompt tokens, per-object Fourier codes,
// category codes and latent-resolution masks. A box too small to cover any
// cell center gets its center cell marked so the object is never invisible to
// the masked attention.
ConditionBundle make_condition_bundle(const LayoutSpec& layout, const CategoryTable& table,
                                      const FourierConfig& fourier, int grid_h, int grid_w);

// ---- attention primitives -------------------------------------------------------

// Key/value token set for one cross-attention source (n tokens).
struct AttnTokens {
    nn::Tensor keys;    // (n, d_k)
    nn::Tensor values;  // (n, d_v)
};

// Object token set plus its spatial mask for masked attention.
struct LmaObject {
    AttnTokens tokens;  // keys/values both sized (n_i, C) for a C-channel map
    RegionMask mask;
};

// Out = softmax(Q Kg^T / sqrt(d_k)) Vg + lambda * softmax(Q Kl^T / sqrt(d_k)) Vl
// with Q the flattened spatial rows of q. layout == nullptr or zero layout
// tokens contributes exactly nothing (empty-sum convention); shape preserved.
FeatureMap dual_cross_attention(const FeatureMap& q, const AttnTokens& global_tokens,
                                const AttnTokens* layout_tokens, double lambda);

// z + beta * sum_i diag(M_i) softmax(Q K_i^T / sqrt(d_k) + Mcal_i) V_i where
// Mcal_i adds -1e9 to logit rows outside M_i (toggleable) and the row mask
// zeroes out-of-box output rows exactly.
FeatureMap layout_mask_attention(const FeatureMap& z, const std::vector<LmaObject>& objects,
                                 double beta, bool additive_mask = true);

// Graph versions used inside the trained network (identical math, autograd).
nn::Var dual_cross_attention_g(const nn::Var& q, const nn::Var& global_keys,
                               const nn::Var& global_values, const nn::Var& layout_keys,
                               const nn::Var& layout_values, double lambda);
struct LmaObjectG {
    nn::Var keys, values;
    const RegionMask* mask;
};
nn::Var layout_mask_attention_g(const nn::Var& z, const std::vector<LmaObjectG>& objects,
                                double beta, bool additive_mask);

// Sinusoidal timestep embedding, interleaved [sin, cos, ...]; t must lie in
// [0, max_t).
nn::Tensor timestep_embed(int t, int dim, int max_t);

// ---- the denoiser network --------------------------------------------------------

struct DenoiserConfig {
    int in_channels = 192;  // 3 * latent_block^2
    int base_channels = 64;
    std::vector<int> channel_mults = {1, 2, 4};
    int n_res_blocks = 2;
    std::vector<int> attn_levels = {0, 1, 2};  // cross-attention levels; -1 = middle only
    int groupnorm_groups = 8;

    int d_k = 64;    // layout token dim (Eq. 1 output)
    int d_cat = 32;  // category code dim
    FourierConfig fourier{};

    double lambda_layout = 1.0;  // Eq. 2 lambda
    double lma_strength = 1.0;   // beta
    bool use_lma = true;
    bool use_dca = true;
    bool lma_additive_mask = true;

    void validate() const;
};

// Conditional noise predictor: one pre-body layout-mask-attention injection on
// the input latent, a small U-Net body whose cross-attention sites combine the
// global prompt tokens with the fused layout tokens (Eq. 2).
class UNet {
public:
    UNet(DenoiserConfig cfg, uint64_t init_seed);

    // training graph; conds[i] == nullptr means unconditional sample i
    nn::Var forward(const nn::Var& z_batch, const std::vector<int>& timesteps,
                    const std::vector<const ConditionBundle*>& conds, int max_t);

    // plain single-sample form (inference path, no grad retention)
    FeatureMap predict_noise(const FeatureMap& z_t, int t, const ConditionBundle* cond, int max_t);

    // model closure for the diffusion samplers; uses EMA weights when swap_ema
    ModelFn predict_fn(const ConditionBundle* cond, int max_t);

    // Eq. 1 with the network's current fuse weights (test/inspection surface).
    LayoutToken fuse_layout_token_now(const ObjectCondition& obj) const;

    nn::ParamSet& params() { return params_; }
    const DenoiserConfig& config() const { return cfg_; }
    nn::Ema& ema() { return ema_; }
    void set_use_ema_for_inference(bool v) { use_ema_ = v; }
    bool use_ema_for_inference() const { return use_ema_; }

private:
    struct ResBlock {
        nn::GroupNorm gn1, gn2;
        nn::Conv2d conv1, conv2, skip;
        nn::Linear temb;
        bool has_skip = false;
        int64_t c_out = 0;
    };
    struct AttnBlock {
        nn::GroupNorm gn;
        nn::Conv2d q_proj, out_proj;
        nn::Linear k_global, v_global, k_layout, v_layout;
        int64_t channels = 0;
    };

    nn::Var res_forward(const ResBlock& rb, const nn::Var& x, const nn::Var& temb_rows);
    nn::Var attn_forward(const AttnBlock& ab, const nn::Var& x,
                         const std::vector<const ConditionBundle*>& conds);
    nn::Var apply_lma(const nn::Var& z, const std::vector<const ConditionBundle*>& conds);
    // per-sample fused layout tokens (n_i, d_k) as graph nodes
    nn::Var fused_tokens_g(const ConditionBundle& cond);

    DenoiserConfig cfg_;
    nn::ParamSet params_;
    nn::Ema ema_;
    bool use_ema_ = true;

    nn::Conv2d stem_, out_conv_;
    nn::GroupNorm out_gn_;
    nn::Linear temb_fc1_, temb_fc2_;
    nn::Linear fuse_;                       // Eq. 1 W_fuse (no bias)
    nn::Linear lma_k_, lma_v_;              // category code -> latent-channel K/V
    std::vector<std::vector<ResBlock>> enc_res_;
    std::vector<std::vector<AttnBlock>> enc_attn_;
    std::vector<nn::Conv2d> downs_;
    ResBlock mid_res1_, mid_res2_;
    AttnBlock mid_attn_;
    bool mid_has_attn_ = true;
    std::vector<std::vector<ResBlock>> dec_res_;
    std::vector<std::vector<AttnBlock>> dec_attn_;
    std::vector<nn::Conv2d> ups_;
    std::vector<int64_t> level_channels_;
};

// RAII guard that swaps the EMA weights in around a sampling loop (and back on
// exit) when the model prefers EMA for inference.
class EmaScope {
public:
    explicit EmaScope(UNet& model) : model_(model), active_(model.use_ema_for_inference()) {
        if (active_) model_.ema().swap(model_.params());
    }
    ~EmaScope() {
        if (active_) model_.ema().swap(model_.params());
    }
    EmaScope(const EmaScope&) = delete;
    EmaScope& operator=(const EmaScope&) = delete;

private:
    UNet& model_;
    bool active_;
};

// ---- training -----------------------------------------------------------------

struct DiffusionTrainConfig {
    int steps = 1000;
    int batch_size = 8;
    double lr = 2e-3;
    double grad_clip = 1.0;
    double ema_decay = 0.995;
    uint64_t seed = 0;
    int log_every = 0;  // 0 = silent
};

// Provides sample `index` as (x0 latent, optional conditioning). The bundle
// out-param is used only when the function returns true for `has_cond`.
using SampleFn = std::function<bool(int64_t index, nn::Tensor& x0, ConditionBundle& cond)>;

struct TrainReport {
    std::vector<double> losses;  // per logged step
    double initial_loss = 0.0;   // mean over first 20 steps
    double final_loss = 0.0;     // mean over last 20 steps
};

TrainReport train_diffusion(UNet& model, int64_t n_items, const SampleFn& sample_fn,
                            const NoiseSchedule& sched, const DiffusionTrainConfig& cfg);

}  // namespace aerogen
