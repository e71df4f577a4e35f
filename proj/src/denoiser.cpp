#include "aerogen/denoiser.hpp"

#include <cmath>

namespace aerogen {

using nn::Var;

// ---- conditioning ------------------------------------------------------------

ConditionBundle make_condition_bundle(const LayoutSpec& layout, const CategoryTable& table,
                                      const FourierConfig& fourier, int grid_h, int grid_w) {
    ConditionBundle bundle;
    bundle.global_tokens = table.encode_prompt(layout.prompt);
    for (const auto& box : layout.boxes) {
        ObjectCondition obj;
        obj.box = normalized_box(box, layout.width, layout.height);
        obj.gamma = fourier_encode(obj.box.corners, fourier);
        obj.category_token = table.encode(box.category_id).vector;
        obj.mask = rasterize_mask(obj.box, grid_h, grid_w);
        if (obj.mask.popcount() == 0) {
            // tiny box between cell centers: mark the cell holding its center
            const auto c = box_center(obj.box);
            const int j = std::clamp(static_cast<int>(c[0] * grid_w), 0, grid_w - 1);
            const int i = std::clamp(static_cast<int>(c[1] * grid_h), 0, grid_h - 1);
            obj.mask.values[static_cast<size_t>(i * grid_w + j)] = 1;
        }
        bundle.objects.push_back(std::move(obj));
    }
    return bundle;
}

// ---- attention primitives -------------------------------------------------------

namespace {

Var rows_of(const Var& fmap) {
    const int64_t c = fmap->value.shape[0];
    const int64_t hw = fmap->value.shape[1] * fmap->value.shape[2];
    return nn::transpose(nn::reshape(fmap, {c, hw}));
}

Var rows_to_map(const Var& rows, int64_t c, int64_t h, int64_t w) {
    return nn::reshape(nn::transpose(rows), {c, h, w});
}

Var cross_attn_rows(const Var& q_rows, const Var& keys, const Var& values) {
    const int64_t d_k = keys->value.shape[1];
    if (q_rows->value.shape[1] != d_k) {
        throw DimensionMismatch("cross attention: query dim != key dim");
    }
    if (values->value.shape[0] != keys->value.shape[0]) {
        throw DimensionMismatch("cross attention: key/value token count mismatch");
    }
    Var logits = nn::scale(nn::matmul_nt(q_rows, keys), 1.0 / std::sqrt(static_cast<double>(d_k)));
    return nn::matmul(nn::softmax_rows(logits), values);
}

nn::Tensor mask_row_scales(const RegionMask& mask) {
    nn::Tensor s({static_cast<int64_t>(mask.values.size())});
    for (size_t i = 0; i < mask.values.size(); ++i) s[static_cast<int64_t>(i)] = mask.values[i];
    return s;
}

}  // namespace

Var dual_cross_attention_g(const Var& q, const Var& global_keys, const Var& global_values,
                           const Var& layout_keys, const Var& layout_values, double lambda) {
    if (q->value.rank() != 3) throw DimensionMismatch("dual_cross_attention: q must be (C,H,W)");
    const int64_t c = q->value.shape[0], h = q->value.shape[1], w = q->value.shape[2];
    if (global_values->value.shape[1] != c) {
        throw DimensionMismatch("dual_cross_attention: value dim must equal channels");
    }
    Var q_rows = rows_of(q);
    Var out = cross_attn_rows(q_rows, global_keys, global_values);
    const bool have_layout =
        layout_keys && layout_values && layout_keys->value.shape[0] > 0 && lambda != 0.0;
    if (have_layout) {
        if (layout_values->value.shape[1] != c) {
            throw DimensionMismatch("dual_cross_attention: layout value dim must equal channels");
        }
        out = nn::add_scaled(out, cross_attn_rows(q_rows, layout_keys, layout_values), lambda);
    }
    return rows_to_map(out, c, h, w);
}

Var layout_mask_attention_g(const Var& z, const std::vector<LmaObjectG>& objects, double beta,
                            bool additive_mask) {
    if (z->value.rank() != 3) throw DimensionMismatch("layout_mask_attention: z must be (C,H,W)");
    if (objects.empty()) return z;
    const int64_t c = z->value.shape[0], h = z->value.shape[1], w = z->value.shape[2];
    const int64_t hw = h * w;
    Var z_rows = rows_of(z);
    Var acc;
    for (const auto& obj : objects) {
        if (obj.mask->grid_h != h || obj.mask->grid_w != w) {
            throw MaskResolutionMismatch("layout_mask_attention: mask grid != latent grid");
        }
        if (obj.keys->value.shape[1] != c || obj.values->value.shape[1] != c) {
            throw DimensionMismatch("layout_mask_attention: token dim must equal channels");
        }
        const int64_t n_tok = obj.keys->value.shape[0];
        Var logits =
            nn::scale(nn::matmul_nt(z_rows, obj.keys), 1.0 / std::sqrt(static_cast<double>(c)));
        if (additive_mask) {
            nn::Tensor add({hw, n_tok});
            for (int64_t r = 0; r < hw; ++r) {
                if (!obj.mask->values[static_cast<size_t>(r)]) {
                    for (int64_t k = 0; k < n_tok; ++k) add.at(r, k) = -1e9;
                }
            }
            logits = nn::add_const(logits, add);
        }
        Var out_i = nn::scale_rows(nn::matmul(nn::softmax_rows(logits), obj.values),
                                   mask_row_scales(*obj.mask));
        acc = acc ? nn::add(acc, out_i) : out_i;
    }
    return rows_to_map(nn::add_scaled(z_rows, acc, beta), c, h, w);
}

FeatureMap dual_cross_attention(const FeatureMap& q, const AttnTokens& global_tokens,
                                const AttnTokens* layout_tokens, double lambda) {
    nn::NoGradGuard ng;
    Var ql = nn::constant(q);
    Var kg = nn::constant(global_tokens.keys);
    Var vg = nn::constant(global_tokens.values);
    Var kl, vl;
    if (layout_tokens) {
        kl = nn::constant(layout_tokens->keys);
        vl = nn::constant(layout_tokens->values);
    }
    return dual_cross_attention_g(ql, kg, vg, kl, vl, lambda)->value;
}

FeatureMap layout_mask_attention(const FeatureMap& z, const std::vector<LmaObject>& objects,
                                 double beta, bool additive_mask) {
    nn::NoGradGuard ng;
    Var zl = nn::constant(z);
    std::vector<LmaObjectG> objs;
    objs.reserve(objects.size());
    for (const auto& o : objects) {
        objs.push_back({nn::constant(o.tokens.keys), nn::constant(o.tokens.values), &o.mask});
    }
    return layout_mask_attention_g(zl, objs, beta, additive_mask)->value;
}

nn::Tensor timestep_embed(int t, int dim, int max_t) {
    if (t < 0 || t >= max_t) throw OutOfRange("timestep_embed: t out of [0, max_t)");
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("timestep_embed: dim must be even");
    nn::Tensor out({dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * (2.0 * i / dim));
        out[2 * i] = std::sin(t * freq);
        out[2 * i + 1] = std::cos(t * freq);
    }
    return out;
}

// ---- UNet ----------------------------------------------------------------------

void DenoiserConfig::validate() const {
    if (lambda_layout < 0.0) throw BadParameter("DenoiserConfig: lambda must be >= 0");
    if (d_k <= 0 || d_cat <= 0) throw BadParameter("DenoiserConfig: token dims must be positive");
    if (base_channels <= 0 || channel_mults.empty() || n_res_blocks < 1) {
        throw BadParameter("DenoiserConfig: bad body shape");
    }
    for (int m : channel_mults) {
        if ((base_channels * m) % groupnorm_groups != 0) {
            throw BadParameter("DenoiserConfig: channels not divisible by groupnorm groups");
        }
    }
}

UNet::UNet(DenoiserConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)), params_(init_seed) {
    cfg_.validate();
    const int64_t base = cfg_.base_channels;
    const int64_t temb_dim = 4 * base;
    const int levels = static_cast<int>(cfg_.channel_mults.size());
    for (int i = 0; i < levels; ++i) level_channels_.push_back(base * cfg_.channel_mults[static_cast<size_t>(i)]);

    auto make_res = [&](const std::string& name, int64_t c_in, int64_t c_out) {
        ResBlock rb;
        rb.c_out = c_out;
        rb.gn1 = nn::GroupNorm(params_, name + ".gn1", c_in, cfg_.groupnorm_groups);
        rb.conv1 = nn::Conv2d(params_, name + ".conv1", c_in, c_out, 3, 1, 1);
        rb.temb = nn::Linear(params_, name + ".temb", temb_dim, c_out);
        rb.gn2 = nn::GroupNorm(params_, name + ".gn2", c_out, cfg_.groupnorm_groups);
        rb.conv2 = nn::Conv2d(params_, name + ".conv2", c_out, c_out, 3, 1, 1, /*zero_init=*/true);
        rb.has_skip = c_in != c_out;
        if (rb.has_skip) rb.skip = nn::Conv2d(params_, name + ".skip", c_in, c_out, 1, 1, 0);
        return rb;
    };
    auto make_attn = [&](const std::string& name, int64_t channels) {
        AttnBlock ab;
        ab.channels = channels;
        ab.gn = nn::GroupNorm(params_, name + ".gn", channels, cfg_.groupnorm_groups);
        ab.q_proj = nn::Conv2d(params_, name + ".q", channels, channels, 1, 1, 0);
        ab.out_proj = nn::Conv2d(params_, name + ".out", channels, channels, 1, 1, 0,
                                 /*zero_init=*/true, /*bias=*/false);
        ab.k_global = nn::Linear(params_, name + ".kg", cfg_.d_cat, channels);
        ab.v_global = nn::Linear(params_, name + ".vg", cfg_.d_cat, channels);
        ab.k_layout = nn::Linear(params_, name + ".kl", cfg_.d_k, channels);
        ab.v_layout = nn::Linear(params_, name + ".vl", cfg_.d_k, channels);
        return ab;
    };
    auto has_attn = [&](int level) {
        for (int a : cfg_.attn_levels)
            if (a == level) return true;
        return false;
    };

    temb_fc1_ = nn::Linear(params_, "temb.fc1", base, temb_dim);
    temb_fc2_ = nn::Linear(params_, "temb.fc2", temb_dim, temb_dim);

    const int64_t fuse_in = 16 * cfg_.fourier.n_freqs + cfg_.d_cat;
    fuse_ = nn::Linear(params_, "fuse", fuse_in, cfg_.d_k, /*zero_init=*/false, /*bias=*/false);
    lma_k_ = nn::Linear(params_, "lma.k", cfg_.d_cat, cfg_.in_channels);
    lma_v_ = nn::Linear(params_, "lma.v", cfg_.d_cat, cfg_.in_channels, /*zero_init=*/true);

    stem_ = nn::Conv2d(params_, "stem", cfg_.in_channels, base, 3, 1, 1);
    for (int i = 0; i < levels; ++i) {
        const int64_t ch = level_channels_[static_cast<size_t>(i)];
        const int64_t ch_prev = i == 0 ? base : level_channels_[static_cast<size_t>(i - 1)];
        std::vector<ResBlock> res;
        std::vector<AttnBlock> attn;
        for (int r = 0; r < cfg_.n_res_blocks; ++r) {
            const std::string nm = "enc" + std::to_string(i) + ".res" + std::to_string(r);
            res.push_back(make_res(nm, r == 0 ? ch_prev : ch, ch));
            if (has_attn(i)) {
                attn.push_back(make_attn("enc" + std::to_string(i) + ".attn" + std::to_string(r), ch));
            }
        }
        enc_res_.push_back(std::move(res));
        enc_attn_.push_back(std::move(attn));
        if (i + 1 < levels) {
            downs_.push_back(nn::Conv2d(params_, "down" + std::to_string(i), ch, ch, 3, 2, 1));
        }
    }
    const int64_t ch_mid = level_channels_.back();
    mid_res1_ = make_res("mid.res1", ch_mid, ch_mid);
    mid_attn_ = make_attn("mid.attn", ch_mid);
    mid_res2_ = make_res("mid.res2", ch_mid, ch_mid);
    mid_has_attn_ = true;

    for (int i = 0; i < levels; ++i) {
        const int64_t ch = level_channels_[static_cast<size_t>(i)];
        std::vector<ResBlock> res;
        std::vector<AttnBlock> attn;
        for (int r = 0; r < cfg_.n_res_blocks; ++r) {
            const std::string nm = "dec" + std::to_string(i) + ".res" + std::to_string(r);
            res.push_back(make_res(nm, r == 0 ? 2 * ch : ch, ch));
            if (has_attn(i)) {
                attn.push_back(make_attn("dec" + std::to_string(i) + ".attn" + std::to_string(r), ch));
            }
        }
        dec_res_.push_back(std::move(res));
        dec_attn_.push_back(std::move(attn));
        if (i + 1 < levels) {
            ups_.push_back(nn::Conv2d(params_, "up" + std::to_string(i),
                                      level_channels_[static_cast<size_t>(i + 1)], ch, 3, 1, 1));
        }
    }
    out_gn_ = nn::GroupNorm(params_, "out.gn", base, cfg_.groupnorm_groups);
    out_conv_ = nn::Conv2d(params_, "out.conv", base, cfg_.in_channels, 3, 1, 1, /*zero_init=*/true);

    ema_ = nn::Ema(params_, 0.995);
}

Var UNet::fused_tokens_g(const ConditionBundle& cond) {
    const int64_t n = static_cast<int64_t>(cond.objects.size());
    const int64_t d_gamma = 16 * cfg_.fourier.n_freqs;
    nn::Tensor rows({n, d_gamma + cfg_.d_cat});
    for (int64_t i = 0; i < n; ++i) {
        const auto& obj = cond.objects[static_cast<size_t>(i)];
        if (obj.gamma.numel() != d_gamma || obj.category_token.numel() != cfg_.d_cat) {
            throw DimensionMismatch("fused_tokens: object token dims do not match config");
        }
        for (int64_t j = 0; j < d_gamma; ++j) rows.at(i, j) = obj.gamma[j];
        for (int64_t j = 0; j < cfg_.d_cat; ++j) rows.at(i, d_gamma + j) = obj.category_token[j];
    }
    return nn::linear(nn::constant(rows), fuse_.w, nullptr);
}

LayoutToken UNet::fuse_layout_token_now(const ObjectCondition& obj) const {
    CategoryEmbedding c;
    c.vector = obj.category_token;
    return fuse_layout_token(obj.gamma, c, fuse_.w->value, obj.box);
}

Var UNet::apply_lma(const Var& z, const std::vector<const ConditionBundle*>& conds) {
    const int64_t n = z->value.shape[0];
    std::vector<Var> outs;
    outs.reserve(static_cast<size_t>(n));
    for (int64_t s = 0; s < n; ++s) {
        Var z_s = nn::select_batch(z, s);
        const ConditionBundle* cond = conds[static_cast<size_t>(s)];
        if (!cond || cond->objects.empty()) {
            outs.push_back(z_s);
            continue;
        }
        std::vector<LmaObjectG> objs;
        objs.reserve(cond->objects.size());
        for (const auto& obj : cond->objects) {
            nn::Tensor cat_row({1, cfg_.d_cat});
            for (int64_t j = 0; j < cfg_.d_cat; ++j) cat_row.at(0, j) = obj.category_token[j];
            Var cat = nn::constant(cat_row);
            objs.push_back({nn::linear(cat, lma_k_.w, lma_k_.b),
                            nn::linear(cat, lma_v_.w, lma_v_.b), &obj.mask});
        }
        outs.push_back(
            layout_mask_attention_g(z_s, objs, cfg_.lma_strength, cfg_.lma_additive_mask));
    }
    return nn::stack_batch(outs);
}

Var UNet::res_forward(const ResBlock& rb, const Var& x, const Var& temb_rows) {
    Var h = rb.conv1(nn::silu(rb.gn1(x)));
    Var t = nn::linear(temb_rows, rb.temb.w, rb.temb.b);  // (N, c_out)
    h = nn::add_rows_nchw(h, t);
    h = rb.conv2(nn::silu(rb.gn2(h)));
    Var skip = rb.has_skip ? rb.skip(x) : x;
    return nn::add(skip, h);
}

Var UNet::attn_forward(const AttnBlock& ab, const Var& x,
                       const std::vector<const ConditionBundle*>& conds) {
    const int64_t n = x->value.shape[0];
    const int64_t c = x->value.shape[1], h = x->value.shape[2], w = x->value.shape[3];
    bool any_tokens = false;
    for (const auto* cond : conds) {
        if (cond && !cond->global_tokens.empty()) any_tokens = true;
    }
    if (!any_tokens) return x;  // attention sites are inert without tokens

    Var q = ab.q_proj(ab.gn(x));
    std::vector<Var> outs;
    outs.reserve(static_cast<size_t>(n));
    for (int64_t s = 0; s < n; ++s) {
        const ConditionBundle* cond = conds[static_cast<size_t>(s)];
        if (!cond || cond->global_tokens.empty()) {
            outs.push_back(nn::constant(nn::Tensor::zeros({c, h, w})));
            continue;
        }
        const int64_t n_g = static_cast<int64_t>(cond->global_tokens.size());
        nn::Tensor grows({n_g, cfg_.d_cat});
        for (int64_t i = 0; i < n_g; ++i) {
            const auto& tok = cond->global_tokens[static_cast<size_t>(i)];
            if (tok.numel() != cfg_.d_cat) {
                throw DimensionMismatch("attn: global token dim != d_cat");
            }
            for (int64_t j = 0; j < cfg_.d_cat; ++j) grows.at(i, j) = tok[j];
        }
        Var graw = nn::constant(grows);
        Var kg = nn::linear(graw, ab.k_global.w, ab.k_global.b);
        Var vg = nn::linear(graw, ab.v_global.w, ab.v_global.b);
        Var kl, vl;
        if (cfg_.use_dca && !cond->objects.empty()) {
            Var toks = fused_tokens_g(*cond);  // (n_l, d_k)
            kl = nn::linear(toks, ab.k_layout.w, ab.k_layout.b);
            vl = nn::linear(toks, ab.v_layout.w, ab.v_layout.b);
        }
        Var q_s = nn::select_batch(q, s);
        outs.push_back(dual_cross_attention_g(q_s, kg, vg, kl, vl, cfg_.lambda_layout));
    }
    return nn::add(x, ab.out_proj(nn::stack_batch(outs)));
}

Var UNet::forward(const Var& z_batch, const std::vector<int>& timesteps,
                  const std::vector<const ConditionBundle*>& conds, int max_t) {
    const int64_t n = z_batch->value.shape[0];
    if (static_cast<int64_t>(timesteps.size()) != n ||
        static_cast<int64_t>(conds.size()) != n) {
        throw DimensionMismatch("UNet::forward: batch size mismatch");
    }
    if (z_batch->value.shape[1] != cfg_.in_channels) {
        throw DimensionMismatch("UNet::forward: latent channels mismatch");
    }
    const int64_t base = cfg_.base_channels;
    nn::Tensor sins({n, base});
    for (int64_t s = 0; s < n; ++s) {
        const auto emb = timestep_embed(timesteps[static_cast<size_t>(s)], static_cast<int>(base), max_t);
        for (int64_t j = 0; j < base; ++j) sins.at(s, j) = emb[j];
    }
    Var temb = nn::linear(nn::silu(nn::linear(nn::constant(sins), temb_fc1_.w, temb_fc1_.b)),
                          temb_fc2_.w, temb_fc2_.b);

    Var h = z_batch;
    if (cfg_.use_lma) h = apply_lma(h, conds);
    h = stem_(h);

    const int levels = static_cast<int>(level_channels_.size());
    std::vector<Var> skips;
    for (int i = 0; i < levels; ++i) {
        for (int r = 0; r < cfg_.n_res_blocks; ++r) {
            h = res_forward(enc_res_[static_cast<size_t>(i)][static_cast<size_t>(r)], h, temb);
            if (!enc_attn_[static_cast<size_t>(i)].empty()) {
                h = attn_forward(enc_attn_[static_cast<size_t>(i)][static_cast<size_t>(r)], h, conds);
            }
        }
        skips.push_back(h);
        if (i + 1 < levels) h = downs_[static_cast<size_t>(i)](h);
    }

    h = res_forward(mid_res1_, h, temb);
    if (mid_has_attn_) h = attn_forward(mid_attn_, h, conds);
    h = res_forward(mid_res2_, h, temb);

    for (int i = levels - 1; i >= 0; --i) {
        if (i + 1 < levels) h = ups_[static_cast<size_t>(i)](nn::upsample_nearest2(h));
        h = nn::concat_channels({h, skips[static_cast<size_t>(i)]});
        for (int r = 0; r < cfg_.n_res_blocks; ++r) {
            h = res_forward(dec_res_[static_cast<size_t>(i)][static_cast<size_t>(r)], h, temb);
            if (!dec_attn_[static_cast<size_t>(i)].empty()) {
                h = attn_forward(dec_attn_[static_cast<size_t>(i)][static_cast<size_t>(r)], h, conds);
            }
        }
    }
    return out_conv_(nn::silu(out_gn_(h)));
}

FeatureMap UNet::predict_noise(const FeatureMap& z_t, int t, const ConditionBundle* cond,
                               int max_t) {
    nn::NoGradGuard ng;
    if (z_t.rank() != 3) throw DimensionMismatch("predict_noise: z must be (C,H,W)");
    if (!z_t.all_finite()) throw NonFiniteState("predict_noise: non-finite input");
    Var z = nn::constant(z_t.reshaped({1, z_t.shape[0], z_t.shape[1], z_t.shape[2]}));
    Var out = forward(z, {t}, {cond}, max_t);
    return out->value.reshaped({z_t.shape[0], z_t.shape[1], z_t.shape[2]});
}

ModelFn UNet::predict_fn(const ConditionBundle* cond, int max_t) {
    return [this, cond, max_t](const nn::Tensor& x_t, int t) {
        return predict_noise(x_t, t, cond, max_t);
    };
}

// ---- training -----------------------------------------------------------------

TrainReport train_diffusion(UNet& model, int64_t n_items, const SampleFn& sample_fn,
                            const NoiseSchedule& sched, const DiffusionTrainConfig& cfg) {
    if (n_items < 1) throw BadParameter("train_diffusion: empty dataset");
    nn::Rng rng(cfg.seed);
    nn::Adam opt(cfg.lr);
    opt.grad_clip = cfg.grad_clip;
    model.ema() = nn::Ema(model.params(), cfg.ema_decay);
    const auto params = model.params().vars();

    TrainReport report;
    report.losses.reserve(static_cast<size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<nn::Tensor> latents;
        std::vector<ConditionBundle> bundles(static_cast<size_t>(cfg.batch_size));
        std::vector<const ConditionBundle*> conds;
        std::vector<int> ts;
        nn::Tensor eps_batch;
        std::vector<nn::Tensor> noised;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const int64_t idx = rng.randint(0, n_items - 1);
            nn::Tensor x0;
            const bool has_cond = sample_fn(idx, x0, bundles[static_cast<size_t>(b)]);
            conds.push_back(has_cond ? &bundles[static_cast<size_t>(b)] : nullptr);
            const int t = static_cast<int>(rng.randint(0, sched.T - 1));
            ts.push_back(t);
            nn::Tensor eps(x0.shape);
            for (auto& v : eps.data) v = rng.normal();
            noised.push_back(q_sample(x0, t, eps, sched));
            latents.push_back(std::move(eps));
        }
        const auto& s0 = noised[0].shape;
        nn::Tensor zb({cfg.batch_size, s0[0], s0[1], s0[2]});
        nn::Tensor eb({cfg.batch_size, s0[0], s0[1], s0[2]});
        const int64_t sz = noised[0].numel();
        for (int b = 0; b < cfg.batch_size; ++b) {
            std::copy_n(noised[static_cast<size_t>(b)].ptr(), sz, zb.ptr() + b * sz);
            std::copy_n(latents[static_cast<size_t>(b)].ptr(), sz, eb.ptr() + b * sz);
        }
        nn::Adam::zero_grad(params);
        Var pred = model.forward(nn::constant(zb), ts, conds, sched.T);
        Var loss = nn::mse_loss(pred, eb);
        nn::backward(loss);
        opt.step(params);
        model.ema().update(model.params());
        report.losses.push_back(loss->value[0]);
        if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
            std::fprintf(stderr, "[train_diffusion] step %d/%d loss %.5f\n", step + 1, cfg.steps,
                         loss->value[0]);
        }
    }
    const size_t n_loss = report.losses.size();
    const size_t head = std::min<size_t>(20, n_loss);
    for (size_t i = 0; i < head; ++i) report.initial_loss += report.losses[i] / head;
    for (size_t i = n_loss - head; i < n_loss; ++i) report.final_loss += report.losses[i] / head;
    return report;
}

}  // namespace aerogen
