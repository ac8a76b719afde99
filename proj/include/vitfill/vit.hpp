#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "vitfill/patching.hpp"
#include "vitfill/rng.hpp"
#include "vitfill/tape.hpp"

namespace vitfill {

struct ViTConfig {
    PatchScheme scheme{PatchScheme::Kind::column, 2};
    int d_model = 64;
    int heads = 4;
    int depth = 2;
    int mlp_hidden = 256;
    bool use_positional = true;

    bool operator==(const ViTConfig&) const = default;
};

inline void validate_vit_config(const ViTConfig& cfg, int h, int w) {
    if (cfg.heads < 1 || cfg.d_model < cfg.heads)
        throw ConfigError("vit: need d_model >= heads >= 1, got d_model=" +
                          std::to_string(cfg.d_model) + " heads=" + std::to_string(cfg.heads));
    if (cfg.d_model % cfg.heads != 0)
        throw ConfigError("vit: heads " + std::to_string(cfg.heads) + " must divide d_model " +
                          std::to_string(cfg.d_model));
    if (cfg.depth < 1) throw ConfigError("vit: depth must be >= 1");
    if (cfg.mlp_hidden < 1) throw ConfigError("vit: mlp_hidden must be >= 1");
    validate_scheme(cfg.scheme, h, w);
}

template <typename T>
struct ViTLayerParams {
    Tensor<T> wq, wk, wv, wo;             // d_model x d_model, no biases
    Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b; // d_model
    Tensor<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

template <typename T>
struct ViTParams {
    Tensor<T> embed_w; // D_raw x d_model
    Tensor<T> embed_b; // d_model
    Tensor<T> pos;     // N x d_model, sinusoidal, not trained
    std::vector<ViTLayerParams<T>> layers;
    Tensor<T> decode_w; // d_model x D_raw
    Tensor<T> decode_b; // D_raw

    template <typename U>
    ViTParams<U> cast() const {
        ViTParams<U> out;
        out.embed_w = embed_w.template cast<U>();
        out.embed_b = embed_b.template cast<U>();
        out.pos = pos.template cast<U>();
        for (const auto& l : layers) {
            ViTLayerParams<U> lo;
            lo.wq = l.wq.template cast<U>();
            lo.wk = l.wk.template cast<U>();
            lo.wv = l.wv.template cast<U>();
            lo.wo = l.wo.template cast<U>();
            lo.ln1_g = l.ln1_g.template cast<U>();
            lo.ln1_b = l.ln1_b.template cast<U>();
            lo.ln2_g = l.ln2_g.template cast<U>();
            lo.ln2_b = l.ln2_b.template cast<U>();
            lo.mlp_w1 = l.mlp_w1.template cast<U>();
            lo.mlp_b1 = l.mlp_b1.template cast<U>();
            lo.mlp_w2 = l.mlp_w2.template cast<U>();
            lo.mlp_b2 = l.mlp_b2.template cast<U>();
            out.layers.push_back(std::move(lo));
        }
        out.decode_w = decode_w.template cast<U>();
        out.decode_b = decode_b.template cast<U>();
        return out;
    }
};

// Classic transformer position table: pos[n, 2i] = sin(n / 10000^(2i/d)),
// pos[n, 2i+1] = cos(...). Deterministic, seed-free.
template <typename T>
Tensor<T> sinusoidal_positions(int n, int d) {
    Tensor<T> pos = Tensor<T>::zeros({n, d});
    for (int t = 0; t < n; ++t)
        for (int i = 0; i < d; ++i) {
            const double freq = std::pow(10000.0, -2.0 * (i / 2) / static_cast<double>(d));
            const double angle = t * freq;
            pos.data[static_cast<std::size_t>(t) * d + i] =
                static_cast<T>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
        }
    return pos;
}

// Truncated-normal (std 0.02) projections, zero biases, identity layer norms.
// Weight tensors are drawn in a fixed order so a seed fully determines the
// parameter set.
template <typename T>
ViTParams<T> init_vit(const ViTConfig& cfg, int c, int h, int w, std::uint64_t seed) {
    validate_vit_config(cfg, h, w);
    const int n = token_count(cfg.scheme, h, w);
    const int d_raw = token_dim(cfg.scheme, c, h, w);
    Rng rng(seed_mix(seed, 0x7697u));
    auto draw = [&rng](std::vector<int> shape) {
        Tensor<T> t = Tensor<T>::zeros(std::move(shape));
        for (T& v : t.data) v = static_cast<T>(rng.trunc_normal(0.02));
        return t;
    };
    ViTParams<T> p;
    p.embed_w = draw({d_raw, cfg.d_model});
    p.embed_b = Tensor<T>::zeros({cfg.d_model});
    p.pos = sinusoidal_positions<T>(n, cfg.d_model);
    for (int l = 0; l < cfg.depth; ++l) {
        ViTLayerParams<T> lp;
        lp.wq = draw({cfg.d_model, cfg.d_model});
        lp.wk = draw({cfg.d_model, cfg.d_model});
        lp.wv = draw({cfg.d_model, cfg.d_model});
        lp.wo = draw({cfg.d_model, cfg.d_model});
        lp.ln1_g = Tensor<T>::full({cfg.d_model}, T(1));
        lp.ln1_b = Tensor<T>::zeros({cfg.d_model});
        lp.ln2_g = Tensor<T>::full({cfg.d_model}, T(1));
        lp.ln2_b = Tensor<T>::zeros({cfg.d_model});
        lp.mlp_w1 = draw({cfg.d_model, cfg.mlp_hidden});
        lp.mlp_b1 = Tensor<T>::zeros({cfg.mlp_hidden});
        lp.mlp_w2 = draw({cfg.mlp_hidden, cfg.d_model});
        lp.mlp_b2 = Tensor<T>::zeros({cfg.d_model});
        p.layers.push_back(std::move(lp));
    }
    p.decode_w = draw({cfg.d_model, d_raw});
    p.decode_b = Tensor<T>::zeros({d_raw});
    return p;
}

// Stable (name, tensor) walk over every stored tensor, the order the
// checkpoint format serializes. `pos` is stored but not trained.
template <typename T, typename Fn>
void for_each_vit_tensor(ViTParams<T>& p, Fn&& fn) {
    fn("vit.embed.w", p.embed_w);
    fn("vit.embed.b", p.embed_b);
    fn("vit.pos", p.pos);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const std::string k = "vit.layer" + std::to_string(l) + ".";
        auto& lp = p.layers[l];
        fn(k + "wq", lp.wq);
        fn(k + "wk", lp.wk);
        fn(k + "wv", lp.wv);
        fn(k + "wo", lp.wo);
        fn(k + "ln1.g", lp.ln1_g);
        fn(k + "ln1.b", lp.ln1_b);
        fn(k + "ln2.g", lp.ln2_g);
        fn(k + "ln2.b", lp.ln2_b);
        fn(k + "mlp.w1", lp.mlp_w1);
        fn(k + "mlp.b1", lp.mlp_b1);
        fn(k + "mlp.w2", lp.mlp_w2);
        fn(k + "mlp.b2", lp.mlp_b2);
    }
    fn("vit.decode.w", p.decode_w);
    fn("vit.decode.b", p.decode_b);
}

// Parameter leaves staged on a tape. When trainable is false everything is a
// constant; the positional table is a constant either way.
template <typename T>
struct ViTVars {
    using Var = typename Tape<T>::Var;
    Var embed_w, embed_b, pos;
    struct Layer {
        Var wq, wk, wv, wo, ln1_g, ln1_b, ln2_g, ln2_b, mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    };
    std::vector<Layer> layers;
    Var decode_w, decode_b;
};

template <typename T>
ViTVars<T> stage_vit(Tape<T>& tape, const ViTParams<T>& p, bool trainable) {
    auto put = [&](const Tensor<T>& t) { return trainable ? tape.param(t) : tape.constant(t); };
    ViTVars<T> v;
    v.embed_w = put(p.embed_w);
    v.embed_b = put(p.embed_b);
    v.pos = tape.constant(p.pos);
    for (const auto& lp : p.layers) {
        typename ViTVars<T>::Layer lv;
        lv.wq = put(lp.wq);
        lv.wk = put(lp.wk);
        lv.wv = put(lp.wv);
        lv.wo = put(lp.wo);
        lv.ln1_g = put(lp.ln1_g);
        lv.ln1_b = put(lp.ln1_b);
        lv.ln2_g = put(lp.ln2_g);
        lv.ln2_b = put(lp.ln2_b);
        lv.mlp_w1 = put(lp.mlp_w1);
        lv.mlp_b1 = put(lp.mlp_b1);
        lv.mlp_w2 = put(lp.mlp_w2);
        lv.mlp_b2 = put(lp.mlp_b2);
        v.layers.push_back(lv);
    }
    v.decode_w = put(p.decode_w);
    v.decode_b = put(p.decode_b);
    return v;
}

// The trainable leaves in for_each_vit_tensor order minus `pos`, paired for
// the optimizer loop.
template <typename T>
std::vector<std::pair<std::string, typename Tape<T>::Var>> trainable_vit_vars(
    const ViTVars<T>& v) {
    std::vector<std::pair<std::string, typename Tape<T>::Var>> out;
    out.emplace_back("vit.embed.w", v.embed_w);
    out.emplace_back("vit.embed.b", v.embed_b);
    for (std::size_t l = 0; l < v.layers.size(); ++l) {
        const std::string k = "vit.layer" + std::to_string(l) + ".";
        const auto& lv = v.layers[l];
        out.emplace_back(k + "wq", lv.wq);
        out.emplace_back(k + "wk", lv.wk);
        out.emplace_back(k + "wv", lv.wv);
        out.emplace_back(k + "wo", lv.wo);
        out.emplace_back(k + "ln1.g", lv.ln1_g);
        out.emplace_back(k + "ln1.b", lv.ln1_b);
        out.emplace_back(k + "ln2.g", lv.ln2_g);
        out.emplace_back(k + "ln2.b", lv.ln2_b);
        out.emplace_back(k + "mlp.w1", lv.mlp_w1);
        out.emplace_back(k + "mlp.b1", lv.mlp_b1);
        out.emplace_back(k + "mlp.w2", lv.mlp_w2);
        out.emplace_back(k + "mlp.b2", lv.mlp_b2);
    }
    out.emplace_back("vit.decode.w", v.decode_w);
    out.emplace_back("vit.decode.b", v.decode_b);
    return out;
}

// One pre-norm block: t + MHSA(LN(t)), then + MLP(LN(.)). Per head,
// attention = softmax(Q K^T / sqrt(d_model/heads)). Row-stochastic attention
// matrices are appended to *attn when requested.
template <typename T>
typename Tape<T>::Var attention_block(Tape<T>& tape, const ViTConfig& cfg,
                                      const typename ViTVars<T>::Layer& lp,
                                      typename Tape<T>::Var tokens,
                                      std::vector<Tensor<T>>* attn) {
    const int dh = cfg.d_model / cfg.heads;
    auto h1 = tape.layer_norm(tokens, lp.ln1_g, lp.ln1_b, kLayerNormEps);
    auto q = tape.matmul(h1, lp.wq);
    auto k = tape.matmul(h1, lp.wk);
    auto v = tape.matmul(h1, lp.wv);
    std::vector<typename Tape<T>::Var> ctx;
    ctx.reserve(cfg.heads);
    for (int head = 0; head < cfg.heads; ++head) {
        const int c0 = head * dh, c1 = (head + 1) * dh;
        auto qh = tape.slice_cols(q, c0, c1);
        auto kh = tape.slice_cols(k, c0, c1);
        auto vh = tape.slice_cols(v, c0, c1);
        auto scores = tape.scale(tape.matmul_nt(qh, kh),
                                 static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
        auto probs = tape.softmax_rows(scores);
        if (attn) attn->push_back(tape.value(probs));
        ctx.push_back(tape.matmul(probs, vh));
    }
    auto merged = cfg.heads == 1 ? ctx[0] : tape.concat_cols(ctx);
    auto t1 = tape.add(tokens, tape.matmul(merged, lp.wo));
    auto h2 = tape.layer_norm(t1, lp.ln2_g, lp.ln2_b, kLayerNormEps);
    auto m1 = tape.gelu(tape.add_row_bias(tape.matmul(h2, lp.mlp_w1), lp.mlp_b1));
    auto m2 = tape.add_row_bias(tape.matmul(m1, lp.mlp_w2), lp.mlp_b2);
    return tape.add(t1, m2);
}

// tokens (N x D_raw) -> embed -> blocks -> decode (N x D_raw).
template <typename T>
typename Tape<T>::Var vit_tokens_forward(Tape<T>& tape, const ViTConfig& cfg,
                                         const ViTVars<T>& v, typename Tape<T>::Var raw_tokens,
                                         std::vector<Tensor<T>>* attn = nullptr) {
    auto t = tape.add_row_bias(tape.matmul(raw_tokens, v.embed_w), v.embed_b);
    if (cfg.use_positional) t = tape.add(t, v.pos);
    for (const auto& lp : v.layers) t = attention_block<T>(tape, cfg, lp, t, attn);
    return tape.add_row_bias(tape.matmul(t, v.decode_w), v.decode_b);
}

// Image-shaped forward: patchify via the index map, run the encoder, scatter
// the decoded patches back. Output is the raw head output (unclamped).
template <typename T>
typename Tape<T>::Var vit_image_forward(Tape<T>& tape, const ViTConfig& cfg, const ViTVars<T>& v,
                                        typename Tape<T>::Var image, int c, int h, int w,
                                        std::vector<Tensor<T>>* attn = nullptr) {
    const auto map = patch_index_map(cfg.scheme, c, h, w);
    const int n = token_count(cfg.scheme, h, w);
    const int d = token_dim(cfg.scheme, c, h, w);
    auto tokens = tape.gather(image, map, {n, d});
    auto decoded = vit_tokens_forward<T>(tape, cfg, v, tokens, attn);
    auto inverse = std::make_shared<std::vector<std::int64_t>>(map->size());
    for (std::size_t i = 0; i < map->size(); ++i)
        (*inverse)[static_cast<std::size_t>((*map)[i])] = static_cast<std::int64_t>(i);
    return tape.gather(decoded, inverse, {c, h, w});
}

// Attention matrices for one forward pass: maps[layer * heads + head], each
// N x N with rows summing to 1.
struct AttentionMaps {
    int layers = 0;
    int heads = 0;
    int tokens = 0;
    std::vector<Tensor<float>> maps;

    const Tensor<float>& at(int layer, int head) const {
        return maps[static_cast<std::size_t>(layer) * heads + head];
    }
};

struct VitForwardResult {
    ImageTensor raw; // unclamped head output, image-shaped
    AttentionMaps attention;
};

// Inference entry point: no gradients, no clamp.
inline VitForwardResult vit_forward(const ImageTensor& x, const ViTParams<float>& params,
                                    const ViTConfig& cfg) {
    if (x.shape.size() != 3)
        throw DimensionError("vit_forward: expected CxHxW, got " + x.shape_string());
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    validate_vit_config(cfg, h, w);
    Tape<float> tape(false);
    const auto vars = stage_vit(tape, params, false);
    std::vector<Tensor<float>> attn;
    const auto out = vit_image_forward<float>(tape, cfg, vars, tape.constant(x), c, h, w, &attn);
    VitForwardResult r;
    r.raw = tape.value(out);
    r.attention.layers = cfg.depth;
    r.attention.heads = cfg.heads;
    r.attention.tokens = token_count(cfg.scheme, h, w);
    r.attention.maps = std::move(attn);
    return r;
}

} // namespace vitfill
