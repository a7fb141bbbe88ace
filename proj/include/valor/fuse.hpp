#pragma once

#include "valor/layers.hpp"

#include <string>
#include <vector>

namespace valor::fuse {

using ad::Tape;
using ad::Var;

struct FusionConfig {
    int d = 64;
    int heads = 8;
    int depth = 1;
    int ffn_mult = 4;
};

struct SasConfig {
    int d = 64;
    int shared_dim = 64; // 512 at full scale
};

// Each block: text rows query image rows through multi-head attention (no
// projection biases), then two add & norm stages:
//   Z = LN1(H_t + Attn(H_t, H_i));  Z = LN2(Z + FFN(Z))
template <typename S>
void register_fusion(ParamStore<S>& ps, const FusionConfig& cfg, Rng& rng, const std::string& prefix = "fuse")
{
    if (cfg.d % cfg.heads != 0)
        throw std::invalid_argument("fusion: d=" + std::to_string(cfg.d) + " not divisible by H=" +
                                    std::to_string(cfg.heads));
    for (int b = 0; b < cfg.depth; ++b) {
        const std::string n = prefix + ".block" + std::to_string(b);
        layers::register_attention(ps, n + ".attn", cfg.d, rng, /*qkv_bias=*/false);
        layers::register_layer_norm(ps, n + ".ln1", cfg.d);
        layers::register_ffn(ps, n + ".ffn", cfg.d, cfg.ffn_mult * cfg.d, rng);
        layers::register_layer_norm(ps, n + ".ln2", cfg.d);
    }
}

// Returns x (1 x d): the mean over unmasked text rows of the fused states.
template <typename S>
Var<S> cross_modal_attention(Tape<S>& t, ParamStore<S>& ps, const FusionConfig& cfg, Var<S> text, Var<S> image,
                             const std::vector<char>& text_mask, const std::string& prefix = "fuse")
{
    if (cfg.d % cfg.heads != 0)
        throw std::invalid_argument("fusion: d not divisible by H");
    if (static_cast<Eigen::Index>(text_mask.size()) != text.rows())
        throw std::invalid_argument("fusion: mask length mismatch");
    Var<S> z = text;
    for (int b = 0; b < cfg.depth; ++b) {
        const std::string n = prefix + ".block" + std::to_string(b);
        Var<S> att = layers::multi_head_attention(t, ps, n + ".attn", z, image, cfg.heads);
        z = layers::layer_norm(t, ps, n + ".ln1", ad::add(z, att));
        z = layers::layer_norm(t, ps, n + ".ln2", ad::add(z, layers::ffn(t, ps, n + ".ffn", z)));
    }
    Vector<S> w(text.rows());
    for (Eigen::Index i = 0; i < w.size(); ++i)
        w(i) = text_mask[static_cast<std::size_t>(i)] ? S(1) : S(0);
    return ad::weighted_mean_rows(z, w);
}

// Semantic alignment score: per-modality GELU MLPs into a shared space,
// layer norm on each, concatenation, a GELU head and a tanh output.
template <typename S>
void register_sas(ParamStore<S>& ps, const SasConfig& cfg, Rng& rng, const std::string& prefix = "sas")
{
    const int ds = cfg.shared_dim;
    for (const char* side : {"text", "image"}) {
        const std::string n = prefix + "." + side;
        layers::register_linear(ps, n + ".fc1", cfg.d, ds, rng);
        layers::register_linear(ps, n + ".fc2", ds, ds, rng);
        layers::register_layer_norm(ps, n + ".ln", ds);
    }
    layers::register_linear(ps, prefix + ".head.fc1", 2 * ds, ds, rng);
    layers::register_linear(ps, prefix + ".head.fc2", ds, 1, rng);
}

// h_text, h_image: B x d. Returns s: B x 1, strictly inside [-1, 1].
template <typename S>
Var<S> semantic_alignment_score(Tape<S>& t, ParamStore<S>& ps, Var<S> h_text, Var<S> h_image,
                                const std::string& prefix = "sas")
{
    auto branch = [&](const std::string& side, Var<S> h) {
        const std::string n = prefix + "." + side;
        Var<S> u = layers::linear(t, ps, n + ".fc2", ad::gelu(layers::linear(t, ps, n + ".fc1", h)));
        return layers::layer_norm(t, ps, n + ".ln", u);
    };
    Var<S> joint = ad::concat_cols<S>({branch("text", h_text), branch("image", h_image)});
    Var<S> hidden = ad::gelu(layers::linear(t, ps, prefix + ".head.fc1", joint));
    return ad::tanh(layers::linear(t, ps, prefix + ".head.fc2", hidden));
}

} // namespace valor::fuse
