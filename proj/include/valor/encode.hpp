#pragma once

#include "valor/datagen.hpp"
#include "valor/layers.hpp"
#include "valor/vocabulary.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace valor::encode {

using ad::Tape;
using ad::Var;

enum class ScalePreset { Desk, Paper };

struct EncoderConfig {
    int d = 64;
    int layers = 2;
    int heads = 8;
    int max_tokens = 32;
    int vocab = 1000;
    int patch = 8;
    int image_side = 32;
    int ffn_mult = 4;

    static EncoderConfig desk() { return {}; }
    static EncoderConfig paper() { return {768, 12, 12, 512, 30522, 16, 224, 4}; }

    int patch_count() const { return (image_side / patch) * (image_side / patch); }
    int patch_dim() const { return 3 * patch * patch; }
    void validate() const;
};

struct TokenSequence {
    std::vector<int> ids;
    std::vector<char> mask; // 1 = real token (CLS included), 0 = padding

    int length() const { return static_cast<int>(ids.size()); }
    int real_count() const;
};

// CLS at position 0, then up to L-1 word ids, then padding to exactly L.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_tokens);

// Non-overlapping row-major patches, each flattened channel-major to
// 3 * patch^2 values. Throws when the side is not a multiple of the patch.
template <typename S>
Matrix<S> patchify(const datagen::Image& img, int patch)
{
    if (patch <= 0 || img.height % patch != 0 || img.width % patch != 0)
        throw std::invalid_argument("patchify: image " + std::to_string(img.height) + "x" +
                                    std::to_string(img.width) + " not divisible into " + std::to_string(patch) +
                                    "-pixel patches");
    const int ph = img.height / patch, pw = img.width / patch;
    Matrix<S> out(ph * pw, img.channels * patch * patch);
    for (int py = 0; py < ph; ++py)
        for (int px = 0; px < pw; ++px) {
            const int row = py * pw + px;
            int col = 0;
            for (int c = 0; c < img.channels; ++c)
                for (int y = 0; y < patch; ++y)
                    for (int x = 0; x < patch; ++x)
                        out(row, col++) = static_cast<S>(img.at(c, py * patch + y, px * patch + x));
        }
    return out;
}

// Image used in place of a missing one.
datagen::Image blank_image(int side);

template <typename S>
struct TextEncoding {
    Var<S> tokens; // H_t: L x d
    Var<S> cls;    // h_t: 1 x d
    std::vector<char> mask;
};

template <typename S>
struct ImageEncoding {
    Var<S> patches; // H_i: P x d
    Var<S> cls;     // h_i: 1 x d
};

template <typename S>
void register_text_encoder(ParamStore<S>& ps, const EncoderConfig& cfg, Rng& rng, const std::string& prefix = "text")
{
    cfg.validate();
    ps.add_normal(prefix + ".tok_emb", cfg.vocab, cfg.d, 1.0, rng);
    ps.add_normal(prefix + ".pos_emb", cfg.max_tokens, cfg.d, 0.1, rng);
    for (int l = 0; l < cfg.layers; ++l)
        layers::register_encoder_block(ps, prefix + ".layer" + std::to_string(l), cfg.d, cfg.ffn_mult * cfg.d, rng);
}

template <typename S>
void register_image_encoder(ParamStore<S>& ps, const EncoderConfig& cfg, Rng& rng, const std::string& prefix = "image")
{
    cfg.validate();
    layers::register_linear(ps, prefix + ".patch_proj", cfg.patch_dim(), cfg.d, rng);
    ps.add_normal(prefix + ".cls", 1, cfg.d, 1.0, rng);
    ps.add_normal(prefix + ".pos_emb", cfg.patch_count() + 1, cfg.d, 0.1, rng);
    for (int l = 0; l < cfg.layers; ++l)
        layers::register_encoder_block(ps, prefix + ".layer" + std::to_string(l), cfg.d, cfg.ffn_mult * cfg.d, rng);
}

inline void check_params_finite_prefix(const auto& ps, const std::string& prefix)
{
    for (const auto& p : ps.all())
        if (p.name.rfind(prefix, 0) == 0 && !p.value.allFinite())
            throw NonFiniteError("parameter " + p.name);
}

// Pre-norm transformer over token embeddings plus learned positions; padded
// positions are excluded as attention keys.
template <typename S>
TextEncoding<S> encode_text(Tape<S>& t, ParamStore<S>& ps, const EncoderConfig& cfg, const TokenSequence& tokens,
                            const std::string& prefix = "text", bool check_finite = true)
{
    if (check_finite)
        check_params_finite_prefix(ps, prefix + ".");
    if (tokens.length() != cfg.max_tokens)
        throw std::invalid_argument("encode_text: expected " + std::to_string(cfg.max_tokens) + " tokens");
    Var<S> x = ad::add(ad::gather_rows(t.param(ps, prefix + ".tok_emb"), tokens.ids), t.param(ps, prefix + ".pos_emb"));
    for (int l = 0; l < cfg.layers; ++l)
        x = layers::encoder_block(t, ps, prefix + ".layer" + std::to_string(l), x, cfg.heads, tokens.mask);
    return {x, ad::slice_rows(x, 0, 1), tokens.mask};
}

// Patch projection, learned CLS prepended at position 0, learned positions,
// pre-norm transformer. H_i excludes the CLS row.
template <typename S>
ImageEncoding<S> encode_image(Tape<S>& t, ParamStore<S>& ps, const EncoderConfig& cfg, const Matrix<S>& patches,
                              const std::string& prefix = "image", bool check_finite = true)
{
    if (check_finite)
        check_params_finite_prefix(ps, prefix + ".");
    if (patches.rows() != cfg.patch_count() || patches.cols() != cfg.patch_dim())
        throw std::invalid_argument("encode_image: patch matrix shape mismatch");
    Var<S> proj = layers::linear(t, ps, prefix + ".patch_proj", t.constant(patches));
    Var<S> x = ad::concat_rows<S>({t.param(ps, prefix + ".cls"), proj});
    x = ad::add(x, t.param(ps, prefix + ".pos_emb"));
    for (int l = 0; l < cfg.layers; ++l)
        x = layers::encoder_block(t, ps, prefix + ".layer" + std::to_string(l), x, cfg.heads);
    return {ad::slice_rows(x, 1, cfg.patch_count()), ad::slice_rows(x, 0, 1)};
}

} // namespace valor::encode
