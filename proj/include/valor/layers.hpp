#pragma once

// Building blocks shared by the encoders, fusion block and experts.

#include "valor/autodiff.hpp"
#include "valor/params.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace valor::layers {

using ad::Tape;
using ad::Var;

template <typename S>
void register_linear(ParamStore<S>& ps, const std::string& name, int in, int out, Rng& rng, bool bias = true,
                     double gain = 1.0)
{
    ps.add_normal(name + ".w", in, out, gain / std::sqrt(static_cast<double>(in)), rng);
    if (bias)
        ps.add_constant(name + ".b", 1, out, S(0));
}

template <typename S>
void register_layer_norm(ParamStore<S>& ps, const std::string& name, int width)
{
    ps.add_constant(name + ".g", 1, width, S(1));
    ps.add_constant(name + ".b", 1, width, S(0));
}

template <typename S>
Var<S> linear(Tape<S>& t, ParamStore<S>& ps, const std::string& name, Var<S> x)
{
    Var<S> y = ad::matmul(x, t.param(ps, name + ".w"));
    if (ps.contains(name + ".b"))
        y = ad::add_rowvec(y, t.param(ps, name + ".b"));
    return y;
}

template <typename S>
Var<S> layer_norm(Tape<S>& t, ParamStore<S>& ps, const std::string& name, Var<S> x)
{
    return ad::layer_norm_rows(x, t.param(ps, name + ".g"), t.param(ps, name + ".b"));
}

// Multi-head scaled dot-product attention. Queries come from q_in, keys and
// values from kv_in; head h uses column block h of each d x d projection.
// key_mask (optional) marks valid kv rows.
template <typename S>
Var<S> multi_head_attention(Tape<S>& t, ParamStore<S>& ps, const std::string& name, Var<S> q_in, Var<S> kv_in,
                            int heads, const std::vector<char>& key_mask = {})
{
    const Eigen::Index d = q_in.cols();
    if (d % heads != 0)
        throw std::invalid_argument(name + ": width " + std::to_string(d) + " not divisible by " +
                                    std::to_string(heads) + " heads");
    const Eigen::Index dh = d / heads;
    Var<S> q = linear(t, ps, name + ".q", q_in);
    Var<S> k = linear(t, ps, name + ".k", kv_in);
    Var<S> v = linear(t, ps, name + ".v", kv_in);
    const S inv_scale = S(1) / std::sqrt(static_cast<S>(dh));
    std::vector<Var<S>> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Var<S> qh = ad::slice_cols(q, h * dh, dh);
        Var<S> kh = ad::slice_cols(k, h * dh, dh);
        Var<S> vh = ad::slice_cols(v, h * dh, dh);
        Var<S> scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_scale);
        outs.push_back(ad::matmul(ad::softmax_rows(scores, key_mask), vh));
    }
    return linear(t, ps, name + ".o", ad::concat_cols(outs));
}

template <typename S>
void register_attention(ParamStore<S>& ps, const std::string& name, int d, Rng& rng, bool qkv_bias = true)
{
    register_linear(ps, name + ".q", d, d, rng, qkv_bias);
    register_linear(ps, name + ".k", d, d, rng, qkv_bias);
    register_linear(ps, name + ".v", d, d, rng, qkv_bias);
    register_linear(ps, name + ".o", d, d, rng, true);
}

template <typename S>
void register_ffn(ParamStore<S>& ps, const std::string& name, int d, int hidden, Rng& rng)
{
    register_linear(ps, name + ".in", d, hidden, rng);
    register_linear(ps, name + ".out", hidden, d, rng);
}

template <typename S>
Var<S> ffn(Tape<S>& t, ParamStore<S>& ps, const std::string& name, Var<S> x)
{
    return linear(t, ps, name + ".out", ad::gelu(linear(t, ps, name + ".in", x)));
}

// Pre-norm encoder block:
//   x <- x + MHA(LN1(x));  x <- x + FFN(LN2(x))
template <typename S>
void register_encoder_block(ParamStore<S>& ps, const std::string& name, int d, int hidden, Rng& rng)
{
    register_layer_norm(ps, name + ".ln1", d);
    register_attention(ps, name + ".attn", d, rng);
    register_layer_norm(ps, name + ".ln2", d);
    register_ffn(ps, name + ".ffn", d, hidden, rng);
}

template <typename S>
Var<S> encoder_block(Tape<S>& t, ParamStore<S>& ps, const std::string& name, Var<S> x, int heads,
                     const std::vector<char>& key_mask = {})
{
    Var<S> n1 = layer_norm(t, ps, name + ".ln1", x);
    x = ad::add(x, multi_head_attention(t, ps, name + ".attn", n1, n1, heads, key_mask));
    Var<S> n2 = layer_norm(t, ps, name + ".ln2", x);
    return ad::add(x, ffn(t, ps, name + ".ffn", n2));
}

} // namespace valor::layers
