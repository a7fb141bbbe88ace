#pragma once

#include "valor/layers.hpp"
#include "valor/schema.hpp"

#include <array>
#include <string>
#include <vector>

namespace valor::validate {

using ad::Tape;
using ad::Var;

struct ValidationConfig {
    int d = 64;
    int d_t = 128;
    int experts = 2;
    int layers = 2;           // 32 at full scale
    int trainable_layers = 2; // last N stack layers receive updates
    int ffn_mult = 2;
    int out_dim = 64;         // W_v,out width
    int head_hidden = 64;
};

inline std::string val_name(int l)
{
    return "val" + std::to_string(l);
}

// Per expert: W_v,in; a stack of single-token pre-norm transformer layers
// (attention over one position reduces to the value/output projections);
// W_v,out; a two-layer ReLU head per task. A shared gate gives g_v.
template <typename S>
void register_validation(ParamStore<S>& ps, const ValidationConfig& cfg, Rng& rng)
{
    const int frozen = std::max(0, cfg.layers - cfg.trainable_layers);
    for (int l = 0; l < cfg.experts; ++l) {
        const std::string n = val_name(l);
        layers::register_linear(ps, n + ".in", cfg.d, cfg.d_t, rng);
        for (int i = 0; i < cfg.layers; ++i) {
            const std::string ln = n + ".layer" + std::to_string(i);
            const std::size_t before = ps.size();
            layers::register_layer_norm(ps, ln + ".ln1", cfg.d_t);
            layers::register_linear(ps, ln + ".attn.v", cfg.d_t, cfg.d_t, rng);
            layers::register_linear(ps, ln + ".attn.o", cfg.d_t, cfg.d_t, rng);
            layers::register_layer_norm(ps, ln + ".ln2", cfg.d_t);
            layers::register_ffn(ps, ln + ".ffn", cfg.d_t, cfg.ffn_mult * cfg.d_t, rng);
            if (i < frozen)
                for (std::size_t j = before; j < ps.size(); ++j)
                    ps.all()[j].trainable = false;
        }
        layers::register_linear(ps, n + ".out", cfg.d_t, cfg.out_dim, rng);
        layers::register_linear(ps, n + ".aspect.fc1", cfg.out_dim, cfg.head_hidden, rng);
        layers::register_linear(ps, n + ".aspect.fc2", cfg.head_hidden, LabelSchema::kAspects, rng);
        layers::register_linear(ps, n + ".severity.fc1", cfg.out_dim, cfg.head_hidden, rng);
        layers::register_linear(ps, n + ".severity.fc2", cfg.head_hidden, LabelSchema::kSeverities, rng);
    }
    ps.add_constant("val_gate.w", cfg.d, cfg.experts, S(0));
}

template <typename S>
struct ValidationVars {
    std::vector<std::array<Var<S>, 2>> experts; // [l][task] logits
    Var<S> gate;                                // g_v: B x L_v
    std::array<Var<S>, 2> mixture;              // l_v per task
};

template <typename S>
ValidationVars<S> validation_forward(Tape<S>& t, ParamStore<S>& ps, const ValidationConfig& cfg, Var<S> x)
{
    ValidationVars<S> out;
    for (int l = 0; l < cfg.experts; ++l) {
        const std::string n = val_name(l);
        Var<S> h = layers::linear(t, ps, n + ".in", x);
        for (int i = 0; i < cfg.layers; ++i) {
            const std::string ln = n + ".layer" + std::to_string(i);
            Var<S> a = layers::layer_norm(t, ps, ln + ".ln1", h);
            h = ad::add(h, layers::linear(t, ps, ln + ".attn.o", layers::linear(t, ps, ln + ".attn.v", a)));
            h = ad::add(h, layers::ffn(t, ps, ln + ".ffn", layers::layer_norm(t, ps, ln + ".ln2", h)));
        }
        Var<S> z = layers::linear(t, ps, n + ".out", h);
        auto head = [&](const char* task) {
            return layers::linear(t, ps, n + "." + task + ".fc2",
                                  ad::relu(layers::linear(t, ps, n + "." + task + ".fc1", z)));
        };
        out.experts.push_back({head("aspect"), head("severity")});
    }
    out.gate = ad::softmax_rows(ad::matmul(x, t.param(ps, "val_gate.w")));
    for (int task = 0; task < 2; ++task) {
        Var<S> mix = ad::mul_rows(out.experts[0][task], ad::slice_cols(out.gate, 0, 1));
        for (int l = 1; l < cfg.experts; ++l)
            mix = ad::add(mix, ad::mul_rows(out.experts[l][task], ad::slice_cols(out.gate, l, 1)));
        out.mixture[task] = mix;
    }
    return out;
}

// --- metrics on plain values ---------------------------------------------------

// Cosine similarity; throws UndefinedMetric on a zero vector.
template <typename DA, typename DB>
double alignment_score(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b)
{
    const double na = a.template cast<double>().norm(), nb = b.template cast<double>().norm();
    if (na == 0.0 || nb == 0.0)
        throw UndefinedMetric("alignment: zero logit vector");
    return a.template cast<double>().reshaped().dot(b.template cast<double>().reshaped()) / (na * nb);
}

// Mean per-sample cosine over all expert pairs and batch rows.
template <typename S>
double mean_alignment(const std::vector<Matrix<S>>& experts)
{
    if (experts.size() < 2)
        throw std::invalid_argument("mean_alignment: need at least two experts");
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t l = 0; l < experts.size(); ++l)
        for (std::size_t m = l + 1; m < experts.size(); ++m)
            for (Eigen::Index b = 0; b < experts[l].rows(); ++b, ++n)
                sum += alignment_score(experts[l].row(b), experts[m].row(b));
    return sum / static_cast<double>(n);
}

// Pearson correlation over the flattened batch x class values.
template <typename DA, typename DB>
double dominance_score(const Eigen::MatrixBase<DA>& lp, const Eigen::MatrixBase<DB>& lv)
{
    if (lp.size() != lv.size() || lp.size() == 0)
        throw std::invalid_argument("dominance: size mismatch");
    const Eigen::ArrayXd p = lp.template cast<double>().reshaped().array();
    const Eigen::ArrayXd v = lv.template cast<double>().reshaped().array();
    const Eigen::ArrayXd pc = p - p.mean(), vc = v - v.mean();
    const double var_p = pc.square().mean(), var_v = vc.square().mean();
    if (var_p == 0.0 || var_v == 0.0)
        throw UndefinedMetric("dominance: zero variance");
    return (pc * vc).mean() / std::sqrt(var_p * var_v);
}

// Batch-mean softmax entropy of one expert's B x C logits.
template <typename Derived>
double complementarity_score(const Eigen::MatrixBase<Derived>& logits)
{
    const Matrix<double> p = softmax_rows(logits.template cast<double>());
    double h = 0;
    for (Eigen::Index b = 0; b < p.rows(); ++b)
        for (Eigen::Index c = 0; c < p.cols(); ++c)
            if (p(b, c) > 0.0)
                h -= p(b, c) * std::log(p(b, c));
    return h / static_cast<double>(p.rows());
}

struct TaskMetrics {
    double r_avg = 0;
    double dominance = 0;
    std::vector<double> complementarity; // per validation expert
    double u_avg = 0;
};

struct ValidationReport {
    std::array<TaskMetrics, 2> task; // indexed by Task
};

// --- differentiable versions (same formulas on the tape) -------------------

inline constexpr double kTapeEps = 1e-12;

// B x 1 row-wise cosine between two B x C logit matrices.
template <typename S>
Var<S> alignment_rows(Var<S> a, Var<S> b)
{
    Var<S> dot = ad::row_sum(ad::cmul(a, b));
    Var<S> na = ad::row_sum(ad::cmul(a, a));
    Var<S> nb = ad::row_sum(ad::cmul(b, b));
    return ad::cdiv(dot, ad::sqrt(ad::shift(ad::cmul(na, nb), S(kTapeEps))));
}

template <typename S>
Var<S> mean_alignment(const std::vector<Var<S>>& experts)
{
    std::vector<Var<S>> pairs;
    for (std::size_t l = 0; l < experts.size(); ++l)
        for (std::size_t m = l + 1; m < experts.size(); ++m)
            pairs.push_back(alignment_rows(experts[l], experts[m]));
    return ad::mean_all(ad::concat_rows(pairs));
}

template <typename S>
Var<S> dominance(Var<S> lp, Var<S> lv)
{
    auto centered = [](Var<S> v) { return ad::add_scalar(v, ad::scale(ad::mean_all(v), S(-1))); };
    Var<S> pc = centered(lp), vc = centered(lv);
    Var<S> cov = ad::mean_all(ad::cmul(pc, vc));
    Var<S> var = ad::cmul(ad::mean_all(ad::cmul(pc, pc)), ad::mean_all(ad::cmul(vc, vc)));
    return ad::cdiv(cov, ad::sqrt(ad::shift(var, S(kTapeEps))));
}

// Batch-mean entropy of softmax(logits), 1 x 1.
template <typename S>
Var<S> complementarity(Var<S> logits)
{
    Var<S> h = ad::row_sum(ad::cmul(ad::softmax_rows(logits), ad::log_softmax_rows(logits)));
    return ad::scale(ad::mean_all(h), S(-1));
}

} // namespace valor::validate
