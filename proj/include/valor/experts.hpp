#pragma once

#include "valor/layers.hpp"
#include "valor/schema.hpp"

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace valor::experts {

using ad::Tape;
using ad::Var;

// The four-step reasoning prompt every expert carries; prepended verbatim to
// rendered reasoning traces.
inline constexpr std::string_view kCotPromptTemplate =
    "Analyze this multimodal input about a customer complaint from text and image.\n"
    "\n"
    "Use Chain of Thought reasoning:\n"
    "\n"
    "Step 1: Identify the key features in the input.\n"
    "\n"
    "Step 2: Consider what aspect the complaint is about (Software, Hardware, Packaging, Price, Service, or "
    "Quality).\n"
    "\n"
    "Step 3: Determine the severity level (No Explicit Reproach, Disapproval, Blame, or Accusation).\n"
    "\n"
    "Step 4: Make a classification decision based on your reasoning.\n"
    "\n"
    "Reasoning:";

struct SamplerConfig {
    double temperature = 0.5;
    int top_k = 30;
    double top_p = 0.9;
};

struct ExpertConfig {
    int d = 64;
    int d_t = 128; // 4096 at full scale
    int experts = 4;
    int stub_blocks = 2;
    int ffn_mult = 2;
    int reasoning_vocab = 256;
    int trace_tokens = 24;
    int route_top_k = 1;
    double router_noise = 0.05;
    double router_init_sd = 0.02;
};

struct RoutingDecision {
    Matrix<double> gates;          // B x K, rows on the simplex
    std::vector<int> selected;     // k* per sample
    Matrix<double> one_hot;        // R: B x K
    std::vector<double> entropy;   // per-sample routing entropy
    RowVector<double> mean_gates;  // 1 x K
};

// -log-sum of g * log g with 0 log 0 = 0. Throws when a component lies
// outside [0, 1].
template <typename S>
S routing_entropy(std::span<const S> g)
{
    S h = 0;
    for (S v : g) {
        if (!(v >= S(0) && v <= S(1)))
            throw std::invalid_argument("routing_entropy: component outside [0,1]");
        if (v > S(0))
            h -= v * std::log(v);
    }
    return h;
}

template <typename Derived>
typename Derived::Scalar routing_entropy(const Eigen::MatrixBase<Derived>& g)
{
    using S = typename Derived::Scalar;
    Vector<S> v = g.reshaped();
    return routing_entropy<S>(std::span<const S>(v.data(), static_cast<std::size_t>(v.size())));
}

// sum_k (1/K - mean_b g_bk)^2 over a B x K gate matrix.
template <typename Derived>
typename Derived::Scalar load_balance_loss(const Eigen::MatrixBase<Derived>& gates)
{
    using S = typename Derived::Scalar;
    if (gates.rows() == 0 || gates.cols() == 0)
        throw std::invalid_argument("load_balance_loss: empty batch");
    const S k = static_cast<S>(gates.cols());
    RowVector<S> mean = gates.colwise().mean();
    return (mean.array() - S(1) / k).square().sum();
}

inline Matrix<double> router_noise(Rng& rng, Eigen::Index batch, Eigen::Index experts, double sigma)
{
    Matrix<double> n(batch, experts);
    for (Eigen::Index b = 0; b < batch; ++b)
        for (Eigen::Index k = 0; k < experts; ++k)
            n(b, k) = normal(rng, 0.0, sigma);
    return n;
}

// Builds selection, entropy and load statistics from gate values.
inline RoutingDecision decide(const Matrix<double>& gates)
{
    RoutingDecision r;
    r.gates = gates;
    r.one_hot = Matrix<double>::Zero(gates.rows(), gates.cols());
    for (Eigen::Index b = 0; b < gates.rows(); ++b) {
        const int k = static_cast<int>(argmax(gates.row(b)));
        r.selected.push_back(k);
        r.one_hot(b, k) = 1.0;
        r.entropy.push_back(routing_entropy(gates.row(b)));
    }
    r.mean_gates = gates.colwise().mean();
    return r;
}

// g = softmax(x W_r + b_r [+ N(0, sigma^2) in train mode]); k* = argmax g
// with the lowest index winning ties.
template <typename S>
RoutingDecision route(const Matrix<S>& x, const Matrix<S>& w_r, const RowVector<S>& b_r, Rng* rng, Mode mode,
                      double sigma = 0.05)
{
    Matrix<double> logits = ((x * w_r).rowwise() + b_r).template cast<double>();
    if (mode == Mode::Train) {
        if (!rng)
            throw std::invalid_argument("route: train mode needs an rng");
        logits += router_noise(*rng, logits.rows(), logits.cols(), sigma);
    }
    return decide(softmax_rows(logits));
}

// Probabilities after temperature scaling, top-k truncation and nucleus
// truncation (smallest prefix reaching top_p, boundary token kept),
// renormalized. top_k is clamped to the vocabulary size.
inline std::vector<double> filtered_distribution(std::span<const double> logits, const SamplerConfig& cfg)
{
    if (!(cfg.temperature > 0.0))
        throw std::invalid_argument("sampler: temperature must be positive");
    if (cfg.top_k < 1)
        throw std::invalid_argument("sampler: top_k must be at least 1");
    if (!(cfg.top_p > 0.0 && cfg.top_p <= 1.0))
        throw std::invalid_argument("sampler: top_p must be in (0, 1]");
    const std::size_t v = logits.size();
    if (v == 0)
        throw std::invalid_argument("sampler: empty logits");
    std::vector<std::size_t> order(v);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.top_k), v);
    order.resize(k);

    const double mx = logits[order[0]] / cfg.temperature;
    std::vector<double> p(k);
    double z = 0;
    for (std::size_t i = 0; i < k; ++i) {
        p[i] = std::exp(logits[order[i]] / cfg.temperature - mx);
        z += p[i];
    }
    std::size_t keep = 0;
    double cum = 0;
    while (keep < k) {
        cum += p[keep] / z;
        ++keep;
        if (cum >= cfg.top_p - 1e-12)
            break;
    }
    double kept = 0;
    for (std::size_t i = 0; i < keep; ++i)
        kept += p[i];
    std::vector<double> out(v, 0.0);
    for (std::size_t i = 0; i < keep; ++i)
        out[order[i]] = p[i] / kept;
    return out;
}

inline int sample_token(std::span<const double> logits, const SamplerConfig& cfg, Rng& rng)
{
    const auto p = filtered_distribution(logits, cfg);
    double u = uniform01(rng);
    int last = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0)
            continue;
        last = static_cast<int>(i);
        if (u < p[i])
            return last;
        u -= p[i];
    }
    return last;
}

// --- expert bank ------------------------------------------------------------

inline std::string expert_name(int k)
{
    return "expert" + std::to_string(k);
}

template <typename S>
void register_experts(ParamStore<S>& ps, const ExpertConfig& cfg, Rng& rng)
{
    for (int k = 0; k < cfg.experts; ++k) {
        const std::string n = expert_name(k);
        ps.add_constant(n + ".alpha", 1, cfg.d, S(1));
        ps.add_constant(n + ".beta", 1, cfg.d, S(0));
        layers::register_linear(ps, n + ".in", cfg.d, cfg.d_t, rng);
        for (int b = 0; b < cfg.stub_blocks; ++b) {
            layers::register_layer_norm(ps, n + ".block" + std::to_string(b) + ".ln", cfg.d_t);
            layers::register_ffn(ps, n + ".block" + std::to_string(b) + ".ffn", cfg.d_t, cfg.ffn_mult * cfg.d_t, rng);
        }
        ps.add_normal(n + ".token_head", cfg.d_t, cfg.reasoning_vocab, 1.0 / std::sqrt(double(cfg.d_t)), rng);
        layers::register_linear(ps, n + ".out_aspect", cfg.d_t, LabelSchema::kAspects, rng);
        layers::register_linear(ps, n + ".out_severity", cfg.d_t, LabelSchema::kSeverities, rng);
    }
    ps.add_normal("router.w", cfg.d, cfg.experts, cfg.router_init_sd, rng);
    ps.add_constant("router.b", 1, cfg.experts, S(0));
}

template <typename S>
struct ExpertVars {
    Var<S> aspect;   // B x C_a
    Var<S> severity; // B x C_s
    Var<S> hidden;   // h_final: B x d_t
};

// x' = x * alpha_k + beta_k; x'' = x' W_in + b_in; residual pre-norm FFN
// blocks give h_final; both task heads read h_final.
template <typename S>
ExpertVars<S> expert_forward(Tape<S>& t, ParamStore<S>& ps, const ExpertConfig& cfg, int k, Var<S> x)
{
    if (k < 0 || k >= cfg.experts)
        throw std::out_of_range("expert index " + std::to_string(k));
    const std::string n = expert_name(k);
    Var<S> xs = ad::add_rowvec(ad::mul_rowvec(x, t.param(ps, n + ".alpha")), t.param(ps, n + ".beta"));
    Var<S> h = layers::linear(t, ps, n + ".in", xs);
    for (int b = 0; b < cfg.stub_blocks; ++b) {
        const std::string bn = n + ".block" + std::to_string(b);
        h = ad::add(h, layers::ffn(t, ps, bn + ".ffn", layers::layer_norm(t, ps, bn + ".ln", h)));
    }
    return {layers::linear(t, ps, n + ".out_aspect", h), layers::linear(t, ps, n + ".out_severity", h), h};
}

// Autoregressive decode over the token head with tied feedback: after each
// token the state moves by that token's head column.
template <typename S>
std::vector<int> reasoning_trace(const RowVector<S>& h_final, const Matrix<S>& token_head, const SamplerConfig& cfg,
                                 int max_tokens, Rng& rng)
{
    std::vector<int> ids;
    RowVector<double> h = h_final.template cast<double>();
    const Matrix<double> head = token_head.template cast<double>();
    for (int i = 0; i < max_tokens; ++i) {
        RowVector<double> logits = h * head;
        const int id = sample_token(std::span<const double>(logits.data(), static_cast<std::size_t>(logits.size())), cfg, rng);
        ids.push_back(id);
        h += head.col(id).transpose();
    }
    return ids;
}

inline std::string render_trace(const std::vector<int>& ids)
{
    std::string s(kCotPromptTemplate);
    for (int id : ids)
        s += " r" + std::to_string(id);
    return s;
}

struct ExpertOutput {
    Vector<double> aspect;
    Vector<double> severity;
    std::vector<int> trace;
};

// Single-sample convenience wrapper that also decodes a reasoning trace.
template <typename S>
ExpertOutput expert_forward(ParamStore<S>& ps, const ExpertConfig& cfg, const RowVector<S>& x, int k,
                            const SamplerConfig& sampler, Rng& rng)
{
    Tape<S> t;
    auto out = expert_forward(t, ps, cfg, k, t.constant(Matrix<S>(x)));
    ExpertOutput o;
    o.aspect = out.aspect.value().row(0).transpose().template cast<double>();
    o.severity = out.severity.value().row(0).transpose().template cast<double>();
    o.trace = reasoning_trace<S>(out.hidden.value().row(0), ps.at(expert_name(k) + ".token_head").value, sampler,
                                 cfg.trace_tokens, rng);
    return o;
}

template <typename S>
struct MoeOutput {
    Var<S> aspect;       // l_p for the aspect task, B x C_a
    Var<S> severity;     // l_p for the severity task, B x C_s
    Var<S> gates;        // B x K
    Var<S> entropy;      // B x 1
    Var<S> load_balance; // 1 x 1
    RoutingDecision decision;
    std::vector<ExpertVars<S>> experts;
};

// Hard top-1 routing whose output is scaled by the selected gate:
// l_p = g_{k*} * l^(k*). With route_top_k = K' > 1 the K' highest-gate
// experts are summed gate-weighted instead.
template <typename S>
MoeOutput<S> moe_forward(Tape<S>& t, ParamStore<S>& ps, const ExpertConfig& cfg, Var<S> x, Rng* rng, Mode mode)
{
    const Eigen::Index batch = x.rows();
    Var<S> logits = layers::linear(t, ps, "router", x);
    if (mode == Mode::Train && cfg.router_noise > 0.0) {
        if (!rng)
            throw std::invalid_argument("moe_forward: train mode needs an rng");
        logits = ad::add_const(logits, Matrix<S>(router_noise(*rng, batch, cfg.experts, cfg.router_noise).template cast<S>()));
    }
    MoeOutput<S> out;
    out.gates = ad::softmax_rows(logits);
    out.entropy = ad::scale(ad::row_sum(ad::cmul(out.gates, ad::log_softmax_rows(logits))), S(-1));
    Var<S> mean = ad::weighted_mean_rows(out.gates, Vector<S>(Vector<S>::Ones(batch)));
    Var<S> dev = ad::shift(mean, S(-1) / static_cast<S>(cfg.experts));
    out.load_balance = ad::sum_all(ad::cmul(dev, dev));
    out.decision = decide(out.gates.value().template cast<double>());

    const int top = std::clamp(cfg.route_top_k, 1, cfg.experts);
    std::vector<std::vector<char>> chosen(static_cast<std::size_t>(batch), std::vector<char>(cfg.experts, 0));
    for (Eigen::Index b = 0; b < batch; ++b) {
        std::vector<int> order(cfg.experts);
        std::iota(order.begin(), order.end(), 0);
        const auto& g = out.decision.gates;
        std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return g(b, i) > g(b, j); });
        for (int i = 0; i < top; ++i)
            chosen[b][order[i]] = 1;
    }

    std::vector<Var<S>> aspect_terms, severity_terms;
    for (int k = 0; k < cfg.experts; ++k) {
        ExpertVars<S> e = expert_forward(t, ps, cfg, k, x);
        out.experts.push_back(e);
        Matrix<S> sel(batch, 1);
        for (Eigen::Index b = 0; b < batch; ++b)
            sel(b, 0) = chosen[b][k] ? S(1) : S(0);
        if (sel.sum() == S(0))
            continue;
        Var<S> w = ad::cmul_const(ad::slice_cols(out.gates, k, 1), sel);
        aspect_terms.push_back(ad::mul_rows(e.aspect, w));
        severity_terms.push_back(ad::mul_rows(e.severity, w));
    }
    out.aspect = aspect_terms[0];
    out.severity = severity_terms[0];
    for (std::size_t i = 1; i < aspect_terms.size(); ++i) {
        out.aspect = ad::add(out.aspect, aspect_terms[i]);
        out.severity = ad::add(out.severity, severity_terms[i]);
    }
    return out;
}

} // namespace valor::experts
