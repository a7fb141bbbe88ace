#include "valor/gradcheck.hpp"

#include "valor/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace valor::gradcheck {

using T = ad::Tape<double>;
using V = ad::Var<double>;
using Store = ParamStore<double>;

namespace {

struct Op {
    Store ps;
    std::function<V(T&, Store&)> forward;
};

Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0)
{
    Matrix<double> m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i)
            m(i, j) = normal(rng, 0.0, sd);
    return m;
}

// Moves every parameter off its init pattern (unit LN gains, zero biases,
// zero gate weights) so the check does not run at a special point.
void jitter(Store& ps, Rng& rng)
{
    for (auto& p : ps.all())
        p.value += random_matrix(p.value.rows(), p.value.cols(), rng, 0.1);
}

encode::EncoderConfig toy_encoder()
{
    encode::EncoderConfig e;
    e.d = 8;
    e.layers = 1;
    e.heads = 2;
    e.max_tokens = 6;
    e.vocab = 40;
    e.patch = 4;
    e.image_side = 8;
    e.ffn_mult = 2;
    return e;
}

ModelConfig toy_model()
{
    ModelConfig m;
    m.encoder = toy_encoder();
    m.encoder.max_tokens = 8;
    m.encoder.vocab = 1000;
    m.fusion = {8, 2, 1, 2};
    m.sas = {8, 6};
    m.experts.d = 8;
    m.experts.d_t = 12;
    m.experts.experts = 3;
    m.experts.stub_blocks = 1;
    m.experts.reasoning_vocab = 10;
    m.validation = {8, 12, 2, 2, 2, 2, 6, 6};
    m.meta.hidden1 = 10;
    m.meta.hidden2 = 6;
    return m;
}

Op make_op(const std::string& name, std::uint64_t seed)
{
    Rng rng = substream(seed, "gradcheck");
    Op op;
    Store& ps = op.ps;

    if (name == "quadratic") {
        ps.add("input.x", random_matrix(3, 4, rng));
        Matrix<double> a = random_matrix(4, 4, rng);
        a = (a + a.transpose()).eval();
        const Matrix<double> b = random_matrix(3, 4, rng);
        op.forward = [a, b](T& t, Store& s) {
            V x = t.param(s, "input.x");
            V quad = ad::scale(ad::cmul(ad::matmul(x, t.constant(a)), x), 0.5);
            return ad::add(quad, ad::cmul_const(x, b));
        };
        return op;
    }
    if (name == "text_encoder") {
        const auto cfg = toy_encoder();
        encode::register_text_encoder(ps, cfg, rng);
        encode::TokenSequence seq;
        seq.ids = {encode::Vocabulary::kCls, 7, 12, 33, 0, 0};
        seq.mask = {1, 1, 1, 1, 0, 0};
        op.forward = [cfg, seq](T& t, Store& s) {
            auto e = encode::encode_text(t, s, cfg, seq);
            return e.tokens;
        };
    } else if (name == "image_encoder") {
        const auto cfg = toy_encoder();
        encode::register_image_encoder(ps, cfg, rng);
        const Matrix<double> patches = random_matrix(cfg.patch_count(), cfg.patch_dim(), rng, 0.5);
        op.forward = [cfg, patches](T& t, Store& s) {
            auto e = encode::encode_image(t, s, cfg, patches);
            return ad::concat_rows<double>({e.cls, e.patches});
        };
    } else if (name == "fusion") {
        const fuse::FusionConfig cfg{8, 2, 1, 2};
        fuse::register_fusion(ps, cfg, rng);
        ps.add("input.text", random_matrix(5, 8, rng));
        ps.add("input.image", random_matrix(4, 8, rng));
        op.forward = [cfg](T& t, Store& s) {
            return fuse::cross_modal_attention(t, s, cfg, t.param(s, "input.text"), t.param(s, "input.image"),
                                               {1, 1, 1, 0, 1});
        };
    } else if (name == "sas") {
        const fuse::SasConfig cfg{8, 6};
        fuse::register_sas(ps, cfg, rng);
        ps.add("input.h_text", random_matrix(3, 8, rng));
        ps.add("input.h_image", random_matrix(3, 8, rng));
        op.forward = [](T& t, Store& s) {
            return fuse::semantic_alignment_score(t, s, t.param(s, "input.h_text"), t.param(s, "input.h_image"));
        };
    } else if (name == "expert" || name == "moe") {
        const auto cfg = toy_model().experts;
        experts::register_experts(ps, cfg, rng);
        ps.add("input.x", random_matrix(4, 8, rng));
        if (name == "expert") {
            op.forward = [cfg](T& t, Store& s) {
                auto e = experts::expert_forward(t, s, cfg, 1, t.param(s, "input.x"));
                return ad::concat_cols<double>({e.aspect, e.severity});
            };
        } else {
            op.forward = [cfg](T& t, Store& s) {
                auto m = experts::moe_forward(t, s, cfg, t.param(s, "input.x"), nullptr, Mode::Eval);
                return ad::concat_cols<double>({m.aspect, m.severity, m.gates, m.entropy});
            };
        }
    } else if (name == "validation") {
        const auto cfg = toy_model().validation;
        validate::register_validation(ps, cfg, rng);
        ps.add("input.x", random_matrix(4, 8, rng));
        op.forward = [cfg](T& t, Store& s) {
            auto v = validate::validation_forward(t, s, cfg, t.param(s, "input.x"));
            return ad::concat_cols<double>({v.mixture[0], v.mixture[1], v.gate});
        };
    } else if (name == "metafuse") {
        const auto cfg = toy_model().meta;
        metafuse::register_meta(ps, cfg, Task::Aspect, rng);
        metafuse::register_meta(ps, cfg, Task::Severity, rng);
        ps.add("input.aspect", random_matrix(4, metafuse::feature_dim(LabelSchema::kAspects), rng));
        ps.add("input.severity", random_matrix(4, metafuse::feature_dim(LabelSchema::kSeverities), rng));
        ps.add("input.s", random_matrix(4, 1, rng, 0.5));
        op.forward = [cfg](T& t, Store& s) {
            V sas = t.param(s, "input.s");
            V a = metafuse::meta_fuse(t, s, cfg, Task::Aspect, t.param(s, "input.aspect"), nullptr, Mode::Eval);
            V b = metafuse::meta_fuse(t, s, cfg, Task::Severity, t.param(s, "input.severity"), nullptr, Mode::Eval);
            return ad::concat_cols<double>({metafuse::adjust_with_sas(a, sas, cfg.lambda_s),
                                            metafuse::adjust_with_sas(b, sas, cfg.lambda_s)});
        };
    } else if (name == "model") {
        const auto cfg = toy_model();
        ps = init_params<double>(cfg, seed);
        auto spec = datagen::GenSpec::balanced(4, seed);
        spec.image_side = cfg.encoder.image_side;
        spec.vocab_size = cfg.encoder.vocab;
        auto corpus = std::make_shared<datagen::Corpus>(datagen::generate_corpus(spec));
        const objective::LossConfig lc;
        const encode::Vocabulary vocab(cfg.encoder.vocab);
        auto batch = std::make_shared<Batch>(make_batch(
            *corpus, make_items(*corpus, lc.mode), vocab, cfg, lc.mode, lc.label_smoothing));
        op.forward = [cfg, corpus, batch, lc, seed](T& t, Store& s) {
            // Fresh generators per evaluation so every perturbed pass sees
            // the same router noise and dropout masks.
            Rng router = substream(seed, "router-noise");
            Rng drop = substream(seed, "dropout");
            auto f = model_forward(t, s, cfg, *batch, {&router, &drop}, Mode::Train);
            return batch_loss(f, *batch, lc).total;
        };
    } else {
        throw std::invalid_argument("gradcheck: unknown op '" + name + "'");
    }
    jitter(ps, rng);
    return op;
}

double objective_value(Op& op, const Matrix<double>& proj)
{
    T t;
    V out = op.forward(t, op.ps);
    return out.value().cwiseProduct(proj).sum();
}

} // namespace

std::vector<std::string> op_names()
{
    return {"quadratic", "text_encoder", "image_encoder", "fusion", "sas",
            "expert",    "moe",          "validation",    "metafuse", "model"};
}

double relative_error(double analytic, double numeric)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelFloor});
    return std::abs(analytic - numeric) / denom;
}

Report grad_check(const std::string& op_name, int probes, double tol, std::uint64_t seed, double h)
{
    if (probes < 1)
        throw std::invalid_argument("gradcheck: probe count must be positive");
    Op op = make_op(op_name, seed);
    Rng rng = substream(seed, "gradcheck-probes");

    Matrix<double> proj;
    {
        T t;
        V out = op.forward(t, op.ps);
        proj = random_matrix(out.rows(), out.cols(), rng);
        V loss = ad::sum_all(ad::cmul_const(out, proj));
        op.ps.zero_grad();
        t.backward(loss);
    }

    // Tensor first, then entry: a uniform draw over entries would spend
    // nearly every probe on the (mostly unused) embedding tables.
    std::vector<Param<double>*> tensors;
    for (auto& p : op.ps.all())
        if (p.trainable && p.value.size() > 0)
            tensors.push_back(&p);
    if (tensors.empty())
        throw std::invalid_argument("gradcheck: op has no trainable entries");

    Report r;
    r.op = op_name;
    r.h = h;
    r.tol = tol;
    for (int i = 0; i < probes; ++i) {
        Param<double>* target = tensors[std::uniform_int_distribution<std::size_t>(0, tensors.size() - 1)(rng)];
        const Eigen::Index flat = std::uniform_int_distribution<Eigen::Index>(0, target->value.size() - 1)(rng);
        double& x = target->value.data()[flat];
        const double saved = x;
        x = saved + h;
        const double up = objective_value(op, proj);
        x = saved - h;
        const double down = objective_value(op, proj);
        x = saved;

        Probe pr;
        pr.param = target->name;
        pr.row = static_cast<long>(flat % target->value.rows());
        pr.col = static_cast<long>(flat / target->value.rows());
        pr.analytic = target->grad.data()[flat];
        pr.numeric = (up - down) / (2.0 * h);
        pr.rel_error = relative_error(pr.analytic, pr.numeric);
        r.max_rel_error = std::max(r.max_rel_error, pr.rel_error);
        r.probes.push_back(pr);
    }
    r.passed = r.max_rel_error < tol;
    return r;
}

nlohmann::json to_json(const Report& r)
{
    nlohmann::json probes = nlohmann::json::array();
    for (const auto& p : r.probes)
        probes.push_back({{"param", p.param},
                          {"row", p.row},
                          {"col", p.col},
                          {"analytic", p.analytic},
                          {"numeric", p.numeric},
                          {"rel_error", p.rel_error}});
    return {{"op", r.op},        {"h", r.h},           {"tol", r.tol}, {"max_rel_error", r.max_rel_error},
            {"passed", r.passed}, {"probe_count", r.probes.size()}, {"probes", probes}};
}

} // namespace valor::gradcheck
