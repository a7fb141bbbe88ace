#pragma once

#include "valor/encode.hpp"
#include "valor/experts.hpp"
#include "valor/fuse.hpp"
#include "valor/metafuse.hpp"
#include "valor/objective.hpp"
#include "valor/validate.hpp"
#include "valor/vocabulary.hpp"

#include <array>
#include <vector>

namespace valor {

using ad::Var;

struct ModelConfig {
    encode::EncoderConfig encoder;
    fuse::FusionConfig fusion;
    fuse::SasConfig sas;
    experts::ExpertConfig experts;
    validate::ValidationConfig validation;
    metafuse::MetaConfig meta;

    // Throws std::invalid_argument when widths disagree across modules.
    void validate() const;
};

// Registration order is the checkpoint order.
template <typename S>
ParamStore<S> init_params(const ModelConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    Rng rng = substream(seed, "init");
    ParamStore<S> ps;
    encode::register_text_encoder(ps, cfg.encoder, rng);
    encode::register_image_encoder(ps, cfg.encoder, rng);
    fuse::register_fusion(ps, cfg.fusion, rng);
    fuse::register_sas(ps, cfg.sas, rng);
    experts::register_experts(ps, cfg.experts, rng);
    validate::register_validation(ps, cfg.validation, rng);
    metafuse::register_meta(ps, cfg.meta, Task::Aspect, rng);
    metafuse::register_meta(ps, cfg.meta, Task::Severity, rng);
    return ps;
}

// One training/eval row: a sample with the label pairs it is scored on.
// Per-pair mode has exactly one pair per item; multi-label mode keeps all.
struct Item {
    const datagen::ConversationSample* sample = nullptr;
    std::vector<datagen::LabelPair> pairs;
};

std::vector<Item> make_items(const datagen::Corpus& corpus, objective::LossMode mode);

struct Batch {
    std::vector<encode::TokenSequence> tokens;
    std::vector<datagen::Image> images;
    std::vector<objective::Targets> targets; // soft targets per task
    std::array<std::vector<int>, 2> gold;    // first pair per item
};

// Smoothed (per-pair) or multi-hot (multi-label) targets; missing images
// become blank.
Batch make_batch(const datagen::Corpus& corpus, const std::vector<Item>& items, const encode::Vocabulary& vocab,
                 const ModelConfig& cfg, objective::LossMode mode, double label_smoothing);

template <typename S>
struct Forward {
    Var<S> x;                       // fused embedding, B x d
    Var<S> s;                       // SAS, B x 1
    experts::MoeOutput<S> moe;
    validate::ValidationVars<S> val;
    std::array<Var<S>, 2> r_avg, dominance, u_avg; // per task, 1 x 1
    std::array<Var<S>, 2> fused;   // l_f
    std::array<Var<S>, 2> logits;  // l_final
};

struct ForwardRngs {
    Rng* router = nullptr;
    Rng* dropout = nullptr;
};

template <typename S>
Forward<S> model_forward(ad::Tape<S>& t, ParamStore<S>& ps, const ModelConfig& cfg, const Batch& batch,
                         ForwardRngs rngs, Mode mode)
{
    ps.check_finite();
    const int b = static_cast<int>(batch.tokens.size());
    if (b == 0)
        throw std::invalid_argument("model_forward: empty batch");
    std::vector<Var<S>> xs, hts, his;
    for (int i = 0; i < b; ++i) {
        auto te = encode::encode_text(t, ps, cfg.encoder, batch.tokens[i], "text", false);
        auto ie = encode::encode_image(t, ps, cfg.encoder, encode::patchify<S>(batch.images[i], cfg.encoder.patch),
                                       "image", false);
        xs.push_back(fuse::cross_modal_attention(t, ps, cfg.fusion, te.tokens, ie.patches, te.mask));
        hts.push_back(te.cls);
        his.push_back(ie.cls);
    }
    Forward<S> f;
    f.x = ad::concat_rows(xs);
    f.s = fuse::semantic_alignment_score(t, ps, ad::concat_rows(hts), ad::concat_rows(his));
    f.moe = experts::moe_forward(t, ps, cfg.experts, f.x, rngs.router, mode);
    f.val = validate::validation_forward(t, ps, cfg.validation, f.x);

    for (int task = 0; task < 2; ++task) {
        std::vector<Var<S>> per_expert;
        for (const auto& e : f.val.experts)
            per_expert.push_back(e[task]);
        f.r_avg[task] = validate::mean_alignment(per_expert);
        Var<S> lp = task == 0 ? f.moe.aspect : f.moe.severity;
        f.dominance[task] = validate::dominance(lp, f.val.mixture[task]);
        std::vector<Var<S>> hs;
        for (const auto& e : per_expert)
            hs.push_back(validate::complementarity(e));
        f.u_avg[task] = ad::mean_all(ad::concat_rows(hs));
        Var<S> feats = metafuse::build_meta_features(lp, f.val.mixture[task], f.s, f.moe.entropy, f.r_avg[task],
                                                     f.dominance[task], f.u_avg[task]);
        f.fused[task] = metafuse::meta_fuse(t, ps, cfg.meta, static_cast<Task>(task), feats, rngs.dropout, mode);
        f.logits[task] = metafuse::adjust_with_sas(f.fused[task], f.s, S(cfg.meta.lambda_s));
    }
    return f;
}

template <typename S>
struct BatchLoss {
    Var<S> total;
    objective::LossBreakdown breakdown;
};

template <typename S>
Matrix<S> targets_matrix(const Batch& batch, int task)
{
    const int c = class_count(static_cast<Task>(task));
    Matrix<S> m(static_cast<Eigen::Index>(batch.targets.size()), c);
    for (std::size_t i = 0; i < batch.targets.size(); ++i)
        for (int k = 0; k < c; ++k)
            m(static_cast<Eigen::Index>(i), k) = S(batch.targets[i][task][static_cast<std::size_t>(k)]);
    return m;
}

// Assembles the eight loss parts on the tape. L_val scores the validation
// mixture against the same targets; regularizers read the aspect metrics.
template <typename S>
BatchLoss<S> batch_loss(const Forward<S>& f, const Batch& batch, const objective::LossConfig& lc)
{
    using namespace objective;
    auto task_loss = [&](Var<S> logits, int task) {
        const Matrix<S> y = targets_matrix<S>(batch, task);
        return lc.mode == LossMode::PerPairCE ? soft_cross_entropy(logits, y) : binary_cross_entropy(logits, y);
    };
    Var<S> la = task_loss(f.logits[0], 0);
    Var<S> ls = task_loss(f.logits[1], 1);
    Var<S> lval = ad::add(task_loss(f.val.mixture[0], 0), task_loss(f.val.mixture[1], 1));
    Var<S> lsas = sas_margin_loss(f.s, S(lc.sas_margin));
    Var<S> lr = ad::relu(ad::shift(f.r_avg[0], S(-lc.tau_r)));
    Var<S> ld = ad::relu(ad::shift(ad::scale(f.dominance[0], S(-1)), S(lc.tau_s)));
    Var<S> lu = ad::relu(ad::shift(ad::scale(f.u_avg[0], S(-1)), S(lc.tau_u)));

    LossParts parts{la.item(), ls.item(), f.moe.load_balance.item(), lval.item(), lsas.item(),
                    lr.item(), ld.item(), lu.item()};
    BatchLoss<S> out;
    out.breakdown = total_loss(parts, lc); // throws on a non-finite part
    const auto& w = out.breakdown.weights;
    out.total = ad::add(ad::add(la, ls), ad::add(ad::scale(f.moe.load_balance, S(w.load_balance)),
                                                 ad::scale(lval, S(w.validation))));
    out.total = ad::add(out.total, ad::add(ad::scale(lsas, S(w.sas)), ad::scale(lr, S(w.alignment))));
    out.total = ad::add(out.total, ad::add(ad::scale(ld, S(w.dominance)), ad::scale(lu, S(w.complementarity))));
    return out;
}

} // namespace valor
