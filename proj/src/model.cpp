#include "valor/model.hpp"

#include <stdexcept>

namespace valor {

void ModelConfig::validate() const
{
    encoder.validate();
    const int d = encoder.d;
    if (fusion.d != d || sas.d != d || experts.d != d || validation.d != d)
        throw std::invalid_argument("model config: embedding width d must agree across modules");
    if (fusion.d % fusion.heads != 0)
        throw std::invalid_argument("model config: fusion d not divisible by heads");
    if (experts.experts < 1 || validation.experts < 2)
        throw std::invalid_argument("model config: need K >= 1 experts and L_v >= 2 validation experts");
    if (meta.dropout < 0.0 || meta.dropout >= 1.0)
        throw std::invalid_argument("model config: dropout must be in [0, 1)");
}

std::vector<Item> make_items(const datagen::Corpus& corpus, objective::LossMode mode)
{
    std::vector<Item> items;
    for (const auto& s : corpus.samples) {
        if (mode == objective::LossMode::MultiLabelBCE) {
            items.push_back({&s, s.labels});
        } else {
            for (const auto& p : s.labels)
                items.push_back({&s, {p}});
        }
    }
    return items;
}

Batch make_batch(const datagen::Corpus& corpus, const std::vector<Item>& items, const encode::Vocabulary& vocab,
                 const ModelConfig& cfg, objective::LossMode mode, double label_smoothing)
{
    Batch b;
    for (const auto& it : items) {
        if (!it.sample || it.pairs.empty())
            throw std::invalid_argument("make_batch: item without sample or labels");
        b.tokens.push_back(encode::tokenize(it.sample->joined_text(), vocab, cfg.encoder.max_tokens));
        const datagen::Image* img = corpus.image_for(*it.sample);
        b.images.push_back(img ? *img : encode::blank_image(cfg.encoder.image_side));
        objective::Targets t;
        if (mode == objective::LossMode::PerPairCE) {
            t[0] = objective::smoothed_target(it.pairs[0].aspect, LabelSchema::kAspects, label_smoothing);
            t[1] = objective::smoothed_target(it.pairs[0].severity, LabelSchema::kSeverities, label_smoothing);
        } else {
            t[0].assign(LabelSchema::kAspects, 0.0);
            t[1].assign(LabelSchema::kSeverities, 0.0);
            for (const auto& p : it.pairs) {
                t[0][static_cast<std::size_t>(p.aspect)] = 1.0;
                t[1][static_cast<std::size_t>(p.severity)] = 1.0;
            }
        }
        b.targets.push_back(std::move(t));
        b.gold[0].push_back(it.pairs[0].aspect);
        b.gold[1].push_back(it.pairs[0].severity);
    }
    return b;
}

} // namespace valor
