#include "support.hpp"

#include "valor/train.hpp"

#include <doctest.h>

#include <limits>
#include <numeric>

using namespace valor;

namespace {

TrainConfig quick()
{
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 8;
    cfg.schedule.warmup = 3;
    cfg.schedule.t0 = 2;
    return cfg;
}

const datagen::Corpus& small_corpus()
{
    static const auto c = datagen::generate_corpus(datagen::GenSpec::balanced(12, 42));
    return c;
}

const datagen::Corpus& val_corpus()
{
    static const auto c = datagen::generate_corpus(datagen::GenSpec::balanced(6, 43));
    return c;
}

double max_diff(const ParamStore<double>& a, const ParamStore<double>& b)
{
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        d = std::max(d, (a.all()[i].value - b.all()[i].value).cwiseAbs().maxCoeff());
    return d;
}

} // namespace

TEST_CASE("steps per epoch and the default restart period")
{
    CHECK(steps_per_epoch(64, 16) == 4);
    CHECK(steps_per_epoch(65, 16) == 5);
    CHECK(steps_per_epoch(1, 16) == 1);
    CHECK_THROWS_AS(steps_per_epoch(4, 0), std::invalid_argument);
    TrainConfig cfg;
    cfg.schedule.t0 = 0;
    CHECK(resolved_schedule(cfg, 64).t0 == 40);
    cfg.schedule.t0 = 7;
    CHECK(resolved_schedule(cfg, 64).t0 == 7);
}

TEST_CASE("history learning rates follow the closed-form schedule")
{
    const auto cfg = quick();
    const auto res = train(small_corpus(), val_corpus(), cfg);
    REQUIRE(res.history.size() == 2u);
    const auto sched = resolved_schedule(cfg, make_items(small_corpus(), cfg.loss.mode).size());
    long step = 0;
    for (const auto& row : res.history) {
        for (const auto& lr : row.at("lr")) {
            CHECK(lr.get<double>() == objective::lr_schedule(step, sched));
            ++step;
        }
        CHECK(row.at("steps").get<long>() == step);
        CHECK(row.at("train").at("loss").contains("L_total"));
        CHECK(row.at("val").at("aspect").contains("accuracy"));
        CHECK(row.at("train").at("validation").at("aspect").contains("R_avg"));
    }
    CHECK(res.steps == step);
}

TEST_CASE("two runs with the same seed give identical history and parameters")
{
    const auto cfg = quick();
    const auto a = train(small_corpus(), val_corpus(), cfg);
    const auto b = train(small_corpus(), val_corpus(), cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i)
        CHECK(a.history[i].dump() == b.history[i].dump());
    CHECK(max_diff(a.last, b.last) == 0.0);
    CHECK(max_diff(a.best, b.best) == 0.0);

    auto other = cfg;
    other.seed = 7;
    const auto c = train(small_corpus(), val_corpus(), other);
    CHECK(max_diff(a.last, c.last) > 0.0);
}

TEST_CASE("all auxiliary weights zero and no augmentation reduce to plain two-head training")
{
    auto cfg = quick();
    cfg.augment.enabled = false;
    auto& l = cfg.loss;
    l.lambda_lb = l.lambda_val = l.lambda_sas = l.lambda_r = l.lambda_s = l.lambda_u = 0.0;
    const auto res = train(small_corpus(), {}, cfg);

    // Minimal reference loop: same init, shuffle and forward, loss = L_aspect + L_severity.
    const auto& corpus = small_corpus();
    const auto items = make_items(corpus, cfg.loss.mode);
    const encode::Vocabulary vocab(cfg.model.encoder.vocab);
    const auto sched = resolved_schedule(cfg, items.size());
    Rng shuffle = substream(cfg.seed, "shuffle"), router = substream(cfg.seed, "router-noise"),
        dropout = substream(cfg.seed, "dropout");
    auto ps = init_params<double>(cfg.model, cfg.seed);
    objective::AdamW<double> opt(cfg.adamw);
    long step = 0;
    std::vector<std::size_t> order(items.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(shuffle)]);
        for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(cfg.batch)) {
            std::vector<Item> chunk;
            for (std::size_t i = start; i < std::min(items.size(), start + static_cast<std::size_t>(cfg.batch)); ++i)
                chunk.push_back(items[order[i]]);
            const Batch batch = make_batch(corpus, chunk, vocab, cfg.model, cfg.loss.mode, cfg.loss.label_smoothing);
            ad::Tape<double> t;
            const auto f = model_forward(t, ps, cfg.model, batch, {&router, &dropout}, Mode::Train);
            auto loss = ad::add(objective::soft_cross_entropy(f.logits[0], targets_matrix<double>(batch, 0)),
                                objective::soft_cross_entropy(f.logits[1], targets_matrix<double>(batch, 1)));
            ps.zero_grad();
            t.backward(loss);
            objective::clip_grad_norm(ps, cfg.grad_clip);
            opt.step(ps, objective::lr_schedule(step++, sched));
        }
    }
    CHECK(res.steps == step);
    CHECK(max_diff(res.last, ps) < 1e-12);
}

TEST_CASE("a non-finite loss aborts training with the component name")
{
    auto cfg = quick();
    cfg.loss.label_smoothing = std::numeric_limits<double>::quiet_NaN();
    try {
        train(small_corpus(), val_corpus(), cfg);
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
        CHECK(std::string(e.what()).find("aspect") != std::string::npos);
    }
}

TEST_CASE("early stopping keeps the best epoch")
{
    auto cfg = quick();
    cfg.epochs = 10;
    cfg.patience = 2;
    cfg.schedule.lr_max = 0.0; // parameters never move, so validation loss never improves after epoch 1
    cfg.schedule.lr_min = 0.0;
    const auto res = train(small_corpus(), val_corpus(), cfg);
    CHECK(res.early_stopped);
    CHECK(res.history.size() == 3u);
    CHECK(res.best_epoch == 1);
    CHECK(res.history[0].at("improved").get<bool>());
    CHECK_FALSE(res.history[1].at("improved").get<bool>());
    CHECK(max_diff(res.best, res.last) == 0.0);
}

TEST_CASE("evaluate is deterministic and rejects an empty split")
{
    const auto cfg = quick();
    auto ps = init_params<double>(cfg.model, 42);
    const auto a = evaluate(ps, cfg, val_corpus());
    const auto b = evaluate(ps, cfg, val_corpus());
    CHECK(to_json(a).dump() == to_json(b).dump());
    CHECK(a.tasks[0].count == static_cast<int>(make_items(val_corpus(), cfg.loss.mode).size()));
    double gate_sum = 0;
    for (double g : a.routing.mean_gates)
        gate_sum += g;
    CHECK(gate_sum == doctest::Approx(1.0));
    CHECK_THROWS_AS(evaluate(ps, cfg, datagen::Corpus{}), std::invalid_argument);

    auto ml = cfg;
    ml.loss.mode = objective::LossMode::MultiLabelBCE;
    const auto m = evaluate(ps, ml, val_corpus());
    REQUIRE(m.multilabel.has_value());
    CHECK(m.tasks[0].count == static_cast<int>(val_corpus().samples.size()));
}
