#include "valor/train.hpp"

#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace valor {

long steps_per_epoch(std::size_t items, int batch)
{
    if (batch < 1)
        throw std::invalid_argument("batch size must be >= 1");
    return static_cast<long>((items + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
}

objective::ScheduleConfig resolved_schedule(const TrainConfig& cfg, std::size_t train_items)
{
    objective::ScheduleConfig s = cfg.schedule;
    if (s.t0 <= 0)
        s.t0 = std::max(1L, 10 * steps_per_epoch(train_items, cfg.batch));
    return s;
}

namespace {

struct Accumulator {
    double rows = 0;
    objective::LossParts parts;
    double total = 0;
    std::array<double, 2> r{}, dom{}, u{};
    std::array<std::vector<double>, 2> comp;
    std::vector<double> gate_sum, picks;
    double entropy_sum = 0;

    void add(const objective::LossBreakdown& b, const Forward<double>& f, double n)
    {
        rows += n;
        auto& p = parts;
        const auto& q = b.parts;
        p.aspect += n * q.aspect;
        p.severity += n * q.severity;
        p.load_balance += n * q.load_balance;
        p.validation += n * q.validation;
        p.sas += n * q.sas;
        p.alignment += n * q.alignment;
        p.dominance += n * q.dominance;
        p.complementarity += n * q.complementarity;
        total += n * b.total;
        for (int t = 0; t < 2; ++t) {
            r[t] += n * f.r_avg[t].item();
            dom[t] += n * f.dominance[t].item();
            u[t] += n * f.u_avg[t].item();
            comp[t].resize(f.val.experts.size(), 0.0);
            for (std::size_t l = 0; l < f.val.experts.size(); ++l)
                comp[t][l] += n * validate::complementarity(f.val.experts[l][t]).item();
        }
        const auto& g = f.moe.decision;
        gate_sum.resize(static_cast<std::size_t>(g.gates.cols()), 0.0);
        picks.resize(gate_sum.size(), 0.0);
        for (Eigen::Index b = 0; b < g.gates.rows(); ++b) {
            for (Eigen::Index e = 0; e < g.gates.cols(); ++e)
                gate_sum[static_cast<std::size_t>(e)] += g.gates(b, e);
            picks[static_cast<std::size_t>(g.selected[static_cast<std::size_t>(b)])] += 1;
            entropy_sum += g.entropy[static_cast<std::size_t>(b)];
        }
    }

    RoutingStats routing() const
    {
        RoutingStats r;
        const double k = static_cast<double>(gate_sum.size());
        for (std::size_t e = 0; e < gate_sum.size(); ++e) {
            const double m = gate_sum[e] / rows;
            r.mean_gates.push_back(m);
            r.selection_fraction.push_back(picks[e] / rows);
            r.load_balance += (m - 1.0 / k) * (m - 1.0 / k);
        }
        r.mean_entropy = entropy_sum / rows;
        return r;
    }

    objective::LossBreakdown breakdown(const objective::LossConfig& lc) const
    {
        objective::LossParts p = parts;
        for (double* v : {&p.aspect, &p.severity, &p.load_balance, &p.validation, &p.sas, &p.alignment, &p.dominance,
                          &p.complementarity})
            *v /= rows;
        auto b = objective::total_loss(p, lc);
        b.total = total / rows;
        return b;
    }

    validate::ValidationReport report() const
    {
        validate::ValidationReport rep;
        for (int t = 0; t < 2; ++t) {
            rep.task[t].r_avg = r[t] / rows;
            rep.task[t].dominance = dom[t] / rows;
            rep.task[t].u_avg = u[t] / rows;
            for (double c : comp[t])
                rep.task[t].complementarity.push_back(c / rows);
        }
        return rep;
    }
};

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<std::size_t>& order, std::size_t from, std::size_t n)
{
    std::vector<T> out;
    for (std::size_t i = from; i < from + n && i < order.size(); ++i)
        out.push_back(v[order[i]]);
    return out;
}

} // namespace

EvalResult evaluate(ParamStore<double>& ps, const TrainConfig& cfg, const datagen::Corpus& corpus)
{
    const auto items = make_items(corpus, cfg.loss.mode);
    if (items.empty())
        throw std::invalid_argument("evaluate: empty split");
    const encode::Vocabulary vocab(cfg.model.encoder.vocab);
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    EvalResult res;
    Accumulator acc;
    std::array<std::vector<int>, 2> preds, golds;
    std::array<Eigen::MatrixXi, 2> ml_pred, ml_gold;
    const bool multilabel = cfg.loss.mode == objective::LossMode::MultiLabelBCE;
    for (int t = 0; t < 2; ++t) {
        ml_pred[t] = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(items.size()), class_count(static_cast<Task>(t)));
        ml_gold[t] = ml_pred[t];
    }

    for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(cfg.batch)) {
        const auto chunk = take(items, order, start, static_cast<std::size_t>(cfg.batch));
        const Batch batch = make_batch(corpus, chunk, vocab, cfg.model, cfg.loss.mode, cfg.loss.label_smoothing);
        ad::Tape<double> tape;
        const auto f = model_forward(tape, ps, cfg.model, batch, {}, Mode::Eval);
        const auto loss = batch_loss(f, batch, cfg.loss);
        acc.add(loss.breakdown, f, static_cast<double>(chunk.size()));
        for (int t = 0; t < 2; ++t) {
            const auto& lg = f.logits[t].value();
            for (Eigen::Index b = 0; b < lg.rows(); ++b) {
                Eigen::Index best = 0;
                lg.row(b).maxCoeff(&best); // first maximum wins
                preds[t].push_back(static_cast<int>(best));
                golds[t].push_back(batch.gold[t][static_cast<std::size_t>(b)]);
                if (multilabel) {
                    const auto row = static_cast<Eigen::Index>(start) + b;
                    for (Eigen::Index c = 0; c < lg.cols(); ++c)
                        ml_pred[t](row, c) = lg(b, c) > 0.0 ? 1 : 0; // sigmoid > 0.5
                    for (const auto& p : chunk[static_cast<std::size_t>(b)].pairs)
                        ml_gold[t](row, t == 0 ? p.aspect : p.severity) = 1;
                }
            }
        }
    }

    for (int t = 0; t < 2; ++t)
        res.tasks[t] = evalkit::task_report(preds[t], golds[t], class_count(static_cast<Task>(t)));
    if (multilabel)
        res.multilabel = std::array<evalkit::MultiLabelReport, 2>{evalkit::multilabel_report(ml_pred[0], ml_gold[0]),
                                                                  evalkit::multilabel_report(ml_pred[1], ml_gold[1])};
    res.loss = acc.breakdown(cfg.loss);
    res.validation = acc.report();
    res.routing = acc.routing();
    return res;
}

TrainResult train(const datagen::Corpus& train_set, const datagen::Corpus& val_set, const TrainConfig& cfg)
{
    cfg.model.validate();
    if (cfg.epochs < 1)
        throw std::invalid_argument("train: epochs must be >= 1");
    const auto items = make_items(train_set, cfg.loss.mode);
    if (items.empty())
        throw std::invalid_argument("train: empty training split");
    const bool have_val = !val_set.samples.empty();
    const encode::Vocabulary vocab(cfg.model.encoder.vocab);
    const auto schedule = resolved_schedule(cfg, items.size());

    Rng shuffle_rng = substream(cfg.seed, "shuffle");
    Rng augment_rng = substream(cfg.seed, "augment");
    Rng router_rng = substream(cfg.seed, "router-noise");
    Rng dropout_rng = substream(cfg.seed, "dropout");

    TrainResult res;
    ParamStore<double> ps = init_params<double>(cfg.model, cfg.seed);
    objective::AdamW<double> opt(cfg.adamw);
    double best_val = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;
    res.best = ps;

    std::vector<std::size_t> order(items.size());
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = std::uniform_int_distribution<std::size_t>(0, i - 1)(shuffle_rng);
            std::swap(order[i - 1], order[j]);
        }
        Accumulator acc;
        std::vector<double> lrs;
        for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const auto chunk = take(items, order, start, static_cast<std::size_t>(cfg.batch));
            Batch batch = make_batch(train_set, chunk, vocab, cfg.model, cfg.loss.mode, cfg.loss.label_smoothing);
            objective::augment(batch.images, batch.targets, cfg.augment, augment_rng);

            const double lr = objective::lr_schedule(res.steps, schedule);
            lrs.push_back(lr);
            ad::Tape<double> tape;
            const auto f = model_forward(tape, ps, cfg.model, batch, {&router_rng, &dropout_rng}, Mode::Train);
            const auto loss = batch_loss(f, batch, cfg.loss);
            ps.zero_grad();
            tape.backward(loss.total);
            for (const auto& p : ps.all())
                if (!p.grad.allFinite())
                    throw NonFiniteError("gradient " + p.name);
            objective::clip_grad_norm(ps, cfg.grad_clip);
            opt.step(ps, lr);
            ++res.steps;
            acc.add(loss.breakdown, f, static_cast<double>(chunk.size()));
        }

        nlohmann::json row;
        row["epoch"] = epoch;
        row["steps"] = res.steps;
        row["lr"] = lrs;
        row["train"] = {{"loss", to_json(acc.breakdown(cfg.loss))},
                        {"validation", to_json(acc.report())},
                        {"routing", to_json(acc.routing())}};
        const datagen::Corpus& monitor = have_val ? val_set : train_set;
        const EvalResult ev = evaluate(ps, cfg, monitor);
        row[have_val ? "val" : "train_eval"] = to_json(ev);
        const double val_loss = ev.loss.total;
        const bool improved = val_loss < best_val;
        row["improved"] = improved;
        res.history.push_back(row);
        if (improved) {
            best_val = val_loss;
            res.best = ps;
            res.best_epoch = epoch;
            bad_epochs = 0;
        } else if (++bad_epochs >= cfg.patience) {
            res.early_stopped = true;
            break;
        }
    }
    res.last = std::move(ps);
    return res;
}

void write_history(const std::filesystem::path& path, const std::vector<nlohmann::json>& history)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (const auto& row : history)
        os << row.dump() << '\n';
    if (!os)
        throw std::runtime_error("write failed: " + path.string());
}

nlohmann::json to_json(const objective::LossBreakdown& b)
{
    const auto& p = b.parts;
    const auto& w = b.weights;
    return {{"L_aspect", p.aspect},
            {"L_severity", p.severity},
            {"L_lb", p.load_balance},
            {"L_val", p.validation},
            {"L_sas", p.sas},
            {"L_alignment", p.alignment},
            {"L_dominance", p.dominance},
            {"L_complementarity", p.complementarity},
            {"L_total", b.total},
            {"weights",
             {{"lambda_lb", w.load_balance},
              {"lambda_val", w.validation},
              {"lambda_sas", w.sas},
              {"lambda_R", w.alignment},
              {"lambda_S", w.dominance},
              {"lambda_U", w.complementarity}}}};
}

nlohmann::json to_json(const validate::ValidationReport& r)
{
    nlohmann::json j;
    for (int t = 0; t < 2; ++t) {
        const auto& m = r.task[t];
        j[std::string(task_name(static_cast<Task>(t)))] = {
            {"R_avg", m.r_avg}, {"dominance", m.dominance}, {"complementarity", m.complementarity}, {"U_avg", m.u_avg}};
    }
    return j;
}

nlohmann::json to_json(const RoutingStats& r)
{
    return {{"mean_gates", r.mean_gates},
            {"selection_fraction", r.selection_fraction},
            {"L_lb", r.load_balance},
            {"mean_entropy", r.mean_entropy}};
}

nlohmann::json to_json(const EvalResult& r)
{
    nlohmann::json j;
    j["aspect"] = evalkit::to_json(r.tasks[0], {std::begin(LabelSchema::aspects), std::end(LabelSchema::aspects)});
    j["severity"] =
        evalkit::to_json(r.tasks[1], {std::begin(LabelSchema::severities), std::end(LabelSchema::severities)});
    if (r.multilabel) {
        j["multilabel"] = {{"aspect", evalkit::to_json((*r.multilabel)[0])},
                           {"severity", evalkit::to_json((*r.multilabel)[1])}};
    }
    j["loss"] = to_json(r.loss);
    j["validation"] = to_json(r.validation);
    j["routing"] = to_json(r.routing);
    return j;
}

} // namespace valor
