#include "valor/cli.hpp"

#include "valor/checkpoint.hpp"
#include "valor/config.hpp"
#include "valor/gradcheck.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <algorithm>
#include <optional>
#include <sstream>

namespace valor::cli {

namespace fs = std::filesystem;

namespace {

// Failures of the pipeline proper (files, numerics) as opposed to usage.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::optional<std::string> preset;
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--preset", c.preset, "comma list of presets: desk, paper, appendix, main-text");
    cmd->add_option("--config", c.config, "key = value config file");
    cmd->add_option("--set", c.sets, "override one key: --set section.key=value (repeatable)");
    cmd->add_option("--seed", c.seed, "master seed (overrides run.seed)");
}

// defaults -> --preset -> saved run config -> --config -> --set -> --seed
RunConfig resolve(const Common& c, const std::optional<fs::path>& saved = std::nullopt)
{
    RunConfig cfg;
    if (c.preset)
        apply_preset(cfg, *c.preset);
    if (saved && fs::exists(*saved))
        load_config_file(cfg, *saved);
    if (!c.config.empty()) {
        if (!fs::exists(c.config))
            throw IoError("cannot open config " + c.config);
        load_config_file(cfg, c.config);
    }
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        if (kv.substr(0, eq) == "run.preset")
            apply_preset(cfg, kv.substr(eq + 1));
        else
            set_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed)
        cfg.seed = *c.seed;
    return cfg;
}

datagen::SplitRatios ratios(const RunConfig& cfg)
{
    return {cfg.split[0], cfg.split[1], cfg.split[2]};
}

void write_text(const fs::path& p, const std::string& text)
{
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os)
        throw IoError("cannot write " + p.string());
    os << text;
    if (!os)
        throw IoError("write failed: " + p.string());
}

// Split files share the images directory already written with the corpus.
void write_split(const fs::path& dir, const datagen::CorpusSplit& s)
{
    const std::pair<const char*, const datagen::Corpus*> parts[] = {{"train", &s.train}, {"val", &s.val}, {"test", &s.test}};
    for (const auto& [stem, corpus] : parts) {
        std::string text;
        for (const auto& sample : corpus->samples)
            text += datagen::sample_to_json_line(sample) + "\n";
        write_text(dir / (std::string(stem) + ".jsonl"), text);
    }
}

nlohmann::json split_summary(const datagen::CorpusSplit& s)
{
    return {{"train", s.train.size()}, {"val", s.val.size()}, {"test", s.test.size()}};
}

datagen::Corpus read_stem(const fs::path& dir, const std::string& stem)
{
    if (!fs::exists(dir / (stem + ".jsonl")))
        throw IoError("missing " + (dir / (stem + ".jsonl")).string() + " (run `generate` or `split` first)");
    return datagen::read_corpus(dir, stem);
}

fs::path resolve_ckpt(const std::string& ckpt, const fs::path& run_dir)
{
    if (ckpt == "best" || ckpt == "last")
        return run_dir / (ckpt + ".ckpt");
    return ckpt;
}

ParamStore<double> load_model(const RunConfig& cfg, const fs::path& ckpt)
{
    if (!fs::exists(ckpt))
        throw IoError("checkpoint not found: " + ckpt.string());
    ParamStore<double> ps = init_params<double>(cfg.train.model, cfg.seed);
    try {
        load_checkpoint(ckpt, ps);
    } catch (const std::exception& e) {
        throw IoError(e.what());
    }
    return ps;
}

template <std::size_t N>
std::vector<std::string> names(const std::array<std::string_view, N>& xs)
{
    return {xs.begin(), xs.end()};
}

void print(std::ostream& out, const nlohmann::json& j)
{
    out << j.dump(2) << "\n";
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Two-phase mixture-of-experts complaint classifier: data generation, training, evaluation, "
                 "diagnostics and image pairing."};
    app.name("valor");
    app.require_subcommand(1);
    app.footer(config_help());

    Common common;
    std::string out_dir = "out", data_dir = "data", run_dir = "run", ckpt = "best", split = "test", matrix;
    std::string op = "all";
    int probes = 20;
    double tol = 1e-4;

    auto* generate = app.add_subcommand("generate", "generate a synthetic corpus and its train/val/test split");
    add_common(generate, common);
    generate->add_option("--out", out_dir, "output directory")->capture_default_str();

    auto* split_cmd = app.add_subcommand("split", "re-split an existing corpus with split.ratios and the seed");
    add_common(split_cmd, common);
    split_cmd->add_option("--data", data_dir, "corpus directory")->capture_default_str();

    auto* train_cmd = app.add_subcommand("train", "train on <data>/train.jsonl, early-stop on <data>/val.jsonl");
    add_common(train_cmd, common);
    train_cmd->add_option("--data", data_dir, "corpus directory")->capture_default_str();
    train_cmd->add_option("--out", run_dir, "run directory for history and checkpoints")->capture_default_str();

    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on one split; metrics JSON on stdout");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--data", data_dir, "corpus directory")->capture_default_str();
    eval_cmd->add_option("--run", run_dir, "run directory (for best/last and run.cfg)")->capture_default_str();
    eval_cmd->add_option("--ckpt", ckpt, "best, last, or a checkpoint path")->capture_default_str();
    eval_cmd->add_option("--split", split, "train, val, or test")
        ->check(CLI::IsMember({"train", "val", "test"}))
        ->capture_default_str();
    std::string eval_out;
    eval_cmd->add_option("--out", eval_out, "also write metrics.json and confusion CSVs here");

    auto* analyze = app.add_subcommand("analyze", "K x K cosine similarity of expert matrices as CSV");
    add_common(analyze, common);
    analyze->add_option("--run", run_dir, "run directory")->capture_default_str();
    analyze->add_option("--ckpt", ckpt, "best, last, or a checkpoint path")->capture_default_str();
    analyze->add_option("--matrix", matrix, "alpha, w_in, or w_out (default analyze.matrix)")
        ->check(CLI::IsMember({"alpha", "w_in", "w_out"}));

    auto* pair = app.add_subcommand("pair", "assign mock images to mock conversations");
    add_common(pair, common);
    std::string pair_out;
    pair->add_option("--out", pair_out, "write assignments.csv here");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient check of registered ops");
    add_common(grad, common);
    grad->add_option("--op", op, "op name or 'all'")->capture_default_str();
    grad->add_option("--probes", probes, "random probes per op")->capture_default_str();
    grad->add_option("--tol", tol, "max relative error")->capture_default_str();

    std::vector<std::string> argv_store{"valor"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store)
        argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << app.help() << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (generate->parsed()) {
            const RunConfig cfg = resolve(common);
            const auto spec = cfg.gen_spec();
            const datagen::Corpus corpus = datagen::generate_corpus(spec);
            datagen::write_corpus(out_dir, corpus);
            const auto s = datagen::split_corpus(corpus, ratios(cfg), cfg.seed);
            write_split(out_dir, s);
            write_text(fs::path(out_dir) / "data.cfg", dump_config(cfg));
            const auto hist = datagen::label_histogram(corpus);
            print(out, {{"samples", corpus.size()},
                        {"images", corpus.images.size()},
                        {"pairs", spec.pair_count()},
                        {"aspect_histogram", hist.aspect},
                        {"severity_histogram", hist.severity},
                        {"split", split_summary(s)},
                        {"out", out_dir}});
        } else if (split_cmd->parsed()) {
            const RunConfig cfg = resolve(common);
            const auto corpus = read_stem(data_dir, "corpus");
            const auto s = datagen::split_corpus(corpus, ratios(cfg), cfg.seed);
            write_split(data_dir, s);
            print(out, {{"split", split_summary(s)}, {"data", data_dir}});
        } else if (train_cmd->parsed()) {
            const RunConfig cfg = resolve(common);
            const auto train_set = read_stem(data_dir, "train");
            const auto val_set = read_stem(data_dir, "val");
            const TrainConfig tc = cfg.train_config();
            err << "training on " << train_set.size() << " samples, validating on " << val_set.size() << "\n";
            const TrainResult r = train(train_set, val_set, tc);
            fs::create_directories(run_dir);
            write_history(fs::path(run_dir) / "history.jsonl", r.history);
            save_checkpoint(fs::path(run_dir) / "best.ckpt", r.best);
            save_checkpoint(fs::path(run_dir) / "last.ckpt", r.last);
            write_text(fs::path(run_dir) / "run.cfg", dump_config(cfg));
            print(out, {{"epochs", r.history.size()},
                        {"steps", r.steps},
                        {"best_epoch", r.best_epoch},
                        {"early_stopped", r.early_stopped},
                        {"out", run_dir}});
        } else if (eval_cmd->parsed()) {
            const RunConfig cfg = resolve(common, fs::path(run_dir) / "run.cfg");
            const auto corpus = read_stem(data_dir, split);
            ParamStore<double> ps = load_model(cfg, resolve_ckpt(ckpt, run_dir));
            const EvalResult r = evaluate(ps, cfg.train_config(), corpus);
            nlohmann::json j = to_json(r);
            j["split"] = split;
            j["samples"] = corpus.size();
            print(out, j);
            if (!eval_out.empty()) {
                write_text(fs::path(eval_out) / "metrics.json", j.dump(2) + "\n");
                write_text(fs::path(eval_out) / "confusion_aspect.csv",
                           evalkit::confusion_csv(r.tasks[0].confusion, names(LabelSchema::aspects)));
                write_text(fs::path(eval_out) / "confusion_severity.csv",
                           evalkit::confusion_csv(r.tasks[1].confusion, names(LabelSchema::severities)));
            }
        } else if (analyze->parsed()) {
            RunConfig cfg = resolve(common, fs::path(run_dir) / "run.cfg");
            if (!matrix.empty())
                cfg.analyze_matrix = evalkit::parse_expert_matrix(matrix);
            const ParamStore<double> ps = load_model(cfg, resolve_ckpt(ckpt, run_dir));
            const auto weights =
                evalkit::expert_weights(ps, cfg.train.model.experts.experts, cfg.analyze_matrix);
            out << evalkit::similarity_csv(evalkit::expert_similarity(weights));
        } else if (pair->parsed()) {
            const RunConfig cfg = resolve(common);
            const auto corpus = datagen::generate_corpus(datagen::GenSpec::balanced(cfg.pair_conversations, cfg.seed));
            const auto conversations = pairing::conversations_from(corpus);
            const auto images = pairing::mock_images(cfg.pair_images, substream(cfg.seed, "mock-images")());
            pairing::MockProvider provider(substream(cfg.seed, "mock-provider")());
            const auto assigned = pairing::assign_images(conversations, images, provider, cfg.pairing, &err);
            if (!pair_out.empty())
                write_text(fs::path(pair_out) / "assignments.csv", pairing::assignments_csv(assigned));
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& a : assigned)
                rows.push_back({{"conversation_id", a.conversation_id},
                                {"image_id", a.image_id},
                                {"S_text", a.s_text},
                                {"S_aspect", a.s_aspect},
                                {"S_severity", a.s_severity},
                                {"S_combined", a.s_combined}});
            print(out, {{"conversations", conversations.size()},
                        {"images", images.size()},
                        {"assigned", assigned.size()},
                        {"theta_global", cfg.pairing.thresholds.global},
                        {"assignments", rows}});
        } else if (grad->parsed()) {
            const RunConfig cfg = resolve(common);
            const auto known = gradcheck::op_names();
            if (op != "all" && std::find(known.begin(), known.end(), op) == known.end())
                throw ConfigError("unknown gradcheck op '" + op + "'");
            const std::vector<std::string> ops = op == "all" ? known : std::vector<std::string>{op};
            nlohmann::json reports = nlohmann::json::array();
            bool ok = true;
            for (const auto& name : ops) {
                const auto r = gradcheck::grad_check(name, probes, tol, cfg.seed);
                ok = ok && r.passed;
                reports.push_back(gradcheck::to_json(r));
            }
            print(out, {{"passed", ok}, {"reports", reports}});
            return ok ? kExitOk : kExitCheckFailed;
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}

} // namespace valor::cli
