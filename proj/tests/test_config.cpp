#include "valor/config.hpp"

#include <doctest.h>

#include <set>

using namespace valor;

TEST_CASE("keys are unique, documented, and round-trip through get/set")
{
    std::set<std::string> seen;
    RunConfig cfg;
    for (const auto& k : config_keys()) {
        CHECK(seen.insert(k.key).second);
        CHECK(k.key.find('.') != std::string::npos);
        CHECK_FALSE(k.help.empty());
        CHECK_FALSE(k.source.empty());
        const std::string v = get_key(cfg, k.key);
        RunConfig copy = cfg;
        set_key(copy, k.key, v);
        CHECK(get_key(copy, k.key) == v);
    }
    CHECK(seen.size() > 60);
    const std::string help = config_help();
    for (const auto& k : seen)
        CHECK(help.find(k) != std::string::npos);
}

TEST_CASE("defaults carry the published constants")
{
    const RunConfig cfg;
    CHECK(get_key(cfg, "run.seed") == "42");
    CHECK(cfg.train.loss.label_smoothing == 0.15);
    CHECK(cfg.train.loss.sas_margin == 0.3);
    CHECK(cfg.train.loss.tau_r == 0.3);
    CHECK(cfg.train.loss.tau_s == 0.5);
    CHECK(cfg.train.loss.tau_u == 1.5);
    CHECK(cfg.train.loss.lambda_lb == 0.05);
    CHECK(cfg.train.model.meta.lambda_s == 0.1);
    CHECK(cfg.train.adamw.beta1 == 0.9);
    CHECK(cfg.train.adamw.beta2 == 0.999);
    CHECK(cfg.train.schedule.lr_min == 1e-6);
    CHECK(cfg.train.schedule.warmup == 500);
    CHECK(cfg.train.schedule.t_mult == 2.0);
    CHECK(cfg.train.grad_clip == 1.0);
    CHECK(cfg.train.batch == 16);
    CHECK(cfg.train.model.experts.router_noise == 0.05);
    CHECK(cfg.sampler.temperature == 0.5);
    CHECK(cfg.sampler.top_k == 30);
    CHECK(cfg.sampler.top_p == 0.9);
    CHECK(cfg.train.augment.mixup_alpha == 0.2);
    CHECK(cfg.train.augment.cutmix_prob == 0.5);
    CHECK(cfg.train.augment.erase_prob == 0.3);
    CHECK(cfg.train.model.fusion.heads == 8);
    CHECK(cfg.train.model.experts.experts == 4);
    CHECK(cfg.train.model.validation.experts == 2);
}

TEST_CASE("presets")
{
    RunConfig cfg;
    apply_preset(cfg, "main-text");
    CHECK(cfg.train.schedule.lr_max == 2e-5);
    CHECK(cfg.train.epochs == 20);
    CHECK(cfg.train.patience == 5);
    CHECK(cfg.train.model.meta.dropout == 0.5);
    CHECK(cfg.train.loss.mode == objective::LossMode::MultiLabelBCE);
    apply_preset(cfg, "appendix");
    CHECK(cfg.train.schedule.lr_max == 5e-4);
    CHECK(cfg.train.epochs == 50);
    CHECK(cfg.train.patience == 15);
    CHECK(cfg.train.model.meta.dropout == 0.1);
    CHECK(cfg.train.loss.mode == objective::LossMode::PerPairCE);

    RunConfig paper;
    apply_preset(paper, "paper");
    CHECK(paper.train.model.encoder.d == 768);
    CHECK(paper.train.model.encoder.max_tokens == 512);
    CHECK(paper.train.model.encoder.vocab == 30522);
    CHECK(paper.train.model.encoder.image_side == 224);
    CHECK(paper.train.model.sas.shared_dim == 512);
    CHECK(paper.train.model.experts.d_t == 4096);
    CHECK(paper.train.model.validation.layers == 32);
    CHECK(paper.train.model.validation.trainable_layers == 2);
    CHECK(paper.train.model.meta.hidden1 == 768);
    CHECK(paper.train.model.meta.hidden2 == 384);
    CHECK_NOTHROW(paper.train.model.validate());

    apply_preset(paper, "desk,main-text");
    CHECK(paper.train.model.encoder.d == 64);
    CHECK(paper.train.epochs == 20);
    CHECK(paper.preset == "desk,main-text");
    CHECK_THROWS_AS(apply_preset(paper, "huge"), ConfigError);
    CHECK(preset_names().size() == 4u);
}

TEST_CASE("config text: comments, sections, presets, errors with line numbers")
{
    RunConfig cfg;
    load_config_text(cfg, "# a comment\n"
                          "run.seed = 7\n"
                          "[train]\n"
                          "epochs = 3   # trailing comment\n"
                          "lr_max=0.001\n"
                          "\n"
                          "[loss]\n"
                          "mode = multi-label-bce\n");
    CHECK(cfg.seed == 7);
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.train.schedule.lr_max == 0.001);
    CHECK(cfg.train.loss.mode == objective::LossMode::MultiLabelBCE);

    RunConfig p;
    load_config_text(p, "run.preset = main-text\n");
    CHECK(p.train.epochs == 20);

    try {
        load_config_text(cfg, "train.epochs = 3\nbogus.key = 1\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(load_config_text(cfg, "train.epochs = many\n"), ConfigError);
    CHECK_THROWS_AS(load_config_text(cfg, "train.epochs\n"), ConfigError);
    CHECK_THROWS_AS(set_key(cfg, "loss.mode", "hinge"), ConfigError);
    CHECK_THROWS_AS(set_key(cfg, "data.aspect_histogram", "1,2,3"), ConfigError);
    CHECK_THROWS_AS(load_config_file(cfg, "/nonexistent/valor.cfg"), std::exception);
}

TEST_CASE("dump then load reproduces the same configuration")
{
    RunConfig cfg;
    apply_preset(cfg, "main-text");
    set_key(cfg, "train.epochs", "9");
    set_key(cfg, "pairing.theta_global", "0.37");
    set_key(cfg, "sampler.top_p", "0.123456789012345");
    const std::string dump = dump_config(cfg);
    CHECK(dump.rfind("# preset applied:", 0) == 0);
    RunConfig back;
    load_config_text(back, dump);
    CHECK(dump_config(back) == dump);
    CHECK(back.sampler.top_p == 0.123456789012345);
    CHECK(back.train.epochs == 9);
}

TEST_CASE("seed flows into the sub-configs")
{
    RunConfig cfg;
    set_key(cfg, "run.seed", "1234");
    CHECK(cfg.gen_spec().seed == 1234u);
    CHECK(cfg.train_config().seed == 1234u);
}
