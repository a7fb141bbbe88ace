#include "oracle.hpp"
#include "support.hpp"

#include "valor/fuse.hpp"

#include <doctest.h>

using namespace valor;
using namespace valor::fuse;

namespace {

void jitter(ParamStore<double>& ps, Rng& rng)
{
    for (auto& p : ps.all())
        p.value += test::randm(p.value.rows(), p.value.cols(), rng, 0.1);
}

oracle::M fusion_oracle(const ParamStore<double>& ps, const FusionConfig& cfg, const oracle::M& text,
                        const oracle::M& image, const std::vector<char>& mask)
{
    oracle::M z = text;
    for (int b = 0; b < cfg.depth; ++b) {
        const std::string n = "fuse.block" + std::to_string(b);
        z = oracle::layer_norm(ps, n + ".ln1", z + oracle::attention(ps, n + ".attn", z, image, cfg.heads));
        z = oracle::layer_norm(ps, n + ".ln2", z + oracle::ffn(ps, n + ".ffn", z));
    }
    oracle::M x = oracle::M::Zero(1, z.cols());
    int count = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        if (mask[static_cast<std::size_t>(i)]) {
            x += z.row(i);
            ++count;
        }
    return x / count;
}

struct Fixture {
    FusionConfig cfg;
    ParamStore<double> ps;
    Rng rng{42};
    explicit Fixture(FusionConfig c = {}) : cfg(c)
    {
        register_fusion(ps, cfg, rng);
        jitter(ps, rng);
    }
    Matrix<double> run(const Matrix<double>& text, const Matrix<double>& image, const std::vector<char>& mask)
    {
        test::Tape t;
        return cross_modal_attention(t, ps, cfg, t.leaf(text), t.leaf(image), mask).value();
    }
};

} // namespace

TEST_CASE("single patch: attention returns that patch's value row for any query")
{
    Fixture f;
    const auto v = test::randm(1, 64, f.rng);
    test::Tape t;
    Var<double> q1 = t.leaf(test::randm(3, 64, f.rng)), q2 = t.leaf(test::randm(3, 64, f.rng) * 5.0);
    Var<double> kv = t.leaf(v);
    const auto a1 = layers::multi_head_attention(t, f.ps, "fuse.block0.attn", q1, kv, 8).value();
    const auto a2 = layers::multi_head_attention(t, f.ps, "fuse.block0.attn", q2, kv, 8).value();
    const auto expect = oracle::linear(f.ps, "fuse.block0.attn.o", oracle::linear(f.ps, "fuse.block0.attn.v", v));
    for (Eigen::Index r = 0; r < 3; ++r) {
        CHECK((a1.row(r) - expect).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a2.row(r) - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("two identical patches give the same fused vector as one")
{
    Fixture f;
    const auto text = test::randm(5, 64, f.rng);
    const auto patch = test::randm(1, 64, f.rng);
    Matrix<double> two(2, 64);
    two << patch, patch;
    const std::vector<char> mask{1, 1, 1, 0, 0};
    CHECK((f.run(text, patch, mask) - f.run(text, two, mask)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("desk fusion at seed 42 matches the per-head loop oracle")
{
    Fixture f;
    const auto text = test::randm(12, 64, f.rng);
    const auto image = test::randm(16, 64, f.rng);
    std::vector<char> mask(12, 1);
    mask[9] = mask[10] = mask[11] = 0;
    const auto x = f.run(text, image, mask);
    REQUIRE(x.rows() == 1);
    REQUIRE(x.cols() == 64);
    CHECK((x - fusion_oracle(f.ps, f.cfg, text, image, mask)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("random small shapes match the oracle, depth 2")
{
    Rng shapes(7);
    for (int trial = 0; trial < 6; ++trial) {
        FusionConfig cfg;
        cfg.heads = 1 << (trial % 3);
        cfg.d = cfg.heads * (2 + trial % 2);
        cfg.depth = 1 + trial % 2;
        cfg.ffn_mult = 2;
        Fixture f(cfg);
        const int L = 2 + static_cast<int>(shapes() % 5), P = 1 + static_cast<int>(shapes() % 4);
        const auto text = test::randm(L, cfg.d, f.rng), image = test::randm(P, cfg.d, f.rng);
        std::vector<char> mask(static_cast<std::size_t>(L), 1);
        mask.back() = 0;
        CHECK((f.run(text, image, mask) - fusion_oracle(f.ps, cfg, text, image, mask)).cwiseAbs().maxCoeff() <
              1e-6);
    }
}

TEST_CASE("permuting or rewriting padded rows leaves x unchanged")
{
    Fixture f;
    auto text = test::randm(8, 64, f.rng);
    const auto image = test::randm(4, 64, f.rng);
    const std::vector<char> mask{1, 1, 1, 1, 1, 0, 0, 0};
    const auto base = f.run(text, image, mask);
    text.row(5).swap(text.row(7));
    CHECK((f.run(text, image, mask) - base).cwiseAbs().maxCoeff() < 1e-12);
    text.row(6) = test::randm(1, 64, f.rng) * 10.0;
    CHECK((f.run(text, image, mask) - base).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("head count must divide the width")
{
    ParamStore<double> ps;
    Rng rng(1);
    FusionConfig cfg;
    cfg.d = 60;
    cfg.heads = 8;
    CHECK_THROWS_AS(register_fusion(ps, cfg, rng), std::invalid_argument);
    FusionConfig ok;
    register_fusion(ps, ok, rng);
    test::Tape t;
    std::vector<char> short_mask{1};
    CHECK_THROWS_AS(cross_modal_attention(t, ps, ok, t.leaf(test::randm(3, 64, rng)), t.leaf(test::randm(2, 64, rng)),
                                          short_mask),
                    std::invalid_argument);
}

TEST_CASE("alignment score: zero head gives 0, range stays in [-1, 1]")
{
    SasConfig cfg;
    ParamStore<double> ps;
    Rng rng(42);
    register_sas(ps, cfg, rng);
    jitter(ps, rng);
    {
        test::Tape t;
        const auto s = semantic_alignment_score(t, ps, t.leaf(test::randm(4, 64, rng)), t.leaf(test::randm(4, 64, rng)));
        CHECK(s.rows() == 4);
        CHECK(s.cols() == 1);
    }
    for (double scale : {0.1, 1.0, 100.0, 1e4}) {
        test::Tape t;
        const auto s = semantic_alignment_score(t, ps, t.leaf(test::randm(16, 64, rng, scale)),
                                                t.leaf(test::randm(16, 64, rng, scale)))
                           .value();
        CHECK(s.allFinite());
        CHECK(s.cwiseAbs().maxCoeff() <= 1.0);
    }
    ps.at("sas.head.fc2.w").value.setZero();
    ps.at("sas.head.fc2.b").value.setZero();
    test::Tape t;
    const auto s = semantic_alignment_score(t, ps, t.leaf(test::randm(6, 64, rng, 3.0)), t.leaf(test::randm(6, 64, rng)))
                       .value();
    CHECK(s.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("alignment score matches a loop oracle and its gradient matches central differences")
{
    SasConfig cfg;
    cfg.d = 6;
    cfg.shared_dim = 5;
    ParamStore<double> ps;
    Rng rng(42);
    register_sas(ps, cfg, rng);
    jitter(ps, rng);
    const auto ht = test::randm(1, 6, rng), hi = test::randm(1, 6, rng);

    auto branch = [&](const std::string& side, const oracle::M& h) {
        const std::string n = "sas." + side;
        return oracle::layer_norm(ps, n + ".ln",
                                  oracle::linear(ps, n + ".fc2", oracle::map(oracle::linear(ps, n + ".fc1", h),
                                                                             oracle::gelu)));
    };
    oracle::M joint(1, 10);
    joint << branch("text", ht), branch("image", hi);
    const double expect =
        std::tanh(oracle::linear(ps, "sas.head.fc2", oracle::map(oracle::linear(ps, "sas.head.fc1", joint), oracle::gelu))(
            0, 0));
    test::Tape t;
    CHECK(semantic_alignment_score(t, ps, t.leaf(ht), t.leaf(hi)).item() == doctest::Approx(expect).epsilon(1e-12));

    const double err = test::fd_max_error({ht, hi}, [&](test::Tape& tt, const std::vector<test::Var>& v) {
        return semantic_alignment_score(tt, ps, v[0], v[1]);
    });
    CHECK(err < 1e-4);
}

TEST_CASE("fusion gradients match central differences")
{
    FusionConfig cfg;
    cfg.d = 4;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    Fixture f(cfg);
    const auto text = test::randm(3, 4, f.rng), image = test::randm(2, 4, f.rng);
    const std::vector<char> mask{1, 1, 0};
    const double err = test::fd_max_error({text, image}, [&](test::Tape& t, const std::vector<test::Var>& v) {
        return test::project(cross_modal_attention(t, f.ps, cfg, v[0], v[1], mask));
    });
    CHECK(err < 1e-4);
}
