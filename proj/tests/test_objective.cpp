#include "support.hpp"

#include "valor/objective.hpp"
#include "valor/schema.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace valor;
using namespace valor::objective;

namespace {

std::vector<double> vec(std::initializer_list<double> v)
{
    return v;
}

datagen::Image noise_image(int side, Rng& rng)
{
    datagen::Image img;
    img.height = img.width = side;
    img.data.resize(static_cast<std::size_t>(3 * side * side));
    for (auto& v : img.data)
        v = static_cast<float>(uniform01(rng));
    return img;
}

Targets one_hot_targets(int aspect, int severity)
{
    Targets t{std::vector<double>(6, 0.0), std::vector<double>(4, 0.0)};
    t[0][static_cast<std::size_t>(aspect)] = 1.0;
    t[1][static_cast<std::size_t>(severity)] = 1.0;
    return t;
}

double sum(const std::vector<double>& v)
{
    double s = 0;
    for (double x : v)
        s += x;
    return s;
}

} // namespace

TEST_CASE("label-smoothed cross-entropy examples")
{
    for (int gold = 0; gold < 6; ++gold)
        for (double eps : {0.0, 0.15, 0.5})
            CHECK(label_smoothed_ce(std::vector<double>(6, 0.0), gold, eps) == doctest::Approx(std::log(6.0)));
    CHECK(label_smoothed_ce(vec({40, 0, 0, 0, 0, 0}), 0, 0.0) < 1e-15);

    const auto t = smoothed_target(2, 6, 0.15);
    CHECK(t[2] == doctest::Approx(0.875));
    CHECK(t[0] == doctest::Approx(0.025));
    CHECK(sum(t) == doctest::Approx(1.0));
    std::vector<double> logits;
    for (double p : t)
        logits.push_back(std::log(p));
    CHECK(label_smoothed_ce(logits, 2, 0.15) == doctest::Approx(0.577950).epsilon(1e-6));
    // Independent: -sum y ln y.
    CHECK(label_smoothed_ce(logits, 2, 0.15) ==
          doctest::Approx(-(0.875 * std::log(0.875) + 5 * 0.025 * std::log(0.025))).epsilon(1e-12));
    CHECK_THROWS(label_smoothed_ce(std::vector<double>(6, 0.0), 6, 0.1));
}

TEST_CASE("smoothed cross-entropy is minimized at the smoothed target (C = 3)")
{
    const auto target = smoothed_target(1, 3, 0.15);
    std::vector<double> best_logits;
    for (double p : target)
        best_logits.push_back(std::log(p));
    const double best = soft_cross_entropy(best_logits, target);
    // Grid over the simplex.
    const int n = 200;
    double grid_min = 1e300;
    std::array<double, 3> argmin{};
    for (int i = 1; i < n; ++i)
        for (int j = 1; i + j < n; ++j) {
            const std::array<double, 3> q{i / double(n), j / double(n), (n - i - j) / double(n)};
            const double l = soft_cross_entropy(vec({std::log(q[0]), std::log(q[1]), std::log(q[2])}), target);
            CHECK(l >= best - 1e-12);
            if (l < grid_min) {
                grid_min = l;
                argmin = q;
            }
        }
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(argmin[c] == doctest::Approx(target[c]).epsilon(0.02));
}

TEST_CASE("sas margin and metric hinges")
{
    CHECK(sas_margin_loss(vec({0.5}), 0.3) == 0.0);
    CHECK(sas_margin_loss(vec({0.1}), 0.3) == doctest::Approx(0.2));
    CHECK(sas_margin_loss(vec({-1.0}), 0.3) == doctest::Approx(1.3));
    CHECK(sas_margin_loss(vec({0.5, 0.1, -1.0}), 0.3) == doctest::Approx(1.5 / 3));

    const LossConfig cfg;
    const auto r = metric_regularizers(0.3, 0.2, 1.6, cfg);
    CHECK(r.alignment == 0.0);
    CHECK(r.dominance == doctest::Approx(0.3));
    CHECK(r.complementarity == 0.0);
    const auto r2 = metric_regularizers(0.9, 0.8, 0.5, cfg);
    CHECK(r2.alignment == doctest::Approx(0.6));
    CHECK(r2.dominance == 0.0);
    CHECK(r2.complementarity == doctest::Approx(1.0));

    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        const auto h = metric_regularizers(uniform01(rng) * 2 - 1, uniform01(rng) * 2 - 1, uniform01(rng) * 2, cfg);
        CHECK(h.alignment >= 0.0);
        CHECK(h.dominance >= 0.0);
        CHECK(h.complementarity >= 0.0);
        CHECK(sas_margin_loss(vec({uniform01(rng) * 2 - 1}), 0.3) >= 0.0);
    }

    test::Tape t;
    const auto s = t.leaf(Matrix<double>(Eigen::Vector3d(0.5, 0.1, -1.0)));
    CHECK(sas_margin_loss(s, 0.3).item() == doctest::Approx(0.5));
}

TEST_CASE("total loss is the weighted sum of its parts")
{
    const LossConfig cfg;
    CHECK(total_loss(LossParts{}, cfg).total == 0.0);
    const LossParts p{1, 1, 0.2, 1, 0.5, 0.1, 0.1, 0.1};
    const auto b = total_loss(p, cfg);
    CHECK(b.total == doctest::Approx(3.09).epsilon(1e-12));

    LossConfig zero = cfg;
    zero.lambda_lb = zero.lambda_val = zero.lambda_sas = zero.lambda_r = zero.lambda_s = zero.lambda_u = 0.0;
    CHECK(total_loss(p, zero).total == doctest::Approx(2.0));

    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
        LossParts q{uniform01(rng), uniform01(rng), uniform01(rng), uniform01(rng),
                    uniform01(rng), uniform01(rng), uniform01(rng), uniform01(rng)};
        LossConfig c;
        c.lambda_lb = uniform01(rng);
        c.lambda_val = uniform01(rng);
        c.lambda_sas = uniform01(rng);
        c.lambda_r = uniform01(rng);
        c.lambda_s = uniform01(rng);
        c.lambda_u = uniform01(rng);
        const double want = q.aspect + q.severity + c.lambda_lb * q.load_balance + c.lambda_val * q.validation +
                            c.lambda_sas * q.sas + c.lambda_r * q.alignment + c.lambda_s * q.dominance +
                            c.lambda_u * q.complementarity;
        CHECK(total_loss(q, c).total == doctest::Approx(want).epsilon(1e-12));
    }

    LossParts bad = p;
    bad.sas = std::nan("");
    try {
        total_loss(bad, cfg);
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
        CHECK(std::string(e.what()).find("sas") != std::string::npos);
    }
}

TEST_CASE("tape losses match the plain versions and central differences")
{
    Rng rng(4);
    const auto logits = test::randm(3, 6, rng);
    Matrix<double> targets(3, 6);
    for (int r = 0; r < 3; ++r) {
        const auto t = smoothed_target(r, 6, 0.15);
        for (int c = 0; c < 6; ++c)
            targets(r, c) = t[static_cast<std::size_t>(c)];
    }
    test::Tape t;
    double plain = 0;
    for (int r = 0; r < 3; ++r) {
        std::vector<double> lr;
        for (int c = 0; c < 6; ++c)
            lr.push_back(logits(r, c));
        plain += label_smoothed_ce(lr, r, 0.15) / 3.0;
    }
    CHECK(soft_cross_entropy(t.leaf(logits), targets).item() == doctest::Approx(plain).epsilon(1e-12));
    CHECK(test::fd_max_error({logits}, [&](test::Tape&, const std::vector<test::Var>& v) {
              return soft_cross_entropy(v[0], targets);
          }) < 1e-6);

    Matrix<double> bin = Matrix<double>::Zero(3, 6);
    bin(0, 1) = bin(1, 4) = bin(2, 0) = bin(2, 5) = 1;
    double bce = 0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        const double z = logits.data()[i], y = bin.data()[i];
        const double p = 1 / (1 + std::exp(-z));
        bce -= y * std::log(p) + (1 - y) * std::log(1 - p);
    }
    CHECK(binary_cross_entropy(t.leaf(logits), bin).item() == doctest::Approx(bce / 18).epsilon(1e-12));
    CHECK(test::fd_max_error({logits}, [&](test::Tape&, const std::vector<test::Var>& v) {
              return binary_cross_entropy(v[0], bin);
          }) < 1e-6);
}

TEST_CASE("learning-rate schedule")
{
    ScheduleConfig c;
    c.lr_max = 5e-4;
    c.lr_min = 1e-6;
    c.warmup = 500;
    c.t0 = 100;
    CHECK(lr_schedule(0, c) == 0.0);
    CHECK(lr_schedule(250, c) == doctest::Approx(2.5e-4));
    CHECK(lr_schedule(500, c) == doctest::Approx(5e-4)); // warmup end, first period start
    CHECK(lr_schedule(550, c) == doctest::Approx((5e-4 + 1e-6) / 2));
    // Restarts at 600, 800, 1200 (periods 100, 200, 400).
    for (long boundary : {600L, 800L, 1200L}) {
        CHECK(lr_schedule(boundary, c) == doctest::Approx(5e-4));
        CHECK(lr_schedule(boundary - 1, c) < 1e-5);
    }
    CHECK(lr_schedule(700, c) == doctest::Approx((5e-4 + 1e-6) / 2));
    CHECK(lr_schedule(1000, c) == doctest::Approx((5e-4 + 1e-6) / 2));
    // Period end approaches lr_min.
    const double end = 1e-6 + (5e-4 - 1e-6) * (1 + std::cos(std::numbers::pi * 399.0 / 400.0)) / 2;
    CHECK(lr_schedule(1199, c) == doctest::Approx(end));
    CHECK(end - 1e-6 < 1e-8);

    // Continuous except at restarts.
    for (long s = 1; s < 3000; ++s) {
        const bool restart = s == 600 || s == 800 || s == 1200 || s == 2000;
        if (!restart)
            CHECK(std::abs(lr_schedule(s, c) - lr_schedule(s - 1, c)) < 2e-5);
        CHECK(lr_schedule(s, c) >= 1e-6 - 1e-15);
        CHECK(lr_schedule(s, c) <= 5e-4 + 1e-15);
    }
    CHECK_THROWS_AS(lr_schedule(-1, c), std::invalid_argument);
}

TEST_CASE("AdamW matches a hand-computed update")
{
    ParamStore<double> ps;
    ps.add("w", Matrix<double>::Constant(1, 2, 1.0));
    Param<double>& frozen = ps.add("f", Matrix<double>::Constant(1, 1, 3.0));
    frozen.trainable = false;
    AdamW<double> opt(AdamWConfig{});
    ps.at("w").grad << 0.5, -2.0;
    ps.at("f").grad << 1.0;
    opt.step(ps, 0.1);
    // Step 1: m_hat = g, v_hat = g^2, so the update is lr * (wd * w + sign(g) * |g| / (|g| + eps)).
    CHECK(ps.at("w").value(0, 0) == doctest::Approx(1.0 - 0.1 * (0.01 * 1.0 + 0.5 / (0.5 + 1e-8))));
    CHECK(ps.at("w").value(0, 1) == doctest::Approx(1.0 - 0.1 * (0.01 * 1.0 - 2.0 / (2.0 + 1e-8))));
    CHECK(ps.at("f").value(0, 0) == 3.0);

    // Step 2 by hand.
    const double w0 = ps.at("w").value(0, 0);
    ps.at("w").grad << 0.1, 0.0;
    opt.step(ps, 0.1);
    const double m = 0.9 * (0.1 * 0.5) + 0.1 * 0.1, v = 0.999 * (0.001 * 0.25) + 0.001 * 0.01;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    CHECK(ps.at("w").value(0, 0) == doctest::Approx(w0 - 0.1 * (0.01 * w0 + mh / (std::sqrt(vh) + 1e-8))));
    CHECK(opt.steps() == 2);
}

TEST_CASE("gradient clipping")
{
    ParamStore<double> ps;
    ps.add("a", Matrix<double>::Zero(1, 2));
    ps.add("b", Matrix<double>::Zero(1, 1));
    ps.at("a").grad << 3.0, 0.0;
    ps.at("b").grad << 4.0;
    CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
    CHECK(ps.at("a").grad(0, 0) == doctest::Approx(0.6));
    CHECK(ps.at("b").grad(0, 0) == doctest::Approx(0.8));
    CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(1.0));
    ps.at("a").grad << 0.1, 0.0;
    ps.at("b").grad << 0.0;
    clip_grad_norm(ps, 1.0);
    CHECK(ps.at("a").grad(0, 0) == doctest::Approx(0.1));
}

TEST_CASE("mixup and cutmix endpoints")
{
    Rng rng(1);
    const auto a = noise_image(16, rng), b = noise_image(16, rng);
    CHECK(mix_images(a, b, 1.0) == a);
    const Targets ta = one_hot_targets(1, 2), tb = one_hot_targets(4, 0);
    CHECK(mix_targets(ta, tb, 1.0) == ta);
    const auto half = mix_targets(ta, tb, 0.5);
    CHECK(half[0][1] == 0.5);
    CHECK(half[0][4] == 0.5);
    CHECK(sum(half[1]) == doctest::Approx(1.0));

    AugmentConfig cfg;
    const Box zero = sample_cut_box(16, 16, 0.0, cfg, rng);
    CHECK(zero.area() == 0);
    auto img = a;
    paste_box(img, b, zero);
    CHECK(img == a);
    // Zero cut area: the area-proportional mix keeps the original labels.
    CHECK(mix_targets(ta, tb, 1.0 - zero.area() / 256.0) == ta);

    const Box box{2, 3, 4, 5};
    paste_box(img, b, box);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const bool inside = y >= 2 && y < 6 && x >= 3 && x < 8;
            CHECK(img.at(1, y, x) == (inside ? b.at(1, y, x) : a.at(1, y, x)));
        }

    for (int i = 0; i < 200; ++i) {
        const double frac = uniform01(rng);
        const Box c = sample_cut_box(32, 32, frac, cfg, rng);
        CHECK(c.y >= 0);
        CHECK(c.x >= 0);
        CHECK(c.y + c.h <= 32);
        CHECK(c.x + c.w <= 32);
    }
}

TEST_CASE("random-erase region area stays in range")
{
    AugmentConfig cfg;
    Rng rng(6);
    int produced = 0;
    for (int i = 0; i < 2000; ++i) {
        const int side = 8 + i % 57;
        if (auto b = sample_erase_box(side, side, cfg, rng)) {
            ++produced;
            const double frac = static_cast<double>(b->area()) / (side * side);
            CHECK(frac >= 0.02);
            CHECK(frac <= 0.4);
            const double ratio = static_cast<double>(b->h) / b->w;
            CHECK(ratio >= 0.2); // rounding can leave the sampled ratio slightly
            CHECK(ratio <= 5.0);
            CHECK(b->y + b->h <= side);
            CHECK(b->x + b->w <= side);
        }
    }
    CHECK(produced > 1900);
}

TEST_CASE("augment: deterministic, label mass preserved, off switch")
{
    Rng src(2);
    std::vector<datagen::Image> images;
    std::vector<Targets> targets;
    for (int i = 0; i < 8; ++i) {
        images.push_back(noise_image(16, src));
        targets.push_back(one_hot_targets(i % 6, i % 4));
    }
    AugmentConfig cfg;
    auto i1 = images, i2 = images;
    auto t1 = targets, t2 = targets;
    Rng r1(5), r2(5);
    augment(i1, t1, cfg, r1);
    augment(i2, t2, cfg, r2);
    CHECK(i1 == i2);
    CHECK(t1 == t2);
    CHECK(i1 != images);
    for (const auto& t : t1) {
        CHECK(sum(t[0]) == doctest::Approx(1.0));
        CHECK(sum(t[1]) == doctest::Approx(1.0));
        for (const auto& task : t)
            for (double v : task) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
    }
    for (const auto& img : i1)
        for (float v : img.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }

    AugmentConfig off = cfg;
    off.enabled = false;
    auto i3 = images;
    auto t3 = targets;
    Rng r3(5);
    augment(i3, t3, off, r3);
    CHECK(i3 == images);
    CHECK(t3 == targets);

    std::vector<Targets> short_targets(3, one_hot_targets(0, 0));
    CHECK_THROWS_AS(augment(i3, short_targets, cfg, r3), std::invalid_argument);
}
