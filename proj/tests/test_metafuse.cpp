#include "support.hpp"

#include "valor/metafuse.hpp"

#include <doctest.h>

using namespace valor;
using namespace valor::metafuse;

namespace {

Vector<double> col(std::initializer_list<double> v)
{
    Vector<double> c(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v)
        c(i++) = x;
    return c;
}

} // namespace

TEST_CASE("feature lengths and zero input")
{
    CHECK(feature_dim(class_count(Task::Aspect)) == 17);
    CHECK(feature_dim(class_count(Task::Severity)) == 13);
    const auto f = build_meta_features<double>(Matrix<double>::Zero(3, 6), Matrix<double>::Zero(3, 6),
                                               Vector<double>::Zero(3), Vector<double>::Zero(3), 0, 0, 0);
    CHECK(f.rows() == 3);
    CHECK(f.cols() == 17);
    CHECK(f.isZero(0.0));
    CHECK_THROWS_AS(build_meta_features<double>(Matrix<double>::Zero(3, 6), Matrix<double>::Zero(3, 4),
                                                Vector<double>::Zero(3), Vector<double>::Zero(3), 0, 0, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_meta_features<double>(Matrix<double>::Zero(3, 4), Matrix<double>::Zero(3, 4),
                                                Vector<double>::Zero(2), Vector<double>::Zero(3), 0, 0, 0),
                    std::invalid_argument);
}

TEST_CASE("feature order golden example")
{
    Matrix<double> lp(2, 4), lv(2, 4);
    lp << 1, 2, 3, 4, 5, 6, 7, 8;
    lv << -1, -2, -3, -4, -5, -6, -7, -8;
    const auto f = build_meta_features<double>(lp, lv, col({0.5, -0.5}), col({1.1, 0.2}), 0.7, -0.3, 1.25);
    Matrix<double> golden(2, 13);
    golden << 1, 2, 3, 4, -1, -2, -3, -4, 0.5, 1.1, 0.7, -0.3, 1.25, //
        5, 6, 7, 8, -5, -6, -7, -8, -0.5, 0.2, 0.7, -0.3, 1.25;
    CHECK(f == golden);

    // The tape version lays features out identically.
    test::Tape t;
    auto scalar = [&](double v) { return t.leaf(Matrix<double>::Constant(1, 1, v)); };
    const auto g = build_meta_features<double>(t.leaf(lp), t.leaf(lv), t.leaf(Matrix<double>(col({0.5, -0.5}))),
                                               t.leaf(Matrix<double>(col({1.1, 0.2}))), scalar(0.7), scalar(-0.3),
                                               scalar(1.25));
    CHECK(g.value() == golden);
}

TEST_CASE("meta fuse: zero weights, eval determinism, train dropout")
{
    MetaConfig cfg;
    ParamStore<double> ps;
    Rng rng(42);
    register_meta(ps, cfg, Task::Aspect, rng);
    register_meta(ps, cfg, Task::Severity, rng);
    const auto f = test::randm(5, 17, rng);
    test::Tape t;
    const auto a = meta_fuse(t, ps, cfg, Task::Aspect, t.leaf(f), nullptr, Mode::Eval).value();
    const auto b = meta_fuse(t, ps, cfg, Task::Aspect, t.leaf(f), nullptr, Mode::Eval).value();
    CHECK(a.cols() == 6);
    CHECK(a == b);
    const auto sev = meta_fuse(t, ps, cfg, Task::Severity, t.leaf(test::randm(5, 13, rng)), nullptr, Mode::Eval);
    CHECK(sev.cols() == 4);

    Rng d1(3), d2(3);
    const auto tr1 = meta_fuse(t, ps, cfg, Task::Aspect, t.leaf(f), &d1, Mode::Train).value();
    const auto tr2 = meta_fuse(t, ps, cfg, Task::Aspect, t.leaf(f), &d2, Mode::Train).value();
    CHECK(tr1 == tr2);
    CHECK(tr1 != a);
    CHECK_THROWS_AS(meta_fuse(t, ps, cfg, Task::Aspect, t.leaf(f), nullptr, Mode::Train), std::invalid_argument);

    for (auto& p : ps.all())
        p.value.setZero();
    test::Tape fresh; // a tape binds each parameter once, so use a new one
    const auto z = meta_fuse(fresh, ps, cfg, Task::Aspect, fresh.leaf(f), nullptr, Mode::Eval).value();
    CHECK(z.isZero(0.0));
}

TEST_CASE("inverted dropout keeps the expected activation")
{
    test::Tape t;
    Rng rng(9);
    const auto x = t.leaf(Matrix<double>::Ones(200, 100));
    const auto y = dropout(x, 0.1, &rng, Mode::Train).value();
    const double zeros = static_cast<double>((y.array() == 0.0).count()) / static_cast<double>(y.size());
    CHECK(zeros == doctest::Approx(0.1).epsilon(0.1));
    for (Eigen::Index i = 0; i < y.size(); ++i)
        CHECK((y.data()[i] == 0.0 || y.data()[i] == doctest::Approx(1.0 / 0.9)));
    CHECK(y.mean() == doctest::Approx(1.0).epsilon(0.02));
    CHECK(dropout(x, 0.1, nullptr, Mode::Eval).value() == x.value());
}

TEST_CASE("meta fuse gradients match central differences")
{
    MetaConfig cfg;
    cfg.hidden1 = 7;
    cfg.hidden2 = 5;
    ParamStore<double> ps;
    Rng rng(2);
    register_meta(ps, cfg, Task::Aspect, rng);
    for (auto& p : ps.all())
        p.value += test::randm(p.value.rows(), p.value.cols(), rng, 0.1);
    const auto f = test::randm(3, 17, rng);
    CHECK(test::fd_max_error({f}, [&](test::Tape& t, const std::vector<test::Var>& v) {
              return test::project(meta_fuse(t, ps, cfg, Task::Aspect, v[0], nullptr, Mode::Eval));
          }) < 1e-4);
    // Dropout with a fixed mask is still exactly differentiable.
    CHECK(test::fd_max_error({f}, [&](test::Tape& t, const std::vector<test::Var>& v) {
              Rng r(17);
              return test::project(meta_fuse(t, ps, cfg, Task::Aspect, v[0], &r, Mode::Train));
          }) < 1e-4);
}

TEST_CASE("sas adjustment is a uniform shift that never changes the prediction")
{
    Rng rng(5);
    const auto lf = test::randm(4, 6, rng);
    CHECK(adjust_with_sas<double>(lf, Vector<double>::Zero(4), 0.1) == lf);
    const auto up = adjust_with_sas<double>(lf, Vector<double>::Ones(4), 0.1);
    CHECK(((up - lf).array() - 0.1).abs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(adjust_with_sas<double>(lf, Vector<double>::Ones(3), 0.1), std::invalid_argument);

    for (int trial = 0; trial < 100; ++trial) {
        const auto l = test::randm(3, trial % 2 ? 6 : 4, rng, 3.0);
        Vector<double> s(3);
        for (auto& v : s)
            v = uniform01(rng) * 2.0 - 1.0;
        const double lam = uniform01(rng) * 5.0;
        const auto adj = adjust_with_sas<double>(l, s, lam);
        const auto p = predict(adj), q = predict(l);
        CHECK((p - q).cwiseAbs().maxCoeff() < 1e-12);
        for (Eigen::Index b = 0; b < 3; ++b) {
            CHECK(std::abs(p.row(b).sum() - 1.0) < 1e-6);
            CHECK(p.row(b).minCoeff() >= 0.0);
            CHECK(argmax(adj.row(b)) == argmax(l.row(b)));
        }
        test::Tape t;
        const auto tv = adjust_with_sas<double>(t.leaf(l), t.leaf(Matrix<double>(s)), lam).value();
        CHECK((tv - adj).cwiseAbs().maxCoeff() < 1e-12);
    }
}
