#include "support.hpp"

#include "valor/evalkit.hpp"
#include "valor/schema.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace valor;
using namespace valor::evalkit;

namespace {

std::vector<int> ints(std::initializer_list<int> v)
{
    return v;
}

// Straight per-class counting, no confusion matrix.
double loop_macro_f1(const std::vector<int>& p, const std::vector<int>& g, int classes)
{
    double total = 0;
    for (int c = 0; c < classes; ++c) {
        int tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            tp += p[i] == c && g[i] == c;
            fp += p[i] == c && g[i] != c;
            fn += p[i] != c && g[i] == c;
        }
        total += tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
    }
    return total / classes;
}

} // namespace

TEST_CASE("confusion matrix examples")
{
    const auto g = ints({0, 1, 2, 3, 1});
    const auto perfect = confusion_matrix(g, g, 4);
    CHECK(perfect.isDiagonal());
    CHECK(perfect(1, 1) == 2);
    CHECK(confusion_matrix({}, {}, 4).isZero());
    const auto one = confusion_matrix(ints({0}), ints({2}), 4);
    CHECK(one(2, 0) == 1);
    CHECK(one.sum() == 1);
    CHECK_THROWS_AS(confusion_matrix(ints({4}), ints({0}), 4), std::out_of_range);
    CHECK_THROWS_AS(confusion_matrix(ints({0}), ints({-1}), 4), std::out_of_range);
}

TEST_CASE("task report examples")
{
    const auto g = ints({0, 1, 2, 3, 4, 5, 0});
    const auto r = task_report(g, g, 6);
    CHECK(r.accuracy == 1.0);
    CHECK(r.macro_f1 == 1.0);

    const auto constant = task_report(ints({0, 0, 0, 0}), ints({0, 0, 1, 1}), 2);
    CHECK(constant.accuracy == 0.5);
    CHECK(constant.macro_f1 == doctest::Approx(1.0 / 3.0));
    CHECK(constant.precision[1] == 0.0); // 0/0
    CHECK(constant.recall[0] == 1.0);

    for (int p = 0; p < 3; ++p)
        for (int gg = 0; gg < 3; ++gg) {
            const auto single = task_report(ints({p}), ints({gg}), 3);
            CHECK((single.accuracy == 0.0 || single.accuracy == 1.0));
        }
    CHECK_THROWS_AS(task_report({}, {}, 3), std::invalid_argument);
}

TEST_CASE("report properties on random predictions")
{
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const int classes = 2 + trial % 5;
        const int n = 1 + static_cast<int>(rng() % 60);
        std::vector<int> p(static_cast<std::size_t>(n)), g(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            g[i] = static_cast<int>(rng() % static_cast<unsigned>(classes));
            p[i] = uniform01(rng) < 0.5 ? g[i] : static_cast<int>(rng() % static_cast<unsigned>(classes));
        }
        const auto r = task_report(p, g, classes);
        CHECK(r.count == n);
        CHECK(r.accuracy == doctest::Approx(static_cast<double>(r.confusion.trace()) / n));
        for (int c = 0; c < classes; ++c)
            CHECK(r.confusion.row(c).sum() == std::count(g.begin(), g.end(), c));
        CHECK(r.macro_f1 == doctest::Approx(loop_macro_f1(p, g, classes)).epsilon(1e-12));
        const auto again = report_from_confusion(r.confusion);
        CHECK(again.macro_f1 == r.macro_f1);

        // Relabeling invariance.
        std::vector<int> perm(static_cast<std::size_t>(classes));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<int> pp, gp;
        for (std::size_t i = 0; i < p.size(); ++i) {
            pp.push_back(perm[static_cast<std::size_t>(p[i])]);
            gp.push_back(perm[static_cast<std::size_t>(g[i])]);
        }
        const auto relabeled = task_report(pp, gp, classes);
        CHECK(relabeled.macro_f1 == doctest::Approx(r.macro_f1).epsilon(1e-12));
        CHECK(relabeled.accuracy == r.accuracy);
    }
}

TEST_CASE("multi-label report")
{
    Eigen::MatrixXi g(3, 3), p(3, 3);
    g << 1, 0, 1, 0, 1, 0, 1, 1, 0;
    p << 1, 0, 1, 0, 1, 1, 1, 0, 0;
    const auto r = multilabel_report(p, g);
    CHECK(r.count == 3);
    CHECK(r.subset_accuracy == doctest::Approx(1.0 / 3.0));
    CHECK(r.f1[0] == doctest::Approx(1.0));
    CHECK(r.f1[1] == doctest::Approx(2.0 / 3.0)); // tp 1, fn 1
    CHECK(r.f1[2] == doctest::Approx(2.0 / 3.0)); // tp 1, fp 1
    CHECK(r.macro_f1 == doctest::Approx((1.0 + 4.0 / 3.0) / 3.0));
}

TEST_CASE("expert similarity examples and properties")
{
    Rng rng(2);
    const Eigen::MatrixXd w = test::randm(4, 3, rng);
    const auto same = expert_similarity({w, w, w});
    CHECK((same.array() - 1.0).abs().maxCoeff() < 1e-12);
    const auto neg = expert_similarity({w, Eigen::MatrixXd(-w)});
    CHECK(neg(0, 1) == doctest::Approx(-1.0));
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2), b = Eigen::MatrixXd::Zero(2, 2);
    a(0, 0) = 1;
    b(1, 1) = 2;
    CHECK(expert_similarity({a, b})(0, 1) == 0.0);
    CHECK_THROWS_AS(expert_similarity({a, Eigen::MatrixXd::Zero(2, 2)}), UndefinedMetric);
    CHECK_THROWS_AS(expert_similarity({a, Eigen::MatrixXd::Ones(3, 2)}), std::invalid_argument);

    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Eigen::MatrixXd> ws;
        for (int k = 0; k < 4; ++k)
            ws.push_back(test::randm(5, 3, rng));
        const auto s = expert_similarity(ws);
        CHECK(s.rows() == 4);
        CHECK((s - s.transpose()).cwiseAbs().maxCoeff() == 0.0);
        for (int k = 0; k < 4; ++k)
            CHECK(s(k, k) == doctest::Approx(1.0));
        CHECK(s.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    }
}

TEST_CASE("expert weight selection")
{
    ParamStore<double> ps;
    for (int k = 0; k < 2; ++k) {
        const std::string n = "expert" + std::to_string(k);
        ps.add(n + ".alpha", Matrix<double>::Constant(1, 3, 1.0 + k));
        ps.add(n + ".in.w", Matrix<double>::Constant(3, 4, 2.0));
        ps.add(n + ".out_aspect.w", Matrix<double>::Constant(4, 6, 1.0));
        ps.add(n + ".out_severity.w", Matrix<double>::Constant(4, 4, -1.0));
    }
    CHECK(expert_weights(ps, 2, ExpertMatrix::Alpha)[1](0, 0) == 2.0);
    CHECK(expert_weights(ps, 2, ExpertMatrix::WIn)[0].cols() == 4);
    const auto out = expert_weights(ps, 2, ExpertMatrix::WOut);
    CHECK(out[0].cols() == 10);
    CHECK(out[0](0, 9) == -1.0);
    CHECK(parse_expert_matrix("w_in") == ExpertMatrix::WIn);
    CHECK(parse_expert_matrix("alpha") == ExpertMatrix::Alpha);
    CHECK(std::string(expert_matrix_name(ExpertMatrix::WOut)) == "w_out");
    CHECK_THROWS(parse_expert_matrix("bogus"));
}

TEST_CASE("json and csv output")
{
    const auto r = task_report(ints({0, 1, 1}), ints({0, 1, 0}), 2);
    const auto j = to_json(r, {"a", "b"});
    CHECK(j.at("accuracy").get<double>() == doctest::Approx(2.0 / 3.0));
    CHECK(j.contains("macro_f1"));
    const auto csv = confusion_csv(r.confusion, {"a", "b"});
    CHECK(csv.find("a,b") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    const auto sim = similarity_csv(Eigen::MatrixXd::Identity(2, 2));
    CHECK(std::count(sim.begin(), sim.end(), '\n') >= 2);
}
