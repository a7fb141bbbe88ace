#pragma once

// Helpers shared by the unit tests.

#include "valor/autodiff.hpp"
#include "valor/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace test {

using valor::Matrix;
using Tape = valor::ad::Tape<double>;
using Var = valor::ad::Var<double>;

inline Matrix<double> randm(Eigen::Index r, Eigen::Index c, valor::Rng& rng, double sd = 1.0)
{
    Matrix<double> m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i)
            m(i, j) = valor::normal(rng, 0.0, sd);
    return m;
}

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Max over every input entry of |analytic - numeric| / max(|a|, |n|, 1e-3),
// central differences with step h.
inline double fd_max_error(std::vector<Matrix<double>> inputs, const ScalarFn& f, double h = 1e-5)
{
    std::vector<Matrix<double>> grads;
    {
        Tape t;
        std::vector<Var> leaves;
        for (const auto& m : inputs)
            leaves.push_back(t.leaf(m));
        Var out = f(t, leaves);
        t.backward(out);
        for (const auto& l : leaves)
            grads.push_back(t.grad(l.id()));
    }
    auto eval = [&] {
        Tape t;
        std::vector<Var> leaves;
        for (const auto& m : inputs)
            leaves.push_back(t.leaf(m));
        return f(t, leaves).item();
    };
    double worst = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k)
        for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
            double& x = inputs[k].data()[i];
            const double saved = x;
            x = saved + h;
            const double up = eval();
            x = saved - h;
            const double down = eval();
            x = saved;
            const double num = (up - down) / (2 * h);
            const double a = grads[k].data()[i];
            worst = std::max(worst, std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-3}));
        }
    return worst;
}

// Reduces a matrix to a scalar with fixed random weights.
inline Var project(Var v, std::uint64_t seed = 1)
{
    valor::Rng rng(seed);
    return valor::ad::sum_all(valor::ad::cmul_const(v, randm(v.rows(), v.cols(), rng)));
}

inline std::filesystem::path fresh_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("valor_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace test
