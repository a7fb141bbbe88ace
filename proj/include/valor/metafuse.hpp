#pragma once

#include "valor/layers.hpp"
#include "valor/schema.hpp"

#include <string>

namespace valor::metafuse {

using ad::Tape;
using ad::Var;

// Feature layout per task, in this order:
//   [ l_p (C) ; l_v (C) ; s ; H_bar ; R_avg ; dominance ; U_avg ]
inline constexpr int kScalarFeatures = 5;

inline int feature_dim(int classes)
{
    return 2 * classes + kScalarFeatures;
}

struct MetaConfig {
    int hidden1 = 64; // 768 at full scale
    int hidden2 = 32; // 384 at full scale
    double dropout = 0.1;
    double lambda_s = 0.1;
};

// Batch-level scalars (R_avg, dominance, U_avg) are replicated to every row.
template <typename S>
Matrix<S> build_meta_features(const Matrix<S>& lp, const Matrix<S>& lv, const Vector<S>& s, const Vector<S>& entropy,
                              S r_avg, S dominance, S u_avg)
{
    const Eigen::Index b = lp.rows(), c = lp.cols();
    if (lv.rows() != b || lv.cols() != c || s.size() != b || entropy.size() != b)
        throw std::invalid_argument("build_meta_features: dimension mismatch");
    Matrix<S> f(b, feature_dim(static_cast<int>(c)));
    f.leftCols(c) = lp;
    f.middleCols(c, c) = lv;
    f.col(2 * c) = s;
    f.col(2 * c + 1) = entropy;
    f.col(2 * c + 2).setConstant(r_avg);
    f.col(2 * c + 3).setConstant(dominance);
    f.col(2 * c + 4).setConstant(u_avg);
    return f;
}

template <typename S>
Var<S> build_meta_features(Var<S> lp, Var<S> lv, Var<S> s, Var<S> entropy, Var<S> r_avg, Var<S> dominance, Var<S> u_avg)
{
    const Eigen::Index b = lp.rows();
    if (lv.rows() != b || lv.cols() != lp.cols() || s.rows() != b || entropy.rows() != b || s.cols() != 1 ||
        entropy.cols() != 1)
        throw std::invalid_argument("build_meta_features: dimension mismatch");
    return ad::concat_cols<S>({lp, lv, s, entropy, ad::broadcast_rows(r_avg, b), ad::broadcast_rows(dominance, b),
                               ad::broadcast_rows(u_avg, b)});
}

template <typename S>
void register_meta(ParamStore<S>& ps, const MetaConfig& cfg, Task task, Rng& rng)
{
    const std::string n = "meta." + std::string(task_name(task));
    const int c = class_count(task);
    layers::register_linear(ps, n + ".fc1", feature_dim(c), cfg.hidden1, rng);
    layers::register_linear(ps, n + ".fc2", cfg.hidden1, cfg.hidden2, rng);
    layers::register_linear(ps, n + ".fc3", cfg.hidden2, c, rng);
}

// Inverted dropout: kept units are scaled by 1 / (1 - p).
template <typename S>
Var<S> dropout(Var<S> x, double p, Rng* rng, Mode mode)
{
    if (mode != Mode::Train || p <= 0.0)
        return x;
    if (!rng)
        throw std::invalid_argument("dropout: train mode needs an rng");
    Matrix<S> mask(x.rows(), x.cols());
    const S keep_scale = S(1.0 / (1.0 - p));
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index r = 0; r < mask.rows(); ++r)
            mask(r, c) = uniform01(*rng) < p ? S(0) : keep_scale;
    return ad::cmul_const(x, mask);
}

// Three-layer ReLU MLP over the meta features, dropout after each hidden layer.
template <typename S>
Var<S> meta_fuse(Tape<S>& t, ParamStore<S>& ps, const MetaConfig& cfg, Task task, Var<S> features, Rng* rng, Mode mode)
{
    const std::string n = "meta." + std::string(task_name(task));
    Var<S> h = dropout(ad::relu(layers::linear(t, ps, n + ".fc1", features)), cfg.dropout, rng, mode);
    h = dropout(ad::relu(layers::linear(t, ps, n + ".fc2", h)), cfg.dropout, rng, mode);
    return layers::linear(t, ps, n + ".fc3", h);
}

// l_final = l_f + lambda_s * s * 1 (the same shift on every class).
template <typename S>
Matrix<S> adjust_with_sas(const Matrix<S>& lf, const Vector<S>& s, S lambda_s)
{
    if (s.size() != lf.rows())
        throw std::invalid_argument("adjust_with_sas: batch mismatch");
    return lf.colwise() + (lambda_s * s);
}

template <typename S>
Var<S> adjust_with_sas(Var<S> lf, Var<S> s, S lambda_s)
{
    Var<S> shift = ad::scale(s, lambda_s); // B x 1
    return ad::add(lf, ad::matmul(shift, lf.tape()->constant(Matrix<S>::Ones(1, lf.cols()))));
}

template <typename S>
Matrix<S> predict(const Matrix<S>& logits)
{
    return softmax_rows(logits);
}

} // namespace valor::metafuse
