#pragma once

// Matrix-level reverse-mode differentiation. Each op records its value and a
// pullback on a Tape; backward() walks the tape once in reverse order.

#include "valor/params.hpp"
#include "valor/tensor.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace valor::ad {

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
public:
    Var() = default;
    Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Matrix<Scalar>& value() const { return tape_->value(id_); }
    const Matrix<Scalar>& grad() const { return tape_->grad(id_); }
    Scalar item() const { return value()(0, 0); }
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    Tape<Scalar>* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape<Scalar>* tape_ = nullptr;
    std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
public:
    using Mat = Matrix<Scalar>;
    using Pullback = std::function<void(Tape&, const Mat&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<Scalar> constant(Mat value) { return push(std::move(value), false, nullptr); }

    // Differentiable input not backed by a parameter.
    Var<Scalar> leaf(Mat value) { return push(std::move(value), true, nullptr); }

    // Binds a parameter; the same Param always maps to the same node.
    Var<Scalar> param(Param<Scalar>& p)
    {
        auto it = bound_.find(&p);
        if (it != bound_.end())
            return Var<Scalar>(this, it->second);
        Var<Scalar> v = push(p.value, p.trainable, nullptr);
        bound_[&p] = v.id();
        bindings_.push_back({v.id(), &p});
        return v;
    }

    Var<Scalar> param(ParamStore<Scalar>& store, const std::string& name) { return param(store.at(name)); }

    // Records an op. The pullback receives the output gradient and must
    // route it to the op's inputs through accumulate().
    template <typename Derived>
    Var<Scalar> record(const Eigen::MatrixBase<Derived>& value, std::initializer_list<Var<Scalar>> inputs, Pullback pb)
    {
        bool needs = false;
        for (const auto& in : inputs)
            needs = needs || nodes_[in.id()].requires_grad;
        return push(Mat(value), needs, needs ? std::move(pb) : nullptr);
    }

    Var<Scalar> record_many(Mat value, const std::vector<Var<Scalar>>& inputs, Pullback pb)
    {
        bool needs = false;
        for (const auto& in : inputs)
            needs = needs || nodes_[in.id()].requires_grad;
        return push(std::move(value), needs, needs ? std::move(pb) : nullptr);
    }

    template <typename Derived>
    void accumulate(const Var<Scalar>& v, const Eigen::MatrixBase<Derived>& g)
    {
        Node& n = nodes_[v.id()];
        if (!n.requires_grad)
            return;
        if (n.grad.size() == 0)
            n.grad = Mat::Zero(n.value.rows(), n.value.cols());
        n.grad += g;
    }

    bool requires_grad(const Var<Scalar>& v) const { return nodes_[v.id()].requires_grad; }

    const Mat& value(std::size_t id) const { return nodes_[id].value; }

    const Mat& grad(std::size_t id)
    {
        Node& n = nodes_[id];
        if (n.grad.size() == 0)
            n.grad = Mat::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    // Seeds d(root)/d(root) = 1 for a 1x1 root, propagates, and adds each
    // bound parameter's gradient into Param::grad.
    void backward(const Var<Scalar>& root)
    {
        if (root.rows() != 1 || root.cols() != 1)
            throw std::invalid_argument("backward() needs a scalar root");
        for (auto& n : nodes_)
            n.grad.resize(0, 0);
        accumulate(root, Mat::Ones(1, 1));
        for (std::size_t i = root.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.pullback || n.grad.size() == 0)
                continue;
            n.pullback(*this, n.grad);
        }
        for (const auto& [id, p] : bindings_)
            if (p->trainable && nodes_[id].grad.size() != 0)
                p->grad += nodes_[id].grad;
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        Pullback pullback;
    };

    Var<Scalar> push(Mat value, bool requires_grad, Pullback pb)
    {
        nodes_.push_back(Node{std::move(value), Mat(), requires_grad, std::move(pb)});
        return Var<Scalar>(this, nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::unordered_map<const Param<Scalar>*, std::size_t> bound_;
    std::vector<std::pair<std::size_t, Param<Scalar>*>> bindings_;
};

// ---------------------------------------------------------------------------
// Linear algebra and elementwise arithmetic

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b)
{
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: shape mismatch");
    Tape<S>& t = *a.tape();
    return t.record(a.value() * b.value(), {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
        if (t.requires_grad(a))
            t.accumulate(a, g * b.value().transpose());
        if (t.requires_grad(b))
            t.accumulate(b, a.value().transpose() * g);
    });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("add: shape mismatch");
    Tape<S>& t = *a.tape();
    return t.record(a.value() + b.value(), {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("sub: shape mismatch");
    Tape<S>& t = *a.tape();
    return t.record(a.value() - b.value(), {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

template <typename S>
Var<S> operator+(Var<S> a, Var<S> b) { return add(a, b); }
template <typename S>
Var<S> operator-(Var<S> a, Var<S> b) { return sub(a, b); }

template <typename S>
Var<S> cmul(Var<S> a, Var<S> b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("cmul: shape mismatch");
    Tape<S>& t = *a.tape();
    return t.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
        t.accumulate(a, g.cwiseProduct(b.value()));
        t.accumulate(b, g.cwiseProduct(a.value()));
    });
}

template <typename S>
Var<S> cdiv(Var<S> a, Var<S> b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("cdiv: shape mismatch");
    Tape<S>& t = *a.tape();
    return t.record(a.value().cwiseQuotient(b.value()), {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
        const auto& bv = b.value();
        t.accumulate(a, g.cwiseQuotient(bv));
        t.accumulate(b, (-g.array() * a.value().array() / (bv.array() * bv.array())).matrix());
    });
}

// Elementwise product with a fixed matrix (dropout masks, selections).
template <typename S>
Var<S> cmul_const(Var<S> a, const Matrix<S>& m)
{
    if (a.rows() != m.rows() || a.cols() != m.cols())
        throw std::invalid_argument("cmul_const: shape mismatch");
    Tape<S>& t = *a.tape();
    return t.record(a.value().cwiseProduct(m), {a}, [a, m](Tape<S>& t, const Matrix<S>& g) {
        t.accumulate(a, g.cwiseProduct(m));
    });
}

template <typename S>
Var<S> add_const(Var<S> a, const Matrix<S>& m)
{
    if (a.rows() != m.rows() || a.cols() != m.cols())
        throw std::invalid_argument("add_const: shape mismatch");
    Tape<S>& t = *a.tape();
    return t.record(a.value() + m, {a}, [a](Tape<S>& t, const Matrix<S>& g) { t.accumulate(a, g); });
}

template <typename S>
Var<S> scale(Var<S> a, S c)
{
    Tape<S>& t = *a.tape();
    return t.record(a.value() * c, {a}, [a, c](Tape<S>& t, const Matrix<S>& g) { t.accumulate(a, g * c); });
}

template <typename S>
Var<S> shift(Var<S> a, S c)
{
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().array() + c;
    return t.record(v, {a}, [a](Tape<S>& t, const Matrix<S>& g) { t.accumulate(a, g); });
}

// a + b where b is 1 x cols, added to every row.
template <typename S>
Var<S> add_rowvec(Var<S> a, Var<S> b)
{
    if (b.rows() != 1 || b.cols() != a.cols())
        throw std::invalid_argument("add_rowvec: shape mismatch");
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().rowwise() + b.value().row(0);
    return t.record(v, {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
        t.accumulate(a, g);
        if (t.requires_grad(b))
            t.accumulate(b, g.colwise().sum());
    });
}

// a * b where b is 1 x cols, scaling every row elementwise.
template <typename S>
Var<S> mul_rowvec(Var<S> a, Var<S> b)
{
    if (b.rows() != 1 || b.cols() != a.cols())
        throw std::invalid_argument("mul_rowvec: shape mismatch");
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().array().rowwise() * b.value().row(0).array();
    return t.record(v, {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
        if (t.requires_grad(a))
            t.accumulate(a, (g.array().rowwise() * b.value().row(0).array()).matrix());
        if (t.requires_grad(b))
            t.accumulate(b, g.cwiseProduct(a.value()).colwise().sum());
    });
}

// a * w where w is rows x 1, scaling each row by its own weight.
template <typename S>
Var<S> mul_rows(Var<S> a, Var<S> w)
{
    if (w.cols() != 1 || w.rows() != a.rows())
        throw std::invalid_argument("mul_rows: shape mismatch");
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().array().colwise() * w.value().col(0).array();
    return t.record(v, {a, w}, [a, w](Tape<S>& t, const Matrix<S>& g) {
        if (t.requires_grad(a))
            t.accumulate(a, (g.array().colwise() * w.value().col(0).array()).matrix());
        if (t.requires_grad(w))
            t.accumulate(w, g.cwiseProduct(a.value()).rowwise().sum());
    });
}

// a + s for a 1x1 variable s.
template <typename S>
Var<S> add_scalar(Var<S> a, Var<S> s)
{
    if (s.rows() != 1 || s.cols() != 1)
        throw std::invalid_argument("add_scalar: s must be 1x1");
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().array() + s.item();
    return t.record(v, {a, s}, [a, s](Tape<S>& t, const Matrix<S>& g) {
        t.accumulate(a, g);
        if (t.requires_grad(s))
            t.accumulate(s, Matrix<S>::Constant(1, 1, g.sum()));
    });
}

// a * s for a 1x1 variable s.
template <typename S>
Var<S> mul_scalar(Var<S> a, Var<S> s)
{
    if (s.rows() != 1 || s.cols() != 1)
        throw std::invalid_argument("mul_scalar: s must be 1x1");
    Tape<S>& t = *a.tape();
    return t.record(a.value() * s.item(), {a, s}, [a, s](Tape<S>& t, const Matrix<S>& g) {
        if (t.requires_grad(a))
            t.accumulate(a, g * s.item());
        if (t.requires_grad(s))
            t.accumulate(s, Matrix<S>::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
    });
}

// Tiles a 1x1 or 1 x n variable to rows x n.
template <typename S>
Var<S> broadcast_rows(Var<S> a, Eigen::Index rows)
{
    if (a.rows() != 1)
        throw std::invalid_argument("broadcast_rows: input must have one row");
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().replicate(rows, 1);
    return t.record(v, {a}, [a](Tape<S>& t, const Matrix<S>& g) { t.accumulate(a, g.colwise().sum()); });
}

template <typename S>
Var<S> transpose(Var<S> a)
{
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().transpose();
    return t.record(v, {a}, [a](Tape<S>& t, const Matrix<S>& g) { t.accumulate(a, g.transpose()); });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename S>
Var<S> sum_all(Var<S> a)
{
    Tape<S>& t = *a.tape();
    Matrix<S> v = Matrix<S>::Constant(1, 1, a.value().sum());
    return t.record(v, {a}, [a](Tape<S>& t, const Matrix<S>& g) {
        t.accumulate(a, Matrix<S>::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

template <typename S>
Var<S> mean_all(Var<S> a)
{
    return scale(sum_all(a), S(1) / static_cast<S>(a.value().size()));
}

// rows x 1 sums over columns.
template <typename S>
Var<S> row_sum(Var<S> a)
{
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().rowwise().sum();
    return t.record(v, {a}, [a](Tape<S>& t, const Matrix<S>& g) {
        t.accumulate(a, g.col(0).replicate(1, a.cols()));
    });
}

// 1 x cols weighted mean of rows; weights are fixed (e.g. a padding mask).
template <typename S>
Var<S> weighted_mean_rows(Var<S> a, const Vector<S>& weights)
{
    if (weights.size() != a.rows())
        throw std::invalid_argument("weighted_mean_rows: weight count mismatch");
    const S total = weights.sum();
    if (!(total > S(0)))
        throw std::invalid_argument("weighted_mean_rows: weights sum to zero");
    Vector<S> w = weights / total;
    Tape<S>& t = *a.tape();
    Matrix<S> v = w.transpose() * a.value();
    return t.record(v, {a}, [a, w](Tape<S>& t, const Matrix<S>& g) { t.accumulate(a, w * g); });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

template <typename S>
Var<S> relu(Var<S> a)
{
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().cwiseMax(S(0));
    return t.record(v, {a}, [a](Tape<S>& t, const Matrix<S>& g) {
        t.accumulate(a, (a.value().array() > S(0)).select(g, S(0)).matrix());
    });
}

// Exact (erf) GELU.
template <typename S>
Var<S> gelu(Var<S> a)
{
    using std::erf;
    using std::exp;
    Tape<S>& t = *a.tape();
    const S inv_sqrt2 = S(1) / std::sqrt(S(2));
    Matrix<S> v = a.value().unaryExpr([inv_sqrt2](S x) { return S(0.5) * x * (S(1) + erf(x * inv_sqrt2)); });
    return t.record(v, {a}, [a, inv_sqrt2](Tape<S>& t, const Matrix<S>& g) {
        const S inv_sqrt2pi = S(1) / std::sqrt(S(2) * std::numbers::pi_v<S>);
        Matrix<S> d = a.value().unaryExpr([inv_sqrt2, inv_sqrt2pi](S x) {
            return S(0.5) * (S(1) + erf(x * inv_sqrt2)) + x * inv_sqrt2pi * exp(S(-0.5) * x * x);
        });
        t.accumulate(a, g.cwiseProduct(d));
    });
}

template <typename S>
Var<S> tanh(Var<S> a)
{
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().array().tanh();
    return t.record(v, {a}, [a, v](Tape<S>& t, const Matrix<S>& g) {
        t.accumulate(a, (g.array() * (S(1) - v.array().square())).matrix());
    });
}

template <typename S>
Var<S> sqrt(Var<S> a)
{
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().array().sqrt();
    return t.record(v, {a}, [a, v](Tape<S>& t, const Matrix<S>& g) {
        t.accumulate(a, (g.array() / (S(2) * v.array())).matrix());
    });
}

template <typename S>
Var<S> log(Var<S> a)
{
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().array().log();
    return t.record(v, {a}, [a](Tape<S>& t, const Matrix<S>& g) { t.accumulate(a, g.cwiseQuotient(a.value())); });
}

// Numerically stable log(1 + exp(x)).
template <typename S>
Var<S> softplus(Var<S> a)
{
    using std::exp;
    using std::log1p;
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().unaryExpr([](S x) { return std::max(x, S(0)) + log1p(exp(-std::abs(x))); });
    return t.record(v, {a}, [a](Tape<S>& t, const Matrix<S>& g) {
        Matrix<S> sig = a.value().unaryExpr([](S x) { return S(1) / (S(1) + exp(-x)); });
        t.accumulate(a, g.cwiseProduct(sig));
    });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

// Softmax over each row. key_mask, if non-empty, marks the valid columns;
// invalid columns receive exactly zero probability.
template <typename S>
Var<S> softmax_rows(Var<S> a, const std::vector<char>& key_mask = {})
{
    const Matrix<S>& x = a.value();
    if (!key_mask.empty() && static_cast<Eigen::Index>(key_mask.size()) != x.cols())
        throw std::invalid_argument("softmax_rows: mask width mismatch");
    Matrix<S> y = Matrix<S>::Zero(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        S mx = -std::numeric_limits<S>::infinity();
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            if (key_mask.empty() || key_mask[c])
                mx = std::max(mx, x(r, c));
        if (!std::isfinite(static_cast<double>(mx)))
            throw std::invalid_argument("softmax_rows: no valid column");
        S z = 0;
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            if (key_mask.empty() || key_mask[c]) {
                y(r, c) = std::exp(x(r, c) - mx);
                z += y(r, c);
            }
        y.row(r) /= z;
    }
    Tape<S>& t = *a.tape();
    return t.record(y, {a}, [a, y](Tape<S>& t, const Matrix<S>& g) {
        Vector<S> dot = g.cwiseProduct(y).rowwise().sum();
        t.accumulate(a, (y.array() * (g.colwise() - dot).array()).matrix());
    });
}

template <typename S>
Var<S> log_softmax_rows(Var<S> a)
{
    const Matrix<S>& x = a.value();
    Matrix<S> y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const S mx = x.row(r).maxCoeff();
        const S lse = mx + std::log((x.row(r).array() - mx).exp().sum());
        y.row(r) = x.row(r).array() - lse;
    }
    Tape<S>& t = *a.tape();
    return t.record(y, {a}, [a, y](Tape<S>& t, const Matrix<S>& g) {
        Matrix<S> p = y.array().exp();
        Vector<S> gs = g.rowwise().sum();
        t.accumulate(a, g - (p.array().colwise() * gs.array()).matrix());
    });
}

// Per-row layer normalization with learned gain and bias (1 x cols each).
template <typename S>
Var<S> layer_norm_rows(Var<S> a, Var<S> gain, Var<S> bias, S eps = S(1e-5))
{
    const Matrix<S>& x = a.value();
    const Eigen::Index n = x.cols();
    if (gain.cols() != n || bias.cols() != n || gain.rows() != 1 || bias.rows() != 1)
        throw std::invalid_argument("layer_norm_rows: parameter shape mismatch");
    Matrix<S> xhat(x.rows(), n);
    Vector<S> inv(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const S mu = x.row(r).mean();
        const S var = (x.row(r).array() - mu).square().mean();
        inv(r) = S(1) / std::sqrt(var + eps);
        xhat.row(r) = (x.row(r).array() - mu) * inv(r);
    }
    Matrix<S> y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
    Tape<S>& t = *a.tape();
    return t.record_many(std::move(y), {a, gain, bias}, [a, gain, bias, xhat, inv](Tape<S>& t, const Matrix<S>& g) {
        if (t.requires_grad(gain))
            t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(bias))
            t.accumulate(bias, g.colwise().sum());
        if (t.requires_grad(a)) {
            Matrix<S> dxhat = g.array().rowwise() * gain.value().row(0).array();
            Matrix<S> dx(dxhat.rows(), dxhat.cols());
            for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                const S m1 = dxhat.row(r).mean();
                const S m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                dx.row(r) = inv(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
            }
            t.accumulate(a, dx);
        }
    });
}

// ---------------------------------------------------------------------------
// Structural ops

template <typename S>
Var<S> slice_cols(Var<S> a, Eigen::Index start, Eigen::Index n)
{
    if (start < 0 || start + n > a.cols())
        throw std::invalid_argument("slice_cols: out of range");
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().middleCols(start, n);
    return t.record(v, {a}, [a, start, n](Tape<S>& t, const Matrix<S>& g) {
        Matrix<S> full = Matrix<S>::Zero(a.rows(), a.cols());
        full.middleCols(start, n) = g;
        t.accumulate(a, full);
    });
}

template <typename S>
Var<S> slice_rows(Var<S> a, Eigen::Index start, Eigen::Index n)
{
    if (start < 0 || start + n > a.rows())
        throw std::invalid_argument("slice_rows: out of range");
    Tape<S>& t = *a.tape();
    Matrix<S> v = a.value().middleRows(start, n);
    return t.record(v, {a}, [a, start, n](Tape<S>& t, const Matrix<S>& g) {
        Matrix<S> full = Matrix<S>::Zero(a.rows(), a.cols());
        full.middleRows(start, n) = g;
        t.accumulate(a, full);
    });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts)
{
    if (parts.empty())
        throw std::invalid_argument("concat_cols: no inputs");
    const Eigen::Index rows = parts[0].rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows)
            throw std::invalid_argument("concat_cols: row mismatch");
        cols += p.cols();
    }
    Matrix<S> v(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    Tape<S>& t = *parts[0].tape();
    return t.record_many(std::move(v), parts, [parts](Tape<S>& t, const Matrix<S>& g) {
        Eigen::Index at = 0;
        for (const auto& p : parts) {
            if (t.requires_grad(p))
                t.accumulate(p, g.middleCols(at, p.cols()));
            at += p.cols();
        }
    });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts)
{
    if (parts.empty())
        throw std::invalid_argument("concat_rows: no inputs");
    const Eigen::Index cols = parts[0].cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols)
            throw std::invalid_argument("concat_rows: column mismatch");
        rows += p.rows();
    }
    Matrix<S> v(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    Tape<S>& t = *parts[0].tape();
    return t.record_many(std::move(v), parts, [parts](Tape<S>& t, const Matrix<S>& g) {
        Eigen::Index at = 0;
        for (const auto& p : parts) {
            if (t.requires_grad(p))
                t.accumulate(p, g.middleRows(at, p.rows()));
            at += p.rows();
        }
    });
}

// Row i of the output is row ids[i] of table.
template <typename S>
Var<S> gather_rows(Var<S> table, const std::vector<int>& ids)
{
    Matrix<S> v(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table.rows())
            throw std::out_of_range("gather_rows: id out of range");
        v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
    }
    Tape<S>& t = *table.tape();
    return t.record(v, {table}, [table, ids](Tape<S>& t, const Matrix<S>& g) {
        Matrix<S> full = Matrix<S>::Zero(table.rows(), table.cols());
        for (std::size_t i = 0; i < ids.size(); ++i)
            full.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
        t.accumulate(table, full);
    });
}

// ---------------------------------------------------------------------------
// Small compositions

// x W + b with b as 1 x out.
template <typename S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> b)
{
    return add_rowvec(matmul(x, w), b);
}

template <typename S>
Var<S> hinge(Var<S> a)
{
    return relu(a);
}

} // namespace valor::ad
