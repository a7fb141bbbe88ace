#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace valor {

// Train mode enables router noise, dropout and augmentation.
enum class Mode { Train, Eval };

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

// Raised when a metric is mathematically undefined for its input
// (zero norm, zero variance, degenerate agreement).
class UndefinedMetric : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Raised when a numeric value that must be finite is not.
class NonFiniteError : public std::runtime_error {
public:
    explicit NonFiniteError(std::string component)
        : std::runtime_error("non-finite value in " + component), component_(std::move(component)) {}
    const std::string& component() const { return component_; }

private:
    std::string component_;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m)
{
    return m.allFinite();
}

// Numerically stable row-wise softmax.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits)
{
    using Scalar = typename Derived::Scalar;
    Matrix<Scalar> out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const Scalar mx = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - mx).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits)
{
    using Scalar = typename Derived::Scalar;
    const Scalar mx = logits.maxCoeff();
    Vector<Scalar> out = (logits.array() - mx).exp().matrix();
    return out / out.sum();
}

template <typename Derived>
Vector<typename Derived::Scalar> log_softmax(const Eigen::MatrixBase<Derived>& logits)
{
    using Scalar = typename Derived::Scalar;
    const Scalar mx = logits.maxCoeff();
    const Scalar lse = mx + std::log((logits.array() - mx).exp().sum());
    return (logits.array() - lse).matrix();
}

// Index of the largest entry; ties resolve to the lowest index.
template <typename Derived>
Eigen::Index argmax(const Eigen::DenseBase<Derived>& v)
{
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v(i) > v(best))
            best = i;
    return best;
}

} // namespace valor
