#pragma once

#include "valor/rng.hpp"
#include "valor/tensor.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace valor {

template <typename Scalar>
struct Param {
    std::string name;
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    bool trainable = true;
};

// Named parameter tensors in registration order. Registration order is the
// checkpoint order, so it must not depend on hash iteration.
template <typename Scalar>
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore& other) { *this = other; }
    ParamStore& operator=(const ParamStore& other)
    {
        if (this == &other)
            return *this;
        params_ = other.params_;
        reindex();
        return *this;
    }
    ParamStore(ParamStore&& other) noexcept { *this = std::move(other); }
    ParamStore& operator=(ParamStore&& other) noexcept
    {
        params_ = std::move(other.params_);
        reindex();
        return *this;
    }

    Param<Scalar>& add(const std::string& name, Matrix<Scalar> value)
    {
        if (index_.count(name))
            throw std::invalid_argument("duplicate parameter: " + name);
        index_[name] = params_.size();
        Param<Scalar>& p = params_.emplace_back();
        p.name = name;
        p.grad = Matrix<Scalar>::Zero(value.rows(), value.cols());
        p.value = std::move(value);
        return p;
    }

    // Gaussian init with the given standard deviation.
    Param<Scalar>& add_normal(const std::string& name, Eigen::Index rows, Eigen::Index cols, double sd, Rng& rng)
    {
        Matrix<Scalar> m(rows, cols);
        for (Eigen::Index c = 0; c < cols; ++c)
            for (Eigen::Index r = 0; r < rows; ++r)
                m(r, c) = static_cast<Scalar>(normal(rng, 0.0, sd));
        return add(name, std::move(m));
    }

    Param<Scalar>& add_constant(const std::string& name, Eigen::Index rows, Eigen::Index cols, Scalar v)
    {
        return add(name, Matrix<Scalar>::Constant(rows, cols, v));
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Param<Scalar>& at(const std::string& name)
    {
        auto it = index_.find(name);
        if (it == index_.end())
            throw std::out_of_range("unknown parameter: " + name);
        return params_[it->second];
    }
    const Param<Scalar>& at(const std::string& name) const
    {
        auto it = index_.find(name);
        if (it == index_.end())
            throw std::out_of_range("unknown parameter: " + name);
        return params_[it->second];
    }

    std::deque<Param<Scalar>>& all() { return params_; }
    const std::deque<Param<Scalar>>& all() const { return params_; }
    std::size_t size() const { return params_.size(); }

    void zero_grad()
    {
        for (auto& p : params_)
            p.grad.setZero();
    }

    // Throws with the parameter name when any value is NaN or infinite.
    void check_finite() const
    {
        for (const auto& p : params_)
            if (!p.value.allFinite())
                throw NonFiniteError("parameter " + p.name);
    }

    Eigen::Index count() const
    {
        Eigen::Index n = 0;
        for (const auto& p : params_)
            n += p.value.size();
        return n;
    }

    template <typename Other>
    ParamStore<Other> cast() const
    {
        ParamStore<Other> out;
        for (const auto& p : params_) {
            auto& q = out.add(p.name, p.value.template cast<Other>());
            q.trainable = p.trainable;
        }
        return out;
    }

private:
    void reindex()
    {
        index_.clear();
        for (std::size_t i = 0; i < params_.size(); ++i)
            index_[params_[i].name] = i;
    }

    // deque keeps references stable across add().
    std::deque<Param<Scalar>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace valor
