#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "ssnas/common.hpp"

namespace ssnas {

/// Dense row-major double tensor. Shapes used throughout the project:
///   (B,C,H,W) feature maps, (B,T,D) token stacks, (R,C) matrices, (N) vectors.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != checked_numel(shape_))
            throw ContractError("Tensor: data size does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    /// Same data, new shape (element count must match).
    Tensor reshaped(std::vector<int> shape) const {
        if (checked_numel(shape) != numel())
            throw ContractError("Tensor: reshape changes element count");
        return Tensor(std::move(shape), data_);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    static std::int64_t checked_numel(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw ContractError("Tensor: nonpositive dimension");
            n *= d;
        }
        return n;
    }

    static std::string shape_str(const std::vector<int>& shape) {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < shape.size(); ++i)
            os << shape[i] << (i + 1 < shape.size() ? "," : "");
        os << ")";
        return os.str();
    }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

/// Integer mask / label plane, shape (B,H,W) or (H,W).
struct IntMask {
    std::vector<int> shape;
    std::vector<int> data;

    IntMask() = default;
    explicit IntMask(std::vector<int> s)
        : shape(std::move(s)), data(static_cast<std::size_t>(Tensor::checked_numel(shape)), 0) {}

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    int operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
};

} // namespace ssnas
