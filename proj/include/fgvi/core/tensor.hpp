#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "fgvi/core/error.hpp"

namespace fgvi::core {

using Dim = std::int64_t;
using Shape = std::vector<Dim>;

// Dense row-major N-d array of doubles. The buffer is shared between
// copies; reshape() aliases instead of copying. Ops that produce new
// tensors always allocate fresh buffers, so sharing is safe as long as
// callers treat received tensors as immutable (the autodiff layer does).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        buf_ = std::make_shared<std::vector<double>>(static_cast<size_t>(count(shape_)), 0.0);
        init_strides();
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        t.fill(v);
        return t;
    }

    static Tensor scalar(double v) { return full({1}, v); }

    static Tensor from(Shape shape, std::vector<double> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        if (count(t.shape_) != static_cast<Dim>(values.size()))
            throw ShapeError("from(): value count does not match shape");
        t.buf_ = std::make_shared<std::vector<double>>(std::move(values));
        t.init_strides();
        return t;
    }

    bool defined() const { return buf_ != nullptr; }
    const Shape& shape() const { return shape_; }
    Dim dim() const { return static_cast<Dim>(shape_.size()); }
    Dim size(Dim i) const { return shape_.at(static_cast<size_t>(i)); }
    Dim numel() const { return buf_ ? static_cast<Dim>(buf_->size()) : 0; }

    double* data() { return buf_->data(); }
    const double* data() const { return buf_->data(); }

    double& operator[](Dim i) { return (*buf_)[static_cast<size_t>(i)]; }
    double operator[](Dim i) const { return (*buf_)[static_cast<size_t>(i)]; }

    double& at(Dim i, Dim j) { return (*buf_)[static_cast<size_t>(i * st_[0] + j)]; }
    double at(Dim i, Dim j) const { return (*buf_)[static_cast<size_t>(i * st_[0] + j)]; }
    double& at(Dim i, Dim j, Dim k) {
        return (*buf_)[static_cast<size_t>(i * st_[0] + j * st_[1] + k)];
    }
    double at(Dim i, Dim j, Dim k) const {
        return (*buf_)[static_cast<size_t>(i * st_[0] + j * st_[1] + k)];
    }
    double& at(Dim i, Dim j, Dim k, Dim l) {
        return (*buf_)[static_cast<size_t>(i * st_[0] + j * st_[1] + k * st_[2] + l)];
    }
    double at(Dim i, Dim j, Dim k, Dim l) const {
        return (*buf_)[static_cast<size_t>(i * st_[0] + j * st_[1] + k * st_[2] + l)];
    }

    void fill(double v) { std::fill(buf_->begin(), buf_->end(), v); }

    // New tensor with the same buffer and a different shape (same numel).
    Tensor reshaped(Shape shape) const {
        if (count(shape) != numel()) throw ShapeError("reshaped(): numel mismatch");
        Tensor t;
        t.shape_ = std::move(shape);
        t.buf_ = buf_;
        t.init_strides();
        return t;
    }

    Tensor clone() const {
        if (!defined()) return Tensor();
        Tensor t;
        t.shape_ = shape_;
        t.buf_ = std::make_shared<std::vector<double>>(*buf_);
        t.st_ = st_;
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : *buf_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : *buf_) m = std::max(m, std::abs(v));
        return m;
    }

    static Dim count(const Shape& s) {
        Dim n = 1;
        for (Dim d : s) n *= d;
        return n;
    }

    static std::string shape_str(const Shape& s);

private:
    void init_strides() {
        // stride of dim i = product of dims i+1..end (row-major)
        st_.assign(shape_.size(), 1);
        for (size_t i = shape_.size(); i-- > 1;) st_[i - 1] = st_[i] * shape_[i];
    }

    Shape shape_;
    std::vector<Dim> st_;  // row-major strides, st_[i] for dim i
    std::shared_ptr<std::vector<double>> buf_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": " + Tensor::shape_str(a.shape()) + " vs " +
                         Tensor::shape_str(b.shape()));
}

}  // namespace fgvi::core
