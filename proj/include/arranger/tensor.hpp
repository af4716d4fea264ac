#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <span>

#include "arranger/common.hpp"

namespace arranger {

namespace detail {

/// Allocator that default-initializes (skips the zero fill) on resize.
/// Hot kernels overwrite every element of their outputs anyway.
template <class T, class A = std::allocator<T>>
class default_init_allocator : public A {
    using traits = std::allocator_traits<A>;

public:
    template <class U>
    struct rebind {
        using other = default_init_allocator<U, typename traits::template rebind_alloc<U>>;
    };
    using A::A;

    template <class U>
    void construct(U* ptr) noexcept(std::is_nothrow_default_constructible_v<U>) {
        ::new (static_cast<void*>(ptr)) U;
    }
    template <class U, class... Args>
    void construct(U* ptr, Args&&... args) {
        traits::construct(static_cast<A&>(*this), ptr, std::forward<Args>(args)...);
    }
};

}  // namespace detail

/// Dense n-dimensional array, row-major. `Scalar` is float for training and
/// double where finite-difference accuracy matters.
template <class Scalar>
class Tensor {
public:
    using Buffer = std::vector<Scalar, detail::default_init_allocator<Scalar>>;

    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        check_dims();
        data_.resize(static_cast<size_t>(arranger::numel(shape_)));
        std::fill(data_.begin(), data_.end(), Scalar(0));
    }

    Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)) {
        check_dims();
        if (static_cast<int64_t>(data.size()) != arranger::numel(shape_))
            throw ShapeError("Tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape_));
        data_.assign(data.begin(), data.end());
    }

    /// Contents are unspecified; the caller must write every element.
    static Tensor uninitialized(Shape shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.check_dims();
        t.data_.resize(static_cast<size_t>(arranger::numel(t.shape_)));
        return t;
    }

    static Tensor full(Shape shape, Scalar v) {
        Tensor t = uninitialized(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor scalar(Scalar v) { return Tensor(Shape{}, std::vector<Scalar>{v}); }

    static Tensor randn(Shape shape, Rng& rng, Scalar stddev = Scalar(1)) {
        Tensor t = uninitialized(std::move(shape));
        for (auto& x : t.data_) x = static_cast<Scalar>(rng.normal()) * stddev;
        return t;
    }

    const Shape& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t rank() const { return shape_.size(); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }
    Buffer& vec() { return data_; }
    const Buffer& vec() const { return data_; }

    Scalar& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    Scalar operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    /// Element access by multi-index (bounds unchecked beyond debug).
    template <class... Ix>
    Scalar& at(Ix... ix) {
        return data_[flat_index({static_cast<int64_t>(ix)...})];
    }
    template <class... Ix>
    Scalar at(Ix... ix) const {
        return data_[flat_index({static_cast<int64_t>(ix)...})];
    }

    Tensor reshaped(Shape s) const {
        if (arranger::numel(s) != numel())
            throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(s));
        Tensor t;
        t.shape_ = std::move(s);
        t.data_ = data_;
        return t;
    }

    bool all_finite() const {
        for (Scalar v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    /// Throws NumericError if any value is NaN or infinite.
    void validate_finite(const std::string& what = "tensor") const {
        if (!all_finite()) throw NumericError(what + ": non-finite value");
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out = Tensor<U>::uninitialized(shape_);
        for (size_t i = 0; i < data_.size(); ++i)
            out[static_cast<int64_t>(i)] = static_cast<U>(data_[i]);
        return out;
    }

private:
    size_t flat_index(std::initializer_list<int64_t> ix) const {
        int64_t flat = 0;
        size_t k = 0;
        for (int64_t i : ix) {
            flat = flat * shape_[k] + i;
            ++k;
        }
        return static_cast<size_t>(flat);
    }

    void check_dims() const {
        for (int64_t d : shape_)
            if (d <= 0) throw ShapeError("Tensor: non-positive dimension in " + shape_str(shape_));
    }

    template <class U>
    friend class Tensor;

    Shape shape_;
    Buffer data_;
};

}  // namespace arranger
