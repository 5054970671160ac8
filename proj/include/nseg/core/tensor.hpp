#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "nseg/core/error.hpp"

namespace nseg {

// Dimensions of a dense row-major array. Image data uses N x H x W x C.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::int64_t> dims) : dims_(dims) { validate(); }
    explicit Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) { validate(); }

    std::size_t rank() const noexcept { return dims_.size(); }
    std::int64_t operator[](std::size_t axis) const { return dims_.at(axis); }
    const std::vector<std::int64_t>& dims() const noexcept { return dims_; }

    std::size_t numel() const noexcept {
        std::size_t n = 1;
        for (auto d : dims_) n *= static_cast<std::size_t>(d);
        return n;
    }

    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    void validate() const {
        for (auto d : dims_)
            if (d < 0) throw ShapeError("negative dimension in shape");
    }

    std::vector<std::int64_t> dims_;
};

// Dense value array. Gradients live with the graph node or Parameter that
// owns the value, not on the tensor itself.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_.numel())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_.str());
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // NHWC element access; only valid for rank-4 tensors.
    T& at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) { return data_[offset(n, h, w, c)]; }
    const T& at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) const {
        return data_[offset(n, h, w, c)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const noexcept {
        for (const T& v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

private:
    std::size_t offset(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) const {
        const auto& d = shape_.dims();
        return static_cast<std::size_t>(((n * d[1] + h) * d[2] + w) * d[3] + c);
    }

    Shape shape_;
    std::vector<T> data_;
};

// Checks that a tensor is N x H x W x C and returns the four extents.
struct Nhwc {
    std::int64_t n, h, w, c;
};

template <class T>
Nhwc nhwc_of(const Tensor<T>& t, const char* what) {
    if (t.shape().rank() != 4)
        throw ShapeError(std::string(what) + ": expected N x H x W x C tensor, got " + t.shape().str());
    const auto& d = t.shape().dims();
    return {d[0], d[1], d[2], d[3]};
}

}  // namespace nseg
