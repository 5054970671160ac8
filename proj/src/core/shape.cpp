#include <algorithm>
#include <string>

#include "nseg/core/ops.hpp"
#include "nseg/core/tensor.hpp"

namespace nseg {

std::string Shape::str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(dims_[i]);
    }
    return s + "]";
}

const char* to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }

const char* to_string(Activation a) {
    switch (a) {
        case Activation::elu: return "elu";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

std::int64_t window_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride, Padding padding) {
    if (stride < 1) throw ConfigError("stride must be >= 1, got " + std::to_string(stride));
    if (kernel < 1) throw ConfigError("kernel/window must be >= 1, got " + std::to_string(kernel));
    if (padding == Padding::same) return (in + stride - 1) / stride;
    if (kernel > in)
        throw ShapeError("window " + std::to_string(kernel) + " larger than input extent " + std::to_string(in));
    return (in - kernel) / stride + 1;
}

std::int64_t same_padding_before(std::int64_t in, std::int64_t kernel, std::int64_t stride) {
    const std::int64_t out = (in + stride - 1) / stride;
    const std::int64_t total = std::max<std::int64_t>((out - 1) * stride + kernel - in, 0);
    return total / 2;
}

}  // namespace nseg
