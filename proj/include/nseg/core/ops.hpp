#pragma once

#include <cstdint>
#include <random>

#include "nseg/core/graph.hpp"

namespace nseg {

enum class Padding { same, valid };
enum class Activation { elu, relu, sigmoid };
enum class Mode { train, eval };

const char* to_string(Padding p);
const char* to_string(Activation a);

// Output extent of a sliding window. Same padding gives ceil(in / stride);
// valid gives floor((in - kernel) / stride) + 1 and rejects kernel > in.
std::int64_t window_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride, Padding padding);

// Leading (top/left) zero padding for same-padded windows; the odd pixel goes bottom/right.
std::int64_t same_padding_before(std::int64_t in, std::int64_t kernel, std::int64_t stride);

// Running statistics of one batch-norm layer.
template <class T>
struct BatchNormState {
    Tensor<T> running_mean;
    Tensor<T> running_var;
    T momentum = T(0.99);

    BatchNormState() = default;
    explicit BatchNormState(std::int64_t channels)
        : running_mean(Shape{channels}, T{0}), running_var(Shape{channels}, T{1}) {}
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBceClamp = 1e-7;

// input N x H x W x Cin, weight Kh x Kw x Cin x Cout, bias Cout.
template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride, Padding padding);

// Transposed convolution; output is N x (H*stride) x (W*stride) x Cout.
// Contributions that fall past that extent (kernel > stride) are dropped.
template <class T>
Var<T> deconv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride);

template <class T>
Var<T> maxpool2d(const Var<T>& input, int window, int stride, Padding padding = Padding::valid);

template <class T>
Var<T> avgpool2d(const Var<T>& input, int window, int stride, Padding padding = Padding::valid);

template <class T>
Var<T> upsample2d_nearest(const Var<T>& input, int factor);

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> batchnorm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state, Mode mode,
                 double epsilon = kBatchNormEpsilon);

template <class T>
Var<T> activation(const Var<T>& input, Activation kind);

// Inverted dropout: survivors are scaled by 1/(1-rate) in train mode, eval is identity.
template <class T>
Var<T> dropout(const Var<T>& input, double rate, Mode mode, std::mt19937_64& rng);

// Mean binary cross-entropy; pred is clamped to [1e-7, 1-1e-7].
template <class T>
Var<T> bce_loss(const Var<T>& pred, const Tensor<T>& target);

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> sum(const Var<T>& x);

}  // namespace nseg
