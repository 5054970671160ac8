// Convolution and transposed convolution over NHWC tensors.
//
// Weights are laid out Kh x Kw x Cin x Cout so the innermost loop runs over
// contiguous output channels for both the forward pass and the gradients.

#include <string>

#include "nseg/core/ops.hpp"

namespace nseg {
namespace {

struct KernelDims {
    std::int64_t kh, kw, cin, cout;
};

template <class T>
KernelDims kernel_of(const Var<T>& weight, const Var<T>& bias, std::int64_t in_channels, const char* op) {
    const auto& ws = weight.shape();
    if (ws.rank() != 4)
        throw ShapeError(std::string(op) + ": weight must be Kh x Kw x Cin x Cout, got " + ws.str());
    KernelDims k{ws[0], ws[1], ws[2], ws[3]};
    if (k.cin != in_channels)
        throw ShapeError(std::string(op) + ": input has " + std::to_string(in_channels) +
                         " channels but weight expects " + std::to_string(k.cin));
    if (bias.value().size() != static_cast<std::size_t>(k.cout))
        throw ShapeError(std::string(op) + ": bias length " + std::to_string(bias.value().size()) +
                         " does not match " + std::to_string(k.cout) + " output channels");
    return k;
}

}  // namespace

template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride, Padding padding) {
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1, got " + std::to_string(stride));
    const Nhwc x = nhwc_of(input.value(), "conv2d");
    const KernelDims k = kernel_of(weight, bias, x.c, "conv2d");
    const std::int64_t oh = window_output_extent(x.h, k.kh, stride, padding);
    const std::int64_t ow = window_output_extent(x.w, k.kw, stride, padding);
    const std::int64_t pt = padding == Padding::same ? same_padding_before(x.h, k.kh, stride) : 0;
    const std::int64_t pl = padding == Padding::same ? same_padding_before(x.w, k.kw, stride) : 0;

    Tensor<T> out(Shape{x.n, oh, ow, k.cout});
    const T* in = input.value().data().data();
    const T* w = weight.value().data().data();
    const T* b = bias.value().data().data();
    T* o = out.data().data();

    for (std::int64_t n = 0; n < x.n; ++n)
        for (std::int64_t oy = 0; oy < oh; ++oy)
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                T* op = o + ((n * oh + oy) * ow + ox) * k.cout;
                for (std::int64_t co = 0; co < k.cout; ++co) op[co] = b[co];
                for (std::int64_t ky = 0; ky < k.kh; ++ky) {
                    const std::int64_t iy = oy * stride - pt + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    for (std::int64_t kx = 0; kx < k.kw; ++kx) {
                        const std::int64_t ix = ox * stride - pl + kx;
                        if (ix < 0 || ix >= x.w) continue;
                        const T* ip = in + ((n * x.h + iy) * x.w + ix) * x.c;
                        const T* wp = w + (ky * k.kw + kx) * k.cin * k.cout;
                        for (std::int64_t ci = 0; ci < k.cin; ++ci) {
                            const T v = ip[ci];
                            const T* wr = wp + ci * k.cout;
                            for (std::int64_t co = 0; co < k.cout; ++co) op[co] += v * wr[co];
                        }
                    }
                }
            }

    const std::size_t xi = input.id(), wi = weight.id(), bi = bias.id();
    return input.graph().record(
        std::move(out), "conv2d", {input, weight, bias},
        [=](Graph<T>& g, const Tensor<T>& grad_out) {
            const T* in = g.value(xi).data().data();
            const T* w = g.value(wi).data().data();
            const T* go = grad_out.data().data();
            Tensor<T>* gx_t = g.grad_slot(xi);
            Tensor<T>* gw_t = g.grad_slot(wi);
            Tensor<T>* gb_t = g.grad_slot(bi);
            T* gx = gx_t ? gx_t->data().data() : nullptr;
            T* gw = gw_t ? gw_t->data().data() : nullptr;
            T* gb = gb_t ? gb_t->data().data() : nullptr;

            for (std::int64_t n = 0; n < x.n; ++n)
                for (std::int64_t oy = 0; oy < oh; ++oy)
                    for (std::int64_t ox = 0; ox < ow; ++ox) {
                        const T* gp = go + ((n * oh + oy) * ow + ox) * k.cout;
                        if (gb)
                            for (std::int64_t co = 0; co < k.cout; ++co) gb[co] += gp[co];
                        for (std::int64_t ky = 0; ky < k.kh; ++ky) {
                            const std::int64_t iy = oy * stride - pt + ky;
                            if (iy < 0 || iy >= x.h) continue;
                            for (std::int64_t kx = 0; kx < k.kw; ++kx) {
                                const std::int64_t ix = ox * stride - pl + kx;
                                if (ix < 0 || ix >= x.w) continue;
                                const std::int64_t ioff = ((n * x.h + iy) * x.w + ix) * x.c;
                                const std::int64_t woff = (ky * k.kw + kx) * k.cin * k.cout;
                                for (std::int64_t ci = 0; ci < k.cin; ++ci) {
                                    const T* wr = w + woff + ci * k.cout;
                                    if (gx) {
                                        T acc{};
                                        for (std::int64_t co = 0; co < k.cout; ++co) acc += gp[co] * wr[co];
                                        gx[ioff + ci] += acc;
                                    }
                                    if (gw) {
                                        const T v = in[ioff + ci];
                                        T* gwr = gw + woff + ci * k.cout;
                                        for (std::int64_t co = 0; co < k.cout; ++co) gwr[co] += v * gp[co];
                                    }
                                }
                            }
                        }
                    }
        });
}

template <class T>
Var<T> deconv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride) {
    if (stride < 1) throw ConfigError("deconv2d: stride must be >= 1, got " + std::to_string(stride));
    const Nhwc x = nhwc_of(input.value(), "deconv2d");
    const KernelDims k = kernel_of(weight, bias, x.c, "deconv2d");
    const std::int64_t oh = x.h * stride;
    const std::int64_t ow = x.w * stride;

    Tensor<T> out(Shape{x.n, oh, ow, k.cout});
    const T* in = input.value().data().data();
    const T* w = weight.value().data().data();
    const T* b = bias.value().data().data();
    T* o = out.data().data();

    for (std::int64_t p = 0; p < x.n * oh * ow; ++p)
        for (std::int64_t co = 0; co < k.cout; ++co) o[p * k.cout + co] = b[co];

    for (std::int64_t n = 0; n < x.n; ++n)
        for (std::int64_t iy = 0; iy < x.h; ++iy)
            for (std::int64_t ix = 0; ix < x.w; ++ix) {
                const T* ip = in + ((n * x.h + iy) * x.w + ix) * x.c;
                for (std::int64_t ky = 0; ky < k.kh; ++ky) {
                    const std::int64_t oy = iy * stride + ky;
                    if (oy >= oh) continue;
                    for (std::int64_t kx = 0; kx < k.kw; ++kx) {
                        const std::int64_t ox = ix * stride + kx;
                        if (ox >= ow) continue;
                        T* op = o + ((n * oh + oy) * ow + ox) * k.cout;
                        const T* wp = w + (ky * k.kw + kx) * k.cin * k.cout;
                        for (std::int64_t ci = 0; ci < k.cin; ++ci) {
                            const T v = ip[ci];
                            const T* wr = wp + ci * k.cout;
                            for (std::int64_t co = 0; co < k.cout; ++co) op[co] += v * wr[co];
                        }
                    }
                }
            }

    const std::size_t xi = input.id(), wi = weight.id(), bi = bias.id();
    return input.graph().record(
        std::move(out), "deconv2d", {input, weight, bias},
        [=](Graph<T>& g, const Tensor<T>& grad_out) {
            const T* in = g.value(xi).data().data();
            const T* w = g.value(wi).data().data();
            const T* go = grad_out.data().data();
            Tensor<T>* gx_t = g.grad_slot(xi);
            Tensor<T>* gw_t = g.grad_slot(wi);
            Tensor<T>* gb_t = g.grad_slot(bi);
            T* gx = gx_t ? gx_t->data().data() : nullptr;
            T* gw = gw_t ? gw_t->data().data() : nullptr;

            if (gb_t) {
                T* gb = gb_t->data().data();
                for (std::int64_t p = 0; p < x.n * oh * ow; ++p)
                    for (std::int64_t co = 0; co < k.cout; ++co) gb[co] += go[p * k.cout + co];
            }
            if (!gx && !gw) return;
            for (std::int64_t n = 0; n < x.n; ++n)
                for (std::int64_t iy = 0; iy < x.h; ++iy)
                    for (std::int64_t ix = 0; ix < x.w; ++ix) {
                        const std::int64_t ioff = ((n * x.h + iy) * x.w + ix) * x.c;
                        for (std::int64_t ky = 0; ky < k.kh; ++ky) {
                            const std::int64_t oy = iy * stride + ky;
                            if (oy >= oh) continue;
                            for (std::int64_t kx = 0; kx < k.kw; ++kx) {
                                const std::int64_t ox = ix * stride + kx;
                                if (ox >= ow) continue;
                                const T* gp = go + ((n * oh + oy) * ow + ox) * k.cout;
                                const std::int64_t woff = (ky * k.kw + kx) * k.cin * k.cout;
                                for (std::int64_t ci = 0; ci < k.cin; ++ci) {
                                    const T* wr = w + woff + ci * k.cout;
                                    if (gx) {
                                        T acc{};
                                        for (std::int64_t co = 0; co < k.cout; ++co) acc += gp[co] * wr[co];
                                        gx[ioff + ci] += acc;
                                    }
                                    if (gw) {
                                        const T v = in[ioff + ci];
                                        T* gwr = gw + woff + ci * k.cout;
                                        for (std::int64_t co = 0; co < k.cout; ++co) gwr[co] += v * gp[co];
                                    }
                                }
                            }
                        }
                    }
        });
}

template Var<float> conv2d(const Var<float>&, const Var<float>&, const Var<float>&, int, Padding);
template Var<double> conv2d(const Var<double>&, const Var<double>&, const Var<double>&, int, Padding);
template Var<float> deconv2d(const Var<float>&, const Var<float>&, const Var<float>&, int);
template Var<double> deconv2d(const Var<double>&, const Var<double>&, const Var<double>&, int);

}  // namespace nseg
