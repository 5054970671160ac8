// Pooling, nearest upsampling and channel concatenation.

#include <limits>
#include <string>
#include <vector>

#include "nseg/core/ops.hpp"

namespace nseg {
namespace {

struct PoolGeometry {
    Nhwc in;
    std::int64_t oh, ow, pt, pl;
};

template <class T>
PoolGeometry pool_geometry(const Var<T>& input, int window, int stride, Padding padding, const char* op) {
    if (window < 1) throw ConfigError(std::string(op) + ": window must be >= 1");
    if (stride < 1) throw ConfigError(std::string(op) + ": stride must be >= 1");
    const Nhwc x = nhwc_of(input.value(), op);
    if (window > x.h || window > x.w)
        throw ShapeError(std::string(op) + ": window " + std::to_string(window) + " larger than input " +
                         std::to_string(x.h) + "x" + std::to_string(x.w));
    PoolGeometry g{x, window_output_extent(x.h, window, stride, padding),
                   window_output_extent(x.w, window, stride, padding), 0, 0};
    if (padding == Padding::same) {
        g.pt = same_padding_before(x.h, window, stride);
        g.pl = same_padding_before(x.w, window, stride);
    }
    return g;
}

}  // namespace

template <class T>
Var<T> maxpool2d(const Var<T>& input, int window, int stride, Padding padding) {
    const PoolGeometry pg = pool_geometry(input, window, stride, padding, "maxpool2d");
    const Nhwc& x = pg.in;
    Tensor<T> out(Shape{x.n, pg.oh, pg.ow, x.c});
    std::vector<std::size_t> argmax(out.size());
    const T* in = input.value().data().data();
    T* o = out.data().data();

    for (std::int64_t n = 0; n < x.n; ++n)
        for (std::int64_t oy = 0; oy < pg.oh; ++oy)
            for (std::int64_t ox = 0; ox < pg.ow; ++ox) {
                const std::size_t obase = static_cast<std::size_t>(((n * pg.oh + oy) * pg.ow + ox) * x.c);
                for (std::int64_t c = 0; c < x.c; ++c) o[obase + c] = -std::numeric_limits<T>::infinity();
                // Row-major window scan with strict comparison: ties keep the first cell.
                for (std::int64_t ky = 0; ky < window; ++ky) {
                    const std::int64_t iy = oy * stride - pg.pt + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    for (std::int64_t kx = 0; kx < window; ++kx) {
                        const std::int64_t ix = ox * stride - pg.pl + kx;
                        if (ix < 0 || ix >= x.w) continue;
                        const std::size_t ibase = static_cast<std::size_t>(((n * x.h + iy) * x.w + ix) * x.c);
                        for (std::int64_t c = 0; c < x.c; ++c) {
                            if (in[ibase + c] > o[obase + c]) {
                                o[obase + c] = in[ibase + c];
                                argmax[obase + c] = ibase + c;
                            }
                        }
                    }
                }
            }

    const std::size_t xi = input.id();
    return input.graph().record(std::move(out), "maxpool2d", {input},
                                [xi, argmax = std::move(argmax)](Graph<T>& g, const Tensor<T>& grad_out) {
                                    T* gx = g.grad_slot(xi)->data().data();
                                    const T* go = grad_out.data().data();
                                    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += go[i];
                                });
}

template <class T>
Var<T> avgpool2d(const Var<T>& input, int window, int stride, Padding padding) {
    const PoolGeometry pg = pool_geometry(input, window, stride, padding, "avgpool2d");
    const Nhwc& x = pg.in;
    Tensor<T> out(Shape{x.n, pg.oh, pg.ow, x.c});
    const T* in = input.value().data().data();
    T* o = out.data().data();

    // Visits every (output cell, contributing input cell) pair with the
    // averaging weight; shared by forward and backward.
    auto for_each_cell = [pg, window, stride](auto&& fn) {
        const Nhwc& x = pg.in;
        for (std::int64_t n = 0; n < x.n; ++n)
            for (std::int64_t oy = 0; oy < pg.oh; ++oy)
                for (std::int64_t ox = 0; ox < pg.ow; ++ox) {
                    const std::int64_t y0 = std::max<std::int64_t>(oy * stride - pg.pt, 0);
                    const std::int64_t y1 = std::min<std::int64_t>(oy * stride - pg.pt + window, x.h);
                    const std::int64_t x0 = std::max<std::int64_t>(ox * stride - pg.pl, 0);
                    const std::int64_t x1 = std::min<std::int64_t>(ox * stride - pg.pl + window, x.w);
                    const T inv = T(1) / static_cast<T>((y1 - y0) * (x1 - x0));
                    const std::size_t obase = static_cast<std::size_t>(((n * pg.oh + oy) * pg.ow + ox) * x.c);
                    for (std::int64_t iy = y0; iy < y1; ++iy)
                        for (std::int64_t ix = x0; ix < x1; ++ix)
                            fn(obase, static_cast<std::size_t>(((n * x.h + iy) * x.w + ix) * x.c), inv);
                }
    };

    for_each_cell([&](std::size_t obase, std::size_t ibase, T inv) {
        for (std::int64_t c = 0; c < x.c; ++c) o[obase + c] += in[ibase + c] * inv;
    });

    const std::size_t xi = input.id();
    return input.graph().record(std::move(out), "avgpool2d", {input},
                                [xi, for_each_cell, c = x.c](Graph<T>& g, const Tensor<T>& grad_out) {
                                    T* gx = g.grad_slot(xi)->data().data();
                                    const T* go = grad_out.data().data();
                                    for_each_cell([&](std::size_t obase, std::size_t ibase, T inv) {
                                        for (std::int64_t k = 0; k < c; ++k) gx[ibase + k] += go[obase + k] * inv;
                                    });
                                });
}

template <class T>
Var<T> upsample2d_nearest(const Var<T>& input, int factor) {
    if (factor < 1) throw ConfigError("upsample2d_nearest: factor must be >= 1, got " + std::to_string(factor));
    const Nhwc x = nhwc_of(input.value(), "upsample2d_nearest");
    const std::int64_t oh = x.h * factor, ow = x.w * factor;
    Tensor<T> out(Shape{x.n, oh, ow, x.c});
    const T* in = input.value().data().data();
    T* o = out.data().data();
    for (std::int64_t n = 0; n < x.n; ++n)
        for (std::int64_t oy = 0; oy < oh; ++oy)
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                const T* ip = in + ((n * x.h + oy / factor) * x.w + ox / factor) * x.c;
                T* op = o + ((n * oh + oy) * ow + ox) * x.c;
                for (std::int64_t c = 0; c < x.c; ++c) op[c] = ip[c];
            }

    const std::size_t xi = input.id();
    return input.graph().record(std::move(out), "upsample2d_nearest", {input},
                                [=](Graph<T>& g, const Tensor<T>& grad_out) {
                                    T* gx = g.grad_slot(xi)->data().data();
                                    const T* go = grad_out.data().data();
                                    for (std::int64_t n = 0; n < x.n; ++n)
                                        for (std::int64_t oy = 0; oy < oh; ++oy)
                                            for (std::int64_t ox = 0; ox < ow; ++ox) {
                                                T* gp = gx + ((n * x.h + oy / factor) * x.w + ox / factor) * x.c;
                                                const T* op = go + ((n * oh + oy) * ow + ox) * x.c;
                                                for (std::int64_t c = 0; c < x.c; ++c) gp[c] += op[c];
                                            }
                                });
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
    const Nhwc xa = nhwc_of(a.value(), "concat_channels");
    const Nhwc xb = nhwc_of(b.value(), "concat_channels");
    if (xa.n != xb.n || xa.h != xb.h || xa.w != xb.w)
        throw ShapeError("concat_channels: spatial mismatch " + a.shape().str() + " vs " + b.shape().str());
    const std::int64_t c = xa.c + xb.c;
    const std::int64_t pixels = xa.n * xa.h * xa.w;
    Tensor<T> out(Shape{xa.n, xa.h, xa.w, c});
    const T* pa = a.value().data().data();
    const T* pb = b.value().data().data();
    T* o = out.data().data();
    for (std::int64_t p = 0; p < pixels; ++p) {
        std::copy(pa + p * xa.c, pa + (p + 1) * xa.c, o + p * c);
        std::copy(pb + p * xb.c, pb + (p + 1) * xb.c, o + p * c + xa.c);
    }

    const std::size_t ai = a.id(), bi = b.id();
    const std::int64_t ca = xa.c, cb = xb.c;
    return a.graph().record(std::move(out), "concat_channels", {a, b},
                            [=](Graph<T>& g, const Tensor<T>& grad_out) {
                                const T* go = grad_out.data().data();
                                if (Tensor<T>* ga = g.grad_slot(ai)) {
                                    T* d = ga->data().data();
                                    for (std::int64_t p = 0; p < pixels; ++p)
                                        for (std::int64_t k = 0; k < ca; ++k) d[p * ca + k] += go[p * c + k];
                                }
                                if (Tensor<T>* gb = g.grad_slot(bi)) {
                                    T* d = gb->data().data();
                                    for (std::int64_t p = 0; p < pixels; ++p)
                                        for (std::int64_t k = 0; k < cb; ++k) d[p * cb + k] += go[p * c + ca + k];
                                }
                            });
}

#define NSEG_INSTANTIATE(T)                                                        \
    template Var<T> maxpool2d(const Var<T>&, int, int, Padding);                   \
    template Var<T> avgpool2d(const Var<T>&, int, int, Padding);                   \
    template Var<T> upsample2d_nearest(const Var<T>&, int);                        \
    template Var<T> concat_channels(const Var<T>&, const Var<T>&);

NSEG_INSTANTIATE(float)
NSEG_INSTANTIATE(double)
#undef NSEG_INSTANTIATE

}  // namespace nseg
