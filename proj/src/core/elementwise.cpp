// Batch normalization, activations, dropout and the loss.

#include <cmath>
#include <string>
#include <vector>

#include "nseg/core/ops.hpp"

namespace nseg {

template <class T>
Var<T> batchnorm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state, Mode mode,
                 double epsilon) {
    const Nhwc x = nhwc_of(input.value(), "batchnorm");
    const auto c = static_cast<std::size_t>(x.c);
    if (gamma.value().size() != c || beta.value().size() != c)
        throw ShapeError("batchnorm: gamma/beta length must equal channel count " + std::to_string(c));
    if (state.running_mean.size() != c || state.running_var.size() != c)
        throw ShapeError("batchnorm: running statistics sized for a different channel count");
    const auto count = static_cast<std::size_t>(x.n * x.h * x.w);
    if (count == 0) throw ConfigError("batchnorm: zero-size batch");

    const T* in = input.value().data().data();
    const T* gm = gamma.value().data().data();
    const T* bt = beta.value().data().data();

    std::vector<T> mean(c), inv_std(c);
    if (mode == Mode::train) {
        std::vector<double> s(c, 0.0), ss(c, 0.0);
        for (std::size_t p = 0; p < count; ++p)
            for (std::size_t k = 0; k < c; ++k) s[k] += in[p * c + k];
        for (std::size_t k = 0; k < c; ++k) s[k] /= static_cast<double>(count);
        for (std::size_t p = 0; p < count; ++p)
            for (std::size_t k = 0; k < c; ++k) {
                const double d = in[p * c + k] - s[k];
                ss[k] += d * d;
            }
        T* rm = state.running_mean.data().data();
        T* rv = state.running_var.data().data();
        for (std::size_t k = 0; k < c; ++k) {
            const double var = ss[k] / static_cast<double>(count);
            mean[k] = static_cast<T>(s[k]);
            inv_std[k] = static_cast<T>(1.0 / std::sqrt(var + epsilon));
            rm[k] = state.momentum * rm[k] + (T(1) - state.momentum) * static_cast<T>(s[k]);
            rv[k] = state.momentum * rv[k] + (T(1) - state.momentum) * static_cast<T>(var);
        }
    } else {
        for (std::size_t k = 0; k < c; ++k) {
            mean[k] = state.running_mean[k];
            inv_std[k] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[k]) + epsilon));
        }
    }

    Tensor<T> out(input.shape());
    Tensor<T> xhat(input.shape());
    T* o = out.data().data();
    T* xh = xhat.data().data();
    for (std::size_t p = 0; p < count; ++p)
        for (std::size_t k = 0; k < c; ++k) {
            const std::size_t i = p * c + k;
            xh[i] = (in[i] - mean[k]) * inv_std[k];
            o[i] = gm[k] * xh[i] + bt[k];
        }

    const std::size_t xi = input.id(), gi = gamma.id(), bi = beta.id();
    const bool batch_stats = mode == Mode::train;
    return input.graph().record(
        std::move(out), "batchnorm", {input, gamma, beta},
        [=, xhat = std::move(xhat)](Graph<T>& g, const Tensor<T>& grad_out) {
            const T* go = grad_out.data().data();
            const T* xh = xhat.data().data();
            const T* gm = g.value(gi).data().data();
            std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
            for (std::size_t p = 0; p < count; ++p)
                for (std::size_t k = 0; k < c; ++k) {
                    sum_g[k] += go[p * c + k];
                    sum_gx[k] += static_cast<double>(go[p * c + k]) * xh[p * c + k];
                }
            if (Tensor<T>* gg = g.grad_slot(gi))
                for (std::size_t k = 0; k < c; ++k) (*gg)[k] += static_cast<T>(sum_gx[k]);
            if (Tensor<T>* gb = g.grad_slot(bi))
                for (std::size_t k = 0; k < c; ++k) (*gb)[k] += static_cast<T>(sum_g[k]);
            if (Tensor<T>* gx_t = g.grad_slot(xi)) {
                T* gx = gx_t->data().data();
                const double inv_n = 1.0 / static_cast<double>(count);
                for (std::size_t p = 0; p < count; ++p)
                    for (std::size_t k = 0; k < c; ++k) {
                        const std::size_t i = p * c + k;
                        if (batch_stats) {
                            const double d = go[i] - sum_g[k] * inv_n - xh[i] * sum_gx[k] * inv_n;
                            gx[i] += static_cast<T>(gm[k] * inv_std[k] * d);
                        } else {
                            gx[i] += gm[k] * inv_std[k] * go[i];
                        }
                    }
            }
        });
}

template <class T>
Var<T> activation(const Var<T>& input, Activation kind) {
    const Tensor<T>& xv = input.value();
    Tensor<T> out(xv.shape());
    const std::size_t n = xv.size();
    for (std::size_t i = 0; i < n; ++i) {
        const T v = xv[i];
        switch (kind) {
            case Activation::elu: out[i] = v > T(0) ? v : std::expm1(v); break;
            case Activation::relu: out[i] = v > T(0) ? v : T(0); break;
            case Activation::sigmoid:
                if (v >= T(0)) {
                    out[i] = T(1) / (T(1) + std::exp(-v));
                } else {
                    const T e = std::exp(v);
                    out[i] = e / (T(1) + e);
                }
                break;
        }
    }
    const std::size_t xi = input.id();
    const std::size_t yi = input.graph().size();  // id the recorded output will receive
    return input.graph().record(std::move(out), "activation", {input},
                                [xi, yi, kind, n](Graph<T>& g, const Tensor<T>& grad_out) {
                                    const T* x = g.value(xi).data().data();
                                    const T* y = g.value(yi).data().data();
                                    T* gx = g.grad_slot(xi)->data().data();
                                    const T* go = grad_out.data().data();
                                    for (std::size_t i = 0; i < n; ++i) {
                                        T d;
                                        switch (kind) {
                                            case Activation::elu: d = x[i] > T(0) ? T(1) : y[i] + T(1); break;
                                            case Activation::relu: d = x[i] > T(0) ? T(1) : T(0); break;
                                            default: d = y[i] * (T(1) - y[i]); break;
                                        }
                                        gx[i] += go[i] * d;
                                    }
                                });
}

template <class T>
Var<T> dropout(const Var<T>& input, double rate, Mode mode, std::mt19937_64& rng) {
    if (!(rate >= 0.0) || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
    if (mode == Mode::eval || rate == 0.0) return input;

    const Tensor<T>& xv = input.value();
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<T> mask(xv.size());
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        mask[i] = uniform(rng) < rate ? T(0) : scale;
        out[i] = xv[i] * mask[i];
    }
    const std::size_t xi = input.id();
    return input.graph().record(std::move(out), "dropout", {input},
                                [xi, mask = std::move(mask)](Graph<T>& g, const Tensor<T>& grad_out) {
                                    T* gx = g.grad_slot(xi)->data().data();
                                    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += grad_out[i] * mask[i];
                                });
}

template <class T>
Var<T> bce_loss(const Var<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("bce_loss: prediction " + pred.shape().str() + " vs target " + target.shape().str());
    const std::size_t n = target.size();
    if (n == 0) throw ShapeError("bce_loss: empty prediction");
    const Tensor<T>& p = pred.value();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pc = std::clamp(static_cast<double>(p[i]), kBceClamp, 1.0 - kBceClamp);
        const double t = target[i];
        total -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
    }
    Tensor<T> loss(Shape{1}, static_cast<T>(total / static_cast<double>(n)));

    const std::size_t pi = pred.id();
    return pred.graph().record(std::move(loss), "bce_loss", {pred},
                               [pi, target, n](Graph<T>& g, const Tensor<T>& grad_out) {
                                   const T* p = g.value(pi).data().data();
                                   T* gp = g.grad_slot(pi)->data().data();
                                   const double scale = static_cast<double>(grad_out[0]) / static_cast<double>(n);
                                   for (std::size_t i = 0; i < n; ++i) {
                                       const double pv = p[i];
                                       if (pv < kBceClamp || pv > 1.0 - kBceClamp) continue;
                                       gp[i] += static_cast<T>(scale * (pv - target[i]) / (pv * (1.0 - pv)));
                                   }
                               });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    if (a.shape() != b.shape()) throw ShapeError("mul: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    const std::size_t ai = a.id(), bi = b.id();
    return a.graph().record(std::move(out), "mul", {a, b}, [ai, bi](Graph<T>& g, const Tensor<T>& grad_out) {
        if (Tensor<T>* ga = g.grad_slot(ai)) {
            const Tensor<T>& bv = g.value(bi);
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += grad_out[i] * bv[i];
        }
        if (Tensor<T>* gb = g.grad_slot(bi)) {
            const Tensor<T>& av = g.value(ai);
            for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += grad_out[i] * av[i];
        }
    });
}

template <class T>
Var<T> sum(const Var<T>& x) {
    T total{};
    for (const T& v : x.value().data()) total += v;
    const std::size_t xi = x.id();
    return x.graph().record(Tensor<T>(Shape{1}, total), "sum", {x}, [xi](Graph<T>& g, const Tensor<T>& grad_out) {
        Tensor<T>* gx = g.grad_slot(xi);
        for (T& v : gx->data()) v += grad_out[0];
    });
}

#define NSEG_INSTANTIATE(T)                                                                                   \
    template Var<T> batchnorm(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormState<T>&, Mode, double); \
    template Var<T> activation(const Var<T>&, Activation);                                                    \
    template Var<T> dropout(const Var<T>&, double, Mode, std::mt19937_64&);                                   \
    template Var<T> bce_loss(const Var<T>&, const Tensor<T>&);                                                \
    template Var<T> mul(const Var<T>&, const Var<T>&);                                                        \
    template Var<T> sum(const Var<T>&);

NSEG_INSTANTIATE(float)
NSEG_INSTANTIATE(double)
#undef NSEG_INSTANTIATE

}  // namespace nseg
