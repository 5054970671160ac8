#pragma once

#include <span>

#include "nseg/core/graph.hpp"

namespace nseg {

// Classic momentum: v <- momentum * v + grad; w <- w - lr * v; grad <- 0.
// Throws StateError if a parameter has no gradient (never reached by backward).
template <class T>
void sgd_momentum_step(std::span<Parameter<T>* const> params, double learning_rate, double momentum) {
    if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    for (Parameter<T>* p : params)
        if (!p->has_grad()) throw StateError("parameter '" + p->name + "' has no gradient; run backward first");
    const T lr = static_cast<T>(learning_rate);
    const T mu = static_cast<T>(momentum);
    for (Parameter<T>* p : params) {
        auto w = p->value.data();
        auto v = p->velocity.data();
        auto g = p->grad.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = mu * v[i] + g[i];
            w[i] -= lr * v[i];
            g[i] = T{};
        }
    }
}

}  // namespace nseg
