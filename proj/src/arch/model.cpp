#include "nseg/arch/model.hpp"

#include <cmath>

namespace nseg::arch {

template <class T>
Model<T>::Model(NetworkSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
    const auto trace = shape_trace(spec_);  // validates the spec
    std::mt19937_64 rng(init_seed);
    layer_state_.resize(spec_.layers.size());

    auto input_dims = [&](const LayerSpec& l) {
        const int ref = l.inputs.at(0);
        return ref == kNetworkInput ? spec_.input : trace[static_cast<std::size_t>(ref) + 1].shape;
    };
    auto add_param = [&](const std::string& name, Tensor<T> value) {
        params_.push_back(std::make_unique<Parameter<T>>(name, std::move(value)));
        return static_cast<int>(params_.size()) - 1;
    };

    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        LayerState& ls = layer_state_[i];
        const Dims in = input_dims(l);
        if (l.kind == LayerKind::conv || l.kind == LayerKind::deconv) {
            const Shape ws{l.kernel, l.kernel, in.c, l.filters};
            Tensor<T> w(ws);
            const double fan_in = static_cast<double>(l.kernel) * l.kernel * static_cast<double>(in.c);
            std::normal_distribution<double> init(0.0, std::sqrt(2.0 / fan_in));
            for (auto& v : w.data()) v = static_cast<T>(init(rng));
            ls.weight = add_param(l.name + ".weight", std::move(w));
            ls.bias = add_param(l.name + ".bias", Tensor<T>(Shape{l.filters}));
        } else if (l.kind == LayerKind::batchnorm) {
            ls.gamma = add_param(l.name + ".gamma", Tensor<T>(Shape{in.c}, T(1)));
            ls.beta = add_param(l.name + ".beta", Tensor<T>(Shape{in.c}));
            ls.bn = static_cast<int>(bn_states_.size());
            bn_states_.emplace_back(in.c);
        }
    }
}

template <class T>
Var<T> Model<T>::forward(Graph<T>& g, const Var<T>& input, Mode mode, std::mt19937_64& rng) {
    const Nhwc x = nhwc_of(input.value(), "model input");
    if (x.h != spec_.input.h || x.w != spec_.input.w || x.c != spec_.input.c)
        throw ShapeError("model expects input " + full_string(spec_.input) + ", got " + input.shape().str());

    std::vector<Var<T>> outs;
    outs.reserve(spec_.layers.size());
    auto in = [&](const LayerSpec& l, std::size_t k) {
        const int ref = l.inputs.at(k);
        return ref == kNetworkInput ? input : outs[static_cast<std::size_t>(ref)];
    };
    auto param = [&](int idx) { return g.parameter(*params_[static_cast<std::size_t>(idx)]); };

    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        const LayerState& ls = layer_state_[i];
        switch (l.kind) {
            case LayerKind::conv:
                outs.push_back(conv2d(in(l, 0), param(ls.weight), param(ls.bias), l.stride, l.padding));
                break;
            case LayerKind::deconv:
                outs.push_back(deconv2d(in(l, 0), param(ls.weight), param(ls.bias), l.stride));
                break;
            case LayerKind::maxpool: outs.push_back(maxpool2d(in(l, 0), l.kernel, l.stride, l.padding)); break;
            case LayerKind::avgpool: outs.push_back(avgpool2d(in(l, 0), l.kernel, l.stride, l.padding)); break;
            case LayerKind::upsample: outs.push_back(upsample2d_nearest(in(l, 0), l.factor)); break;
            case LayerKind::concat: outs.push_back(concat_channels(in(l, 0), in(l, 1))); break;
            case LayerKind::batchnorm:
                outs.push_back(batchnorm(in(l, 0), param(ls.gamma), param(ls.beta),
                                         bn_states_[static_cast<std::size_t>(ls.bn)], mode));
                break;
            case LayerKind::activation: outs.push_back(activation(in(l, 0), l.activation)); break;
            case LayerKind::dropout: outs.push_back(dropout(in(l, 0), l.rate, mode, rng)); break;
        }
    }
    return outs.empty() ? input : outs.back();
}

template <class T>
std::vector<Parameter<T>*> Model<T>::parameters() {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

template <class T>
std::vector<NamedTensor> Model<T>::state() const {
    std::vector<NamedTensor> out;
    for (const auto& p : params_) out.push_back({p->name, p->value.template cast<float>()});
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const int bn = layer_state_[i].bn;
        if (bn < 0) continue;
        const auto& st = bn_states_[static_cast<std::size_t>(bn)];
        out.push_back({spec_.layers[i].name + ".running_mean", st.running_mean.template cast<float>()});
        out.push_back({spec_.layers[i].name + ".running_var", st.running_var.template cast<float>()});
    }
    return out;
}

template <class T>
void Model<T>::load_state(const std::vector<NamedTensor>& tensors) {
    using Kind = CheckpointError::Kind;
    std::vector<Tensor<T>*> targets;
    std::vector<std::string> names;
    for (auto& p : params_) {
        targets.push_back(&p->value);
        names.push_back(p->name);
    }
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const int bn = layer_state_[i].bn;
        if (bn < 0) continue;
        auto& st = bn_states_[static_cast<std::size_t>(bn)];
        targets.push_back(&st.running_mean);
        names.push_back(spec_.layers[i].name + ".running_mean");
        targets.push_back(&st.running_var);
        names.push_back(spec_.layers[i].name + ".running_var");
    }
    if (tensors.size() != targets.size())
        throw CheckpointError(Kind::architecture_mismatch,
                              "checkpoint has " + std::to_string(tensors.size()) + " tensors, model " +
                                  to_string(spec_.model) + " expects " + std::to_string(targets.size()));
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (tensors[i].name != names[i] || tensors[i].tensor.shape() != targets[i]->shape())
            throw CheckpointError(Kind::architecture_mismatch, "checkpoint tensor '" + tensors[i].name + "' " +
                                                                   tensors[i].tensor.shape().str() +
                                                                   " does not match model tensor '" + names[i] + "' " +
                                                                   targets[i]->shape().str());
    }
    // Validated up front so a mismatch never leaves a half-loaded model.
    for (std::size_t i = 0; i < targets.size(); ++i) *targets[i] = tensors[i].tensor.template cast<T>();
    for (auto& p : params_) {
        p->velocity = Tensor<T>(p->value.shape());
        p->grad = Tensor<T>();
    }
}

template class Model<float>;
template class Model<double>;

}  // namespace nseg::arch
