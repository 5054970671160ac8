#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "nseg/arch/network_spec.hpp"
#include "nseg/core/checkpoint.hpp"
#include "nseg/core/graph.hpp"

namespace nseg::arch {

// A NetworkSpec realized with parameters and batch-norm buffers.
// Conv/deconv weights use He-normal initialization from `init_seed`; biases
// and batch-norm shifts start at zero, batch-norm scales at one.
template <class T>
class Model {
public:
    Model(NetworkSpec spec, std::uint64_t init_seed);

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;

    // input is N x H x W x C matching spec().input. Dropout draws from `rng`
    // in train mode; batch-norm running statistics update in train mode.
    Var<T> forward(Graph<T>& graph, const Var<T>& input, Mode mode, std::mt19937_64& rng);

    const NetworkSpec& spec() const noexcept { return spec_; }
    std::vector<Parameter<T>*> parameters();

    // Parameters followed by batch-norm running statistics, in layer order.
    std::vector<NamedTensor> state() const;
    // Throws CheckpointError(architecture_mismatch) if names or shapes differ.
    void load_state(const std::vector<NamedTensor>& tensors);

private:
    struct LayerState {
        int weight = -1, bias = -1, gamma = -1, beta = -1;
        int bn = -1;
    };

    NetworkSpec spec_;
    std::vector<std::unique_ptr<Parameter<T>>> params_;
    std::vector<BatchNormState<T>> bn_states_;
    std::vector<LayerState> layer_state_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace nseg::arch
