// U-Net and DenseUNet recipes. Scale 1 is the full 512x512 network; larger
// scales divide spatial extents and channel counts for desk-sized runs.

#include <algorithm>

#include "nseg/arch/network_spec.hpp"

namespace nseg::arch {
namespace {

class Builder {
public:
    explicit Builder(NetworkSpec& spec) : spec_(spec) {}

    int stage(std::string label, std::string description) {
        spec_.stages.push_back({std::move(label), std::move(description)});
        current_ = static_cast<int>(spec_.stages.size()) - 1;
        return current_;
    }

    int add(LayerSpec l) {
        l.stage = current_;
        spec_.layers.push_back(std::move(l));
        return static_cast<int>(spec_.layers.size()) - 1;
    }

    int conv(const std::string& name, int from, int kernel, int filters, int stride = 1) {
        LayerSpec l;
        l.name = name;
        l.kind = LayerKind::conv;
        l.inputs = {from};
        l.kernel = kernel;
        l.stride = stride;
        l.filters = filters;
        l.padding = Padding::same;
        return add(std::move(l));
    }

    int deconv(const std::string& name, int from, int kernel, int filters, int stride) {
        LayerSpec l;
        l.name = name;
        l.kind = LayerKind::deconv;
        l.inputs = {from};
        l.kernel = kernel;
        l.stride = stride;
        l.filters = filters;
        return add(std::move(l));
    }

    int pool(const std::string& name, LayerKind kind, int from, int window, int stride, Padding padding) {
        LayerSpec l;
        l.name = name;
        l.kind = kind;
        l.inputs = {from};
        l.kernel = window;
        l.stride = stride;
        l.padding = padding;
        return add(std::move(l));
    }

    int upsample(const std::string& name, int from, int factor) {
        LayerSpec l;
        l.name = name;
        l.kind = LayerKind::upsample;
        l.inputs = {from};
        l.factor = factor;
        return add(std::move(l));
    }

    int concat(const std::string& name, int a, int b) {
        LayerSpec l;
        l.name = name;
        l.kind = LayerKind::concat;
        l.inputs = {a, b};
        return add(std::move(l));
    }

    int batchnorm(const std::string& name, int from) {
        LayerSpec l;
        l.name = name;
        l.kind = LayerKind::batchnorm;
        l.inputs = {from};
        return add(std::move(l));
    }

    int act(const std::string& name, int from, Activation a) {
        LayerSpec l;
        l.name = name;
        l.kind = LayerKind::activation;
        l.inputs = {from};
        l.activation = a;
        return add(std::move(l));
    }

    int dropout(const std::string& name, int from, double rate) {
        LayerSpec l;
        l.name = name;
        l.kind = LayerKind::dropout;
        l.inputs = {from};
        l.rate = rate;
        return add(std::move(l));
    }

private:
    NetworkSpec& spec_;
    int current_ = 0;
};

int scaled(int base, int scale) { return std::max(1, base / scale); }

void check_options(const ArchitectureOptions& o, int& input_size) {
    if (o.scale != 1 && o.scale != 2 && o.scale != 4 && o.scale != 8)
        throw ConfigError("scale must be one of 1, 2, 4, 8 (got " + std::to_string(o.scale) + ")");
    input_size = o.input_size.value_or(512 / o.scale);
    if (input_size < 16 || input_size % 16 != 0)
        throw ConfigError("input size must be a positive multiple of 16 (got " + std::to_string(input_size) + ")");
    if (o.input_channels < 1) throw ConfigError("input channels must be >= 1");
    if (!(o.dropout_rate >= 0.0 && o.dropout_rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
}

}  // namespace

NetworkSpec build_unet(const ArchitectureOptions& opts) {
    int size = 0;
    check_options(opts, size);
    NetworkSpec spec;
    spec.model = ModelKind::unet;
    spec.scale = opts.scale;
    spec.input = {size, size, opts.input_channels};
    spec.output = {size / 4, size / 4, 1};

    Builder b(spec);
    b.stage("Input", "-");

    // Contracting path: two ELU convs per level, kernels 8/16/32/64, 2x2 max pool after each.
    const int widths[] = {8, 16, 32, 64};
    int x = kNetworkInput;
    int skips[4] = {};
    for (int level = 0; level < 4; ++level) {
        const std::string id = std::to_string(level + 1);
        b.stage("Convolution (" + id + ")", "3x3 conv x2");
        const int f = scaled(widths[level], opts.scale);
        x = b.act("conv" + id + "_1_elu", b.conv("conv" + id + "_1", x, 3, f), Activation::elu);
        x = b.act("conv" + id + "_2_elu", b.conv("conv" + id + "_2", x, 3, f), Activation::elu);
        skips[level] = x;
        b.stage("Pooling", "2x2 max pooling");
        x = b.pool("pool" + id, LayerKind::maxpool, x, 2, 2, Padding::valid);
    }
    b.stage("Convolution (5)", "3x3 conv x2");
    const int bottom = scaled(128, opts.scale);
    x = b.act("conv5_1_elu", b.conv("conv5_1", x, 3, bottom), Activation::elu);
    x = b.act("conv5_2_elu", b.conv("conv5_2", x, 3, bottom), Activation::elu);

    // Expansive path: deconv, concat with the matching contracting map, dropout, two ELU convs.
    const struct {
        int width;
        int skip_level;
    } ups[] = {{64, 3}, {32, 2}};
    for (int u = 0; u < 2; ++u) {
        const std::string id = std::to_string(u + 1);
        const int f = scaled(ups[u].width, opts.scale);
        b.stage("Upsampling Layer (" + id + ")",
                "2x2 Deconv, [conv layer (" + std::to_string(ups[u].skip_level + 1) + ")], dropout, 3x3 conv x2");
        x = b.deconv("up" + id + "_deconv", x, 2, f, 2);
        x = b.concat("up" + id + "_concat", x, skips[ups[u].skip_level]);
        x = b.dropout("up" + id + "_dropout", x, opts.dropout_rate);
        x = b.act("up" + id + "_conv1_elu", b.conv("up" + id + "_conv1", x, 3, f), Activation::elu);
        x = b.act("up" + id + "_conv2_elu", b.conv("up" + id + "_conv2", x, 3, f), Activation::elu);
    }

    b.stage("Convolution (6)", "1x1 conv");
    x = b.act("output_sigmoid", b.conv("output", x, 1, 1), Activation::sigmoid);
    return spec;
}

NetworkSpec build_denseunet(const ArchitectureOptions& opts) {
    int size = 0;
    check_options(opts, size);
    const int growth = opts.growth_rate.value_or(scaled(32, opts.scale));
    if (growth < 1) throw ConfigError("growth rate must be >= 1");

    NetworkSpec spec;
    spec.model = ModelKind::denseunet;
    spec.scale = opts.scale;
    spec.growth_rate = growth;
    spec.input = {size, size, opts.input_channels};
    spec.output = {size / 4, size / 4, 1};

    Builder b(spec);
    b.stage("Input", "-");

    b.stage("Convolution (1)", "7×7 convs, stride 2");
    int x = b.conv("stem_conv", kNetworkInput, 7, scaled(64, opts.scale), 2);
    x = b.act("stem_relu", b.batchnorm("stem_bn", x), Activation::relu);
    int channels = scaled(64, opts.scale);

    b.stage("Pooling", "3×3 max pooling, stride 2");
    x = b.pool("stem_pool", LayerKind::maxpool, x, 3, 2, Padding::same);

    // BN-ReLU-Conv, the unit every 'convs' entry of the table stands for.
    auto bn_relu_conv = [&](const std::string& name, int from, int kernel, int filters) {
        const int a = b.act(name + "_relu", b.batchnorm(name + "_bn", from), Activation::relu);
        return b.conv(name, a, kernel, filters);
    };

    const int blocks[] = {6, 12, 16};
    int block_out[3] = {};
    for (int d = 0; d < 3; ++d) {
        const std::string id = std::to_string(d + 1);
        b.stage("Dense Block (" + id + ")",
                "conv block {(1x1 convs, 3x3 convs) x 2} x " + std::to_string(blocks[d]));
        for (int blk = 1; blk <= blocks[d]; ++blk) {
            // Each conv block holds two (1x1, 3x3) groups; every group sees all
            // earlier features of the block and contributes `growth` channels.
            for (int grp = 1; grp <= 2; ++grp) {
                const std::string p = "db" + id + "_b" + std::to_string(blk) + "_g" + std::to_string(grp);
                int y = bn_relu_conv(p + "_conv1x1", x, 1, 4 * growth);
                y = bn_relu_conv(p + "_conv3x3", y, 3, growth);
                x = b.concat(p + "_concat", x, y);
                channels += growth;
            }
        }
        block_out[d] = x;
        if (d == 2) break;
        b.stage("Transition Layer (" + id + ")", "1×1 convs");
        channels /= 2;
        x = bn_relu_conv("tl" + id + "_conv", x, 1, channels);
        b.stage("", "2×2 average pool, stride 2");
        x = b.pool("tl" + id + "_pool", LayerKind::avgpool, x, 2, 2, Padding::valid);
    }

    // Decoder: upsample, concat with the matching dense block, then conv2 = BN-ELU-Dropout-Conv.
    const struct {
        int width;
        int partner;
    } ups[] = {{96, 1}, {64, 0}};
    for (int u = 0; u < 2; ++u) {
        const std::string id = std::to_string(u + 1);
        b.stage("Upsampling Layer (" + id + ")", "2×2 Upsampling [Dense Block " + std::to_string(ups[u].partner + 1) +
                                                     "], " + std::to_string(ups[u].width) + " conv2");
        x = b.upsample("up" + id + "_upsample", x, 2);
        x = b.concat("up" + id + "_concat", x, block_out[ups[u].partner]);
        x = b.batchnorm("up" + id + "_bn", x);
        x = b.act("up" + id + "_elu", x, Activation::elu);
        x = b.dropout("up" + id + "_dropout", x, opts.dropout_rate);
        x = b.conv("up" + id + "_conv", x, 3, scaled(ups[u].width, opts.scale));
    }

    b.stage("Convolution (2)", "1×1 conv");
    x = b.act("output_sigmoid", b.conv("output", x, 1, 1), Activation::sigmoid);
    return spec;
}

}  // namespace nseg::arch
