#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gradient_suite.hpp"
#include "nseg/core/ops.hpp"
#include "nseg/core/optim.hpp"

using namespace nseg;

namespace {

Tensor<float> nhwc(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c, std::vector<float> v) {
    return Tensor<float>(Shape{n, h, w, c}, std::move(v));
}

// Direct nested-loop same-padded convolution for a single-channel image;
// the reference for the spec's 3x3 all-ones example.
std::vector<double> naive_conv_same(const std::vector<double>& img, int h, int w, const std::vector<double>& k, int kh,
                                    int kw) {
    std::vector<double> out(static_cast<std::size_t>(h * w), 0.0);
    const int pt = (kh - 1) / 2, pl = (kw - 1) / 2;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j) {
                    const int sy = y - pt + i, sx = x - pl + j;
                    if (sy >= 0 && sy < h && sx >= 0 && sx < w) out[y * w + x] += img[sy * w + sx] * k[i * kw + j];
                }
    return out;
}

}  // namespace

TEST(Conv2d, FullSizeFirstStageShape) {
    Graph<float> g;
    Parameter<float> w("w", Tensor<float>(Shape{3, 3, 3, 8}, 0.1f));
    Parameter<float> b("b", Tensor<float>(Shape{8}));
    auto x = g.constant(Tensor<float>(Shape{1, 512, 512, 3}, 1.0f));
    auto y = conv2d(x, g.parameter(w), g.parameter(b), 1, Padding::same);
    EXPECT_EQ(y.shape(), (Shape{1, 512, 512, 8}));
}

TEST(Conv2d, OneByOneIdentity) {
    Graph<float> g;
    std::vector<float> vals(2 * 3 * 3);
    std::iota(vals.begin(), vals.end(), -4.0f);
    auto x = g.constant(nhwc(2, 3, 3, 1, vals));
    auto y = conv2d(x, g.constant(Tensor<float>(Shape{1, 1, 1, 1}, 1.0f)), g.constant(Tensor<float>(Shape{1})), 1,
                    Padding::same);
    EXPECT_EQ(y.value().storage(), vals);
}

TEST(Conv2d, AllOnesThreeByThreeMatchesNestedLoopOracle) {
    const auto expect = naive_conv_same(std::vector<double>(9, 1.0), 3, 3, std::vector<double>(9, 1.0), 3, 3);
    ASSERT_DOUBLE_EQ(expect[4], 9.0);
    ASSERT_DOUBLE_EQ(expect[1], 6.0);
    ASSERT_DOUBLE_EQ(expect[0], 4.0);

    Graph<float> g;
    auto y = conv2d(g.constant(Tensor<float>(Shape{1, 3, 3, 1}, 1.0f)),
                    g.constant(Tensor<float>(Shape{3, 3, 1, 1}, 1.0f)), g.constant(Tensor<float>(Shape{1})), 1,
                    Padding::same);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_FLOAT_EQ(y.value()[i], static_cast<float>(expect[i]));
}

TEST(Conv2d, OutputExtents) {
    EXPECT_EQ(window_output_extent(512, 7, 2, Padding::same), 256);
    EXPECT_EQ(window_output_extent(7, 3, 2, Padding::same), 4);
    EXPECT_EQ(window_output_extent(7, 3, 2, Padding::valid), 3);
    // Asymmetric same padding puts the extra pixel bottom/right.
    EXPECT_EQ(same_padding_before(4, 2, 1), 0);
    EXPECT_EQ(same_padding_before(256, 3, 2), 0);
    EXPECT_EQ(same_padding_before(5, 3, 1), 1);
}

TEST(Conv2d, Errors) {
    Graph<float> g;
    auto x = g.constant(Tensor<float>(Shape{1, 4, 4, 3}));
    auto w = g.constant(Tensor<float>(Shape{3, 3, 2, 4}));
    auto b = g.constant(Tensor<float>(Shape{4}));
    EXPECT_THROW(conv2d(x, w, b, 1, Padding::same), ShapeError);
    auto w3 = g.constant(Tensor<float>(Shape{3, 3, 3, 4}));
    EXPECT_THROW(conv2d(x, w3, b, 0, Padding::same), ConfigError);
}

TEST(Deconv2d, DoublesSpatialExtent) {
    Graph<float> g;
    auto y = deconv2d(g.constant(Tensor<float>(Shape{1, 32, 32, 4})), g.constant(Tensor<float>(Shape{2, 2, 4, 6})),
                      g.constant(Tensor<float>(Shape{6})), 2);
    EXPECT_EQ(y.shape(), (Shape{1, 64, 64, 6}));
}

TEST(Deconv2d, ScatterOracle) {
    Graph<float> g;
    const float v = 2.5f;
    auto y = deconv2d(g.constant(nhwc(1, 1, 1, 1, {v})), g.constant(Tensor<float>(Shape{2, 2, 1, 1}, 1.0f)),
                      g.constant(Tensor<float>(Shape{1})), 2);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 2, 1}));
    for (float o : y.value().data()) EXPECT_FLOAT_EQ(o, v);
}

TEST(Deconv2d, ZeroInputZeroOutput) {
    Graph<float> g;
    auto y = deconv2d(g.constant(Tensor<float>(Shape{2, 3, 3, 2})), g.constant(Tensor<float>(Shape{2, 2, 2, 3}, 0.7f)),
                      g.constant(Tensor<float>(Shape{3})), 2);
    for (float o : y.value().data()) EXPECT_EQ(o, 0.0f);
    EXPECT_THROW(deconv2d(g.constant(Tensor<float>(Shape{1, 1, 1, 1})), g.constant(Tensor<float>(Shape{2, 2, 1, 1})),
                          g.constant(Tensor<float>(Shape{1})), 0),
                 ConfigError);
}

// <deconv(x), y> == <x, conv_adjoint(y)> where the adjoint is written out as
// a gather over the same index relation.
TEST(Deconv2d, AdjointProperty) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const auto d = check::random_nhwc(rng, 1);
        const std::int64_t k = 2 + trial % 2, cout = 1 + trial % 3;
        const int stride = 2;
        auto x = check::random_tensor(Shape{d.n, d.h, d.w, d.c}, rng);
        auto w = check::random_tensor(Shape{k, k, d.c, cout}, rng);
        const std::int64_t oh = d.h * stride, ow = d.w * stride;
        auto y = check::random_tensor(Shape{d.n, oh, ow, cout}, rng);

        Graph<double> g;
        auto dx = deconv2d(g.constant(x), g.constant(w), g.constant(Tensor<double>(Shape{cout})), stride);
        double lhs = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) lhs += dx.value()[i] * y[i];

        double rhs = 0.0;
        for (std::int64_t n = 0; n < d.n; ++n)
            for (std::int64_t iy = 0; iy < d.h; ++iy)
                for (std::int64_t ix = 0; ix < d.w; ++ix)
                    for (std::int64_t ci = 0; ci < d.c; ++ci) {
                        double adj = 0.0;
                        for (std::int64_t ky = 0; ky < k; ++ky)
                            for (std::int64_t kx = 0; kx < k; ++kx) {
                                const std::int64_t oy = iy * stride + ky, ox = ix * stride + kx;
                                if (oy >= oh || ox >= ow) continue;
                                for (std::int64_t co = 0; co < cout; ++co)
                                    adj += y.at(n, oy, ox, co) * w[((ky * k + kx) * d.c + ci) * cout + co];
                            }
                        rhs += x.at(n, iy, ix, ci) * adj;
                    }
        EXPECT_NEAR(lhs, rhs, 1e-6);
    }
}

TEST(Pooling, MaxAndAverage) {
    Graph<float> g;
    auto x = g.constant(nhwc(1, 2, 2, 1, {1, 2, 3, 4}));
    EXPECT_FLOAT_EQ(maxpool2d(x, 2, 2).value()[0], 4.0f);
    EXPECT_FLOAT_EQ(avgpool2d(x, 2, 2).value()[0], 2.5f);

    auto big = g.constant(Tensor<float>(Shape{1, 512, 512, 1}, 3.0f));
    auto mp = maxpool2d(big, 2, 2);
    EXPECT_EQ(mp.shape(), (Shape{1, 256, 256, 1}));
    for (float v : mp.value().data()) ASSERT_EQ(v, 3.0f);

    auto mid = g.constant(Tensor<float>(Shape{1, 128, 128, 2}, -1.5f));
    auto ap = avgpool2d(mid, 2, 2);
    EXPECT_EQ(ap.shape(), (Shape{1, 64, 64, 2}));
    for (float v : ap.value().data()) ASSERT_FLOAT_EQ(v, -1.5f);

    // The DenseUNet stem pool: 3x3 window, stride 2, same padding.
    EXPECT_EQ(maxpool2d(g.constant(Tensor<float>(Shape{1, 256, 256, 1})), 3, 2, Padding::same).shape(),
              (Shape{1, 128, 128, 1}));
}

TEST(Pooling, MaxTieRoutesGradientToFirstCell) {
    Graph<float> g;
    auto x = g.leaf(nhwc(1, 2, 2, 1, {5, 5, 5, 5}));
    g.backward(sum(maxpool2d(x, 2, 2)));
    EXPECT_EQ(g.grad(x).storage(), (std::vector<float>{1, 0, 0, 0}));
}

TEST(Pooling, WindowLargerThanInput) {
    Graph<float> g;
    auto x = g.constant(Tensor<float>(Shape{1, 2, 2, 1}));
    EXPECT_THROW(maxpool2d(x, 3, 1), ShapeError);
    EXPECT_THROW(avgpool2d(x, 3, 1), ShapeError);
}

TEST(Upsample, IdentityAndReplication) {
    Graph<float> g;
    auto x = g.constant(nhwc(1, 2, 2, 1, {1, 2, 3, 4}));
    EXPECT_EQ(upsample2d_nearest(x, 1).value().storage(), x.value().storage());
    auto one = upsample2d_nearest(g.constant(nhwc(1, 1, 1, 1, {7})), 2);
    EXPECT_EQ(one.value().storage(), (std::vector<float>{7, 7, 7, 7}));
    EXPECT_EQ(upsample2d_nearest(g.constant(Tensor<float>(Shape{1, 32, 32, 3})), 2).shape(), (Shape{1, 64, 64, 3}));
}

TEST(Upsample, PoolThenUpsampleRestoresEvenDims) {
    Graph<float> g;
    for (std::int64_t h : {2, 4, 6, 10}) {
        auto x = g.constant(Tensor<float>(Shape{1, h, h + 2, 2}));
        EXPECT_EQ(upsample2d_nearest(maxpool2d(x, 2, 2), 2).shape(), x.shape());
    }
}

TEST(Concat, ShapesAndSplit) {
    Graph<float> g;
    auto a = g.constant(Tensor<float>(Shape{1, 64, 64, 64}));
    EXPECT_EQ(concat_channels(a, a).shape(), (Shape{1, 64, 64, 128}));

    std::mt19937_64 rng(3);
    auto av = check::random_tensor(Shape{2, 3, 3, 2}, rng).cast<float>();
    auto x = g.leaf(av);
    auto empty = g.constant(Tensor<float>(Shape{2, 3, 3, 0}));
    auto c = concat_channels(x, empty);
    EXPECT_EQ(c.value().storage(), av.storage());

    auto bv = check::random_tensor(Shape{2, 3, 3, 3}, rng).cast<float>();
    auto y = g.leaf(bv);
    auto cat = concat_channels(x, y);
    g.backward(sum(mul(cat, g.constant(cat.value()))));
    // d/dx of sum(cat * cat_value) is the value itself: split must return each input bitwise.
    EXPECT_EQ(g.grad(x).storage(), av.storage());
    EXPECT_EQ(g.grad(y).storage(), bv.storage());
    EXPECT_EQ(g.grad(y).shape(), bv.shape());

    EXPECT_THROW(concat_channels(g.constant(Tensor<float>(Shape{1, 2, 2, 1})), g.constant(Tensor<float>(Shape{1, 2, 3, 1}))),
                 ShapeError);
}

TEST(BatchNorm, StandardizedInputPassesThrough) {
    std::mt19937_64 rng(11);
    auto raw = check::random_tensor(Shape{4, 5, 5, 2}, rng);
    // Standardize per channel using the biased batch variance.
    for (int c = 0; c < 2; ++c) {
        double m = 0, v = 0;
        const std::size_t cnt = raw.size() / 2;
        for (std::size_t p = 0; p < cnt; ++p) m += raw[p * 2 + c];
        m /= cnt;
        for (std::size_t p = 0; p < cnt; ++p) v += (raw[p * 2 + c] - m) * (raw[p * 2 + c] - m);
        v /= cnt;
        for (std::size_t p = 0; p < cnt; ++p) raw[p * 2 + c] = (raw[p * 2 + c] - m) / std::sqrt(v);
    }
    Graph<double> g;
    BatchNormState<double> st(2);
    auto y = batchnorm(g.constant(raw), g.constant(Tensor<double>(Shape{2}, 1.0)), g.constant(Tensor<double>(Shape{2})),
                       st, Mode::train);
    for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(y.value()[i], raw[i], 1e-5);
}

TEST(BatchNorm, ConstantChannelMapsToBeta) {
    Graph<float> g;
    BatchNormState<float> st(1);
    auto y = batchnorm(g.constant(Tensor<float>(Shape{2, 3, 3, 1}, 4.0f)), g.constant(Tensor<float>(Shape{1}, 2.0f)),
                       g.constant(Tensor<float>(Shape{1}, 0.25f)), st, Mode::train);
    for (float v : y.value().data()) EXPECT_NEAR(v, 0.25f, 1e-5);
}

TEST(BatchNorm, TrainModeOutputHasZeroMeanAndUpdatesRunningStats) {
    std::mt19937_64 rng(5);
    auto x = check::random_tensor(Shape{3, 4, 4, 3}, rng, 2.0, 6.0);
    Graph<double> g;
    BatchNormState<double> st(3);
    auto y = batchnorm(g.constant(x), g.constant(Tensor<double>(Shape{3}, 1.0)), g.constant(Tensor<double>(Shape{3})), st,
                       Mode::train);
    for (int c = 0; c < 3; ++c) {
        double m = 0, xm = 0;
        const std::size_t cnt = x.size() / 3;
        for (std::size_t p = 0; p < cnt; ++p) {
            m += y.value()[p * 3 + c];
            xm += x[p * 3 + c];
        }
        EXPECT_LT(std::abs(m / cnt), 1e-5);
        EXPECT_NEAR(st.running_mean[c], 0.01 * xm / cnt, 1e-12);
    }
    EXPECT_THROW(batchnorm(g.constant(Tensor<double>(Shape{0, 4, 4, 3})), g.constant(Tensor<double>(Shape{3}, 1.0)),
                           g.constant(Tensor<double>(Shape{3})), st, Mode::train),
                 ConfigError);
}

TEST(Activation, ClosedForms) {
    Graph<double> g;
    auto x = g.constant(Tensor<double>(Shape{3}, std::vector<double>{0.0, -1.0, -2.0}));
    auto s = activation(x, Activation::sigmoid).value();
    auto e = activation(x, Activation::elu).value();
    auto r = activation(x, Activation::relu).value();
    EXPECT_DOUBLE_EQ(s[0], 0.5);
    EXPECT_DOUBLE_EQ(e[0], 0.0);
    EXPECT_DOUBLE_EQ(r[1], 0.0);
    EXPECT_NEAR(e[2], std::exp(-2.0) - 1.0, 1e-15);
    EXPECT_NEAR(e[2], -0.864665, 1e-6);
}

TEST(Dropout, IdentityCasesAndSurvivorRate) {
    Graph<float> g;
    std::mt19937_64 rng(1);
    auto x = g.constant(Tensor<float>(Shape{1, 1000, 1000, 1}, 1.0f));
    EXPECT_EQ(dropout(x, 0.0, Mode::train, rng).value().storage(), x.value().storage());
    EXPECT_EQ(dropout(x, 0.7, Mode::eval, rng).value().storage(), x.value().storage());
    auto y = dropout(x, 0.5, Mode::train, rng);
    std::size_t survivors = 0;
    for (float v : y.value().data()) {
        ASSERT_TRUE(v == 0.0f || v == 2.0f);
        survivors += v != 0.0f;
    }
    EXPECT_NEAR(static_cast<double>(survivors) / 1e6, 0.5, 0.01);
    EXPECT_THROW(dropout(x, 1.0, Mode::train, rng), ConfigError);
}

TEST(Dropout, SameSeedSameMask) {
    Graph<float> g;
    auto x = g.constant(Tensor<float>(Shape{2, 8, 8, 3}, 1.0f));
    std::mt19937_64 r1(99), r2(99);
    EXPECT_EQ(dropout(x, 0.5, Mode::train, r1).value().storage(), dropout(x, 0.5, Mode::train, r2).value().storage());
}

TEST(BceLoss, ClosedForms) {
    Graph<double> g;
    auto t = Tensor<double>(Shape{1, 2, 2, 1}, std::vector<double>{0, 1, 1, 0});
    auto perfect = bce_loss(g.constant(t), t).value()[0];
    EXPECT_LE(perfect, 1e-6 * std::abs(std::log(1e-7)));
    EXPECT_NEAR(bce_loss(g.constant(Tensor<double>(t.shape(), 0.5)), t).value()[0], std::log(2.0), 1e-12);
    EXPECT_NEAR(bce_loss(g.constant(Tensor<double>(Shape{1}, 0.9)), Tensor<double>(Shape{1}, 1.0)).value()[0],
                -std::log(0.9), 1e-12);
    EXPECT_NEAR(-std::log(0.9), 0.105361, 1e-6);
    EXPECT_THROW(bce_loss(g.constant(Tensor<double>(Shape{2}, 0.5)), Tensor<double>(Shape{3})), ShapeError);
}

TEST(Backward, LinearAndUnreachable) {
    Graph<double> g;
    Parameter<double> w("w", Tensor<double>(Shape{3}, std::vector<double>{1, 2, 3}));
    Parameter<double> unused("unused", Tensor<double>(Shape{2}, 1.0));
    const Tensor<double> xv(Shape{3}, std::vector<double>{0.5, -1.0, 4.0});
    auto wv = g.parameter(w);
    g.parameter(unused);
    g.backward(sum(mul(wv, g.constant(xv))));
    EXPECT_EQ(w.grad.storage(), xv.storage());
    EXPECT_EQ(unused.grad.storage(), (std::vector<double>{0, 0}));

    // Gradients accumulate across calls until zeroed.
    Graph<double> g2;
    g2.backward(sum(mul(g2.parameter(w), g2.constant(xv))));
    EXPECT_EQ(w.grad.storage(), (std::vector<double>{1.0, -2.0, 8.0}));

    Graph<double> g3;
    EXPECT_THROW(g3.backward(mul(g3.parameter(w), g3.constant(xv))), ShapeError);
}

TEST(Backward, TopologicalTape) {
    Graph<float> g;
    auto x = g.leaf(Tensor<float>(Shape{1, 4, 4, 1}, 1.0f));
    auto y = activation(maxpool2d(x, 2, 2), Activation::relu);
    sum(y);
    for (std::size_t id = 0; id < g.size(); ++id)
        for (std::size_t in : g.inputs_of(id)) EXPECT_LT(in, id);
}

TEST(Backward, Determinism) {
    auto run = [] {
        std::mt19937_64 rng(21);
        auto xv = check::random_tensor(Shape{2, 6, 6, 3}, rng).cast<float>();
        auto wv = check::random_tensor(Shape{3, 3, 3, 4}, rng).cast<float>();
        Graph<float> g;
        Parameter<float> w("w", wv);
        Parameter<float> b("b", Tensor<float>(Shape{4}));
        std::mt19937_64 drop(5);
        auto y = dropout(activation(conv2d(g.constant(xv), g.parameter(w), g.parameter(b), 1, Padding::same),
                                    Activation::elu),
                         0.5, Mode::train, drop);
        g.backward(sum(y));
        return std::make_pair(y.value().storage(), w.grad.storage());
    };
    EXPECT_EQ(run(), run());
}

TEST(Sgd, MomentumRecurrence) {
    Parameter<double> p("p", Tensor<double>(Shape{1}, 1.0));
    std::vector<Parameter<double>*> ps{&p};
    EXPECT_THROW(sgd_momentum_step<double>(ps, 0.1, 0.9), StateError);

    p.zero_grad();
    sgd_momentum_step<double>(ps, 0.1, 0.9);
    EXPECT_EQ(p.value[0], 1.0);

    const double lr = 0.001, mu = 0.9, grad = 3.0;
    p.grad[0] = grad;
    sgd_momentum_step<double>(ps, lr, mu);
    EXPECT_DOUBLE_EQ(p.value[0], 1.0 - lr * grad);
    EXPECT_EQ(p.grad[0], 0.0);
    p.grad[0] = grad;
    sgd_momentum_step<double>(ps, lr, mu);
    EXPECT_NEAR(p.value[0] - 1.0, -lr * grad * (2.0 + mu), 1e-15);
}

TEST(GradientSuite, SmallSample) {
    for (const auto& r : check::run_gradient_suite(3, 2024)) {
        SCOPED_TRACE(r.op);
        EXPECT_LT(r.max_rel_error, 1e-5);
    }
}
