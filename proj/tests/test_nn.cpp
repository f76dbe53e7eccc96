#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "pdnet/nn.hpp"
#include "test_support.hpp"

using namespace pdnet;
using namespace pdnet::nn;

namespace {

using MatD = Mat<double>;

/// Input 32, kernel 3, stride 1 everywhere: conv lengths 30, 28, 26, 24, 22.
ModelSpec tiny_spec() {
    ModelSpec s;
    s.input_length = 32;
    s.convs = {{{2, 3, 1}, {3, 3, 1}, {2, 3, 1}, {2, 3, 1}, {2, 3, 1}}};
    s.pool_window = 2;
    s.hidden = 6;
    return s;
}

/// Tiny model with small random biases so bias gradients are exercised.
nn::Model<double> tiny_model(std::uint64_t seed) {
    nn::Model<double> m(tiny_spec(), seed);
    pdtest::Gen g(seed);
    for (std::size_t l = 0; l < kConvLayers; ++l)
        for (auto& b : m.params()[param::conv_b(l)].data) b = pdtest::uniform(g, 0.0, 0.1);
    for (auto& b : m.params()[param::hidden_b].data) b = pdtest::uniform(g, 0.0, 0.1);
    for (auto& b : m.params()[param::out_b].data) b = pdtest::uniform(g, -0.1, 0.1);
    return m;
}

MatD random_mat(pdtest::Gen& g, std::size_t rows, std::size_t cols) {
    MatD m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = pdtest::uniform(g, -1, 1);
    return m;
}

Tensor<double> random_tensor(pdtest::Gen& g, std::vector<std::size_t> shape) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = pdtest::uniform(g, -1, 1);
    return t;
}

double dot(const MatD& a, const MatD& b) { return (a.array() * b.array()).sum(); }

double mean_ce(const nn::Model<double>& m, const std::vector<std::vector<double>>& xs,
               const std::vector<std::size_t>& targets) {
    Workspace<double> ws;
    std::vector<std::span<const double>> in(xs.begin(), xs.end());
    forward_batch(m, std::span<const std::span<const double>>(in), ws);
    MatD d;
    return softmax_cross_entropy(ws.logits, targets, d);
}

constexpr double kH = 1e-5;
constexpr double kTol = 1e-4;

}  // namespace

// ---------------------------------------------------------------------------
// Forward examples

TEST(Conv, HandComputedDotProducts) {
    ConvSpec c{1, 3, 1};
    Tensor<double> w({1, 1, 3}), b({1});
    w.data = {1, 2, 3};
    MatD in(1, 4), col, out;
    in << 1, 0, 0, 1;
    conv1d_forward(w, b, in, 1, 4, c, col, out);
    ASSERT_EQ(out.cols(), 2);
    EXPECT_EQ(out(0, 0), 1.0);
    EXPECT_EQ(out(0, 1), 3.0);
}

TEST(Conv, IdentityKernelCopiesInterior) {
    pdtest::Gen g(1);
    auto x = pdtest::random_signal(g, 20);
    Tensor<double> w({1, 1, 3}), b({1});
    w.data = {0, 1, 0};
    MatD in = Eigen::Map<MatD>(x.data(), 1, 20), col, out;
    conv1d_forward(w, b, in, 1, 20, ConvSpec{1, 3, 1}, col, out);
    ASSERT_EQ(out.cols(), 18);
    for (int t = 0; t < 18; ++t) EXPECT_EQ(out(0, t), x[static_cast<std::size_t>(t) + 1]);
}

TEST(Conv, MatchesDirectLoopOnRandomShapes) {
    pdtest::Gen g(2);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t cin = pdtest::uniform_index(g, 1, 4), cout = pdtest::uniform_index(g, 1, 5);
        const std::size_t k = pdtest::uniform_index(g, 1, 7), s = pdtest::uniform_index(g, 1, 4);
        const std::size_t len = pdtest::uniform_index(g, k, 60), batch = pdtest::uniform_index(g, 1, 3);
        ConvSpec c{cout, k, s};
        auto w = random_tensor(g, {cout, cin, k});
        auto b = random_tensor(g, {cout});
        MatD in = random_mat(g, cin, batch * len), col, out;
        conv1d_forward(w, b, in, batch, len, c, col, out);
        const std::size_t out_len = conv_output_length(len, c);
        for (std::size_t bi = 0; bi < batch; ++bi) {
            std::vector<std::vector<double>> sample(cin, std::vector<double>(len));
            for (std::size_t ch = 0; ch < cin; ++ch)
                for (std::size_t t = 0; t < len; ++t)
                    sample[ch][t] = in(static_cast<Eigen::Index>(ch), static_cast<Eigen::Index>(bi * len + t));
            auto expect = oracle::conv1d(sample, w.data, b.data, k, s);
            for (std::size_t o = 0; o < cout; ++o)
                for (std::size_t t = 0; t < out_len; ++t)
                    EXPECT_NEAR(out(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(bi * out_len + t)),
                                expect[o][t], 1e-12);
        }
    }
}

TEST(Forward, ZeroParametersGiveUniformProbabilities) {
    nn::Model<double> m(tiny_spec(), 1);
    for (auto& t : m.params()) t.zero();
    pdtest::Gen g(3);
    auto p = forward(m, pdtest::random_signal(g, 32));
    for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Forward, ProbabilitiesSumToOne) {
    pdtest::Gen g(4);
    auto m = nn::Model<float>(ModelSpec::compact(1000), 9);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = forward(m, pdtest::random_signal(g, 1000));
        double sum = 0;
        for (double v : p) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(Softmax, ExtremeLogitsStayFinite) {
    for (auto logits : {std::array<double, 4>{1000, -1000, 0, 999}, std::array<double, 4>{-1e300, -1e300, -1e300, -1e300},
                        std::array<double, 4>{700, 710, 720, 730}}) {
        auto p = softmax(logits);
        double sum = 0;
        for (double v : p) {
            EXPECT_TRUE(std::isfinite(v));
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
    MatD logits(4, 1), d;
    logits << 1e4, -1e4, 0, 0;
    std::vector<std::size_t> t{1};
    EXPECT_NEAR(softmax_cross_entropy(logits, t, d), 2e4, 1e-6);
}

TEST(Forward, WrongInputLengthIsShapeMismatch) {
    nn::Model<double> m(tiny_spec(), 1);
    std::vector<double> x(31);
    try {
        forward(m, x);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
    }
}

TEST(Spec, TooShortInputIsShapeMismatch) {
    EXPECT_THROW(nn::Model<double>(ModelSpec::standard(200), 1), Error);
    auto s = ModelSpec::standard(20002);
    EXPECT_LE(s.flat_size(), 4096u);
    EXPECT_NO_THROW(s.validate());
}

// ---------------------------------------------------------------------------
// Gradients, one layer at a time, against central differences.

TEST(Gradient, CrossEntropyIsSoftmaxMinusOneHot) {
    pdtest::Gen g(5);
    MatD logits = random_mat(g, 4, 3) * 3.0, d;
    std::vector<std::size_t> t{0, 3, 2};
    softmax_cross_entropy(logits, t, d);
    for (Eigen::Index b = 0; b < 3; ++b) {
        auto p = softmax(logit_column(logits, static_cast<std::size_t>(b)));
        for (Eigen::Index k = 0; k < 4; ++k) {
            const double analytic = (p[static_cast<std::size_t>(k)] - (static_cast<std::size_t>(k) == t[static_cast<std::size_t>(b)] ? 1.0 : 0.0)) / 3.0;
            EXPECT_NEAR(d(k, b), analytic, 1e-15);
            MatD scratch;
            const double fd = oracle::central_difference(
                [&] { return softmax_cross_entropy(logits, t, scratch); }, logits(k, b), kH);
            EXPECT_LE(oracle::rel_error(d(k, b), fd), kTol);
        }
    }
}

TEST(Gradient, ReluPassesOnlyPositiveOutputs) {
    MatD y(1, 4), dy(1, 4);
    y << -1, 0, 2, 3;
    relu_inplace(y);
    dy << 5, 6, 7, 8;
    relu_backward(y, dy);
    EXPECT_EQ(dy(0, 0), 0.0);
    EXPECT_EQ(dy(0, 1), 0.0);
    EXPECT_EQ(dy(0, 2), 7.0);
    EXPECT_EQ(dy(0, 3), 8.0);
}

TEST(Gradient, ConvLayerMatchesFiniteDifferences) {
    pdtest::Gen g(6);
    const std::size_t cin = 2, cout = 3, len = 17, batch = 2;
    ConvSpec c{cout, 4, 2};
    const std::size_t out_len = conv_output_length(len, c);
    auto w = random_tensor(g, {cout, cin, 4});
    auto b = random_tensor(g, {cout});
    MatD in = random_mat(g, cin, batch * len);
    MatD r = random_mat(g, cout, batch * out_len);
    auto f = [&] {
        MatD col, out;
        conv1d_forward(w, b, in, batch, len, c, col, out);
        return dot(out, r);
    };
    MatD col, out, din, scratch;
    conv1d_forward(w, b, in, batch, len, c, col, out);
    Tensor<double> dw(w.shape), db(b.shape);
    conv1d_backward(w, col, r, batch, len, c, dw, db, &din, scratch);
    for (std::size_t i = 0; i < w.size(); ++i)
        EXPECT_LE(oracle::rel_error(dw.data[i], oracle::central_difference(f, w.data[i], kH)), kTol) << "w" << i;
    for (std::size_t i = 0; i < b.size(); ++i)
        EXPECT_LE(oracle::rel_error(db.data[i], oracle::central_difference(f, b.data[i], kH)), kTol) << "b" << i;
    for (Eigen::Index i = 0; i < in.size(); ++i)
        EXPECT_LE(oracle::rel_error(din.data()[i], oracle::central_difference(f, in.data()[i], kH)), kTol) << "x" << i;
}

TEST(Gradient, DenseLayerMatchesFiniteDifferences) {
    pdtest::Gen g(7);
    auto w = random_tensor(g, {5, 7});
    auto b = random_tensor(g, {5});
    MatD in = random_mat(g, 7, 3), r = random_mat(g, 5, 3);
    auto f = [&] {
        MatD out;
        dense_forward(w, b, in, out);
        return dot(out, r);
    };
    Tensor<double> dw(w.shape), db(b.shape);
    MatD din;
    dense_backward(w, in, r, dw, db, &din);
    for (std::size_t i = 0; i < w.size(); ++i)
        EXPECT_LE(oracle::rel_error(dw.data[i], oracle::central_difference(f, w.data[i], kH)), kTol);
    for (std::size_t i = 0; i < b.size(); ++i)
        EXPECT_LE(oracle::rel_error(db.data[i], oracle::central_difference(f, b.data[i], kH)), kTol);
    for (Eigen::Index i = 0; i < in.size(); ++i)
        EXPECT_LE(oracle::rel_error(din.data()[i], oracle::central_difference(f, in.data()[i], kH)), kTol);
}

TEST(Gradient, AvgPoolMatchesFiniteDifferences) {
    pdtest::Gen g(8);
    const std::size_t batch = 2, len = 11, window = 3, pooled = len / window;
    MatD in = random_mat(g, 3, batch * len), r = random_mat(g, 3, batch * pooled);
    auto f = [&] {
        MatD out;
        avgpool_forward(in, batch, len, window, out);
        return dot(out, r);
    };
    MatD din;
    avgpool_backward(r, batch, len, window, din);
    for (Eigen::Index i = 0; i < in.size(); ++i) {
        const double fd = oracle::central_difference(f, in.data()[i], kH);
        if (din.data()[i] == 0.0)
            EXPECT_NEAR(fd, 0.0, 1e-10);
        else
            EXPECT_LE(oracle::rel_error(din.data()[i], fd), kTol);
    }
}

TEST(Gradient, FlattenRoundTrips) {
    pdtest::Gen g(9);
    MatD in = random_mat(g, 3, 2 * 5), flat, back;
    flatten(in, 2, 5, flat);
    unflatten(flat, 2, 5, 3, back);
    EXPECT_EQ(in, back);
    EXPECT_EQ(flat(1 * 5 + 2, 1), in(1, 1 * 5 + 2));
}

TEST(Gradient, ComposedModelMatchesFiniteDifferences) {
    pdtest::Gen g(10);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto m = tiny_model(seed);
        std::vector<std::vector<double>> xs{pdtest::random_signal(g, 32), pdtest::random_signal(g, 32)};
        std::vector<std::size_t> targets{seed % 4, (seed + 1) % 4};
        Workspace<double> ws;
        auto grads = zero_grads(m);
        std::vector<std::span<const double>> in(xs.begin(), xs.end());
        loss_and_grad(m, std::span<const std::span<const double>>(in), std::span<const std::size_t>(targets), ws,
                      grads);
        std::size_t checked = 0;
        for (std::size_t k = 0; k < param::count; ++k) {
            auto& p = m.params()[k].data;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double fd = oracle::central_difference([&] { return mean_ce(m, xs, targets); }, p[i], kH);
                const double analytic = grads[k].data[i];
                if (analytic == 0.0 && std::abs(fd) < 1e-10) continue;  // dead unit
                EXPECT_LE(oracle::rel_error(analytic, fd), kTol) << "seed " << seed << " tensor " << k << " i " << i;
                ++checked;
            }
        }
        EXPECT_GT(checked, m.parameter_count() / 2);
    }
}

TEST(Gradient, SingleExampleLossIsNegativeLogProbability) {
    auto m = tiny_model(4);
    pdtest::Gen g(11);
    auto x = pdtest::random_signal(g, 32);
    for (std::size_t k = 0; k < 4; ++k) {
        auto [loss, grads] = backward(m, x, static_cast<OutputClass>(k));
        EXPECT_NEAR(loss, -std::log(forward(m, x)[k]), 1e-12);
        ASSERT_EQ(grads.size(), m.params().size());
        for (std::size_t i = 0; i < grads.size(); ++i) EXPECT_EQ(grads[i].shape, m.params()[i].shape);
    }
}

// ---------------------------------------------------------------------------
// ADAM

TEST(Adam, FirstStepIsBoundedByLearningRate) {
    pdtest::Gen g(12);
    ParamList<double> p{random_tensor(g, {50})}, grad{random_tensor(g, {50})};
    for (std::size_t i = 0; i < 50; i += 5) grad[0].data[i] *= 1e-6;
    auto before = p;
    AdamState<double> st(p, {});
    adam_step(p, grad, st);
    EXPECT_EQ(st.t, 1u);
    for (std::size_t i = 0; i < 50; ++i) {
        const double gi = grad[0].data[i];
        const double delta = before[0].data[i] - p[0].data[i];
        EXPECT_LE(std::abs(delta), 1e-4 * (1 + 1e-9));
        EXPECT_NEAR(delta, 1e-4 * gi / (std::abs(gi) + 1e-8), 1e-15);
    }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    pdtest::Gen g(13);
    ParamList<double> p{random_tensor(g, {4, 3}), random_tensor(g, {4})};
    auto before = p;
    auto zero = p;
    for (auto& t : zero) t.zero();
    AdamState<double> st(p, {});
    for (int i = 0; i < 3; ++i) adam_step(p, zero, st);
    EXPECT_EQ(p, before);
    EXPECT_EQ(st.t, 3u);
}

TEST(Adam, TwoStepsReproduceHandTrace) {
    // g1 = 0.5, g2 = -0.2, p0 = 1, lr 1e-4:
    // t=1: m = 0.05, v = 0.00025, m_hat = 0.05/0.1, v_hat = 0.00025/0.001
    // t=2: m = 0.025, v = 0.00028975, m_hat = 0.025/0.19, v_hat = 0.00028975/0.001999
    const double p1 = 1.0 - 1e-4 * (0.05 / 0.1) / (std::sqrt(0.00025 / 0.001) + 1e-8);
    const double p2 = p1 - 1e-4 * (0.025 / 0.19) / (std::sqrt(0.00028975 / 0.001999) + 1e-8);
    ParamList<double> p{Tensor<double>({1})};
    p[0].data[0] = 1.0;
    AdamState<double> st(p, {});
    ParamList<double> grad{Tensor<double>({1})};
    grad[0].data[0] = 0.5;
    adam_step(p, grad, st);
    EXPECT_NEAR(p[0].data[0], p1, 1e-15);
    EXPECT_NEAR(st.m[0].data[0], 0.05, 1e-15);
    EXPECT_NEAR(st.v[0].data[0], 0.00025, 1e-18);
    grad[0].data[0] = -0.2;
    adam_step(p, grad, st);
    EXPECT_NEAR(st.m[0].data[0], 0.025, 1e-15);
    EXPECT_NEAR(st.v[0].data[0], 0.00028975, 1e-18);
    EXPECT_NEAR(p[0].data[0], p2, 1e-15);
}

TEST(Adam, MismatchedShapesAreRejected) {
    ParamList<double> p{Tensor<double>({3})}, grad{Tensor<double>({3}), Tensor<double>({1})};
    AdamState<double> st(p, {});
    EXPECT_THROW(adam_step(p, grad, st), Error);
}

// ---------------------------------------------------------------------------
// Training behaviour

namespace {

/// Eight samples, two per class, each class a distinct tone.
std::pair<std::vector<std::vector<double>>, std::vector<std::size_t>> separable_batch(std::size_t len) {
    std::vector<std::vector<double>> xs;
    std::vector<std::size_t> ts;
    pdtest::Gen g(21);
    for (std::size_t k = 0; k < 4; ++k)
        for (int rep = 0; rep < 2; ++rep) {
            std::vector<double> x(len);
            for (std::size_t t = 0; t < len; ++t)
                x[t] = std::sin(2 * std::numbers::pi * static_cast<double>((k + 1) * 3 * t) / static_cast<double>(len)) +
                       0.05 * pdtest::uniform(g, -1, 1);
            xs.push_back(std::move(x));
            ts.push_back(k);
        }
    return {xs, ts};
}

template <typename S>
std::vector<double> train_steps(nn::Model<S>& m, int steps, double lr) {
    auto [xs, ts] = separable_batch(m.spec().input_length);
    std::vector<std::span<const double>> in(xs.begin(), xs.end());
    AdamState<S> st(m.params(), {lr});
    Workspace<S> ws;
    std::vector<double> losses;
    for (int s = 0; s < steps; ++s) {
        auto grads = zero_grads(m);
        losses.push_back(loss_and_grad(m, std::span<const std::span<const double>>(in),
                                       std::span<const std::size_t>(ts), ws, grads));
        adam_step(m.params(), grads, st);
    }
    return losses;
}

}  // namespace

TEST(Training, LossDecreasesOnSeparableBatch) {
    nn::Model<float> m(ModelSpec::compact(1000), 5);
    auto losses = train_steps(m, 51, 1e-4);
    int decreases = 0;
    for (std::size_t i = 1; i < losses.size(); ++i) decreases += losses[i] < losses[i - 1];
    EXPECT_GE(decreases, 45);
    EXPECT_LT(losses.back(), losses.front());
}

TEST(Training, FixedSeedAndOrderAreBitExact) {
    nn::Model<float> a(ModelSpec::compact(1000), 7), b(ModelSpec::compact(1000), 7), c(ModelSpec::compact(1000), 8);
    EXPECT_EQ(a, b);
    EXPECT_NE(a.params(), c.params());
    train_steps(a, 5, 1e-3);
    train_steps(b, 5, 1e-3);
    EXPECT_EQ(a.params(), b.params());
}

TEST(Training, FloatAndDoubleModelsAgreeAtInit) {
    nn::Model<double> d(tiny_spec(), 3);
    auto f = nn::Model<float>(tiny_spec(), 3).cast<double>();
    for (std::size_t k = 0; k < param::count; ++k)
        for (std::size_t i = 0; i < d.params()[k].size(); ++i)
            EXPECT_NEAR(d.params()[k].data[i], f.params()[k].data[i], 1e-6);
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, RoundTripIsExactForFloatModels) {
    nn::Model<float> m(ModelSpec::compact(1000), 42);
    std::stringstream buf;
    write_checkpoint(buf, m);
    EXPECT_EQ(buf.str().substr(0, 4), "PDNN");
    auto back = read_checkpoint<float>(buf);
    EXPECT_EQ(back, m);
}

TEST(Checkpoint, FileRoundTrip) {
    pdtest::TempDir dir("ckpt");
    nn::Model<float> m(tiny_spec(), 3);
    save_checkpoint(m, dir.file("m.pdnn"));
    EXPECT_EQ(load_checkpoint<float>(dir.file("m.pdnn")), m);
}

TEST(Checkpoint, BadMagicAndShapesAreRejected) {
    std::stringstream bad("PDDS0000");
    try {
        read_checkpoint<float>(bad);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MagicMismatch);
    }
    auto params = make_param_shapes<double>(tiny_spec());
    params[param::hidden_w] = Tensor<double>({6, 3});
    try {
        nn::Model<double>::from_params(tiny_spec(), 0, params);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
    }
}
