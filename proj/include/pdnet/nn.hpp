#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pdnet/binary_io.hpp"
#include "pdnet/dataset.hpp"
#include "pdnet/error.hpp"
#include "pdnet/rng.hpp"

// Fixed-topology 1D CNN: five Conv1D+ReLU blocks, average pooling, flatten,
// Dense+ReLU, Dense with softmax. Activations of a mini-batch are stored as
// (channels x batch*length) row-major matrices, so sample b of channel c
// occupies columns [b*length, (b+1)*length). Every layer then reduces to a
// single matrix product per batch.
namespace pdnet::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

inline constexpr std::size_t kConvLayers = 5;
inline constexpr std::size_t kOutputs = kNumOutputClasses;

struct ConvSpec {
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;

    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

inline std::size_t conv_output_length(std::size_t in, const ConvSpec& c) {
    return in < c.kernel ? 0 : (in - c.kernel) / c.stride + 1;
}

struct ModelSpec {
    std::size_t input_length = 0;
    std::array<ConvSpec, kConvLayers> convs{};
    std::size_t pool_window = 1;  ///< 0 means global average pooling
    std::size_t hidden = 512;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;

    std::array<std::size_t, kConvLayers + 1> lengths() const {
        std::array<std::size_t, kConvLayers + 1> out{};
        out[0] = input_length;
        for (std::size_t i = 0; i < kConvLayers; ++i) out[i + 1] = conv_output_length(out[i], convs[i]);
        return out;
    }

    std::size_t conv_length() const { return lengths().back(); }
    std::size_t pool_size() const { return pool_window == 0 ? conv_length() : pool_window; }
    std::size_t pooled_length() const { return pool_size() == 0 ? 0 : conv_length() / pool_size(); }
    std::size_t in_channels(std::size_t layer) const { return layer == 0 ? 1 : convs[layer - 1].out_channels; }
    std::size_t flat_size() const { return convs.back().out_channels * pooled_length(); }

    void validate() const {
        require(input_length > 0, ErrorKind::ShapeMismatch, "input length must be positive");
        auto lens = lengths();
        for (std::size_t i = 0; i < kConvLayers; ++i) {
            require(convs[i].out_channels > 0 && convs[i].kernel > 0 && convs[i].stride > 0, ErrorKind::ShapeMismatch,
                    "conv layer " + std::to_string(i + 1) + " has a zero dimension");
            require(lens[i + 1] > 0, ErrorKind::ShapeMismatch,
                    "input length " + std::to_string(input_length) + " too short for conv layer " +
                        std::to_string(i + 1));
        }
        require(pooled_length() > 0, ErrorKind::ShapeMismatch, "pooling window longer than conv output");
        require(hidden > 0, ErrorKind::ShapeMismatch, "hidden width must be positive");
    }

    /// Smallest pooling window that keeps the flattened size within `max_flat`.
    ModelSpec& auto_pool(std::size_t max_flat = 4096) {
        const auto len = conv_length();
        const auto ch = convs.back().out_channels;
        std::size_t w = 1;
        while (w < len && ch * (len / w) > max_flat) ++w;
        pool_window = w;
        return *this;
    }

    /// Default stack: channels 16-32-64-64-128, kernel 9, stride 3.
    static ModelSpec standard(std::size_t input_length) {
        ModelSpec s;
        s.input_length = input_length;
        s.convs = {{{16, 9, 3}, {32, 9, 3}, {64, 9, 3}, {64, 9, 3}, {128, 9, 3}}};
        s.hidden = 512;
        s.auto_pool();
        return s;
    }

    /// Narrow stack with the same topology for single-core desk runs.
    static ModelSpec compact(std::size_t input_length) {
        ModelSpec s;
        s.input_length = input_length;
        s.convs = {{{8, 9, 3}, {16, 9, 3}, {16, 9, 3}, {32, 9, 3}, {32, 9, 3}}};
        s.hidden = 512;
        s.auto_pool();
        return s;
    }
};

template <typename S>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<S> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims) : shape(std::move(dims)) {
        data.assign(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()), S(0));
    }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rows() const noexcept { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const noexcept { return shape.empty() ? 0 : data.size() / shape[0]; }

    Eigen::Map<Mat<S>> mat() { return {data.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())}; }
    Eigen::Map<const Mat<S>> mat() const {
        return {data.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
    }
    Eigen::Map<Vec<S>> vec() { return {data.data(), static_cast<Eigen::Index>(data.size())}; }
    Eigen::Map<const Vec<S>> vec() const { return {data.data(), static_cast<Eigen::Index>(data.size())}; }

    void zero() { std::fill(data.begin(), data.end(), S(0)); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <typename S>
using ParamList = std::vector<Tensor<S>>;

/// Parameter tensor indices.
namespace param {
constexpr std::size_t conv_w(std::size_t layer) { return 2 * layer; }
constexpr std::size_t conv_b(std::size_t layer) { return 2 * layer + 1; }
constexpr std::size_t hidden_w = 2 * kConvLayers;
constexpr std::size_t hidden_b = hidden_w + 1;
constexpr std::size_t out_w = hidden_w + 2;
constexpr std::size_t out_b = hidden_w + 3;
constexpr std::size_t count = hidden_w + 4;
}  // namespace param

/// Zero-filled tensors shaped like the parameters of `spec`.
template <typename S>
ParamList<S> make_param_shapes(const ModelSpec& spec) {
    ParamList<S> p;
    p.reserve(param::count);
    for (std::size_t i = 0; i < kConvLayers; ++i) {
        const auto& c = spec.convs[i];
        p.emplace_back(std::vector<std::size_t>{c.out_channels, spec.in_channels(i), c.kernel});
        p.emplace_back(std::vector<std::size_t>{c.out_channels});
    }
    p.emplace_back(std::vector<std::size_t>{spec.hidden, spec.flat_size()});
    p.emplace_back(std::vector<std::size_t>{spec.hidden});
    p.emplace_back(std::vector<std::size_t>{kOutputs, spec.hidden});
    p.emplace_back(std::vector<std::size_t>{kOutputs});
    return p;
}

template <typename S>
class Model {
public:
    Model() = default;

    /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases. Tensor k
    /// draws from its own stream, in double precision, so float and double
    /// models built from one seed agree to rounding.
    Model(const ModelSpec& spec, std::uint64_t init_seed) : spec_(spec), init_seed_(init_seed) {
        spec_.validate();
        params_ = make_param_shapes<S>(spec_);
        for (std::size_t k = 0; k < params_.size(); k += 2) {
            auto& w = params_[k];
            const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
            auto rng = make_stream(init_seed, streams::init, k);
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (auto& x : w.data) x = static_cast<S>(dist(rng));
        }
    }

    const ModelSpec& spec() const noexcept { return spec_; }
    std::uint64_t init_seed() const noexcept { return init_seed_; }
    ParamList<S>& params() noexcept { return params_; }
    const ParamList<S>& params() const noexcept { return params_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : params_) n += t.size();
        return n;
    }

    template <typename T>
    Model<T> cast() const {
        Model<T> out;
        out.spec_ = spec_;
        out.init_seed_ = init_seed_;
        out.params_.reserve(params_.size());
        for (const auto& t : params_) {
            Tensor<T> c;
            c.shape = t.shape;
            c.data.assign(t.data.begin(), t.data.end());
            out.params_.push_back(std::move(c));
        }
        return out;
    }

    /// Builds a model from explicit parameters (checkpoint loading).
    static Model from_params(const ModelSpec& spec, std::uint64_t init_seed, ParamList<S> params) {
        spec.validate();
        auto shapes = make_param_shapes<S>(spec);
        require(params.size() == shapes.size(), ErrorKind::ShapeMismatch, "wrong number of parameter tensors");
        for (std::size_t i = 0; i < params.size(); ++i)
            require(params[i].shape == shapes[i].shape && params[i].data.size() == shapes[i].data.size(),
                    ErrorKind::ShapeMismatch, "parameter tensor " + std::to_string(i) + " has the wrong shape");
        Model m;
        m.spec_ = spec;
        m.init_seed_ = init_seed;
        m.params_ = std::move(params);
        return m;
    }

    friend bool operator==(const Model&, const Model&) = default;

private:
    template <typename>
    friend class Model;

    ModelSpec spec_;
    std::uint64_t init_seed_ = 0;
    ParamList<S> params_;
};

// ---------------------------------------------------------------------------
// Layer kernels. `batch` samples of `len` positions per channel row.

/// Gathers the receptive fields of every output position into columns:
/// col(c*K + j, b*L_out + t) = in(c, b*L_in + t*stride + j).
template <typename S>
void im2col(const Mat<S>& in, std::size_t batch, std::size_t in_len, const ConvSpec& c, std::size_t out_len,
            Mat<S>& col) {
    const auto channels = static_cast<std::size_t>(in.rows());
    col.resize(static_cast<Eigen::Index>(channels * c.kernel), static_cast<Eigen::Index>(batch * out_len));
    for (std::size_t ch = 0; ch < channels; ++ch) {
        const S* src = in.data() + ch * in.cols();
        for (std::size_t j = 0; j < c.kernel; ++j) {
            S* dst = col.data() + (ch * c.kernel + j) * col.cols();
            for (std::size_t b = 0; b < batch; ++b) {
                const S* s = src + b * in_len + j;
                S* d = dst + b * out_len;
                for (std::size_t t = 0; t < out_len; ++t) d[t] = s[t * c.stride];
            }
        }
    }
}

/// Adjoint of im2col: scatters column gradients back onto the input.
template <typename S>
void col2im(const Mat<S>& dcol, std::size_t batch, std::size_t in_len, const ConvSpec& c, std::size_t out_len,
            std::size_t channels, Mat<S>& din) {
    din.setZero(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(batch * in_len));
    for (std::size_t ch = 0; ch < channels; ++ch) {
        S* dst = din.data() + ch * din.cols();
        for (std::size_t j = 0; j < c.kernel; ++j) {
            const S* src = dcol.data() + (ch * c.kernel + j) * dcol.cols();
            for (std::size_t b = 0; b < batch; ++b) {
                S* d = dst + b * in_len + j;
                const S* s = src + b * out_len;
                for (std::size_t t = 0; t < out_len; ++t) d[t * c.stride] += s[t];
            }
        }
    }
}

/// Valid-padding strided convolution (cross-correlation), no activation.
template <typename S>
void conv1d_forward(const Tensor<S>& w, const Tensor<S>& bias, const Mat<S>& in, std::size_t batch,
                    std::size_t in_len, const ConvSpec& c, Mat<S>& col, Mat<S>& out) {
    const auto out_len = conv_output_length(in_len, c);
    im2col(in, batch, in_len, c, out_len, col);
    out.noalias() = w.mat() * col;
    out.colwise() += bias.vec();
}

/// Accumulates dW, db; writes din when requested.
template <typename S>
void conv1d_backward(const Tensor<S>& w, const Mat<S>& col, const Mat<S>& dout, std::size_t batch,
                     std::size_t in_len, const ConvSpec& c, Tensor<S>& dw, Tensor<S>& db, Mat<S>* din,
                     Mat<S>& scratch) {
    dw.mat().noalias() += dout * col.transpose();
    db.vec() += dout.rowwise().sum();
    if (din) {
        scratch.noalias() = w.mat().transpose() * dout;
        col2im(scratch, batch, in_len, c, conv_output_length(in_len, c), static_cast<std::size_t>(w.cols() / c.kernel),
               *din);
    }
}

template <typename S>
void relu_inplace(Mat<S>& x) {
    x = x.cwiseMax(S(0));
}

/// dx = dy where the ReLU output was positive, else 0.
template <typename S>
void relu_backward(const Mat<S>& y, Mat<S>& dy) {
    dy = (y.array() > S(0)).select(dy, S(0));
}

/// Non-overlapping average pooling; trailing positions that do not fill a
/// window are dropped.
template <typename S>
void avgpool_forward(const Mat<S>& in, std::size_t batch, std::size_t len, std::size_t window, Mat<S>& out) {
    const std::size_t pooled = len / window;
    out.resize(in.rows(), static_cast<Eigen::Index>(batch * pooled));
    const S scale = S(1) / static_cast<S>(window);
    for (Eigen::Index ch = 0; ch < in.rows(); ++ch) {
        for (std::size_t b = 0; b < batch; ++b) {
            const S* src = in.data() + ch * in.cols() + b * len;
            S* dst = out.data() + ch * out.cols() + b * pooled;
            for (std::size_t p = 0; p < pooled; ++p) {
                S acc = 0;
                for (std::size_t j = 0; j < window; ++j) acc += src[p * window + j];
                dst[p] = acc * scale;
            }
        }
    }
}

template <typename S>
void avgpool_backward(const Mat<S>& dout, std::size_t batch, std::size_t len, std::size_t window, Mat<S>& din) {
    const std::size_t pooled = len / window;
    din.setZero(dout.rows(), static_cast<Eigen::Index>(batch * len));
    const S scale = S(1) / static_cast<S>(window);
    for (Eigen::Index ch = 0; ch < dout.rows(); ++ch) {
        for (std::size_t b = 0; b < batch; ++b) {
            const S* src = dout.data() + ch * dout.cols() + b * pooled;
            S* dst = din.data() + ch * din.cols() + b * len;
            for (std::size_t p = 0; p < pooled; ++p)
                for (std::size_t j = 0; j < window; ++j) dst[p * window + j] = src[p] * scale;
        }
    }
}

/// (C x batch*P) -> (C*P x batch): feature c*P + p of sample b.
template <typename S>
void flatten(const Mat<S>& in, std::size_t batch, std::size_t pooled, Mat<S>& out) {
    out.resize(static_cast<Eigen::Index>(in.rows() * pooled), static_cast<Eigen::Index>(batch));
    for (Eigen::Index ch = 0; ch < in.rows(); ++ch)
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t p = 0; p < pooled; ++p)
                out(static_cast<Eigen::Index>(ch * pooled + p), static_cast<Eigen::Index>(b)) =
                    in(ch, static_cast<Eigen::Index>(b * pooled + p));
}

template <typename S>
void unflatten(const Mat<S>& in, std::size_t batch, std::size_t pooled, std::size_t channels, Mat<S>& out) {
    out.resize(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(batch * pooled));
    for (std::size_t ch = 0; ch < channels; ++ch)
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t p = 0; p < pooled; ++p)
                out(static_cast<Eigen::Index>(ch), static_cast<Eigen::Index>(b * pooled + p)) =
                    in(static_cast<Eigen::Index>(ch * pooled + p), static_cast<Eigen::Index>(b));
}

/// out = W in + b, one column per sample.
template <typename S>
void dense_forward(const Tensor<S>& w, const Tensor<S>& bias, const Mat<S>& in, Mat<S>& out) {
    out.noalias() = w.mat() * in;
    out.colwise() += bias.vec();
}

template <typename S>
void dense_backward(const Tensor<S>& w, const Mat<S>& in, const Mat<S>& dout, Tensor<S>& dw, Tensor<S>& db,
                    Mat<S>* din) {
    dw.mat().noalias() += dout * in.transpose();
    db.vec() += dout.rowwise().sum();
    if (din) din->noalias() = w.mat().transpose() * dout;
}

/// Numerically stable softmax of one logit column, in double.
template <typename S>
std::array<double, kOutputs> softmax(const std::array<S, kOutputs>& logits) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < kOutputs; ++k) m = std::max(m, static_cast<double>(logits[k]));
    std::array<double, kOutputs> p{};
    double z = 0.0;
    for (std::size_t k = 0; k < kOutputs; ++k) z += (p[k] = std::exp(static_cast<double>(logits[k]) - m));
    for (auto& v : p) v /= z;
    return p;
}

/// Mean cross-entropy over the batch via log-sum-exp; dlogits receives
/// (softmax - onehot) / batch.
template <typename S>
double softmax_cross_entropy(const Mat<S>& logits, std::span<const std::size_t> targets, Mat<S>& dlogits) {
    const auto batch = static_cast<std::size_t>(logits.cols());
    require(targets.size() == batch, ErrorKind::ShapeMismatch, "target count does not match batch");
    dlogits.resize(logits.rows(), logits.cols());
    double total = 0.0;
    std::array<S, kOutputs> col{};
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < kOutputs; ++k) col[k] = logits(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(b));
        double m = -std::numeric_limits<double>::infinity();
        for (auto v : col) m = std::max(m, static_cast<double>(v));
        double z = 0.0;
        for (auto v : col) z += std::exp(static_cast<double>(v) - m);
        const double lse = m + std::log(z);
        require(targets[b] < kOutputs, ErrorKind::ShapeMismatch, "target class out of range");
        total += lse - static_cast<double>(col[targets[b]]);
        for (std::size_t k = 0; k < kOutputs; ++k) {
            double g = std::exp(static_cast<double>(col[k]) - lse) - (k == targets[b] ? 1.0 : 0.0);
            dlogits(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(b)) = static_cast<S>(g / static_cast<double>(batch));
        }
    }
    return total / static_cast<double>(batch);
}

// ---------------------------------------------------------------------------
// Composed network.

/// Per-batch activation cache reused across calls.
template <typename S>
struct Workspace {
    std::array<Mat<S>, kConvLayers + 1> act;  ///< act[0] input, act[i+1] post-ReLU conv i
    std::array<Mat<S>, kConvLayers> col;
    Mat<S> pooled, flat, hidden, logits;
    Mat<S> grad, grad_prev, scratch;
    std::size_t batch = 0;
};

template <typename S>
void check_finite(const Mat<S>& m, const char* where) {
#ifndef NDEBUG
    require(m.allFinite(), ErrorKind::Data, std::string("non-finite activation in ") + where);
#else
    (void)m;
    (void)where;
#endif
}

/// Copies `inputs` (one span per sample) into act[0] and runs the forward pass.
/// Leaves logits (4 x batch) in ws.logits.
template <typename S, typename Input>
void forward_batch(const Model<S>& model, std::span<const Input> inputs, Workspace<S>& ws) {
    const auto& spec = model.spec();
    const auto& p = model.params();
    const auto lens = spec.lengths();
    const std::size_t batch = inputs.size();
    ws.batch = batch;
    ws.act[0].resize(1, static_cast<Eigen::Index>(batch * spec.input_length));
    for (std::size_t b = 0; b < batch; ++b) {
        require(inputs[b].size() == spec.input_length, ErrorKind::ShapeMismatch,
                "input length " + std::to_string(inputs[b].size()) + " does not match model input " +
                    std::to_string(spec.input_length));
        S* dst = ws.act[0].data() + b * spec.input_length;
        for (std::size_t i = 0; i < spec.input_length; ++i) dst[i] = static_cast<S>(inputs[b][i]);
    }
    for (std::size_t l = 0; l < kConvLayers; ++l) {
        conv1d_forward(p[param::conv_w(l)], p[param::conv_b(l)], ws.act[l], batch, lens[l], spec.convs[l], ws.col[l],
                       ws.act[l + 1]);
        relu_inplace(ws.act[l + 1]);
        check_finite(ws.act[l + 1], "conv");
    }
    avgpool_forward(ws.act[kConvLayers], batch, lens[kConvLayers], spec.pool_size(), ws.pooled);
    flatten(ws.pooled, batch, spec.pooled_length(), ws.flat);
    dense_forward(p[param::hidden_w], p[param::hidden_b], ws.flat, ws.hidden);
    relu_inplace(ws.hidden);
    dense_forward(p[param::out_w], p[param::out_b], ws.hidden, ws.logits);
    check_finite(ws.logits, "logits");
}

/// Backpropagates dlogits (already in ws.grad) into `grads` (accumulated).
template <typename S>
void backward_batch(const Model<S>& model, Workspace<S>& ws, ParamList<S>& grads) {
    const auto& spec = model.spec();
    const auto& p = model.params();
    const auto lens = spec.lengths();
    const std::size_t batch = ws.batch;

    dense_backward(p[param::out_w], ws.hidden, ws.grad, grads[param::out_w], grads[param::out_b], &ws.grad_prev);
    relu_backward(ws.hidden, ws.grad_prev);
    dense_backward(p[param::hidden_w], ws.flat, ws.grad_prev, grads[param::hidden_w], grads[param::hidden_b],
                   &ws.grad);
    unflatten(ws.grad, batch, spec.pooled_length(), spec.convs.back().out_channels, ws.grad_prev);
    avgpool_backward(ws.grad_prev, batch, lens[kConvLayers], spec.pool_size(), ws.grad);
    for (std::size_t l = kConvLayers; l-- > 0;) {
        relu_backward(ws.act[l + 1], ws.grad);
        conv1d_backward(p[param::conv_w(l)], ws.col[l], ws.grad, batch, lens[l], spec.convs[l], grads[param::conv_w(l)],
                        grads[param::conv_b(l)], l > 0 ? &ws.grad_prev : nullptr, ws.scratch);
        if (l > 0) std::swap(ws.grad, ws.grad_prev);
    }
}

template <typename S>
ParamList<S> zero_grads(const Model<S>& model) {
    return make_param_shapes<S>(model.spec());
}

/// Mean loss over the batch; gradients of the mean loss are added to `grads`.
template <typename S, typename Input>
double loss_and_grad(const Model<S>& model, std::span<const Input> inputs, std::span<const std::size_t> targets,
                     Workspace<S>& ws, ParamList<S>& grads) {
    forward_batch(model, inputs, ws);
    const double loss = softmax_cross_entropy(ws.logits, targets, ws.grad);
    backward_batch(model, ws, grads);
    return loss;
}

/// Logit column b of a (4 x batch) matrix.
template <typename S>
std::array<S, kOutputs> logit_column(const Mat<S>& logits, std::size_t b) {
    std::array<S, kOutputs> out{};
    for (std::size_t k = 0; k < kOutputs; ++k)
        out[k] = logits(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(b));
    return out;
}

/// Class probabilities for one input vector.
template <typename S>
std::array<double, kOutputs> forward(const Model<S>& model, std::span<const double> x) {
    Workspace<S> ws;
    std::array<std::span<const double>, 1> in{x};
    forward_batch(model, std::span<const std::span<const double>>(in), ws);
    return softmax(logit_column(ws.logits, 0));
}

/// Loss -log p_target and parameter gradients for a single example.
template <typename S>
std::pair<double, ParamList<S>> backward(const Model<S>& model, std::span<const double> x, OutputClass target) {
    Workspace<S> ws;
    auto grads = zero_grads(model);
    std::array<std::span<const double>, 1> in{x};
    std::array<std::size_t, 1> t{index_of(target)};
    double loss = loss_and_grad(model, std::span<const std::span<const double>>(in), std::span<const std::size_t>(t),
                                ws, grads);
    return {loss, std::move(grads)};
}

/// Argmax with ties broken towards the lowest class index.
template <typename T>
std::size_t argmax(const T* values, std::size_t n = kOutputs) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k)
        if (values[k] > values[best]) best = k;
    return best;
}

// ---------------------------------------------------------------------------
// ADAM

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename S>
struct AdamState {
    AdamHyper hyper;
    ParamList<S> m, v;
    std::uint64_t t = 0;

    AdamState() = default;
    AdamState(const ParamList<S>& params, AdamHyper h) : hyper(h) {
        for (const auto& p : params) {
            m.emplace_back(p.shape);
            v.emplace_back(p.shape);
        }
    }
};

/// m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
/// p <- p - lr * m_hat / (sqrt(v_hat) + eps) with bias-corrected moments.
template <typename S>
void adam_step(ParamList<S>& params, const ParamList<S>& grads, AdamState<S>& state) {
    require(params.size() == grads.size() && params.size() == state.m.size(), ErrorKind::ShapeMismatch,
            "ADAM: parameter/gradient/state tensor counts differ");
    state.t += 1;
    const auto& h = state.hyper;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
    const S b1 = static_cast<S>(h.beta1), b2 = static_cast<S>(h.beta2);
    const S step = static_cast<S>(h.lr / c1);
    const S inv_c2 = static_cast<S>(1.0 / c2);
    const S eps = static_cast<S>(h.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k].data;
        const auto& g = grads[k].data;
        auto& m = state.m[k].data;
        auto& v = state.v[k].data;
        require(p.size() == g.size() && p.size() == m.size(), ErrorKind::ShapeMismatch,
                "ADAM: tensor " + std::to_string(k) + " size mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (S(1) - b1) * g[i];
            v[i] = b2 * v[i] + (S(1) - b2) * g[i] * g[i];
            p[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoint: magic "PDNN", version u16 = 1, input_length u32,
// 5 x (out_channels u32, kernel u32, stride u32), pool_window u32,
// hidden u32, outputs u32, init_seed u64, tensor count u32, then per tensor
// rank u32, dims u32 x rank, float32 values (row-major).

inline constexpr std::uint16_t kCheckpointVersion = 1;

template <typename S>
void write_checkpoint(std::ostream& out, const Model<S>& model) {
    const auto& s = model.spec();
    bin::put_magic(out, "PDNN");
    bin::put_u16(out, kCheckpointVersion);
    bin::put_u32(out, static_cast<std::uint32_t>(s.input_length));
    for (const auto& c : s.convs) {
        bin::put_u32(out, static_cast<std::uint32_t>(c.out_channels));
        bin::put_u32(out, static_cast<std::uint32_t>(c.kernel));
        bin::put_u32(out, static_cast<std::uint32_t>(c.stride));
    }
    bin::put_u32(out, static_cast<std::uint32_t>(s.pool_window));
    bin::put_u32(out, static_cast<std::uint32_t>(s.hidden));
    bin::put_u32(out, static_cast<std::uint32_t>(kOutputs));
    bin::put_u64(out, model.init_seed());
    bin::put_u32(out, static_cast<std::uint32_t>(model.params().size()));
    for (const auto& t : model.params()) {
        bin::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) bin::put_u32(out, static_cast<std::uint32_t>(d));
        for (auto v : t.data) bin::put_f32(out, static_cast<float>(v));
    }
}

template <typename S>
Model<S> read_checkpoint(std::istream& in) {
    bin::expect_magic(in, "PDNN");
    auto version = bin::get_u16(in);
    require(version == kCheckpointVersion, ErrorKind::Data, "unsupported checkpoint version " + std::to_string(version));
    ModelSpec s;
    s.input_length = bin::get_u32(in);
    for (auto& c : s.convs) {
        c.out_channels = bin::get_u32(in);
        c.kernel = bin::get_u32(in);
        c.stride = bin::get_u32(in);
    }
    s.pool_window = bin::get_u32(in);
    s.hidden = bin::get_u32(in);
    require(bin::get_u32(in) == kOutputs, ErrorKind::ShapeMismatch, "checkpoint output width is not 4");
    auto seed = bin::get_u64(in);
    auto count = bin::get_u32(in);
    require(count == param::count, ErrorKind::ShapeMismatch, "checkpoint has the wrong number of tensors");
    ParamList<S> params;
    for (std::uint32_t k = 0; k < count; ++k) {
        auto rank = bin::get_u32(in);
        require(rank >= 1 && rank <= 4, ErrorKind::Data, "bad tensor rank in checkpoint");
        std::vector<std::size_t> dims(rank);
        for (auto& d : dims) d = bin::get_u32(in);
        Tensor<S> t(dims);
        for (auto& v : t.data) v = static_cast<S>(bin::get_f32(in));
        params.push_back(std::move(t));
    }
    return Model<S>::from_params(s, seed, std::move(params));
}

template <typename S>
void save_checkpoint(const Model<S>& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
    write_checkpoint(out, model);
}

template <typename S>
Model<S> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
    return read_checkpoint<S>(in);
}

}  // namespace pdnet::nn
