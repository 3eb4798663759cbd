// Copyright 2026 The Wingbeat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

//
// Minimal dense NN core: the five layer kinds the classifiers need
// (conv2d, maxpool2d, flatten, dense, dropout), reverse-mode gradients,
// categorical cross-entropy and RMSProp. Spatial tensors are HWC row-major;
// conv weights are (out_ch, kh, kw, in_ch) so the hot loops reduce over
// contiguous spans.
//
// Everything is deterministic: given the same seed, training produces
// bit-identical parameters regardless of the worker count, because each
// output element is reduced sequentially by exactly one worker.
//

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wingbeat/common.hpp"
#include "wingbeat/rng.hpp"
#include "wingbeat/tensor.hpp"
#include "wingbeat/threading.hpp"

namespace wingbeat {

enum class Activation { None, Relu, Sigmoid, Softmax };
enum class LayerKind { Conv2d, MaxPool2d, Flatten, Dense, Dropout };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::None: return "none";
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softmax: return "softmax";
    }
    return "none";
}

inline const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
        case LayerKind::Dropout: return "dropout";
    }
    return "flatten";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "none") return Activation::None;
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "softmax") return Activation::Softmax;
    fail(strfmt("unknown activation \"%s\"", s.c_str()));
}

inline LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "conv2d") return LayerKind::Conv2d;
    if (s == "maxpool2d") return LayerKind::MaxPool2d;
    if (s == "flatten") return LayerKind::Flatten;
    if (s == "dense") return LayerKind::Dense;
    if (s == "dropout") return LayerKind::Dropout;
    fail(strfmt("unknown layer kind \"%s\"", s.c_str()));
}

struct LayerSpec {
    LayerKind kind = LayerKind::Flatten;
    Activation activation = Activation::None;
    int out_channels = 0, kernel_h = 0, kernel_w = 0;  // conv2d
    int pool_h = 0, pool_w = 0, stride = 1;            // maxpool2d
    int out_units = 0;                                 // dense
    double rate = 0.0;                                 // dropout

    static LayerSpec conv2d(int out_channels, int kh, int kw,
                            Activation a = Activation::Relu) {
        LayerSpec s;
        s.kind = LayerKind::Conv2d;
        s.out_channels = out_channels;
        s.kernel_h = kh;
        s.kernel_w = kw;
        s.activation = a;
        return s;
    }
    static LayerSpec maxpool2d(int ph = 2, int pw = 2, int stride = 1) {
        LayerSpec s;
        s.kind = LayerKind::MaxPool2d;
        s.pool_h = ph;
        s.pool_w = pw;
        s.stride = stride;
        return s;
    }
    static LayerSpec flatten() {
        LayerSpec s;
        s.kind = LayerKind::Flatten;
        return s;
    }
    static LayerSpec dense(int units, Activation a = Activation::None) {
        LayerSpec s;
        s.kind = LayerKind::Dense;
        s.out_units = units;
        s.activation = a;
        return s;
    }
    static LayerSpec dropout(double rate) {
        LayerSpec s;
        s.kind = LayerKind::Dropout;
        s.rate = rate;
        return s;
    }
};

namespace nn_detail {

template <typename T>
inline T dot(const T* a, const T* b, int64_t n) {
    T acc{};
    for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
inline void axpy(T* y, const T* x, T a, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Sigmoid outputs are clamped away from exact 0/1. At float precision a
// saturated unit would otherwise have derivative o*(1-o) == 0 exactly and
// the unit could never recover; the clamp keeps a recovery path open.
inline constexpr double kSigmoidClamp = 1e-7;

template <typename T>
inline T apply_act(Activation a, T x) {
    switch (a) {
        case Activation::Relu: return x > T{} ? x : T{};
        case Activation::Sigmoid: {
            T o = T(1) / (T(1) + std::exp(-x));
            if (o < T(kSigmoidClamp)) o = T(kSigmoidClamp);
            if (o > T(1.0 - kSigmoidClamp)) o = T(1.0 - kSigmoidClamp);
            return o;
        }
        default: return x;
    }
}

// derivative expressed through the post-activation value
template <typename T>
inline T act_grad_from_output(Activation a, T out) {
    switch (a) {
        case Activation::Relu: return out > T{} ? T(1) : T{};
        case Activation::Sigmoid: return out * (T(1) - out);
        default: return T(1);
    }
}

template <typename T>
inline void softmax_inplace(T* x, int64_t n) {
    T m = x[0];
    for (int64_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    T sum{};
    for (int64_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - m);
        sum += x[i];
    }
    for (int64_t i = 0; i < n; ++i) x[i] /= sum;
}

}  // namespace nn_detail

// Eq.-style categorical cross-entropy: -sum_i y_i * log(p_i). Requires a
// probability vector (sum 1 +- 1e-6); entries are clamped to [1e-12, 1]
// before the log.
template <typename T>
inline double categorical_cross_entropy(const T* predicted, int n, int target_index) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += static_cast<double>(predicted[i]);
    if (std::fabs(sum - 1.0) > 1e-6) {
        fail(strfmt("cross entropy: predictions sum to %.9f, expected 1", sum));
    }
    double p = static_cast<double>(predicted[target_index]);
    if (p < 1e-12) p = 1e-12;
    if (p > 1.0) p = 1.0;
    return -std::log(p);
}

template <typename T>
inline double categorical_cross_entropy(const std::vector<T>& predicted,
                                        const std::vector<T>& one_hot) {
    if (predicted.size() != one_hot.size()) fail("cross entropy: size mismatch");
    int target = 0;
    double best = -1.0;
    for (size_t i = 0; i < one_hot.size(); ++i) {
        if (one_hot[i] > best) {
            best = one_hot[i];
            target = static_cast<int>(i);
        }
    }
    return categorical_cross_entropy(predicted.data(), static_cast<int>(predicted.size()), target);
}

// Feed-forward stack with construction-time shape validation. Parameters
// live in `weights` / `biases`, indexed by layer (empty tensors for layers
// without parameters).
template <typename T>
class Network {
public:
    Network(std::vector<int> input_shape, std::vector<LayerSpec> layer_specs)
        : specs_(std::move(layer_specs)), input_shape_(std::move(input_shape)) {
        if (specs_.empty()) fail("network: no layers");
        validate_and_allocate();
    }

    const std::vector<LayerSpec>& specs() const { return specs_; }
    const std::vector<int>& input_shape() const { return input_shape_; }
    const std::vector<std::vector<int>>& output_shapes() const { return out_shapes_; }
    const std::vector<int>& output_shape() const { return out_shapes_.back(); }

    int output_size() const {
        return static_cast<int>(Tensor<T>::numel_of(out_shapes_.back()));
    }

    // Activation of the last layer when it is parametric; the loss head
    // folds it into the pre-activation gradient. A non-parametric last
    // layer gets the generic (identity) head and its own backward rule.
    Activation final_activation() const {
        const auto& s = specs_.back();
        if (s.kind == LayerKind::Dense || s.kind == LayerKind::Conv2d) return s.activation;
        return Activation::None;
    }

    std::vector<Tensor<T>> weights, biases;  // per layer

    int64_t parameter_count() const {
        int64_t n = 0;
        for (const auto& w : weights) n += static_cast<int64_t>(w.numel());
        for (const auto& b : biases) n += static_cast<int64_t>(b.numel());
        return n;
    }

    // Glorot-style uniform fan-based initialization, seeded and sequential
    // in declaration order.
    void init_glorot_uniform(Rng& rng) {
        for (size_t l = 0; l < specs_.size(); ++l) {
            if (weights[l].numel() == 0) continue;
            double fan_in = 0, fan_out = 0;
            const auto& s = specs_[l];
            if (s.kind == LayerKind::Conv2d) {
                const int ic = weights[l].shape[3];
                fan_in = static_cast<double>(s.kernel_h) * s.kernel_w * ic;
                fan_out = static_cast<double>(s.kernel_h) * s.kernel_w * s.out_channels;
            } else {  // dense
                fan_in = weights[l].shape[0];
                fan_out = weights[l].shape[1];
            }
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (auto& w : weights[l].v) w = static_cast<T>(rng.uniform(-limit, limit));
            biases[l].fill(T{});
        }
    }

    // Per-example forward record for the backward pass: post-activation
    // outputs, max-pool winner indices, dropout masks.
    struct Trace {
        std::vector<Tensor<T>> acts;  // acts[0] = input, acts[l+1] = layer l output
        std::vector<std::vector<int32_t>> pool_src;
        std::vector<std::vector<uint8_t>> drop_mask;
    };

    // Evaluation-mode forward (dropout = identity).
    Tensor<T> predict(const Tensor<T>& input) const {
        Trace tr;
        forward(input, tr, /*train=*/false, nullptr);
        return std::move(tr.acts.back());
    }

    // Training-mode forward. Dropout masks are drawn from `rng` in layer
    // order and recorded in the trace for the backward pass.
    const Tensor<T>& forward_train(const Tensor<T>& input, Trace& tr, Rng& rng) const {
        forward(input, tr, /*train=*/true, &rng);
        return tr.acts.back();
    }

    struct Gradients {
        std::vector<Tensor<T>> weights, biases;

        void init_like(const Network& net) {
            weights.resize(net.weights.size());
            biases.resize(net.biases.size());
            for (size_t i = 0; i < net.weights.size(); ++i) {
                weights[i].shape = net.weights[i].shape;
                weights[i].v.assign(net.weights[i].numel(), T{});
                biases[i].shape = net.biases[i].shape;
                biases[i].v.assign(net.biases[i].numel(), T{});
            }
        }
        void clear() {
            for (auto& w : weights) w.fill(T{});
            for (auto& b : biases) b.fill(T{});
        }
        void scale(T s) {
            for (auto& w : weights) {
                parallel_for(static_cast<int64_t>(w.numel()), 4096, [&](int64_t b0, int64_t e0) {
                    for (int64_t i = b0; i < e0; ++i) w.v[static_cast<size_t>(i)] *= s;
                });
            }
            for (auto& b : biases) {
                for (auto& x : b.v) x *= s;
            }
        }
    };

    // Accumulates d(loss)/d(params) of one example into `grads`, given the
    // gradient w.r.t. the final layer's pre-activation.
    void backward(const Trace& tr, const std::vector<T>& final_preact_grad,
                  Gradients& grads) const {
        const size_t L = specs_.size();
        std::vector<T> dcur(final_preact_grad);
        std::vector<T> dprev;
        for (size_t li = L; li > 0; --li) {
            const size_t l = li - 1;
            const auto& s = specs_[l];
            const Tensor<T>& x = tr.acts[l];
            const Tensor<T>& y = tr.acts[l + 1];
            // For the last layer dcur is already a pre-activation gradient
            // (the loss head folds the activation in); for the others it is
            // d(loss)/d(output) and the activation is peeled off here.
            if (li != L && (s.kind == LayerKind::Conv2d || s.kind == LayerKind::Dense)) {
                if (s.activation == Activation::Softmax) {
                    // full softmax jacobian: dz_i = y_i * (g_i - sum_j g_j y_j)
                    T mix{};
                    for (size_t i = 0; i < dcur.size(); ++i) mix += dcur[i] * y.v[i];
                    for (size_t i = 0; i < dcur.size(); ++i) {
                        dcur[i] = y.v[i] * (dcur[i] - mix);
                    }
                } else {
                    for (size_t i = 0; i < dcur.size(); ++i) {
                        dcur[i] *= nn_detail::act_grad_from_output(s.activation, y.v[i]);
                    }
                }
            }
            dprev.assign(x.numel(), T{});
            switch (s.kind) {
                case LayerKind::Conv2d:
                    conv2d_backward(l, x, dcur, dprev, grads);
                    break;
                case LayerKind::MaxPool2d: {
                    const auto& src = tr.pool_src[l];
                    for (size_t i = 0; i < dcur.size(); ++i) {
                        dprev[static_cast<size_t>(src[i])] += dcur[i];
                    }
                    break;
                }
                case LayerKind::Flatten:
                    dprev = dcur;
                    break;
                case LayerKind::Dense:
                    dense_backward(l, x, dcur, dprev, grads);
                    break;
                case LayerKind::Dropout: {
                    const auto& mask = tr.drop_mask[l];
                    const T inv_keep = T(1) / static_cast<T>(1.0 - s.rate);
                    for (size_t i = 0; i < dcur.size(); ++i) {
                        dprev[i] = mask[i] ? dcur[i] * inv_keep : T{};
                    }
                    break;
                }
            }
            dcur.swap(dprev);
        }
    }

private:
    void validate_and_allocate() {
        if (input_shape_.size() != 3 && input_shape_.size() != 1) {
            fail("network: input shape must be (h, w, c) or (n)");
        }
        for (int d : input_shape_) {
            if (d <= 0) fail("network: input dimensions must be positive");
        }
        weights.resize(specs_.size());
        biases.resize(specs_.size());
        std::vector<int> cur = input_shape_;
        for (size_t l = 0; l < specs_.size(); ++l) {
            const auto& s = specs_[l];
            switch (s.kind) {
                case LayerKind::Conv2d: {
                    if (cur.size() != 3) {
                        fail(strfmt("layer %zu (conv2d): expected spatial input, got %s", l,
                                    shape_str(cur).c_str()));
                    }
                    if (s.out_channels < 1 || s.kernel_h < 1 || s.kernel_w < 1) {
                        fail(strfmt("layer %zu (conv2d): bad kernel parameters", l));
                    }
                    if (s.kernel_h > cur[0] || s.kernel_w > cur[1]) {
                        fail(strfmt("layer %zu (conv2d): kernel %dx%d does not fit input %s", l,
                                    s.kernel_h, s.kernel_w, shape_str(cur).c_str()));
                    }
                    weights[l] = Tensor<T>({s.out_channels, s.kernel_h, s.kernel_w, cur[2]});
                    biases[l] = Tensor<T>({s.out_channels});
                    cur = {cur[0] - s.kernel_h + 1, cur[1] - s.kernel_w + 1, s.out_channels};
                    break;
                }
                case LayerKind::MaxPool2d: {
                    if (cur.size() != 3) {
                        fail(strfmt("layer %zu (maxpool2d): expected spatial input, got %s", l,
                                    shape_str(cur).c_str()));
                    }
                    if (s.pool_h < 1 || s.pool_w < 1 || s.stride < 1) {
                        fail(strfmt("layer %zu (maxpool2d): bad pool parameters", l));
                    }
                    if (s.pool_h > cur[0] || s.pool_w > cur[1]) {
                        fail(strfmt("layer %zu (maxpool2d): pool %dx%d does not fit input %s", l,
                                    s.pool_h, s.pool_w, shape_str(cur).c_str()));
                    }
                    cur = {(cur[0] - s.pool_h) / s.stride + 1, (cur[1] - s.pool_w) / s.stride + 1,
                           cur[2]};
                    break;
                }
                case LayerKind::Flatten: {
                    cur = {static_cast<int>(Tensor<T>::numel_of(cur))};
                    break;
                }
                case LayerKind::Dense: {
                    if (cur.size() != 1) {
                        fail(strfmt("layer %zu (dense): expected flat input, got %s (flatten "
                                    "first)",
                                    l, shape_str(cur).c_str()));
                    }
                    if (s.out_units < 1) fail(strfmt("layer %zu (dense): bad unit count", l));
                    weights[l] = Tensor<T>({cur[0], s.out_units});
                    biases[l] = Tensor<T>({s.out_units});
                    cur = {s.out_units};
                    break;
                }
                case LayerKind::Dropout: {
                    if (s.rate < 0.0 || s.rate >= 1.0) {
                        fail(strfmt("layer %zu (dropout): rate must be in [0, 1)", l));
                    }
                    break;
                }
            }
            out_shapes_.push_back(cur);
        }
    }

    void forward(const Tensor<T>& input, Trace& tr, bool train, Rng* rng) const {
        if (input.shape != input_shape_) {
            fail(strfmt("network: input shape %s does not match expected %s",
                        shape_str(input.shape).c_str(), shape_str(input_shape_).c_str()));
        }
        const size_t L = specs_.size();
        tr.acts.resize(L + 1);
        tr.pool_src.resize(L);
        tr.drop_mask.resize(L);
        tr.acts[0] = input;
        for (size_t l = 0; l < L; ++l) {
            const auto& s = specs_[l];
            const Tensor<T>& x = tr.acts[l];
            Tensor<T>& y = tr.acts[l + 1];
            if (y.shape != out_shapes_[l]) y = Tensor<T>(out_shapes_[l]);
            switch (s.kind) {
                case LayerKind::Conv2d:
                    conv2d_forward(l, x, y);
                    break;
                case LayerKind::MaxPool2d:
                    maxpool_forward(l, x, y, tr.pool_src[l]);
                    break;
                case LayerKind::Flatten:
                    y.v = x.v;
                    break;
                case LayerKind::Dense:
                    dense_forward(l, x, y);
                    break;
                case LayerKind::Dropout: {
                    if (train && s.rate > 0.0) {
                        auto& mask = tr.drop_mask[l];
                        mask.resize(x.numel());
                        const T inv_keep = T(1) / static_cast<T>(1.0 - s.rate);
                        for (size_t i = 0; i < x.numel(); ++i) {
                            mask[i] = rng->uniform() >= s.rate ? 1 : 0;
                            y.v[i] = mask[i] ? x.v[i] * inv_keep : T{};
                        }
                    } else {
                        y.v = x.v;
                        auto& mask = tr.drop_mask[l];
                        mask.assign(x.numel(), 1);
                    }
                    break;
                }
            }
        }
    }

    void conv2d_forward(size_t l, const Tensor<T>& x, Tensor<T>& y) const {
        const auto& s = specs_[l];
        const int H = x.shape[0], W = x.shape[1], C = x.shape[2];
        const int OH = H - s.kernel_h + 1, OW = W - s.kernel_w + 1, OC = s.out_channels;
        const int kspan = s.kernel_w * C;
        const T* wts = weights[l].data();
        const T* bias = biases[l].data();
        const Activation act = s.activation;
        parallel_for(OH, [&](int64_t y0, int64_t y1) {
            for (int64_t oy = y0; oy < y1; ++oy) {
                for (int ox = 0; ox < OW; ++ox) {
                    T* out = &y.v[(static_cast<size_t>(oy) * OW + ox) * OC];
                    const T* in_base = &x.v[(static_cast<size_t>(oy) * W + ox) * C];
                    for (int oc = 0; oc < OC; ++oc) {
                        const T* wrow = wts + static_cast<size_t>(oc) * s.kernel_h * kspan;
                        T acc = bias[oc];
                        for (int ky = 0; ky < s.kernel_h; ++ky) {
                            acc += nn_detail::dot(in_base + static_cast<size_t>(ky) * W * C,
                                                  wrow + static_cast<size_t>(ky) * kspan, kspan);
                        }
                        out[oc] = nn_detail::apply_act(act, acc);
                    }
                }
            }
        });
        if (act == Activation::Softmax) nn_detail::softmax_inplace(y.data(), static_cast<int64_t>(y.numel()));
    }

    void conv2d_backward(size_t l, const Tensor<T>& x, const std::vector<T>& dpre,
                         std::vector<T>& dx, Gradients& g) const {
        const auto& s = specs_[l];
        const int H = x.shape[0], W = x.shape[1], C = x.shape[2];
        const int OH = H - s.kernel_h + 1, OW = W - s.kernel_w + 1, OC = s.out_channels;
        const int kspan = s.kernel_w * C;
        const T* wts = weights[l].data();

        // weight and bias gradients: one worker owns all of output channel oc
        T* dw = g.weights[l].data();
        T* db = g.biases[l].data();
        parallel_for(OC, [&](int64_t c0, int64_t c1) {
            for (int64_t oc = c0; oc < c1; ++oc) {
                T* dwrow = dw + static_cast<size_t>(oc) * s.kernel_h * kspan;
                T bacc{};
                for (int oy = 0; oy < OH; ++oy) {
                    for (int ox = 0; ox < OW; ++ox) {
                        const T gv = dpre[(static_cast<size_t>(oy) * OW + ox) * OC + oc];
                        if (gv == T{}) continue;
                        bacc += gv;
                        const T* in_base = &x.v[(static_cast<size_t>(oy) * W + ox) * C];
                        for (int ky = 0; ky < s.kernel_h; ++ky) {
                            nn_detail::axpy(dwrow + static_cast<size_t>(ky) * kspan,
                                            in_base + static_cast<size_t>(ky) * W * C, gv, kspan);
                        }
                    }
                }
                db[oc] += bacc;
            }
        });

        // input gradient, gather form: each input cell sums the outputs it fed
        parallel_for(H, [&](int64_t iy0, int64_t iy1) {
            for (int64_t iy = iy0; iy < iy1; ++iy) {
                for (int ix = 0; ix < W; ++ix) {
                    T* dxi = &dx[(static_cast<size_t>(iy) * W + ix) * C];
                    const int ky_lo = std::max(0, static_cast<int>(iy) - OH + 1);
                    const int ky_hi = std::min(s.kernel_h - 1, static_cast<int>(iy));
                    const int kx_lo = std::max(0, ix - OW + 1);
                    const int kx_hi = std::min(s.kernel_w - 1, ix);
                    for (int ky = ky_lo; ky <= ky_hi; ++ky) {
                        const int oy = static_cast<int>(iy) - ky;
                        for (int kx = kx_lo; kx <= kx_hi; ++kx) {
                            const int ox = ix - kx;
                            const T* gout = &dpre[(static_cast<size_t>(oy) * OW + ox) * OC];
                            for (int oc = 0; oc < OC; ++oc) {
                                const T gv = gout[oc];
                                if (gv == T{}) continue;
                                const T* wrow = wts + ((static_cast<size_t>(oc) * s.kernel_h + ky) *
                                                           s.kernel_w +
                                                       kx) *
                                                          C;
                                nn_detail::axpy(dxi, wrow, gv, C);
                            }
                        }
                    }
                }
            }
        });
    }

    void maxpool_forward(size_t l, const Tensor<T>& x, Tensor<T>& y,
                         std::vector<int32_t>& src) const {
        const auto& s = specs_[l];
        const int H = x.shape[0], W = x.shape[1], C = x.shape[2];
        const int OH = (H - s.pool_h) / s.stride + 1, OW = (W - s.pool_w) / s.stride + 1;
        src.resize(y.numel());
        parallel_for(OH, [&](int64_t y0, int64_t y1) {
            for (int64_t oy = y0; oy < y1; ++oy) {
                for (int ox = 0; ox < OW; ++ox) {
                    for (int c = 0; c < C; ++c) {
                        // ties go to the first maximum in row-major order
                        int32_t best_idx = -1;
                        T best{};
                        for (int py = 0; py < s.pool_h; ++py) {
                            for (int px = 0; px < s.pool_w; ++px) {
                                const int iy = static_cast<int>(oy) * s.stride + py;
                                const int ix = ox * s.stride + px;
                                const int32_t idx =
                                    static_cast<int32_t>((static_cast<size_t>(iy) * W + ix) * C + c);
                                const T v = x.v[static_cast<size_t>(idx)];
                                if (best_idx < 0 || v > best) {
                                    best = v;
                                    best_idx = idx;
                                }
                            }
                        }
                        const size_t out_idx = (static_cast<size_t>(oy) * OW + ox) * C + c;
                        y.v[out_idx] = best;
                        src[out_idx] = best_idx;
                    }
                }
            }
        });
    }

    void dense_forward(size_t l, const Tensor<T>& x, Tensor<T>& y) const {
        const auto& s = specs_[l];
        const int in = x.shape[0], out = s.out_units;
        const T* wts = weights[l].data();
        // out = b + W^T x, streamed row-wise so zero inputs (post-relu,
        // post-dropout) skip their whole weight row
        y.v.assign(static_cast<size_t>(out), T{});
        for (int j = 0; j < out; ++j) y.v[static_cast<size_t>(j)] = biases[l].v[static_cast<size_t>(j)];
        if (static_cast<int64_t>(in) * out >= (1 << 18)) {
            parallel_for(out, 64, [&](int64_t j0, int64_t j1) {
                for (int i = 0; i < in; ++i) {
                    const T xi = x.v[static_cast<size_t>(i)];
                    if (xi == T{}) continue;
                    const T* wrow = wts + static_cast<size_t>(i) * out;
                    for (int64_t j = j0; j < j1; ++j) {
                        y.v[static_cast<size_t>(j)] += xi * wrow[j];
                    }
                }
            });
        } else {
            for (int i = 0; i < in; ++i) {
                const T xi = x.v[static_cast<size_t>(i)];
                if (xi == T{}) continue;
                nn_detail::axpy(y.data(), wts + static_cast<size_t>(i) * out, xi, out);
            }
        }
        if (s.activation == Activation::Softmax) {
            nn_detail::softmax_inplace(y.data(), out);
        } else if (s.activation != Activation::None) {
            for (auto& v : y.v) v = nn_detail::apply_act(s.activation, v);
        }
    }

    void dense_backward(size_t l, const Tensor<T>& x, const std::vector<T>& dpre,
                        std::vector<T>& dx, Gradients& g) const {
        const auto& s = specs_[l];
        const int in = x.shape[0], out = s.out_units;
        const T* wts = weights[l].data();
        T* dw = g.weights[l].data();
        parallel_for(in, 16, [&](int64_t i0, int64_t i1) {
            for (int64_t i = i0; i < i1; ++i) {
                const T* wrow = wts + static_cast<size_t>(i) * out;
                dx[static_cast<size_t>(i)] = nn_detail::dot(wrow, dpre.data(), out);
                const T xi = x.v[static_cast<size_t>(i)];
                if (xi != T{}) {
                    nn_detail::axpy(dw + static_cast<size_t>(i) * out, dpre.data(), xi, out);
                }
            }
        });
        for (int j = 0; j < out; ++j) g.biases[l].v[static_cast<size_t>(j)] += dpre[static_cast<size_t>(j)];
    }

    std::vector<LayerSpec> specs_;
    std::vector<int> input_shape_;
    std::vector<std::vector<int>> out_shapes_;
};

// ---------------------------------------------------------------------------
// Loss head. The classifiers train on categorical cross-entropy over a
// probability vector; when the final activation is sigmoid the outputs do
// not sum to 1, so they are renormalized first (q_i = o_i / sum o). The
// returned gradient is w.r.t. the final layer's pre-activation.

template <typename T>
inline double loss_head(const Tensor<T>& output, Activation final_act, int target,
                        std::vector<T>& final_preact_grad) {
    const int n = static_cast<int>(output.numel());
    final_preact_grad.assign(static_cast<size_t>(n), T{});
    double S = 0.0;
    for (int i = 0; i < n; ++i) S += static_cast<double>(output.v[static_cast<size_t>(i)]);

    // normalization in double keeps the probability sum within the CE
    // precondition even for float networks
    std::vector<double> q(static_cast<size_t>(n));
    if (S <= 0.0) {
        for (auto& v : q) v = 1.0 / n;
    } else {
        for (int i = 0; i < n; ++i) {
            q[static_cast<size_t>(i)] = static_cast<double>(output.v[static_cast<size_t>(i)]) / S;
        }
    }
    const double loss = categorical_cross_entropy(q.data(), n, target);

    switch (final_act) {
        case Activation::Softmax:
            // fused softmax + CE
            for (int i = 0; i < n; ++i) {
                final_preact_grad[static_cast<size_t>(i)] =
                    static_cast<T>(q[static_cast<size_t>(i)] - (i == target ? 1.0 : 0.0));
            }
            break;
        case Activation::Sigmoid:
            // d/dz of -sum y log(o/S) with o = sigmoid(z): (o_i/S - y_i)(1 - o_i)
            for (int i = 0; i < n; ++i) {
                const double o = static_cast<double>(output.v[static_cast<size_t>(i)]);
                const double y = i == target ? 1.0 : 0.0;
                final_preact_grad[static_cast<size_t>(i)] =
                    static_cast<T>((q[static_cast<size_t>(i)] - y) * (1.0 - o));
            }
            break;
        default: {
            // generic elementwise head: dL/do_i = 1/S - y_i/o_i, then the
            // activation derivative
            for (int i = 0; i < n; ++i) {
                const double o = std::max(static_cast<double>(output.v[static_cast<size_t>(i)]), 1e-12);
                const double dLdo = 1.0 / std::max(S, 1e-12) - (i == target ? 1.0 / o : 0.0);
                final_preact_grad[static_cast<size_t>(i)] =
                    static_cast<T>(dLdo) *
                    nn_detail::act_grad_from_output(final_act, output.v[static_cast<size_t>(i)]);
            }
            break;
        }
    }
    return loss;
}

// Mean-batch-loss gradients. Dropout masks are drawn from `rng` per example
// in order and reused by the backward pass.
template <typename T>
inline double batch_gradients(const Network<T>& net, const std::vector<const Tensor<T>*>& inputs,
                              const std::vector<int>& targets,
                              typename Network<T>::Gradients& grads, Rng& rng,
                              typename Network<T>::Trace& scratch) {
    if (inputs.empty()) fail("batch_gradients: empty batch");
    const Activation head = net.final_activation();
    double loss_sum = 0.0;
    std::vector<T> dz;
    for (size_t e = 0; e < inputs.size(); ++e) {
        const Tensor<T>& out = net.forward_train(*inputs[e], scratch, rng);
        loss_sum += loss_head(out, head, targets[e], dz);
        net.backward(scratch, dz, grads);
    }
    grads.scale(static_cast<T>(1.0 / static_cast<double>(inputs.size())));
    return loss_sum / static_cast<double>(inputs.size());
}

// ---------------------------------------------------------------------------
// RMSProp: v <- rho*v + (1-rho)*g^2 ; theta <- theta - lr*g/(sqrt(v)+eps).

struct RmsPropConfig {
    double learning_rate = 0.001;
    double decay_rho = 0.9;
    double epsilon = 1e-7;
};

template <typename T>
class RmsProp {
public:
    RmsProp(const Network<T>& net, RmsPropConfig cfg = {}) : cfg_(cfg) {
        vw_.resize(net.weights.size());
        vb_.resize(net.biases.size());
        for (size_t i = 0; i < net.weights.size(); ++i) {
            vw_[i].assign(net.weights[i].numel(), T{});
            vb_[i].assign(net.biases[i].numel(), T{});
        }
    }

    void step(Network<T>& net, const typename Network<T>::Gradients& grads,
              double lr_scale = 1.0) {
        for (size_t i = 0; i < net.weights.size(); ++i) {
            update(net.weights[i].v, grads.weights[i].v, vw_[i], lr_scale);
            update(net.biases[i].v, grads.biases[i].v, vb_[i], lr_scale);
        }
    }

    const RmsPropConfig& config() const { return cfg_; }

private:
    void update(std::vector<T>& theta, const std::vector<T>& g, std::vector<T>& v,
                double lr_scale) {
        const T rho = static_cast<T>(cfg_.decay_rho);
        const T one_m_rho = static_cast<T>(1.0 - cfg_.decay_rho);
        const T lr = static_cast<T>(cfg_.learning_rate * lr_scale);
        const T eps = static_cast<T>(cfg_.epsilon);
        parallel_for(static_cast<int64_t>(theta.size()), 4096, [&](int64_t b, int64_t e) {
            for (int64_t i = b; i < e; ++i) {
                const size_t k = static_cast<size_t>(i);
                v[k] = rho * v[k] + one_m_rho * g[k] * g[k];
                theta[k] -= lr * g[k] / (std::sqrt(v[k]) + eps);
            }
        });
    }

    RmsPropConfig cfg_;
    std::vector<std::vector<T>> vw_, vb_;
};

// ---------------------------------------------------------------------------
// Training driver: seeded Glorot init, per-epoch reshuffle, fixed-size
// batches with the final partial batch kept, RMSProp updates. Aborts with a
// diagnostic on non-finite loss.

struct TrainParams {
    int epochs = 10;
    int batch_size = 32;
    uint64_t seed = 0;
    RmsPropConfig optimizer;
    // Linear learning-rate ramp over the first batches. RMSProp starts with
    // empty mean-square accumulators, so un-warmed first steps are
    // effectively full-size sign steps; on wide dense layers that swings
    // the logits far enough to saturate the sigmoid head before any signal
    // is learned. -1 = one epoch's worth of batches, 0 = off.
    int warmup_batches = -1;
};

template <typename T>
inline std::vector<double> train_network(Network<T>& net,
                                         const std::vector<const Tensor<T>*>& inputs,
                                         const std::vector<int>& targets, const TrainParams& p) {
    if (inputs.empty() || inputs.size() != targets.size()) {
        fail("train: empty or inconsistent training set");
    }
    for (int t : targets) {
        if (t < 0 || t >= net.output_size()) {
            fail(strfmt("train: target %d out of range for %d outputs", t, net.output_size()));
        }
    }

    Rng rng(p.seed);
    net.init_glorot_uniform(rng);
    RmsProp<T> opt(net, p.optimizer);

    typename Network<T>::Gradients grads;
    grads.init_like(net);
    typename Network<T>::Trace scratch;

    std::vector<size_t> order(inputs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> epoch_loss;
    std::vector<const Tensor<T>*> batch_in;
    std::vector<int> batch_tg;

    const int batches_per_epoch =
        static_cast<int>((order.size() + static_cast<size_t>(p.batch_size) - 1) /
                         static_cast<size_t>(p.batch_size));
    const int warmup = p.warmup_batches < 0 ? batches_per_epoch : p.warmup_batches;

    int step_index = 0;
    for (int epoch = 0; epoch < p.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        int n_batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(p.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(p.batch_size));
            batch_in.clear();
            batch_tg.clear();
            for (size_t i = start; i < end; ++i) {
                batch_in.push_back(inputs[order[i]]);
                batch_tg.push_back(targets[order[i]]);
            }
            grads.clear();
            const double loss = batch_gradients(net, batch_in, batch_tg, grads, rng, scratch);
            if (!std::isfinite(loss)) {
                fail(strfmt("training aborted: non-finite loss at epoch %d, batch %d", epoch + 1,
                            n_batches + 1));
            }
            const double lr_scale =
                step_index < warmup ? static_cast<double>(step_index + 1) / (warmup + 1) : 1.0;
            opt.step(net, grads, lr_scale);
            ++step_index;
            loss_sum += loss;
            ++n_batches;
        }
        epoch_loss.push_back(loss_sum / std::max(1, n_batches));
    }
    return epoch_loss;
}

}  // namespace wingbeat
