#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "specsplat/rng.hpp"
#include "specsplat/vec.hpp"

// Small dense MLPs with manual tape backward, plus the Adam optimizer used
// for every trainable parameter group in the engine.

namespace specsplat {

enum class Activation { kLinear, kRelu, kSigmoid, kTanh };

template <typename T>
T activate(Activation a, T z) {
    switch (a) {
        case Activation::kLinear: return z;
        case Activation::kRelu: return z > T(0) ? z : T(0);
        case Activation::kSigmoid: return sigmoid(z);
        case Activation::kTanh: return std::tanh(z);
    }
    return z;
}

// Derivative expressed through the post-activation value.
template <typename T>
T activate_grad(Activation a, T y) {
    switch (a) {
        case Activation::kLinear: return T(1);
        case Activation::kRelu: return y > T(0) ? T(1) : T(0);
        case Activation::kSigmoid: return y * (T(1) - y);
        case Activation::kTanh: return T(1) - y * y;
    }
    return T(1);
}

// Reusable forward tape + backward scratch, sized on first use.
template <typename T>
struct MlpWorkspace {
    std::vector<T> acts;
    std::vector<T> dacts;
};

// Fully connected network. Parameters live in one flat vector laid out
// layer by layer as [W row-major (out x in), b]; gradient buffers share
// the layout.
template <typename T>
struct Mlp {
    struct Layer {
        int in = 0, out = 0;
        Activation act = Activation::kLinear;
        std::size_t w_off = 0, b_off = 0;
    };

    std::vector<Layer> layers;
    std::vector<T> params;
    std::size_t act_size = 0;  // input + every post-activation

    int input_dim() const { return layers.front().in; }
    int output_dim() const { return layers.back().out; }
    std::size_t param_count() const { return params.size(); }

    // dims = [in, hidden..., out], acts one entry per layer. Weights get
    // Kaiming-uniform init ahead of relu layers and Xavier-uniform
    // otherwise; biases start at zero.
    static Mlp make(const std::vector<int>& dims, const std::vector<Activation>& acts, Rng& rng) {
        if (dims.size() < 2 || acts.size() != dims.size() - 1)
            throw std::invalid_argument("mlp: dims/acts mismatch");
        Mlp net;
        std::size_t off = 0;
        net.act_size = std::size_t(dims[0]);
        for (std::size_t l = 0; l < acts.size(); ++l) {
            Layer lay;
            lay.in = dims[l];
            lay.out = dims[l + 1];
            lay.act = acts[l];
            lay.w_off = off;
            off += std::size_t(lay.in) * std::size_t(lay.out);
            lay.b_off = off;
            off += std::size_t(lay.out);
            net.act_size += std::size_t(lay.out);
            net.layers.push_back(lay);
        }
        net.params.assign(off, T(0));
        for (const Layer& lay : net.layers) {
            const T bound = lay.act == Activation::kRelu
                                ? std::sqrt(T(6) / T(lay.in))
                                : std::sqrt(T(6) / T(lay.in + lay.out));
            for (std::size_t i = 0; i < std::size_t(lay.in) * std::size_t(lay.out); ++i)
                net.params[lay.w_off + i] = T(rng.uniform(-double(bound), double(bound)));
        }
        return net;
    }

    // y <- net(x); the workspace tape keeps x and each layer's output so
    // backward needs no recomputation.
    void forward(const T* x, T* y, MlpWorkspace<T>& ws) const {
        ws.acts.resize(act_size);
        T* tape = ws.acts.data();
        for (int i = 0; i < layers.front().in; ++i) tape[i] = x[i];
        std::size_t in_off = 0, out_off = std::size_t(layers.front().in);
        for (const Layer& lay : layers) {
            const T* w = params.data() + lay.w_off;
            const T* b = params.data() + lay.b_off;
            for (int r = 0; r < lay.out; ++r) {
                T z = b[r];
                const T* wr = w + std::size_t(r) * std::size_t(lay.in);
                for (int c = 0; c < lay.in; ++c) z += wr[c] * tape[in_off + std::size_t(c)];
                tape[out_off + std::size_t(r)] = activate(lay.act, z);
            }
            in_off = out_off;
            out_off += std::size_t(lay.out);
        }
        for (int i = 0; i < layers.back().out; ++i) y[i] = tape[in_off + std::size_t(i)];
    }

    // Accumulates parameter gradients into dparams (params layout) and, if
    // dx is non-null, the input gradient into dx. Uses the tape from the
    // matching forward call.
    void backward(const T* dy, T* dx, T* dparams, MlpWorkspace<T>& ws) const {
        ws.dacts.resize(act_size);
        const T* tape = ws.acts.data();
        T* dtape = ws.dacts.data();
        std::size_t out_off = act_size - std::size_t(layers.back().out);
        for (int i = 0; i < layers.back().out; ++i) dtape[out_off + std::size_t(i)] = dy[i];

        for (std::size_t li = layers.size(); li-- > 0;) {
            const Layer& lay = layers[li];
            const std::size_t in_off = out_off - std::size_t(lay.in);
            const T* w = params.data() + lay.w_off;
            T* dw = dparams + lay.w_off;
            T* db = dparams + lay.b_off;
            for (int c = 0; c < lay.in; ++c) dtape[in_off + std::size_t(c)] = T(0);
            for (int r = 0; r < lay.out; ++r) {
                const T y = tape[out_off + std::size_t(r)];
                const T dz = dtape[out_off + std::size_t(r)] * activate_grad(lay.act, y);
                if (dz == T(0)) continue;
                db[r] += dz;
                const T* wr = w + std::size_t(r) * std::size_t(lay.in);
                T* dwr = dw + std::size_t(r) * std::size_t(lay.in);
                for (int c = 0; c < lay.in; ++c) {
                    dwr[c] += dz * tape[in_off + std::size_t(c)];
                    dtape[in_off + std::size_t(c)] += dz * wr[c];
                }
            }
            out_off = in_off;
        }
        if (dx)
            for (int i = 0; i < layers.front().in; ++i) dx[i] += dtape[std::size_t(i)];
    }
};

// Adam with bias correction. Moments are owned by the caller so parameter
// groups can be grown, pruned, or selectively reset alongside their data.
template <typename T>
struct AdamState {
    std::vector<T> m, v;
    long step_count = 0;

    void init(std::size_t n) {
        m.assign(n, T(0));
        v.assign(n, T(0));
        step_count = 0;
    }
};

template <typename T>
struct AdamConfig {
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-15);
};

template <typename T>
void adam_step(AdamState<T>& st, T* params, const T* grads, std::size_t n, T lr,
               const AdamConfig<T>& cfg = {}) {
    if (st.m.size() != n) throw std::invalid_argument("adam: state size mismatch");
    st.step_count += 1;
    const T bc1 = T(1) - std::pow(cfg.beta1, T(st.step_count));
    const T bc2 = T(1) - std::pow(cfg.beta2, T(st.step_count));
    for (std::size_t i = 0; i < n; ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (T(1) - cfg.beta1) * grads[i];
        st.v[i] = cfg.beta2 * st.v[i] + (T(1) - cfg.beta2) * grads[i] * grads[i];
        const T mhat = st.m[i] / bc1;
        const T vhat = st.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

}  // namespace specsplat
