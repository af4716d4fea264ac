#pragma once

#include "arranger/nn.hpp"

namespace arranger {

/// Adam with bias correction. Defaults follow common practice for
/// gradient-penalty Wasserstein training.
template <class T>
class Adam {
public:
    struct Hyper {
        T lr = T(1e-4);
        T beta1 = T(0.5);
        T beta2 = T(0.9);
        T eps = T(1e-8);
    };

    struct Slot {
        Tensor<T> m;
        Tensor<T> v;
        int64_t step = 0;
    };

    Adam() = default;
    explicit Adam(Hyper h) : hyper_(h) {}

    Hyper& hyper() { return hyper_; }
    const Hyper& hyper() const { return hyper_; }
    std::map<std::string, Slot>& slots() { return slots_; }
    const std::map<std::string, Slot>& slots() const { return slots_; }

    /// One Adam update of `param` along `grad` (minimization).
    void step(const std::string& name, Tensor<T>& param, const Tensor<T>& grad) {
        if (!shapes_equal(param.shape(), grad.shape()))
            throw ShapeError("adam_step '" + name + "': gradient shape " +
                             shape_str(grad.shape()) + " != parameter shape " +
                             shape_str(param.shape()));
        auto it = slots_.find(name);
        if (it == slots_.end()) {
            it = slots_.emplace(name, Slot{Tensor<T>::zeros(param.shape()),
                                           Tensor<T>::zeros(param.shape()), 0}).first;
        }
        Slot& s = it->second;
        s.step += 1;
        const T b1 = hyper_.beta1, b2 = hyper_.beta2;
        const T corr1 = T(1) - static_cast<T>(std::pow(static_cast<double>(b1), s.step));
        const T corr2 = T(1) - static_cast<T>(std::pow(static_cast<double>(b2), s.step));
        const int64_t n = param.numel();
        for (int64_t i = 0; i < n; ++i) {
            const T g = grad[i];
            s.m[i] = b1 * s.m[i] + (T(1) - b1) * g;
            s.v[i] = b2 * s.v[i] + (T(1) - b2) * g * g;
            const T mhat = s.m[i] / corr1;
            const T vhat = s.v[i] / corr2;
            param[i] -= hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps);
        }
    }

    /// Updates every trainable entry of the store that has a gradient.
    void step_all(nn::ParamStore<T>& store, const std::map<std::string, Tensor<T>>& grads) {
        for (auto& [name, entry] : store.entries()) {
            if (!entry.trainable) continue;
            auto git = grads.find(name);
            if (git == grads.end()) continue;
            step(name, *entry.value, git->second);
        }
    }

private:
    Hyper hyper_;
    std::map<std::string, Slot> slots_;
};

}  // namespace arranger
