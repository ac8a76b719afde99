#pragma once

#include <cmath>
#include <cstdint>

#include "vitfill/tensor.hpp"

namespace vitfill {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5; // decoupled, applied directly to the parameter
};

// First/second moment buffers for one parameter tensor.
template <typename T>
struct AdamState {
    Tensor<T> m;
    Tensor<T> v;
    std::int64_t step = 0;

    static AdamState shaped_like(const Tensor<T>& p) {
        return AdamState{Tensor<T>::zeros(p.shape), Tensor<T>::zeros(p.shape), 0};
    }
};

// One Adam step with decoupled weight decay. Moment updates and the parameter
// delta are computed in double so float parameters see a consistent rounding
// of the same arithmetic.
template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state,
                 const AdamConfig& cfg) {
    require_same_shape(param, grad, "adam_update");
    require_same_shape(param, state.m, "adam_update(m)");
    require_same_shape(param, state.v, "adam_update(v)");
    state.step += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        const double g = static_cast<double>(grad.data[i]);
        const double m = b1 * static_cast<double>(state.m.data[i]) + (1.0 - b1) * g;
        const double v = b2 * static_cast<double>(state.v.data[i]) + (1.0 - b2) * g * g;
        state.m.data[i] = static_cast<T>(m);
        state.v.data[i] = static_cast<T>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        const double p = static_cast<double>(param.data[i]);
        param.data[i] = static_cast<T>(p - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps) -
                                       cfg.lr * cfg.weight_decay * p);
    }
}

} // namespace vitfill
