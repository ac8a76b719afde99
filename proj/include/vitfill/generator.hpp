#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "vitfill/composer.hpp"
#include "vitfill/rng.hpp"
#include "vitfill/tape.hpp"

namespace vitfill {

// Four 3x3 stride-1 convolutions, (C+1) -> 32 -> 64 -> 32 -> C, ReLU between,
// linear final layer. The +1 input plane is the mask.
template <typename T>
struct GeneratorParams {
    int image_channels = 3;
    Tensor<T> w1, b1, w2, b2, w3, b3, w4, b4;

    template <typename U>
    GeneratorParams<U> cast() const {
        GeneratorParams<U> out;
        out.image_channels = image_channels;
        out.w1 = w1.template cast<U>();
        out.b1 = b1.template cast<U>();
        out.w2 = w2.template cast<U>();
        out.b2 = b2.template cast<U>();
        out.w3 = w3.template cast<U>();
        out.b3 = b3.template cast<U>();
        out.w4 = w4.template cast<U>();
        out.b4 = b4.template cast<U>();
        return out;
    }
};

// Hidden convs draw from a fan-in-scaled truncated normal; the final conv is
// zero so the untrained generator contributes nothing and the prediction
// starts exactly at the prefill.
template <typename T>
GeneratorParams<T> init_generator(int image_channels, std::uint64_t seed) {
    if (image_channels != 1 && image_channels != 3)
        throw ConfigError("generator: image channels must be 1 or 3, got " +
                          std::to_string(image_channels));
    Rng rng(seed_mix(seed, 0x6e47u));
    auto draw = [&rng](int cout, int cin) {
        Tensor<T> t = Tensor<T>::zeros({cout, cin, 3, 3});
        const double std_dev = std::sqrt(2.0 / (9.0 * cin));
        for (T& v : t.data) v = static_cast<T>(rng.trunc_normal(std_dev));
        return t;
    };
    GeneratorParams<T> p;
    p.image_channels = image_channels;
    const int cin = image_channels + 1;
    p.w1 = draw(32, cin);
    p.b1 = Tensor<T>::zeros({32});
    p.w2 = draw(64, 32);
    p.b2 = Tensor<T>::zeros({64});
    p.w3 = draw(32, 64);
    p.b3 = Tensor<T>::zeros({32});
    p.w4 = Tensor<T>::zeros({image_channels, 32, 3, 3});
    p.b4 = Tensor<T>::zeros({image_channels});
    return p;
}

template <typename T, typename Fn>
void for_each_generator_tensor(GeneratorParams<T>& p, Fn&& fn) {
    fn("g.conv1.w", p.w1);
    fn("g.conv1.b", p.b1);
    fn("g.conv2.w", p.w2);
    fn("g.conv2.b", p.b2);
    fn("g.conv3.w", p.w3);
    fn("g.conv3.b", p.b3);
    fn("g.conv4.w", p.w4);
    fn("g.conv4.b", p.b4);
}

template <typename T>
struct GeneratorVars {
    using Var = typename Tape<T>::Var;
    Var w1, b1, w2, b2, w3, b3, w4, b4;
};

template <typename T>
GeneratorVars<T> stage_generator(Tape<T>& tape, const GeneratorParams<T>& p, bool trainable) {
    auto put = [&](const Tensor<T>& t) { return trainable ? tape.param(t) : tape.constant(t); };
    return GeneratorVars<T>{put(p.w1), put(p.b1), put(p.w2), put(p.b2),
                            put(p.w3), put(p.b3), put(p.w4), put(p.b4)};
}

template <typename T>
std::vector<std::pair<std::string, typename Tape<T>::Var>> trainable_generator_vars(
    const GeneratorVars<T>& v) {
    return {{"g.conv1.w", v.w1}, {"g.conv1.b", v.b1}, {"g.conv2.w", v.w2}, {"g.conv2.b", v.b2},
            {"g.conv3.w", v.w3}, {"g.conv3.b", v.b3}, {"g.conv4.w", v.w4}, {"g.conv4.b", v.b4}};
}

// input is (C+1) x H x W: X_R with the mask stacked underneath. Output is an
// unclamped C x H x W residual.
template <typename T>
typename Tape<T>::Var g_forward_tape(Tape<T>& tape, const GeneratorVars<T>& v,
                                     typename Tape<T>::Var input) {
    auto h1 = tape.relu(tape.conv2d(input, v.w1, v.b1));
    auto h2 = tape.relu(tape.conv2d(h1, v.w2, v.b2));
    auto h3 = tape.relu(tape.conv2d(h2, v.w3, v.b3));
    return tape.conv2d(h3, v.w4, v.b4);
}

// Inference wrapper over the tape forward.
inline ImageTensor g_forward(const ComposedInput& input, const GeneratorParams<float>& params) {
    require_image(input.xr, "g_forward");
    if (input.xr.shape[0] != params.image_channels)
        throw DimensionError("g_forward: input has " + std::to_string(input.xr.shape[0]) +
                             " channels, generator expects " +
                             std::to_string(params.image_channels));
    if (input.xr.shape[1] != input.mask.h || input.xr.shape[2] != input.mask.w)
        throw DimensionError("g_forward: mask does not match image " + input.xr.shape_string());
    Tape<float> tape(false);
    const auto vars = stage_generator(tape, params, false);
    auto xr = tape.constant(input.xr);
    auto m = tape.constant(mask_plane(input.mask));
    auto out = g_forward_tape<float>(tape, vars, tape.concat_first({xr, m}));
    return tape.value(out);
}

// Masked reconstruction objective: MSE over the hole plus lambda_known times
// MSE over the known region (either term is 0 when its region is empty).
// Accumulates in double; the tape-side twin is Tape::masked_mse.
double reconstruction_loss(const ImageTensor& y_hat, const ImageTensor& y, const BinaryMask& m,
                           double lambda_known);

} // namespace vitfill
