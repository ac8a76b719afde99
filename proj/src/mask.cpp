#include "vitfill/mask.hpp"

#include <numeric>
#include <string>

#include "vitfill/rng.hpp"

namespace vitfill {

std::int64_t BinaryMask::hole_area() const {
    return std::accumulate(data.begin(), data.end(), std::int64_t{0});
}

void validate_mask_spec(const MaskSpec& spec, int h, int w) {
    if (spec.min_side <= 0 || spec.min_side > spec.max_side)
        throw ValidationError("mask spec: need 0 < min_side <= max_side, got min=" +
                              std::to_string(spec.min_side) +
                              " max=" + std::to_string(spec.max_side));
    if (spec.max_side > h || spec.max_side > w)
        throw ValidationError("mask spec: max_side " + std::to_string(spec.max_side) +
                              " exceeds image " + std::to_string(h) + "x" + std::to_string(w));
}

BinaryMask sample_mask(std::uint64_t seed, int h, int w, const MaskSpec& spec) {
    if (h <= 0 || w <= 0)
        throw ValidationError("sample_mask: image dims must be positive");
    validate_mask_spec(spec, h, w);
    Rng rng(seed);
    const int hh = rng.uniform_int(spec.min_side, spec.max_side);
    const int hw = rng.uniform_int(spec.min_side, spec.max_side);
    const int y0 = rng.uniform_int(0, h - hh);
    const int x0 = rng.uniform_int(0, w - hw);
    BinaryMask m;
    m.h = h;
    m.w = w;
    m.data.assign(static_cast<std::size_t>(h) * w, 0);
    for (int y = y0; y < y0 + hh; ++y) {
        std::uint8_t* row = m.data.data() + static_cast<std::size_t>(y) * w;
        for (int x = x0; x < x0 + hw; ++x) row[x] = 1;
    }
    return m;
}

ImageTensor apply_mask(const ImageTensor& y, const BinaryMask& m) {
    require_image(y, "apply_mask");
    if (y.shape[1] != m.h || y.shape[2] != m.w)
        throw DimensionError("apply_mask: mask " + std::to_string(m.h) + "x" +
                             std::to_string(m.w) + " does not match image " + y.shape_string());
    ImageTensor x = y;
    const std::size_t plane = static_cast<std::size_t>(m.h) * m.w;
    for (int c = 0; c < y.shape[0]; ++c) {
        float* p = x.data.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i)
            if (m.data[i]) p[i] = 0.0f;
    }
    return x;
}

Tensor<float> mask_plane(const BinaryMask& m) {
    Tensor<float> t = Tensor<float>::zeros({1, m.h, m.w});
    for (std::size_t i = 0; i < m.data.size(); ++i) t.data[i] = static_cast<float>(m.data[i]);
    return t;
}

Tensor<float> broadcast_mask(const BinaryMask& m, int channels) {
    if (channels <= 0) throw ValidationError("broadcast_mask: channel count must be positive");
    Tensor<float> t = Tensor<float>::zeros({channels, m.h, m.w});
    const std::size_t plane = m.data.size();
    for (int c = 0; c < channels; ++c) {
        float* p = t.data.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] = static_cast<float>(m.data[i]);
    }
    return t;
}

} // namespace vitfill
