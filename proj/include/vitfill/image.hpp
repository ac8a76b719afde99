#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "vitfill/tensor.hpp"

namespace vitfill {

// Images are CxHxW float tensors with values in [0,1], C in {1,3}.
using ImageTensor = Tensor<float>;

inline void require_image(const ImageTensor& img, const std::string& where) {
    if (img.shape.size() != 3)
        throw ValidationError(where + ": image must be CxHxW, got " + img.shape_string());
    const int c = img.shape[0];
    if (c != 1 && c != 3)
        throw UnsupportedImageError(where + ": channel count must be 1 or 3, got " +
                                    std::to_string(c));
    for (float v : img.data) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
            throw ValidationError(where + ": image values must be finite and in [0,1]");
    }
}

inline ImageTensor clamp01(ImageTensor img) {
    for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

// Replicates a single-channel image to three channels; three-channel input
// passes through untouched.
inline ImageTensor promote_to_rgb(const ImageTensor& img) {
    require_image(img, "promote_to_rgb");
    if (img.shape[0] == 3) return img;
    const int h = img.shape[1], w = img.shape[2];
    ImageTensor out = ImageTensor::zeros({3, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < 3; ++c)
        std::copy(img.data.begin(), img.data.end(), out.data.begin() + c * plane);
    return out;
}

// Quantization applied by save_image: round(v*255), clamped. Exposed so tests
// can state the load(save(x)) == quantize(x) contract directly.
inline float quantize_u8(float v) {
    const long b = std::lround(static_cast<double>(v) * 255.0);
    return static_cast<float>(std::clamp(b, 0L, 255L)) / 255.0f;
}

inline ImageTensor quantize_image(ImageTensor img) {
    for (float& v : img.data) v = quantize_u8(v);
    return img;
}

} // namespace vitfill
