#include "vitfill/composer.hpp"

namespace vitfill {

Composition parse_composition(const std::string& text) {
    if (text == "residual") return Composition::residual;
    if (text == "replace") return Composition::replace;
    throw ConfigError("composition '" + text + "': expected residual or replace");
}

std::string composition_to_string(Composition c) {
    return c == Composition::residual ? "residual" : "replace";
}

namespace {

void check_compose_shapes(const ImageTensor& a, const ImageTensor& y, const BinaryMask& m,
                          const char* op) {
    require_image(y, op);
    require_same_shape(a, y, op);
    if (y.shape[1] != m.h || y.shape[2] != m.w)
        throw DimensionError(std::string(op) + ": mask " + std::to_string(m.h) + "x" +
                             std::to_string(m.w) + " does not match image " + y.shape_string());
}

} // namespace

ComposedInput prefill(const ImageTensor& x_vit_raw, const ImageTensor& y, const BinaryMask& m) {
    check_compose_shapes(x_vit_raw, y, m, "prefill");
    ComposedInput out{y, m};
    const std::size_t plane = static_cast<std::size_t>(m.h) * m.w;
    for (int c = 0; c < y.shape[0]; ++c) {
        const std::size_t base = c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            const float mf = static_cast<float>(m.data[i]);
            out.xr.data[base + i] = std::clamp(
                x_vit_raw.data[base + i] * mf + y.data[base + i] * (1.0f - mf), 0.0f, 1.0f);
        }
    }
    return out;
}

Prediction finalize(const ImageTensor& x_vit_raw, const ImageTensor& y, const BinaryMask& m,
                    const ImageTensor& g_out, Composition mode) {
    check_compose_shapes(x_vit_raw, y, m, "finalize");
    require_same_shape(g_out, y, "finalize");
    Prediction out{y, mode};
    const std::size_t plane = static_cast<std::size_t>(m.h) * m.w;
    for (int c = 0; c < y.shape[0]; ++c) {
        const std::size_t base = c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            const float mf = static_cast<float>(m.data[i]);
            const float v = mode == Composition::residual
                                ? x_vit_raw.data[base + i] * mf + y.data[base + i] * (1.0f - mf) +
                                      g_out.data[base + i] * mf
                                : y.data[base + i] * (1.0f - mf) + g_out.data[base + i] * mf;
            out.y_hat.data[base + i] = std::clamp(v, 0.0f, 1.0f);
        }
    }
    return out;
}

} // namespace vitfill
