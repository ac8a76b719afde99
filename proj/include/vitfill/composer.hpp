#pragma once

#include <string>

#include "vitfill/image.hpp"
#include "vitfill/mask.hpp"

namespace vitfill {

// How the generator output enters the final prediction: added on top of the
// ViT fill inside the hole (the composition as printed), or replacing the
// fill entirely.
enum class Composition { residual, replace };

Composition parse_composition(const std::string& text);
std::string composition_to_string(Composition c);

// The generator's input: ViT features inside the hole, original pixels
// outside, with the mask carried alongside.
struct ComposedInput {
    ImageTensor xr;
    BinaryMask mask;
};

struct Prediction {
    ImageTensor y_hat;
    Composition provenance = Composition::residual;
};

// X_R = X_ViT * M + Y * (1 - M), clamped to [0,1]. Wherever M = 0 the result
// is bit-identical to Y.
ComposedInput prefill(const ImageTensor& x_vit_raw, const ImageTensor& y, const BinaryMask& m);

// Final assembly, clamped to [0,1]:
//   residual: Y_hat = X_ViT * M + Y * (1 - M) + G * M
//   replace:  Y_hat = Y * (1 - M) + G * M
Prediction finalize(const ImageTensor& x_vit_raw, const ImageTensor& y, const BinaryMask& m,
                    const ImageTensor& g_out, Composition mode);

} // namespace vitfill
