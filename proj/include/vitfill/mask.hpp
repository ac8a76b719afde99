#pragma once

#include <cstdint>
#include <vector>

#include "vitfill/image.hpp"

namespace vitfill {

// Row-major HxW plane of {0,1}; 1 marks an unknown (masked) pixel.
struct BinaryMask {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> data;

    std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
    std::int64_t hole_area() const;
};

// Rectangular hole sampler parameters. Defaults follow the training setup of
// holes up to 128x128 with a floor at a quarter of the maximum.
struct MaskSpec {
    int min_side = 32;
    int max_side = 128;
};

void validate_mask_spec(const MaskSpec& spec, int h, int w);

// One axis-aligned rectangle of 1s. Side lengths are uniform over
// [min_side, max_side], the top-left corner uniform over placements that keep
// the rectangle fully inside the image. Deterministic in the seed.
BinaryMask sample_mask(std::uint64_t seed, int h, int w, const MaskSpec& spec);

// X = Y * (1 - M): zero-fills unknown pixels, broadcasting the mask over
// channels. Y is left untouched.
ImageTensor apply_mask(const ImageTensor& y, const BinaryMask& m);

// The mask as a float plane ({0,1} values), either 1xHxW or broadcast to
// C x H x W, for compositing and loss arithmetic.
Tensor<float> mask_plane(const BinaryMask& m);
Tensor<float> broadcast_mask(const BinaryMask& m, int channels);

} // namespace vitfill
