#pragma once

#include <cstdint>
#include <string>

#include "vitfill/image.hpp"

namespace vitfill {

// Deterministic procedural RGB test image: a gradient, stripe field,
// checkerboard, circle scene, rectangle scene, or sinusoid field chosen by the
// seed, with values kept inside [0.1, 0.9]. The patterns carry long-range
// structure on purpose so that filling a hole benefits from looking at the
// rest of the image.
ImageTensor synth_image(std::uint64_t seed, int h, int w);

// Writes count images named synth_0000.png, synth_0001.png, ... into dir,
// creating it if needed. Image i uses seed_mix(seed, i).
void write_synth_corpus(const std::string& dir, int count, int h, int w, std::uint64_t seed);

} // namespace vitfill
