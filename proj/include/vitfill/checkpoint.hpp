#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vitfill/adam.hpp"
#include "vitfill/composer.hpp"
#include "vitfill/generator.hpp"
#include "vitfill/mask.hpp"
#include "vitfill/vit.hpp"

namespace vitfill {

inline constexpr char kCheckpointMagic[4] = {'V', 'M', 'F', '1'};
inline constexpr int kCheckpointVersion = 1;

// Everything needed to resume or evaluate a run: architecture, parameters,
// optimizer moments, progress counters, and the RNG stream. Reloading must
// reproduce forward outputs bit-exactly, so tensors are stored as raw f32.
struct Checkpoint {
    ViTConfig vit_config;
    std::string vit_mode = "pretrain_scheme";
    int image_channels = 3;
    int image_h = 64;
    int image_w = 64;
    Composition composition = Composition::residual;
    double lambda_known = 0.1;
    MaskSpec mask_spec; // evaluation regenerates per-image masks from this

    int epoch = 0;
    std::uint64_t seed = 0;
    std::string rng_state;
    std::vector<double> val_masked_psnr;
    std::string resolved_config;

    bool has_vit = false;
    ViTParams<float> vit;
    GeneratorParams<float> gen;
    std::map<std::string, AdamState<float>> optimizer; // keyed by parameter name
};

// File layout: 4 magic bytes "VMF1", a little-endian u32 header length, the
// JSON header, then each named tensor as raw little-endian f32 in the exact
// order of the header's tensor table.
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace vitfill
