#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitfill/checkpoint.hpp"
#include "vitfill/corpus.hpp"
#include "vitfill/metrics.hpp"

namespace vitfill {

// Which fill model runs ahead of the generator: one pretrained with the
// configured scheme, one pretrained with the fixed square:16 tokenization, or
// none at all (classical zero-fill baseline).
enum class VitMode { pretrain_scheme, fixed_16, none };

VitMode parse_vit_mode(const std::string& text);
std::string vit_mode_to_string(VitMode mode);

// Desk-scale defaults; the published preset (batch 64, 300 epochs) is kept in
// the comments since it is not practical on one core.
struct TrainConfig {
    double lr = 1e-4;
    int batch = 16;      // published preset: 64
    int max_epochs = 50; // published preset: 300
    double weight_decay = 1e-5;
    int early_stop_patience = 10; // epochs without val masked-PSNR improvement
    int lr_halving_patience = 5;
    std::uint64_t seed = 0;
    MaskSpec mask;
    ViTConfig vit;
    Composition composition = Composition::residual;
    double lambda_known = 0.1;
    VitMode vit_mode = VitMode::pretrain_scheme;
    int pretrain_epochs = 10;
    bool joint_finetune = false; // keep training the ViT during the generator phase
};

void validate_train_config(const TrainConfig& cfg);

// The scheme the ViT actually runs with: fixed_16 pins square:16, everything
// else takes the configured scheme.
ViTConfig effective_vit_config(const TrainConfig& cfg);

// Training holes move per (epoch, item); evaluation holes are pinned per
// image id. Both are pure functions of the run seed, which is what makes
// with/without-prefill comparisons see identical masks.
std::uint64_t train_mask_seed(std::uint64_t seed, int epoch, int item_index);
std::uint64_t eval_mask_seed(std::uint64_t seed, const std::string& image_id);

// The order the train split is visited in a given epoch, again a pure
// function of the seed so a run can be replayed piecewise.
std::vector<int> epoch_shuffle(const std::vector<int>& indices, std::uint64_t seed, int epoch);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_masked_psnr = 0.0;
    double lr = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

// One JSON object per line, keys sorted, trailing newline per record.
std::string history_jsonl(const TrainHistory& history);

// ViT-only phase: zero-fill the hole, run the encoder, and regress the fill
// toward the original pixels (hole MSE plus 0.1 times known-region MSE).
// Returns the epoch snapshot with the best validation masked-PSNR of the raw
// fill (the final epoch when the validation split is empty). When history is
// given it receives one record per pretrain epoch.
ViTParams<float> pretrain_vit(const LoadedCorpus& corpus, const TrainConfig& cfg,
                              TrainHistory* history = nullptr);

struct TrainResult {
    Checkpoint checkpoint; // best-validation snapshot
    TrainHistory history;
};

TrainResult train(const LoadedCorpus& corpus, const TrainConfig& cfg);

// Every stage of the inference pipeline for one image, in order.
struct PredictOutputs {
    ImageTensor x;         // zero-filled input
    ImageTensor x_vit_raw; // unclamped fill; zeros when the checkpoint has no ViT
    ComposedInput input;   // X_R with its mask
    Prediction pred;
};

PredictOutputs predict_image(const ImageTensor& y, const BinaryMask& m, const Checkpoint& ck);

std::string checkpoint_fingerprint(const Checkpoint& ck);

// Deterministic per-image masks from (checkpoint seed, image id); rows follow
// corpus order within the split.
MetricsReport evaluate(const LoadedCorpus& corpus, Split split, const Checkpoint& ck);

inline constexpr const char* kAblationSchemes[] = {"none",     "square:16", "column:1",
                                                   "column:2", "column:4",  "row:1",
                                                   "row:2",    "row:4"};

struct AblationCell {
    std::string label;
    MetricsReport report;
};

// One train+evaluate per scheme cell, all cells sharing the base seed and
// therefore identical masks. Evaluates on the test split, or the validation
// split when the test split is empty.
std::vector<AblationCell> ablate(const LoadedCorpus& corpus, const TrainConfig& base);

// scheme,psnr_db,psnr_masked_db,ssim rows of aggregate means, six decimals.
std::string ablation_csv(const std::vector<AblationCell>& cells);

} // namespace vitfill
