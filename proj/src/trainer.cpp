#include "vitfill/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "vitfill/common.hpp"
#include "vitfill/patching.hpp"
#include "vitfill/rng.hpp"

namespace vitfill {

namespace {

constexpr std::uint64_t kTrainMaskTag = 0x747261696eull; // "train"
constexpr std::uint64_t kEvalMaskTag = 0x6576616cull;    // "eval"
constexpr std::uint64_t kOrderTag = 0x6f72646572ull;     // "order"

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

VitMode parse_vit_mode(const std::string& text) {
    if (text == "pretrain_scheme") return VitMode::pretrain_scheme;
    if (text == "fixed_16") return VitMode::fixed_16;
    if (text == "none") return VitMode::none;
    throw ConfigError("unknown vit_mode: " + text +
                      " (expected pretrain_scheme, fixed_16, or none)");
}

std::string vit_mode_to_string(VitMode mode) {
    switch (mode) {
        case VitMode::pretrain_scheme: return "pretrain_scheme";
        case VitMode::fixed_16: return "fixed_16";
        case VitMode::none: return "none";
    }
    throw ValidationError("vit_mode_to_string: unknown mode");
}

void validate_train_config(const TrainConfig& cfg) {
    if (!(cfg.lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (cfg.batch < 1) throw ConfigError("train: batch must be at least 1");
    if (cfg.max_epochs < 1) throw ConfigError("train: max_epochs must be at least 1");
    if (cfg.weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
    if (cfg.early_stop_patience < 1) throw ConfigError("train: early_stop_patience must be >= 1");
    if (cfg.lr_halving_patience < 1) throw ConfigError("train: lr_halving_patience must be >= 1");
    if (cfg.lambda_known < 0.0) throw ConfigError("train: lambda_known must be non-negative");
    if (cfg.pretrain_epochs < 0) throw ConfigError("train: pretrain_epochs must be >= 0");
}

ViTConfig effective_vit_config(const TrainConfig& cfg) {
    ViTConfig vcfg = cfg.vit;
    if (cfg.vit_mode == VitMode::fixed_16) {
        vcfg.scheme = PatchScheme{PatchScheme::Kind::square, 16};
    }
    return vcfg;
}

std::uint64_t train_mask_seed(std::uint64_t seed, int epoch, int item_index) {
    return seed_mix(seed_mix(seed, kTrainMaskTag), static_cast<std::uint64_t>(epoch),
                    static_cast<std::uint64_t>(item_index));
}

std::uint64_t eval_mask_seed(std::uint64_t seed, const std::string& image_id) {
    return seed_mix(seed_mix(seed, kEvalMaskTag), fnv1a(image_id));
}

std::vector<int> epoch_shuffle(const std::vector<int>& indices, std::uint64_t seed, int epoch) {
    std::vector<int> order = indices;
    Rng rng(seed_mix(seed, kOrderTag, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    return order;
}

std::string history_jsonl(const TrainHistory& history) {
    std::string out;
    for (const EpochRecord& r : history.epochs) {
        const nlohmann::json line = {
            {"epoch", r.epoch},
            {"train_loss", r.train_loss},
            {"val_masked_psnr", r.val_masked_psnr},
            {"lr", r.lr},
        };
        out += line.dump();
        out += '\n';
    }
    return out;
}

namespace {

// Sum of per-sample gradients in double, averaged at step time.
class GradAccum {
  public:
    void add(const std::string& name, const Tensor<float>& g) {
        std::vector<double>& sum = sums_[name];
        if (sum.empty()) sum.resize(g.data.size(), 0.0);
        for (std::size_t i = 0; i < g.data.size(); ++i) sum[i] += static_cast<double>(g.data[i]);
    }

    Tensor<float> mean(const std::string& name, const std::vector<int>& shape, int count) const {
        const std::vector<double>& sum = sums_.at(name);
        Tensor<float> out = Tensor<float>::zeros(shape);
        for (std::size_t i = 0; i < sum.size(); ++i) {
            out.data[i] = static_cast<float>(sum[i] / count);
        }
        return out;
    }

  private:
    std::map<std::string, std::vector<double>> sums_;
};

struct ModelState {
    bool has_vit = false;
    bool vit_trainable = false;
    ViTConfig vit_cfg;
    ViTParams<float> vit;
    GeneratorParams<float> gen;
    std::map<std::string, AdamState<float>> opt;
    AdamConfig adam;
};

// Name -> storage for every tensor the optimizer updates.
std::map<std::string, Tensor<float>*> parameter_table(ModelState& s) {
    std::map<std::string, Tensor<float>*> out;
    if (s.has_vit && s.vit_trainable) {
        for_each_vit_tensor(s.vit, [&out](const std::string& name, Tensor<float>& t) {
            if (name != "vit.pos") out[name] = &t;
        });
    }
    for_each_generator_tensor(s.gen, [&out](const std::string& name, Tensor<float>& t) {
        out[name] = &t;
    });
    return out;
}

void init_optimizer(ModelState& s) {
    s.opt.clear();
    for (const auto& [name, tensor] : parameter_table(s)) {
        s.opt.emplace(name, AdamState<float>::shaped_like(*tensor));
    }
}

void adam_step(ModelState& s, const GradAccum& accum, int batch_count) {
    for (auto& [name, tensor] : parameter_table(s)) {
        adam_update(*tensor, accum.mean(name, tensor->shape, batch_count), s.opt.at(name),
                    s.adam);
    }
}

PredictOutputs run_pipeline(const ImageTensor& y, const BinaryMask& m, bool has_vit,
                            const ViTConfig& vit_cfg, const ViTParams<float>& vit,
                            const GeneratorParams<float>& gen, Composition comp) {
    PredictOutputs out;
    out.x = apply_mask(y, m);
    out.x_vit_raw =
        has_vit ? vit_forward(out.x, vit, vit_cfg).raw : ImageTensor::zeros(y.shape);
    out.input = prefill(out.x_vit_raw, y, m);
    const ImageTensor g = g_forward(out.input, gen);
    out.pred = finalize(out.x_vit_raw, y, m, g, comp);
    return out;
}

// One sample's forward/backward for the generator phase. Returns the loss and
// adds gradients for every trainable tensor to the accumulator.
double g_train_sample(const ImageTensor& y, const BinaryMask& m, ModelState& s, Composition comp,
                      double lambda_known, GradAccum& accum) {
    const int c = y.shape[0], h = y.shape[1], w = y.shape[2];
    const ImageTensor x = apply_mask(y, m);
    const Tensor<float> mf = broadcast_mask(m, c);

    Tape<float> tape;
    std::vector<std::pair<std::string, Tape<float>::Var>> trainables;

    const auto x_const = tape.constant(x);
    Tape<float>::Var xr;
    if (s.has_vit && s.vit_trainable) {
        const auto vvars = stage_vit(tape, s.vit, true);
        const auto vt = trainable_vit_vars(vvars);
        trainables.insert(trainables.end(), vt.begin(), vt.end());
        const auto xv = vit_image_forward<float>(tape, s.vit_cfg, vvars, x_const, c, h, w);
        xr = tape.add(tape.mul(xv, tape.constant(mf)), x_const);
    } else if (s.has_vit) {
        const ImageTensor xv = vit_forward(x, s.vit, s.vit_cfg).raw;
        // same elementwise float expression the in-tape path produces
        ImageTensor xr_t = ImageTensor::zeros(y.shape);
        for (std::size_t i = 0; i < xr_t.data.size(); ++i) {
            xr_t.data[i] = xv.data[i] * mf.data[i] + x.data[i];
        }
        xr = tape.constant(std::move(xr_t));
    } else {
        xr = x_const;
    }

    const auto gvars = stage_generator(tape, s.gen, true);
    const auto gt = trainable_generator_vars(gvars);
    trainables.insert(trainables.end(), gt.begin(), gt.end());

    const auto g_in = tape.concat_first({xr, tape.constant(mask_plane(m))});
    const auto g_out = g_forward_tape<float>(tape, gvars, g_in);
    const auto residual = tape.mul(g_out, tape.constant(mf));
    const auto y_hat = comp == Composition::residual ? tape.add(xr, residual)
                                                     : tape.add(x_const, residual);
    const auto loss = tape.masked_mse(y_hat, y, mf, static_cast<float>(lambda_known));

    const double value = static_cast<double>(tape.value(loss).data[0]);
    if (!std::isfinite(value)) return value; // caller raises with epoch/step context

    tape.backward(loss);
    for (const auto& [name, var] : trainables) accum.add(name, tape.grad(var));
    return value;
}

double validation_masked_psnr(const LoadedCorpus& corpus, const std::vector<int>& val_idx,
                              const ModelState& s, const TrainConfig& cfg, Composition comp) {
    std::vector<double> vals;
    vals.reserve(val_idx.size());
    const int h = corpus.corpus.target_h, w = corpus.corpus.target_w;
    for (int i : val_idx) {
        const CorpusItem& item = corpus.corpus.items[static_cast<std::size_t>(i)];
        const ImageTensor& y = corpus.images[static_cast<std::size_t>(i)];
        const BinaryMask m = sample_mask(eval_mask_seed(cfg.seed, item.id), h, w, cfg.mask);
        const PredictOutputs out =
            run_pipeline(y, m, s.has_vit, s.vit_cfg, s.vit, s.gen, comp);
        vals.push_back(psnr_masked(out.pred.y_hat, y, m));
    }
    return aggregate_values(vals).mean;
}

Checkpoint snapshot_state(const ModelState& s, const TrainConfig& cfg, int epoch, int channels,
                          int h, int w, const std::vector<double>& val_history) {
    Checkpoint ck;
    ck.vit_config = s.vit_cfg;
    ck.vit_mode = vit_mode_to_string(cfg.vit_mode);
    ck.image_channels = channels;
    ck.image_h = h;
    ck.image_w = w;
    ck.composition = cfg.composition;
    ck.lambda_known = cfg.lambda_known;
    ck.mask_spec = cfg.mask;
    ck.epoch = epoch;
    ck.seed = cfg.seed;
    ck.rng_state = Rng(cfg.seed).state();
    ck.val_masked_psnr = val_history;
    ck.has_vit = s.has_vit;
    if (s.has_vit) ck.vit = s.vit;
    ck.gen = s.gen;
    ck.optimizer = s.opt;
    return ck;
}

} // namespace

ViTParams<float> pretrain_vit(const LoadedCorpus& corpus, const TrainConfig& cfg,
                              TrainHistory* history) {
    validate_train_config(cfg);
    if (cfg.vit_mode == VitMode::none) {
        throw ConfigError("pretrain_vit: vit_mode is none, nothing to pretrain");
    }
    const int h = corpus.corpus.target_h, w = corpus.corpus.target_w;
    const int c = 3;
    validate_mask_spec(cfg.mask, h, w);
    const ViTConfig vcfg = effective_vit_config(cfg);
    validate_vit_config(vcfg, h, w);

    const std::vector<int> train_idx = split_indices(corpus.corpus, Split::train);
    const std::vector<int> val_idx = split_indices(corpus.corpus, Split::val);
    if (train_idx.empty()) throw ValidationError("pretrain_vit: train split is empty");
    if (cfg.batch > static_cast<int>(train_idx.size())) {
        throw ValidationError("pretrain_vit: batch " + std::to_string(cfg.batch) +
                              " exceeds train split size " + std::to_string(train_idx.size()));
    }

    ViTParams<float> vit = init_vit<float>(vcfg, c, h, w, cfg.seed);
    std::map<std::string, AdamState<float>> opt;
    for_each_vit_tensor(vit, [&opt](const std::string& name, Tensor<float>& t) {
        if (name != "vit.pos") opt.emplace(name, AdamState<float>::shaped_like(t));
    });
    AdamConfig adam;
    adam.lr = cfg.lr;
    adam.weight_decay = cfg.weight_decay;

    ViTParams<float> best = vit;
    double best_val = -std::numeric_limits<double>::infinity();

    for (int epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
        const std::vector<int> order =
            epoch_shuffle(train_idx, seed_mix(cfg.seed, 0x7072ull), epoch);
        double loss_sum = 0.0;
        int samples = 0;
        int step = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch)) {
            ++step;
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            GradAccum accum;
            for (std::size_t k = start; k < stop; ++k) {
                const int idx = order[k];
                const ImageTensor& y = corpus.images[static_cast<std::size_t>(idx)];
                const BinaryMask m = sample_mask(train_mask_seed(cfg.seed, epoch, idx), h, w,
                                                 cfg.mask);
                const ImageTensor x = apply_mask(y, m);
                const Tensor<float> mf = broadcast_mask(m, c);

                Tape<float> tape;
                const auto vvars = stage_vit(tape, vit, true);
                const auto xv =
                    vit_image_forward<float>(tape, vcfg, vvars, tape.constant(x), c, h, w);
                const auto loss = tape.masked_mse(xv, y, mf, 0.1f);
                const double value = static_cast<double>(tape.value(loss).data[0]);
                if (!std::isfinite(value)) {
                    throw DivergenceError("pretraining diverged at epoch " +
                                          std::to_string(epoch) + ", step " +
                                          std::to_string(step));
                }
                loss_sum += value;
                ++samples;
                tape.backward(loss);
                for (const auto& [name, var] : trainable_vit_vars(vvars)) {
                    accum.add(name, tape.grad(var));
                }
            }
            const int count = static_cast<int>(stop - start);
            for_each_vit_tensor(vit, [&](const std::string& name, Tensor<float>& t) {
                if (name == "vit.pos") return;
                adam_update(t, accum.mean(name, t.shape, count), opt.at(name), adam);
            });
        }

        double val = 0.0;
        if (val_idx.empty()) {
            best = vit;
        } else {
            std::vector<double> vals;
            for (int i : val_idx) {
                const CorpusItem& item = corpus.corpus.items[static_cast<std::size_t>(i)];
                const ImageTensor& y = corpus.images[static_cast<std::size_t>(i)];
                const BinaryMask m =
                    sample_mask(eval_mask_seed(cfg.seed, item.id), h, w, cfg.mask);
                const ImageTensor xv = vit_forward(apply_mask(y, m), vit, vcfg).raw;
                vals.push_back(psnr_masked(clamp01(xv), y, m));
            }
            val = aggregate_values(vals).mean;
            if (val > best_val) {
                best_val = val;
                best = vit;
            }
        }
        if (history != nullptr) {
            history->epochs.push_back({epoch, loss_sum / samples, val, adam.lr});
        }
    }
    return best;
}

TrainResult train(const LoadedCorpus& corpus, const TrainConfig& cfg) {
    validate_train_config(cfg);
    const int h = corpus.corpus.target_h, w = corpus.corpus.target_w;
    const int c = 3;
    validate_mask_spec(cfg.mask, h, w);

    const std::vector<int> train_idx = split_indices(corpus.corpus, Split::train);
    const std::vector<int> val_idx = split_indices(corpus.corpus, Split::val);
    if (train_idx.empty()) throw ValidationError("train: train split is empty");
    if (cfg.batch > static_cast<int>(train_idx.size())) {
        throw ValidationError("train: batch " + std::to_string(cfg.batch) +
                              " exceeds train split size " + std::to_string(train_idx.size()));
    }

    ModelState s;
    s.adam.lr = cfg.lr;
    s.adam.weight_decay = cfg.weight_decay;
    s.vit_cfg = effective_vit_config(cfg);
    if (cfg.vit_mode != VitMode::none) {
        s.has_vit = true;
        validate_vit_config(s.vit_cfg, h, w);
        if (cfg.pretrain_epochs > 0) {
            s.vit = pretrain_vit(corpus, cfg);
            s.vit_trainable = cfg.joint_finetune;
        } else {
            s.vit = init_vit<float>(s.vit_cfg, c, h, w, cfg.seed);
            s.vit_trainable = true;
        }
    }
    s.gen = init_generator<float>(c, cfg.seed);
    init_optimizer(s);

    TrainHistory history;
    std::vector<double> val_history;
    Checkpoint best_ck;
    double best_val = -std::numeric_limits<double>::infinity();
    bool have_best = false;
    int since_best = 0;
    int since_lr = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const std::vector<int> order = epoch_shuffle(train_idx, cfg.seed, epoch);
        double loss_sum = 0.0;
        int samples = 0;
        int step = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch)) {
            ++step;
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            GradAccum accum;
            for (std::size_t k = start; k < stop; ++k) {
                const int idx = order[k];
                const ImageTensor& y = corpus.images[static_cast<std::size_t>(idx)];
                const BinaryMask m = sample_mask(train_mask_seed(cfg.seed, epoch, idx), h, w,
                                                 cfg.mask);
                const double value =
                    g_train_sample(y, m, s, cfg.composition, cfg.lambda_known, accum);
                if (!std::isfinite(value)) {
                    throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                          ", step " + std::to_string(step) +
                                          " (non-finite loss)");
                }
                loss_sum += value;
                ++samples;
            }
            adam_step(s, accum, static_cast<int>(stop - start));
        }

        const double val = validation_masked_psnr(corpus, val_idx, s, cfg, cfg.composition);
        val_history.push_back(val);
        history.epochs.push_back({epoch, loss_sum / samples, val, s.adam.lr});

        if (val > best_val || !have_best || val_idx.empty()) {
            best_val = val;
            best_ck = snapshot_state(s, cfg, epoch, c, h, w, val_history);
            have_best = true;
            since_best = 0;
            since_lr = 0;
        } else {
            ++since_best;
            ++since_lr;
        }
        if (since_lr >= cfg.lr_halving_patience) {
            s.adam.lr *= 0.5;
            since_lr = 0;
        }
        if (since_best >= cfg.early_stop_patience) break;
    }
    return {std::move(best_ck), std::move(history)};
}

PredictOutputs predict_image(const ImageTensor& y, const BinaryMask& m, const Checkpoint& ck) {
    require_image(y, "predict_image");
    if (y.shape[0] != ck.image_channels || y.shape[1] != ck.image_h ||
        y.shape[2] != ck.image_w) {
        throw DimensionError("predict_image: image " + y.shape_string() +
                             " does not match checkpoint geometry " +
                             std::to_string(ck.image_channels) + "x" +
                             std::to_string(ck.image_h) + "x" + std::to_string(ck.image_w));
    }
    return run_pipeline(y, m, ck.has_vit, ck.vit_config, ck.vit, ck.gen, ck.composition);
}

std::string checkpoint_fingerprint(const Checkpoint& ck) {
    std::ostringstream os;
    os << "vit_mode=" << ck.vit_mode << " scheme=" << scheme_to_string(ck.vit_config.scheme)
       << " d_model=" << ck.vit_config.d_model << " heads=" << ck.vit_config.heads
       << " depth=" << ck.vit_config.depth << " mlp=" << ck.vit_config.mlp_hidden
       << " pos=" << (ck.vit_config.use_positional ? 1 : 0)
       << " composition=" << composition_to_string(ck.composition)
       << " lambda=" << ck.lambda_known << " mask=" << ck.mask_spec.min_side << ".."
       << ck.mask_spec.max_side << " image=" << ck.image_channels << "x" << ck.image_h << "x"
       << ck.image_w << " seed=" << ck.seed << " epoch=" << ck.epoch;
    return os.str();
}

MetricsReport evaluate(const LoadedCorpus& corpus, Split split, const Checkpoint& ck) {
    const std::vector<int> idx = split_indices(corpus.corpus, split);
    if (idx.empty()) {
        throw ValidationError(std::string("evaluate: split ") + split_name(split) + " is empty");
    }
    const int h = corpus.corpus.target_h, w = corpus.corpus.target_w;
    if (h != ck.image_h || w != ck.image_w) {
        throw DimensionError("evaluate: corpus target " + std::to_string(h) + "x" +
                             std::to_string(w) + " does not match checkpoint " +
                             std::to_string(ck.image_h) + "x" + std::to_string(ck.image_w));
    }
    std::vector<ImageMetrics> rows;
    rows.reserve(idx.size());
    for (int i : idx) {
        const CorpusItem& item = corpus.corpus.items[static_cast<std::size_t>(i)];
        const ImageTensor& y = corpus.images[static_cast<std::size_t>(i)];
        const BinaryMask m = sample_mask(eval_mask_seed(ck.seed, item.id), h, w, ck.mask_spec);
        const PredictOutputs out = predict_image(y, m, ck);
        ImageMetrics row;
        row.id = item.id;
        row.psnr_db = psnr(out.pred.y_hat, y);
        row.psnr_masked_db = psnr_masked(out.pred.y_hat, y, m);
        row.ssim = ssim(out.pred.y_hat, y);
        rows.push_back(std::move(row));
    }
    return make_report(std::move(rows), checkpoint_fingerprint(ck));
}

std::vector<AblationCell> ablate(const LoadedCorpus& corpus, const TrainConfig& base) {
    const Split eval_split =
        split_indices(corpus.corpus, Split::test).empty() ? Split::val : Split::test;
    std::vector<AblationCell> cells;
    for (const char* label : kAblationSchemes) {
        TrainConfig cfg = base;
        if (std::string(label) == "none") {
            cfg.vit_mode = VitMode::none;
        } else {
            cfg.vit_mode = VitMode::pretrain_scheme;
            cfg.vit.scheme = parse_scheme(label);
        }
        const TrainResult result = train(corpus, cfg);
        cells.push_back({label, evaluate(corpus, eval_split, result.checkpoint)});
    }
    return cells;
}

std::string ablation_csv(const std::vector<AblationCell>& cells) {
    std::ostringstream os;
    os << "scheme,psnr_db,psnr_masked_db,ssim\n";
    os << std::fixed;
    os.precision(6);
    for (const AblationCell& cell : cells) {
        os << cell.label << ',' << cell.report.psnr_db.mean << ','
           << cell.report.psnr_masked_db.mean << ',' << cell.report.ssim.mean << '\n';
    }
    os << "# values are aggregate means over the evaluation split\n";
    for (const AblationCell& cell : cells) {
        os << "# " << cell.label << ": " << cell.report.fingerprint << '\n';
    }
    return os.str();
}

} // namespace vitfill
