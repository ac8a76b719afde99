#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vitfill/image_io.hpp"
#include "vitfill/runconfig.hpp"

namespace vitfill {
namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) throw IoError("cannot write " + path);
    out << text;
    if (!out.good()) throw IoError("write failed for " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Flags beat the config file; the config file beats the defaults.
RunConfig resolve_config(const std::string& config_path, const std::string& manifest_flag,
                         const std::string& out_flag) {
    RunConfig cfg = config_path.empty() ? default_run_config() : load_run_config(config_path);
    if (!manifest_flag.empty()) cfg.manifest = manifest_flag;
    if (!out_flag.empty()) cfg.out_dir = out_flag;
    return cfg;
}

LoadedCorpus corpus_from(const RunConfig& cfg, const char* op) {
    if (cfg.manifest.empty()) {
        throw ConfigError(std::string(op) +
                          ": no corpus manifest (pass --manifest or set paths.manifest)");
    }
    return load_corpus(load_manifest(cfg.manifest));
}

int run_ingest(const std::string& dir, const std::string& out, int size, std::uint64_t seed) {
    const Corpus corpus = ingest_corpus(dir, size, size, seed, SplitFractions{});
    save_manifest(corpus, out);
    const auto count = [&corpus](Split s) { return split_indices(corpus, s).size(); };
    std::cout << corpus.items.size() << " image(s) at " << size << "x" << size << ": "
              << count(Split::train) << " train, " << count(Split::val) << " val, "
              << count(Split::test) << " test\nmanifest: " << out << "\n";
    return 0;
}

int run_mask(const std::string& out, int height, int width, int min_side, int max_side,
             std::uint64_t seed) {
    const MaskSpec spec{min_side, max_side};
    validate_mask_spec(spec, height, width);
    save_mask(sample_mask(seed, height, width, spec), out);
    std::cout << "mask: " << out << "\n";
    return 0;
}

int run_prefill(const std::string& config_path, const std::string& image_path,
                const std::string& ck_path, const std::string& out_dir) {
    const Checkpoint ck = load_checkpoint(ck_path);
    std::uint64_t seed = ck.seed;
    MaskSpec spec = ck.mask_spec;
    if (!config_path.empty()) {
        const RunConfig cfg = load_run_config(config_path);
        seed = cfg.train.seed;
        spec = cfg.train.mask;
    }
    const ImageTensor y = load_corpus_image(image_path, ck.image_h, ck.image_w);
    const std::string id = fs::path(image_path).stem().string();
    validate_mask_spec(spec, ck.image_h, ck.image_w);
    const BinaryMask m = sample_mask(eval_mask_seed(seed, id), ck.image_h, ck.image_w, spec);

    const PredictOutputs staged = predict_image(y, m, ck);
    ensure_dir(out_dir);
    save_image(staged.x, out_dir + "/X.png");
    save_mask(m, out_dir + "/mask.png");
    save_image(staged.input.xr, out_dir + "/xr.png");
    save_image(staged.pred.y_hat, out_dir + "/yhat.png");
    std::cout << "wrote X.png, mask.png, xr.png, yhat.png under " << out_dir << "\n";
    return 0;
}

int run_train(const RunConfig& cfg) {
    const LoadedCorpus corpus = corpus_from(cfg, "train");
    ensure_dir(cfg.out_dir);
    write_resolved_run_config(cfg, cfg.out_dir + "/config.json");

    TrainResult result = train(corpus, cfg.train);
    result.checkpoint.resolved_config = resolved_run_config_json(cfg);
    save_checkpoint(result.checkpoint, cfg.out_dir + "/checkpoint.vmf1");
    write_text(cfg.out_dir + "/history.jsonl", history_jsonl(result.history));

    std::ostringstream msg;
    msg.precision(4);
    msg << std::fixed << "trained " << result.history.epochs.size() << " epoch(s); best epoch "
        << result.checkpoint.epoch << ", validation masked PSNR "
        << result.checkpoint.val_masked_psnr.back() << " dB\ncheckpoint: " << cfg.out_dir
        << "/checkpoint.vmf1\n";
    std::cout << msg.str();
    return 0;
}

int run_eval(const RunConfig& cfg, const std::string& ck_path, const std::string& split_text) {
    const Split split = parse_split(split_text);
    const Checkpoint ck = load_checkpoint(ck_path);
    const LoadedCorpus corpus = corpus_from(cfg, "eval");
    const MetricsReport report = evaluate(corpus, split, ck);

    ensure_dir(cfg.out_dir);
    write_resolved_run_config(cfg, cfg.out_dir + "/config.json");
    const std::string csv_path =
        cfg.out_dir + "/metrics_" + std::string(split_name(split)) + ".csv";
    write_metrics_csv(report, csv_path);

    std::ostringstream msg;
    msg.precision(4);
    msg << std::fixed << report.rows.size() << " image(s): psnr " << report.psnr_db.mean
        << " dB, masked psnr " << report.psnr_masked_db.mean << " dB, ssim "
        << report.ssim.mean << "\nmetrics: " << csv_path << "\n";
    std::cout << msg.str();
    return 0;
}

int run_ablate(const RunConfig& cfg) {
    const LoadedCorpus corpus = corpus_from(cfg, "ablate");
    ensure_dir(cfg.out_dir);
    write_resolved_run_config(cfg, cfg.out_dir + "/config.json");

    const std::vector<AblationCell> cells = ablate(corpus, cfg.train);
    write_text(cfg.out_dir + "/ablation.csv", ablation_csv(cells));
    for (const AblationCell& cell : cells) {
        std::string tag = cell.label;
        for (char& ch : tag) {
            if (ch == ':') ch = '_';
        }
        write_metrics_csv(cell.report, cfg.out_dir + "/metrics_" + tag + ".csv");
    }
    std::cout << cells.size() << " cell(s)\nablation table: " << cfg.out_dir
              << "/ablation.csv\n";
    return 0;
}

std::string markdown_table(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    std::ostringstream md;
    std::vector<std::string> notes;
    bool header_done = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            notes.push_back(line.substr(1));
            continue;
        }
        md << '|';
        std::istringstream cells(line);
        std::string cell;
        int n = 0;
        while (std::getline(cells, cell, ',')) {
            md << ' ' << cell << " |";
            ++n;
        }
        md << '\n';
        if (!header_done) {
            md << '|';
            for (int i = 0; i < n; ++i) md << " --- |";
            md << '\n';
            header_done = true;
        }
    }
    if (!notes.empty()) md << '\n';
    for (const std::string& note : notes) md << "-" << note << '\n';
    return md.str();
}

int run_report(const std::string& ck_path, const std::string& image_path,
               const std::vector<std::string>& metrics, const std::string& out_dir) {
    if ((ck_path.empty() || image_path.empty()) && metrics.empty()) {
        std::cerr << "report: nothing to render; pass --checkpoint with --image, or --metrics\n";
        return 2;
    }
    ensure_dir(out_dir);
    std::ostringstream md;
    md << "# Run report\n";

    if (!ck_path.empty() && !image_path.empty()) {
        const Checkpoint ck = load_checkpoint(ck_path);
        if (!ck.has_vit) {
            std::cout << "checkpoint carries no fill model, skipping attention maps\n";
        } else {
            const ImageTensor y = load_corpus_image(image_path, ck.image_h, ck.image_w);
            const std::string id = fs::path(image_path).stem().string();
            const BinaryMask m = sample_mask(eval_mask_seed(ck.seed, id), ck.image_h,
                                             ck.image_w, ck.mask_spec);
            const VitForwardResult fwd = vit_forward(apply_mask(y, m), ck.vit, ck.vit_config);
            const AttentionMaps& attn = fwd.attention;
            md << "\n## Attention maps\n\n" << attn.layers << " layer(s) x " << attn.heads
               << " head(s) over " << attn.tokens << " tokens ("
               << scheme_to_string(ck.vit_config.scheme)
               << "), each map scaled by its own peak\n\n";
            for (int l = 0; l < attn.layers; ++l) {
                for (int h = 0; h < attn.heads; ++h) {
                    const Tensor<float>& map = attn.at(l, h);
                    float peak = 0.0f;
                    for (float v : map.data) peak = std::max(peak, v);
                    ImageTensor img = ImageTensor::zeros({1, attn.tokens, attn.tokens});
                    for (std::size_t i = 0; i < map.data.size(); ++i) {
                        img.data[i] = map.data[i] / peak;
                    }
                    const std::string name = "attention_l" + std::to_string(l) + "_h" +
                                             std::to_string(h) + ".png";
                    save_image(img, out_dir + "/" + name);
                    md << "- " << name << "\n";
                }
            }
        }
    }

    for (const std::string& csv : metrics) {
        md << "\n## " << fs::path(csv).filename().string() << "\n\n" << markdown_table(
            read_text(csv));
    }
    write_text(out_dir + "/report.md", md.str());
    std::cout << "report: " << out_dir << "/report.md\n";
    return 0;
}

} // namespace
} // namespace vitfill

int main(int argc, char** argv) {
    using namespace vitfill;

    CLI::App app{"ViT-prefill image inpainting pipeline"};
    app.require_subcommand(1);

    auto* ingest = app.add_subcommand("ingest", "Scan a PNG directory into a split manifest");
    std::string ingest_dir, ingest_out;
    int ingest_size = 64;
    std::uint64_t ingest_seed = 0;
    ingest->add_option("dir", ingest_dir, "Directory containing *.png images")->required();
    ingest->add_option("--out", ingest_out, "Manifest JSON path")->required();
    ingest->add_option("--size", ingest_size, "Target side length in pixels");
    ingest->add_option("--seed", ingest_seed, "Shuffle and split seed");

    auto* mask = app.add_subcommand("mask", "Write one sampled rectangle mask as a PNG");
    std::string mask_out;
    int mask_h = 64, mask_w = 64, mask_min = 16, mask_max = 32;
    std::uint64_t mask_seed = 0;
    mask->add_option("--out", mask_out, "Output PNG path")->required();
    mask->add_option("--height", mask_h, "Mask height");
    mask->add_option("--width", mask_w, "Mask width");
    mask->add_option("--min", mask_min, "Minimum hole side");
    mask->add_option("--max", mask_max, "Maximum hole side");
    mask->add_option("--seed", mask_seed, "Sampling seed");

    auto* prefill = app.add_subcommand(
        "prefill", "Emit the pipeline stages for one image: X, mask, X_R, final prediction");
    std::string pre_config, pre_image, pre_ck, pre_out;
    prefill->add_option("--config", pre_config,
                        "Run config whose seed and mask range override the checkpoint's");
    prefill->add_option("--image", pre_image, "Input PNG")->required();
    prefill->add_option("--checkpoint", pre_ck, "Checkpoint file")->required();
    prefill->add_option("--out", pre_out, "Output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "Train on a corpus and write a checkpoint");
    std::string train_config, train_manifest, train_out;
    train_cmd->add_option("--config", train_config, "Run config JSON");
    train_cmd->add_option("--manifest", train_manifest, "Corpus manifest (beats the config)");
    train_cmd->add_option("--out", train_out, "Run directory (beats the config)");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one corpus split");
    std::string eval_config, eval_manifest, eval_out, eval_ck, eval_split = "val";
    eval_cmd->add_option("--config", eval_config, "Run config JSON");
    eval_cmd->add_option("--manifest", eval_manifest, "Corpus manifest (beats the config)");
    eval_cmd->add_option("--out", eval_out, "Run directory (beats the config)");
    eval_cmd->add_option("--checkpoint", eval_ck, "Checkpoint file")->required();
    eval_cmd->add_option("--split", eval_split, "train, val, or test");

    auto* ablate_cmd =
        app.add_subcommand("ablate", "Train and evaluate the eight-scheme tokenization grid");
    std::string ablate_config, ablate_manifest, ablate_out;
    ablate_cmd->add_option("--config", ablate_config, "Run config JSON");
    ablate_cmd->add_option("--manifest", ablate_manifest, "Corpus manifest (beats the config)");
    ablate_cmd->add_option("--out", ablate_out, "Run directory (beats the config)");

    auto* report = app.add_subcommand(
        "report", "Render attention maps and turn metric CSVs into markdown tables");
    std::string rep_ck, rep_image, rep_out;
    std::vector<std::string> rep_metrics;
    report->add_option("--checkpoint", rep_ck, "Checkpoint for attention maps");
    report->add_option("--image", rep_image, "Image the attention is computed on");
    report->add_option("--metrics", rep_metrics, "Metric CSV files to tabulate");
    report->add_option("--out", rep_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
        if (*ingest) return run_ingest(ingest_dir, ingest_out, ingest_size, ingest_seed);
        if (*mask) return run_mask(mask_out, mask_h, mask_w, mask_min, mask_max, mask_seed);
        if (*prefill) return run_prefill(pre_config, pre_image, pre_ck, pre_out);
        if (*train_cmd) return run_train(resolve_config(train_config, train_manifest, train_out));
        if (*eval_cmd) {
            return run_eval(resolve_config(eval_config, eval_manifest, eval_out), eval_ck,
                            eval_split);
        }
        if (*ablate_cmd) {
            return run_ablate(resolve_config(ablate_config, ablate_manifest, ablate_out));
        }
        if (*report) return run_report(rep_ck, rep_image, rep_metrics, rep_out);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
