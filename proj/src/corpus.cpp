#include "vitfill/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "vitfill/common.hpp"
#include "vitfill/image_io.hpp"
#include "vitfill/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vitfill {

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    throw ValidationError("split_name: unknown split value");
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw ConfigError("unknown split name: " + name);
}

std::vector<int> split_indices(const Corpus& corpus, Split s) {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(corpus.items.size()); ++i) {
        if (corpus.items[i].split == s) out.push_back(i);
    }
    return out;
}

namespace {

void validate_fractions(const SplitFractions& f) {
    if (f.train < 0.0 || f.val < 0.0 || f.test < 0.0) {
        throw ConfigError("split fractions must be non-negative");
    }
    const double sum = f.train + f.val + f.test;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1, got " + std::to_string(sum));
    }
}

} // namespace

Corpus ingest_corpus(const std::string& dir, int target_h, int target_w, std::uint64_t seed,
                     const SplitFractions& fractions) {
    validate_fractions(fractions);
    if (target_h < 1 || target_w < 1) {
        throw ConfigError("corpus target size must be positive");
    }
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
        throw IoError("corpus directory not found: " + dir);
    }

    std::vector<std::string> names;
    for (const fs::directory_entry& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() != ".png") continue;
        names.push_back(entry.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    if (names.size() < 3) {
        throw ValidationError("corpus needs at least 3 PNG images, found " +
                              std::to_string(names.size()) + " in " + dir);
    }

    Corpus corpus;
    corpus.seed = seed;
    corpus.target_h = target_h;
    corpus.target_w = target_w;
    corpus.items.reserve(names.size());
    for (const std::string& name : names) {
        const std::string path = (fs::path(dir) / name).string();
        const ImageTensor img = load_image(path);
        if (img.shape[1] < 16 || img.shape[2] < 16) {
            throw ValidationError("corpus image " + path + " is smaller than 16x16 (" +
                                  img.shape_string() + ")");
        }
        CorpusItem item;
        item.id = fs::path(name).stem().string();
        item.path = path;
        corpus.items.push_back(std::move(item));
    }

    Rng rng(seed);
    rng.shuffle(corpus.items.begin(), corpus.items.end());

    const auto n = static_cast<long long>(corpus.items.size());
    const long long train_end = std::llround(static_cast<double>(n) * fractions.train);
    const long long val_end =
        std::llround(static_cast<double>(n) * (fractions.train + fractions.val));
    for (long long i = 0; i < n; ++i) {
        corpus.items[static_cast<std::size_t>(i)].split =
            i < train_end ? Split::train : (i < val_end ? Split::val : Split::test);
    }
    return corpus;
}

std::string corpus_manifest_json(const Corpus& corpus) {
    json items = json::array();
    for (const CorpusItem& item : corpus.items) {
        items.push_back({{"id", item.id}, {"path", item.path}, {"split", split_name(item.split)}});
    }
    const json doc = {
        {"seed", corpus.seed},
        {"target", {corpus.target_h, corpus.target_w}},
        {"items", std::move(items)},
    };
    return doc.dump(2) + "\n";
}

void save_manifest(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    const std::string text = corpus_manifest_json(corpus);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed writing " + path);
}

namespace {

void require_keys(const json& obj, std::initializer_list<const char*> keys,
                  const std::string& where) {
    for (const char* key : keys) {
        if (!obj.contains(key)) {
            throw ConfigError(where + ": missing key \"" + key + "\"");
        }
    }
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::none_of(keys.begin(), keys.end(),
                         [&key](const char* k) { return key == k; })) {
            throw ConfigError(where + ": unknown key \"" + key + "\"");
        }
    }
}

} // namespace

Corpus load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("manifest " + path + " is not valid JSON: " + e.what());
    }
    try {
        require_keys(doc, {"seed", "target", "items"}, "manifest");
        Corpus corpus;
        corpus.seed = doc.at("seed").get<std::uint64_t>();
        const json& target = doc.at("target");
        if (!target.is_array() || target.size() != 2) {
            throw ConfigError("manifest: target must be [H, W]");
        }
        corpus.target_h = target.at(0).get<int>();
        corpus.target_w = target.at(1).get<int>();
        for (const json& entry : doc.at("items")) {
            require_keys(entry, {"id", "path", "split"}, "manifest item");
            CorpusItem item;
            item.id = entry.at("id").get<std::string>();
            item.path = entry.at("path").get<std::string>();
            item.split = parse_split(entry.at("split").get<std::string>());
            corpus.items.push_back(std::move(item));
        }
        return corpus;
    } catch (const json::exception& e) {
        throw ConfigError("manifest " + path + ": " + e.what());
    }
}

ImageTensor center_crop_multiple16(const ImageTensor& img) {
    require_image(img, "center_crop_multiple16");
    const int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    const int h16 = (h / 16) * 16;
    const int w16 = (w / 16) * 16;
    if (h16 == 0 || w16 == 0) {
        throw ValidationError("center_crop_multiple16: image " + img.shape_string() +
                              " is smaller than 16x16");
    }
    if (h16 == h && w16 == w) return img;
    const int y0 = (h - h16) / 2;
    const int x0 = (w - w16) / 2;
    ImageTensor out = ImageTensor::zeros({c, h16, w16});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h16; ++y) {
            const float* src = img.data.data() + (static_cast<std::size_t>(ch) * h + y0 + y) * w + x0;
            float* dst = out.data.data() + (static_cast<std::size_t>(ch) * h16 + y) * w16;
            std::copy(src, src + w16, dst);
        }
    }
    return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
    require_image(img, "resize_bilinear");
    if (out_h < 1 || out_w < 1) {
        throw ValidationError("resize_bilinear: output size must be positive");
    }
    const int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    if (h == out_h && w == out_w) return img;
    const double sy = out_h > 1 ? static_cast<double>(h - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(w - 1) / (out_w - 1) : 0.0;
    ImageTensor out = ImageTensor::zeros({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        const float* plane = img.data.data() + static_cast<std::size_t>(ch) * h * w;
        for (int y = 0; y < out_h; ++y) {
            const double fy = y * sy;
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, h - 1);
            const double ty = fy - y0;
            for (int x = 0; x < out_w; ++x) {
                const double fx = x * sx;
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, w - 1);
                const double tx = fx - x0;
                const double v00 = plane[static_cast<std::size_t>(y0) * w + x0];
                const double v01 = plane[static_cast<std::size_t>(y0) * w + x1];
                const double v10 = plane[static_cast<std::size_t>(y1) * w + x0];
                const double v11 = plane[static_cast<std::size_t>(y1) * w + x1];
                const double v = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v01) +
                                 ty * ((1.0 - tx) * v10 + tx * v11);
                out.data[(static_cast<std::size_t>(ch) * out_h + y) * out_w + x] =
                    static_cast<float>(v);
            }
        }
    }
    return out;
}

ImageTensor load_corpus_image(const std::string& path, int target_h, int target_w) {
    const ImageTensor raw = promote_to_rgb(load_image(path));
    return resize_bilinear(center_crop_multiple16(raw), target_h, target_w);
}

LoadedCorpus load_corpus(const Corpus& corpus) {
    LoadedCorpus loaded;
    loaded.corpus = corpus;
    loaded.images.reserve(corpus.items.size());
    for (const CorpusItem& item : corpus.items) {
        loaded.images.push_back(load_corpus_image(item.path, corpus.target_h, corpus.target_w));
    }
    return loaded;
}

} // namespace vitfill
