#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitfill/image.hpp"

namespace vitfill {

enum class Split { train, val, test };

const char* split_name(Split s);
Split parse_split(const std::string& name);

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct CorpusItem {
    std::string id;
    std::string path;
    Split split = Split::train;
};

// Items are stored in shuffled order; the shuffle and split assignment are a
// pure function of (lexicographic directory listing, seed, fractions).
struct Corpus {
    std::uint64_t seed = 0;
    int target_h = 64;
    int target_w = 64;
    std::vector<CorpusItem> items;
};

std::vector<int> split_indices(const Corpus& corpus, Split s);

// Lists *.png files in dir (lexicographic), verifies every file decodes and is
// at least 16x16, shuffles with the seed, and assigns splits by cumulative
// rounded fractions. Needs at least 3 images.
Corpus ingest_corpus(const std::string& dir, int target_h, int target_w, std::uint64_t seed,
                     const SplitFractions& fractions);

// Manifest document: {"seed": ..., "target": [H, W], "items": [{id, path, split}]}.
std::string corpus_manifest_json(const Corpus& corpus);
void save_manifest(const Corpus& corpus, const std::string& path);
Corpus load_manifest(const std::string& path);

// Center-crops to the largest multiple-of-16 region (centered, floor offsets).
ImageTensor center_crop_multiple16(const ImageTensor& img);

// Corner-aligned bilinear resize: output corners sample input corners exactly.
ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w);

// Decode, promote grayscale to RGB, center-crop to multiple-of-16, resize to
// the target. Every corpus image goes through this exact pipeline.
ImageTensor load_corpus_image(const std::string& path, int target_h, int target_w);

struct LoadedCorpus {
    Corpus corpus;
    std::vector<ImageTensor> images; // parallel to corpus.items, all 3xHxW at target size
};

LoadedCorpus load_corpus(const Corpus& corpus);

} // namespace vitfill
