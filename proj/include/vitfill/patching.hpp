#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vitfill/image.hpp"

namespace vitfill {

// Tokenization geometry. Square cuts p x p tiles; Column cuts vertical strips
// k pixels wide spanning the full height; Row cuts horizontal strips k pixels
// tall spanning the full width.
struct PatchScheme {
    enum class Kind { square, column, row };

    Kind kind = Kind::square;
    int size = 16; // patch side (square) or strip thickness (column/row)

    bool operator==(const PatchScheme&) const = default;
};

// Config/CLI spelling: "square:16", "column:2", "row:4".
PatchScheme parse_scheme(const std::string& text);
std::string scheme_to_string(const PatchScheme& s);

// Throws unless the scheme divides the image evenly.
void validate_scheme(const PatchScheme& s, int h, int w);

int token_count(const PatchScheme& s, int h, int w);
int token_dim(const PatchScheme& s, int c, int h, int w);

// Flat lookup table driving both directions of the tokenization:
// image_flat_index = map[token * D + d]. Every image index appears exactly
// once. Token order is raster order (squares row-major over the tile grid,
// columns left to right, rows top to bottom); within a token the layout is
// channel-major, then row-major.
std::shared_ptr<const std::vector<std::int64_t>> patch_index_map(const PatchScheme& s, int c,
                                                                 int h, int w);

struct TokenGrid {
    Tensor<float> tokens; // N x D
    PatchScheme scheme;
    int c = 0, h = 0, w = 0;
};

TokenGrid patchify(const ImageTensor& img, const PatchScheme& s);
ImageTensor depatchify(const TokenGrid& grid);

} // namespace vitfill
