#include "vitfill/patching.hpp"

#include <charconv>

namespace vitfill {

PatchScheme parse_scheme(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw ConfigError("patch scheme '" + text + "': expected kind:size, e.g. column:2");
    const std::string kind = text.substr(0, colon);
    const std::string num = text.substr(colon + 1);
    int size = 0;
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), size);
    if (ec != std::errc{} || ptr != num.data() + num.size() || size < 1)
        throw ConfigError("patch scheme '" + text + "': size must be a positive integer");
    PatchScheme s;
    s.size = size;
    if (kind == "square")
        s.kind = PatchScheme::Kind::square;
    else if (kind == "column")
        s.kind = PatchScheme::Kind::column;
    else if (kind == "row")
        s.kind = PatchScheme::Kind::row;
    else
        throw ConfigError("patch scheme '" + text + "': kind must be square, column, or row");
    return s;
}

std::string scheme_to_string(const PatchScheme& s) {
    switch (s.kind) {
    case PatchScheme::Kind::square: return "square:" + std::to_string(s.size);
    case PatchScheme::Kind::column: return "column:" + std::to_string(s.size);
    case PatchScheme::Kind::row: return "row:" + std::to_string(s.size);
    }
    throw ValidationError("scheme_to_string: corrupt scheme kind");
}

void validate_scheme(const PatchScheme& s, int h, int w) {
    if (s.size < 1) throw ValidationError("patch scheme: size must be >= 1");
    const std::string dims = std::to_string(h) + "x" + std::to_string(w);
    switch (s.kind) {
    case PatchScheme::Kind::square:
        if (h % s.size != 0 || w % s.size != 0)
            throw DimensionError("square:" + std::to_string(s.size) +
                                 " does not divide image " + dims);
        return;
    case PatchScheme::Kind::column:
        if (w % s.size != 0)
            throw DimensionError("column:" + std::to_string(s.size) +
                                 " does not divide image width of " + dims);
        return;
    case PatchScheme::Kind::row:
        if (h % s.size != 0)
            throw DimensionError("row:" + std::to_string(s.size) +
                                 " does not divide image height of " + dims);
        return;
    }
    throw ValidationError("validate_scheme: corrupt scheme kind");
}

int token_count(const PatchScheme& s, int h, int w) {
    validate_scheme(s, h, w);
    switch (s.kind) {
    case PatchScheme::Kind::square: return (h / s.size) * (w / s.size);
    case PatchScheme::Kind::column: return w / s.size;
    case PatchScheme::Kind::row: return h / s.size;
    }
    return 0;
}

int token_dim(const PatchScheme& s, int c, int h, int w) {
    validate_scheme(s, h, w);
    switch (s.kind) {
    case PatchScheme::Kind::square: return c * s.size * s.size;
    case PatchScheme::Kind::column: return c * h * s.size;
    case PatchScheme::Kind::row: return c * s.size * w;
    }
    return 0;
}

std::shared_ptr<const std::vector<std::int64_t>> patch_index_map(const PatchScheme& s, int c,
                                                                 int h, int w) {
    validate_scheme(s, h, w);
    const int n = token_count(s, h, w);
    const int d = token_dim(s, c, h, w);
    auto map = std::make_shared<std::vector<std::int64_t>>(
        static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    auto img_idx = [&](int ch, int y, int x) {
        return ch * plane + static_cast<std::int64_t>(y) * w + x;
    };
    std::size_t out = 0;
    switch (s.kind) {
    case PatchScheme::Kind::square: {
        const int p = s.size;
        const int gw = w / p;
        const int gh = h / p;
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx)
                for (int ch = 0; ch < c; ++ch)
                    for (int py = 0; py < p; ++py)
                        for (int px = 0; px < p; ++px)
                            (*map)[out++] = img_idx(ch, gy * p + py, gx * p + px);
        break;
    }
    case PatchScheme::Kind::column: {
        const int k = s.size;
        for (int t = 0; t < n; ++t)
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h; ++y)
                    for (int xk = 0; xk < k; ++xk)
                        (*map)[out++] = img_idx(ch, y, t * k + xk);
        break;
    }
    case PatchScheme::Kind::row: {
        const int k = s.size;
        for (int t = 0; t < n; ++t)
            for (int ch = 0; ch < c; ++ch)
                for (int yk = 0; yk < k; ++yk)
                    for (int x = 0; x < w; ++x)
                        (*map)[out++] = img_idx(ch, t * k + yk, x);
        break;
    }
    }
    return map;
}

TokenGrid patchify(const ImageTensor& img, const PatchScheme& s) {
    if (img.shape.size() != 3)
        throw DimensionError("patchify: expected CxHxW, got " + img.shape_string());
    const int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    const auto map = patch_index_map(s, c, h, w);
    const int n = token_count(s, h, w);
    const int d = token_dim(s, c, h, w);
    TokenGrid grid;
    grid.tokens = Tensor<float>::zeros({n, d});
    grid.scheme = s;
    grid.c = c;
    grid.h = h;
    grid.w = w;
    for (std::size_t i = 0; i < map->size(); ++i)
        grid.tokens.data[i] = img.data[static_cast<std::size_t>((*map)[i])];
    return grid;
}

ImageTensor depatchify(const TokenGrid& grid) {
    const int n = token_count(grid.scheme, grid.h, grid.w);
    const int d = token_dim(grid.scheme, grid.c, grid.h, grid.w);
    if (grid.tokens.shape.size() != 2 || grid.tokens.shape[0] != n || grid.tokens.shape[1] != d)
        throw DimensionError("depatchify: token matrix " + grid.tokens.shape_string() +
                             " inconsistent with scheme " + scheme_to_string(grid.scheme) +
                             " on " + std::to_string(grid.c) + "x" + std::to_string(grid.h) +
                             "x" + std::to_string(grid.w));
    const auto map = patch_index_map(grid.scheme, grid.c, grid.h, grid.w);
    ImageTensor img = ImageTensor::zeros({grid.c, grid.h, grid.w});
    for (std::size_t i = 0; i < map->size(); ++i)
        img.data[static_cast<std::size_t>((*map)[i])] = grid.tokens.data[i];
    return img;
}

} // namespace vitfill
