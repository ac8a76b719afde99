#include "vitfill/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "vitfill/common.hpp"
#include "vitfill/image_io.hpp"
#include "vitfill/rng.hpp"

namespace vitfill {

namespace {

constexpr float kLo = 0.1f;
constexpr float kHi = 0.9f;
constexpr double kTau = 6.283185307179586;

struct Color {
    float r, g, b;
};

Color random_color(Rng& rng) {
    return {static_cast<float>(rng.uniform(kLo, kHi)), static_cast<float>(rng.uniform(kLo, kHi)),
            static_cast<float>(rng.uniform(kLo, kHi))};
}

void put(ImageTensor& img, int y, int x, const Color& c) {
    const int h = img.shape[1], w = img.shape[2];
    const std::size_t i = static_cast<std::size_t>(y) * w + x;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    img.data[i] = c.r;
    img.data[plane + i] = c.g;
    img.data[2 * plane + i] = c.b;
}

Color mix(const Color& a, const Color& b, float t) {
    return {a.r + t * (b.r - a.r), a.g + t * (b.g - a.g), a.b + t * (b.b - a.b)};
}

void fill_gradient(ImageTensor& img, Rng& rng) {
    const int h = img.shape[1], w = img.shape[2];
    const Color c0 = random_color(rng);
    const Color c1 = random_color(rng);
    const double angle = rng.uniform(0.0, kTau);
    const double dx = std::cos(angle), dy = std::sin(angle);
    double lo = 0.0, hi = 0.0;
    for (int cy : {0, h - 1}) {
        for (int cx : {0, w - 1}) {
            const double p = cx * dx + cy * dy;
            lo = std::min(lo, p);
            hi = std::max(hi, p);
        }
    }
    const double span = std::max(hi - lo, 1e-9);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float t = static_cast<float>((x * dx + y * dy - lo) / span);
            put(img, y, x, mix(c0, c1, t));
        }
    }
}

void fill_stripes(ImageTensor& img, Rng& rng) {
    const int h = img.shape[1], w = img.shape[2];
    const Color c0 = random_color(rng);
    const Color c1 = random_color(rng);
    const double period = rng.uniform(6.0, 16.0);
    const int orient = rng.uniform_int(0, 2); // 0 horizontal, 1 vertical, 2 diagonal
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double p = orient == 0 ? y : (orient == 1 ? x : x + y);
            const float t = static_cast<float>(0.5 + 0.5 * std::sin(kTau * p / period));
            put(img, y, x, mix(c0, c1, t));
        }
    }
}

void fill_checker(ImageTensor& img, Rng& rng) {
    const int h = img.shape[1], w = img.shape[2];
    const Color c0 = random_color(rng);
    const Color c1 = random_color(rng);
    const int cell = rng.uniform_int(4, 12);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool odd = ((y / cell) + (x / cell)) % 2 != 0;
            put(img, y, x, odd ? c1 : c0);
        }
    }
}

void fill_circles(ImageTensor& img, Rng& rng) {
    const int h = img.shape[1], w = img.shape[2];
    fill_gradient(img, rng);
    const int count = rng.uniform_int(2, 4);
    for (int i = 0; i < count; ++i) {
        const Color c = random_color(rng);
        const double cy = rng.uniform(0.0, h - 1.0);
        const double cx = rng.uniform(0.0, w - 1.0);
        const double r = rng.uniform(std::min(h, w) / 8.0, std::min(h, w) / 3.0);
        const double r2 = r * r;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                if (d2 <= r2) put(img, y, x, c);
            }
        }
    }
}

void fill_rectangles(ImageTensor& img, Rng& rng) {
    const int h = img.shape[1], w = img.shape[2];
    fill_gradient(img, rng);
    const int count = rng.uniform_int(2, 4);
    for (int i = 0; i < count; ++i) {
        const Color c = random_color(rng);
        const int rh = rng.uniform_int(h / 6, h / 2);
        const int rw = rng.uniform_int(w / 6, w / 2);
        const int y0 = rng.uniform_int(0, h - rh);
        const int x0 = rng.uniform_int(0, w - rw);
        for (int y = y0; y < y0 + rh; ++y) {
            for (int x = x0; x < x0 + rw; ++x) put(img, y, x, c);
        }
    }
}

void fill_sinusoid(ImageTensor& img, Rng& rng) {
    const int h = img.shape[1], w = img.shape[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < 3; ++ch) {
        const double base = rng.uniform(0.35, 0.65);
        const double amp = rng.uniform(0.1, 0.25);
        const double fy = rng.uniform(0.5, 3.0) / h;
        const double fx = rng.uniform(0.5, 3.0) / w;
        const double phase = rng.uniform(0.0, kTau);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double v = base + amp * std::sin(kTau * (fx * x + fy * y) + phase);
                img.data[ch * plane + static_cast<std::size_t>(y) * w + x] =
                    static_cast<float>(v);
            }
        }
    }
}

} // namespace

ImageTensor synth_image(std::uint64_t seed, int h, int w) {
    if (h < 8 || w < 8) {
        throw ValidationError("synth_image: size must be at least 8x8");
    }
    Rng rng(seed);
    ImageTensor img = ImageTensor::zeros({3, h, w});
    switch (rng.uniform_int(0, 5)) {
        case 0: fill_gradient(img, rng); break;
        case 1: fill_stripes(img, rng); break;
        case 2: fill_checker(img, rng); break;
        case 3: fill_circles(img, rng); break;
        case 4: fill_rectangles(img, rng); break;
        default: fill_sinusoid(img, rng); break;
    }
    for (float& v : img.data) v = std::clamp(v, kLo, kHi);
    return img;
}

void write_synth_corpus(const std::string& dir, int count, int h, int w, std::uint64_t seed) {
    if (count < 1) {
        throw ValidationError("write_synth_corpus: count must be positive");
    }
    std::filesystem::create_directories(dir);
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "synth_%04d.png", i);
        const ImageTensor img = synth_image(seed_mix(seed, static_cast<std::uint64_t>(i)), h, w);
        save_image(img, (std::filesystem::path(dir) / name).string());
    }
}

} // namespace vitfill
