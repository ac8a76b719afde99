#include "vitfill/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

namespace vitfill {
namespace {

const unsigned char kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) throw IoError("read failed: " + path);
    return bytes;
}

// IHDR is mandated to be the first chunk: signature(8) + length(4) + "IHDR"(4)
// + width(4) + height(4) + bit depth(1) + color type(1). Inspecting it
// directly lets unsupported depth/color be reported precisely before libpng's
// decoder (which silently converts) gets involved.
struct PngHeader {
    int bit_depth = 0;
    int color_type = 0;
};

PngHeader parse_header(const std::vector<unsigned char>& bytes, const std::string& path) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSignature, 8) != 0)
        throw DecodeError("not a PNG file: " + path);
    if (bytes.size() < 33 || std::memcmp(bytes.data() + 12, "IHDR", 4) != 0)
        throw DecodeError("PNG missing IHDR chunk: " + path);
    PngHeader h;
    h.bit_depth = bytes[24];
    h.color_type = bytes[25];
    return h;
}

} // namespace

ImageTensor load_image(const std::string& path) {
    const std::vector<unsigned char> bytes = read_file(path);
    const PngHeader hdr = parse_header(bytes, path);
    if (hdr.bit_depth != 8)
        throw UnsupportedImageError("unsupported PNG bit depth " +
                                    std::to_string(hdr.bit_depth) + " (need 8): " + path);
    int channels = 0;
    png_uint_32 format = 0;
    if (hdr.color_type == PNG_COLOR_TYPE_GRAY) {
        channels = 1;
        format = PNG_FORMAT_GRAY;
    } else if (hdr.color_type == PNG_COLOR_TYPE_RGB) {
        channels = 3;
        format = PNG_FORMAT_RGB;
    } else {
        throw UnsupportedImageError("unsupported PNG color type " +
                                    std::to_string(hdr.color_type) +
                                    " (need grayscale or RGB): " + path);
    }

    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw DecodeError("PNG decode failed: " + path + ": " + image.message);
    image.format = format;
    std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw DecodeError("PNG decode failed: " + path + ": " + msg);
    }

    const int h = static_cast<int>(image.height);
    const int w = static_cast<int>(image.width);
    ImageTensor out = ImageTensor::zeros({channels, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int y = 0; y < h; ++y) {
        const unsigned char* row = pixels.data() + static_cast<std::size_t>(y) * w * channels;
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                out.data[c * plane + static_cast<std::size_t>(y) * w + x] =
                    static_cast<float>(row[x * channels + c]) / 255.0f;
    }
    return out;
}

namespace {

void write_png(const unsigned char* pixels, int channels, int h, int w,
               const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, pixels, 0, nullptr))
        throw IoError("cannot write PNG: " + path + ": " + image.message);
}

} // namespace

void save_image(const ImageTensor& img, const std::string& path) {
    if (img.shape.size() != 3 || (img.shape[0] != 1 && img.shape[0] != 3))
        throw ValidationError("save_image: image must be 1xHxW or 3xHxW, got " +
                              img.shape_string());
    const int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    std::vector<unsigned char> pixels(static_cast<std::size_t>(c) * h * w);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                const float v = img.data[ch * plane + static_cast<std::size_t>(y) * w + x];
                const long b = std::lround(static_cast<double>(v) * 255.0);
                pixels[(static_cast<std::size_t>(y) * w + x) * c + ch] =
                    static_cast<unsigned char>(std::clamp(b, 0L, 255L));
            }
    write_png(pixels.data(), c, h, w, path);
}

void save_mask(const BinaryMask& mask, const std::string& path) {
    std::vector<unsigned char> pixels(mask.data.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = mask.data[i] ? 255 : 0;
    write_png(pixels.data(), 1, mask.h, mask.w, path);
}

} // namespace vitfill
