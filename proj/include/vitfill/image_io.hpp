#pragma once

#include <string>

#include "vitfill/image.hpp"
#include "vitfill/mask.hpp"

namespace vitfill {

// Reads an 8-bit grayscale or RGB PNG. Values come out as byte/255, channel
// count preserved. Throws IoError (missing/unreadable), DecodeError (not a
// PNG / corrupt stream), or UnsupportedImageError (wrong bit depth or color
// type).
ImageTensor load_image(const std::string& path);

// Writes an 8-bit PNG, quantizing with round(v*255) clamped to [0,255].
// Grayscale for C=1, RGB for C=3.
void save_image(const ImageTensor& img, const std::string& path);

// Mask as an 8-bit grayscale PNG: 0 = known, 255 = unknown.
void save_mask(const BinaryMask& mask, const std::string& path);

} // namespace vitfill
