#pragma once

#include <string>

#include "colorshift/tensor.hpp"

namespace colorshift {

enum class ColorSpace { SRGB, LAB };

// 3xHxW float image. SRGB values live in [0,1]; LAB carries L in [0,100]
// and signed a*/b*.
struct ImageTensor {
    Tensor<float> data;
    ColorSpace space = ColorSpace::SRGB;

    int height() const { return data.dim(1); }
    int width() const { return data.dim(2); }
};

// Decodes an 8- or 16-bit PNG or a JPEG (sniffed by magic bytes, not
// extension) into [0,1]. Gray and paletted PNGs are expanded to RGB; alpha is
// dropped. Throws std::runtime_error on missing/unsupported/empty files.
ImageTensor load_image(const std::string& path);

// Writes an 8-bit RGB PNG; values are clamped to [0,1] and rounded.
void save_image(const ImageTensor& img, const std::string& path);

// 1 - x per element.
ImageTensor invert(const ImageTensor& img);

// sRGB -> CIE L*a*b*, D65 white point, standard two-segment gamma and
// cube-root functions.
ImageTensor srgb_to_lab(const ImageTensor& img);

// Reflect-pads (no edge repeat) on the bottom/right so both dims become
// multiples of `multiple`; crop_to(original size) restores the input.
ImageTensor pad_reflect_to_multiple(const ImageTensor& img, int multiple);
ImageTensor crop_to(const ImageTensor& img, int height, int width);

}  // namespace colorshift
