#include "colorshift/imaging.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

namespace colorshift {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

ImageTensor from_rgb8(const std::vector<unsigned char>& buf, int h, int w) {
    ImageTensor img;
    img.data = Tensor<float>({3, h, w});
    const float inv = 1.0f / 255.0f;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.data.at(c, y, x) = buf[(static_cast<size_t>(y) * w + x) * 3 + c] * inv;
    return img;
}

ImageTensor load_png_file(FILE* f, const std::string& path) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png reader allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png info allocation failed");
    }
    std::vector<unsigned char> raw;
    std::vector<png_bytep> rows;
    int h = 0, w = 0, depth = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("corrupt PNG: " + path);
    }
    png_init_io(png, f);
    png_read_info(png, info);
    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));
    depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);
    if (w <= 0 || h <= 0) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("zero-size image: " + path);
    }
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    depth = png_get_bit_depth(png, info);
    int channels = png_get_channels(png, info);
    if (channels != 3 || (depth != 8 && depth != 16)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("unsupported PNG layout: " + path);
    }
    size_t rowbytes = png_get_rowbytes(png, info);
    raw.assign(rowbytes * static_cast<size_t>(h), 0);
    rows.resize(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = raw.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageTensor img;
    img.data = Tensor<float>({3, h, w});
    if (depth == 8) {
        const float inv = 1.0f / 255.0f;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    img.data.at(c, y, x) = raw[rowbytes * y + 3 * static_cast<size_t>(x) + c] * inv;
    } else {
        // network byte order: high byte first
        const float inv = 1.0f / 65535.0f;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) {
                    size_t o = rowbytes * y + (3 * static_cast<size_t>(x) + c) * 2;
                    unsigned v = (static_cast<unsigned>(raw[o]) << 8) | raw[o + 1];
                    img.data.at(c, y, x) = v * inv;
                }
    }
    return img;
}

struct JpegErr {
    jpeg_error_mgr mgr;
    std::jmp_buf jb;
};

void jpeg_err_exit(j_common_ptr cinfo) {
    auto* e = reinterpret_cast<JpegErr*>(cinfo->err);
    std::longjmp(e->jb, 1);
}

ImageTensor load_jpeg_file(FILE* f, const std::string& path) {
    jpeg_decompress_struct cinfo;
    JpegErr jerr;
    cinfo.err = jpeg_std_error(&jerr.mgr);
    jerr.mgr.error_exit = jpeg_err_exit;
    std::vector<unsigned char> buf;
    if (setjmp(jerr.jb)) {
        jpeg_destroy_decompress(&cinfo);
        throw std::runtime_error("corrupt JPEG: " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    int w = static_cast<int>(cinfo.output_width), h = static_cast<int>(cinfo.output_height);
    if (w <= 0 || h <= 0) {
        jpeg_destroy_decompress(&cinfo);
        throw std::runtime_error("zero-size image: " + path);
    }
    size_t stride = static_cast<size_t>(w) * 3;
    buf.assign(stride * static_cast<size_t>(h), 0);
    while (cinfo.output_scanline < cinfo.output_height) {
        unsigned char* rowp = buf.data() + stride * cinfo.output_scanline;
        jpeg_read_scanlines(&cinfo, &rowp, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return from_rgb8(buf, h, w);
}

}  // namespace

ImageTensor load_image(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open image: " + path);
    unsigned char magic[8] = {0};
    size_t got = std::fread(magic, 1, 8, f.get());
    std::rewind(f.get());
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (got >= 8 && std::memcmp(magic, png_sig, 8) == 0) return load_png_file(f.get(), path);
    if (got >= 2 && magic[0] == 0xff && magic[1] == 0xd8) return load_jpeg_file(f.get(), path);
    throw std::runtime_error("unsupported image format: " + path);
}

void save_image(const ImageTensor& img, const std::string& path) {
    if (img.space != ColorSpace::SRGB) throw std::invalid_argument("save_image expects SRGB");
    int h = img.height(), w = img.width();
    std::vector<unsigned char> raw(static_cast<size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = std::min(1.0f, std::max(0.0f, img.data.at(c, y, x)));
                raw[(static_cast<size_t>(y) * w + x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot write image: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png writer allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png info allocation failed");
    }
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("PNG write failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = raw.data() + static_cast<size_t>(y) * w * 3;
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
}

ImageTensor invert(const ImageTensor& img) {
    ImageTensor out = img;
    for (auto& v : out.data.v) v = 1.0f - v;
    return out;
}

namespace {

inline double srgb_linearize(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double lab_f(double t) {
    constexpr double d3 = (6.0 / 29.0) * (6.0 / 29.0) * (6.0 / 29.0);
    constexpr double d2x3 = 3.0 * (6.0 / 29.0) * (6.0 / 29.0);
    return t > d3 ? std::cbrt(t) : t / d2x3 + 4.0 / 29.0;
}

}  // namespace

ImageTensor srgb_to_lab(const ImageTensor& img) {
    if (img.space != ColorSpace::SRGB) throw std::invalid_argument("srgb_to_lab expects SRGB");
    int h = img.height(), w = img.width();
    ImageTensor out;
    out.data = Tensor<float>({3, h, w});
    out.space = ColorSpace::LAB;
    constexpr double Xn = 0.95047, Yn = 1.0, Zn = 1.08883;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double r = srgb_linearize(img.data.at(0, y, x));
            double g = srgb_linearize(img.data.at(1, y, x));
            double b = srgb_linearize(img.data.at(2, y, x));
            double X = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
            double Y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
            double Z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
            double fx = lab_f(X / Xn), fy = lab_f(Y / Yn), fz = lab_f(Z / Zn);
            out.data.at(0, y, x) = static_cast<float>(116.0 * fy - 16.0);
            out.data.at(1, y, x) = static_cast<float>(500.0 * (fx - fy));
            out.data.at(2, y, x) = static_cast<float>(200.0 * (fy - fz));
        }
    return out;
}

ImageTensor pad_reflect_to_multiple(const ImageTensor& img, int multiple) {
    int h = img.height(), w = img.width();
    int ph = (multiple - h % multiple) % multiple;
    int pw = (multiple - w % multiple) % multiple;
    if (ph == 0 && pw == 0) return img;
    if (ph >= h || pw >= w)
        throw std::invalid_argument("image too small to reflect-pad to multiple");
    int H = h + ph, W = w + pw;
    ImageTensor out;
    out.space = img.space;
    out.data = Tensor<float>({3, H, W});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y) {
            int sy = y < h ? y : 2 * h - 2 - y;
            for (int x = 0; x < W; ++x) {
                int sx = x < w ? x : 2 * w - 2 - x;
                out.data.at(c, y, x) = img.data.at(c, sy, sx);
            }
        }
    return out;
}

ImageTensor crop_to(const ImageTensor& img, int height, int width) {
    if (height > img.height() || width > img.width())
        throw std::invalid_argument("crop_to larger than image");
    ImageTensor out;
    out.space = img.space;
    out.data = Tensor<float>({3, height, width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) out.data.at(c, y, x) = img.data.at(c, y, x);
    return out;
}

}  // namespace colorshift
