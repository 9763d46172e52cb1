#include "immunize/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace immunize {

namespace {

std::vector<std::uint8_t> quantize_bytes(const ImageBuffer& image) {
    const auto& v = image.data();
    std::vector<std::uint8_t> bytes(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        // ImageBuffer guarantees [0,1]; llround keeps the mapping exact for
        // v = k/255 inputs so disk round-trips are lossless.
        bytes[i] = static_cast<std::uint8_t>(std::llround(v[i] * 255.0));
    }
    return bytes;
}

ImageBuffer from_bytes(int height, int width, const std::vector<std::uint8_t>& bytes) {
    std::vector<double> data(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        data[i] = static_cast<double>(bytes[i]) / 255.0;
    }
    return ImageBuffer(height, width, std::move(data));
}

struct PngReadCtx {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t offset;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t count) {
    auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
    if (ctx->offset + count > ctx->size) {
        png_error(png, "unexpected end of PNG stream");
    }
    std::memcpy(out, ctx->data + ctx->offset, count);
    ctx->offset += count;
}

void png_mem_write(png_structp png, png_bytep data, png_size_t count) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + count);
}

void png_mem_flush(png_structp) {}

ImageBuffer decode_png_bytes(const std::uint8_t* data, std::size_t size,
                             const std::string& origin) {
    if (size < 8 || png_sig_cmp(data, 0, 8) != 0) {
        throw IoError(origin + ": not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(origin + ": libpng initialization failed");
    }
    PngReadCtx ctx{data, size, 0};
    std::vector<std::uint8_t> pixels;
    int width = 0, height = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(origin + ": PNG decode failed");
    }
    png_set_read_fn(png, &ctx, png_mem_read);
    png_read_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (bit_depth != 8 && !(color_type == PNG_COLOR_TYPE_PALETTE && bit_depth <= 8)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(origin + ": only 8-bit PNG inputs are supported");
    }
    if ((color_type & PNG_COLOR_MASK_ALPHA) || png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(origin + ": PNG alpha channels are not supported");
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY) png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    if (png_get_rowbytes(png, info) != static_cast<std::size_t>(width) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(origin + ": unexpected PNG row layout");
    }

    pixels.resize(static_cast<std::size_t>(height) * width * 3);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) {
        rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * 3;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return from_bytes(height, width, pixels);
}

ImageBuffer decode_jpeg_bytes(const std::uint8_t* data, std::size_t size,
                              const std::string& origin) {
    struct ErrorMgr {
        jpeg_error_mgr base;
        std::jmp_buf jump;
    } err;
    jpeg_decompress_struct info;
    info.err = jpeg_std_error(&err.base);
    err.base.error_exit = [](j_common_ptr cinfo) {
        std::longjmp(reinterpret_cast<ErrorMgr*>(cinfo->err)->jump, 1);
    };
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&info);
        throw IoError(origin + ": JPEG decode failed");
    }
    jpeg_create_decompress(&info);
    jpeg_mem_src(&info, data, static_cast<unsigned long>(size));
    jpeg_read_header(&info, TRUE);
    info.out_color_space = JCS_RGB;
    jpeg_start_decompress(&info);

    const int width = static_cast<int>(info.output_width);
    const int height = static_cast<int>(info.output_height);
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(height) * width * 3);
    while (info.output_scanline < info.output_height) {
        JSAMPROW row = pixels.data() + static_cast<std::size_t>(info.output_scanline) * width * 3;
        jpeg_read_scanlines(&info, &row, 1);
    }
    jpeg_finish_decompress(&info);
    jpeg_destroy_decompress(&info);
    return from_bytes(height, width, pixels);
}

bool has_jpeg_magic(const std::vector<std::uint8_t>& bytes) {
    return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
}

}  // namespace

ImageBuffer load_image(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) {
        return decode_png_bytes(bytes.data(), bytes.size(), path.string());
    }
    if (has_jpeg_magic(bytes)) {
        return decode_jpeg_bytes(bytes.data(), bytes.size(), path.string());
    }
    throw IoError(path.string() + ": unsupported image format (expected PNG or JPEG)");
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialization failed");
    }
    std::vector<std::uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encode failed");
    }
    png_set_write_fn(png, &out, png_mem_write, png_mem_flush);

    // Pinned encoder settings: deterministic output is part of the contract.
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, image.width(), image.height(), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const auto bytes = quantize_bytes(image);
    for (int y = 0; y < image.height(); ++y) {
        png_write_row(png, const_cast<png_bytep>(
                               bytes.data() + static_cast<std::size_t>(y) * image.width() * 3));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes) {
    return decode_png_bytes(bytes.data(), bytes.size(), "<memory>");
}

void save_image(const ImageBuffer& image, const std::filesystem::path& path) {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

ImageBuffer quantize_to_8bit(const ImageBuffer& image) {
    return from_bytes(image.height(), image.width(), quantize_bytes(image));
}

}  // namespace immunize
