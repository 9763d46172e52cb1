#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "immunize/image.hpp"

namespace immunize {

/// Reads an 8-bit PNG or JPEG file into intensities v/255. PNG files with
/// alpha channels or bit depths other than 8 are rejected; JPEG is accepted
/// read-only.
ImageBuffer load_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG, quantizing each intensity to round(v * 255).
/// The encoder settings are pinned, so saving the same buffer twice gives
/// bit-identical files and save(load(p)) reproduces any file this writer
/// produced.
void save_image(const ImageBuffer& image, const std::filesystem::path& path);

/// In-memory PNG encoding with the same pinned settings as save_image.
/// Used for wire payloads and judge attachments.
std::vector<std::uint8_t> encode_png(const ImageBuffer& image);
ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes);

/// The quantized 8-bit view of an image re-expanded to intensities, i.e.
/// what load_image(save_image(x)) returns without touching the disk.
ImageBuffer quantize_to_8bit(const ImageBuffer& image);

}  // namespace immunize
