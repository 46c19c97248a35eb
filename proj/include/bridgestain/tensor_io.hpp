#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "bridgestain/image.hpp"

namespace bridgestain {

// Raw tensor container ("BTNS"). Little-endian throughout:
//   magic "BTNS" | version u32 | H u32 | W u32 | C u32 | semantics u8 |
//   range.lo f32 | range.hi f32 | H*W*C f32 samples, row-major, channel fastest
// Samples are stored in single precision; a round trip through the file
// rounds each double to the nearest float.
inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& os, const ImageTensor& img);
ImageTensor read_tensor(std::istream& is);
void save_tensor(const std::filesystem::path& path, const ImageTensor& img);
ImageTensor load_tensor(const std::filesystem::path& path);

/// 8-bit PNG of a 1- or 3-channel image. Samples are mapped linearly from the
/// declared range onto [0, 255], clamped and rounded, so the file is lossy.
void save_png(const std::filesystem::path& path, const ImageTensor& img);
/// Reads an 8-bit gray or RGB PNG into [0, 1].
ImageTensor load_png(const std::filesystem::path& path);

}  // namespace bridgestain
